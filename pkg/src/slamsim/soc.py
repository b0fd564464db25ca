"""SoC model: compute units, stage latency tables, and power/energy accounting.

Latency and power constants default to measured values for the modeled SoC:
2.5 W per CPU core, 1.5 W DSP, 2.3 W GPU; feature extraction 45/50/20 ms on
CPU/GPU/DSP; update 30 ms and mapping 15 ms over shared memory, improving by
the 20% feature-access fraction when fed from the scratchpad buffer.

Power model: a unit draws its peak power while busy and an idle fraction of
peak while powered but idle. A global baseline static term plus explicit
static sources (scratchpad leakage, scratchpad active power, IO pin drivers)
complete the picture. The idle fraction and baseline static are calibration
parameters, not measurements, and live in scenario config.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field
from enum import Enum

from .engine import NS_PER_MS, NS_PER_S


class ConfigError(ValueError):
    """A scenario/build-time configuration problem."""


class LedgerError(RuntimeError):
    """Inconsistent busy-interval bookkeeping (indicates a scheduler bug)."""


class UnitKind(Enum):
    CPU_CORE = "cpu_core"
    DSP = "dsp"
    GPU = "gpu"


class Stage(Enum):
    FEATURE_EXTRACTION = "feature_extraction"
    PROPAGATION = "propagation"
    UPDATE = "update"
    MAPPING = "mapping"
    RELAY = "relay"


class MemoryPath(Enum):
    SHARED = "shared"
    SCRATCHPAD = "scratchpad"


DEFAULT_PEAK_POWER_W = {
    UnitKind.CPU_CORE: 2.5,
    UnitKind.DSP: 1.5,
    UnitKind.GPU: 2.3,
}

# Fraction of update/mapping execution time spent on feature memory accesses
# over the shared path; eliminated by the scratchpad path.
FEATURE_ACCESS_FRACTION = 0.20


@dataclass(frozen=True)
class ComputeUnitSpec:
    id: str
    kind: UnitKind
    peak_power_w: float = 0.0
    direct_io: bool = False

    def __post_init__(self):
        if self.peak_power_w == 0.0:
            object.__setattr__(self, "peak_power_w", DEFAULT_PEAK_POWER_W[self.kind])
        if self.peak_power_w <= 0:
            raise ConfigError(f"unit {self.id}: peak_power_w must be > 0")


@dataclass(frozen=True)
class MemorySpec:
    shared_access_ns: float = 100.0
    scratchpad_capacity_bytes: int = 8192
    scratchpad_banks: int = 2
    scratchpad_access_ns: float = 0.4
    scratchpad_dynamic_w: float = 0.15
    scratchpad_leakage_w: float = 0.002
    io_pin_power_w: float = 0.1

    @property
    def bank_capacity_bytes(self) -> int:
        return self.scratchpad_capacity_bytes // self.scratchpad_banks


@dataclass(frozen=True)
class PowerCalibration:
    """Calibration knobs for the average-power model.

    unit_idle_fraction: fraction of a unit's peak power drawn while powered
    but idle. baseline_static_w: uncore/system static draw independent of the
    powered unit set.
    """

    baseline_static_w: float = 0.0
    unit_idle_fraction: float = 0.45

    def __post_init__(self):
        if self.baseline_static_w < 0:
            raise ConfigError("baseline_static_w must be >= 0")
        if not (0.0 <= self.unit_idle_fraction <= 1.0):
            raise ConfigError("unit_idle_fraction must be in [0, 1]")


class LatencyTable:
    """(stage, unit kind, memory path) -> stage latency in ms."""

    def __init__(self, entries: dict[tuple[Stage, UnitKind, MemoryPath | None], float]):
        self._entries = dict(entries)

    @classmethod
    def default(cls, feature_access_fraction: float = FEATURE_ACCESS_FRACTION,
                overrides: dict | None = None) -> "LatencyTable":
        shared_update = 30.0
        shared_mapping = 15.0
        entries = {
            (Stage.FEATURE_EXTRACTION, UnitKind.CPU_CORE, None): 45.0,
            (Stage.FEATURE_EXTRACTION, UnitKind.GPU, None): 50.0,
            (Stage.FEATURE_EXTRACTION, UnitKind.DSP, None): 20.0,
            (Stage.PROPAGATION, UnitKind.CPU_CORE, None): 2.0,
            (Stage.UPDATE, UnitKind.CPU_CORE, MemoryPath.SHARED): shared_update,
            (Stage.MAPPING, UnitKind.CPU_CORE, MemoryPath.SHARED): shared_mapping,
            (Stage.UPDATE, UnitKind.CPU_CORE, MemoryPath.SCRATCHPAD):
                shared_update * (1.0 - feature_access_fraction),
            (Stage.MAPPING, UnitKind.CPU_CORE, MemoryPath.SCRATCHPAD):
                shared_mapping * (1.0 - feature_access_fraction),
        }
        if overrides:
            entries.update(overrides)
        return cls(entries)

    def stage_latency_ms(self, stage: Stage, unit: UnitKind,
                         path: MemoryPath | None = None) -> float:
        key = (stage, unit, path)
        if key in self._entries:
            return self._entries[key]
        fallback = (stage, unit, None)
        if fallback in self._entries:
            return self._entries[fallback]
        raise ConfigError(f"no latency configured for stage={stage.value} on {unit.value}"
                          + (f" via {path.value}" if path else ""))

    def has(self, stage: Stage, unit: UnitKind, path: MemoryPath | None = None) -> bool:
        return (stage, unit, path) in self._entries or (stage, unit, None) in self._entries


def task_energy_mj(table: LatencyTable, stage: Stage, unit: ComputeUnitSpec | UnitKind,
                   path: MemoryPath | None = None) -> float:
    """Energy of one stage execution: peak power x stage latency."""
    if isinstance(unit, ComputeUnitSpec):
        kind, peak = unit.kind, unit.peak_power_w
    else:
        kind, peak = unit, DEFAULT_PEAK_POWER_W[unit]
    return peak * table.stage_latency_ms(stage, kind, path)


class PowerLedger:
    """Busy-interval bookkeeping and energy/average-power evaluation.

    Dynamic energy accrues at peak power during recorded busy intervals; idle
    draw and static sources are added at evaluation time so the same ledger
    can be re-evaluated under different calibrations.
    """

    def __init__(self, units: dict[str, ComputeUnitSpec],
                 static_sources_w: dict[str, float] | None = None):
        self.units = dict(units)
        self.static_sources_w = dict(static_sources_w or {})
        self._busy: dict[str, list[tuple[int, int]]] = {u: [] for u in self.units}

    def add_static_source(self, name: str, watts: float) -> None:
        self.static_sources_w[name] = watts

    def record_busy(self, unit_id: str, from_ns: int, to_ns: int) -> None:
        if unit_id not in self.units:
            raise LedgerError(f"unknown unit {unit_id!r}")
        if not from_ns < to_ns:
            raise LedgerError(f"busy interval [{from_ns}, {to_ns}) for {unit_id} is empty")
        intervals = self._busy[unit_id]
        if intervals and from_ns < intervals[-1][1]:
            # Out-of-order record: verify against neighbours before inserting.
            probe = (from_ns, to_ns)
            for a, b in intervals:
                if from_ns < b and a < to_ns:
                    raise LedgerError(
                        f"overlapping busy interval for {unit_id}: "
                        f"[{from_ns}, {to_ns}) vs [{a}, {b})")
            insort(intervals, probe)
        else:
            intervals.append((from_ns, to_ns))

    def busy_ns(self, unit_id: str, window: tuple[int, int] | None = None) -> int:
        total = 0
        for a, b in self._busy[unit_id]:
            if window is not None:
                a, b = max(a, window[0]), min(b, window[1])
            if b > a:
                total += b - a
        return total

    def utilization(self, unit_id: str, window: tuple[int, int]) -> float:
        t0, t1 = window
        if t1 <= t0:
            raise LedgerError("empty window")
        return self.busy_ns(unit_id, window) / (t1 - t0)

    def dynamic_energy_j(self, window: tuple[int, int] | None = None) -> float:
        return sum(self.units[u].peak_power_w * self.busy_ns(u, window) / NS_PER_S
                   for u in self.units)

    def idle_energy_j(self, window: tuple[int, int],
                      calibration: PowerCalibration) -> float:
        t0, t1 = window
        span = t1 - t0
        total = 0.0
        for u, spec in self.units.items():
            idle_w = calibration.unit_idle_fraction * spec.peak_power_w
            total += idle_w * (span - self.busy_ns(u, window)) / NS_PER_S
        return total

    def static_energy_j(self, window: tuple[int, int],
                        calibration: PowerCalibration) -> float:
        span_s = (window[1] - window[0]) / NS_PER_S
        static_w = calibration.baseline_static_w + sum(self.static_sources_w.values())
        return static_w * span_s

    def total_energy_j(self, window: tuple[int, int],
                       calibration: PowerCalibration) -> float:
        return (self.dynamic_energy_j(window)
                + self.idle_energy_j(window, calibration)
                + self.static_energy_j(window, calibration))

    def average_power_w(self, window: tuple[int, int],
                        calibration: PowerCalibration) -> float:
        t0, t1 = window
        if t1 <= t0:
            raise LedgerError("average_power over an empty window")
        return self.total_energy_j(window, calibration) / ((t1 - t0) / NS_PER_S)
