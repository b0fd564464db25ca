"""Run the three architecture presets and tabulate throughput and power.

This is the headline experiment: the same SLAM workload mapped onto a
CPU-only SoC, a heterogeneous SoC with a DSP behind a CPU relay core, and a
specialized design where the DSP ingests sensor data directly and hands
features to the CPU through a two-bank scratchpad. Expect the specialized
design to be both the fastest and the lowest power.

    python3 demos/compare_architectures.py
    python3 demos/compare_architectures.py --duration 10 --seed 7
"""

import argparse
import dataclasses

from slamsim import preset, run_scenario
from slamsim.report import compare_text
from slamsim.scenario import PRESET_NAMES


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--duration", type=float, default=None,
                        help="override preset duration in seconds")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    reports = []
    for name in PRESET_NAMES:
        config = preset(name)
        if args.duration is not None:
            config = dataclasses.replace(config, duration_s=args.duration)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        print(f"running {name} ({config.duration_s:g} s simulated, "
              f"{config.camera_fps} FPS offered)...")
        report, _ = run_scenario(config)
        reports.append(report)

    print()
    print(compare_text(reports))
    slam, hetero = reports[2], reports[1]
    print(f"The specialized design sustains {slam.achieved_fps:.1f} FPS at "
          f"{slam.average_power_w:.2f} W versus {hetero.achieved_fps:.1f} FPS at "
          f"{hetero.average_power_w:.2f} W for the relay-based design, with "
          f"{hetero.gc_stall_count} GC stalls eliminated outright.")


if __name__ == "__main__":
    main()
