"""Functional SLAM math executed inside the simulated pipeline.

Ground-truth trajectory synthesis, IMU sampling with bias/noise, pose
propagation by double integration, synthetic feature extraction, map-based
drift correction, and map extension. Everything here is a pure function over
explicit state so architectural stalls in the pipeline produce measurable
tracking error without hidden coupling.

Conventions: accelerometer samples are gravity-compensated specific force
(gravity handling is out of scope for this model). The drift-correction
estimator is deliberately abstract: a truth-anchored blend with gain `alpha`
plus observation noise. The simulator's purpose is architecture evaluation,
not estimator research.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import NS_PER_S

FEATURE_RECORD_BYTES = 20
FEATURE_BLOCK_HEADER_BYTES = 96
FEATURE_BLOCK_MAX_BYTES = 4096


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)

def quat_normalize(q):
    return q / np.linalg.norm(q)


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v):
    """Rotate vector v from body frame to world frame by unit quaternion q."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    out = quat_multiply(quat_multiply(q, qv), quat_conjugate(q))
    return out[1:]


def quat_exp(omega_dt):
    """Quaternion exponential of a rotation vector (axis * angle)."""
    angle = np.linalg.norm(omega_dt)
    if angle < 1e-12:
        return np.array([1.0, 0.5 * omega_dt[0], 0.5 * omega_dt[1], 0.5 * omega_dt[2]])
    axis = omega_dt / angle
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis))


def quat_from_yaw(yaw):
    return np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])


def quat_slerp(a, b, t):
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b, dot = -b, -dot
    if dot > 0.9995:
        return quat_normalize(a + t * (b - a))
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    return (math.sin((1 - t) * theta) / s) * a + (math.sin(t * theta) / s) * b


# ---------------------------------------------------------------------------
# domain types

@dataclass
class Pose:
    position: np.ndarray  # m, world frame
    velocity: np.ndarray  # m/s, world frame
    orientation: np.ndarray  # unit quaternion (w, x, y, z), body->world

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.velocity.copy(), self.orientation.copy())


@dataclass(frozen=True)
class ImuSample:
    t_ns: int
    gyro: np.ndarray  # rad/s, body frame
    accel: np.ndarray  # m/s^2, body frame, gravity-compensated


@dataclass(frozen=True)
class ImuModel:
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_noise_std: float = 0.0
    gyro_noise_std: float = 0.0
    rate_hz: int = 200

    def __post_init__(self):
        if not 1 <= self.rate_hz <= 1000:
            raise ValueError(f"imu rate_hz {self.rate_hz} out of [1, 1000]")


@dataclass(frozen=True)
class Feature:
    landmark_id: int
    descriptor: bytes
    pixel: np.ndarray


@dataclass(frozen=True)
class CameraFrame:
    frame_id: int
    t_ns: int
    visible_landmarks: list  # [(landmark_id, pixel ndarray)]
    size_bytes: int = 3 * 1024 * 1024


@dataclass(frozen=True)
class FeatureBlock:
    frame_id: int
    features: tuple
    serialized_bytes: int


class WorldMap:
    """landmark id -> 3D point; insert-only, so size never decreases."""

    def __init__(self):
        self._points: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self._points)

    def __contains__(self, landmark_id):
        return landmark_id in self._points

    def point(self, landmark_id):
        return self._points[landmark_id]

    def add(self, landmark_id, point):
        point = np.asarray(point, dtype=float)
        if not np.all(np.isfinite(point)):
            raise ValueError(f"non-finite map point for landmark {landmark_id}")
        if landmark_id not in self._points:
            self._points[landmark_id] = point


# ---------------------------------------------------------------------------
# ground-truth trajectories

class StationaryTrajectory:
    """Agent at rest at a fixed point; zero true IMU signals."""

    def __init__(self, position=(0.0, 0.0, 0.0)):
        self._position = np.asarray(position, dtype=float)

    def pose_at(self, t_ns: int) -> Pose:
        return Pose(self._position.copy(), np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def gyro_body(self, t_ns: int) -> np.ndarray:
        return np.zeros(3)

    def accel_body(self, t_ns: int) -> np.ndarray:
        return np.zeros(3)


class CircleTrajectory:
    """Smooth closed loop: constant-speed horizontal circle, heading along
    the tangent. Twice continuously differentiable with analytic body-frame
    acceleration and angular velocity."""

    def __init__(self, radius_m: float = 5.0, period_s: float = 60.0):
        self.radius = float(radius_m)
        self.omega = 2.0 * math.pi / float(period_s)

    def _theta(self, t_ns: int) -> float:
        return self.omega * (t_ns / NS_PER_S)

    def pose_at(self, t_ns: int) -> Pose:
        th = self._theta(t_ns)
        r, w = self.radius, self.omega
        position = np.array([r * math.cos(th), r * math.sin(th), 0.0])
        velocity = np.array([-r * w * math.sin(th), r * w * math.cos(th), 0.0])
        yaw = th + math.pi / 2  # body +x points along the velocity
        return Pose(position, velocity, quat_from_yaw(yaw))

    def gyro_body(self, t_ns: int) -> np.ndarray:
        return np.array([0.0, 0.0, self.omega])

    def accel_body(self, t_ns: int) -> np.ndarray:
        th = self._theta(t_ns)
        r, w = self.radius, self.omega
        a_world = np.array([-r * w * w * math.cos(th), -r * w * w * math.sin(th), 0.0])
        yaw = th + math.pi / 2
        c, s = math.cos(-yaw), math.sin(-yaw)
        # Rz(-yaw) @ a_world
        return np.array([c * a_world[0] - s * a_world[1],
                         s * a_world[0] + c * a_world[1],
                         a_world[2]])


# ---------------------------------------------------------------------------
# operations

def sample_imu(model: ImuModel, truth, t_ns: int, rng: np.random.Generator) -> ImuSample:
    """True analytic signal + bias + Gaussian noise (six scalars)."""
    gyro = truth.gyro_body(t_ns) + model.gyro_bias
    accel = truth.accel_body(t_ns) + model.accel_bias
    if model.gyro_noise_std > 0:
        gyro = gyro + rng.normal(0.0, model.gyro_noise_std, 3)
    if model.accel_noise_std > 0:
        accel = accel + rng.normal(0.0, model.accel_noise_std, 3)
    return ImuSample(t_ns=t_ns, gyro=gyro, accel=accel)


def propagate(pose: Pose, batch: list[ImuSample], from_t_ns: int,
              prev_sample: ImuSample | None = None) -> Pose:
    """Advance pose through an IMU batch by double integration.

    Trapezoidal rule for velocity and position, first-order quaternion
    exponential for orientation. `prev_sample` supplies the signal value at
    `from_t_ns`, which makes batched and sample-by-sample integration give
    bit-identical results (each interval is paired with the same endpoints
    either way); without it the first interval degrades to a rectangle rule.
    """
    if not batch:
        return pose.copy()
    q = pose.orientation.copy()
    v = pose.velocity.copy()
    p = pose.position.copy()
    prev_t = from_t_ns
    prev_accel_world = quat_rotate(q, prev_sample.accel) if prev_sample is not None else None
    prev_gyro = prev_sample.gyro if prev_sample is not None else None
    for sample in batch:
        if sample.t_ns <= prev_t:
            raise ValueError("IMU batch timestamps must be strictly increasing")
        dt = (sample.t_ns - prev_t) / NS_PER_S
        gyro = sample.gyro if prev_gyro is None else 0.5 * (prev_gyro + sample.gyro)
        q = quat_normalize(quat_multiply(q, quat_exp(gyro * dt)))
        accel_world = quat_rotate(q, sample.accel)
        a0 = accel_world if prev_accel_world is None else prev_accel_world
        v_new = v + 0.5 * (a0 + accel_world) * dt
        p = p + 0.5 * (v + v_new) * dt
        v = v_new
        prev_t = sample.t_ns
        prev_accel_world = accel_world
        prev_gyro = sample.gyro
    return Pose(p, v, q)


def feature_capacity(max_bytes: int = FEATURE_BLOCK_MAX_BYTES,
                     record_bytes: int = FEATURE_RECORD_BYTES,
                     header_bytes: int = FEATURE_BLOCK_HEADER_BYTES) -> int:
    return (max_bytes - header_bytes) // record_bytes


_descriptor_cache: dict[int, bytes] = {}


def _descriptor(landmark_id: int) -> bytes:
    d = _descriptor_cache.get(landmark_id)
    if d is None:
        d = hashlib.blake2b(landmark_id.to_bytes(8, "little"), digest_size=8).digest()
        _descriptor_cache[landmark_id] = d
    return d


def extract_features(frame: CameraFrame, rng: np.random.Generator | None = None,
                     max_bytes: int = FEATURE_BLOCK_MAX_BYTES) -> FeatureBlock:
    """Synthetic stand-in for a real detector: one feature per visible
    landmark, capped so the serialized block fits a scratchpad bank."""
    cap = feature_capacity(max_bytes)
    visible = frame.visible_landmarks
    if len(visible) > cap:
        if rng is not None:
            idx = sorted(rng.choice(len(visible), size=cap, replace=False))
            visible = [visible[i] for i in idx]
        else:
            visible = visible[:cap]
    features = tuple(
        Feature(landmark_id=lid, descriptor=_descriptor(lid), pixel=np.asarray(px, dtype=float))
        for lid, px in visible
    )
    size = FEATURE_BLOCK_HEADER_BYTES + FEATURE_RECORD_BYTES * len(features)
    return FeatureBlock(frame_id=frame.frame_id, features=features, serialized_bytes=size)


def update_pose(pose: Pose, block: FeatureBlock, world_map: WorldMap, truth_pose: Pose,
                rng: np.random.Generator | None = None, gain: float = 0.8,
                obs_noise_std: float = 0.0, min_matches: int = 10) -> tuple[Pose, int]:
    """Correct drift against the map: if enough features match known
    landmarks, blend the pose toward a (noisy) observation of the truth pose
    with the configured gain. Returns (pose, matched feature count)."""
    matched = sum(1 for f in block.features if f.landmark_id in world_map)
    if matched < min_matches:
        return pose.copy(), matched
    est_p = truth_pose.position.copy()
    est_v = truth_pose.velocity.copy()
    if obs_noise_std > 0 and rng is not None:
        est_p = est_p + rng.normal(0.0, obs_noise_std, 3)
        est_v = est_v + rng.normal(0.0, obs_noise_std, 3)
    corrected = Pose(
        position=pose.position + gain * (est_p - pose.position),
        velocity=pose.velocity + gain * (est_v - pose.velocity),
        orientation=quat_normalize(quat_slerp(pose.orientation, truth_pose.orientation, gain)),
    )
    return corrected, matched


def extend_map(world_map: WorldMap, block: FeatureBlock, landmark_truth: dict,
               rng: np.random.Generator | None = None, noise_std: float = 0.0) -> int:
    """Insert unmatched landmarks at their true position perturbed by mapping
    noise; matched ids are left intact. Returns the number inserted."""
    inserted = 0
    for f in block.features:
        if f.landmark_id in world_map:
            continue
        point = landmark_truth[f.landmark_id]
        if noise_std > 0 and rng is not None:
            point = point + rng.normal(0.0, noise_std, 3)
        world_map.add(f.landmark_id, point)
        inserted += 1
    return inserted


# ---------------------------------------------------------------------------
# synthetic world

def generate_landmarks(count: int, rng: np.random.Generator,
                       ring_radius_m: float = 8.0, height_spread_m: float = 2.0) -> dict:
    """Scatter landmarks on a cylinder around the trajectory loop."""
    angles = rng.uniform(0.0, 2.0 * math.pi, count)
    radii = ring_radius_m + rng.uniform(-1.0, 1.0, count)
    heights = rng.uniform(-height_spread_m, height_spread_m, count)
    return {
        i: np.array([radii[i] * math.cos(angles[i]), radii[i] * math.sin(angles[i]), heights[i]])
        for i in range(count)
    }


class LandmarkField:
    """Landmark truth positions with a vectorized visibility query."""

    def __init__(self, landmarks: dict):
        self.truth = landmarks
        self.ids = np.array(sorted(landmarks), dtype=int)
        self.points = np.stack([landmarks[i] for i in self.ids]) if len(self.ids) \
            else np.zeros((0, 3))

    def visible(self, true_pose: Pose, max_range_m: float = 12.0,
                fov_deg: float = 100.0) -> list:
        """Landmarks inside a forward field-of-view cone and range of the
        true pose; returns [(id, pixel)] with a simple pinhole projection."""
        if len(self.ids) == 0:
            return []
        heading = quat_rotate(true_pose.orientation, np.array([1.0, 0.0, 0.0]))
        cos_half = math.cos(math.radians(fov_deg) / 2.0)
        rel = self.points - true_pose.position
        dist = np.linalg.norm(rel, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            depth = (rel @ heading) / dist
        mask = (dist > 1e-6) & (dist <= max_range_m) & (depth >= cos_half)
        idx = np.nonzero(mask)[0]
        lateral = rel[idx] - np.outer(rel[idx] @ heading, heading)
        scale = np.maximum(depth[idx] * dist[idx], 1e-6)
        pixels = 300.0 * lateral[:, :2] / scale[:, None]
        return [(int(self.ids[i]), pixels[k]) for k, i in enumerate(idx)]


def visible_landmarks(true_pose: Pose, landmarks: dict,
                      max_range_m: float = 12.0, fov_deg: float = 100.0) -> list:
    return LandmarkField(landmarks).visible(true_pose, max_range_m, fov_deg)
