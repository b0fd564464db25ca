import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slamsim.engine import NS_PER_S
from slamsim.kernel import (CameraFrame, CircleTrajectory, ImuModel, ImuSample,
                            LandmarkField, Pose, StationaryTrajectory, WorldMap,
                            extend_map, extract_features, feature_capacity,
                            generate_landmarks, propagate, quat_exp, quat_from_yaw,
                            quat_multiply, quat_normalize, quat_rotate, sample_imu,
                            update_pose, visible_landmarks,
                            FEATURE_BLOCK_HEADER_BYTES, FEATURE_BLOCK_MAX_BYTES,
                            FEATURE_RECORD_BYTES)


class TestQuaternions:
    def test_yaw_rotation_matches_rotation_matrix(self):
        yaw = 0.7
        q = quat_from_yaw(yaw)
        v = np.array([1.0, 2.0, 3.0])
        c, s = math.cos(yaw), math.sin(yaw)
        expected = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])
        assert np.allclose(quat_rotate(q, v), expected)

    def test_exp_of_zero_is_identity(self):
        assert np.allclose(quat_exp(np.zeros(3)), [1.0, 0.0, 0.0, 0.0])

    def test_exp_composes_like_angles(self):
        a = quat_exp(np.array([0.0, 0.0, 0.3]))
        b = quat_exp(np.array([0.0, 0.0, 0.5]))
        assert np.allclose(quat_normalize(quat_multiply(a, b)),
                           quat_exp(np.array([0.0, 0.0, 0.8])), atol=1e-9)


class TestTrajectories:
    def test_stationary_has_zero_signals(self):
        tr = StationaryTrajectory((1.0, 2.0, 3.0))
        assert np.allclose(tr.pose_at(5 * NS_PER_S).position, [1.0, 2.0, 3.0])
        assert np.allclose(tr.gyro_body(123), 0.0)
        assert np.allclose(tr.accel_body(123), 0.0)

    def test_circle_period_closes_the_loop(self):
        tr = CircleTrajectory(radius_m=5.0, period_s=60.0)
        p0 = tr.pose_at(0)
        p1 = tr.pose_at(60 * NS_PER_S)
        assert np.allclose(p0.position, p1.position, atol=1e-9)

    def test_circle_kinematics(self):
        tr = CircleTrajectory(radius_m=5.0, period_s=60.0)
        w = 2 * math.pi / 60.0
        pose = tr.pose_at(7 * NS_PER_S)
        assert np.linalg.norm(pose.velocity) == pytest.approx(5.0 * w)
        # counterclockwise motion: centripetal acceleration is body +y (left)
        a = tr.accel_body(7 * NS_PER_S)
        assert np.linalg.norm(a) == pytest.approx(5.0 * w * w)
        assert a[1] == pytest.approx(5.0 * w * w, abs=1e-9)
        assert a[0] == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(tr.gyro_body(0), [0.0, 0.0, w])

    def test_circle_velocity_is_position_derivative(self):
        tr = CircleTrajectory()
        t = 11 * NS_PER_S
        h = 1000  # 1 us
        numeric = (tr.pose_at(t + h).position - tr.pose_at(t - h).position) \
            / (2 * h / NS_PER_S)
        assert np.allclose(numeric, tr.pose_at(t).velocity, atol=1e-6)


class TestImuSampling:
    def test_bias_without_noise_is_exact(self):
        model = ImuModel(accel_bias=np.array([0.1, 0.0, 0.0]),
                         gyro_bias=np.array([0.0, 0.01, 0.0]))
        s = sample_imu(model, StationaryTrajectory(), 0, np.random.default_rng(0))
        assert np.allclose(s.accel, [0.1, 0.0, 0.0])
        assert np.allclose(s.gyro, [0.0, 0.01, 0.0])

    def test_rate_validation(self):
        with pytest.raises(ValueError):
            ImuModel(rate_hz=0)
        with pytest.raises(ValueError):
            ImuModel(rate_hz=1001)


def _biased_batch(bias, rate_hz, duration_s):
    truth = StationaryTrajectory()
    model = ImuModel(accel_bias=np.asarray(bias))
    step = NS_PER_S // rate_hz
    return [sample_imu(model, truth, k * step, np.random.default_rng(0))
            for k in range(1, rate_hz * duration_s + 1)]


class TestPropagation:
    def test_constant_accel_double_integration_is_exact(self):
        """Trapezoidal integration of a constant signal has zero error, so the
        drift law p = b t^2 / 2 holds exactly."""
        batch = _biased_batch([0.1, 0.0, 0.0], 200, 10)
        pose = propagate(Pose.identity(), batch, 0)
        assert pose.position[0] == pytest.approx(0.5 * 0.1 * 10.0 ** 2, rel=1e-9)
        assert pose.velocity[0] == pytest.approx(0.1 * 10.0, rel=1e-9)

    def test_batched_equals_sample_by_sample(self):
        rng = np.random.default_rng(7)
        truth = CircleTrajectory()
        model = ImuModel(accel_bias=np.array([0.05, 0.02, 0.0]),
                         accel_noise_std=0.02, gyro_noise_std=0.002)
        step = NS_PER_S // 200
        batch = [sample_imu(model, truth, k * step, rng) for k in range(1, 401)]

        whole = propagate(truth.pose_at(0), batch, 0)
        stepped = truth.pose_at(0)
        prev = None
        prev_t = 0
        for i in range(0, len(batch), 7):  # uneven chunking
            chunk = batch[i:i + 7]
            stepped = propagate(stepped, chunk, prev_t, prev_sample=prev)
            prev = chunk[-1]
            prev_t = chunk[-1].t_ns
        assert np.array_equal(whole.position, stepped.position)
        assert np.array_equal(whole.velocity, stepped.velocity)
        assert np.array_equal(whole.orientation, stepped.orientation)

    def test_non_increasing_timestamps_rejected(self):
        s = ImuSample(t_ns=10, gyro=np.zeros(3), accel=np.zeros(3))
        with pytest.raises(ValueError):
            propagate(Pose.identity(), [s], 10)

    def test_empty_batch_is_a_copy(self):
        pose = Pose.identity()
        out = propagate(pose, [], 0)
        assert out is not pose
        assert np.array_equal(out.position, pose.position)


class TestFeatures:
    def test_capacity_is_200(self):
        assert feature_capacity() == 200
        assert (FEATURE_BLOCK_MAX_BYTES - FEATURE_BLOCK_HEADER_BYTES) \
            // FEATURE_RECORD_BYTES == 200

    def test_block_never_exceeds_bank_capacity(self):
        visible = [(i, np.zeros(2)) for i in range(500)]
        frame = CameraFrame(frame_id=1, t_ns=0, visible_landmarks=visible)
        block = extract_features(frame, np.random.default_rng(0))
        assert len(block.features) == 200
        assert block.serialized_bytes <= FEATURE_BLOCK_MAX_BYTES

    def test_small_frame_keeps_all_features(self):
        visible = [(i, np.array([float(i), 0.0])) for i in range(5)]
        frame = CameraFrame(frame_id=2, t_ns=0, visible_landmarks=visible)
        block = extract_features(frame)
        assert [f.landmark_id for f in block.features] == list(range(5))
        assert block.serialized_bytes == FEATURE_BLOCK_HEADER_BYTES \
            + 5 * FEATURE_RECORD_BYTES

    def test_descriptors_are_stable(self):
        frame = CameraFrame(frame_id=3, t_ns=0, visible_landmarks=[(42, np.zeros(2))])
        a = extract_features(frame).features[0].descriptor
        b = extract_features(frame).features[0].descriptor
        assert a == b and len(a) == 8


class TestUpdateAndMap:
    def _block(self, ids):
        frame = CameraFrame(frame_id=0, t_ns=0,
                            visible_landmarks=[(i, np.zeros(2)) for i in ids])
        return extract_features(frame)

    def test_too_few_matches_leaves_pose_unchanged(self):
        wm = WorldMap()
        for i in range(5):
            wm.add(i, np.zeros(3))
        pose = Pose(np.array([1.0, 0, 0]), np.zeros(3), np.array([1.0, 0, 0, 0]))
        out, matched = update_pose(pose, self._block(range(5)), wm, Pose.identity())
        assert matched == 5
        assert np.array_equal(out.position, pose.position)

    def test_update_blends_toward_truth_with_gain(self):
        wm = WorldMap()
        for i in range(20):
            wm.add(i, np.zeros(3))
        pose = Pose(np.array([1.0, 0, 0]), np.zeros(3), np.array([1.0, 0, 0, 0]))
        out, matched = update_pose(pose, self._block(range(20)), wm,
                                   Pose.identity(), gain=0.8)
        assert matched == 20
        # error shrinks by exactly (1 - gain) without observation noise
        assert out.position[0] == pytest.approx(0.2)

    def test_extend_map_inserts_only_new(self):
        wm = WorldMap()
        wm.add(0, np.array([9.0, 9.0, 9.0]))
        truth = {i: np.array([float(i), 0.0, 0.0]) for i in range(4)}
        inserted = extend_map(wm, self._block(range(4)), truth)
        assert inserted == 3
        assert len(wm) == 4
        assert np.array_equal(wm.point(0), [9.0, 9.0, 9.0])  # insert-only

    def test_map_rejects_non_finite_points(self):
        wm = WorldMap()
        with pytest.raises(ValueError):
            wm.add(1, np.array([np.nan, 0.0, 0.0]))


class TestVisibility:
    def test_generate_landmarks_shape(self):
        lm = generate_landmarks(400, np.random.default_rng(3))
        assert len(lm) == 400
        radii = [math.hypot(p[0], p[1]) for p in lm.values()]
        assert all(7.0 <= r <= 9.0 for r in radii)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_vectorized_visibility_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        lm = generate_landmarks(60, rng)
        pose = Pose(rng.uniform(-6, 6, 3), np.zeros(3),
                    quat_normalize(rng.normal(size=4)))
        fast = {i for i, _ in LandmarkField(lm).visible(pose)}

        heading = quat_rotate(pose.orientation, np.array([1.0, 0.0, 0.0]))
        cos_half = math.cos(math.radians(100.0) / 2)
        slow = set()
        for i, p in lm.items():
            rel = p - pose.position
            d = np.linalg.norm(rel)
            if 1e-6 < d <= 12.0 and float(rel @ heading) / d >= cos_half:
                slow.add(i)
        assert fast == slow

    def test_wrapper_agrees_with_field(self):
        lm = generate_landmarks(30, np.random.default_rng(1))
        pose = CircleTrajectory().pose_at(0)
        assert {i for i, _ in visible_landmarks(pose, lm)} == \
            {i for i, _ in LandmarkField(lm).visible(pose)}
