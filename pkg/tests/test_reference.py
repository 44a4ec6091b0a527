# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import numpy as np
import pytest

from dlalign.dlalign.dynamics import DynamicsParams, forward_kinematics
from dlalign.dlalign.exceptions import ValidationError
from dlalign.dlalign.reference import (
	DIFFICULTIES,
	MotionSet,
	ReferenceMotion,
	default_motion_set,
	endpoint_velocity_condition,
	feasibility_clean,
	frame_at_phase,
	generate_synthetic,
)


def constant_motion(q, params, n_frames=20, name="still"):
	q_ref = np.tile(np.asarray(q, dtype=np.float64), (n_frames, 1))
	return ReferenceMotion(
		dt=params.control_dt,
		q_ref=q_ref,
		qd_ref=np.zeros_like(q_ref),
		body_ref=forward_kinematics(q_ref, params),
		difficulty="easy",
		name=name,
	).validate()


def test_default_set_is_feasible_and_split(params):
	motion_set = default_motion_set(params, seed=0)
	assert len(motion_set.motions) == 12
	for motion in motion_set.motions:
		assert feasibility_clean(motion, params)["accepted"], motion.name
		assert 2.0 <= motion.duration <= 5.0 + 1e-9

	held_out = motion_set.split("held_out")
	assert [m.name for m in held_out] == ["easy_03", "medium_03", "hard_03"]
	assert len(motion_set.split("train")) == 9
	assert {level: len(group) for level, group in motion_set.by_difficulty().items()} == {level: 4 for level in DIFFICULTIES}


def test_generation_is_seed_deterministic(params):
	for kind in DIFFICULTIES:
		a = generate_synthetic(kind, 5, params)
		b = generate_synthetic(kind, 5, params)
		np.testing.assert_array_equal(a.q_ref, b.q_ref)
		c = generate_synthetic(kind, 6, params)
		assert a.q_ref.shape != c.q_ref.shape or not np.array_equal(a.q_ref, c.q_ref)


def test_velocity_is_derivative_of_position(params):
	for kind in DIFFICULTIES:
		motion = generate_synthetic(kind, 1, params, duration=3.0)
		numeric = np.gradient(motion.q_ref, motion.dt, axis=0)
		np.testing.assert_allclose(numeric[1:-1], motion.qd_ref[1:-1], atol=0.05)


@pytest.mark.parametrize("kind", DIFFICULTIES)
def test_endpoint_velocity_condition(params, kind):
	motion = generate_synthetic(kind, 2, params)
	if endpoint_velocity_condition(kind) == "rest":
		np.testing.assert_allclose(motion.qd_ref[0], 0.0, atol=1e-9)
		np.testing.assert_allclose(motion.qd_ref[-1], 0.0, atol=1e-9)
	else:
		np.testing.assert_allclose(motion.qd_ref[0], motion.qd_ref[-1], atol=1e-9)


@pytest.mark.parametrize("kind", DIFFICULTIES)
def test_zero_amplitude_gives_constant_motion(params, kind):
	motion = generate_synthetic(kind, 3, params, amplitude_scale=0.0)
	np.testing.assert_allclose(motion.q_ref, np.tile(motion.q_ref[0], (motion.n_frames, 1)), atol=1e-12)
	np.testing.assert_allclose(motion.qd_ref, 0.0, atol=1e-12)
	assert feasibility_clean(motion, params)["accepted"]


def test_hard_motion_fails_with_tiny_torque_limit(params):
	weak = DynamicsParams.from_dict({"n_links": 3, "torque_limit": (params.torque_limit * 0.01).tolist()})
	motion = generate_synthetic("hard", 0, weak)
	assert not feasibility_clean(motion, weak)["accepted"]


def test_hanging_rest_needs_no_torque(params):
	report = feasibility_clean(constant_motion(np.zeros(3), params), params)
	assert report["accepted"]
	np.testing.assert_allclose(report["peak_torque"], 0.0, atol=1e-9)


def test_horizontal_chain_holding_torque():
	params = DynamicsParams.from_dict({"n_links": 2, "link_mass": [1.0, 2.0], "link_length": [0.4, 0.6]})
	report = feasibility_clean(constant_motion([np.pi / 2, 0.0], params), params)
	g = params.gravity
	np.testing.assert_allclose(report["peak_torque"], [g * (1.0 * 0.2 + 2.0 * 0.7), g * 2.0 * 0.3], rtol=1e-9)


def test_frame_at_phase_interpolates(motion):
	q, qd, body = frame_at_phase(motion, 0.0)
	np.testing.assert_array_equal(q, motion.q_ref[0])
	q, _, _ = frame_at_phase(motion, 1.0)
	np.testing.assert_array_equal(q, motion.q_ref[-1])

	halfway = 0.5 / (motion.n_frames - 1)
	q, qd, body = frame_at_phase(motion, halfway)
	np.testing.assert_allclose(q, 0.5 * (motion.q_ref[0] + motion.q_ref[1]))
	np.testing.assert_allclose(body, 0.5 * (motion.body_ref[0] + motion.body_ref[1]))


def test_frame_at_phase_rejects_out_of_range(motion):
	with pytest.raises(ValidationError):
		frame_at_phase(motion, 1.5)


def test_motion_set_rejects_duplicate_names(params):
	motion = generate_synthetic("easy", 0, params, name="clip")
	with pytest.raises(ValidationError):
		MotionSet([motion, motion]).validate()
	with pytest.raises(ValidationError):
		MotionSet([motion], {"clip": "test"}).validate()
