# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from dlalign.dlalign.exceptions import ValidationError
from dlalign.dlalign.reference import frame_at_phase
from dlalign.dlalign.tracking import (
	INAPPLICABLE_TERMS,
	TASK_TERMS,
	CurriculumState,
	RewardWeights,
	TrackingConfig,
	TrackingEnv,
	actor_obs_size,
	compute_tracking_reward,
	critic_obs_size,
	curriculum_hook,
	delta_action_weights,
	make_env_factory,
	record_reward_breakdown,
)
from dlalign.dlalign.utils import make_rng, read_csv


def reference_action(env):
	"""Setpoint at the reference pose one control step ahead"""
	dt = env.params.control_dt
	next_phase = min(env.phase + dt / env.motion.duration, 1.0)
	return frame_at_phase(env.motion, next_phase)[0]


def test_rsi_start_phases_are_uniform(motion, params):
	env = TrackingEnv(motion, params, RewardWeights(), TrackingConfig(randomize=False))
	rng = make_rng(0)
	phases = []
	for _ in range(500):
		env.reset(rng)
		phases.append(env.phase0)
	assert stats.kstest(phases, "uniform").pvalue > 0.01


def test_rsi_off_starts_at_phase_zero(motion, params, quiet_tracking):
	env = TrackingEnv(motion, params, RewardWeights(), quiet_tracking)
	env.reset(make_rng(1))
	assert env.phase0 == 0.0
	np.testing.assert_array_equal(env.state.q, motion.q_ref[0])


def test_domain_randomization_stays_in_ranges(motion, params):
	config = TrackingConfig().validate()
	env = TrackingEnv(motion, params, RewardWeights(), config)
	rng = make_rng(2)
	for _ in range(50):
		env.reset(rng)
		kp_scale = env.params.pd_kp / params.pd_kp
		assert np.allclose(kp_scale, kp_scale[0])
		assert 0.925 <= kp_scale[0] <= 1.05
		assert 20 <= env.params.control_delay_steps <= 40
		assert 0.7 <= env.params.joint_damping[0] / params.joint_damping[0] <= 1.3
	# base params are left untouched
	assert params.control_delay_steps == 20


def test_observation_sizes(motion, params):
	env = TrackingEnv(motion, params, RewardWeights(), TrackingConfig(history_len=3))
	env.reset(make_rng(0))
	assert env.actor_obs().shape == (actor_obs_size(3, 3),)
	assert env.critic_obs().shape == (critic_obs_size(3, 3),)


def test_perfect_tracking_earns_task_weights(params):
	rng = np.random.default_rng(0)
	q = rng.uniform(-0.3, 0.3, 3)
	qd = rng.uniform(-0.5, 0.5, 3)
	body = rng.normal(size=(7, 2))
	body_vel = rng.normal(size=(7, 2))
	weights = RewardWeights()

	total, terms = compute_tracking_reward(
		q, qd, body, body_vel, q, qd, body, body_vel,
		q, q, np.zeros(3), np.zeros(3), params, weights, TrackingConfig(),
	)

	for name in TASK_TERMS:
		assert terms[name] == pytest.approx(getattr(weights, name))
	assert total == pytest.approx(weights.task_total())


def test_tracking_error_lowers_task_terms(params):
	q = np.zeros(3)
	body = np.zeros((7, 2))
	weights = RewardWeights()
	_, terms = compute_tracking_reward(
		q, q, body, body, q + 0.2, q, body + 0.05, body,
		q, q, np.zeros(3), np.zeros(3), params, weights, TrackingConfig(),
	)
	for name in ("body_pos", "end_effector_pos", "dof_pos"):
		assert 0.0 < terms[name] < getattr(weights, name)


def test_action_norm_term_is_non_positive(params):
	q = np.zeros(3)
	body = np.zeros((7, 2))
	_, terms = compute_tracking_reward(
		q, q, body, body, q, q, body, body,
		np.array([0.1, -0.2, 0.0]), q, np.zeros(3), np.zeros(3), params, delta_action_weights(0.2), TrackingConfig(),
	)
	assert terms["action_norm"] == pytest.approx(0.2 * (np.exp(-np.sqrt(0.05)) - 1.0))


def test_inapplicable_weights_are_accepted_and_ignored(params):
	q = np.zeros(3)
	body = np.zeros((7, 2))
	placeholder = RewardWeights.from_dict({name: 1.0 for name in INAPPLICABLE_TERMS})
	assert placeholder.vr_3point == 1.0

	args = (q, q, body, body, q + 0.1, q, body + 0.02, body, q, q, np.zeros(3), np.zeros(3), params)
	total, terms = compute_tracking_reward(*args, placeholder, TrackingConfig())
	baseline_total, baseline_terms = compute_tracking_reward(*args, RewardWeights(), TrackingConfig())
	assert total == pytest.approx(baseline_total)
	assert terms == pytest.approx(baseline_terms)
	assert not set(INAPPLICABLE_TERMS) & set(terms)


def test_curriculum_threshold_schedule():
	curriculum = CurriculumState().validate()
	assert curriculum.threshold(0.0) == pytest.approx(1.5)
	assert curriculum.threshold(0.3) == pytest.approx(0.9)
	assert curriculum.threshold(0.6) == pytest.approx(0.3)
	assert curriculum.threshold(1.0) == pytest.approx(0.3)


def test_curriculum_hook_updates_every_env(motion, params, quiet_tracking):
	factory, envs = make_env_factory(motion, params, RewardWeights(), quiet_tracking)
	factory(0)
	factory(1)
	hook = curriculum_hook(envs, quiet_tracking.curriculum)
	assert hook(0.3) == pytest.approx(0.9)
	assert [env.threshold for env in envs] == [pytest.approx(0.9)] * 2

	fixed = curriculum_hook(envs, quiet_tracking.curriculum, fixed=0.3)
	assert fixed(0.0) == 0.3


def test_episode_runs_to_completion(motion, params, quiet_tracking):
	env = TrackingEnv(motion, params, RewardWeights(), quiet_tracking)
	env.reset(make_rng(0))
	steps = 0
	done = False
	while not done:
		_, reward, done, info = env.step(reference_action(env))
		steps += 1
		assert np.isfinite(reward)
	assert steps == 100
	assert info["truncated"] and info["success"]
	assert not info["failed"]


def test_exceeding_threshold_terminates(motion, params, quiet_tracking):
	env = TrackingEnv(motion, params, RewardWeights(), quiet_tracking)
	env.reset(make_rng(0))
	env.threshold = 0.0
	_, reward, done, info = env.step(np.full(3, 1.0))
	assert done and info["failed"]
	assert not info["truncated"]
	assert info["terms"]["termination"] == -200.0
	assert reward < -150.0


def test_pushes_follow_interval(motion, params):
	config = TrackingConfig(rsi=False, push_interval=0.5, push_magnitude=0.5).validate()
	env = TrackingEnv(motion, params, RewardWeights(), config)
	env.reset(make_rng(3))
	env.threshold = 100.0
	done = False
	while not done:
		_, _, done, _ = env.step(reference_action(env))
	assert env.push_count == 2


def test_wrong_action_shape_raises(motion, params, quiet_tracking):
	env = TrackingEnv(motion, params, RewardWeights(), quiet_tracking)
	env.reset(make_rng(0))
	with pytest.raises(ValidationError):
		env.step(np.zeros(2))


def test_reward_breakdown_csv(motion, params, quiet_tracking, policy_for, tmp_path):
	path = tmp_path / "rewards.csv"
	result = record_reward_breakdown(policy_for(0), motion, params, RewardWeights(), quiet_tracking, 0, path)
	rows = read_csv(path)
	assert len(rows) == result["steps"] >= 1
	assert {"body_pos", "termination", "action_norm", "total"} <= set(rows[0])
	assert sum(float(row["total"]) for row in rows) == pytest.approx(result["total"])


@pytest.mark.parametrize("data", [
	{"torque": 1.0},
	{"body_pos": -1.0},
	{"body_rot": 0.5},
	{"slip": 1.0},
])
def test_invalid_reward_weights(data):
	with pytest.raises(ValidationError):
		RewardWeights.from_dict(data)


def test_invalid_curriculum():
	with pytest.raises(ValidationError):
		replace(TrackingConfig(), curriculum=CurriculumState(start=0.2, end=0.5)).validate()
