# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

from dataclasses import replace

import numpy as np
import pytest

from dlalign.dlalign.exceptions import ValidationError
from dlalign.dlalign.reference import frame_at_phase
from dlalign.dlalign.align.rollouts import collect_rollouts, replay, state_at


def test_replay_reproduces_recording(params, recorded_dataset):
	episode = recorded_dataset(params, n_episodes=1).episodes[0]
	q, qd = replay(episode, 0, episode.n_steps, params)
	np.testing.assert_allclose(q, episode.q, rtol=0, atol=1e-12)
	np.testing.assert_allclose(qd, episode.qd, rtol=0, atol=1e-12)


def test_replay_from_the_middle(params, recorded_dataset):
	episode = recorded_dataset(params, n_episodes=1).episodes[0]
	q, _ = replay(episode, 40, 50, params)
	assert q.shape == (51, 3)
	np.testing.assert_allclose(q, episode.q[40:91], rtol=0, atol=1e-12)


def test_state_at_rebuilds_delay_buffer_for_other_params(params, recorded_dataset):
	episode = recorded_dataset(params, n_episodes=1).episodes[0]
	longer = replace(params, control_delay_steps=35)
	state = state_at(episode, 10, longer)
	assert state.delay_buffer.shape == (35, 3)
	np.testing.assert_array_equal(state.q, episode.q[10])


def test_replay_window_is_checked(params, recorded_dataset):
	episode = recorded_dataset(params, n_episodes=1, n_steps=20).episodes[0]
	with pytest.raises(ValidationError):
		replay(episode, 10, 11, params)


def test_subset_is_seeded(params, recorded_dataset):
	dataset = recorded_dataset(params, n_episodes=4, n_steps=10)
	half = dataset.subset(0.5, seed=3)
	assert len(half.episodes) == 2
	assert [e.motion for e in half.episodes] == [e.motion for e in dataset.subset(0.5, seed=3).episodes]
	assert len(dataset.subset(0.01, seed=0).episodes) == 1
	assert len(dataset.episodes) == 4
	with pytest.raises(ValidationError):
		dataset.subset(0.0, seed=0)


def test_for_motions(params, recorded_dataset):
	dataset = recorded_dataset(params, n_episodes=3, n_steps=10)
	picked = dataset.for_motions(["synthetic_0", "synthetic_2"])
	assert [e.motion for e in picked.episodes] == ["synthetic_0", "synthetic_2"]


def test_collect_rollouts_start_at_reference(motion, params, quiet_tracking, policy_for):
	dataset = collect_rollouts({motion.name: policy_for(1)}, params, [motion], 3, seed=0, config=quiet_tracking, workers=1)
	assert dataset.provenance == "real-proxy"
	assert len(dataset.episodes) == 3
	for episode in dataset.episodes:
		assert 0.0 <= episode.start_phase <= 0.5
		q_ref = frame_at_phase(motion, episode.start_phase)[0]
		np.testing.assert_allclose(episode.q[0], q_ref)
		np.testing.assert_allclose(episode.prime, q_ref)
		assert episode.n_steps >= 50
		q, _ = replay(episode, 0, episode.n_steps, params)
		np.testing.assert_allclose(q, episode.q, rtol=0, atol=1e-12)


def test_collect_rollouts_ignores_worker_count(motion, params, quiet_tracking, policy_for):
	policy = policy_for(2)
	serial = collect_rollouts(policy, params, [motion], 2, seed=5, config=quiet_tracking, workers=1)
	threaded = collect_rollouts(policy, params, [motion], 2, seed=5, config=quiet_tracking, workers=2)
	for a, b in zip(serial.episodes, threaded.episodes):
		np.testing.assert_array_equal(a.q, b.q)
		np.testing.assert_array_equal(a.actions, b.actions)


def test_collect_rollouts_needs_a_policy_per_motion(motion, params, quiet_tracking, policy_for):
	with pytest.raises(ValidationError, match="no policy"):
		collect_rollouts({"other": policy_for(0)}, params, [motion], 1, seed=0, config=quiet_tracking)
