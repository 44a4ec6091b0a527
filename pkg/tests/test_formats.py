# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import numpy as np
import pytest

from dlalign.dlalign.artifacts import (
	load_delta_action,
	load_delta_dynamics,
	load_train_state,
	read_json,
	save_delta_action,
	save_delta_dynamics,
	save_train_state,
	write_json,
)
from dlalign.dlalign.exceptions import ValidationError
from dlalign.dlalign.formats import (
	read_checkpoint,
	read_dataset,
	read_motion,
	write_checkpoint,
	write_dataset,
	write_motion,
)
from dlalign.dlalign.neural import AdamState, MlpSpec, init_mlp, make_policy
from dlalign.dlalign.ppo import PpoConfig, init_train_state
from dlalign.dlalign.align.delta_action import DeltaActionModel
from dlalign.dlalign.align.delta_dynamics import DeltaDynamicsModel, predict_residual
from dlalign.dlalign.utils import make_rng


def test_motion_file_is_bit_exact(motion, tmp_path):
	path = tmp_path / "easy.mot"
	write_motion(path, motion)
	loaded = read_motion(path)
	assert loaded.name == motion.name and loaded.difficulty == motion.difficulty
	assert loaded.dt == motion.dt
	np.testing.assert_array_equal(loaded.q_ref, motion.q_ref)
	np.testing.assert_array_equal(loaded.qd_ref, motion.qd_ref)
	np.testing.assert_array_equal(loaded.body_ref, motion.body_ref)


def test_checkpoint_keeps_extras_and_optimizer(tmp_path):
	rng = make_rng(0)
	net = init_mlp(MlpSpec((4, 8, 2), "relu"), rng)
	n = net.spec.n_params
	optimizer = AdamState(rng.normal(size=n), rng.random(n), 17)
	path = tmp_path / "net.ckpt"
	write_checkpoint(path, net.spec, net.flat, extras={"scale": [1.0, 2.0]}, optimizer=optimizer, metadata={"kind": "test"})

	data = read_checkpoint(path)
	assert data["net"].spec == net.spec
	np.testing.assert_array_equal(data["net"].flat, net.flat)
	np.testing.assert_array_equal(data["extras"]["scale"], [1.0, 2.0])
	np.testing.assert_array_equal(data["optimizer"].m, optimizer.m)
	np.testing.assert_array_equal(data["optimizer"].v, optimizer.v)
	assert data["optimizer"].t == 17
	assert data["metadata"] == {"kind": "test"}


def test_dataset_round_trip(params, recorded_dataset, tmp_path):
	dataset = recorded_dataset(params, n_episodes=2, n_steps=30)
	dataset.episodes[1].failed = True
	path = tmp_path / "real.traj"
	write_dataset(path, dataset)
	loaded = read_dataset(path)

	assert loaded.params_hash == dataset.params_hash
	assert loaded.provenance == "real-proxy"
	for a, b in zip(loaded.episodes, dataset.episodes):
		assert (a.motion, a.failed, a.start_phase) == (b.motion, b.failed, b.start_phase)
		np.testing.assert_array_equal(a.q, b.q)
		np.testing.assert_array_equal(a.qd, b.qd)
		np.testing.assert_array_equal(a.actions, b.actions)
		np.testing.assert_array_equal(a.prime, b.prime)


def test_bad_magic_is_rejected(motion, tmp_path):
	path = tmp_path / "easy.mot"
	write_motion(path, motion)
	with pytest.raises(ValidationError, match="expected magic"):
		read_checkpoint(path)


def test_truncated_payload_is_rejected(motion, tmp_path):
	path = tmp_path / "easy.mot"
	write_motion(path, motion)
	data = path.read_bytes()
	path.write_bytes(data[:-8])
	with pytest.raises(ValidationError, match="truncated"):
		read_motion(path)


def test_trailing_bytes_are_rejected(motion, tmp_path):
	path = tmp_path / "easy.mot"
	write_motion(path, motion)
	with open(path, "ab") as f:
		f.write(b"\x00")
	with pytest.raises(ValidationError, match="trailing"):
		read_motion(path)


def test_train_state_round_trip(tmp_path):
	state = init_train_state(7, 9, 3, PpoConfig(actor_hidden=(8,), critic_hidden=(8,)), make_rng(1))
	save_train_state(tmp_path / "actor.ckpt", tmp_path / "critic.ckpt", state, metadata={"motion": "easy_00"})
	loaded = load_train_state(tmp_path / "actor.ckpt", tmp_path / "critic.ckpt")
	np.testing.assert_array_equal(loaded.policy.mean_net.flat, state.policy.mean_net.flat)
	np.testing.assert_array_equal(loaded.policy.log_std, state.policy.log_std)
	np.testing.assert_array_equal(loaded.critic.flat, state.critic.flat)
	assert read_checkpoint(tmp_path / "critic.ckpt")["metadata"] == {"kind": "critic", "motion": "easy_00"}


def test_delta_models_round_trip(tmp_path):
	rng = make_rng(2)
	policy = make_policy(6, 3, (8,), "tanh", rng, init_log_std=-2.0)
	model = DeltaActionModel(policy, np.array([True, False, True]), 0.25)
	save_delta_action(tmp_path / "delta_action.ckpt", model)
	loaded = load_delta_action(tmp_path / "delta_action.ckpt")
	np.testing.assert_array_equal(loaded.mask, model.mask)
	assert loaded.bound == 0.25

	dyn = DeltaDynamicsModel(
		init_mlp(MlpSpec((9, 8, 6)), rng), rng.normal(size=9), rng.random(9) + 0.5, rng.normal(size=6), rng.random(6) + 0.5,
	)
	save_delta_dynamics(tmp_path / "delta_dynamics.ckpt", dyn)
	loaded_dyn = load_delta_dynamics(tmp_path / "delta_dynamics.ckpt")
	x = rng.normal(size=(4, 3))
	np.testing.assert_array_equal(predict_residual(loaded_dyn, x, x, x), predict_residual(dyn, x, x, x))

	with pytest.raises(ValidationError, match="not a delta action"):
		load_delta_action(tmp_path / "delta_dynamics.ckpt")


def test_json_errors(tmp_path):
	with pytest.raises(ValidationError, match="not found"):
		read_json(tmp_path / "missing.json")
	path = tmp_path / "data.json"
	write_json(path, {"peak": np.array([1.0, 2.0])})
	assert read_json(path) == {"peak": [1.0, 2.0]}
	path.write_text("{", encoding="utf-8")
	with pytest.raises(ValidationError, match="corrupt"):
		read_json(path)
