# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Saving and loading trained objects through the checkpoint format
"""

import json
from pathlib import Path

import numpy as np

from dlalign.dlalign.formats import read_checkpoint, write_checkpoint
from dlalign.dlalign.neural import GaussianPolicy, adam_init
from dlalign.dlalign.ppo import TrainState
from dlalign.dlalign.align.delta_action import DeltaActionModel
from dlalign.dlalign.align.delta_dynamics import DeltaDynamicsModel
from dlalign.dlalign.utils import canonical_json, throw


def save_train_state(actor_path, critic_path, state, metadata=None):
	"""
	Write an actor-critic pair with their Adam moments

	Args:
		actor_path: Actor checkpoint (mean network, log_std)
		critic_path: Critic checkpoint
		state: TrainState
		metadata: dict copied into both headers
	"""
	write_checkpoint(
		actor_path, state.policy.mean_net.spec, state.policy.mean_net.flat,
		extras={"log_std": state.policy.log_std}, optimizer=state.actor_opt,
		metadata={"kind": "actor", **(metadata or {})},
	)
	write_checkpoint(
		critic_path, state.critic.spec, state.critic.flat,
		optimizer=state.critic_opt, metadata={"kind": "critic", **(metadata or {})},
	)


def load_policy(path):
	"""GaussianPolicy from an actor checkpoint"""
	data = read_checkpoint(path)
	if "log_std" not in data["extras"]:
		throw(f"{path}: not an actor checkpoint (no log_std)")
	return GaussianPolicy(data["net"], data["extras"]["log_std"])


def load_train_state(actor_path, critic_path):
	actor = read_checkpoint(actor_path)
	critic = read_checkpoint(critic_path)
	if "log_std" not in actor["extras"]:
		throw(f"{actor_path}: not an actor checkpoint (no log_std)")
	return TrainState(
		policy=GaussianPolicy(actor["net"], actor["extras"]["log_std"]),
		critic=critic["net"],
		actor_opt=actor["optimizer"] or adam_init(actor["net"].spec.n_params),
		critic_opt=critic["optimizer"] or adam_init(critic["net"].spec.n_params),
	)


def save_delta_action(path, model, metadata=None):
	extras = {"log_std": model.policy.log_std, "mask": model.mask.astype(np.float64)}
	write_checkpoint(
		path, model.policy.mean_net.spec, model.policy.mean_net.flat, extras=extras,
		metadata={"kind": "delta_action", "bound": model.bound, **(metadata or {})},
	)


def load_delta_action(path):
	data = read_checkpoint(path)
	if data["metadata"].get("kind") != "delta_action":
		throw(f"{path}: not a delta action checkpoint")
	policy = GaussianPolicy(data["net"], data["extras"]["log_std"])
	return DeltaActionModel(policy, data["extras"]["mask"] > 0.5, data["metadata"]["bound"])


def save_delta_dynamics(path, model, metadata=None):
	extras = {
		"in_mean": model.in_mean,
		"in_std": model.in_std,
		"out_mean": model.out_mean,
		"out_std": model.out_std,
	}
	write_checkpoint(
		path, model.net.spec, model.net.flat, extras=extras,
		metadata={"kind": "delta_dynamics", **(metadata or {})},
	)


def load_delta_dynamics(path):
	data = read_checkpoint(path)
	if data["metadata"].get("kind") != "delta_dynamics":
		throw(f"{path}: not a delta dynamics checkpoint")
	extras = data["extras"]
	return DeltaDynamicsModel(data["net"], extras["in_mean"], extras["in_std"], extras["out_mean"], extras["out_std"])


def write_json(path, data):
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	path.write_text(canonical_json(data) + "\n", encoding="utf-8")


def read_json(path):
	try:
		return json.loads(Path(path).read_text(encoding="utf-8"))
	except FileNotFoundError:
		throw(f"file not found: {path}")
	except json.JSONDecodeError as e:
		throw(f"{path}: corrupt JSON ({e})")
