# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Policy fine-tuning in an aligned simulator
The same PPO loop as pre-training, with the termination threshold held at the
curriculum's final value and the environment's plant swapped for the
alignment method's (delta action, delta dynamics, SysID params, action noise).
"""

from dlalign.dlalign import ppo
from dlalign.dlalign.dynamics import control_step
from dlalign.dlalign.neural import adam_init
from dlalign.dlalign.align.delta_action import DeltaActionPlant
from dlalign.dlalign.align.delta_dynamics import DeltaDynamicsPlant
from dlalign.dlalign.tracking import actor_obs, critic_obs, curriculum_hook, make_env_factory
from dlalign.dlalign.utils import logger, make_rng, throw


class ActionNoisePlant:
	"""Adds beta * U[0, 1] noise per action dimension on its own RNG stream"""

	def __init__(self, beta, rng):
		if beta < 0:
			throw(f"action noise beta must be non-negative, got {beta}")
		self.beta = float(beta)
		self.rng = rng

	def step(self, state, action, params):
		applied = action + self.beta * self.rng.random(action.shape[0])
		next_state, info = control_step(state, applied, params)
		info["applied_action"] = applied
		return next_state, info


def fresh_optimizers(state):
	"""Copy of a TrainState with new Adam moments"""
	cloned = ppo.clone_state(state)
	cloned.actor_opt = adam_init(state.actor_opt.m.shape[0])
	cloned.critic_opt = adam_init(state.critic_opt.m.shape[0])
	return cloned


def finetune_policy(state, motion, env_params, weights, tracking_config, ppo_config, seed, plant_factory=None, nominal=None, curves_path=None):
	"""
	Continue PPO from a pretrained actor-critic

	The pretrained state is not modified; deployment uses the returned policy
	without any plant wrapper.

	Args:
		state: Pretrained TrainState
		motion: ReferenceMotion
		env_params: Base DynamicsParams of the fine-tuning simulator
		weights: RewardWeights (same as pre-training)
		tracking_config: TrackingConfig
		ppo_config: PpoConfig (total_steps = fine-tuning budget)
		seed: Base seed
		plant_factory: Optional Callable(env_index) -> plant
		nominal: DynamicsParams for the critic's summary vector

	Returns:
		dict: success, state, curves, diverged
	"""
	curriculum = tracking_config.curriculum
	factory, envs = make_env_factory(motion, env_params, weights, tracking_config, plant_factory, nominal)
	on_progress = curriculum_hook(envs, curriculum, fixed=curriculum.end)

	logger.info(f"DLAlign: fine-tuning policy for {motion.name} - {ppo_config.total_steps} step(s)")
	result = ppo.train(
		factory, actor_obs, critic_obs, ppo_config, seed,
		state=fresh_optimizers(state), on_progress=on_progress, curves_path=curves_path,
	)
	return {
		"success": result["success"],
		"state": result["state"],
		"curves": result["curves"],
		"diverged": result["diverged"],
	}


def asap_finetune(state, motion, sim_params, delta_model, weights, tracking_config, ppo_config, seed, **kwargs):
	"""Fine-tune in f_sim(s, a + delta(s, a)) with the delta model frozen"""
	frozen = delta_model.copy()
	return finetune_policy(
		state, motion, sim_params, weights, tracking_config, ppo_config, seed,
		plant_factory=lambda index: DeltaActionPlant(frozen), **kwargs,
	)


def delta_dynamics_finetune(state, motion, sim_params, model, weights, tracking_config, ppo_config, seed, **kwargs):
	"""Fine-tune in the residual-augmented simulator"""
	return finetune_policy(
		state, motion, sim_params, weights, tracking_config, ppo_config, seed,
		plant_factory=lambda index: DeltaDynamicsPlant(model), **kwargs,
	)


def sysid_finetune(state, motion, sysid_params, weights, tracking_config, ppo_config, seed, **kwargs):
	"""Fine-tune in the simulator configured with the best SysID parameters"""
	return finetune_policy(state, motion, sysid_params, weights, tracking_config, ppo_config, seed, **kwargs)


def noise_finetune(state, motion, sim_params, beta, weights, tracking_config, ppo_config, seed, **kwargs):
	"""
	Fine-tune in the nominal simulator with s' = f_sim(s, a + beta * u), u ~ U[0, 1]
	With beta = 0 this reproduces plain fine-tuning exactly.
	"""
	return finetune_policy(
		state, motion, sim_params, weights, tracking_config, ppo_config, seed,
		plant_factory=lambda index: ActionNoisePlant(beta, make_rng(seed, 23, index)), **kwargs,
	)
