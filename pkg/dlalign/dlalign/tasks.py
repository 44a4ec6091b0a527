# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Sweeps for the extensive studies
Each sweep item runs on its own; a failed item is logged and counted and the
sweep moves on to the next one.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

from dlalign.dlalign.artifacts import save_train_state
from dlalign.dlalign.evalkit import METRIC_FIELDS, closed_loop_eval, open_loop_eval
from dlalign.dlalign.align.delta_action import train_delta_action
from dlalign.dlalign.align.finetune import asap_finetune, noise_finetune
from dlalign.dlalign.utils import derive_seed, log_error, logger


ABLATION_AXES = {
	"dataset_size": "dataset_fraction",
	"horizon": "horizon",
	"action_norm": "action_norm_weight",
}


def overall_row(result):
	"""Mean of the per-difficulty closed-loop rows, weighted by run count"""
	rows = result["rows"]
	runs = np.array([row["runs"] for row in rows], dtype=np.float64)
	summary = {"success": float(np.average([row["success"] for row in rows], weights=runs))}
	for name in METRIC_FIELDS:
		summary[name] = float(np.average([row[name] for row in rows], weights=runs))
	return summary


def noise_sweep(pretrained, motions, sim_params, real_params, betas, weights, tracking_config, ppo_config, seed, eval_settings, out_dir):
	"""
	Fine-tune every motion's policy under action noise beta * U[0, 1] for each
	beta and score the result in the real proxy

	Args:
		pretrained: dict motion name -> TrainState
		motions: list of ReferenceMotion
		sim_params: Nominal simulator params
		real_params: Real-proxy params used for scoring
		betas: Noise magnitudes
		weights: RewardWeights
		tracking_config: TrackingConfig
		ppo_config: PpoConfig for fine-tuning
		seed: Base seed
		eval_settings: dict n_seeds, init_noise, seed for closed_loop_eval
		out_dir: Directory for the per-beta checkpoints

	Returns:
		dict: success, failed, rows (beta + overall metrics), outputs
	"""
	logger.info(f"DLAlign: starting noise sweep over {len(betas)} beta value(s)")

	rows = []
	outputs = []
	success_count = 0
	failed_count = 0

	for index, beta in enumerate(betas):
		try:
			policies = {}
			for motion_index, motion in enumerate(motions):
				result = noise_finetune(
					pretrained[motion.name], motion, sim_params, beta, weights, tracking_config, ppo_config,
					derive_seed(seed, index, motion_index), nominal=sim_params,
				)
				policies[motion.name] = result["state"].policy
				beta_dir = Path(out_dir) / f"beta_{beta:g}"
				paths = (beta_dir / f"{motion.name}.actor.ckpt", beta_dir / f"{motion.name}.critic.ckpt")
				save_train_state(*paths, result["state"], metadata={"motion": motion.name, "beta": beta})
				outputs.extend(paths)

			evaluation = closed_loop_eval(
				policies, real_params, motions, eval_settings["n_seeds"], eval_settings["seed"], tracking_config,
				nominal=sim_params, init_noise=eval_settings["init_noise"], method=f"noise_{beta:g}",
			)
			rows.append({"beta": beta, **overall_row(evaluation)})
			success_count += 1
			logger.info(f"DLAlign: noise beta {beta:g} - g_mpjpe {rows[-1]['g_mpjpe']:.2f} mm")
		except Exception as e:
			failed_count += 1
			logger.info(f"DLAlign: exception in noise sweep at beta {beta:g}: {str(e)}")
			log_error("DLAlign Noise Sweep Failed", f"Beta: {beta}\n\nError: {str(e)}")

	logger.info(f"DLAlign: noise sweep completed - Success: {success_count}, Failed: {failed_count}")
	return {"success": success_count, "failed": failed_count, "rows": rows, "outputs": outputs}


def delta_action_ablation(axis, values, train_dataset, held_out_dataset, sim_params, real_params, base_config, delta_ppo_config, tracking_config, horizons, stride, seed, closed_loop=None):
	"""
	Retrain the delta action model along one axis and measure open-loop error
	on the training motions (in-distribution) and held-out motions, plus the
	closed-loop error of policies fine-tuned with each model

	Args:
		axis: "dataset_size", "horizon" or "action_norm"
		values: Swept values
		train_dataset: Recorded episodes of the training motions
		held_out_dataset: Recorded episodes of the held-out motions
		sim_params: Nominal simulator params
		real_params: Real-proxy params
		base_config: DeltaActionConfig the axis is varied from
		delta_ppo_config: PpoConfig for delta action learning
		tracking_config: TrackingConfig
		horizons: Open-loop evaluation horizons
		stride: Open-loop window stride
		seed: Base seed
		closed_loop: Optional dict pretrained, motions, weights, ppo_config,
			n_seeds, init_noise for the fine-tuning column

	Returns:
		dict: success, failed, rows
	"""
	field_name = ABLATION_AXES[axis]
	logger.info(f"DLAlign: starting {axis} ablation over {len(values)} value(s)")

	rows = []
	success_count = 0
	failed_count = 0

	for index, value in enumerate(values):
		try:
			config = replace(base_config, **{field_name: value}).validate(sim_params.n_links)
			dataset = train_dataset.subset(config.dataset_fraction, derive_seed(seed, index))
			trained = train_delta_action(
				dataset, sim_params, config, delta_ppo_config, tracking_config, derive_seed(seed, index, 1),
			)
			model = trained["model"]
			row = {"axis": axis, "value": float(value), "episodes": len(dataset.episodes)}

			for label, recorded in (("id", train_dataset), ("ood", held_out_dataset)):
				if not recorded.episodes:
					continue
				report = open_loop_eval(recorded, sim_params, "delta_action", model, horizons=horizons, stride=stride)
				for entry in report["rows"]:
					row[f"{label}_{entry['horizon']:g}"] = entry["g_mpjpe"]

			if closed_loop:
				policies = {}
				for motion_index, motion in enumerate(closed_loop["motions"]):
					tuned = asap_finetune(
						closed_loop["pretrained"][motion.name], motion, sim_params, model, closed_loop["weights"],
						tracking_config, closed_loop["ppo_config"], derive_seed(seed, index, 2, motion_index),
						nominal=sim_params,
					)
					policies[motion.name] = tuned["state"].policy
				evaluation = closed_loop_eval(
					policies, real_params, closed_loop["motions"], closed_loop["n_seeds"], seed, tracking_config,
					nominal=sim_params, init_noise=closed_loop["init_noise"], method=f"{axis}_{value:g}",
				)
				row["closed_g_mpjpe"] = overall_row(evaluation)["g_mpjpe"]

			rows.append(row)
			success_count += 1
			logger.info(f"DLAlign: {axis} = {value:g} done")
		except Exception as e:
			failed_count += 1
			logger.info(f"DLAlign: exception in {axis} ablation at {value:g}: {str(e)}")
			log_error("DLAlign Ablation Failed", f"Axis: {axis}\nValue: {value}\n\nError: {str(e)}")

	logger.info(f"DLAlign: {axis} ablation completed - Success: {success_count}, Failed: {failed_count}")
	return {"success": success_count, "failed": failed_count, "rows": rows}
