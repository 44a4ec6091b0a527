# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Pipeline stages
Every stage reads upstream artifacts (digest-verified against the run
manifest), writes its outputs under the run directory and records them.
"""

from contextlib import contextmanager

from dlalign.dlalign import ppo
from dlalign.dlalign.artifacts import (
	load_delta_action,
	load_delta_dynamics,
	load_policy,
	load_train_state,
	read_json,
	save_delta_action,
	save_delta_dynamics,
	save_train_state,
	write_json,
)
from dlalign.dlalign.dynamics import DynamicsParams
from dlalign.dlalign.evalkit import (
	CORRECTORS,
	closed_loop_eval,
	gap_check,
	open_loop_eval,
	write_closed_loop_report,
	write_curves,
	write_open_loop_report,
)
from dlalign.dlalign.formats import read_dataset, read_motion, write_dataset, write_motion
from dlalign.dlalign.manifest import (
	STATUS_COMPLETED,
	STATUS_FAILED,
	acquire_lock,
	check_stage_outputs,
	load_or_create_manifest,
	record_stage,
	release_lock,
	stage_is_current,
	verify_inputs,
)
from dlalign.dlalign.plots import (
	plot_ablation,
	plot_curves,
	plot_delta_magnitude,
	plot_noise_sweep,
	plot_open_loop_horizons,
)
from dlalign.dlalign.reference import MotionSet, default_motion_set, feasibility_clean
from dlalign.dlalign.tasks import delta_action_ablation, noise_sweep, overall_row
from dlalign.dlalign.tracking import (
	actor_obs,
	critic_obs,
	curriculum_hook,
	make_env_factory,
	record_reward_breakdown,
)
from dlalign.dlalign.align.correct import make_action_corrector
from dlalign.dlalign.align.delta_action import delta_magnitude_report, train_delta_action
from dlalign.dlalign.align.delta_dynamics import train_delta_dynamics
from dlalign.dlalign.align.finetune import asap_finetune, delta_dynamics_finetune, sysid_finetune
from dlalign.dlalign.align.rollouts import collect_rollouts
from dlalign.dlalign.align.sysid import sysid_grid_search, write_sysid_rows
from dlalign.dlalign.utils import (
	derive_seed,
	log_error,
	logger,
	now_iso,
	ordered_map,
	set_error_log_dir,
	throw,
	write_csv,
)


FINETUNE_METHODS = ("asap", "sysid", "delta_dynamics")

# stream ids for derive_seed
SEED_PRETRAIN = 101
SEED_COLLECT = 201
SEED_HELD_OUT = 202
SEED_DELTA_ACTION = 301
SEED_DELTA_DYNAMICS = 302
SEED_FINETUNE = 401
SEED_NOISE = 501
SEED_CLOSED_LOOP = 601
SEED_ABLATE = 701


class RunContext:
	"""Config, output directory and manifest of one run"""

	def __init__(self, config, manifest, resume=False):
		self.config = config
		self.out_dir = config.output_dir
		self.manifest = manifest
		self.resume = resume

	def path(self, *parts):
		return self.out_dir.joinpath(*parts)

	@property
	def sim_params(self):
		return self.config.dynamics_params()

	@property
	def real_params(self):
		return self.config.real_params()

	def motion_index_path(self):
		return self.path("motions", "index.json")

	def motion_path(self, name):
		return self.path("motions", f"{name}.mot")

	def actor_path(self, stage, name):
		return self.path(stage, f"{name}.actor.ckpt")

	def critic_path(self, stage, name):
		return self.path(stage, f"{name}.critic.ckpt")

	def dataset_path(self, split):
		return self.path("collect", f"{split}.traj")

	def delta_action_path(self):
		return self.path("delta_action", "model.ckpt")

	def delta_dynamics_path(self):
		return self.path("delta_dynamics", "model.ckpt")

	def sysid_path(self):
		return self.path("sysid", "best.json")

	def model_path(self, method):
		"""Alignment artifact of a corrector or fine-tuning method"""
		paths = {
			"asap": self.delta_action_path,
			"delta_action": self.delta_action_path,
			"delta_dynamics": self.delta_dynamics_path,
			"sysid": self.sysid_path,
		}
		if method not in paths:
			throw(f"no alignment artifact for {method!r}")
		return paths[method]()


@contextmanager
def open_run(config, resume=False):
	"""
	Lock the run directory and open its manifest for the duration of a command
	"""
	out_dir = config.output_dir
	acquire_lock(out_dir)
	try:
		set_error_log_dir(out_dir)
		manifest = load_or_create_manifest(out_dir, config)
		yield RunContext(config, manifest, resume)
	finally:
		set_error_log_dir(None)
		release_lock(out_dir)


def run_stage(ctx, stage, inputs, fn):
	"""
	Run one stage unless its recorded outputs are current

	Args:
		ctx: RunContext
		stage: Stage name in the manifest
		inputs: Upstream paths (verified before fn runs)
		fn: Callable() -> dict with "outputs" (paths) and optional "detail"

	Returns:
		dict: success, skipped, detail
	"""
	if stage_is_current(ctx.manifest, stage, ctx.out_dir, inputs):
		logger.info(f"DLAlign: stage {stage} is current - skipping")
		return {"success": True, "skipped": True, "detail": ctx.manifest["stages"][stage].get("detail", {})}

	if not ctx.resume:
		check_stage_outputs(ctx.manifest, stage, ctx.out_dir)
	verify_inputs(ctx.manifest, inputs, ctx.out_dir)

	started = now_iso()
	logger.info(f"DLAlign: running stage {stage}")
	try:
		result = fn()
	except Exception as e:
		log_error("DLAlign Stage Failed", f"Stage: {stage}\nOutput: {ctx.out_dir}\n\nError: {str(e)}")
		record_stage(ctx.manifest, stage, ctx.out_dir, inputs=inputs, status=STATUS_FAILED, started=started, detail={"error": str(e)})
		raise

	detail = result.get("detail", {})
	record_stage(ctx.manifest, stage, ctx.out_dir, inputs=inputs, outputs=result["outputs"], started=started, detail=detail)
	logger.info(f"DLAlign: stage {stage} completed - {len(result['outputs'])} output file(s)")
	return {"success": True, "skipped": False, "detail": detail}


# Loaders
# Motion files are parsed inside run(), after input verification; stage
# inputs are named from the index alone.

def motion_names(ctx, split=None):
	index = read_json(ctx.motion_index_path())
	return [entry["name"] for entry in index["motions"] if split is None or entry["split"] == split]


def motion_files(ctx):
	return [ctx.motion_index_path()] + [ctx.motion_path(name) for name in motion_names(ctx)]


def load_motion_set(ctx):
	index = read_json(ctx.motion_index_path())
	motions = [read_motion(ctx.motion_path(entry["name"])) for entry in index["motions"]]
	return MotionSet(motions, {entry["name"]: entry["split"] for entry in index["motions"]}).validate()


def pretrain_files(ctx, names):
	return [p for name in names for p in (ctx.actor_path("pretrain", name), ctx.critic_path("pretrain", name))]


def load_pretrained(ctx, motions):
	return {m.name: load_train_state(ctx.actor_path("pretrain", m.name), ctx.critic_path("pretrain", m.name)) for m in motions}


def load_policies(ctx, stage, motions):
	return {m.name: load_policy(ctx.actor_path(stage, m.name)) for m in motions}


def load_sysid_params(ctx):
	return DynamicsParams.from_dict(read_json(ctx.sysid_path())["params"])


def methods_for(method):
	return list(FINETUNE_METHODS) if method == "all" else [method]


def _require_motions(ctx):
	if not ctx.motion_index_path().exists():
		throw("no motions in this run; run gen-motions first")


# Stages

def stage_gen_motions(ctx):
	config = ctx.config

	def run():
		params = ctx.sim_params
		section = config["motions"]
		motion_set = default_motion_set(
			params,
			seed=config.seed,
			per_difficulty=int(section["per_difficulty"]),
			held_out_per_difficulty=int(section["held_out_per_difficulty"]),
			amplitude_scale=float(section["amplitude_scale"]),
			difficulties=tuple(section["difficulties"]),
			duration=section["duration"],
		)
		outputs = []
		entries = []
		for motion in motion_set.motions:
			report = feasibility_clean(motion, params)
			if not report["accepted"]:
				throw(
					f"motion {motion.name} is infeasible: peak torque {[round(float(t), 2) for t in report['peak_torque']]} N m "
					f"at frame {report['worst_frame']} exceeds the limit"
				)
			write_motion(ctx.motion_path(motion.name), motion)
			outputs.append(ctx.motion_path(motion.name))
			entries.append({
				"name": motion.name,
				"difficulty": motion.difficulty,
				"split": motion_set.splits[motion.name],
				"peak_torque": report["peak_torque"],
			})
		write_json(ctx.motion_index_path(), {"motions": entries})
		outputs.append(ctx.motion_index_path())
		return {"outputs": outputs, "detail": {"motions": len(entries)}}

	return run_stage(ctx, "gen_motions", [], run)


def stage_pretrain(ctx):
	_require_motions(ctx)
	config = ctx.config
	sim_params = ctx.sim_params
	weights = config.reward_weights()
	tracking_config = config.tracking_config()
	ppo_config = config.ppo_config()

	def train_one(item):
		index, motion = item
		factory, envs = make_env_factory(motion, sim_params, weights, tracking_config, nominal=sim_params)
		logger.info(f"DLAlign: pre-training {motion.name}")
		result = ppo.train(
			factory, actor_obs, critic_obs, ppo_config, derive_seed(config.seed, SEED_PRETRAIN, index),
			on_progress=curriculum_hook(envs, tracking_config.curriculum),
			curves_path=ctx.path("pretrain", f"{motion.name}.curves.csv"),
		)
		save_train_state(
			ctx.actor_path("pretrain", motion.name), ctx.critic_path("pretrain", motion.name), result["state"],
			metadata={"motion": motion.name, "stage": "pretrain"},
		)
		record_reward_breakdown(
			result["state"].policy, motion, sim_params, weights, tracking_config,
			derive_seed(config.seed, SEED_PRETRAIN, index, 1), ctx.path("pretrain", f"{motion.name}.rewards.csv"),
		)
		return result

	def run():
		motion_set = load_motion_set(ctx)
		results = ordered_map(train_one, list(enumerate(motion_set.motions)))
		diverged = [m.name for m, r in zip(motion_set.motions, results) if r["diverged"]]
		outputs = pretrain_files(ctx, [m.name for m in motion_set.motions])
		outputs += [ctx.path("pretrain", f"{m.name}.curves.csv") for m in motion_set.motions]
		outputs += [ctx.path("pretrain", f"{m.name}.rewards.csv") for m in motion_set.motions]
		return {"outputs": outputs, "detail": {"motions": len(results), "diverged": diverged}}

	return run_stage(ctx, "pretrain", motion_files(ctx), run)


def stage_collect(ctx):
	_require_motions(ctx)
	config = ctx.config
	align = config["align"]

	def run():
		motion_set = load_motion_set(ctx)
		real = ctx.real_params
		tracking_config = config.tracking_config()
		details = {}
		outputs = []
		for split, count, stream in (
			("train", int(align["episodes"]), SEED_COLLECT),
			("held_out", int(align["held_out_episodes"]), SEED_HELD_OUT),
		):
			motions = motion_set.split(split)
			policies = load_policies(ctx, "pretrain", motions)
			dataset = collect_rollouts(
				policies, real, motions, count if motions else 0, derive_seed(config.seed, stream),
				tracking_config, max_start_phase=float(align["max_start_phase"]),
			)
			write_dataset(ctx.dataset_path(split), dataset)
			outputs.append(ctx.dataset_path(split))
			details[split] = {"episodes": len(dataset.episodes), "failed": sum(e.failed for e in dataset.episodes)}
		return {"outputs": outputs, "detail": details}

	return run_stage(ctx, "collect", motion_files(ctx) + pretrain_files(ctx, motion_names(ctx)), run)


def stage_train_delta(ctx):
	config = ctx.config
	delta_config = config.delta_action_config()

	def run():
		dataset = read_dataset(ctx.dataset_path("train"))
		dataset = dataset.subset(delta_config.dataset_fraction, derive_seed(config.seed, SEED_DELTA_ACTION, 1))
		result = train_delta_action(
			dataset, ctx.sim_params, delta_config, config.delta_ppo_config(), config.tracking_config(),
			derive_seed(config.seed, SEED_DELTA_ACTION), curves_path=ctx.path("delta_action", "curves.csv"),
		)
		save_delta_action(ctx.delta_action_path(), result["model"], metadata={"episodes": len(dataset.episodes)})
		magnitude = delta_magnitude_report(result["model"], dataset)
		magnitude_path = ctx.path("delta_action", "magnitude.csv")
		write_csv(
			magnitude_path,
			[{"joint": i, "mean_abs_delta": float(v)} for i, v in enumerate(magnitude)],
			["joint", "mean_abs_delta"],
		)
		return {
			"outputs": [ctx.delta_action_path(), ctx.path("delta_action", "curves.csv"), magnitude_path],
			"detail": {"episodes": len(dataset.episodes), "diverged": result["diverged"], "magnitude": magnitude.tolist()},
		}

	return run_stage(ctx, "train_delta", [ctx.dataset_path("train")], run)


def stage_train_delta_dyn(ctx):
	config = ctx.config
	dyn_config = config.delta_dynamics_config()

	def run():
		dataset = read_dataset(ctx.dataset_path("train"))
		result = train_delta_dynamics(
			dataset, ctx.sim_params, dyn_config, derive_seed(config.seed, SEED_DELTA_DYNAMICS),
			curves_path=ctx.path("delta_dynamics", "curves.csv"),
		)
		save_delta_dynamics(ctx.delta_dynamics_path(), result["model"], metadata={"one_step_mse": result["one_step_mse"]})
		return {
			"outputs": [ctx.delta_dynamics_path(), ctx.path("delta_dynamics", "curves.csv")],
			"detail": {
				"one_step_mse": result["one_step_mse"],
				"below_threshold": result["one_step_mse"] < dyn_config.loss_threshold,
				"diverged": result["diverged"],
			},
		}

	return run_stage(ctx, "train_delta_dyn", [ctx.dataset_path("train")], run)


def stage_sysid(ctx):
	config = ctx.config

	def run():
		dataset = read_dataset(ctx.dataset_path("train"))
		result = sysid_grid_search(dataset, ctx.sim_params, config.sysid_grid())
		grid_path = ctx.path("sysid", "grid.csv")
		write_sysid_rows(grid_path, result)
		write_json(ctx.sysid_path(), {
			"point": result.best,
			"index": result.best_index,
			"error": result.best_error,
			"params": result.best_params.to_dict(),
		})
		return {"outputs": [grid_path, ctx.sysid_path()], "detail": {"best": result.best, "error": result.best_error}}

	return run_stage(ctx, "sysid", [ctx.dataset_path("train")], run)


def stage_align(ctx, method):
	"""Train whatever the chosen alignment method needs"""
	results = {}
	for name in methods_for(method):
		if name == "asap":
			results["train_delta"] = stage_train_delta(ctx)
		elif name == "delta_dynamics":
			results["train_delta_dyn"] = stage_train_delta_dyn(ctx)
		elif name == "sysid":
			results["sysid"] = stage_sysid(ctx)
	return results


def stage_finetune(ctx, method):
	_require_motions(ctx)
	config = ctx.config
	results = {}

	for name in methods_for(method):
		if name not in FINETUNE_METHODS:
			throw(f"unknown fine-tuning method {name!r}; expected one of {FINETUNE_METHODS}")
		stage = f"finetune_{name}"
		model_input = ctx.model_path(name)

		def run(name=name, stage=stage):
			motion_set = load_motion_set(ctx)
			sim_params = ctx.sim_params
			weights = config.reward_weights()
			tracking_config = config.tracking_config()
			ppo_config = config.finetune_ppo_config()
			pretrained = load_pretrained(ctx, motion_set.motions)
			if name == "asap":
				model = load_delta_action(ctx.delta_action_path())
			elif name == "delta_dynamics":
				model = load_delta_dynamics(ctx.delta_dynamics_path())
			else:
				model = load_sysid_params(ctx)

			def tune(item):
				index, motion = item
				seed = derive_seed(config.seed, SEED_FINETUNE, FINETUNE_METHODS.index(name), index)
				kwargs = {"nominal": sim_params, "curves_path": ctx.path(stage, f"{motion.name}.curves.csv")}
				if name == "asap":
					result = asap_finetune(pretrained[motion.name], motion, sim_params, model, weights, tracking_config, ppo_config, seed, **kwargs)
				elif name == "delta_dynamics":
					result = delta_dynamics_finetune(pretrained[motion.name], motion, sim_params, model, weights, tracking_config, ppo_config, seed, **kwargs)
				else:
					result = sysid_finetune(pretrained[motion.name], motion, model, weights, tracking_config, ppo_config, seed, **kwargs)
				save_train_state(
					ctx.actor_path(stage, motion.name), ctx.critic_path(stage, motion.name), result["state"],
					metadata={"motion": motion.name, "stage": stage},
				)
				return result

			tuned = ordered_map(tune, list(enumerate(motion_set.motions)))
			outputs = [
				p for m in motion_set.motions
				for p in (ctx.actor_path(stage, m.name), ctx.critic_path(stage, m.name), ctx.path(stage, f"{m.name}.curves.csv"))
			]
			diverged = [m.name for m, r in zip(motion_set.motions, tuned) if r["diverged"]]
			return {"outputs": outputs, "detail": {"motions": len(tuned), "diverged": diverged}}

		results[stage] = run_stage(ctx, stage, motion_files(ctx) + pretrain_files(ctx, motion_names(ctx)) + [model_input], run)
	return results


def stage_noise_finetune(ctx):
	_require_motions(ctx)
	config = ctx.config
	eval_section = config["eval"]

	def run():
		motion_set = load_motion_set(ctx)
		sim_params = ctx.sim_params
		real_params = ctx.real_params
		tracking_config = config.tracking_config()
		settings = {
			"n_seeds": int(eval_section["seeds"]),
			"init_noise": float(eval_section["init_noise"]),
			"seed": derive_seed(config.seed, SEED_CLOSED_LOOP),
		}
		pretrained = load_pretrained(ctx, motion_set.motions)
		vanilla = closed_loop_eval(
			{name: state.policy for name, state in pretrained.items()}, real_params, motion_set.motions,
			settings["n_seeds"], settings["seed"], tracking_config, nominal=sim_params,
			init_noise=settings["init_noise"], method="vanilla",
		)
		reference = overall_row(vanilla)["g_mpjpe"]
		sweep = noise_sweep(
			pretrained, motion_set.motions, sim_params, real_params, list(config["finetune"]["noise_betas"]),
			config.reward_weights(), tracking_config, config.finetune_ppo_config(),
			derive_seed(config.seed, SEED_NOISE), settings, ctx.path("noise"),
		)
		if not sweep["rows"]:
			throw("every noise fine-tuning run failed")
		rows = sweep["rows"]
		sweep_path = ctx.path("noise", "sweep.csv")
		write_csv(
			sweep_path, rows, ["beta", "success", "g_mpjpe", "mpjpe", "acc", "vel"],
			header_comment=f"closed-loop in the real proxy; no fine-tuning g_mpjpe = {reference!r} mm",
		)
		plot_path = plot_noise_sweep(ctx.path("noise", "noise_sweep.svg"), rows, reference=reference)
		return {
			"outputs": [sweep_path, plot_path, *sweep["outputs"]],
			"detail": {"success": sweep["success"], "failed": sweep["failed"], "reference": reference},
		}

	return run_stage(ctx, "noise_finetune", motion_files(ctx) + pretrain_files(ctx, motion_names(ctx)), run)


def available_correctors(ctx):
	"""Correctors whose models are recorded in the manifest"""
	stages = {
		"delta_action": "train_delta",
		"delta_dynamics": "train_delta_dyn",
		"sysid": "sysid",
	}
	found = ["none"]
	for corrector in CORRECTORS[1:]:
		entry = ctx.manifest["stages"].get(stages[corrector])
		if entry and entry.get("status") == STATUS_COMPLETED:
			found.append(corrector)
	return found


def stage_eval_open(ctx):
	config = ctx.config
	eval_section = config["eval"]
	correctors = available_correctors(ctx)
	inputs = [ctx.dataset_path("train"), ctx.dataset_path("held_out")]
	inputs += [ctx.model_path(corrector) for corrector in correctors[1:]]

	def run():
		sim_params = ctx.sim_params
		horizons = tuple(float(h) for h in eval_section["horizons"])
		stride = float(eval_section["stride"])
		models = {"none": None, "sysid": None}
		if "delta_action" in correctors:
			models["delta_action"] = load_delta_action(ctx.delta_action_path())
		if "delta_dynamics" in correctors:
			models["delta_dynamics"] = load_delta_dynamics(ctx.delta_dynamics_path())
		replay_params = load_sysid_params(ctx) if "sysid" in correctors else None

		rows = []
		curves = {}
		for split in ("train", "held_out"):
			dataset = read_dataset(ctx.dataset_path(split))
			if not dataset.episodes:
				continue
			for corrector in correctors:
				report = open_loop_eval(
					dataset, sim_params, corrector, models.get(corrector), replay_params=replay_params,
					horizons=horizons, stride=stride, split=split,
				)
				rows.extend(report["rows"])
				curves[f"{corrector}_{split}"] = report["curve"]
		if not rows:
			throw("no recorded episodes to replay; run collect first")
		# held-out motions when recorded, else the training motions
		main_split = rows[-1]["split"]
		main_rows = [r for r in rows if r["split"] == main_split]

		dt = sim_params.control_dt
		eval_dir = ctx.path("eval")
		report_path = eval_dir / "open_loop.csv"
		curves_path = eval_dir / "open_loop_curves.csv"
		write_open_loop_report(report_path, rows, dt)
		write_curves(curves_path, curves, dt)
		outputs = [
			report_path,
			curves_path,
			plot_open_loop_horizons(eval_dir / "open_loop_horizons.svg", main_rows),
			plot_curves(eval_dir / "open_loop_curves.svg", curves, dt, "Open-loop replay error per step"),
		]

		summary = {}
		if "delta_action" in correctors:
			summary = gap_check(main_rows, float(eval_section["gap_noise_floor"]))
			logger.info(f"DLAlign: {summary['message']}")
			magnitude = delta_magnitude_report(models["delta_action"], read_dataset(ctx.dataset_path("train")))
			outputs.append(plot_delta_magnitude(eval_dir / "delta_magnitude.svg", magnitude))
		summary_path = eval_dir / "open_loop_summary.json"
		write_json(summary_path, {"correctors": correctors, "gap": summary})
		outputs.append(summary_path)
		return {"outputs": outputs, "detail": {"correctors": correctors, "gap": summary}}

	return run_stage(ctx, "eval_open", inputs, run)


def stage_eval_closed(ctx):
	_require_motions(ctx)
	config = ctx.config
	eval_section = config["eval"]
	names = motion_names(ctx)
	finetuned = [
		m for m in FINETUNE_METHODS
		if ctx.manifest["stages"].get(f"finetune_{m}", {}).get("status") == STATUS_COMPLETED
	]
	correct = ctx.manifest["stages"].get("train_delta", {}).get("status") == STATUS_COMPLETED

	inputs = motion_files(ctx) + pretrain_files(ctx, names)
	for method in finetuned:
		inputs += [ctx.actor_path(f"finetune_{method}", name) for name in names]
	if correct:
		inputs.append(ctx.delta_action_path())

	def run():
		sim_params = ctx.sim_params
		real_params = ctx.real_params
		tracking_config = config.tracking_config()
		n_seeds = int(eval_section["seeds"])
		seed = derive_seed(config.seed, SEED_CLOSED_LOOP)
		init_noise = float(eval_section["init_noise"])
		motions = load_motion_set(ctx).motions
		pretrained = load_policies(ctx, "pretrain", motions)

		def evaluate(method, policies, env_params, action_fn=None):
			return closed_loop_eval(
				policies, env_params, motions, n_seeds, seed, tracking_config,
				nominal=sim_params, action_fn=action_fn, init_noise=init_noise, method=method,
			)

		results = {
			"oracle": evaluate("oracle", pretrained, sim_params),
			"vanilla": evaluate("vanilla", pretrained, real_params),
		}
		for method in finetuned:
			results[method] = evaluate(method, load_policies(ctx, f"finetune_{method}", motions), real_params)
		if correct:
			model = load_delta_action(ctx.delta_action_path())
			results["fixed_point"] = evaluate(
				"fixed_point", pretrained, real_params,
				make_action_corrector("fixed_point", model, iterations=int(eval_section["fixed_point_iterations"])),
			)
			results["gradient"] = evaluate(
				"gradient", pretrained, real_params,
				make_action_corrector(
					"gradient", model, steps=int(eval_section["gradient_steps"]), lr=float(eval_section["gradient_lr"]),
				),
			)

		dt = sim_params.control_dt
		eval_dir = ctx.path("eval")
		rows = [row for result in results.values() for row in result["rows"]]
		curves = {method: result["curve"] for method, result in results.items()}
		report_path = eval_dir / "closed_loop.csv"
		curves_path = eval_dir / "closed_loop_curves.csv"
		write_closed_loop_report(report_path, rows, dt)
		write_curves(curves_path, curves, dt)
		plot_path = plot_curves(eval_dir / "closed_loop_curves.svg", curves, dt, "Closed-loop tracking error per step")

		overall = {method: overall_row(result) for method, result in results.items()}
		summary_path = eval_dir / "closed_loop_summary.json"
		write_json(summary_path, overall)
		for method, row in overall.items():
			logger.info(f"DLAlign: closed-loop {method} - success {row['success']:.2f}, g_mpjpe {row['g_mpjpe']:.2f} mm")
		return {"outputs": [report_path, curves_path, plot_path, summary_path], "detail": {"methods": list(results)}}

	return run_stage(ctx, "eval_closed", inputs, run)


def stage_ablate(ctx):
	_require_motions(ctx)
	config = ctx.config
	section = config["ablate"]
	eval_section = config["eval"]

	def run():
		sim_params = ctx.sim_params
		train_dataset = read_dataset(ctx.dataset_path("train"))
		held_out_dataset = read_dataset(ctx.dataset_path("held_out"))
		horizons = tuple(float(h) for h in eval_section["horizons"])
		closed_loop = None
		if section["closed_loop"]:
			motion_set = load_motion_set(ctx)
			# first training motion of every difficulty tier
			grouped = motion_set.by_difficulty(motion_set.split("train"))
			motions = [group[0] for group in grouped.values() if group]
			closed_loop = {
				"pretrained": load_pretrained(ctx, motions),
				"motions": motions,
				"weights": config.reward_weights(),
				"ppo_config": config.finetune_ppo_config(),
				"n_seeds": int(eval_section["seeds"]),
				"init_noise": float(eval_section["init_noise"]),
			}

		sweeps = {
			"dataset_size": section["dataset_fractions"],
			"horizon": section["horizons"],
			"action_norm": section["action_norm_weights"],
		}
		outputs = []
		detail = {}
		for axis_index, (axis, values) in enumerate(sweeps.items()):
			result = delta_action_ablation(
				axis, [float(v) for v in values], train_dataset, held_out_dataset, sim_params, ctx.real_params,
				config.delta_action_config(), config.delta_ppo_config(), config.tracking_config(),
				horizons, float(eval_section["stride"]), derive_seed(config.seed, SEED_ABLATE, axis_index),
				closed_loop=closed_loop,
			)
			columns = ["axis", "value", "episodes"]
			columns += [f"{label}_{h:g}" for label in ("id", "ood") for h in horizons]
			columns += ["closed_g_mpjpe"]
			csv_path = ctx.path("ablate", f"{axis}.csv")
			write_csv(csv_path, result["rows"], columns, header_comment="open-loop g_mpjpe in mm per evaluation horizon")
			outputs.append(csv_path)
			if result["rows"]:
				series = [c for c in columns[3:] if any(c in row for row in result["rows"])]
				outputs.append(plot_ablation(ctx.path("ablate", f"{axis}.svg"), result["rows"], "value", series, f"{axis} ablation"))
			detail[axis] = {"success": result["success"], "failed": result["failed"]}
		return {"outputs": outputs, "detail": detail}

	inputs = [ctx.dataset_path("train"), ctx.dataset_path("held_out")] + motion_files(ctx)
	if section["closed_loop"]:
		inputs += pretrain_files(ctx, motion_names(ctx, "train"))
	return run_stage(ctx, "ablate", inputs, run)


# Commands (one locked run each)

def cmd_gen_motions(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_gen_motions(ctx)


def cmd_pretrain(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_pretrain(ctx)


def cmd_collect(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_collect(ctx)


def cmd_train_delta(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_train_delta(ctx)


def cmd_train_delta_dyn(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_train_delta_dyn(ctx)


def cmd_sysid(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_sysid(ctx)


def cmd_finetune(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_finetune(ctx, config.method)


def cmd_noise_finetune(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_noise_finetune(ctx)


def cmd_eval(config, which="all", resume=False):
	"""
	Evaluation reports

	Args:
		which: "open", "closed" or "all"
	"""
	if which not in ("open", "closed", "all"):
		throw(f"eval mode must be open, closed or all, got {which!r}")
	with open_run(config, resume) as ctx:
		results = {}
		if which in ("open", "all"):
			results["eval_open"] = stage_eval_open(ctx)
		if which in ("closed", "all"):
			results["eval_closed"] = stage_eval_closed(ctx)
		return results


def cmd_ablate(config, resume=False):
	with open_run(config, resume) as ctx:
		return stage_ablate(ctx)


def cmd_full_pipeline(config, resume=False):
	"""
	gen-motions -> pretrain -> collect -> align -> finetune -> eval
	Completed stages are skipped, so a failed run resumes where it stopped.
	"""
	with open_run(config, resume) as ctx:
		results = {
			"gen_motions": stage_gen_motions(ctx),
			"pretrain": stage_pretrain(ctx),
			"collect": stage_collect(ctx),
		}
		results.update(stage_align(ctx, config.method))
		results.update(stage_finetune(ctx, config.method))
		results["eval_open"] = stage_eval_open(ctx)
		results["eval_closed"] = stage_eval_closed(ctx)
		return results
