# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Run configuration
A YAML document merged over dlalign/config/default.yaml, with typed views for
every module. Unknown keys are rejected by dotted path.
"""

from copy import deepcopy
from dataclasses import fields, replace
from pathlib import Path

import yaml

from dlalign.dlalign.dynamics import DynamicsParams, GapSpec, apply_gap, gap_preset
from dlalign.dlalign.ppo import PpoConfig
from dlalign.dlalign.tracking import RewardWeights, TrackingConfig
from dlalign.dlalign.align.delta_action import DeltaActionConfig
from dlalign.dlalign.align.delta_dynamics import DeltaDynamicsConfig
from dlalign.dlalign.align.sysid import SysIdGrid
from dlalign.dlalign.utils import hash_data, throw


CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
DEFAULT_CONFIG = CONFIG_DIR / "default.yaml"
ALIGN_METHODS = ("asap", "sysid", "delta_dynamics", "all")

# Sections whose keys are checked by the owning dataclass instead of default.yaml
OPEN_SECTIONS = {
	"dynamics": {f.name for f in fields(DynamicsParams)},
	"gap": {"preset"} | {f.name for f in fields(GapSpec)},
	"align.delta_ppo": {f.name for f in fields(PpoConfig)},
}


def _read_yaml(path):
	try:
		with open(path, encoding="utf-8") as f:
			data = yaml.safe_load(f)
	except FileNotFoundError:
		throw(f"config file not found: {path}")
	except yaml.YAMLError as e:
		throw(f"config file {path} is not valid YAML: {e}")
	if data is None:
		return {}
	if not isinstance(data, dict):
		throw(f"config file {path} must hold a mapping at the top level")
	return data


def merge_config(base, override, prefix=""):
	"""
	Recursive merge of override into a copy of base

	Args:
		base: Defaults tree
		override: User tree
		prefix: Dotted path of the current section (for error messages)

	Returns:
		dict: merged tree
	"""
	merged = deepcopy(base)
	for key, value in override.items():
		path = f"{prefix}{key}"
		if path in OPEN_SECTIONS:
			if not isinstance(value, dict):
				throw(f"config section {path} must be a mapping")
			unknown = sorted(set(value) - OPEN_SECTIONS[path])
			if unknown:
				throw(f"Unknown config keys: {', '.join(f'{path}.{k}' for k in unknown)}")
			section = {} if path == "gap" and "preset" in value else dict(merged.get(key) or {})
			section.update(deepcopy(value))
			merged[key] = section
			continue
		if key not in base:
			throw(f"Unknown config key: {path}")
		if isinstance(base[key], dict):
			if not isinstance(value, dict):
				throw(f"config section {path} must be a mapping")
			merged[key] = merge_config(base[key], value, prefix=f"{path}.")
		else:
			merged[key] = deepcopy(value)
	return merged


def resolve_config_path(path):
	"""A file path, or the name of a packaged preset such as "smoke" """
	candidate = Path(path)
	if candidate.exists():
		return candidate
	preset = CONFIG_DIR / f"{path}.yaml"
	if preset.exists():
		return preset
	throw(f"config file not found: {path}")


class RunConfig:
	"""Merged configuration tree plus typed views"""

	def __init__(self, data):
		self.data = data

	def __getitem__(self, key):
		return self.data[key]

	@property
	def seed(self):
		return int(self.data["seed"])

	@property
	def output_dir(self):
		return Path(self.data["io"]["output_dir"])

	@property
	def method(self):
		return self.data["align"]["method"]

	def dynamics_params(self):
		return DynamicsParams.from_dict(self.data["dynamics"])

	def gap(self):
		section = dict(self.data["gap"] or {})
		params = self.dynamics_params()
		preset = section.pop("preset", None)
		base = gap_preset(preset, params.n_links, params.dt).to_dict() if preset else {}
		base.update(section)
		return GapSpec.from_dict(base)

	def real_params(self):
		"""Real-proxy physics: the training simulator with the gap applied"""
		return apply_gap(self.dynamics_params(), self.gap())

	def ppo_config(self):
		return PpoConfig.from_dict(self.data["ppo"])

	def delta_ppo_config(self):
		return replace(self.ppo_config(), **(self.data["align"]["delta_ppo"] or {})).validate()

	def finetune_ppo_config(self):
		return replace(self.ppo_config(), total_steps=int(self.data["finetune"]["total_steps"])).validate()

	def reward_weights(self):
		return RewardWeights.from_dict(self.data["tracking"]["weights"])

	def tracking_config(self):
		section = {k: v for k, v in self.data["tracking"].items() if k != "weights"}
		return TrackingConfig.from_dict(section)

	def delta_action_config(self):
		return DeltaActionConfig.from_dict(self.data["align"]["delta_action"]).validate(self.dynamics_params().n_links)

	def delta_dynamics_config(self):
		return DeltaDynamicsConfig.from_dict(self.data["align"]["delta_dynamics"])

	def sysid_grid(self):
		return SysIdGrid.from_dict(self.data["align"]["sysid"])

	def validate(self):
		"""Build every typed view so errors surface at load time"""
		if self.method not in ALIGN_METHODS:
			throw(f"align.method must be one of {ALIGN_METHODS}, got {self.method!r}")
		self.real_params()
		self.delta_ppo_config()
		self.finetune_ppo_config()
		self.reward_weights()
		self.tracking_config()
		self.delta_action_config()
		self.delta_dynamics_config()
		self.sysid_grid()

		horizons = self.data["eval"]["horizons"]
		if not horizons or any(float(h) <= 0 for h in horizons):
			throw(f"eval.horizons must be positive, got {horizons}")
		if int(self.data["eval"]["seeds"]) < 1:
			throw("eval.seeds must be at least 1")
		if any(float(b) < 0 for b in self.data["finetune"]["noise_betas"]):
			throw("finetune.noise_betas must be non-negative")
		for key in ("episodes", "held_out_episodes"):
			if int(self.data["align"][key]) < 0:
				throw(f"align.{key} must be non-negative")
		return self

	def resolved(self):
		"""
		Every typed view with all defaults filled in
		Echoed into the run manifest so a run is self-describing.
		"""
		return {
			"seed": self.seed,
			"dynamics": self.dynamics_params().to_dict(),
			"real_dynamics": self.real_params().to_dict(),
			"gap": self.gap().to_dict(),
			"motions": deepcopy(self.data["motions"]),
			"ppo": self.ppo_config().to_dict(),
			"tracking": {"weights": self.reward_weights().to_dict(), **self.tracking_config().to_dict()},
			"align": {
				"method": self.method,
				"episodes": self.data["align"]["episodes"],
				"held_out_episodes": self.data["align"]["held_out_episodes"],
				"max_start_phase": self.data["align"]["max_start_phase"],
				"delta_action": self.delta_action_config().to_dict(),
				"delta_ppo": self.delta_ppo_config().to_dict(),
				"delta_dynamics": self.delta_dynamics_config().to_dict(),
				"sysid": self.sysid_grid().to_dict(),
			},
			"finetune": deepcopy(self.data["finetune"]),
			"eval": deepcopy(self.data["eval"]),
			"ablate": deepcopy(self.data["ablate"]),
		}

	def config_hash(self):
		"""
		SHA-256 of the resolved config
		io.output_dir and align.method do not take part: the method only picks
		which stages run, and each method's stages are named apart.
		"""
		resolved = self.resolved()
		resolved["align"].pop("method")
		return hash_data(resolved)

	def with_overrides(self, seed=None, output_dir=None, method=None):
		data = deepcopy(self.data)
		if seed is not None:
			data["seed"] = int(seed)
		if output_dir is not None:
			data["io"]["output_dir"] = str(output_dir)
		if method is not None:
			data["align"]["method"] = method
		return RunConfig(data).validate()

	def dump(self):
		return yaml.safe_dump(self.data, sort_keys=True)


def load_config(path=None, overrides=None):
	"""
	Load a run config

	Args:
		path: YAML file or packaged preset name (None loads the defaults only)
		overrides: Optional dict merged last

	Returns:
		RunConfig (validated)
	"""
	data = _read_yaml(DEFAULT_CONFIG)
	if path is not None:
		data = merge_config(data, _read_yaml(resolve_config_path(path)))
	if overrides:
		data = merge_config(data, overrides)
	return RunConfig(data).validate()


def loads_config(text):
	"""Parse a config from YAML text (merged over the defaults)"""
	try:
		user = yaml.safe_load(text) or {}
	except yaml.YAMLError as e:
		throw(f"config text is not valid YAML: {e}")
	return RunConfig(merge_config(_read_yaml(DEFAULT_CONFIG), user)).validate()
