# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import numpy as np
import pytest

from dlalign.dlalign.config import load_config, loads_config, merge_config
from dlalign.dlalign.exceptions import ValidationError


def test_defaults_load():
	config = load_config()
	assert config.seed == 0
	assert config.method == "all"
	assert config.dynamics_params().n_links == 3
	assert config.ppo_config().total_steps == 200000
	assert config.delta_ppo_config().total_steps == 100000
	assert config.delta_ppo_config().gamma == config.ppo_config().gamma
	assert config.finetune_ppo_config().total_steps == 50000
	assert len(config.sysid_grid().points()) == 81
	assert config["ablate"]["action_norm_weights"] == [0.01, 0.05, 0.1, 0.2, 0.5]
	assert config.reward_weights().vr_3point == 0.0
	assert config["align"]["delta_action"]["action_norm_weight"] == 0.2


def test_default_gap_is_motor_weak():
	config = load_config()
	real = config.real_params()
	nominal = config.dynamics_params()
	np.testing.assert_allclose(real.motor_strength, [0.7, 0.7, 1.0])
	assert real.control_delay_steps == nominal.control_delay_steps + 10


def test_gap_preset_replaces_the_section():
	config = loads_config("gap:\n  preset: identity\n")
	assert config.real_params().to_dict() == config.dynamics_params().to_dict()


def test_gap_fields_override_the_default_preset():
	config = loads_config("gap:\n  kp_ratio: 0.8\n")
	real = config.real_params()
	np.testing.assert_allclose(real.pd_kp, config.dynamics_params().pd_kp * 0.8)
	np.testing.assert_allclose(real.motor_strength, [0.7, 0.7, 1.0])


@pytest.mark.parametrize("text, path", [
	("ppo:\n  gama: 0.9\n", "ppo.gama"),
	("align:\n  delta_action:\n    horizon_s: 1.0\n", "align.delta_action.horizon_s"),
	("dynamics:\n  stiffness: 1.0\n", "dynamics.stiffness"),
	("colour: blue\n", "colour"),
])
def test_unknown_keys_name_their_path(text, path):
	with pytest.raises(ValidationError, match=path.replace(".", r"\.")):
		loads_config(text)


@pytest.mark.parametrize("text", [
	"align:\n  method: magic\n",
	"eval:\n  horizons: [0.5, -1.0]\n",
	"eval:\n  seeds: 0\n",
	"finetune:\n  noise_betas: [-0.1]\n",
	"ppo:\n  gamma: 1.5\n",
	"align:\n  delta_action:\n    mask: 'joints:7'\n",
	"ppo: 3\n",
])
def test_invalid_values_raise(text):
	with pytest.raises(ValidationError):
		loads_config(text)


def test_dump_round_trips():
	config = load_config("smoke", overrides={"seed": 7})
	again = loads_config(config.dump())
	assert again.data == config.data
	assert again.config_hash() == config.config_hash()


def test_hash_ignores_output_dir_and_method():
	config = load_config()
	moved = config.with_overrides(output_dir="elsewhere", method="asap")
	assert moved.output_dir.name == "elsewhere"
	assert moved.config_hash() == config.config_hash()
	assert config.with_overrides(seed=1).config_hash() != config.config_hash()
	assert loads_config("ppo:\n  lr: 0.001\n").config_hash() != config.config_hash()


def test_smoke_preset():
	config = load_config("smoke")
	assert config["motions"]["difficulties"] == ["easy"]
	assert config.ppo_config().total_steps == 10240
	assert config.ppo_config().gamma == 0.99
	assert config.output_dir.as_posix() == "runs/smoke"


def test_missing_config_file(tmp_path):
	with pytest.raises(ValidationError, match="not found"):
		load_config(tmp_path / "absent.yaml")


def test_merge_keeps_base_untouched():
	base = {"a": {"b": 1, "c": 2}}
	merged = merge_config(base, {"a": {"b": 5}})
	assert merged == {"a": {"b": 5, "c": 2}}
	assert base == {"a": {"b": 1, "c": 2}}
