# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

import numpy as np
import pytest

from dlalign.dlalign.plots import (
	plot_ablation,
	plot_curves,
	plot_delta_magnitude,
	plot_noise_sweep,
	plot_open_loop_horizons,
)


OPEN_LOOP_ROWS = [
	{"method": method, "horizon": h, "g_mpjpe": err * h}
	for method, err in (("none", 40.0), ("delta_action", 8.0))
	for h in (0.25, 0.5, 1.0)
]


@pytest.mark.parametrize("draw", [
	lambda path: plot_open_loop_horizons(path, OPEN_LOOP_ROWS),
	lambda path: plot_curves(path, {"none": np.linspace(0, 5, 11), "asap": np.linspace(0, 1, 6)}, 0.01, "curves"),
	lambda path: plot_noise_sweep(path, [{"beta": 0.1, "g_mpjpe": 3.0}, {"beta": 0.01, "g_mpjpe": 2.0}], reference=2.5),
	lambda path: plot_ablation(path, [{"value": 1.0, "id_1": 2.0, "ood_1": ""}, {"value": 0.5, "id_1": 3.0, "ood_1": 4.0}], "value", ["id_1", "ood_1"], "ablation"),
	lambda path: plot_delta_magnitude(path, [0.1, 0.05, 0.0]),
])
def test_figures_are_reproducible_svg(tmp_path, draw):
	first = draw(tmp_path / "a" / "figure.svg")
	second = draw(tmp_path / "b" / "figure.svg")
	assert first.read_bytes().startswith(b"<?xml")
	assert first.read_bytes() == second.read_bytes()
