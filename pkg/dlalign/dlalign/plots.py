# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Static report figures (SVG)
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# deterministic element ids, no timestamp
matplotlib.rcParams["svg.hashsalt"] = "dlalign"
SVG_METADATA = {"Date": None}


def _save(fig, path):
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	fig.tight_layout()
	fig.savefig(path, format="svg", metadata=SVG_METADATA)
	plt.close(fig)
	return path


def plot_open_loop_horizons(path, rows, metric="g_mpjpe"):
	"""
	Open-loop error vs replay horizon, one line per method

	Args:
		path: Output SVG
		rows: Open-loop report rows
		metric: Metric column
	"""
	fig, ax = plt.subplots(figsize=(6, 4))
	methods = sorted({row["method"] for row in rows})
	for method in methods:
		points = sorted((row["horizon"], row[metric]) for row in rows if row["method"] == method)
		ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=method)
	ax.set_xlabel("horizon (s)")
	ax.set_ylabel(f"{metric} (mm)")
	ax.set_title("Open-loop replay error")
	ax.legend()
	ax.grid(True, alpha=0.3)
	return _save(fig, path)


def plot_curves(path, curves, dt, title, ylabel="mean point error (mm)"):
	"""
	Per-step error curves

	Args:
		curves: dict label -> 1-D array
		dt: Seconds per step
	"""
	fig, ax = plt.subplots(figsize=(7, 4))
	for label, values in curves.items():
		values = np.asarray(values, dtype=np.float64)
		ax.plot(np.arange(len(values)) * dt, values, label=label)
	ax.set_xlabel("time (s)")
	ax.set_ylabel(ylabel)
	ax.set_title(title)
	ax.legend()
	ax.grid(True, alpha=0.3)
	return _save(fig, path)


def plot_noise_sweep(path, rows, reference=None, metric="g_mpjpe"):
	"""
	Closed-loop error vs action-noise beta

	Args:
		rows: dicts with "beta" and the metric
		reference: Error without fine-tuning, drawn as a horizontal line
	"""
	fig, ax = plt.subplots(figsize=(6, 4))
	points = sorted((row["beta"], row[metric]) for row in rows)
	ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label="noise fine-tuning")
	if reference is not None:
		ax.axhline(reference, color="gray", linestyle="--", label="no fine-tuning")
	ax.set_xscale("log")
	ax.set_xlabel("beta")
	ax.set_ylabel(f"{metric} (mm)")
	ax.set_title("Fine-tuning with random action noise")
	ax.legend()
	ax.grid(True, alpha=0.3)
	return _save(fig, path)


def plot_ablation(path, rows, axis, series, title):
	"""
	Error vs an ablation axis

	Args:
		rows: dicts with the axis value and one column per series
		axis: Column holding the swept value
		series: Columns to draw
	"""
	fig, ax = plt.subplots(figsize=(6, 4))
	ordered = sorted(rows, key=lambda row: row[axis])
	xs = [row[axis] for row in ordered]
	for name in series:
		ys = [row.get(name, np.nan) for row in ordered]
		ys = [np.nan if y in ("", None) else y for y in ys]
		ax.plot(xs, ys, marker="o", label=name)
	ax.set_xlabel(axis)
	ax.set_ylabel("g_mpjpe (mm)")
	ax.set_title(title)
	ax.legend()
	ax.grid(True, alpha=0.3)
	return _save(fig, path)


def plot_delta_magnitude(path, magnitudes):
	"""Bar chart of mean |delta action| per joint"""
	magnitudes = np.asarray(magnitudes, dtype=np.float64)
	fig, ax = plt.subplots(figsize=(5, 3.5))
	ax.bar([f"joint {i}" for i in range(len(magnitudes))], magnitudes, color="tab:blue")
	ax.set_ylabel("mean |delta a| (rad)")
	ax.set_title("Delta action magnitude per joint")
	return _save(fig, path)
