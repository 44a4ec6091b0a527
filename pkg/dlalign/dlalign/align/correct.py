# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Training-free use of a delta action model at deployment

Both correctors look for y with y + delta(s, y) = a, where a is the base
policy's action, so that the simulator under y + delta reproduces a.
"""

import numpy as np

from dlalign.dlalign.neural import backward, forward
from dlalign.dlalign.align.delta_action import delta_action, model_input
from dlalign.dlalign.utils import throw


def _residual(model, q, qd, base_action, y):
	return y + delta_action(model, q, qd, y) - base_action


def fixed_point_correct(base_action, delta_model, q, qd, iterations, tol=1e-12, patience=3):
	"""
	Iterate y <- a - delta(s, y) from y = a

	Args:
		base_action: Base policy action a
		delta_model: DeltaActionModel
		q, qd: Current state
		iterations: Maximum iteration count K (>= 1)
		tol: Stop once an update moves y by less than tol
		patience: Consecutive residual increases that flag divergence

	Returns:
		dict: action (best iterate), residuals (per-iteration |y_k+1 - y_k|),
		diverged, iterations
	"""
	if iterations < 1:
		throw(f"fixed-point iterations must be at least 1, got {iterations}")

	base_action = np.asarray(base_action, dtype=np.float64)
	y = base_action.copy()
	best, best_error = y, float(np.linalg.norm(_residual(delta_model, q, qd, base_action, y)))
	residuals = []
	growth = 0
	diverged = False

	for _ in range(iterations):
		y_next = base_action - delta_action(delta_model, q, qd, y)
		residual = float(np.linalg.norm(y_next - y))
		if residuals and residual > residuals[-1]:
			growth += 1
		else:
			growth = 0
		residuals.append(residual)
		y = y_next

		error = float(np.linalg.norm(_residual(delta_model, q, qd, base_action, y)))
		if error < best_error:
			best, best_error = y, error
		if growth >= patience or not np.all(np.isfinite(y)):
			diverged = True
			break
		if residual < tol:
			break

	return {"action": best, "residuals": residuals, "diverged": diverged, "iterations": len(residuals)}


def gradient_correct(base_action, delta_model, q, qd, steps, lr):
	"""
	Gradient descent on l(y) = |y + delta(s, y) - a|^2 from y = a

	The Jacobian of the delta network in its action input comes from the
	network's reverse pass; clamped and masked outputs contribute no gradient.

	Returns:
		dict: action, loss (final), losses (per step)
	"""
	if steps < 1:
		throw(f"gradient correction steps must be at least 1, got {steps}")

	base_action = np.asarray(base_action, dtype=np.float64)
	n = base_action.shape[0]
	net = delta_model.policy.mean_net
	y = base_action.copy()
	losses = []

	for _ in range(steps):
		x = model_input(q, qd, y)[0]
		raw = forward(net, x)
		error = _residual(delta_model, q, qd, base_action, y)
		losses.append(float(error @ error))

		passthrough = delta_model.mask.astype(np.float64)
		if delta_model.bound is not None:
			passthrough = passthrough * (np.abs(raw) < delta_model.bound)
		_, input_grad = backward(net, x, error * passthrough)
		grad = 2.0 * (error + input_grad[2 * n :])
		y = y - lr * grad

	error = _residual(delta_model, q, qd, base_action, y)
	loss = float(error @ error)
	losses.append(loss)
	return {"action": y, "loss": loss, "losses": losses}


def make_action_corrector(method, delta_model, iterations=10, steps=20, lr=0.1):
	"""
	Deployment hook for closed-loop evaluation: maps (env, policy action) to
	the corrected action

	Args:
		method: "fixed_point" or "gradient"
	"""
	if method == "fixed_point":
		def correct(env, action):
			return fixed_point_correct(action, delta_model, env.state.q, env.state.qd, iterations)["action"]
	elif method == "gradient":
		def correct(env, action):
			return gradient_correct(action, delta_model, env.state.q, env.state.qd, steps, lr)["action"]
	else:
		throw(f"unknown corrector {method!r}")
	return correct
