# Copyright (c) 2025, DLAlign contributors
# For license information, please see license.txt

"""
Planar N-link articulated chain with PD actuation
Fixed base at the origin, relative joint angles, q = 0 hangs straight down.
A perturbed copy of DynamicsParams plays the role of real-world physics.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from dlalign.dlalign.exceptions import NumericFaultError
from dlalign.dlalign.utils import check_finite, hash_data, throw


PER_JOINT_FIELDS = (
	"link_mass",
	"link_length",
	"com_offset",
	"inertia_scale",
	"joint_damping",
	"pd_kp",
	"pd_kd",
	"torque_limit",
	"motor_strength",
)


@dataclass
class DynamicsParams:
	"""Full parameterization of the chain simulator"""

	n_links: int = 3
	link_mass: np.ndarray = field(default_factory=lambda: np.array([1.2, 1.0, 0.8]))
	link_length: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 0.5]))
	com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
	inertia_scale: np.ndarray = field(default_factory=lambda: np.ones(3))
	joint_damping: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.3, 0.2]))
	gravity: float = 9.81
	pd_kp: np.ndarray = field(default_factory=lambda: np.array([120.0, 80.0, 40.0]))
	pd_kd: np.ndarray = field(default_factory=lambda: np.array([12.0, 6.0, 2.0]))
	torque_limit: np.ndarray = field(default_factory=lambda: np.array([80.0, 50.0, 25.0]))
	motor_strength: np.ndarray = field(default_factory=lambda: np.ones(3))
	control_delay_steps: int = 20
	dt: float = 1e-3
	decimation: int = 10

	def __post_init__(self):
		for name in PER_JOINT_FIELDS:
			value = np.asarray(getattr(self, name), dtype=np.float64)
			if value.ndim == 0:
				value = np.full(self.n_links, float(value))
			setattr(self, name, value)
		self.n_links = int(self.n_links)
		self.control_delay_steps = int(self.control_delay_steps)
		self.decimation = int(self.decimation)
		self.gravity = float(self.gravity)
		self.dt = float(self.dt)

	@property
	def control_dt(self):
		return self.dt * self.decimation

	def validate(self):
		"""Raise ValidationError when an invariant is violated"""
		if not 2 <= self.n_links <= 4:
			throw(f"n_links must be in [2, 4], got {self.n_links}")

		for name in PER_JOINT_FIELDS:
			value = getattr(self, name)
			if value.shape != (self.n_links,):
				throw(f"{name} must have {self.n_links} entries, got shape {value.shape}")
			if not np.all(np.isfinite(value)):
				throw(f"{name} must be finite")

		if np.any(self.link_mass <= 0) or np.any(self.link_length <= 0):
			throw("link masses and lengths must be strictly positive")
		if np.any(np.abs(self.com_offset) >= self.link_length / 2):
			throw(f"|com_offset| must stay below half the link length, got {self.com_offset.tolist()}")
		if np.any(self.torque_limit < 0):
			throw("torque_limit must be non-negative")
		if np.any(self.motor_strength < 0):
			throw("motor_strength must be non-negative")
		if np.any(self.inertia_scale < 0) or np.any(self.joint_damping < 0):
			throw("inertia_scale and joint_damping must be non-negative")
		if self.control_delay_steps < 0:
			throw("control_delay_steps must be non-negative")
		if not self.dt > 0 or self.decimation < 1:
			throw("dt must be positive and decimation at least 1")
		return self

	def to_dict(self):
		data = {}
		for f in fields(self):
			value = getattr(self, f.name)
			data[f.name] = value.tolist() if isinstance(value, np.ndarray) else value
		return data

	@classmethod
	def from_dict(cls, data):
		"""
		Build params from a config section
		Scalars given for per-joint fields are broadcast to n_links

		Args:
			data: dict keyed by field name

		Returns:
			DynamicsParams (validated)
		"""
		known = {f.name for f in fields(cls)}
		unknown = sorted(set(data) - known)
		if unknown:
			throw(f"Unknown dynamics keys: {', '.join(unknown)}")

		n_links = int(data.get("n_links", cls.n_links))
		defaults = cls()
		kwargs = {"n_links": n_links}
		for name in known - {"n_links"}:
			if name in data:
				kwargs[name] = data[name]
			elif name in PER_JOINT_FIELDS:
				base = getattr(defaults, name)
				kwargs[name] = np.resize(base, n_links) if n_links != defaults.n_links else base
		return cls(**kwargs).validate()

	def params_hash(self):
		return hash_data(self.to_dict())[:16]


@dataclass
class SimState:
	"""Joint positions/velocities, time and the delayed-setpoint FIFO"""

	q: np.ndarray
	qd: np.ndarray
	t: float = 0.0
	delay_buffer: np.ndarray = None

	def copy(self):
		return SimState(self.q.copy(), self.qd.copy(), self.t, self.delay_buffer.copy())


@dataclass
class GapSpec:
	"""Mismatch between the training simulator and the real-proxy physics"""

	mass_ratio: float = 1.0
	com_shift: float = 0.0
	kp_ratio: object = 1.0
	kd_ratio: object = 1.0
	motor_strength_ratio: object = 1.0
	extra_delay_steps: int = 0
	extra_damping: float = 0.0

	def validate(self):
		ratios = [self.mass_ratio, self.kp_ratio, self.kd_ratio, self.motor_strength_ratio]
		for ratio in ratios:
			if np.any(np.asarray(ratio, dtype=np.float64) <= 0):
				throw(f"GapSpec ratios must be positive, got {self.to_dict()}")
		return self

	def to_dict(self):
		data = {}
		for f in fields(self):
			value = getattr(self, f.name)
			data[f.name] = np.asarray(value).tolist() if isinstance(value, (list, tuple, np.ndarray)) else value
		return data

	@classmethod
	def from_dict(cls, data):
		known = {f.name for f in fields(cls)}
		unknown = sorted(set(data) - known - {"preset"})
		if unknown:
			throw(f"Unknown gap keys: {', '.join(unknown)}")
		kwargs = {key: value for key, value in data.items() if key in known}
		return cls(**kwargs).validate()


def gap_preset(name, n_links=3, dt=1e-3):
	"""
	Named gap presets

	Args:
		name: "identity" or "motor-weak"
		n_links: Chain length
		dt: Physics step (converts the extra delay from ms)

	Returns:
		GapSpec
	"""
	if name == "identity":
		return GapSpec()

	if name == "motor-weak":
		strength = np.ones(n_links)
		strength[:2] = 0.7
		return GapSpec(
			kp_ratio=0.9,
			motor_strength_ratio=strength,
			extra_delay_steps=int(round(0.010 / dt)),
		)

	throw(f"Unknown gap preset: {name}")


def apply_gap(params, gap):
	"""
	Perturbed copy of params; the input is left untouched

	Args:
		params: Nominal DynamicsParams
		gap: GapSpec

	Returns:
		DynamicsParams
	"""
	gap.validate()
	n = params.n_links
	perturbed = replace(
		params,
		link_mass=params.link_mass * float(gap.mass_ratio),
		com_offset=params.com_offset + float(gap.com_shift),
		pd_kp=params.pd_kp * _per_joint(gap.kp_ratio, n),
		pd_kd=params.pd_kd * _per_joint(gap.kd_ratio, n),
		motor_strength=params.motor_strength * _per_joint(gap.motor_strength_ratio, n),
		control_delay_steps=params.control_delay_steps + int(gap.extra_delay_steps),
		joint_damping=params.joint_damping + float(gap.extra_damping),
	)
	return perturbed.validate()


def _per_joint(value, n):
	value = np.asarray(value, dtype=np.float64)
	if value.ndim == 0:
		return np.full(n, float(value))
	if value.shape != (n,):
		throw(f"per-joint gap entry must have {n} values, got {value.tolist()}")
	return value


def com_distance(params):
	"""Distance from each link's inboard joint to its COM"""
	return params.link_length / 2 + params.com_offset


def link_inertia(params):
	"""Rotational inertia of each link about its COM"""
	return params.inertia_scale * params.link_mass * params.link_length ** 2 / 12.0


def forward_kinematics(q, params):
	"""
	Body points of the chain
	Order: joints p_0..p_n (p_0 is the fixed base, p_n the end effector),
	then the link COMs c_0..c_{n-1}. Leading batch axes of q are kept.

	Args:
		q: Joint angles (..., n)
		params: DynamicsParams

	Returns:
		np.ndarray: (..., 2n+1, 2) positions in meters
	"""
	q = np.asarray(q, dtype=np.float64)
	theta = np.cumsum(q, axis=-1)
	direction = np.stack([np.sin(theta), -np.cos(theta)], axis=-1)

	segments = params.link_length[:, None] * direction
	joints = np.cumsum(segments, axis=-2)
	base = np.zeros(joints.shape[:-2] + (1, 2))
	joints = np.concatenate([base, joints], axis=-2)

	coms = joints[..., :-1, :] + com_distance(params)[:, None] * direction
	return np.concatenate([joints, coms], axis=-2)


def n_body_points(n_links):
	return 2 * n_links + 1


def end_effector_index(n_links):
	return n_links


def root_index():
	"""Outboard joint of the first moving link"""
	return 1


def _manipulator_terms(q, qd, params):
	"""Mass matrix, velocity-product bias and gravity vector"""
	n = params.n_links
	theta = np.cumsum(q)
	omega = np.cumsum(qd)
	direction = np.column_stack([np.sin(theta), -np.cos(theta)])
	normal = np.column_stack([np.cos(theta), np.sin(theta)])

	r = com_distance(params)
	inertia = link_inertia(params)
	lengths = params.link_length

	M = np.zeros((n, n))
	bias = np.zeros(n)
	grav = np.zeros(n)
	for i in range(n):
		lever = np.vstack([lengths[:i, None] * normal[:i], r[i] * normal[i]])
		jac = np.zeros((2, n))
		jac[:, : i + 1] = np.cumsum(lever[::-1], axis=0)[::-1].T

		# acceleration of COM i that does not depend on qdd
		h = -(lengths[:i] * omega[:i] ** 2) @ direction[:i] - r[i] * omega[i] ** 2 * direction[i]

		m = params.link_mass[i]
		M += m * jac.T @ jac
		M[: i + 1, : i + 1] += inertia[i]
		bias += m * jac.T @ h
		grav += m * params.gravity * jac[1]

	return M, bias, grav


def inverse_dynamics(q, qd, qdd, params):
	"""
	Joint torques that realize qdd at (q, qd), joint damping included

	Args:
		q, qd, qdd: Joint positions, velocities, accelerations (n,)
		params: DynamicsParams

	Returns:
		np.ndarray: (n,) torques
	"""
	M, bias, grav = _manipulator_terms(q, qd, params)
	return M @ qdd + bias + grav + params.joint_damping * qd


def initial_state(q, qd, params, prime=None, t=0.0):
	"""
	SimState with the delay buffer filled by one setpoint

	Args:
		q, qd: Joint positions/velocities
		params: DynamicsParams
		prime: Setpoint filling the delay buffer (defaults to q)
		t: Start time

	Returns:
		SimState
	"""
	q = np.array(q, dtype=np.float64)
	qd = np.array(qd, dtype=np.float64)
	prime = q if prime is None else np.asarray(prime, dtype=np.float64)
	buffer = np.tile(prime, (params.control_delay_steps, 1))
	return SimState(q, qd, float(t), buffer)


def prime_delay_buffer(prime, actions, params):
	"""
	Delay buffer after a sequence of control actions
	Every control action occupies `decimation` physics steps of the FIFO.

	Args:
		prime: Setpoint the buffer was filled with at reset
		actions: Control actions applied since reset, oldest first (m, n)
		params: DynamicsParams

	Returns:
		np.ndarray: (control_delay_steps, n)
	"""
	k = params.control_delay_steps
	prime = np.asarray(prime, dtype=np.float64)
	if k == 0:
		return np.zeros((0, params.n_links))

	needed = int(np.ceil(k / params.decimation))
	recent = np.asarray(actions, dtype=np.float64).reshape(-1, params.n_links)[-needed:]
	sequence = np.repeat(recent, params.decimation, axis=0)
	if len(sequence) < k:
		sequence = np.vstack([np.tile(prime, (k - len(sequence), 1)), sequence])
	return sequence[-k:].copy()


def _advance(state, action, params):
	n = params.n_links
	q_target = np.asarray(action, dtype=np.float64)
	if q_target.shape != (n,) or state.q.shape != (n,) or state.qd.shape != (n,):
		throw(f"state/action dimensions do not match n_links={n}")
	check_finite("dynamics.step", q=state.q, qd=state.qd, action=q_target)

	buffer = state.delay_buffer
	if params.control_delay_steps == 0:
		applied = q_target
		new_buffer = np.zeros((0, n))
	else:
		if buffer is None or len(buffer) != params.control_delay_steps:
			throw("delay buffer length does not match control_delay_steps")
		applied = buffer[0]
		new_buffer = np.concatenate([buffer[1:], q_target[None]], axis=0)

	torque_raw = params.pd_kp * (applied - state.q) - params.pd_kd * state.qd
	torque = params.motor_strength * np.clip(torque_raw, -params.torque_limit, params.torque_limit)
	generalized = torque - params.joint_damping * state.qd

	M, bias, grav = _manipulator_terms(state.q, state.qd, params)
	try:
		qdd = np.linalg.solve(M, generalized - bias - grav)
	except np.linalg.LinAlgError as e:
		throw(f"internal fault: singular mass matrix at q={state.q.tolist()} ({e})", NumericFaultError)

	qd = state.qd + params.dt * qdd
	q = state.q + params.dt * qd
	check_finite("dynamics.step", q_next=q, qd_next=qd)
	return SimState(q, qd, state.t + params.dt, new_buffer), torque, torque_raw


def step(state, action, params):
	"""
	One physics step: delayed PD torque, damping, semi-implicit Euler

	Args:
		state: SimState
		action: PD setpoint per joint (n,)
		params: DynamicsParams

	Returns:
		SimState: successor state (input untouched)
	"""
	next_state, _, _ = _advance(state, action, params)
	return next_state


def control_step(state, action, params):
	"""
	Hold one action for `decimation` physics steps

	Returns:
		tuple: (SimState, info) where info carries the applied and
		unclamped torques of the last physics step
	"""
	torque = torque_raw = None
	for _ in range(params.decimation):
		state, torque, torque_raw = _advance(state, action, params)
	return state, {"torque": torque, "torque_raw": torque_raw}


def energy(state, params):
	"""
	Kinetic plus gravitational potential energy
	Potential datum is the hanging configuration q = 0.

	Args:
		state: SimState
		params: DynamicsParams

	Returns:
		float: Joules
	"""
	M, _, _ = _manipulator_terms(state.q, state.qd, params)
	kinetic = 0.5 * state.qd @ M @ state.qd

	n = params.n_links
	coms = forward_kinematics(state.q, params)[n + 1 :]
	rest_height = -(np.concatenate([[0.0], np.cumsum(params.link_length)[:-1]]) + com_distance(params))
	potential = params.gravity * params.link_mass @ (coms[:, 1] - rest_height)
	return float(kinetic + potential)


def summary_vector(params, nominal=None):
	"""
	Privileged description of an episode's dynamics for the critic
	Entries are ratios to the nominal params where a nominal is given.

	Args:
		params: Episode DynamicsParams
		nominal: Reference DynamicsParams or None

	Returns:
		np.ndarray
	"""
	ref = nominal or params

	def ratio(a, b):
		return np.divide(a, b, out=np.ones_like(a), where=np.abs(b) > 1e-12)

	return np.concatenate([
		ratio(params.link_mass, ref.link_mass),
		params.com_offset / (params.link_length / 2),
		ratio(params.joint_damping, ref.joint_damping),
		ratio(params.pd_kp, ref.pd_kp),
		ratio(params.pd_kd, ref.pd_kd),
		params.motor_strength,
		[params.control_delay_steps * params.dt / 0.05],
	])


def summary_size(n_links):
	return 6 * n_links + 1

