"""Actuator models: on-off thrusters with PWM, reaction wheels, joint motors.

The generalized force seen by the plant is ``diag(lambda) u_act`` where
``u_act = [f_b, tau_b, tau_joints]`` is what the actuators physically
deliver and ``lambda`` is the per-channel efficiency (1 when healthy).
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

FULL = "full"
IDEAL = "ideal"


class InfeasibleGeometryError(ValueError):
    pass


class EfficiencyRangeError(ValueError):
    pass


def _wrench_matrix(positions, directions):
    return np.vstack([directions.T, np.cross(positions, directions).T])


class ThrusterBank:
    """Fixed on-off thrusters on the base.

    Parameters
    ----------
    positions, directions : (k, 3) arrays in the base frame
        ``directions`` are the unit force directions applied to the base.
    max_thrust : float
        Thrust of one open valve (N).
    window, min_on : float
        PWM period and minimum valve opening time (s).
    """

    def __init__(self, positions, directions, max_thrust, window=0.1, min_on=0.02):
        positions = np.asarray(positions, dtype=float)
        directions = np.asarray(directions, dtype=float)
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("thruster directions must be unit vectors")
        if max_thrust <= 0 or window <= 0 or min_on < 0 or min_on > window:
            raise ValueError("invalid thruster timing or thrust")
        self.positions = positions
        self.directions = directions
        self.max_thrust = float(max_thrust)
        self.window = float(window)
        self.min_on = float(min_on)
        self.A = _wrench_matrix(positions, directions)
        self._check_spanning()

    @property
    def count(self):
        return self.positions.shape[0]

    def _check_spanning(self):
        # the cone of the columns is R^6 iff rank 6 and some strictly positive
        # combination of the columns vanishes
        if np.linalg.matrix_rank(self.A) < 6:
            raise InfeasibleGeometryError("thruster wrenches do not span six dimensions")
        k = self.count
        res = linprog(np.zeros(k), A_eq=self.A, b_eq=np.zeros(6), bounds=[(1.0, None)] * k, method="highs")
        if res.status != 0:
            raise InfeasibleGeometryError("thrusters cannot produce every +/- wrench direction")

    def axis_capability(self):
        """Largest pure force along each base axis and pure torque about each axis."""
        caps = np.empty(6)
        for i in range(6):
            w = np.zeros(6)
            w[i] = 1.0
            caps[i] = self._max_scale(w)
        return caps

    def _max_scale(self, w):
        k = self.count
        c = np.zeros(k + 1)
        c[-1] = -1.0
        A_eq = np.hstack([self.A, -w[:, None]])
        res = linprog(c, A_eq=A_eq, b_eq=np.zeros(6), bounds=[(0, self.max_thrust)] * k + [(0, None)], method="highs")
        return float(res.x[-1])

    def to_dict(self):
        return {
            "positions_m": self.positions.tolist(),
            "directions": self.directions.tolist(),
            "max_thrust_newton": self.max_thrust,
            "pwm_window_s": self.window,
            "min_on_time_s": self.min_on,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["positions_m"], d["directions"], d["max_thrust_newton"], d["pwm_window_s"], d["min_on_time_s"])


def cube_thruster_bank(half_extent=0.5, max_thrust=10.0, window=0.1, min_on=0.02):
    """24 thrusters, three per corner of a cube, each pushing toward the centre along one axis.

    With the defaults every base axis gets 40 N of force and 40 N m of torque.
    """
    positions, directions = [], []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                corner = half_extent * np.array([sx, sy, sz])
                for axis, s in enumerate((sx, sy, sz)):
                    d = np.zeros(3)
                    d[axis] = -s
                    positions.append(corner)
                    directions.append(d)
    return ThrusterBank(np.array(positions), np.array(directions), max_thrust, window, min_on)


class ReactionWheelSet:
    """Reaction wheels; ``axes`` are unit spin axes and torques act on the base along them."""

    def __init__(self, axes, wheel_torque_limit, axis_torque_limit):
        axes = np.asarray(axes, dtype=float)
        if np.linalg.matrix_rank(axes) < 3:
            raise ValueError("reaction wheel axes must span three dimensions")
        self.axes = axes / np.linalg.norm(axes, axis=1, keepdims=True)
        self.wheel_torque_limit = float(wheel_torque_limit)
        self.axis_torque_limit = float(axis_torque_limit)
        self.W = self.axes.T  # 3 x k, body torque = W @ wheel torques
        self._pinv = np.linalg.pinv(self.W)
        self.momentum = np.zeros(len(axes))

    def allocate(self, torque):
        """Wheel torques for a body torque request; returns (wheel torques, delivered body torque)."""
        request = np.clip(torque, -self.axis_torque_limit, self.axis_torque_limit)
        wheels = self._pinv @ request
        peak = np.abs(wheels).max(initial=0.0)
        if peak > self.wheel_torque_limit:
            wheels *= self.wheel_torque_limit / peak
        return wheels, self.W @ wheels

    def to_dict(self):
        return {
            "axes": self.axes.tolist(),
            "wheel_torque_limit_newton_meter": self.wheel_torque_limit,
            "axis_torque_limit_newton_meter": self.axis_torque_limit,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["axes"], d["wheel_torque_limit_newton_meter"], d["axis_torque_limit_newton_meter"])


def pyramid_wheels(axis_torque=0.5):
    """Four wheels at cant ``atan(1/2)`` so that every body axis gets ``axis_torque``."""
    beta = np.arctan(0.5)
    axes = [[np.cos(beta) * np.cos(psi), np.cos(beta) * np.sin(psi), np.sin(beta)]
            for psi in np.arange(4) * np.pi / 2]
    return ReactionWheelSet(axes, axis_torque / (2.0 * np.cos(beta)), axis_torque)


class JointMotorSet:
    def __init__(self, torque_limits, time_constant=0.005):
        self.torque_limits = np.asarray(torque_limits, dtype=float)
        if np.any(self.torque_limits <= 0):
            raise ValueError("joint torque limits must be positive")
        if time_constant < 0:
            raise ValueError("time constant must be non-negative")
        self.time_constant = float(time_constant)

    def saturate(self, tau):
        return np.clip(tau, -self.torque_limits, self.torque_limits)

    def lag(self, tau_state, tau_target, dt):
        """Exact first-order response over ``dt``; returns (end value, mean over the step)."""
        if self.time_constant == 0.0:
            return tau_target.copy(), tau_target.copy()
        r = dt / self.time_constant
        decay = np.exp(-r)
        end = tau_target + (tau_state - tau_target) * decay
        mean = tau_target + (tau_state - tau_target) * (1.0 - decay) / r
        return end, mean

    def to_dict(self):
        return {"torque_limits_newton_meter": self.torque_limits.tolist(), "time_constant_s": self.time_constant}

    @classmethod
    def from_dict(cls, d):
        return cls(d["torque_limits_newton_meter"], d["time_constant_s"])


class Allocation:
    def __init__(self, duties, wheel_torques, wrench, scale, saturated):
        self.duties = duties
        self.wheel_torques = wheel_torques
        self.wrench = wrench
        self.scale = scale
        self.saturated = saturated


def allocate_base_wrench(bank, wheels, f_cmd, tau_cmd):
    """Split a base wrench command between wheels and thrusters.

    Wheels take as much torque as they can; thrusters supply the rest with
    the least total thrust (``min sum(t)`` s.t. ``A t = w``, ``0 <= t <= T_max``).
    If that is infeasible the request is scaled down along its own direction
    to the largest feasible ``s w`` (again at least total thrust) and the
    result is flagged as saturated.  The LP support is then polished with a
    least-squares solve so that the residual is at round-off level.
    """
    f_cmd = np.asarray(f_cmd, dtype=float)
    tau_cmd = np.asarray(tau_cmd, dtype=float)
    if not (np.all(np.isfinite(f_cmd)) and np.all(np.isfinite(tau_cmd))):
        raise ValueError("wrench command must be finite")
    if wheels is not None:
        wheel_torques, tau_rw = wheels.allocate(tau_cmd)
    else:
        wheel_torques, tau_rw = np.zeros(0), np.zeros(3)
    w = np.concatenate([f_cmd, tau_cmd - tau_rw])
    w[np.abs(w) < 1e-12 * bank.max_thrust] = 0.0
    k = bank.count
    t_max = bank.max_thrust
    if not np.any(w):
        return Allocation(np.zeros(k), wheel_torques, np.concatenate([np.zeros(3), tau_rw]), 1.0, False)
    ones = np.ones(k)
    bounds = [(0.0, t_max)] * k
    s = 1.0
    res = linprog(ones, A_eq=bank.A, b_eq=w, bounds=bounds, method="highs")
    if res.status == 2:  # infeasible: find the largest feasible scale first
        s = bank._max_scale(w)
        res = linprog(ones, A_eq=bank.A, b_eq=s * w, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"thruster allocation failed: {res.message}")
    t = _polish(bank.A, np.clip(res.x, 0.0, t_max), s * w, t_max)
    wrench = bank.A @ t
    wrench[3:] += tau_rw
    return Allocation(t / t_max, wheel_torques, wrench, s, s < 1.0)


def _polish(A, t, target, t_max, tol=1e-9):
    # least-norm correction on the thrusters strictly inside their range
    free = (t > tol * t_max) & (t < (1.0 - tol) * t_max)
    if not np.any(free):
        return t
    corr, *_ = np.linalg.lstsq(A[:, free], target - A @ t, rcond=None)
    cand = t[free] + corr
    if np.all(cand >= 0.0) and np.all(cand <= t_max):
        t = t.copy()
        t[free] = cand
    return t


def pulse_width(duty, window, min_on):
    """On-time within one PWM window for a duty cycle.

    Widths below ``min_on / 2`` are dropped and widths in
    ``[min_on / 2, min_on)`` are raised to the minimum impulse bit.
    """
    if not 0.0 <= duty <= 1.0:
        raise ValueError("duty must lie in [0, 1]")
    width = duty * window
    if width < 0.5 * min_on:
        return 0.0
    if width < min_on:
        return min_on
    return width


def pwm_modulate(duty, window, min_on):
    """Single pulse starting at the window start: returns ``(on_time, off_time)`` relative to the window."""
    return 0.0, pulse_width(duty, window, min_on)


def effective_duty(duty, window, min_on):
    """Mean duty actually delivered once the pulse-width rules are applied."""
    d = np.asarray(duty, dtype=float)
    width = d * window
    width = np.where(width < 0.5 * min_on, 0.0, np.where(width < min_on, min_on, width))
    return width / window


def on_fraction(width, t0, t1):
    """Fraction of ``[t0, t1)`` (times relative to the window start) covered by a pulse ``[0, width)``."""
    overlap = np.clip(np.minimum(width, t1) - t0, 0.0, None)
    return overlap / (t1 - t0)


def apply_efficiency(u, lam, lam_min=0.1):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < lam_min - 1e-12) or np.any(lam > 1.0 + 1e-12):
        raise EfficiencyRangeError(f"efficiency outside [{lam_min}, 1]")
    return lam * np.asarray(u, dtype=float)


class FaultSchedule:
    """Step changes of channel efficiencies: entries ``(time_s, channel, efficiency)``."""

    def __init__(self, entries=(), n_channels=None, lam_min=0.1):
        self.entries = sorted((float(t), int(c), float(e)) for t, c, e in entries)
        self.n_channels = n_channels
        self.lam_min = lam_min
        for _, c, e in self.entries:
            if not lam_min <= e <= 1.0:
                raise EfficiencyRangeError(f"efficiency {e} outside [{lam_min}, 1]")
            if n_channels is not None and not 0 <= c < n_channels:
                raise ValueError(f"channel {c} out of range")

    def efficiency(self, t, n_channels=None):
        n = n_channels or self.n_channels
        lam = np.ones(n)
        for time, c, e in self.entries:
            if t >= time:
                lam[c] = e
        return lam

    def to_list(self):
        return [{"time_s": t, "channel": c, "efficiency": e} for t, c, e in self.entries]


class ActuatorSystem:
    """Stateful actuator chain owned by one simulation.

    ``command`` is called at the control rate with the generalized command
    ``u_c``; ``realize`` returns the mean delivered generalized force over
    each physics step.  In ``ideal`` mode the command is only clipped to the
    per-axis capabilities.
    """

    def __init__(self, bank, wheels, motors, mode=FULL):
        if mode not in (FULL, IDEAL):
            raise ValueError(f"unknown actuator mode {mode!r}")
        self.bank = bank
        self.wheels = wheels
        self.motors = motors
        self.mode = mode
        self.n = len(motors.torque_limits)
        caps = bank.axis_capability()
        self.base_limits = caps.copy()
        if wheels is not None:
            self.base_limits[3:] += wheels.axis_torque_limit
        self.joint_state = np.zeros(self.n)
        self.joint_target = np.zeros(self.n)
        self.widths = np.zeros(bank.count)
        self.wheel_torques = np.zeros(0 if wheels is None else len(wheels.axes))
        self.window_index = -1
        self.window_start = 0.0
        self.last_allocation = None
        self.u_ideal = np.zeros(6 + self.n)
        self.base_saturated = False
        self.joint_saturated = False

    def command(self, u_c, t):
        """Accept a new command; returns the observer-side model of the delivered force."""
        u_c = np.asarray(u_c, dtype=float)
        tau_j = self.motors.saturate(u_c[6:])
        self.joint_saturated = bool(np.any(np.abs(u_c[6:]) > self.motors.torque_limits))
        self.joint_target = tau_j
        if self.mode == IDEAL:
            base = np.clip(u_c[:6], -self.base_limits, self.base_limits)
            self.base_saturated = bool(np.any(np.abs(u_c[:6]) > self.base_limits))
            self.u_ideal = np.concatenate([base, tau_j])
            return self.u_ideal.copy()
        alloc = allocate_base_wrench(self.bank, self.wheels, u_c[:3], u_c[3:6])
        self.last_allocation = alloc
        self.base_saturated = alloc.saturated
        self.wheel_torques = alloc.wheel_torques
        idx = int(np.floor(t / self.bank.window + 1e-9))
        if idx != self.window_index:
            self.window_index = idx
            self.window_start = idx * self.bank.window
            self.widths = np.array(
                [pulse_width(min(max(d, 0.0), 1.0), self.bank.window, self.bank.min_on) for d in alloc.duties]
            )
        # observer model: window average of the latched pulse schedule (known on board)
        wrench = self.bank.A @ (self.widths / self.bank.window * self.bank.max_thrust)
        if self.wheels is not None:
            wrench[3:] += self.wheels.W @ alloc.wheel_torques
        return np.concatenate([wrench, tau_j])

    def realize(self, t, dt):
        """Mean delivered generalized force over ``[t, t + dt)`` (before efficiency)."""
        if self.mode == IDEAL:
            return self.u_ideal.copy()
        t0 = t - self.window_start
        frac = on_fraction(self.widths, t0, t0 + dt)
        wrench = self.bank.A @ (frac * self.bank.max_thrust)
        if self.wheels is not None and len(self.wheel_torques):
            wrench[3:] += self.wheels.W @ self.wheel_torques
            self.wheels.momentum -= self.wheel_torques * dt
        self.joint_state, mean = self.motors.lag(self.joint_state, self.joint_target, dt)
        return np.concatenate([wrench, mean])

    def thruster_states(self, t):
        """Instantaneous on/off state of every valve."""
        t0 = t - self.window_start
        return (t0 >= 0.0) & (t0 < self.widths)
