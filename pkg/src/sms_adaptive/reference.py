"""Reference trajectory generators: quintic base moves, holds and an IK'd figure eight."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels as K
from . import controller as ct
from . import geometry as geo
from . import multibody as mb


class IKDivergenceError(RuntimeError):
    pass


def quintic(s):
    """Normalized rest-to-rest profile on ``[0, 1]``: value, first and second derivative."""
    s = min(max(s, 0.0), 1.0)
    return (10 * s**3 - 15 * s**4 + 6 * s**5,
            30 * s**2 - 60 * s**3 + 30 * s**4,
            60 * s - 180 * s**2 + 120 * s**3)


class PointToPoint:
    """Sequence of quintic rest-to-rest moves starting from ``start``.

    ``moves`` holds ``(t0, t1, displacement)`` triples in time order.
    """

    def __init__(self, start, moves=()):
        self.start = np.asarray(start, dtype=float)
        self.moves = [(float(t0), float(t1), np.asarray(d, dtype=float)) for t0, t1, d in moves]
        prev = -np.inf
        for t0, t1, _ in self.moves:
            if not t1 > t0 >= prev:
                raise ValueError("moves must be ordered and non-overlapping with t1 > t0")
            prev = t1

    def __call__(self, t):
        p = self.start.copy()
        v = np.zeros_like(p)
        a = np.zeros_like(p)
        for t0, t1, d in self.moves:
            if t <= t0:
                break
            T = t1 - t0
            s, ds, dds = quintic((t - t0) / T)
            p = p + s * d
            if t < t1:
                v = ds / T * d
                a = dds / T**2 * d
        return p, v, a


def hold(value):
    value = np.asarray(value, dtype=float)
    zero = np.zeros_like(value)
    return lambda t: (value, zero, zero)


def sinusoid(center, amplitude, period):
    """``center + A sin(2 pi t / T)`` per component (starts with non-zero velocity)."""
    center = np.asarray(center, dtype=float)
    A = np.asarray(amplitude, dtype=float)
    w = 2 * np.pi / np.asarray(period, dtype=float)
    return lambda t: (center + A * np.sin(w * t), A * w * np.cos(w * t), -A * w**2 * np.sin(w * t))


def constant_attitude(R=None):
    R = np.eye(3) if R is None else np.asarray(R, dtype=float)
    z = np.zeros(3)
    return lambda t: (R, z, z)


def lemniscate(amplitude, period):
    """Figure eight ``(A sin wt, A sin wt cos wt)`` in plane coordinates.

    Returns ``s -> (offset, velocity)`` with ``s`` the time since the start.
    The curve starts at the crossing point with non-zero velocity.
    """
    w = 2 * np.pi / period

    def path(s):
        a, b = np.sin(w * s), np.cos(w * s)
        return (np.array([amplitude * a, amplitude * a * b]),
                np.array([amplitude * w * b, amplitude * w * (b * b - a * a)]))

    return path


def _ik_solve(model, q0, p_target, R_target, damping, tol, max_iter):
    q = q0.copy()
    Jq = None
    for _ in range(max_iter):
        T, _, J = K.kinematics(model.links, model.offsets, q)
        T_ee = T[-1] @ model.links[model.n]
        R = T_ee[:3, :3]
        e = np.concatenate([R.T @ (p_target - T_ee[:3, 3]), geo.so3_log(R.T @ R_target)])
        Jq = (K.adjoint_inverse(model.links[model.n]) @ J[-1])[:, 6:]
        if np.linalg.norm(e[:3]) < tol and np.linalg.norm(e[3:]) < tol:
            return q, Jq, R, 0.0
        A = Jq @ Jq.T + damping**2 * np.eye(6)
        q = q + Jq.T @ np.linalg.solve(A, e)
    return q, Jq, R, float(np.linalg.norm(e[:3]))


class JointSpline:
    """``q_home`` before ``t0``, a clamped cubic spline on ``[t0, t1]``, its end value after."""

    def __init__(self, q_home, t0, t1, times, qs, qd0, qd1):
        self.q_home = np.asarray(q_home, dtype=float)
        self.t0, self.t1 = float(t0), float(t1)
        self.spline = CubicSpline(times, qs, axis=0, bc_type=((1, qd0), (1, qd1)))
        self.q_end = np.asarray(qs[-1], dtype=float)
        self.times, self.samples = np.asarray(times), np.asarray(qs)

    def __call__(self, t):
        zero = np.zeros_like(self.q_home)
        if t < self.t0:
            return self.q_home, zero, zero
        if t >= self.t1:
            return self.q_end, zero, zero
        return self.spline(t), self.spline(t, 1), self.spline(t, 2)


def figure_eight_joint_reference(model, q_home, t0, t1, amplitude=0.4, period=50.0, plane=(1, 2),
                                 sample_dt=0.1, damping=1e-3, tol=1e-10, max_iter=50, residual_limit=1e-4):
    """Joint reference tracing a figure eight with the end effector at a fixed base.

    The curve lies in the plane spanned by the home end-effector axes listed
    in ``plane`` (default y and z); the end-effector orientation is held at
    its home value.  Velocity jumps occur at ``t0`` and ``t1``.
    """
    q_home = np.asarray(q_home, dtype=float)
    T_home = mb.end_effector_pose(model, q_home)
    R_home, p_home = T_home[:3, :3], T_home[:3, 3]
    axes = R_home[:, list(plane)]
    path = lemniscate(amplitude, period)
    times = np.arange(t0, t1 + 0.5 * sample_dt, sample_dt)
    times[-1] = t1
    qs = np.empty((times.size, model.n))
    q = q_home.copy()
    qd_ends = []
    worst = 0.0
    for k, t in enumerate(times):
        off, vel = path(t - t0)
        q, Jq, R, res = _ik_solve(model, q, p_home + axes @ off, R_home, damping, tol, max_iter)
        if res > residual_limit:
            raise IKDivergenceError(f"IK residual {res:.3e} m at t = {t:.3f} s")
        worst = max(worst, res)
        qs[k] = q
        if k == 0 or k == times.size - 1:
            twist = np.concatenate([R.T @ (axes @ vel), np.zeros(3)])
            qd_ends.append(np.linalg.lstsq(Jq, twist, rcond=None)[0])
    spline = JointSpline(q_home, t0, t1, times, qs, qd_ends[0], qd_ends[1])
    spline.ik_residual = worst
    spline.target = lambda t: p_home + axes @ path(t - t0)[0]
    return spline


def manipulability(model, q):
    T, _, J = K.kinematics(model.links, model.offsets, np.asarray(q, dtype=float))
    Jq = (K.adjoint_inverse(model.links[model.n]) @ J[-1])[:, 6:]
    return float(np.sqrt(max(np.linalg.det(Jq @ Jq.T), 0.0)))


def compose(base_position, base_attitude, joints, jump_times=()):
    return ct.ReferenceTrajectory(base_position, base_attitude, joints, jump_times)
