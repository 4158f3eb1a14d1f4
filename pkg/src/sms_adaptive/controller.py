"""Observer-based tracking controller.

Tracking errors are stacked as ``xbar = [p_err; sigma_err; q_err]`` and
combined with the velocity errors into

    xdot_err = K_xbar xbar + xdot_tilde,          K_xbar = blockdiag(R_b^T K_p, K_sigma, K_q),

with its observer-side counterpart ``xhat_dot_err = xdot_err - (xdot - xhat_dot)``.
The control input cancels the observer dynamics so that

    M(q, th_hat) d/dt xhat_dot_err = -K_obs xhat_dot_err

whenever the estimator is fed the commanded input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import geometry as geo
from . import multibody as mb


class EfficiencyFloorError(ValueError):
    """An efficiency estimate fell below the floor (the projection was breached)."""


class ReferenceSample(NamedTuple):
    """Reference at one instant.

    Base position, velocity and acceleration are inertial; the base angular
    velocity and acceleration are expressed in the reference body frame.
    """

    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    R: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray


class ReferenceTrajectory:
    """Time-parameterized base and joint reference.

    Parameters
    ----------
    base_position : callable
        ``t -> (p, v, a)`` in the inertial frame.
    base_attitude : callable
        ``t -> (R, w, dw)`` with body-frame rates.
    joints : callable
        ``t -> (q, qd, qdd)``.
    jump_times : sequence of float
        Instants where the reference velocity is discontinuous.  The
        callables must return right-sided derivatives there.
    """

    def __init__(self, base_position: Callable, base_attitude: Callable, joints: Callable,
                 jump_times: Sequence[float] = ()):
        self.base_position = base_position
        self.base_attitude = base_attitude
        self.joints = joints
        self.jump_times = tuple(sorted(float(t) for t in jump_times))

    def __call__(self, t):
        p, v, a = self.base_position(t)
        R, w, dw = self.base_attitude(t)
        q, qd, qdd = self.joints(t)
        return ReferenceSample(*(np.asarray(x, dtype=float) for x in (p, v, a, R, w, dw, q, qd, qdd)))


def constant_reference(p=(0.0, 0.0, 0.0), R=None, q=(0.0,)):
    p = np.asarray(p, dtype=float)
    R = np.eye(3) if R is None else np.asarray(R, dtype=float)
    q = np.asarray(q, dtype=float)
    z3, zq = np.zeros(3), np.zeros_like(q)
    return ReferenceTrajectory(lambda t: (p, z3, z3), lambda t: (R, z3, z3), lambda t: (q, zq, zq))


def _require_pd(A, name):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return A.reshape(0, 0)
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{name} must be square and symmetric")
    if np.linalg.eigvalsh(A)[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    return A


class ControllerGains:
    """Tracking gains; ``K_obs`` is shared with the estimator."""

    def __init__(self, K_p, K_sigma, K_q, K_obs, mrp_form=geo.PAPER):
        self.K_p = _require_pd(K_p, "K_p")
        self.K_sigma = _require_pd(K_sigma, "K_sigma")
        self.K_q = _require_pd(K_q, "K_q")
        self.K_obs = _require_pd(K_obs, "K_obs")
        if self.K_p.shape != (3, 3) or self.K_sigma.shape != (3, 3):
            raise ValueError("K_p and K_sigma must be 3x3")
        if self.K_obs.shape[0] != 6 + self.K_q.shape[0]:
            raise ValueError("K_obs must be (6 + n) x (6 + n)")
        if mrp_form not in geo.MRP_FORMS:
            raise ValueError(f"unknown MRP form {mrp_form!r}")
        self.mrp_form = mrp_form

    def scaled(self, factor):
        return ControllerGains(factor * self.K_p, factor * self.K_sigma, factor * self.K_q, factor * self.K_obs,
                               self.mrp_form)


@dataclass
class ErrorBundle:
    p: np.ndarray
    sigma: np.ndarray
    q: np.ndarray
    v: np.ndarray
    w: np.ndarray
    qd: np.ndarray
    xbar: np.ndarray
    xdot_tilde: np.ndarray
    xdot_err: np.ndarray
    xhat_dot_err: np.ndarray
    obs: np.ndarray  # xdot - xhat_dot
    R_err: np.ndarray
    xdot_ref: np.ndarray  # reference velocity in the generalized (body) coordinates


def kbar(R_b, gains):
    n = gains.K_q.shape[0]
    K = np.zeros((6 + n, 6 + n))
    K[:3, :3] = R_b.T @ gains.K_p
    K[3:6, 3:6] = gains.K_sigma
    K[6:, 6:] = gains.K_q
    return K


def kbar_dot(state, gains):
    """Time derivative of ``K_xbar``; only the translational block moves."""
    n = gains.K_q.shape[0]
    Kd = np.zeros((6 + n, 6 + n))
    Kd[:3, :3] = -geo.skew(state.xdot[3:6]) @ state.R_b.T @ gains.K_p
    return Kd


def compute_errors(state, xhat_dot, ref: ReferenceSample, gains) -> ErrorBundle:
    """Tracking, velocity and observer-side errors at one instant."""
    R_b = state.R_b
    p_err = state.p_b - ref.p
    R_err = ref.R.T @ R_b
    sigma = geo.mrp_from_rotation(R_err)
    q_err = state.q - ref.q
    xdot_ref = np.concatenate([R_b.T @ ref.v, R_err.T @ ref.w, ref.qd])
    xdot_tilde = state.xdot - xdot_ref
    xbar = np.concatenate([p_err, sigma, q_err])
    xdot_err = kbar(R_b, gains) @ xbar + xdot_tilde
    obs = state.xdot - np.asarray(xhat_dot, dtype=float)
    return ErrorBundle(
        p=p_err, sigma=sigma, q=q_err, v=xdot_tilde[:3], w=xdot_tilde[3:6], qd=xdot_tilde[6:],
        xbar=xbar, xdot_tilde=xdot_tilde, xdot_err=xdot_err, xhat_dot_err=xdot_err - obs, obs=obs,
        R_err=R_err, xdot_ref=xdot_ref,
    )


def xbar_rate(state, err: ErrorBundle, form=geo.PAPER):
    """``d/dt [p_err; sigma_err; q_err]`` from the measured velocities."""
    return np.concatenate([
        state.R_b @ err.v,
        geo.mrp_rate(err.sigma, err.w, form=form),
        err.qd,
    ])


def reference_acceleration(state, ref: ReferenceSample, err: ErrorBundle):
    """Time derivative of the body-frame reference velocity ``xdot_ref``.

    The base blocks carry the frame-rotation terms of ``R_b^T v_ref`` and
    ``R_err^T w_ref``.
    """
    w_b = state.xdot[3:6]
    v_body = err.xdot_ref[:3]
    w_body = err.xdot_ref[3:6]
    return np.concatenate([
        state.R_b.T @ ref.a - np.cross(w_b, v_body),
        err.R_err.T @ ref.dw - np.cross(w_b, w_body),
        ref.qdd,
    ])


def control_input(model, state, est, ref: ReferenceSample, gains, lam_min=0.1, errors=None):
    """Generalized command ``u_c`` (no actuator limits applied).

    Parameters
    ----------
    est : estimator.EstimatorState
    lam_min : float
        Floor below which the efficiency estimate counts as a projection breach.
    """
    if np.any(est.lam_hat < lam_min - 1e-9):
        raise EfficiencyFloorError(f"efficiency estimate {est.lam_hat.min():.3e} below floor {lam_min}")
    err = compute_errors(state, est.xhat_dot, ref, gains) if errors is None else errors
    Mh = mb.mass_matrix(model, state.q, est.theta_hat)
    Ch_x = mb.coriolis_product(model, state.q, state.xdot, est.xhat_dot, est.theta_hat)
    acc = (kbar(state.R_b, gains) @ xbar_rate(state, err, gains.mrp_form)
           + kbar_dot(state, gains) @ err.xbar
           - reference_acceleration(state, ref, err))
    rhs = Ch_x - Mh @ acc - gains.K_obs @ err.xdot_err
    return rhs / est.lam_hat


def iss_bounds(gains, model, thetas, n_samples=64, seed=0):
    """Asymptotic gains of the tracking-error cascade.

    ``velocity`` is ``max lambda_max(M) / lambda_min(K_obs)``, the maximum
    taken over the given parameter sets and ``n_samples`` random joint
    configurations (plus ``q = 0``).
    """
    thetas = np.asarray(thetas, dtype=float).reshape(-1, model.n_bodies, 10)
    rng = np.random.default_rng(seed)
    qs = [np.zeros(model.n)] + ([rng.uniform(-np.pi, np.pi, model.n) for _ in range(n_samples)] if model.n else [])
    m_max = max(np.linalg.eigvalsh(mb.mass_matrix(model, q, th))[-1] for th in thetas for q in qs)
    k_obs_min = np.linalg.eigvalsh(gains.K_obs)[0]
    return {
        "position": 1.0 / np.linalg.eigvalsh(gains.K_p)[0],
        "attitude": 1.0 / np.linalg.eigvalsh(gains.K_sigma)[0],
        "joints": 1.0 / np.linalg.eigvalsh(gains.K_q)[0] if model.n else 0.0,
        "velocity": m_max / k_obs_min,
        "mass_max": m_max,
    }
