"""Adaptive velocity observer with natural-gradient parameter adaptation.

The observer runs a copy of the dynamics with the estimated parameters,

    M(q, th) xh_dd = diag(lam_hat) u - C(q, xdot, th) xh_dot + K_obs (xdot - xh_dot),

and its velocity error drives two adaptation laws:

    th_j_dot  = Proj{ -gamma_j g(th_j)^-1 Y_j^T (xdot - xh_dot) }
    lam_dot   = Proj{ Gamma (u * (xdot - xh_dot)) }

where ``Y_j`` is the body-``j`` block of the regressor evaluated at
``(q, xdot, xh_dot, xh_dd)`` and ``g`` is the affine-invariant metric pulled
back to parameter space.  Neither law needs the measured acceleration.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from . import inertia as inr
from . import multibody as mb


class EstimatorGains:
    """Observer and adaptation gains.

    Parameters
    ----------
    K_obs : (N, N) positive definite
    gamma : scalar or (n + 1,) positive adaptation gains per body
    Gamma_lambda : (N, N) positive definite diagonal efficiency gain
    delta : float
        Boundary-layer width of the efficiency projection.
    lam_min : float
        Lower efficiency bound; the upper bound is 1.
    adapt_bodies : (n + 1,) bool, optional
        Bodies whose parameters are adapted (default: all).
    metric_scale : float
        Scale of the pullback metric (see ``inertia.METRIC_SCALE``).
    """

    def __init__(self, K_obs, gamma, Gamma_lambda, delta=1e-3, lam_min=0.1, adapt_bodies=None,
                 adapt_lambda=True, metric_scale=inr.METRIC_SCALE, natural=True):
        self.K_obs = np.asarray(K_obs, dtype=float)
        N = self.K_obs.shape[0]
        n_bodies = N - 5
        self.gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n_bodies,)).copy()
        self.Gamma_lambda = np.asarray(Gamma_lambda, dtype=float)
        _require_pd(self.K_obs, "K_obs")
        _require_pd(self.Gamma_lambda, "Gamma_lambda")
        if np.any(self.gamma <= 0):
            raise ValueError("gamma must be positive")
        if np.any(self.Gamma_lambda != np.diag(np.diag(self.Gamma_lambda))):
            raise ValueError("Gamma_lambda must be diagonal (the box projection acts per channel)")
        if not 0.0 < lam_min <= 1.0:
            raise ValueError("lam_min must lie in (0, 1]")
        if lam_min < 1.0 and not 0.0 < delta < 1.0 - lam_min:
            raise ValueError("delta must be positive and smaller than the efficiency range")
        self.delta = float(delta)
        self.lam_min = float(lam_min)
        self.adapt_bodies = np.ones(n_bodies, dtype=bool) if adapt_bodies is None else np.asarray(adapt_bodies, bool)
        self.adapt_lambda = bool(adapt_lambda)
        self.metric_scale = float(metric_scale)
        self.natural = bool(natural)

    @property
    def dof(self):
        return self.K_obs.shape[0]


def _require_pd(A, name):
    A = np.asarray(A, dtype=float)
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{name} must be square and symmetric")
    if np.linalg.eigvalsh(A)[0] <= 0:
        raise ValueError(f"{name} must be positive definite")


class EstimatorState:
    def __init__(self, xhat_dot, theta_hat, lam_hat):
        self.xhat_dot = np.asarray(xhat_dot, dtype=float).copy()
        self.theta_hat = np.asarray(theta_hat, dtype=float).reshape(-1, inr.N_PARAMS).copy()
        self.lam_hat = np.asarray(lam_hat, dtype=float).copy()

    def copy(self):
        return EstimatorState(self.xhat_dot, self.theta_hat, self.lam_hat)


def pack_bounds(bounds):
    """Per-body ``ParamBounds`` as the row layout used by the compiled kernels."""
    out = np.zeros((len(bounds), K.B_SIZE))
    for j, b in enumerate(bounds):
        out[j, K.B_MASS_MIN] = b.mass_min
        out[j, K.B_MASS_MAX] = b.mass_max
        out[j, K.B_H_MAX] = b.com_moment_max
        out[j, K.B_EPS] = b.eps_p
        out[j, K.B_L_CONS] = b.layer_consistency
        out[j, K.B_L_MASS] = b.layer_mass
        out[j, K.B_L_H] = b.layer_com_moment
        out[j, K.B_TOL] = b.tolerance
        out[j, K.B_I_MAX:K.B_I_MAX + 6] = b.inertia_max
        out[j, K.B_L_I:K.B_L_I + 6] = b.layer_inertia
    return out


def observer_acceleration(model, q, xdot, est, u, gains):
    """Observer acceleration for the measured ``(q, xdot)`` and force input ``u``."""
    xdot = np.asarray(xdot, dtype=float)
    Mh = mb.mass_matrix(model, q, est.theta_hat)
    if np.linalg.cond(Mh) > 1e12:
        raise mb.SingularMassMatrixError("estimated mass matrix is singular; projection failed upstream")
    bias = mb.coriolis_product(model, q, xdot, est.xhat_dot, est.theta_hat)
    rhs = est.lam_hat * np.asarray(u, dtype=float) - bias + gains.K_obs @ (xdot - est.xhat_dot)
    return np.linalg.solve(Mh, rhs)


def natural_rate(theta, grad, gamma, scale=inr.METRIC_SCALE):
    """``-gamma g(theta)^-1 grad`` by a symmetric solve."""
    g = inr.pullback_metric(theta, scale=scale)
    return -gamma * np.linalg.solve(g, np.asarray(grad, dtype=float))


def raw_theta_rate(model, q, xdot, est, xhat_ddot, gains, j):
    """Unprojected natural-gradient rate of body ``j``."""
    err = np.asarray(xdot, dtype=float) - est.xhat_dot
    Yj = mb.regressor(model, q, xdot, est.xhat_dot, xhat_ddot, body=j)
    grad = Yj.T @ err
    if not gains.natural:
        return -gains.gamma[j] * grad
    return natural_rate(est.theta_hat[j], grad, gains.gamma[j], gains.metric_scale)


def theta_rate(model, q, xdot, est, u, gains, bounds, xhat_ddot=None):
    """Projected parameter rates, one row per body (zero for frozen bodies)."""
    if xhat_ddot is None:
        xhat_ddot = observer_acceleration(model, q, xdot, est, u, gains)
    rates = np.zeros_like(est.theta_hat)
    for j in range(est.theta_hat.shape[0]):
        if not gains.adapt_bodies[j]:
            continue
        raw = raw_theta_rate(model, q, xdot, est, xhat_ddot, gains, j)
        metric = inr.pullback_metric(est.theta_hat[j], scale=gains.metric_scale) if gains.natural else None
        rates[j] = inr.smooth_project(est.theta_hat[j], raw, bounds[j], metric=metric)
    return rates


def lambda_rate(u, xdot, est, gains):
    if not gains.adapt_lambda:
        return np.zeros_like(est.lam_hat)
    raw = np.diag(gains.Gamma_lambda) * (np.asarray(u, dtype=float) * (np.asarray(xdot, dtype=float) - est.xhat_dot))
    return K.project_box_rate(est.lam_hat, raw, gains.lam_min, 1.0, gains.delta)


def lyapunov_value(model, q, xdot, est, theta_true, lam_true, gains):
    """``1/2 e^T M e + 1/2 dl^T Gamma^-1 dl + sum_j D(th_hat_j || th_j) / (2 s gamma_j)``.

    ``s`` is the metric scale, so the divergence weight is ``1 / gamma_j`` at
    the default scale.  Only adapted bodies contribute a divergence term.
    """
    err = np.asarray(xdot, dtype=float) - est.xhat_dot
    theta_true = mb.as_param_matrix(theta_true)
    M = mb.mass_matrix(model, q, theta_true)
    dl = est.lam_hat - np.asarray(lam_true, dtype=float)
    V = 0.5 * err @ M @ err + 0.5 * dl @ np.linalg.solve(gains.Gamma_lambda, dl)
    for j in range(theta_true.shape[0]):
        if gains.adapt_bodies[j]:
            V += inr.bregman_divergence(est.theta_hat[j], theta_true[j]) / (2.0 * gains.metric_scale * gains.gamma[j])
    return float(V)


def metric_condition(est, gains):
    """Largest condition number of the per-body metrics (numerical-health monitor)."""
    worst = 1.0
    for j, th in enumerate(est.theta_hat):
        if gains.adapt_bodies[j]:
            worst = max(worst, float(np.linalg.cond(inr.pullback_metric(th, scale=gains.metric_scale))))
    return worst
