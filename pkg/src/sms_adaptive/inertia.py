"""Physically consistent inertial parameters and the geometry of P(4).

A rigid body's inertial parameters are stored as the 10-vector

    theta = [m, hx, hy, hz, Ixx, Iyy, Izz, Ixy, Iyz, Izx]

where ``h = m * c`` is the first mass moment about the body frame origin and
``I`` is the rotational inertia about that same origin.  The linear map
``to_pseudo_inertia`` sends ``theta`` to the 4x4 pseudo-inertia matrix, which
is positive definite exactly when the parameters are physically consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

N_PARAMS = 10
# (row, col) of each rotational-inertia entry, in parameter order
_INERTIA_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0))


class InconsistentParametersError(ValueError):
    """Raised when an operation needs a positive definite pseudo-inertia."""


class InfeasibleStateError(ValueError):
    """Raised when an estimate already lies outside its feasible set."""


@dataclass(frozen=True)
class InertialParams:
    mass: float
    com_moment: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    @property
    def vector(self):
        I = np.asarray(self.inertia, dtype=float)
        return np.array(
            [self.mass, *np.asarray(self.com_moment, dtype=float)]
            + [I[r, c] for r, c in _INERTIA_INDEX]
        )

    def __array__(self, dtype=None, copy=None):
        v = self.vector
        return v if dtype is None else v.astype(dtype)

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(float(theta[0]), theta[1:4].copy(), inertia_matrix(theta))


def params(mass, com_moment=(0.0, 0.0, 0.0), inertia=(0.0, 0.0, 0.0)):
    """Build a parameter vector; ``inertia`` may be a 3-vector diagonal or 3x3."""
    I = np.asarray(inertia, dtype=float)
    if I.shape == (3,):
        I = np.diag(I)
    return InertialParams(float(mass), np.asarray(com_moment, dtype=float), I).vector


def inertia_matrix(theta):
    theta = np.asarray(theta, dtype=float)
    xx, yy, zz, xy, yz, zx = theta[4:10]
    return np.array([[xx, xy, zx], [xy, yy, yz], [zx, yz, zz]])


def point_mass_params(mass, position):
    """Parameters of a point mass at ``position`` (useful for tests)."""
    c = np.asarray(position, dtype=float)
    I = mass * ((c @ c) * np.eye(3) - np.outer(c, c))
    return params(mass, mass * c, I)


def hollow_cylinder_params(length, outer_radius, thickness, density, axis=(0.0, 0.0, 1.0)):
    """Hollow cylinder starting at the frame origin and extending along ``axis``."""
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    r_o, r_i = outer_radius, outer_radius - thickness
    m = density * np.pi * (r_o**2 - r_i**2) * length
    i_axial = 0.5 * m * (r_o**2 + r_i**2)
    i_trans = m * (3.0 * (r_o**2 + r_i**2) + length**2) / 12.0
    uu = np.outer(u, u)
    I_com = i_axial * uu + i_trans * (np.eye(3) - uu)
    c = 0.5 * length * u
    I_origin = I_com + m * ((c @ c) * np.eye(3) - np.outer(c, c))
    return params(m, m * c, I_origin)


def to_pseudo_inertia(theta):
    theta = np.asarray(theta, dtype=float)
    I = inertia_matrix(theta)
    P = np.empty((4, 4))
    P[:3, :3] = 0.5 * np.trace(I) * np.eye(3) - I
    P[:3, 3] = theta[1:4]
    P[3, :3] = theta[1:4]
    P[3, 3] = theta[0]
    return P


def from_pseudo_inertia(P):
    P = np.asarray(P, dtype=float)
    Sigma = P[:3, :3]
    I = np.trace(Sigma) * np.eye(3) - Sigma
    return np.array([P[3, 3], *P[:3, 3]] + [I[r, c] for r, c in _INERTIA_INDEX])


# Images of the canonical basis, f(e_i); f is linear so f(theta) = sum theta_i F_i.
PSEUDO_BASIS = np.array([to_pseudo_inertia(e) for e in np.eye(N_PARAMS)])


class ConsistencyReport(NamedTuple):
    consistent: bool
    min_eigenvalue: float


def is_consistent(theta, margin=0.0):
    lam_min = float(np.linalg.eigvalsh(to_pseudo_inertia(theta))[0])
    return ConsistencyReport(lam_min > margin, lam_min)


def _require_consistent(*thetas):
    for theta in thetas:
        report = is_consistent(theta)
        if not report.consistent:
            raise InconsistentParametersError(
                f"pseudo-inertia is not positive definite (min eigenvalue {report.min_eigenvalue:.3e})"
            )


def _whitened_eigenvalues(P1, P2):
    # eigenvalues of P1^{-1/2} P2 P1^{-1/2}
    w, V = np.linalg.eigh(P1)
    S = V / np.sqrt(w)
    return np.linalg.eigvalsh(S.T @ P2 @ S)


def pseudo_distance(P1, P2):
    """Affine-invariant distance ``||log(P1^-1 P2)||_F`` on P(4)."""
    lam = _whitened_eigenvalues(P1, P2)
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def riemannian_distance(theta1, theta2):
    _require_consistent(theta1, theta2)
    return pseudo_distance(to_pseudo_inertia(theta1), to_pseudo_inertia(theta2))


def log_det_divergence(P_ref, P):
    """Bregman divergence of -log det at ``P_ref`` evaluated at ``P``.

    ``log(det P_ref / det P) + tr(P_ref^-1 P) - 4``.
    """
    sign_r, logdet_r = np.linalg.slogdet(P_ref)
    sign_p, logdet_p = np.linalg.slogdet(P)
    return float(logdet_r - logdet_p + np.trace(np.linalg.solve(P_ref, P)) - P.shape[0])


def log_det_divergence_eig(P_ref, P):
    lam = _whitened_eigenvalues(P_ref, P)
    return float(np.sum(lam - np.log(lam) - 1.0))


def bregman_divergence(theta_est, theta_true, method="eig"):
    """Divergence between an estimate and the true parameters.

    With ``P1 = f(theta_est)`` and ``P2 = f(theta_true)`` this is
    ``log(det P1 / det P2) + tr(P1^-1 P2) - 4``; ``method`` selects the
    determinant/trace form ("det") or the eigenvalue form ("eig").
    """
    _require_consistent(theta_est, theta_true)
    P1, P2 = to_pseudo_inertia(theta_est), to_pseudo_inertia(theta_true)
    if method == "det":
        return log_det_divergence(P1, P2)
    if method == "eig":
        return log_det_divergence_eig(P1, P2)
    raise ValueError(f"unknown method {method!r}")


# Scale of the trace form.  With 1.0 the metric is exactly the Hessian of the
# divergence and induces the distance ||log(P1^-1 P2)||_F; 0.5 is the
# half-trace normalisation, which halves the metric (doubling the effective
# adaptation gain for the same gamma).
METRIC_SCALE = 1.0
HALF_TRACE_SCALE = 0.5


def metric_from_pseudo(P, scale=METRIC_SCALE):
    A = np.linalg.solve(P, PSEUDO_BASIS)  # P^-1 F_i, batched
    g = scale * np.einsum("iab,jba->ij", A, A)
    return 0.5 * (g + g.T)


def pullback_metric(theta, scale=METRIC_SCALE):
    """Affine-invariant metric of P(4) pulled back to parameter space (10x10).

    ``g_ij = scale * tr(P^-1 F_i P^-1 F_j)`` with ``P = f(theta)`` and
    ``F_i = f(e_i)``.  At the default scale ``v^T g v`` equals the second
    derivative of ``bregman_divergence(theta, theta + t v)`` at ``t = 0``.
    """
    _require_consistent(theta)
    return metric_from_pseudo(to_pseudo_inertia(theta), scale)


# ---------------------------------------------------------------------------
# Feasible set and smooth projection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamBounds:
    """Compact feasible set for one body, intersected with ``min eig f >= eps_p``.

    Each face has a boundary layer in which the projection attenuates
    outward motion; ``layer_*`` are the absolute layer widths.
    """

    mass_min: float
    mass_max: float
    com_moment_max: float
    inertia_max: np.ndarray  # |I_k| <= inertia_max[k], parameter order
    eps_p: float
    layer_consistency: float
    layer_mass: float
    layer_com_moment: float
    layer_inertia: np.ndarray
    tolerance: float = 1e-9

    @classmethod
    def around(cls, nominal, delta=1e-3, eps_rel=1e-6, mass_factor=(0.1, 10.0), growth=10.0):
        """Generous box around a nominal parameter vector.

        Mass in ``[0.1, 10] x nominal``, ``|h| <= 10 |h_nom| + sqrt(m tr Sigma)``
        and ``|I_k| <= 10 |I_k,nom| + tr(I_nom) / 3``.  The additive floors
        carry the body's own units so the box stays inactive for heavy and
        light bodies alike; consistency margin and layer widths scale with
        the nominal pseudo-inertia.
        """
        nominal = np.asarray(nominal, dtype=float)
        P = to_pseudo_inertia(nominal)
        scale = float(np.trace(P)) / 4.0
        m = nominal[0]
        h_floor = float(np.sqrt(max(m * np.trace(P[:3, :3]), 0.0)))
        i_floor = float(np.trace(inertia_matrix(nominal))) / 3.0
        h_max = growth * float(np.linalg.norm(nominal[1:4])) + h_floor
        i_max = growth * np.abs(nominal[4:10]) + i_floor
        return cls(
            mass_min=mass_factor[0] * m,
            mass_max=mass_factor[1] * m,
            com_moment_max=h_max,
            inertia_max=i_max,
            eps_p=eps_rel * scale,
            layer_consistency=delta * scale,
            layer_mass=delta * m,
            layer_com_moment=delta * h_max,
            layer_inertia=delta * i_max,
            tolerance=1e-9 * max(scale, 1.0),
        )

    def to_dict(self):
        return {
            "mass_min_kg": self.mass_min,
            "mass_max_kg": self.mass_max,
            "com_moment_max_kg_m": self.com_moment_max,
            "inertia_max_kg_m2": list(map(float, self.inertia_max)),
            "eps_p": self.eps_p,
            "layer_consistency": self.layer_consistency,
            "layer_mass_kg": self.layer_mass,
            "layer_com_moment_kg_m": self.layer_com_moment,
            "layer_inertia_kg_m2": list(map(float, self.layer_inertia)),
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            mass_min=float(d["mass_min_kg"]),
            mass_max=float(d["mass_max_kg"]),
            com_moment_max=float(d["com_moment_max_kg_m"]),
            inertia_max=np.asarray(d["inertia_max_kg_m2"], dtype=float),
            eps_p=float(d["eps_p"]),
            layer_consistency=float(d["layer_consistency"]),
            layer_mass=float(d["layer_mass_kg"]),
            layer_com_moment=float(d["layer_com_moment_kg_m"]),
            layer_inertia=np.asarray(d["layer_inertia_kg_m2"], dtype=float),
            tolerance=float(d.get("tolerance", 1e-9)),
        )

    def constraints(self, theta):
        """Margins ``c_k(theta)`` (feasible iff all >= 0), their gradients and layer widths.

        Every margin is concave in ``theta``, which is what makes the
        projection preserve the Lyapunov inequality.
        """
        theta = np.asarray(theta, dtype=float)
        w, V = np.linalg.eigh(to_pseudo_inertia(theta))
        v = V[:, 0]
        c = [w[0] - self.eps_p]
        grads = [np.einsum("a,iab,b->i", v, PSEUDO_BASIS, v)]
        layers = [self.layer_consistency]

        e = np.eye(N_PARAMS)
        c += [theta[0] - self.mass_min, self.mass_max - theta[0]]
        grads += [e[0], -e[0]]
        layers += [self.layer_mass, self.layer_mass]

        h = theta[1:4]
        h_norm = float(np.linalg.norm(h))
        g_h = np.zeros(N_PARAMS)
        if h_norm > 0.0:
            g_h[1:4] = -h / h_norm
        c.append(self.com_moment_max - h_norm)
        grads.append(g_h)
        layers.append(self.layer_com_moment)

        for k in range(6):
            idx = 4 + k
            c += [self.inertia_max[k] - theta[idx], theta[idx] + self.inertia_max[k]]
            grads += [-e[idx], e[idx]]
            layers += [self.layer_inertia[k], self.layer_inertia[k]]
        return np.array(c), np.array(grads), np.array(layers)

    def contains(self, theta, tol=None):
        tol = self.tolerance if tol is None else tol
        c, _, _ = self.constraints(theta)
        return bool(np.all(c >= -tol))

    def repair(self, theta):
        """Return the nearest-ish point satisfying every hard constraint.

        Applied after each integration step so that discretisation overshoot
        never leaves the feasible set; a no-op for feasible points.
        """
        theta = np.array(theta, dtype=float)
        theta[0] = np.clip(theta[0], self.mass_min, self.mass_max)
        h_norm = np.linalg.norm(theta[1:4])
        if h_norm > self.com_moment_max:
            theta[1:4] *= self.com_moment_max / h_norm
        theta[4:10] = np.clip(theta[4:10], -self.inertia_max, self.inertia_max)
        P = to_pseudo_inertia(theta)
        w, V = np.linalg.eigh(P)
        if w[0] < self.eps_p:
            P = (V * np.maximum(w, self.eps_p)) @ V.T
            theta = from_pseudo_inertia(0.5 * (P + P.T))
        return theta


def smooth_project(theta, rate, bounds, metric=None):
    """Smooth projection of a parameter rate onto the feasible set.

    Inside the set and away from the boundary layers the rate is returned
    unchanged.  In the layer of the most-violated face, the component of
    ``rate`` that decreases that face's margin is removed in proportion to
    the layer penetration (fully at the hard boundary).  With ``metric``
    (e.g. the pullback metric) the correction follows ``metric^-1 grad c``,
    so the projected rate never increases the divergence to any feasible
    point faster than the raw rate does.
    """
    rate = np.array(rate, dtype=float)
    c, grads, layers = bounds.constraints(theta)
    if np.any(c < -bounds.tolerance):
        k = int(np.argmin(c))
        raise InfeasibleStateError(f"constraint {k} violated by {-c[k]:.3e}")
    depth = np.clip(1.0 - c / layers, 0.0, 1.0)
    k = int(np.argmax(depth))
    if depth[k] <= 0.0:
        return rate
    grad = grads[k]
    inward = grad @ rate
    if inward >= 0.0:
        return rate
    direction = grad if metric is None else np.linalg.solve(metric, grad)
    return rate - depth[k] * inward / (grad @ direction) * direction


def random_consistent_params(rng, mass_range=(0.5, 50.0), size_range=(0.05, 2.0)):
    """Random physically consistent parameters (a random rigid body)."""
    m = rng.uniform(*mass_range)
    axes = rng.uniform(*size_range, size=3)
    # second moments of a solid ellipsoid in its principal frame
    Sigma_c = m * np.diag(axes**2) / 5.0
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    Sigma_c = Q @ Sigma_c @ Q.T
    c = rng.normal(scale=size_range[1] / 2.0, size=3)
    P = np.zeros((4, 4))
    P[:3, :3] = Sigma_c + m * np.outer(c, c)
    P[:3, 3] = m * c
    P[3, :3] = m * c
    P[3, 3] = m
    return from_pseudo_inertia(P)
