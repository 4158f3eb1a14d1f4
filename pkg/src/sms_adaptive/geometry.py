"""Rotation, cross-product and Modified Rodrigues Parameter (MRP) kinematics.

Conventions
-----------
Rotations are active 3x3 matrices.  ``R`` maps vectors expressed in a body
frame into the frame it is measured against, and the body-frame angular
velocity ``w`` satisfies ``dR/dt = R @ skew(w)``.  The MRP vector of a
rotation by angle ``phi`` about the unit axis ``e`` is ``tan(phi / 4) * e``.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

PAPER = "paper"
STANDARD = "standard"
MRP_FORMS = (PAPER, STANDARD)


class SingularOrientationError(ValueError):
    """Raised when an MRP is requested at its 2*pi singularity."""


def skew(v):
    """Cross-product matrix, ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(S):
    return np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]]) / 2.0


def is_rotation(R, tol=1e-12):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (np.abs(R.T @ R - np.eye(3)).max() <= tol) and abs(np.linalg.det(R) - 1.0) <= tol


def so3_exp(phi):
    """Rotation matrix ``exp(skew(phi))`` (Rodrigues formula)."""
    phi = np.asarray(phi, dtype=float)
    th2 = float(phi @ phi)
    K = skew(phi)
    if th2 < 1e-12:
        # series to O(th^4); exact to machine precision in this range
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R):
    """Rotation vector ``phi`` with ``so3_exp(phi) == R`` and ``|phi| <= pi``."""
    sigma = mrp_from_rotation(R)
    s2 = float(sigma @ sigma)
    if s2 == 0.0:
        return np.zeros(3)
    s = np.sqrt(s2)
    return 4.0 * np.arctan(s) * sigma / s


def so3_dexp_inv(phi):
    """Inverse of the right-trivialised differential of ``so3_exp`` at ``phi``.

    Used by the Lie-group Runge-Kutta integrator: if ``R = R0 @ exp(phi)``
    then ``dphi/dt = so3_dexp_inv(phi) @ w``.
    """
    phi = np.asarray(phi, dtype=float)
    th2 = float(phi @ phi)
    K = skew(phi)
    if th2 < 1e-8:
        c = 1.0 / 12.0 + th2 / 720.0
    else:
        th = np.sqrt(th2)
        c = (1.0 - 0.5 * th / np.tan(0.5 * th)) / th2
    return np.eye(3) + 0.5 * K + c * (K @ K)


def _quaternion_from_rotation(R):
    # Shepperd's method, scalar first, scalar part made non-negative
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax([tr, *diag]))
    if k == 0:
        w = 0.5 * np.sqrt(max(1.0 + tr, 0.0))
        f = 0.25 / w
        q = np.array([w, (R[2, 1] - R[1, 2]) * f, (R[0, 2] - R[2, 0]) * f, (R[1, 0] - R[0, 1]) * f])
    else:
        i = k - 1
        j, m = (i + 1) % 3, (i + 2) % 3
        v = 0.5 * np.sqrt(max(1.0 + 2.0 * R[i, i] - tr, 0.0))
        f = 0.25 / v
        q = np.empty(4)
        q[0] = (R[m, j] - R[j, m]) * f
        q[1 + i] = v
        q[1 + j] = (R[j, i] + R[i, j]) * f
        q[1 + m] = (R[m, i] + R[i, m]) * f
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def mrp_shadow(sigma):
    """Switch to the shadow set when ``|sigma| > 1``; identity otherwise."""
    sigma = np.asarray(sigma, dtype=float)
    s2 = float(sigma @ sigma)
    if s2 > 1.0:
        return -sigma / s2
    return sigma.copy()


def mrp_from_axis_angle(axis, angle, shadow=True):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    if not shadow:
        wrapped = np.mod(angle, 4.0 * np.pi)
        if abs(wrapped - 2.0 * np.pi) < 1e-6:
            raise SingularOrientationError(f"principal angle {angle!r} is at the MRP singularity")
    sigma = np.tan(angle / 4.0) * axis
    return mrp_shadow(sigma) if shadow else sigma


def mrp_from_rotation(R):
    """MRP of a rotation matrix, on the non-shadow set (``|sigma| <= 1``).

    Any rotation has a principal angle in ``[0, pi]`` so the result is always
    finite; the 2*pi singularity only shows up for integrated MRPs, which
    ``mrp_shadow`` handles.
    """
    q = _quaternion_from_rotation(R)
    return q[1:] / (1.0 + q[0])


def rotation_from_mrp(sigma):
    sigma = np.asarray(sigma, dtype=float)
    s2 = float(sigma @ sigma)
    S = skew(sigma)
    return np.eye(3) + (8.0 * (S @ S) + 4.0 * (1.0 - s2) * S) / (1.0 + s2) ** 2


def mrp_kinematics_matrix(sigma, form=PAPER):
    """Matrix ``G`` in ``dsigma/dt = 0.5 * G(sigma) @ w``.

    ``form="paper"`` returns ``(1 - |s|^2)/2 I + [s]x + [s]x^2`` as written in
    the controller derivation; ``form="standard"`` returns the textbook
    ``(1 - |s|^2)/2 I + [s]x + s s^T``.  The two agree at ``sigma = 0``.
    """
    sigma = np.asarray(sigma, dtype=float)
    s2 = float(sigma @ sigma)
    S = skew(sigma)
    if form == PAPER:
        quad = S @ S
    elif form == STANDARD:
        quad = np.outer(sigma, sigma)
    else:
        raise ValueError(f"unknown MRP kinematics form {form!r}; expected one of {MRP_FORMS}")
    return 0.5 * (1.0 - s2) * np.eye(3) + S + quad


def mrp_rate(sigma, w, form=STANDARD):
    return 0.5 * mrp_kinematics_matrix(sigma, form) @ np.asarray(w, dtype=float)


def rotation_from_euler_xyz(angles):
    """Rotation from extrinsic x-y-z Euler angles (rad)."""
    return _ScipyRotation.from_euler("xyz", angles).as_matrix()


def euler_xyz_from_rotation(R):
    return _ScipyRotation.from_matrix(R).as_euler("xyz")


def random_rotation(rng):
    """Uniformly distributed rotation drawn from ``rng`` (a numpy Generator)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
