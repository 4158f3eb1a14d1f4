"""Floating-base rigid multibody dynamics in body-frame coordinates.

The generalized velocity is ``xdot = [v_b, w_b, qdot]``: base linear and
angular velocity in the base frame, then joint rates.  Body ``j`` carries a
frame ``G_j`` whose origin lies on joint ``j`` and whose z axis is that
joint's axis (body 0 is the base, ``G_0 = B``).  Each body's inertial
parameters are expressed in its own frame, so the mass and Coriolis matrices
do not depend on the base pose.

The equations of motion are

    M(q, theta) xddot + C(q, xdot, theta) xdot = u_eff

with ``M = sum_j J_j^T I_j J_j`` and ``C`` chosen so that ``dM/dt - 2 C`` is
skew-symmetric.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .inertia import N_PARAMS


class SingularMassMatrixError(np.linalg.LinAlgError):
    pass


def dh_transform(a, alpha, d):
    """Fixed part of a DH row, ``Tz(d) Tx(a) Rx(alpha)``."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [[1.0, 0.0, 0.0, a], [0.0, ca, -sa, 0.0], [0.0, sa, ca, d], [0.0, 0.0, 0.0, 1.0]]
    )


def rigid_transform(R=None, p=None):
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if p is not None:
        T[:3, 3] = p
    return T


class ChainModel:
    """Base body plus a serial chain of revolute joints described by DH rows.

    Parameters
    ----------
    dh : array_like, shape (n, 4)
        Rows ``(a, alpha, d, offset)``.  Joint ``j`` rotates by
        ``q_j + offset_j`` about the z axis of ``G_j``; the fixed transform
        ``Tz(d_j) Tx(a_j) Rx(alpha_j)`` then leads to joint ``j + 1`` (or to
        the end-effector frame for the last row).
    base_mount : (4, 4) array
        Transform from the base frame to the frame of joint 1 (before its
        rotation).
    """

    def __init__(self, dh, base_mount=None):
        dh = np.asarray(dh, dtype=float).reshape(-1, 4)
        if not np.all(np.isfinite(dh)):
            raise ValueError("DH rows must be finite")
        mount = np.eye(4) if base_mount is None else np.asarray(base_mount, dtype=float)
        R = mount[:3, :3]
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("base mount is not a rigid transform")
        self.dh = dh
        self.base_mount = mount
        self.n = dh.shape[0]
        self.offsets = dh[:, 3].copy()
        links = [mount] + [dh_transform(a, al, d) for a, al, d, _ in dh]
        self.links = np.ascontiguousarray(links)
        self.dof = 6 + self.n
        self.n_bodies = self.n + 1

    def to_dict(self):
        return {
            "dh_rows_m_rad": [list(map(float, r)) for r in self.dh],
            "base_mount": {
                "rotation": [list(map(float, r)) for r in self.base_mount[:3, :3]],
                "position_m": list(map(float, self.base_mount[:3, 3])),
            },
        }

    @classmethod
    def from_dict(cls, d):
        mount = rigid_transform(np.asarray(d["base_mount"]["rotation"]), d["base_mount"]["position_m"])
        return cls(np.asarray(d["dh_rows_m_rad"], dtype=float).reshape(-1, 4), mount)


class SystemState:
    """Base pose, joint positions and generalized velocity."""

    def __init__(self, p_b, R_b, q, xdot):
        self.p_b = np.asarray(p_b, dtype=float)
        self.R_b = np.asarray(R_b, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.xdot = np.asarray(xdot, dtype=float)
        if self.xdot.shape != (6 + self.q.shape[0],):
            raise ValueError("xdot must have 6 + n entries")

    @classmethod
    def at_rest(cls, model, q=None):
        q = np.zeros(model.n) if q is None else q
        return cls(np.zeros(3), np.eye(3), q, np.zeros(model.dof))

    def copy(self):
        return SystemState(self.p_b.copy(), self.R_b.copy(), self.q.copy(), self.xdot.copy())


def as_param_matrix(theta, n_bodies=None):
    """Stacked parameters (base first) as an ``(n + 1, 10)`` array."""
    theta = np.asarray(theta, dtype=float)
    mat = np.ascontiguousarray(theta.reshape(-1, N_PARAMS))
    if n_bodies is not None and mat.shape[0] != n_bodies:
        raise ValueError(f"expected {n_bodies} bodies, got {mat.shape[0]}")
    return mat


def _kin(model, q):
    q = np.ascontiguousarray(q, dtype=float)
    if q.shape != (model.n,):
        raise ValueError(f"expected {model.n} joint positions")
    return K.kinematics(model.links, model.offsets, q)


class Kinematics:
    """Result of ``forward_kinematics``.

    Attributes
    ----------
    body_poses : (n + 1, 4, 4)
        Poses of the body frames ``G_j`` in the inertial frame.
    ee_pose : (4, 4)
    jacobians : (n + 1, 6, 6 + n)
        ``jacobians[j] @ xdot`` is body ``j``'s twist ``[v; w]`` in ``G_j``.
    ee_jacobian : (6, 6 + n)
        Twist of the end-effector frame in its own coordinates.
    """

    def __init__(self, body_poses, ee_pose, jacobians, ee_jacobian):
        self.body_poses = body_poses
        self.ee_pose = ee_pose
        self.jacobians = jacobians
        self.ee_jacobian = ee_jacobian


def forward_kinematics(model, state):
    T, _, J = _kin(model, state.q)
    base = rigid_transform(state.R_b, state.p_b)
    poses = np.einsum("ab,jbc->jac", base, T)
    T_ee = model.links[model.n]
    ee_pose = poses[-1] @ T_ee
    J_ee = K.adjoint_inverse(T_ee) @ J[-1]
    return Kinematics(poses, ee_pose, J, J_ee)


def end_effector_pose(model, q, base_pose=None):
    T, _, _ = _kin(model, q)
    ee = T[-1] @ model.links[model.n]
    return ee if base_pose is None else base_pose @ ee


def mass_matrix(model, q, theta):
    _, _, J = _kin(model, q)
    return K.mass_matrix(J, as_param_matrix(theta, model.n_bodies))


def coriolis_matrix(model, q, xdot, theta):
    _, X, J = _kin(model, q)
    return K.coriolis_matrix(X, J, as_param_matrix(theta, model.n_bodies), np.asarray(xdot, dtype=float))


def coriolis_product(model, q, v_coriolis, v_mult, theta):
    """``C(q, v_coriolis, theta) @ v_mult`` without forming C."""
    _, X, J = _kin(model, q)
    zero = np.zeros(model.dof)
    return K.dynamics_product(
        X, J, as_param_matrix(theta, model.n_bodies), np.asarray(v_coriolis, float), np.asarray(v_mult, float), zero
    )


def inverse_dynamics(model, q, xdot, xddot, theta):
    """Generalized force ``M xddot + C(xdot) xdot``."""
    _, X, J = _kin(model, q)
    xdot = np.asarray(xdot, dtype=float)
    return K.dynamics_product(X, J, as_param_matrix(theta, model.n_bodies), xdot, xdot, np.asarray(xddot, float))


def regressor(model, q, v_coriolis, v_mult, a, body=None):
    """Regressor ``Y`` with ``Y @ theta == M a + C(v_coriolis) v_mult`` for every theta.

    With ``body=j`` only the ``(6 + n) x 10`` block multiplying ``theta_j``
    is returned.
    """
    _, X, J = _kin(model, q)
    Y = K.regressor_blocks(
        X, J, np.asarray(v_coriolis, float), np.asarray(v_mult, float), np.asarray(a, float)
    )
    if body is not None:
        return Y[body]
    return np.concatenate(list(Y), axis=1)


def regressor_by_basis(model, q, v_coriolis, v_mult, a):
    """Same as ``regressor`` but built column by column from basis parameter vectors."""
    _, X, J = _kin(model, q)
    n_par = N_PARAMS * model.n_bodies
    vc, vm, aa = (np.asarray(v, dtype=float) for v in (v_coriolis, v_mult, a))
    cols = []
    for k in range(n_par):
        e = np.zeros(n_par)
        e[k] = 1.0
        cols.append(K.dynamics_product(X, J, e.reshape(-1, N_PARAMS), vc, vm, aa))
    return np.array(cols).T


def forward_dynamics(model, q, xdot, u_eff, theta, max_condition=1e12):
    theta = as_param_matrix(theta, model.n_bodies)
    _, X, J = _kin(model, q)
    M = K.mass_matrix(J, theta)
    if np.linalg.cond(M) > max_condition:
        raise SingularMassMatrixError("mass matrix is numerically singular (inconsistent parameters?)")
    xdot = np.asarray(xdot, dtype=float)
    bias = K.dynamics_product(X, J, theta, xdot, xdot, np.zeros(model.dof))
    return np.linalg.solve(M, np.asarray(u_eff, dtype=float) - bias)


def total_momentum(model, state, theta):
    """Linear and angular momentum (about the inertial origin) in the inertial frame."""
    theta = as_param_matrix(theta, model.n_bodies)
    kin = forward_kinematics(model, state)
    lin = np.zeros(3)
    ang = np.zeros(3)
    for j in range(model.n_bodies):
        R = kin.body_poses[j][:3, :3]
        p = kin.body_poses[j][:3, 3]
        hb = K.spatial_inertia(theta[j]) @ (kin.jacobians[j] @ state.xdot)
        lj = R @ hb[:3]
        lin += lj
        ang += R @ hb[3:] + np.cross(p, lj)
    return np.concatenate([lin, ang])


def kinetic_energy(model, q, xdot, theta):
    xdot = np.asarray(xdot, dtype=float)
    return 0.5 * xdot @ mass_matrix(model, q, theta) @ xdot
