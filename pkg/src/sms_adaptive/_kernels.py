"""Compiled numerical kernels shared by the dynamics, estimator and stepper.

Spatial vectors are ordered ``[linear; angular]`` and expressed in the frame
of the body they belong to.  A chain with ``n`` joints has bodies
``0..n`` (body 0 is the base) and ``N = 6 + n`` generalized velocities.

``links[j]`` is the fixed transform from body frame ``j`` to the frame in
which joint ``j + 1`` rotates about its local z axis; ``links[n]`` is the
transform from the last body to the end-effector frame.
"""

import numpy as np
from numba import njit

CACHE = True


@njit(cache=CACHE)
def skew3(v):
    S = np.zeros((3, 3))
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    return S


@njit(cache=CACHE)
def cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=CACHE)
def so3_exp(phi):
    th2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    K = skew3(phi)
    if th2 < 1e-12:
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return np.eye(3) + a * K + b * (K @ K)


@njit(cache=CACHE)
def so3_dexp_inv(phi):
    th2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    K = skew3(phi)
    if th2 < 1e-8:
        c = 1.0 / 12.0 + th2 / 720.0
    else:
        th = np.sqrt(th2)
        c = (1.0 - 0.5 * th / np.tan(0.5 * th)) / th2
    return np.eye(3) + 0.5 * K + c * (K @ K)


@njit(cache=CACHE)
def rotz_transform(angle):
    T = np.eye(4)
    c = np.cos(angle)
    s = np.sin(angle)
    T[0, 0] = c
    T[0, 1] = -s
    T[1, 0] = s
    T[1, 1] = c
    return T


@njit(cache=CACHE)
def adjoint_inverse(T):
    """Twist transform from a parent frame to the child frame ``T`` (parent -> child)."""
    R = T[:3, :3]
    Rt = R.T.copy()
    X = np.zeros((6, 6))
    X[:3, :3] = Rt
    X[:3, 3:] = -Rt @ skew3(T[:3, 3].copy())
    X[3:, 3:] = Rt
    return X


@njit(cache=CACHE)
def kinematics(links, offsets, q):
    """Body poses relative to the base, child-from-parent twist transforms, Jacobians."""
    n = q.shape[0]
    N = 6 + n
    T = np.empty((n + 1, 4, 4))
    X = np.empty((n + 1, 6, 6))
    J = np.zeros((n + 1, 6, N))
    T[0] = np.eye(4)
    X[0] = np.eye(6)
    for i in range(6):
        J[0, i, i] = 1.0
    for j in range(1, n + 1):
        Trel = links[j - 1] @ rotz_transform(q[j - 1] + offsets[j - 1])
        T[j] = T[j - 1] @ Trel
        X[j] = adjoint_inverse(Trel)
        J[j] = X[j] @ J[j - 1]
        J[j, 5, 5 + j] += 1.0
    return T, X, J


@njit(cache=CACHE)
def spatial_inertia(th):
    """6x6 inertia acting on ``[v; w]``: momentum ``[m v + w x h; h x v + I w]``."""
    Ib = np.zeros((6, 6))
    m = th[0]
    h = th[1:4].copy()
    for i in range(3):
        Ib[i, i] = m
    H = skew3(h)
    Ib[:3, 3:] = -H
    Ib[3:, :3] = H
    Ib[3, 3] = th[4]
    Ib[4, 4] = th[5]
    Ib[5, 5] = th[6]
    Ib[3, 4] = th[7]
    Ib[4, 3] = th[7]
    Ib[4, 5] = th[8]
    Ib[5, 4] = th[8]
    Ib[3, 5] = th[9]
    Ib[5, 3] = th[9]
    return Ib


@njit(cache=CACHE)
def force_cross(V, F):
    """Dual cross product ``V x* F`` for twist ``[v; w]`` and wrench ``[f; n]``."""
    out = np.empty(6)
    out[0] = V[4] * F[2] - V[5] * F[1]
    out[1] = V[5] * F[0] - V[3] * F[2]
    out[2] = V[3] * F[1] - V[4] * F[0]
    out[3] = V[1] * F[2] - V[2] * F[1] + V[4] * F[5] - V[5] * F[4]
    out[4] = V[2] * F[0] - V[0] * F[2] + V[5] * F[3] - V[3] * F[5]
    out[5] = V[0] * F[1] - V[1] * F[0] + V[3] * F[4] - V[4] * F[3]
    return out


@njit(cache=CACHE)
def dual_cross_matrix(V):
    """``crf(V)`` with ``crf(V) @ F == V x* F``."""
    W = skew3(V[3:].copy())
    B = np.zeros((6, 6))
    B[:3, :3] = W
    B[3:, :3] = skew3(V[:3].copy())
    B[3:, 3:] = W
    return B


@njit(cache=CACHE)
def force_cross_matrix(F):
    """``B(F)`` with ``B(F) @ V == V x* F``; skew-symmetric."""
    Fm = skew3(F[:3].copy())
    Nm = skew3(F[3:].copy())
    B = np.zeros((6, 6))
    B[:3, 3:] = -Fm
    B[3:, :3] = -Fm
    B[3:, 3:] = -Nm
    return B


@njit(cache=CACHE)
def ad_joint_axis(V):
    """``ad_V S`` for the revolute axis ``S = [0; e_z]``."""
    out = np.zeros(6)
    out[0] = V[1]
    out[1] = -V[0]
    out[3] = V[4]
    out[4] = -V[3]
    return out


@njit(cache=CACHE)
def jdot_product(X, J, qd_c, v_m):
    """``dJ_j/dt @ v_m`` for every body when the joints move at ``qd_c``."""
    nb = J.shape[0]
    A = np.zeros((nb, 6))
    for j in range(1, nb):
        Vm = J[j] @ v_m
        A[j] = X[j] @ A[j - 1] + qd_c[j - 1] * ad_joint_axis(Vm)
    return A


@njit(cache=CACHE)
def jdot_matrices(X, J, qd_c):
    nb, _, N = J.shape
    Jd = np.zeros((nb, 6, N))
    for j in range(1, nb):
        Jd[j] = X[j] @ Jd[j - 1]
        # - qd * ad_S J : apply [e_z]x to the linear and angular rows
        for c in range(N):
            Jd[j, 0, c] += qd_c[j - 1] * J[j, 1, c]
            Jd[j, 1, c] -= qd_c[j - 1] * J[j, 0, c]
            Jd[j, 3, c] += qd_c[j - 1] * J[j, 4, c]
            Jd[j, 4, c] -= qd_c[j - 1] * J[j, 3, c]
    return Jd


@njit(cache=CACHE)
def mass_matrix(J, thetas):
    nb, _, N = J.shape
    M = np.zeros((N, N))
    for j in range(nb):
        M += J[j].T @ (spatial_inertia(thetas[j]) @ J[j])
    return 0.5 * (M + M.T)


@njit(cache=CACHE)
def coriolis_matrix(X, J, thetas, v_c):
    nb, _, N = J.shape
    Jd = jdot_matrices(X, J, v_c[6:])
    C = np.zeros((N, N))
    for j in range(nb):
        Ib = spatial_inertia(thetas[j])
        Vc = J[j] @ v_c
        C += J[j].T @ (Ib @ Jd[j] + force_cross_matrix(Ib @ Vc) @ J[j])
    return C


@njit(cache=CACHE)
def dynamics_product(X, J, thetas, v_c, v_m, a):
    """``M a + C(v_c) v_m`` without forming either matrix."""
    nb, _, N = J.shape
    A = jdot_product(X, J, v_c[6:], v_m)
    out = np.zeros(N)
    for j in range(nb):
        Ib = spatial_inertia(thetas[j])
        Vc = J[j] @ v_c
        Vm = J[j] @ v_m
        F = Ib @ (J[j] @ a + A[j]) + force_cross(Vm, Ib @ Vc)
        out += J[j].T @ F
    return out


@njit(cache=CACHE)
def inertia_regressor(V):
    """``K(V)`` with ``K(V) @ theta == spatial_inertia(theta) @ V``."""
    K = np.zeros((6, 10))
    v = V[:3]
    w = V[3:]
    K[0, 0] = v[0]
    K[1, 0] = v[1]
    K[2, 0] = v[2]
    # w x h -> -[w]x h ; h x v -> -[v]x h
    K[0, 2] = -w[2]
    K[0, 3] = w[1]
    K[1, 1] = w[2]
    K[1, 3] = -w[0]
    K[2, 1] = -w[1]
    K[2, 2] = w[0]
    K[3, 2] = v[2]
    K[3, 3] = -v[1]
    K[4, 1] = -v[2]
    K[4, 3] = v[0]
    K[5, 1] = v[1]
    K[5, 2] = -v[0]
    # I w with I entries ordered xx, yy, zz, xy, yz, zx
    K[3, 4] = w[0]
    K[4, 5] = w[1]
    K[5, 6] = w[2]
    K[3, 7] = w[1]
    K[4, 7] = w[0]
    K[4, 8] = w[2]
    K[5, 8] = w[1]
    K[3, 9] = w[2]
    K[5, 9] = w[0]
    return K


@njit(cache=CACHE)
def regressor_blocks(X, J, v_c, v_m, a):
    """Per-body regressor blocks ``Y_j`` (nb, N, 10): ``sum_j Y_j theta_j = M a + C(v_c) v_m``."""
    nb, _, N = J.shape
    A = jdot_product(X, J, v_c[6:], v_m)
    Y = np.zeros((nb, N, 10))
    for j in range(nb):
        Vc = J[j] @ v_c
        Vm = J[j] @ v_m
        K = inertia_regressor(J[j] @ a + A[j]) + dual_cross_matrix(Vm) @ inertia_regressor(Vc)
        Y[j] = J[j].T @ K
    return Y


# ---------------------------------------------------------------------------
# Inertial-parameter geometry
# ---------------------------------------------------------------------------


@njit(cache=CACHE)
def pseudo_inertia(th):
    P = np.empty((4, 4))
    xx, yy, zz, xy, yz, zx = th[4], th[5], th[6], th[7], th[8], th[9]
    half_tr = 0.5 * (xx + yy + zz)
    P[0, 0] = half_tr - xx
    P[1, 1] = half_tr - yy
    P[2, 2] = half_tr - zz
    P[0, 1] = -xy
    P[1, 0] = -xy
    P[1, 2] = -yz
    P[2, 1] = -yz
    P[0, 2] = -zx
    P[2, 0] = -zx
    P[0, 3] = th[1]
    P[1, 3] = th[2]
    P[2, 3] = th[3]
    P[3, 0] = th[1]
    P[3, 1] = th[2]
    P[3, 2] = th[3]
    P[3, 3] = th[0]
    return P


@njit(cache=CACHE)
def params_from_pseudo(P):
    th = np.empty(10)
    tr = P[0, 0] + P[1, 1] + P[2, 2]
    th[0] = P[3, 3]
    th[1] = P[0, 3]
    th[2] = P[1, 3]
    th[3] = P[2, 3]
    th[4] = tr - P[0, 0]
    th[5] = tr - P[1, 1]
    th[6] = tr - P[2, 2]
    th[7] = -P[0, 1]
    th[8] = -P[1, 2]
    th[9] = -P[0, 2]
    return th


@njit(cache=CACHE)
def pseudo_basis():
    F = np.empty((10, 4, 4))
    for i in range(10):
        e = np.zeros(10)
        e[i] = 1.0
        F[i] = pseudo_inertia(e)
    return F


@njit(cache=CACHE)
def metric(P, F, scale):
    Pinv = np.linalg.inv(P)
    A = np.empty((10, 4, 4))
    for i in range(10):
        A[i] = Pinv @ F[i]
    g = np.empty((10, 10))
    for i in range(10):
        for k in range(i, 10):
            s = 0.0
            for a in range(4):
                for b in range(4):
                    s += A[i, a, b] * A[k, b, a]
            g[i, k] = scale * s
            g[k, i] = g[i, k]
    return g


@njit(cache=CACHE)
def natural_direction(P, y):
    """``g^-1 y`` for the unit-scale affine-invariant metric at ``P``.

    With ``Z`` the symmetric matrix satisfying ``tr(F_i Z) = y_i`` the
    result is ``f^-1(P Z P)``; no 10x10 metric is formed.
    """
    Z = np.empty((4, 4))
    Z[0, 0] = y[5] + y[6]
    Z[1, 1] = y[4] + y[6]
    Z[2, 2] = y[4] + y[5]
    Z[3, 3] = y[0]
    Z[0, 1] = Z[1, 0] = -0.5 * y[7]
    Z[1, 2] = Z[2, 1] = -0.5 * y[8]
    Z[0, 2] = Z[2, 0] = -0.5 * y[9]
    for i in range(3):
        Z[i, 3] = Z[3, i] = 0.5 * y[1 + i]
    return params_from_pseudo(P @ Z @ P)


# bounds row layout
B_MASS_MIN, B_MASS_MAX, B_H_MAX, B_EPS, B_L_CONS, B_L_MASS, B_L_H, B_TOL = 0, 1, 2, 3, 4, 5, 6, 7
B_I_MAX = 8
B_L_I = 14
B_SIZE = 20
N_FACES = 16  # consistency, two mass faces, |h|, twelve inertia-entry faces


@njit(cache=CACHE)
def constraint_set(th, b, F):
    """Margins, gradients and layer widths of every face (see ``ParamBounds``)."""
    c = np.empty(N_FACES)
    G = np.zeros((N_FACES, 10))
    L = np.empty(N_FACES)
    w, V = np.linalg.eigh(pseudo_inertia(th))
    v = V[:, 0].copy()
    c[0] = w[0] - b[B_EPS]
    for i in range(10):
        G[0, i] = v @ (F[i] @ v)
    L[0] = b[B_L_CONS]
    c[1] = th[0] - b[B_MASS_MIN]
    G[1, 0] = 1.0
    c[2] = b[B_MASS_MAX] - th[0]
    G[2, 0] = -1.0
    L[1] = b[B_L_MASS]
    L[2] = b[B_L_MASS]
    hn = np.sqrt(th[1] ** 2 + th[2] ** 2 + th[3] ** 2)
    c[3] = b[B_H_MAX] - hn
    if hn > 0.0:
        for i in range(3):
            G[3, 1 + i] = -th[1 + i] / hn
    L[3] = b[B_L_H]
    for k in range(6):
        idx = 4 + k
        c[4 + 2 * k] = b[B_I_MAX + k] - th[idx]
        G[4 + 2 * k, idx] = -1.0
        c[5 + 2 * k] = th[idx] + b[B_I_MAX + k]
        G[5 + 2 * k, idx] = 1.0
        L[4 + 2 * k] = b[B_L_I + k]
        L[5 + 2 * k] = b[B_L_I + k]
    return c, G, L


@njit(cache=CACHE)
def project_rate(th, rate, b, F, use_metric):
    """Smooth projection; returns (projected rate, worst violation)."""
    c, G, L = constraint_set(th, b, F)
    worst = 0.0
    kmax = -1
    dmax = 0.0
    for k in range(c.shape[0]):
        if -c[k] > worst:
            worst = -c[k]
        d = 1.0 - c[k] / L[k]
        if d > 1.0:
            d = 1.0
        if d > dmax:
            dmax = d
            kmax = k
    out = rate.copy()
    if kmax < 0:
        return out, worst
    grad = G[kmax].copy()
    inward = grad @ rate
    if inward >= 0.0:
        return out, worst
    if use_metric:
        direction = natural_direction(pseudo_inertia(th), grad)
    else:
        direction = grad
    out -= dmax * inward / (grad @ direction) * direction
    return out, worst


@njit(cache=CACHE)
def project_box_rate(x, rate, lo, hi, layer):
    """Componentwise smooth projection onto ``[lo, hi]`` with inner layers."""
    out = rate.copy()
    for i in range(x.shape[0]):
        if rate[i] < 0.0:
            d = 1.0 - (x[i] - lo) / layer
        else:
            d = 1.0 - (hi - x[i]) / layer
        if d > 0.0:
            if d > 1.0:
                d = 1.0
            out[i] = rate[i] * (1.0 - d)
    return out


# ---------------------------------------------------------------------------
# Joint right-hand side of plant, observer and adaptation
# ---------------------------------------------------------------------------


@njit(cache=CACHE)
def stage_rhs(
    y, R0, links, offsets, theta_true, u_plant, u_est,
    K_obs, gamma, adapt, metric_scale, use_metric, bounds,
    gamma_lambda, lam_lo, lam_hi, lam_layer, adapt_lambda, F,
):
    """Time derivative of the stacked state.

    Layout: ``[p(3), phi(3), q(n), xd(N), xh(N), theta_hat(10 nb), lambda_hat(N)]``
    with the base attitude ``R0 @ exp(phi)``.
    Also returns the observer acceleration and the worst projection violation.
    """
    n = offsets.shape[0]
    N = 6 + n
    nb = n + 1
    o_q = 6
    o_xd = o_q + n
    o_xh = o_xd + N
    o_th = o_xh + N
    o_lam = o_th + 10 * nb
    phi = y[3:6].copy()
    q = y[o_q:o_xd].copy()
    xd = y[o_xd:o_xh].copy()
    xh = y[o_xh:o_th].copy()
    th_hat = y[o_th:o_lam].copy().reshape((nb, 10))
    lam = y[o_lam:o_lam + N].copy()

    dy = np.zeros(y.shape[0])
    R = R0 @ so3_exp(phi)
    dy[0:3] = R @ xd[0:3]
    dy[3:6] = so3_dexp_inv(phi) @ xd[3:6]
    dy[o_q:o_xd] = xd[6:]

    T, X, J = kinematics(links, offsets, q)
    zero = np.zeros(N)

    # plant
    M = mass_matrix(J, theta_true)
    bias = dynamics_product(X, J, theta_true, xd, xd, zero)
    xdd = np.linalg.solve(M, u_plant - bias)
    dy[o_xd:o_xh] = xdd

    # observer
    err = xd - xh
    Mh = mass_matrix(J, th_hat)
    bias_h = dynamics_product(X, J, th_hat, xd, xh, zero)
    xhdd = np.linalg.solve(Mh, lam * u_est - bias_h + K_obs @ err)
    dy[o_xh:o_th] = xhdd

    # parameter adaptation
    worst = 0.0
    Y = regressor_blocks(X, J, xd, xh, xhdd)
    for j in range(nb):
        if adapt[j] == 0.0:
            continue
        th = th_hat[j].copy()
        grad = Y[j].T @ err
        if use_metric:
            raw = -gamma[j] / metric_scale * natural_direction(pseudo_inertia(th), grad)
        else:
            raw = -gamma[j] * grad
        rate, viol = project_rate(th, raw, bounds[j], F, use_metric)
        if viol > worst:
            worst = viol
        dy[o_th + 10 * j:o_th + 10 * j + 10] = rate

    # efficiency adaptation
    if adapt_lambda:
        raw_l = gamma_lambda * (u_est * err)
        dy[o_lam:o_lam + N] = project_box_rate(lam, raw_l, lam_lo, lam_hi, lam_layer)
    return dy, xhdd, worst


@njit(cache=CACHE)
def rk4_step(
    y, dt, R0, links, offsets, theta_true, u_plant, u_est,
    K_obs, gamma, adapt, metric_scale, use_metric, bounds,
    gamma_lambda, lam_lo, lam_hi, lam_layer, adapt_lambda, F,
):
    k1, a1, w1 = stage_rhs(y, R0, links, offsets, theta_true, u_plant, u_est, K_obs, gamma, adapt,
                           metric_scale, use_metric, bounds, gamma_lambda, lam_lo, lam_hi, lam_layer,
                           adapt_lambda, F)
    k2, a2, w2 = stage_rhs(y + 0.5 * dt * k1, R0, links, offsets, theta_true, u_plant, u_est, K_obs, gamma,
                           adapt, metric_scale, use_metric, bounds, gamma_lambda, lam_lo, lam_hi, lam_layer,
                           adapt_lambda, F)
    k3, a3, w3 = stage_rhs(y + 0.5 * dt * k2, R0, links, offsets, theta_true, u_plant, u_est, K_obs, gamma,
                           adapt, metric_scale, use_metric, bounds, gamma_lambda, lam_lo, lam_hi, lam_layer,
                           adapt_lambda, F)
    k4, a4, w4 = stage_rhs(y + dt * k3, R0, links, offsets, theta_true, u_plant, u_est, K_obs, gamma,
                           adapt, metric_scale, use_metric, bounds, gamma_lambda, lam_lo, lam_hi, lam_layer,
                           adapt_lambda, F)
    worst = max(max(w1, w2), max(w3, w4))
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), a1, worst


@njit(cache=CACHE)
def repair_params(th, b):
    """Hard-constraint repair of one body (mirrors ``ParamBounds.repair``)."""
    out = th.copy()
    out[0] = min(max(out[0], b[B_MASS_MIN]), b[B_MASS_MAX])
    hn = np.sqrt(out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    if hn > b[B_H_MAX]:
        for i in range(3):
            out[1 + i] *= b[B_H_MAX] / hn
    for k in range(6):
        lim = b[B_I_MAX + k]
        out[4 + k] = min(max(out[4 + k], -lim), lim)
    P = pseudo_inertia(out)
    w, V = np.linalg.eigh(P)
    if w[0] < b[B_EPS]:
        for i in range(4):
            if w[i] < b[B_EPS]:
                w[i] = b[B_EPS]
        P = (V * w) @ V.T
        out = params_from_pseudo(0.5 * (P + P.T))
    return out


@njit(cache=CACHE)
def repair_state(y, n, bounds, adapt, lam_lo, lam_hi):
    """Re-assert the estimator constraints after a step; returns the largest correction."""
    N = 6 + n
    o_th = 6 + n + 2 * N
    o_lam = o_th + 10 * (n + 1)
    biggest = 0.0
    for j in range(n + 1):
        if adapt[j] == 0.0:
            continue
        th = y[o_th + 10 * j:o_th + 10 * j + 10].copy()
        fixed = repair_params(th, bounds[j])
        d = np.abs(fixed - th).max()
        if d > 0.0:
            y[o_th + 10 * j:o_th + 10 * j + 10] = fixed
            if d > biggest:
                biggest = d
    for i in range(N):
        x = y[o_lam + i]
        c = min(max(x, lam_lo), lam_hi)
        if c != x:
            y[o_lam + i] = c
            if abs(c - x) > biggest:
                biggest = abs(c - x)
    return biggest


@njit(cache=CACHE)
def body_min_eigs(y, n):
    """Smallest pseudo-inertia eigenvalue of every estimated body."""
    N = 6 + n
    o_th = 6 + n + 2 * N
    out = np.empty(n + 1)
    for j in range(n + 1):
        th = y[o_th + 10 * j:o_th + 10 * j + 10].copy()
        out[j] = np.linalg.eigvalsh(pseudo_inertia(th))[0]
    return out


@njit(cache=CACHE)
def log_det_divergence(P1, P2):
    """``log(det P1 / det P2) + tr(P1^-1 P2) - 4`` via Cholesky factors."""
    L1 = np.linalg.cholesky(P1)
    L2 = np.linalg.cholesky(P2)
    ld = 0.0
    for i in range(4):
        ld += 2.0 * (np.log(L1[i, i]) - np.log(L2[i, i]))
    return ld + np.trace(np.linalg.solve(P1, P2)) - 4.0


@njit(cache=CACHE)
def lyapunov(y, links, offsets, theta_true, lam_true, gamma, adapt, metric_scale, gamma_lambda):
    """Truth-based Lyapunov function of the stacked state (see ``estimator.lyapunov_value``)."""
    n = offsets.shape[0]
    N = 6 + n
    nb = n + 1
    o_xd = 6 + n
    o_xh = o_xd + N
    o_th = o_xh + N
    o_lam = o_th + 10 * nb
    q = y[6:o_xd].copy()
    e = y[o_xd:o_xh] - y[o_xh:o_th]
    _, _, J = kinematics(links, offsets, q)
    M = mass_matrix(J, theta_true)
    V = 0.5 * e @ (M @ e)
    for i in range(N):
        dl = y[o_lam + i] - lam_true[i]
        V += 0.5 * dl * dl / gamma_lambda[i]
    for j in range(nb):
        if adapt[j] != 0.0:
            th = y[o_th + 10 * j:o_th + 10 * j + 10].copy()
            V += log_det_divergence(pseudo_inertia(th), pseudo_inertia(theta_true[j])) / (
                2.0 * metric_scale * gamma[j])
    return V
