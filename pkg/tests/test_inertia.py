import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sms_adaptive import inertia as inr

EE_TRUE = inr.params(100.0, (0.0, 0.0, 40.0), (80.0, 75.0, 90.0))
EE_PRIOR = inr.params(30.0, (0.0, 0.0, 12.0), (40.0, 40.0, 40.0))


def _random_pair(rng):
    return inr.random_consistent_params(rng), inr.random_consistent_params(rng)


def test_pseudo_inertia_of_grasped_object():
    P = inr.to_pseudo_inertia(EE_TRUE)
    expected = np.array(
        [[42.5, 0.0, 0.0, 0.0], [0.0, 47.5, 0.0, 0.0], [0.0, 0.0, 32.5, 40.0], [0.0, 0.0, 40.0, 100.0]]
    )
    np.testing.assert_array_equal(P, expected)
    np.testing.assert_array_equal(inr.to_pseudo_inertia(np.zeros(10)), np.zeros((4, 4)))


def test_from_pseudo_inertia_examples():
    theta = inr.from_pseudo_inertia(np.eye(4))
    np.testing.assert_array_equal(theta, [1.0, 0, 0, 0, 2.0, 2.0, 2.0, 0, 0, 0])
    np.testing.assert_array_equal(inr.from_pseudo_inertia(np.zeros((4, 4))), np.zeros(10))


def test_round_trip_and_linearity():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        theta = rng.normal(size=10) * 10.0
        worst = max(worst, np.abs(inr.from_pseudo_inertia(inr.to_pseudo_inertia(theta)) - theta).max())
    assert worst < 1e-12
    a, b = rng.normal(size=10), rng.normal(size=10)
    np.testing.assert_allclose(
        inr.to_pseudo_inertia(2.0 * a - b), 2.0 * inr.to_pseudo_inertia(a) - inr.to_pseudo_inertia(b), atol=1e-14
    )


def test_inertial_params_type():
    p = inr.InertialParams(2.0, np.array([0.1, 0.2, 0.3]), np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(np.asarray(p), [2.0, 0.1, 0.2, 0.3, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0])
    back = inr.InertialParams.from_vector(p.vector)
    np.testing.assert_array_equal(back.inertia, p.inertia)


def test_consistency_examples():
    report = inr.is_consistent(EE_TRUE)
    assert report.consistent
    # smallest eigenvalue of [[32.5, 40], [40, 100]]
    expected = 0.5 * (132.5 - np.sqrt(67.5**2 + 4 * 1600))
    assert report.min_eigenvalue == pytest.approx(expected, rel=1e-12)
    assert inr.is_consistent(EE_PRIOR).consistent
    assert not inr.is_consistent(inr.params(-1.0)).consistent
    assert not inr.is_consistent(EE_TRUE, margin=1e3).consistent


def test_point_mass_and_cylinder_are_consistent():
    # a point mass has rank-one pseudo-inertia: consistent only with margin 0 in the limit
    P = inr.to_pseudo_inertia(inr.point_mass_params(2.0, [0.1, 0.2, 0.3]))
    np.testing.assert_allclose(P, 2.0 * np.outer([0.1, 0.2, 0.3, 1.0], [0.1, 0.2, 0.3, 1.0]), atol=1e-15)
    cyl = inr.hollow_cylinder_params(1.15, 0.0635, 0.0135, 2700.0)
    assert inr.is_consistent(cyl).consistent
    r_o, r_i = 0.0635, 0.05
    m = 2700.0 * np.pi * (r_o**2 - r_i**2) * 1.15
    assert cyl[0] == pytest.approx(m)
    np.testing.assert_allclose(cyl[1:4], [0.0, 0.0, m * 0.575])
    assert cyl[6] == pytest.approx(0.5 * m * (r_o**2 + r_i**2))
    # transverse inertia about the end point: m(3(ro^2+ri^2)+L^2)/12 + m(L/2)^2
    assert cyl[4] == pytest.approx(m * (3 * (r_o**2 + r_i**2) + 1.15**2) / 12 + m * 0.575**2)


def test_riemannian_distance_examples():
    assert inr.riemannian_distance(EE_TRUE, EE_TRUE) == pytest.approx(0.0, abs=1e-12)
    assert inr.pseudo_distance(np.eye(4), np.diag([np.e**2, 1, 1, 1])) == pytest.approx(2.0, rel=1e-14)
    d12 = inr.riemannian_distance(EE_TRUE, EE_PRIOR)
    assert d12 == pytest.approx(inr.riemannian_distance(EE_PRIOR, EE_TRUE), rel=1e-12)
    assert d12 > 0
    with pytest.raises(inr.InconsistentParametersError):
        inr.riemannian_distance(EE_TRUE, inr.params(-1.0))


def test_affine_invariance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, b = _random_pair(rng)
        P1, P2 = inr.to_pseudo_inertia(a), inr.to_pseudo_inertia(b)
        Q = rng.normal(size=(4, 4))
        d = inr.pseudo_distance(P1, P2)
        dq = inr.pseudo_distance(Q @ P1 @ Q.T, Q @ P2 @ Q.T)
        assert dq == pytest.approx(d, rel=1e-9)
        D = inr.log_det_divergence(P1, P2)
        Dq = inr.log_det_divergence(Q @ P1 @ Q.T, Q @ P2 @ Q.T)
        assert Dq == pytest.approx(D, rel=1e-9)


def test_bregman_examples():
    assert inr.bregman_divergence(EE_TRUE, EE_TRUE) == pytest.approx(0.0, abs=1e-12)
    assert inr.log_det_divergence_eig(np.eye(4), np.diag([2.0, 1, 1, 1])) == pytest.approx(1 - np.log(2), rel=1e-14)
    assert inr.log_det_divergence(np.eye(4), np.diag([2.0, 1, 1, 1])) == pytest.approx(0.30685281944005466, rel=1e-14)
    with pytest.raises(ValueError):
        inr.bregman_divergence(EE_TRUE, EE_PRIOR, method="nope")


def test_bregman_dual_formulas_and_positivity():
    rng = np.random.default_rng(2)
    for _ in range(200):
        a, b = _random_pair(rng)
        d_det = inr.bregman_divergence(a, b, method="det")
        d_eig = inr.bregman_divergence(a, b, method="eig")
        assert abs(d_det - d_eig) <= 1e-10 * max(1.0, abs(d_eig))
        assert d_eig > 0.0


def test_bregman_second_order_matches_distance():
    rng = np.random.default_rng(4)
    for _ in range(100):
        a = inr.random_consistent_params(rng)
        P = inr.to_pseudo_inertia(a)
        v = rng.normal(size=10)
        dv = inr.to_pseudo_inertia(v)
        scale = inr.pseudo_distance(P, P + 1e-6 * dv) / 1e-6
        b = a + (rng.uniform(1e-4, 1e-2) / scale) * v
        d = inr.riemannian_distance(a, b)
        assert d <= 1e-2 * 1.01
        assert 2.0 * inr.bregman_divergence(a, b) / d**2 == pytest.approx(1.0, abs=0.05)


def test_pullback_metric_examples():
    g = inr.metric_from_pseudo(np.eye(4), scale=inr.HALF_TRACE_SCALE)
    assert g[0, 0] == pytest.approx(0.5, rel=1e-15)
    theta = inr.from_pseudo_inertia(np.eye(4))
    np.testing.assert_allclose(inr.pullback_metric(theta, scale=0.5), g, atol=1e-15)
    np.testing.assert_allclose(inr.pullback_metric(theta), 2.0 * g, atol=1e-15)
    with pytest.raises(inr.InconsistentParametersError):
        inr.pullback_metric(inr.params(-1.0))


def test_pullback_metric_is_hessian_of_divergence():
    rng = np.random.default_rng(6)
    eps = 1e-4
    for _ in range(100):
        theta = inr.random_consistent_params(rng)
        g = inr.pullback_metric(theta)
        np.testing.assert_array_equal(g, g.T)
        assert np.linalg.eigvalsh(g)[0] > 0
        v = rng.normal(size=10)
        # unit size in the whitened coordinates of P, so eps is a relative step
        P = inr.to_pseudo_inertia(theta)
        v /= inr.pseudo_distance(P, P + 1e-8 * inr.to_pseudo_inertia(v)) / 1e-8
        quad = v @ g @ v
        # second difference of t -> D(theta || theta + t v); D(theta||theta) = 0
        fd = (inr.bregman_divergence(theta, theta + eps * v) + inr.bregman_divergence(theta, theta - eps * v)) / eps**2
        assert fd == pytest.approx(quad, rel=0.01)


def test_param_bounds_defaults():
    b = inr.ParamBounds.around(EE_PRIOR)
    assert b.mass_min == pytest.approx(3.0)
    assert b.mass_max == pytest.approx(300.0)
    # floors: sqrt(m tr Sigma) = sqrt(30 * 60) and tr(I) / 3 = 40
    assert b.com_moment_max == pytest.approx(120.0 + np.sqrt(1800.0))
    np.testing.assert_allclose(b.inertia_max, [440, 440, 440, 40, 40, 40])
    assert b.contains(EE_PRIOR) and b.contains(EE_TRUE)
    again = inr.ParamBounds.from_dict(b.to_dict())
    assert again.to_dict() == b.to_dict()


def test_smooth_project_interior_is_identity():
    b = inr.ParamBounds.around(EE_PRIOR)
    rate = np.arange(10.0) - 4.0
    np.testing.assert_array_equal(inr.smooth_project(EE_PRIOR, rate, b), rate)
    np.testing.assert_array_equal(inr.smooth_project(EE_PRIOR, rate, b, metric=inr.pullback_metric(EE_PRIOR)), rate)


def _on_consistency_boundary(bounds, theta):
    # shift the corner so that min eig f(theta) == eps_p exactly
    P = inr.to_pseudo_inertia(theta)
    w, V = np.linalg.eigh(P)
    P_b = (V * np.concatenate([[bounds.eps_p], w[1:]])) @ V.T
    return inr.from_pseudo_inertia(P_b), V[:, 0]


def test_smooth_project_removes_outward_component_at_boundary():
    b = inr.ParamBounds.around(EE_PRIOR)
    theta, v = _on_consistency_boundary(b, EE_PRIOR)
    grad = np.einsum("a,iab,b->i", v, inr.PSEUDO_BASIS, v)
    raw = -grad + 0.3 * np.roll(grad, 3)
    assert grad @ raw < 0
    out = inr.smooth_project(theta, raw, b)
    assert grad @ out == pytest.approx(0.0, abs=1e-12 * np.linalg.norm(raw))
    g = inr.pullback_metric(theta)
    out_g = inr.smooth_project(theta, raw, b, metric=g)
    assert grad @ out_g == pytest.approx(0.0, abs=1e-9 * np.linalg.norm(raw))
    # inward rates pass unchanged
    np.testing.assert_array_equal(inr.smooth_project(theta, -raw, b), -raw)


def test_smooth_project_attenuation_is_continuous_in_layer():
    body = inr.params(30.0, (0.0, 0.0, 0.0), (40.0, 40.0, 40.0))
    b = inr.ParamBounds.around(body)
    rate = np.zeros(10)
    rate[0] = -1.0
    fractions = []
    for c in np.linspace(0.0, 1.2, 13) * b.layer_mass:
        theta = body.copy()
        theta[0] = b.mass_min + c
        fractions.append(inr.smooth_project(theta, rate, b)[0])
    np.testing.assert_allclose(fractions, -np.clip(np.linspace(0, 1.2, 13), 0, 1), atol=1e-12)
    # linear in rate magnitude
    theta = body.copy()
    theta[0] = b.mass_min + 0.4 * b.layer_mass
    np.testing.assert_allclose(inr.smooth_project(theta, 3 * rate, b), 3 * inr.smooth_project(theta, rate, b))


def test_smooth_project_rejects_infeasible():
    b = inr.ParamBounds.around(EE_PRIOR)
    bad = EE_PRIOR.copy()
    bad[0] = 1.0
    with pytest.raises(inr.InfeasibleStateError):
        inr.smooth_project(bad, np.ones(10), b)


def test_forward_invariance_under_constant_outward_rate():
    b = inr.ParamBounds.around(EE_PRIOR)
    theta, v = _on_consistency_boundary(b, EE_PRIOR)
    grad = np.einsum("a,iab,b->i", v, inr.PSEUDO_BASIS, v)
    # start just inside the layer, push outward hard
    theta = theta + 0.5 * b.layer_consistency * grad / (grad @ grad)
    raw = -5.0 * grad
    dt = 1e-3
    worst = np.inf
    for _ in range(10000):
        k1 = inr.smooth_project(theta, raw, b)
        k2 = inr.smooth_project(theta + 0.5 * dt * k1, raw, b)
        k3 = inr.smooth_project(theta + 0.5 * dt * k2, raw, b)
        k4 = inr.smooth_project(theta + dt * k3, raw, b)
        theta = theta + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        worst = min(worst, inr.is_consistent(theta).min_eigenvalue)
    assert worst >= b.eps_p - 1e-9


def test_forward_invariance_with_natural_metric():
    b = inr.ParamBounds.around(EE_PRIOR)
    theta = EE_PRIOR.copy()
    raw = np.zeros(10)
    raw[0] = -20.0  # drive mass toward zero: hits mass floor first
    raw[3] = 15.0
    dt = 1e-3
    for _ in range(10000):
        g = inr.pullback_metric(theta)
        theta = theta + dt * inr.smooth_project(theta, raw, b, metric=g)
        theta = b.repair(theta)
        c, _, _ = b.constraints(theta)
        assert c.min() >= -b.tolerance
    assert theta[0] >= b.mass_min - 1e-9


def test_repair_is_noop_inside_and_fixes_outside():
    b = inr.ParamBounds.around(EE_PRIOR)
    np.testing.assert_array_equal(b.repair(EE_PRIOR), EE_PRIOR)
    bad = EE_PRIOR.copy()
    bad[3] = 40.0  # h_z^2 > m * Sigma_zz
    assert not inr.is_consistent(bad).consistent
    fixed = b.repair(bad)
    assert inr.is_consistent(fixed).min_eigenvalue >= b.eps_p * (1 - 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_divergence_zero_iff_equal(seed):
    rng = np.random.default_rng(seed)
    a, b = _random_pair(rng)
    assert inr.bregman_divergence(a, a) == pytest.approx(0.0, abs=1e-10)
    assert inr.bregman_divergence(a, b) > 0.0
