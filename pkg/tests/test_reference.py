import numpy as np
import pytest

from sms_adaptive import multibody as mb
from sms_adaptive import reference as rf
from sms_adaptive import scenario as scn


def fd(f, t, h=1e-5):
    return (np.asarray(f(t + h)) - np.asarray(f(t - h))) / (2 * h)


def test_quintic_boundary_conditions():
    assert rf.quintic(0.0) == (0.0, 0.0, 0.0)
    np.testing.assert_allclose(rf.quintic(1.0), (1.0, 0.0, 0.0), atol=1e-12)
    assert rf.quintic(0.5)[0] == pytest.approx(0.5)
    for s in np.linspace(0.05, 0.95, 10):
        assert fd(lambda x: rf.quintic(x)[0], s) == pytest.approx(rf.quintic(s)[1], rel=1e-7)
        assert fd(lambda x: rf.quintic(x)[1], s) == pytest.approx(rf.quintic(s)[2], rel=1e-6, abs=1e-8)
    # clamped outside [0, 1]
    assert rf.quintic(-1.0) == (0.0, 0.0, 0.0)
    assert rf.quintic(2.0)[0] == pytest.approx(1.0)


def test_point_to_point_moves():
    d = np.array([1.0, -2.0, 0.5])
    ref = rf.PointToPoint([1.0, 1.0, 1.0], [(5.0, 35.0, d), (40.0, 50.0, -d)])
    p, v, a = ref(0.0)
    np.testing.assert_array_equal(p, [1, 1, 1])
    np.testing.assert_array_equal(v, 0.0)
    p, v, a = ref(37.0)
    np.testing.assert_allclose(p, [2.0, -1.0, 1.5])
    np.testing.assert_array_equal(v, 0.0)
    np.testing.assert_array_equal(a, 0.0)
    np.testing.assert_allclose(ref(60.0)[0], [1, 1, 1], atol=1e-12)
    for t in (7.0, 20.0, 33.0, 45.0):
        np.testing.assert_allclose(fd(lambda x: ref(x)[0], t), ref(t)[1], rtol=1e-6, atol=1e-10)
        np.testing.assert_allclose(fd(lambda x: ref(x)[1], t), ref(t)[2], rtol=1e-5, atol=1e-9)
    with pytest.raises(ValueError):
        rf.PointToPoint([0, 0, 0], [(10.0, 5.0, d)])
    with pytest.raises(ValueError):
        rf.PointToPoint([0, 0, 0], [(0.0, 10.0, d), (5.0, 15.0, d)])


def test_sinusoid_and_hold():
    ref = rf.sinusoid([0.1, 0.2], [0.3, 0.4], [7.0, 11.0])
    np.testing.assert_allclose(ref(0.0)[0], [0.1, 0.2])
    for t in (0.3, 2.0, 9.0):
        np.testing.assert_allclose(fd(lambda x: ref(x)[0], t), ref(t)[1], rtol=1e-6)
        np.testing.assert_allclose(fd(lambda x: ref(x)[1], t), ref(t)[2], rtol=1e-5, atol=1e-9)
    q, qd, qdd = rf.hold([1.0, 2.0])(123.0)
    np.testing.assert_array_equal(q, [1, 2])
    assert not qd.any() and not qdd.any()


def test_lemniscate_shape():
    path = rf.lemniscate(0.4, 50.0)
    np.testing.assert_allclose(path(0.0)[0], 0.0, atol=1e-15)
    np.testing.assert_allclose(path(25.0)[0], 0.0, atol=1e-12)  # crossing point again
    assert np.linalg.norm(path(0.0)[1]) > 0
    assert path(12.5)[0][0] == pytest.approx(0.4)
    for s in (1.0, 13.0, 31.0):
        np.testing.assert_allclose(fd(lambda x: path(x)[0], s), path(s)[1], rtol=1e-6, atol=1e-12)


@pytest.fixture(scope="module")
def arm():
    return mb.ChainModel.from_dict(scn.paper_config()["chain"])


@pytest.fixture(scope="module")
def eight(arm):
    return rf.figure_eight_joint_reference(arm, scn.HOME_JOINTS, 70.0, 170.0, 0.4, 50.0)


def test_figure_eight_tracks_target_through_forward_kinematics(arm, eight):
    assert eight.ik_residual <= 1e-4
    worst = 0.0
    # sample points and points between the spline knots
    for t in np.concatenate([eight.times[::37], eight.times[:-1:41] + 0.05]):
        p = mb.end_effector_pose(arm, eight(t)[0])[:3, 3]
        worst = max(worst, np.linalg.norm(p - eight.target(t)))
    assert worst <= 1e-4


def test_figure_eight_holds_orientation_and_home(arm, eight):
    home = np.asarray(scn.HOME_JOINTS)
    R_home = mb.end_effector_pose(arm, home)[:3, :3]
    np.testing.assert_array_equal(eight(10.0)[0], home)
    np.testing.assert_allclose(eight(70.0)[0], home, atol=1e-9)
    for t in (80.0, 111.1, 160.0):
        R = mb.end_effector_pose(arm, eight(t)[0])[:3, :3]
        assert np.linalg.norm(R - R_home) < 1e-4
    # velocity jumps at start and end, held at rest afterwards
    assert np.linalg.norm(eight(70.0)[1]) > 1e-3
    assert not eight(200.0)[1].any()
    np.testing.assert_allclose(mb.end_effector_pose(arm, eight(200.0)[0])[:3, 3], eight.target(170.0), atol=1e-4)


def test_figure_eight_unreachable_raises(arm):
    with pytest.raises(rf.IKDivergenceError):
        rf.figure_eight_joint_reference(arm, scn.HOME_JOINTS, 0.0, 5.0, amplitude=10.0, period=10.0)


def test_home_configuration_is_well_conditioned(arm):
    assert rf.manipulability(arm, scn.HOME_JOINTS) > 1.0
