import json

import numpy as np
import pytest

from sms_adaptive import controller as ct
from sms_adaptive import geometry as geo
from sms_adaptive import inertia as inr
from sms_adaptive import multibody as mb
from sms_adaptive import scenario as scn


@pytest.fixture(scope="module")
def mission():
    return scn.Scenario(scn.paper_config())


def test_mission_bodies(mission):
    assert mission.n == 7 and mission.N == 13
    np.testing.assert_allclose(mission.theta_true[0], [1900, 0, 0, 0, 13500, 2000, 14000, 0, 0, 0])
    np.testing.assert_allclose(mission.theta_true[-1], [100, 0, 0, 40, 80, 75, 90, 0, 0, 0])
    np.testing.assert_allclose(mission.theta_prior[-1], [30, 0, 0, 12, 40, 40, 40, 0, 0, 0])
    # links identical in truth and prior
    np.testing.assert_array_equal(mission.theta_true[:-1], mission.theta_prior[:-1])
    for th in (*mission.theta_true, *mission.theta_prior):
        assert inr.is_consistent(th).consistent
    assert mission.bounds[-1].contains(mission.theta_true[-1])


def test_link_masses_are_hollow_aluminium_tubes(mission):
    # independent mass: density * annulus area * length, with length |d|
    area = np.pi * (0.0635**2 - 0.05**2)
    for th, row in zip(mission.theta_true[1:-1], scn.ARM_DH):
        assert th[0] == pytest.approx(2700.0 * area * abs(row[2]), rel=1e-12)
        # centre of mass at mid-length along the link
        np.testing.assert_allclose(th[1:4] / th[0], [0, 0, row[2] / 2], atol=1e-12)


def test_gains(mission):
    np.testing.assert_allclose(mission.ctrl_gains.K_p, 0.2 * np.eye(3))
    np.testing.assert_allclose(mission.ctrl_gains.K_q, 0.2 * np.eye(7))
    M0 = mb.mass_matrix(mission.model, mission.q_home, mission.theta_prior)
    np.testing.assert_allclose(mission.est_gains.K_obs, 2.5 * M0, rtol=1e-12)
    assert mission.ctrl_gains.K_obs is mission.est_gains.K_obs or np.array_equal(mission.ctrl_gains.K_obs, mission.est_gains.K_obs)
    assert np.all(mission.est_gains.gamma == 20.0)
    np.testing.assert_allclose(mission.est_gains.Gamma_lambda, 2.0 * np.eye(13))
    assert mission.est_gains.lam_min == 0.1 and mission.est_gains.delta == 1e-3


def test_identity_observer_gain_shape():
    cfg = scn.paper_config()
    cfg["estimator"]["K_obs"] = {"shape": "identity", "scale": 2.5}
    sc = scn.Scenario(cfg)
    np.testing.assert_array_equal(sc.est_gains.K_obs, 2.5 * np.eye(13))


def test_fault_schedule(mission):
    before = mission.faults.efficiency(120.0 - 1e-9)
    after = mission.faults.efficiency(120.0)
    np.testing.assert_array_equal(before, np.ones(13))
    expected = np.ones(13)
    expected[6], expected[9] = 0.7, 0.8
    np.testing.assert_array_equal(after, expected)


def test_initial_misalignment(mission):
    state = mission.initial_state()
    est = mission.initial_estimate(state)
    err = ct.compute_errors(state, est.xhat_dot, mission.reference(0.0), mission.ctrl_gains)
    np.testing.assert_allclose(err.p, [0.1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(err.q, [0, 0, 0, -np.pi / 6, 0, np.pi / 6, 0], atol=1e-15)
    # Euler angles (0, pi/8, pi/8) about x, y, z
    np.testing.assert_allclose(geo.euler_xyz_from_rotation(err.R_err), [0, np.pi / 8, np.pi / 8], atol=1e-12)
    np.testing.assert_array_equal(est.lam_hat, np.ones(13))
    np.testing.assert_array_equal(est.theta_hat, mission.theta_prior)


def test_reference_segments(mission):
    r0, r20, r50 = mission.reference(0.0), mission.reference(20.0), mission.reference(50.0)
    np.testing.assert_array_equal(r0.p, 0.0)
    assert np.linalg.norm(r20.v) > 0
    np.testing.assert_allclose(r50.p, [1 / np.sqrt(2), 1 / np.sqrt(2), 0], atol=1e-12)
    assert list(mission.reference.jump_times) == [70.0, 170.0]
    np.testing.assert_array_equal(mission.reference(60.0).q, scn.HOME_JOINTS)


def test_json_roundtrip(tmp_path):
    cfg = scn.paper_config()
    path = tmp_path / "mission.json"
    scn.dump(cfg, path)
    loaded = scn.load(path)
    assert loaded == json.loads(json.dumps(cfg))
    a, b = scn.Scenario(cfg), scn.Scenario(loaded)
    np.testing.assert_array_equal(a.theta_true, b.theta_true)
    np.testing.assert_array_equal(a.est_gains.K_obs, b.est_gains.K_obs)


@pytest.mark.parametrize("edit, message", [
    (lambda c: c.update(schema_version=2), "schema_version"),
    (lambda c: c.pop("bodies"), "bodies"),
    (lambda c: c["faults"].append({"time_s": 1.0, "channel": 13, "efficiency": 0.5}), "channel"),
    (lambda c: c["faults"].append({"time_s": 1.0, "channel": 2, "efficiency": 0.05}), "efficiency"),
    (lambda c: c["integrator"].update(control_period_s=0.0105), "multiple"),
    (lambda c: c["estimator"].update(input="guess"), "input"),
    (lambda c: c["reference"].update(home_joint_rad=[0.0]), "home_joint_rad"),
])
def test_validation_rejects(edit, message):
    cfg = scn.paper_config()
    edit(cfg)
    with pytest.raises(scn.ConfigError, match=message):
        scn.validate(cfg)


def test_inconsistent_body_rejected():
    cfg = scn.paper_config()
    cfg["bodies"]["end_effector_truth"]["com_moment_kg_m"] = [0.0, 0.0, 400.0]
    with pytest.raises(scn.ConfigError, match="consistent"):
        scn.Scenario(cfg)


def test_reduced_scenario():
    sc = scn.Scenario(scn.reduced_config())
    assert sc.n == 2 and sc.N == 8
    assert sc.actuators.mode == "ideal"
    lam = sc.faults.efficiency(0.0)
    assert np.all((lam > 0.1) & (lam < 1.0))
    np.testing.assert_array_equal(sc.theta_true[-1], scn.Scenario(scn.paper_config()).theta_true[-1])
    assert sc.truth_diagnostics
