"""Scenario configuration: a versioned JSON document and the objects built from it.

All physical quantities are SI with unit-suffixed keys.  Inertial parameter
blocks are ``{"mass_kg", "com_moment_kg_m", "inertia_kg_m2"}`` with the
inertia either three principal values or six entries ``(xx, yy, zz, xy, yz, zx)``
about the body-frame origin.
"""

from __future__ import annotations

import copy
import json

import numpy as np

from . import actuation as ac
from . import controller as ct
from . import estimator as es
from . import geometry as geo
from . import inertia as inr
from . import multibody as mb
from . import reference as rf

SCHEMA_VERSION = 1
ESTIMATOR_INPUTS = ("commanded", "observer_model", "realized")
K_OBS_SHAPES = ("identity", "mass_matrix")


class ConfigError(ValueError):
    pass


HALF_PI = np.pi / 2
ARM_DH = [
    [0.0, HALF_PI, 0.3, 0.0],
    [0.0, -HALF_PI, 0.16, 0.0],
    [0.0, HALF_PI, 1.15, 0.0],
    [0.0, -HALF_PI, -0.16, 0.0],
    [0.0, HALF_PI, 1.15, 0.0],
    [0.0, -HALF_PI, -0.16, 0.0],
    [0.0, 0.0, 0.4, 0.0],
]
# Arm posture held outside the figure eight.  Chosen so that the figure
# eight loads joints 1 and 4 enough to make their efficiencies observable
# while the initial joint misalignment stays inside the 10 N m torque limit.
HOME_JOINTS = np.radians([-45.0, -30.0, -90.0, -75.0, 0.0, 90.0, 0.0]).tolist()


def _param_block(mass, h, inertia):
    return {"mass_kg": float(mass), "com_moment_kg_m": list(map(float, h)), "inertia_kg_m2": list(map(float, inertia))}


def _mount_dict():
    return {"rotation": geo.so3_exp([0.0, HALF_PI, 0.0]).tolist(), "position_m": [1.4, 0.0, 0.0]}


def paper_config():
    """Built-in 250 s scenario: seven-joint arm on a 1900 kg base with a heavy grasped object."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "paper",
        "duration_s": 250.0,
        "seed": 0,
        "integrator": {"method": "rk4", "dt_s": 1e-3, "control_period_s": 1e-2},
        "chain": {"dh_rows_m_rad": ARM_DH, "base_mount": _mount_dict()},
        "bodies": {
            "base": _param_block(1900.0, (0, 0, 0), (13500.0, 2000.0, 14000.0)),
            "links": {"kind": "hollow_cylinder", "outer_radius_m": 0.0635, "thickness_m": 0.0135,
                      "density_kg_m3": 2700.0},
            "end_effector_truth": _param_block(100.0, (0, 0, 40.0), (80.0, 75.0, 90.0)),
            "end_effector_prior": _param_block(30.0, (0, 0, 12.0), (40.0, 40.0, 40.0)),
        },
        "estimator": {
            "K_obs": {"shape": "mass_matrix", "scale": 2.5},
            "gamma": 20.0,
            "Gamma_lambda": 2.0,
            "delta": 1e-3,
            "lambda_min": 0.1,
            "adapt_bodies": "all",
            "adapt_lambda": True,
            "metric_scale": inr.METRIC_SCALE,
            "natural_gradient": True,
            "input": "observer_model",
            "bounds": {"delta": 1e-3, "eps_rel": 1e-6, "mass_factor": [0.1, 10.0], "growth": 10.0},
        },
        "controller": {"K_p": 0.2, "K_sigma": 0.2, "K_q": 0.2, "mrp_form": geo.PAPER},
        "actuators": {
            "mode": ac.FULL,
            "thrusters": {"layout": "cube", "half_extent_m": 0.5, "max_thrust_newton": 10.0,
                          "pwm_window_s": 0.1, "min_on_time_s": 0.02},
            "wheels": {"layout": "pyramid", "axis_torque_limit_newton_meter": 0.5},
            "joints": {"torque_limit_newton_meter": 10.0, "time_constant_s": 0.005},
        },
        "faults": [{"time_s": 120.0, "channel": 6, "efficiency": 0.7},
                   {"time_s": 120.0, "channel": 9, "efficiency": 0.8}],
        "reference": {
            "home_joint_rad": HOME_JOINTS,
            "base_start_m": [0.0, 0.0, 0.0],
            "base_moves": [{"start_s": 5.0, "end_s": 35.0,
                            "displacement_m": [1.0 / np.sqrt(2), 1.0 / np.sqrt(2), 0.0]}],
            "figure_eight": {"start_s": 70.0, "end_s": 170.0, "amplitude_m": 0.4, "period_s": 50.0,
                             "plane_axes": [1, 2], "sample_period_s": 0.1},
        },
        "initial": {
            "base_position_error_m": [0.1, 0.0, 0.0],
            "base_attitude_error_euler_xyz_rad": [0.0, np.pi / 8, np.pi / 8],
            "joint_error_rad": [0.0, 0.0, 0.0, -np.pi / 6, 0.0, np.pi / 6, 0.0],
        },
        "truth_diagnostics": False,
    }


def reduced_config():
    """Two-joint reduction of the built-in scenario for fast property runs.

    Same base, first two arm rows and the grasped-object body at the tip;
    ideal actuators, interior true efficiencies and a regulation task from
    small initial misalignments.  A ``joint_sinusoid`` entry in the
    reference switches to persistent excitation.
    """
    cfg = paper_config()
    cfg["name"] = "reduced"
    cfg["duration_s"] = 50.0
    cfg["chain"]["dh_rows_m_rad"] = ARM_DH[:2]
    cfg["actuators"]["mode"] = ac.IDEAL
    cfg["faults"] = ([{"time_s": 0.0, "channel": c, "efficiency": 0.9} for c in range(6)]
                     + [{"time_s": 0.0, "channel": 6, "efficiency": 0.7},
                        {"time_s": 0.0, "channel": 7, "efficiency": 0.8}])
    cfg["reference"] = {
        "home_joint_rad": [0.0, np.pi / 4],
        "base_start_m": [0.0, 0.0, 0.0],
        "base_moves": [],
    }
    cfg["initial"] = {
        "base_position_error_m": [0.02, 0.0, 0.0],
        "base_attitude_error_euler_xyz_rad": [0.0, 0.02, 0.02],
        "joint_error_rad": [0.05, -0.05],
        "observer_velocity_error": [0.01, 0.0, 0.0, 0.0, 0.001, 0.0, 0.02, -0.02],
    }
    cfg["truth_diagnostics"] = True
    return cfg


def load(path):
    with open(path) as fh:
        return validate(json.load(fh))


def dump(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg):
    """Check structure and ranges; returns the config unchanged."""
    _require(isinstance(cfg, dict), "config must be a JSON object")
    _require(cfg.get("schema_version") == SCHEMA_VERSION,
             f"unsupported schema_version {cfg.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    for key in ("duration_s", "integrator", "chain", "bodies", "estimator", "controller", "actuators", "reference",
                "initial"):
        _require(key in cfg, f"missing key {key!r}")
    T = cfg["duration_s"]
    _require(T > 0, "duration_s must be positive")
    integ = cfg["integrator"]
    _require(integ.get("method", "rk4") == "rk4", "only the rk4 integrator is available")
    dt, dtc = integ["dt_s"], integ["control_period_s"]
    _require(dt > 0, "dt_s must be positive")
    _require(dtc >= dt, "control_period_s must be at least dt_s")
    ratio = dtc / dt
    _require(abs(ratio - round(ratio)) < 1e-9, "control_period_s must be a whole multiple of dt_s")
    n = len(cfg["chain"]["dh_rows_m_rad"])
    N = 6 + n
    est = cfg["estimator"]
    _require(est.get("input", "commanded") in ESTIMATOR_INPUTS, f"estimator input must be one of {ESTIMATOR_INPUTS}")
    _require(est["K_obs"]["shape"] in K_OBS_SHAPES, f"K_obs shape must be one of {K_OBS_SHAPES}")
    _require(cfg["actuators"]["mode"] in (ac.FULL, ac.IDEAL), "actuators.mode must be 'full' or 'ideal'")
    for f in cfg.get("faults", []):
        _require(0 <= f["time_s"] <= T, f"fault time {f['time_s']} outside [0, duration]")
        _require(0 <= f["channel"] < N, f"fault channel {f['channel']} out of range")
        _require(est["lambda_min"] <= f["efficiency"] <= 1.0, "fault efficiency outside [lambda_min, 1]")
    ref = cfg["reference"]
    _require(len(ref["home_joint_rad"]) == n, "home_joint_rad must have one entry per joint")
    for mv in ref.get("base_moves", []):
        _require(0 <= mv["start_s"] < mv["end_s"] <= T, "base move outside [0, duration]")
    if "figure_eight" in ref:
        f8 = ref["figure_eight"]
        _require(0 <= f8["start_s"] < f8["end_s"] <= T, "figure eight outside [0, duration]")
    init = cfg["initial"]
    _require(len(init.get("joint_error_rad", [0.0] * n)) == n, "joint_error_rad must have one entry per joint")
    dist = cfg.get("disturbance")
    if dist:
        _require(0 <= dist["start_s"] <= T, "disturbance start outside [0, duration]")
        _require(len(dist["generalized_force"]) == N, "disturbance must have 6 + n entries")
    return cfg


def _params(block):
    inertia = np.asarray(block["inertia_kg_m2"], dtype=float)
    return np.asarray(inr.params(block["mass_kg"], block.get("com_moment_kg_m", (0.0, 0.0, 0.0)), inertia), dtype=float)


def _link_params(links, dh_rows):
    """Truth of the bodies between the base and the end effector."""
    if links["kind"] == "explicit":
        return [_params(b) for b in links["bodies"]]
    _require(links["kind"] == "hollow_cylinder", f"unknown link kind {links['kind']!r}")
    out = []
    for a, _, d, _ in dh_rows:
        # the link runs from joint j along the local z axis by d (and x by a)
        length = float(np.hypot(a, d))
        axis = np.array([a, 0.0, d]) / length
        cyl = inr.hollow_cylinder_params(length, links["outer_radius_m"], links["thickness_m"],
                                         links["density_kg_m3"], axis=axis)
        out.append(np.asarray(cyl, dtype=float))
    return out


class Scenario:
    """Objects built from a validated config."""

    def __init__(self, cfg):
        self.config = validate(copy.deepcopy(cfg))
        c = self.config
        self.model = mb.ChainModel.from_dict(c["chain"])
        n, N = self.model.n, self.model.dof
        self.n, self.N = n, N
        bodies = c["bodies"]
        base = _params(bodies["base"])
        links = _link_params(bodies["links"], self.model.dh[:-1]) if n > 0 else []
        ee_truth = _params(bodies["end_effector_truth"])
        ee_prior = _params(bodies["end_effector_prior"])
        if n == 0:
            self.theta_true = np.array([ee_truth])
            self.theta_prior = np.array([ee_prior])
        else:
            self.theta_true = np.array([base, *links, ee_truth])
            self.theta_prior = np.array([base, *links, ee_prior])
        for th in (*self.theta_true, *self.theta_prior):
            if not inr.is_consistent(th).consistent:
                raise ConfigError(f"body parameters {th} are not physically consistent")

        e = c["estimator"]
        bcfg = e.get("bounds", {})
        self.bounds = [inr.ParamBounds.around(th, delta=bcfg.get("delta", 1e-3), eps_rel=bcfg.get("eps_rel", 1e-6),
                                              mass_factor=tuple(bcfg.get("mass_factor", (0.1, 10.0))),
                                              growth=bcfg.get("growth", 10.0))
                       for th in self.theta_prior]
        ref = c["reference"]
        self.q_home = np.asarray(ref["home_joint_rad"], dtype=float)
        kobs = e["K_obs"]
        if kobs["shape"] == "identity":
            K_obs = kobs["scale"] * np.eye(N)
        else:
            M0 = mb.mass_matrix(self.model, self.q_home, self.theta_prior)
            K_obs = kobs["scale"] * 0.5 * (M0 + M0.T)
        adapt = e.get("adapt_bodies", "all")
        adapt = None if adapt == "all" else np.asarray(adapt, dtype=bool)
        self.est_gains = es.EstimatorGains(
            K_obs, e["gamma"], e["Gamma_lambda"] * np.eye(N), delta=e["delta"], lam_min=e["lambda_min"],
            adapt_bodies=adapt, adapt_lambda=e.get("adapt_lambda", True),
            metric_scale=e.get("metric_scale", inr.METRIC_SCALE), natural=e.get("natural_gradient", True))
        self.estimator_input = e.get("input", "commanded")
        k = c["controller"]
        self.ctrl_gains = ct.ControllerGains(k["K_p"] * np.eye(3), k["K_sigma"] * np.eye(3), k["K_q"] * np.eye(n),
                                             K_obs, k.get("mrp_form", geo.PAPER))
        self.actuators = self._build_actuators(c["actuators"], n)
        self.faults = ac.FaultSchedule([(f["time_s"], f["channel"], f["efficiency"]) for f in c.get("faults", [])],
                                       n_channels=N, lam_min=e["lambda_min"])
        self.reference = self._build_reference(ref)
        self.duration = float(c["duration_s"])
        self.dt = float(c["integrator"]["dt_s"])
        self.control_period = float(c["integrator"]["control_period_s"])
        self.seed = int(c.get("seed", 0))
        self.truth_diagnostics = bool(c.get("truth_diagnostics", False))
        self.disturbance = c.get("disturbance")
        self.noise_std = float(c.get("noise", {}).get("velocity_std", 0.0))

    @staticmethod
    def _build_actuators(a, n):
        t = a["thrusters"]
        if t.get("layout", "cube") == "cube":
            bank = ac.cube_thruster_bank(t["half_extent_m"], t["max_thrust_newton"], t["pwm_window_s"],
                                         t["min_on_time_s"])
        else:
            bank = ac.ThrusterBank.from_dict(t)
        w = a.get("wheels")
        wheels = None
        if w:
            wheels = ac.pyramid_wheels(w["axis_torque_limit_newton_meter"]) if w.get("layout", "pyramid") == "pyramid" \
                else ac.ReactionWheelSet.from_dict(w)
        j = a["joints"]
        motors = ac.JointMotorSet(np.broadcast_to(j["torque_limit_newton_meter"], (n,)), j["time_constant_s"])
        return ac.ActuatorSystem(bank, wheels, motors, a["mode"])

    def _build_reference(self, ref):
        base_pos = rf.PointToPoint(ref["base_start_m"], [(m["start_s"], m["end_s"], m["displacement_m"])
                                                          for m in ref.get("base_moves", [])])
        jumps = []
        if "figure_eight" in ref:
            f8 = ref["figure_eight"]
            joints = rf.figure_eight_joint_reference(
                self.model, self.q_home, f8["start_s"], f8["end_s"], f8["amplitude_m"], f8["period_s"],
                tuple(f8.get("plane_axes", (1, 2))), f8.get("sample_period_s", 0.1))
            jumps = [f8["start_s"], f8["end_s"]]
        elif "joint_sinusoid" in ref:
            js = ref["joint_sinusoid"]
            joints = rf.sinusoid(self.q_home, js["amplitude_rad"], js["period_s"])
        else:
            joints = rf.hold(self.q_home)
        return ct.ReferenceTrajectory(base_pos, rf.constant_attitude(), joints, jumps)

    def initial_state(self):
        init = self.config["initial"]
        ref = self.reference(0.0)
        p = ref.p + np.asarray(init.get("base_position_error_m", [0.0] * 3), dtype=float)
        R = ref.R @ geo.rotation_from_euler_xyz(init.get("base_attitude_error_euler_xyz_rad", [0.0] * 3))
        q = ref.q + np.asarray(init.get("joint_error_rad", [0.0] * self.n), dtype=float)
        xdot = np.concatenate([R.T @ ref.v, R.T @ ref.w, ref.qd])
        return mb.SystemState(p, R, q, xdot)

    def initial_estimate(self, state):
        err = np.asarray(self.config["initial"].get("observer_velocity_error", np.zeros(self.N)), dtype=float)
        return es.EstimatorState(state.xdot - err, self.theta_prior, np.ones(self.N))
