"""Fixed-step simulation of plant, observer and adaptation with a sampled controller."""

from __future__ import annotations

import os
import time

import numpy as np

from . import _kernels as K
from . import controller as ct
from . import estimator as es
from . import geometry as geo
from . import inertia as inr
from . import multibody as mb
from . import telemetry as tm
from .scenario import Scenario

BLOWUP_LIMIT = 1e9


class BlowupError(RuntimeError):
    def __init__(self, t, msg="numerical blow-up"):
        super().__init__(f"{msg} at t = {t:.6f} s")
        self.t = t


class World:
    """Everything one run owns: plant truth, estimator, actuators and clock.

    The integrated vector is ``[p, phi, q, xdot, xhat_dot, theta_hat, lambda_hat]``
    with the base attitude ``R0 @ exp(phi)``; ``phi`` is folded into ``R0``
    after every step.
    """

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        sc = scenario
        self.model = sc.model
        self.n, self.N = sc.n, sc.N
        state = sc.initial_state()
        est = sc.initial_estimate(state)
        self.R0 = state.R_b.copy()
        self.y = np.concatenate([state.p_b, np.zeros(3), state.q, state.xdot, est.xhat_dot,
                                 est.theta_hat.ravel(), est.lam_hat])
        self.t = 0.0
        self.steps = 0
        self.theta_true = np.ascontiguousarray(sc.theta_true)
        self.bounds = es.pack_bounds(sc.bounds)
        self.F = K.pseudo_basis()
        g = sc.est_gains
        self.K_obs = np.ascontiguousarray(g.K_obs)
        self.gamma = g.gamma.copy()
        self.adapt = g.adapt_bodies.astype(float)
        self.gamma_lambda = np.diag(g.Gamma_lambda).copy()
        self.u_c = np.zeros(self.N)
        self.u_model = np.zeros(self.N)
        self.u_real = np.zeros(self.N)
        self.u_plant = np.zeros(self.N)
        self.rng = np.random.default_rng(sc.seed)
        self.fault_applied = {}
        self.min_eig_raw = np.full(self.n + 1, np.inf)
        self.max_repair = 0.0
        self.max_violation = 0.0

    # state views ---------------------------------------------------------
    def _slices(self):
        n, N = self.n, self.N
        o_q, o_xd = 6, 6 + n
        o_xh = o_xd + N
        o_th = o_xh + N
        o_lam = o_th + 10 * (n + 1)
        return o_q, o_xd, o_xh, o_th, o_lam

    @property
    def state(self):
        o_q, o_xd, o_xh, _, _ = self._slices()
        R = self.R0 @ geo.so3_exp(self.y[3:6])
        return mb.SystemState(self.y[:3].copy(), R, self.y[o_q:o_xd].copy(), self.y[o_xd:o_xh].copy())

    @property
    def estimate(self):
        _, _, o_xh, o_th, o_lam = self._slices()
        return es.EstimatorState(self.y[o_xh:o_th], self.y[o_th:o_lam].reshape(-1, 10), self.y[o_lam:])

    def efficiency(self, t):
        return self.sc.faults.efficiency(t)

    def lyapunov(self):
        """Truth-based Lyapunov function of the estimator at the current state."""
        g = self.sc.est_gains
        return K.lyapunov(self.y, self.model.links, self.model.offsets, self.theta_true, self.efficiency(self.t),
                          self.gamma, self.adapt, g.metric_scale, self.gamma_lambda)

    # control -------------------------------------------------------------
    def control(self):
        """Sample the measurements, compute ``u_c`` and hand it to the actuators."""
        sc = self.sc
        state = self.state
        if sc.noise_std > 0:
            state.xdot = state.xdot + sc.noise_std * self.rng.normal(size=self.N)
        est = self.estimate
        ref = sc.reference(self.t)
        err = ct.compute_errors(state, est.xhat_dot, ref, sc.ctrl_gains)
        self.u_c = ct.control_input(self.model, state, est, ref, sc.ctrl_gains, sc.est_gains.lam_min, errors=err)
        self.u_model = sc.actuators.command(self.u_c, self.t)
        return state, est, ref, err

    def disturbance(self, t):
        d = self.sc.disturbance
        if d and t >= d["start_s"] - 1e-12:
            return np.asarray(d["generalized_force"], dtype=float)
        return None

    # physics ------------------------------------------------------------
    def step(self, dt):
        """One RK4 step with the actuator output held over ``[t, t + dt)``."""
        sc = self.sc
        lam_true = self.efficiency(self.t)
        for time_s, channel, eff in sc.faults.entries:
            if self.t >= time_s and (time_s, channel) not in self.fault_applied:
                self.fault_applied[(time_s, channel)] = self.steps
        u_real = sc.actuators.realize(self.t, dt)
        dist = self.disturbance(self.t)
        if dist is not None:
            u_real = u_real + dist
        self.u_real = u_real
        self.u_plant = lam_true * u_real
        if sc.estimator_input == "commanded":
            u_est = self.u_c
        elif sc.estimator_input == "observer_model":
            u_est = self.u_model
        else:
            u_est = u_real
        g = sc.est_gains
        y, _, worst = K.rk4_step(
            self.y, dt, self.R0, self.model.links, self.model.offsets, self.theta_true, self.u_plant,
            np.ascontiguousarray(u_est), self.K_obs, self.gamma, self.adapt, g.metric_scale, g.natural, self.bounds,
            self.gamma_lambda, g.lam_min, 1.0, g.delta, g.adapt_lambda, self.F)
        self.max_violation = max(self.max_violation, worst)
        self.min_eig_raw = np.minimum(self.min_eig_raw, K.body_min_eigs(y, self.n))
        self.max_repair = max(self.max_repair, K.repair_state(y, self.n, self.bounds, self.adapt, g.lam_min, 1.0))
        # fold the local rotation vector into the base attitude
        self.R0 = self.R0 @ K.so3_exp(y[3:6].copy())
        y[3:6] = 0.0
        self.y = y
        self.steps += 1
        self.t = self.steps * dt
        if not np.all(np.isfinite(y)) or np.abs(y).max() > BLOWUP_LIMIT:
            raise BlowupError(self.t)
        return self


def step(world: World, dt: float) -> World:
    """Advance ``world`` in place by one physics step and return it."""
    return world.step(dt)


def _row(world, state, est, ref, err, repair):
    sc = world.sc
    lam_true = world.efficiency(world.t)
    V = world.lyapunov() if sc.truth_diagnostics else np.nan
    ee = inr.to_pseudo_inertia(est.theta_hat[-1])
    return np.concatenate([
        [world.t], err.p, err.sigma, geo.euler_xyz_from_rotation(err.R_err), err.q, err.v, err.w, err.qd,
        err.obs, err.xdot_err, err.xhat_dot_err, est.theta_hat.ravel(), np.linalg.eigvalsh(ee),
        K.body_min_eigs(world.y, world.n), est.lam_hat, lam_true, world.u_c, world.u_real,
        [V, float(sc.actuators.base_saturated), float(sc.actuators.joint_saturated), repair],
    ])


class RunResult:
    def __init__(self, header, data, summary, world):
        self.header = header
        self.data = data
        self.summary = summary
        self.world = world


def simulate(scenario: Scenario, duration=None, progress=None, step_hook=None):
    """Run the timeline in memory; returns ``(header, data, world)``.

    Telemetry rows are taken at every control instant before the step;
    ``step_hook(world)`` (if given) is called after every physics step.
    A ``BlowupError`` carries the failure time; rows up to it are attached
    as ``err.partial``.
    """
    world = World(scenario)
    T = scenario.duration if duration is None else float(duration)
    dt = scenario.dt
    per = int(round(scenario.control_period / dt))
    n_steps = int(round(T / dt))
    header = tm.columns(world.n)
    rows = []
    repair_mark = 0.0
    try:
        for k in range(n_steps + 1):
            if k % per == 0:
                state, est, ref, err = world.control()
                rows.append(_row(world, state, est, ref, err, world.max_repair - repair_mark))
                repair_mark = world.max_repair
                if progress and k % (per * 1000) == 0:
                    progress(world.t)
            if k == n_steps:
                break
            world.step(dt)
            if step_hook is not None:
                step_hook(world)
    except BlowupError as exc:
        exc.partial = (header, np.array(rows))
        raise
    return header, np.array(rows), world


def run(scenario: Scenario, out_dir=None, duration=None, progress=None):
    """Simulate and (optionally) write ``telemetry.csv`` and ``summary.json`` to ``out_dir``."""
    t0 = time.perf_counter()
    header, data, world = simulate(scenario, duration, progress)
    summary = tm.summarize(header, data)
    bounds = ct.iss_bounds(scenario.ctrl_gains, scenario.model, [scenario.theta_prior, scenario.theta_true])
    eps = [b.eps_p for b in scenario.bounds]
    lam_lo = scenario.est_gains.lam_min
    held = (all(m >= e - 1e-9 for m, e in zip(summary["min_eig_over_time"], eps))
            and lam_lo - 1e-9 <= summary["lambda_hat_range"][0] and summary["lambda_hat_range"][1] <= 1 + 1e-9)
    summary["run"] = {
        "scenario": scenario.config.get("name", ""),
        "estimator_input": scenario.estimator_input,
        "actuator_mode": scenario.actuators.mode,
        "eps_p": eps,
        "projection_held": bool(held),
        "min_eig_before_repair": [float(x) for x in world.min_eig_raw],
        "max_repair_correction": float(world.max_repair),
        "fault_steps": {f"{t:g}s/ch{c}": s for (t, c), s in sorted(world.fault_applied.items())},
        "iss_bounds": {k: float(v) for k, v in bounds.items()},
    }
    summary["wall_time_s"] = None  # kept out of the file for byte-identical reruns
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        tm.write_csv(os.path.join(out_dir, "telemetry.csv"), header, data)
        tm.write_json(os.path.join(out_dir, "summary.json"), summary)
    summary["wall_time_s"] = time.perf_counter() - t0
    return RunResult(header, data, summary, world)
