"""Telemetry layout, CSV persistence and run summaries."""

from __future__ import annotations

import json

import numpy as np

PARAM_NAMES = ("m", "hx", "hy", "hz", "ixx", "iyy", "izz", "ixy", "iyz", "izx")
FLOAT_FORMAT = "%.9e"
FINAL_WINDOW = 0.2  # fraction of the run used for asymptotic norms


def columns(n):
    """Fixed column order for an ``n``-joint system."""
    N = 6 + n
    xyz = ("x", "y", "z")
    cols = ["t"]
    cols += [f"p_err_{a}" for a in xyz]
    cols += [f"sigma_err_{k}" for k in range(1, 4)]
    cols += [f"euler_err_{a}" for a in xyz]
    cols += [f"q_err_{j}" for j in range(1, n + 1)]
    cols += [f"v_err_{a}" for a in xyz]
    cols += [f"w_err_{a}" for a in xyz]
    cols += [f"qd_err_{j}" for j in range(1, n + 1)]
    cols += [f"obs_err_{i}" for i in range(1, N + 1)]
    cols += [f"xdot_err_{i}" for i in range(1, N + 1)]
    cols += [f"xhat_err_{i}" for i in range(1, N + 1)]
    cols += [f"theta_{b}_{p}" for b in range(n + 1) for p in PARAM_NAMES]
    cols += [f"ee_eig_{k}" for k in range(1, 5)]
    cols += [f"min_eig_{b}" for b in range(n + 1)]
    cols += [f"lam_hat_{i}" for i in range(1, N + 1)]
    cols += [f"lam_true_{i}" for i in range(1, N + 1)]
    cols += [f"u_c_{i}" for i in range(1, N + 1)]
    cols += [f"u_real_{i}" for i in range(1, N + 1)]
    cols += ["V", "sat_base", "sat_joint", "repair"]
    return cols


def n_joints(header):
    return sum(1 for c in header if c.startswith("q_err_"))


def block(header, data, prefix):
    idx = [i for i, c in enumerate(header) if c.startswith(prefix)]
    return data[:, idx]


def col(header, data, name):
    return data[:, header.index(name)]


def write_csv(path, header, data):
    np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(header), comments="")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _norm(x):
    return np.linalg.norm(x, axis=1)


def error_norms(header, data):
    """Time series of the error-channel norms."""
    n = n_joints(header)
    N = 6 + n
    xd = block(header, data, "xdot_err_")
    return {
        "position": _norm(block(header, data, "p_err_")),
        "attitude": _norm(block(header, data, "sigma_err_")),
        "euler": _norm(block(header, data, "euler_err_")),
        "joints": _norm(block(header, data, "q_err_")),
        "velocity": _norm(block(header, data, "v_err_")),
        "angular_velocity": _norm(block(header, data, "w_err_")),
        "joint_rates": _norm(block(header, data, "qd_err_")),
        "observer": _norm(block(header, data, "obs_err_")),
        "xdot_err": _norm(xd),
        "xdot_err_translation": _norm(xd[:, :3]),
        "xdot_err_rotation": _norm(xd[:, 3:6]),
        "xdot_err_joints": _norm(xd[:, 6:N]) if n else np.zeros(len(data)),
        "xhat_err": _norm(block(header, data, "xhat_err_")),
    }


def summarize(header, data, final_window=FINAL_WINDOW):
    """Run summary computed from the telemetry table alone."""
    t = col(header, data, "t")
    n = n_joints(header)
    T0 = t[0] + (1.0 - final_window) * (t[-1] - t[0])
    tail = t >= T0
    norms = error_norms(header, data)
    asym = {k: float(v[tail].mean()) for k, v in norms.items()}
    limsup = {k: float(v[tail].max()) for k, v in norms.items()}
    min_eigs = block(header, data, "min_eig_")
    lam = block(header, data, "lam_hat_")
    V = col(header, data, "V")

    def ratio(a, b):
        return float(limsup[a] / limsup[b]) if limsup[b] > 0 else float("nan")

    return {
        "duration_s": float(t[-1]),
        "rows": int(len(t)),
        "final_window_s": [float(T0), float(t[-1])],
        "asymptotic_norms": asym,
        "limsup_norms": limsup,
        "min_eig_over_time": [float(x) for x in min_eigs.min(axis=0)],
        "lambda_hat_final": [float(x) for x in lam[-1]],
        "lambda_hat_range": [float(lam.min()), float(lam.max())],
        "measured_iss_gains": {
            "position": ratio("position", "xdot_err_translation"),
            "attitude": ratio("attitude", "xdot_err_rotation"),
            "joints": ratio("joints", "xdot_err_joints") if n else float("nan"),
        },
        "lyapunov_final": float(V[-1]) if np.all(np.isfinite(V)) else None,
        "base_saturation_fraction": float(col(header, data, "sat_base").mean()),
        "joint_saturation_fraction": float(col(header, data, "sat_joint").mean()),
        "max_repair": float(col(header, data, "repair").max()),
    }


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
