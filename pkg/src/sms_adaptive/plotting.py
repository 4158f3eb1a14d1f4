"""Figures from a telemetry table (matplotlib, file output only)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import telemetry as tm  # noqa: E402


def _save(fig, out_dir, name):
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def base_errors(header, data, out_dir):
    t = tm.col(header, data, "t")
    norms = tm.error_norms(header, data)
    fig, ax = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax[0].plot(t, norms["position"])
    ax[0].set_ylabel("|p err| [m]")
    ax[0].set_yscale("log")
    ax[1].plot(t, np.degrees(tm.block(header, data, "euler_err_")))
    ax[1].set_ylabel("attitude err [deg]")
    ax[1].legend(["roll", "pitch", "yaw"], fontsize=8)
    ax[1].set_xlabel("t [s]")
    return _save(fig, out_dir, "base_errors.png")


def joint_errors(header, data, out_dir):
    t = tm.col(header, data, "t")
    q = tm.block(header, data, "q_err_")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(t, np.degrees(q))
    ax.set_ylabel("joint err [deg]")
    ax.set_xlabel("t [s]")
    ax.legend([f"q{j + 1}" for j in range(q.shape[1])], fontsize=7, ncol=4)
    return _save(fig, out_dir, "joint_errors.png")


def end_effector_parameters(header, data, out_dir, truth=None):
    t = tm.col(header, data, "t")
    n = tm.n_joints(header)
    fig, ax = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
    groups = (("m",), ("hx", "hy", "hz"), ("ixx", "iyy", "izz", "ixy", "iyz", "izx"))
    labels = ("mass [kg]", "first moment [kg m]", "inertia [kg m^2]")
    for a, names, label in zip(ax, groups, labels):
        for p in names:
            line, = a.plot(t, tm.col(header, data, f"theta_{n}_{p}"), label=p)
            if truth is not None:
                a.axhline(truth[tm.PARAM_NAMES.index(p)], color=line.get_color(), ls="--", lw=0.8)
        a.set_ylabel(label)
        a.legend(fontsize=7, ncol=3)
    ax[-1].set_xlabel("t [s]")
    return _save(fig, out_dir, "ee_parameters.png")


def efficiencies(header, data, out_dir):
    t = tm.col(header, data, "t")
    lam = tm.block(header, data, "lam_hat_")
    true = tm.block(header, data, "lam_true_")
    fig, ax = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax[0].plot(t, lam[:, :6])
    ax[0].set_ylabel("base channels")
    lines = ax[1].plot(t, lam[:, 6:])
    for k, line in enumerate(lines):
        ax[1].plot(t, true[:, 6 + k], color=line.get_color(), ls="--", lw=0.8)
    ax[1].set_ylabel("joint channels")
    ax[1].set_xlabel("t [s]")
    for a in ax:
        a.set_ylim(0.0, 1.05)
    return _save(fig, out_dir, "efficiencies.png")


def pseudo_inertia_eigenvalues(header, data, out_dir):
    t = tm.col(header, data, "t")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.semilogy(t, tm.block(header, data, "ee_eig_"))
    ax.set_ylabel("eig f(theta_hat)")
    ax.set_xlabel("t [s]")
    return _save(fig, out_dir, "ee_eigenvalues.png")


def report(header, data, out_dir, truth=None):
    """Write every figure to ``out_dir``; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    return [
        base_errors(header, data, out_dir),
        joint_errors(header, data, out_dir),
        end_effector_parameters(header, data, out_dir, truth),
        efficiencies(header, data, out_dir),
        pseudo_inertia_eigenvalues(header, data, out_dir),
    ]
