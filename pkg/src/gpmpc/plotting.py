"""Static SVG figures for closed-loop runs (byte-reproducible)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "gpmpc", "svg.fonttype": "none"}


def _save(fig, path):
    with plt.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_xy(log, path, world=None, baseline=None):
    """Reference (dashed) against actual path in the plane."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        if world is not None:
            for c, r in world.obstacles:
                ax.add_patch(plt.Circle(c, r, color="0.7"))
        ax.plot(log.reference[:, 0], log.reference[:, 1], "k--", lw=1, label="reference")
        ax.plot(log.position[:, 0], log.position[:, 1], "b-", lw=1.2, label="GP-MPC" if baseline is not None else "actual")
        if baseline is not None:
            ax.plot(baseline.position[:, 0], baseline.position[:, 1], "r-", lw=0.8, label="no GP")
        ax.set_aspect("equal")
        ax.set_xlabel("x [um]")
        ax.set_ylabel("y [um]")
        ax.legend(loc="best", fontsize=8)
        _save(fig, path)


def plot_xt(log, path, baseline=None):
    """x(t) and y(t) traces against the reference."""
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(2, 1, figsize=(6, 4), sharex=True)
        for i, (ax, name) in enumerate(zip(axes, "xy")):
            ax.plot(log.t, log.reference[:, i], "k--", lw=1)
            ax.plot(log.t, log.position[:, i], "b-", lw=1.2)
            if baseline is not None:
                ax.plot(baseline.t, baseline.position[:, i], "r-", lw=0.8)
            ax.set_ylabel(f"{name} [um]")
        axes[-1].set_xlabel("t [s]")
        _save(fig, path)
