"""Ground-truth plant, training sweeps and closed-loop scenarios."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import u_to_polar, u_to_polar_batch
from .mpc import MPCConfig, mpc_step
from .sysid import RawTrajectory


@dataclass(frozen=True, eq=False)
class GroundTruthModel:
    """Synthetic disturbance field plus Brownian motion.

    Per axis the field is ``bias + poly(f / f_ref) * sum_k (a_k cos(k*alpha) + b_k sin(k*alpha))``
    where ``poly`` is a quadratic with coefficients ``f_poly``.  ``harmonics``
    has shape (2 axes, K+1, 2) holding (a_k, b_k).
    """

    a0_true: float = 1.5
    bias: np.ndarray = field(default_factory=lambda: np.zeros(2))
    harmonics: np.ndarray = field(default_factory=lambda: np.zeros((2, 1, 2)))
    f_poly: np.ndarray = field(default_factory=lambda: np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    f_ref: float = 40.0
    brownian_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        h = np.asarray(self.harmonics, dtype=float)
        if h.ndim != 3 or h.shape[0] != 2 or h.shape[2] != 2:
            raise ValueError(f"harmonics must have shape (2, K+1, 2), got {h.shape}")
        fp = np.asarray(self.f_poly, dtype=float).reshape(2, 3)
        if not self.a0_true > 0 or self.brownian_sigma < 0 or not self.f_ref > 0:
            raise ValueError("invalid ground-truth parameters")
        object.__setattr__(self, "harmonics", h)
        object.__setattr__(self, "f_poly", fp)
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float).reshape(2))

    def to_dict(self) -> dict:
        return {
            "a0_true": self.a0_true,
            "bias": self.bias.tolist(),
            "harmonics": self.harmonics.tolist(),
            "f_poly": self.f_poly.tolist(),
            "f_ref": self.f_ref,
            "brownian_sigma": self.brownian_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthModel":
        return cls(**d)


def default_field(a0_true=1.5, amplitude=6.0, bias=(0.0, 0.0), brownian_sigma=0.0, seed=0) -> GroundTruthModel:
    """Smooth zero-mean field with second and third heading harmonics.

    Harmonics 2 and 3 are orthogonal to ``cos`` and ``sin`` over a full
    heading sweep, so the field does not bias the gain regression.
    """
    harmonics = amplitude * np.array(
        [
            [[0, 0], [0, 0], [0.6, 0.3], [0.0, 0.25]],
            [[0, 0], [0, 0], [-0.2, 0.5], [0.3, 0.0]],
        ]
    )
    f_poly = np.array([[0.4, 0.8, -0.2], [0.3, 0.5, 0.2]])
    return GroundTruthModel(a0_true, np.asarray(bias, float), harmonics, f_poly, 40.0, brownian_sigma, seed)


def eval_disturbance(model: GroundTruthModel, alpha, f) -> np.ndarray:
    """Deterministic field value; Brownian noise is added by the plant, not here.

    Scalar ``alpha``/``f`` give a 2-vector, arrays give an (n, 2) array.
    """
    alpha = np.asarray(alpha, dtype=float)
    f = np.asarray(f, dtype=float)
    K = model.harmonics.shape[1]
    k = np.arange(K)
    ang = alpha[..., None] * k
    c, s = np.cos(ang), np.sin(ang)
    fs = f / model.f_ref
    out = []
    for ax in range(2):
        series = c @ model.harmonics[ax, :, 0] + s @ model.harmonics[ax, :, 1]
        p = model.f_poly[ax]
        out.append(model.bias[ax] + (p[0] + p[1] * fs + p[2] * fs * fs) * series)
    return np.stack(out, axis=-1)


def disturbance_at_u(model: GroundTruthModel, u) -> np.ndarray:
    pc = u_to_polar(u)
    return eval_disturbance(model, pc.heading, pc.freq)


def plant_step(model: GroundTruthModel, p, u, dt: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Advance the true plant; returns (next position, deterministic disturbance)."""
    D = disturbance_at_u(model, u)
    p_next = np.asarray(p, dtype=float) + model.a0_true * dt * np.asarray(u, dtype=float) + D * dt
    if model.brownian_sigma > 0:
        p_next = p_next + rng.normal(0.0, model.brownian_sigma * math.sqrt(dt), size=2)
    return p_next, D


# --- training sweep --------------------------------------------------------

@dataclass(frozen=True)
class Sweep:
    f_max: float = 40.0
    f_step: float = 1.0
    alpha_step_deg: float = 1.0
    dwell_steps: int = 3
    stride: int = 1

    def grid(self) -> np.ndarray:
        """(f, alpha) pairs, frequency outer, heading inner, every ``stride``-th kept."""
        freqs = np.arange(0.0, self.f_max + 0.5 * self.f_step, self.f_step)
        alphas = np.deg2rad(np.arange(0.0, 360.0 - 1e-9, self.alpha_step_deg))
        F, A = np.meshgrid(freqs, alphas, indexing="ij")
        g = np.column_stack([F.ravel(), A.ravel()])
        return g[:: self.stride]


def generate_training_run(model: GroundTruthModel, sweep: Sweep = Sweep(), dt: float = 0.1, seed: int | None = None) -> RawTrajectory:
    """Open-loop sweep: each (f, alpha) command is held for ``dwell_steps`` samples."""
    if sweep.dwell_steps < 2:
        raise ValueError("dwell_steps must be >= 2")
    rng = np.random.default_rng(model.seed if seed is None else seed)
    g = sweep.grid()
    cmd = np.column_stack([g[:, 0] * np.cos(g[:, 1]), g[:, 0] * np.sin(g[:, 1])])
    pol = u_to_polar_batch(cmd)
    D = eval_disturbance(model, pol[:, 0], pol[:, 1])
    commands = np.repeat(cmd, sweep.dwell_steps, axis=0)
    Ds = np.repeat(D, sweep.dwell_steps, axis=0)
    n = commands.shape[0]
    incr = (model.a0_true * commands + Ds) * dt
    if model.brownian_sigma > 0:
        incr = incr + rng.normal(0.0, model.brownian_sigma * math.sqrt(dt), size=incr.shape)
    positions = np.vstack([np.zeros((1, 2)), np.cumsum(incr[:-1], axis=0)])
    times = dt * np.arange(n)
    return RawTrajectory(times, positions, commands)


# --- closed loop -----------------------------------------------------------

def circle_reference(radius: float, angular_speed: float, dt: float, duration: float) -> np.ndarray:
    if radius <= 0 or dt <= 0 or duration <= 0 or angular_speed < 0:
        raise ValueError("circle parameters must be positive")
    k = np.arange(int(round(duration / dt)) + 1)
    th = angular_speed * k * dt
    return radius * np.column_stack([np.cos(th), np.sin(th)])


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    kind: str = "circle"            # circle | planner_path | custom
    ground_truth: GroundTruthModel = field(default_factory=GroundTruthModel)
    mpc: MPCConfig = field(default_factory=MPCConfig)
    dt: float = 0.03
    radius: float = 50.0
    angular_speed: float = 0.2
    duration: float = 10.0
    waypoints: np.ndarray = None
    start: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("circle", "planner_path", "custom"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not math.isclose(self.dt, self.mpc.dt, rel_tol=1e-12):
            raise ValueError(f"scenario dt {self.dt} does not match controller dt {self.mpc.dt}")
        if self.kind != "circle" and self.waypoints is None:
            raise ValueError(f"{self.kind} scenario needs waypoints")

    def reference(self) -> np.ndarray:
        if self.kind == "circle":
            return circle_reference(self.radius, self.angular_speed, self.dt, self.duration)
        return np.asarray(self.waypoints, dtype=float).reshape(-1, 2)


LOG_FIELDS = ["t", "ref_x", "ref_y", "x", "y", "ux", "uy", "dhat_x", "dhat_y", "dtrue_x", "dtrue_y", "objective", "converged"]


@dataclass(frozen=True, eq=False)
class TrajectoryLog:
    t: np.ndarray
    reference: np.ndarray
    position: np.ndarray
    u: np.ndarray
    d_hat: np.ndarray
    d_true: np.ndarray
    objective: np.ndarray
    converged: np.ndarray

    def __len__(self):
        return self.t.size

    def rows(self):
        for k in range(len(self)):
            yield [
                self.t[k], *self.reference[k], *self.position[k], *self.u[k],
                *self.d_hat[k], *self.d_true[k], self.objective[k], int(self.converged[k]),
            ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_FIELDS)
            for row in self.rows():
                w.writerow([repr(float(v)) if isinstance(v, float) else str(v) for v in map(_py, row)])

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        a = np.genfromtxt(path, delimiter=",", names=True)
        a = np.atleast_1d(a)
        col = lambda *names: np.column_stack([a[n] for n in names])
        return cls(
            t=a["t"],
            reference=col("ref_x", "ref_y"),
            position=col("x", "y"),
            u=col("ux", "uy"),
            d_hat=col("dhat_x", "dhat_y"),
            d_true=col("dtrue_x", "dtrue_y"),
            objective=a["objective"],
            converged=a["converged"].astype(bool),
        )


def _py(v):
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    return float(v)


def simulate_closed_loop(scenario: ScenarioConfig, a0_hat: float, gps, seed: int, diagnostics=None) -> TrajectoryLog:
    """Run MPC against the true plant.  ``gps=None`` runs the no-learning baseline.

    If ``diagnostics`` is a list, per-step controller diagnostics are appended.
    """
    ref = scenario.reference()
    cfg = scenario.mpc
    model = scenario.ground_truth
    rng = np.random.default_rng(seed)
    n = ref.shape[0]
    p = ref[0].copy() if scenario.start is None else np.asarray(scenario.start, dtype=float).copy()
    u_prev = np.zeros(2)

    t = scenario.dt * np.arange(n)
    pos = np.empty((n, 2))
    us = np.empty((n, 2))
    dh = np.empty((n, 2))
    dt_ = np.empty((n, 2))
    obj = np.empty(n)
    conv = np.empty(n, dtype=bool)
    for k in range(n):
        pos[k] = p
        try:
            u, diag = mpc_step(p, ref, k, gps, a0_hat, cfg, u_prev)
        except Exception as exc:
            raise RuntimeError(f"controller failed at step {k}: {exc}") from exc
        if diagnostics is not None:
            diagnostics.append(diag)
        p, D = plant_step(model, p, u, scenario.dt, rng)
        us[k], dh[k], dt_[k] = u, diag.d_hat, D
        obj[k], conv[k] = diag.objective, diag.converged
        u_prev = u
    return TrajectoryLog(t, ref, pos, us, dh, dt_, obj, conv)


def metrics(log: TrajectoryLog, skip: int = 0) -> dict:
    """Tracking statistics over ``log`` rows from ``skip`` on."""
    if len(log) - skip <= 0:
        raise ValueError("empty log")
    err = np.linalg.norm(log.position[skip:] - log.reference[skip:], axis=1)
    derr = np.linalg.norm(log.d_hat[skip:] - log.d_true[skip:], axis=1)
    return {
        "rms_error": float(np.sqrt(np.mean(err ** 2))),
        "max_error": float(np.max(err)),
        "mean_abs_dhat_error": float(np.mean(derr)),
    }
