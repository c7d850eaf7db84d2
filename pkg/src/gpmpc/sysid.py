"""Offline identification: velocities from logged positions, the linear
gain/offset fit, residual datasets and per-axis disturbance GPs."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import filtfilt

from . import gp as gplib
from .dynamics import u_to_polar_batch

UNIFORM_TOL = 0.01


class DataError(ValueError):
    """Malformed or unusable identification data."""


@dataclass(frozen=True, eq=False)
class RawTrajectory:
    """Logged run.  ``commands[k]`` is held over ``[times[k], times[k+1])``."""

    times: np.ndarray
    positions: np.ndarray
    commands: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        u = np.asarray(self.commands, dtype=float).reshape(-1, 2)
        if not (t.size == p.shape[0] == u.shape[0]):
            raise DataError(f"length mismatch: {t.size} times, {p.shape[0]} positions, {u.shape[0]} commands")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p)) and np.all(np.isfinite(u))):
            raise DataError("trajectory contains NaN or Inf")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise DataError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "commands", u)

    def __len__(self):
        return self.times.size

    @property
    def dt(self) -> float:
        return float(np.mean(np.diff(self.times)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y", "ux", "uy"])
            for t, (x, y), (ux, uy) in zip(self.times, self.positions, self.commands):
                w.writerow([repr(float(v)) for v in (t, x, y, ux, uy)])

    @classmethod
    def from_csv(cls, path) -> "RawTrajectory":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["t", "x", "y", "ux", "uy"]:
                raise DataError(f"{path}: line 1: expected header t,x,y,ux,uy, got {header}")
            prev_t = -math.inf
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 5:
                    raise DataError(f"{path}: line {lineno}: expected 5 fields, got {len(row)}")
                try:
                    vals = [float(v) for v in row]
                except ValueError as exc:
                    raise DataError(f"{path}: line {lineno}: {exc}") from None
                if not all(math.isfinite(v) for v in vals):
                    raise DataError(f"{path}: line {lineno}: non-finite value")
                if vals[0] <= prev_t:
                    raise DataError(f"{path}: line {lineno}: time is not increasing")
                prev_t = vals[0]
                rows.append(vals)
        if not rows:
            raise DataError(f"{path}: no data rows")
        a = np.asarray(rows)
        return cls(a[:, 0], a[:, 1:3], a[:, 3:5])


@dataclass(frozen=True, eq=False)
class VelocityDataset:
    inputs: np.ndarray       # (alpha, f)
    controls_u: np.ndarray
    velocities: np.ndarray

    def __len__(self):
        return self.velocities.shape[0]


@dataclass(frozen=True)
class LinearFit:
    a0x: float
    a0y: float
    dcx: float
    dcy: float
    r2x: float
    r2y: float


@dataclass(frozen=True, eq=False)
class ResidualDataset:
    inputs: np.ndarray
    residuals_x: np.ndarray
    residuals_y: np.ndarray

    def __post_init__(self):
        if not (self.inputs.shape[0] == self.residuals_x.size == self.residuals_y.size):
            raise DataError("residual dataset lengths differ")

    def __len__(self):
        return self.residuals_x.size


@dataclass(frozen=True)
class AxisReport:
    mae_abs: float
    mae_pct: float
    n_train: int
    n_test: int
    seed: int


@dataclass(frozen=True)
class MAEReport:
    x: AxisReport
    y: AxisReport

    def to_json(self) -> str:
        return json.dumps({"x": asdict(self.x), "y": asdict(self.y)}, sort_keys=True, indent=2)


# --- signal processing -----------------------------------------------------

def _sample_step(times) -> float:
    steps = np.diff(np.asarray(times, dtype=float))
    h = float(np.mean(steps))
    if np.max(np.abs(steps - h)) > UNIFORM_TOL * h:
        raise DataError("sampling is not uniform within 1%; resample before differentiating")
    return h


def _differentiate(signal, h):
    return np.gradient(signal, h, axis=0, edge_order=1)


def differentiate(traj: RawTrajectory) -> np.ndarray:
    """Central differences inside, one-sided differences at both ends."""
    if len(traj) < 3:
        raise DataError("need at least 3 samples to differentiate")
    return _differentiate(traj.positions, _sample_step(traj.times))


def lowpass(signal, cutoff_hz: float, sample_hz: float) -> np.ndarray:
    """Zero-phase single-pole low-pass (forward then backward pass).

    Coefficient ``a = exp(-2*pi*cutoff/sample)``.  The ends are padded by odd
    reflection so constant and linear signals pass through unchanged.
    """
    if not (cutoff_hz > 0 and sample_hz > 0):
        raise ValueError("cutoff and sample rate must be positive")
    if cutoff_hz >= sample_hz / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz is not below Nyquist ({sample_hz / 2} Hz)")
    x = np.asarray(signal, dtype=float)
    a = math.exp(-2.0 * math.pi * cutoff_hz / sample_hz)
    n = x.shape[0]
    if n < 2:
        return x.copy()
    # pad until the transient decays below 1e-13
    padlen = min(n - 1, int(math.ceil(math.log(1e-13) / math.log(a))) if a > 0 else 1)
    return filtfilt([1.0 - a], [1.0, -a], x, axis=0, padtype="odd", padlen=padlen)


def velocity_dataset(traj: RawTrajectory, cutoff_hz: float | None = 2.0, steady_only: bool = True) -> VelocityDataset:
    """Velocities from filtered, differentiated positions.

    The commands are pushed through the same integrate, filter and
    differentiate chain as the positions, so each velocity row is paired
    with the control that actually produced it.  With ``steady_only`` the
    rows whose difference stencil straddles a command change are dropped.
    """
    h = _sample_step(traj.times)
    if len(traj) < 3:
        raise DataError("need at least 3 samples")
    disp = np.vstack([np.zeros((1, 2)), np.cumsum(traj.commands[:-1] * h, axis=0)])
    pos = traj.positions
    if cutoff_hz is not None:
        pos = lowpass(pos, cutoff_hz, 1.0 / h)
        disp = lowpass(disp, cutoff_hz, 1.0 / h)
    v = _differentiate(pos, h)
    u = _differentiate(disp, h)

    keep = np.ones(len(traj), dtype=bool)
    if steady_only:
        same = np.all(traj.commands[1:] == traj.commands[:-1], axis=1)
        keep[1:] = same
        keep[0] = keep[-1] = False
    return VelocityDataset(inputs=u_to_polar_batch(u[keep]), controls_u=u[keep], velocities=v[keep])


# --- regression ------------------------------------------------------------

def _ols(u, v, axis_name):
    if np.ptp(u) == 0:
        raise DataError(f"degenerate design: constant command on the {axis_name} axis")
    A = np.column_stack([u, np.ones_like(u)])
    (slope, icpt), *_ = np.linalg.lstsq(A, v, rcond=None)
    resid = v - (slope * u + icpt)
    ss_tot = np.sum((v - v.mean()) ** 2)
    ss_res = np.sum(resid ** 2)
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else -math.inf
    return float(slope), float(icpt), float(r2)


def fit_linear(data: VelocityDataset) -> LinearFit:
    if len(data) < 2:
        raise DataError("need at least 2 samples for the linear fit")
    ax, dx, rx = _ols(data.controls_u[:, 0], data.velocities[:, 0], "x")
    ay, dy, ry = _ols(data.controls_u[:, 1], data.velocities[:, 1], "y")
    return LinearFit(ax, ay, dx, dy, rx, ry)


def effective_radius(fit: LinearFit) -> float:
    return math.sqrt(fit.a0x ** 2 + fit.a0y ** 2) / math.sqrt(2.0)


def residuals(data: VelocityDataset, a0_hat: float) -> ResidualDataset:
    r = data.velocities - a0_hat * data.controls_u
    return ResidualDataset(inputs=data.inputs.copy(), residuals_x=r[:, 0].copy(), residuals_y=r[:, 1].copy())


# --- disturbance learning --------------------------------------------------

def split_indices(n: int, seed: int, test_fraction: float = 0.2):
    """Seeded shuffled split; returns sorted (train, test) index arrays."""
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def stratified_subset(inputs, idx, k: int) -> np.ndarray:
    """Evenly spaced picks from ``idx`` ordered by (f, alpha)."""
    idx = np.asarray(idx)
    if idx.size <= k:
        return idx
    order = idx[np.lexsort((inputs[idx, 0], inputs[idx, 1]))]
    picks = np.unique(np.round(np.linspace(0, order.size - 1, k)).astype(int))
    return np.sort(order[picks])


def _mae(pred, obs):
    mae = float(np.mean(np.abs(pred - obs)))
    span = float(np.ptp(obs))
    if span > 0:
        pct = 100.0 * mae / span
    else:
        pct = 0.0 if mae == 0 else math.inf
    return mae, pct


def train_disturbance_models(
    res: ResidualDataset,
    split_seed: int,
    max_train: int = 2000,
    hyper_points: int = 300,
    search_space: gplib.SearchSpace | None = None,
    search_kw: dict | None = None,
):
    """Fit one GP per axis on an 80/20 split and report held-out MAE.

    Hyperparameters are searched on a stratified subset of at most
    ``hyper_points`` training rows; the final GP uses up to ``max_train``.
    Without an explicit ``search_space`` the bounds are scaled to each axis'
    residual variance (``search_kw`` is forwarded to ``SearchSpace.for_targets``).
    """
    n = len(res)
    if n < 10:
        raise DataError(f"need at least 10 residual samples, got {n}")
    train, test = split_indices(n, split_seed)
    sel = stratified_subset(res.inputs, train, max_train)
    hyper = stratified_subset(res.inputs, sel, hyper_points)

    models, reports = [], []
    for y in (res.residuals_x, res.residuals_y):
        ss = search_space or gplib.SearchSpace.for_targets(y[hyper], **{"seed": split_seed, **(search_kw or {})})
        params = gplib.optimize_hyperparameters(res.inputs[hyper], y[hyper], ss, standardize=True)
        model = gplib.fit(res.inputs[sel], y[sel], params, standardize=True)
        pred = gplib.predict_batch(model, res.inputs[test], return_var=False)
        mae, pct = _mae(pred, y[test])
        models.append(model)
        reports.append(AxisReport(mae, pct, int(sel.size), int(test.size), int(split_seed)))
    return models[0], models[1], MAEReport(*reports)


@dataclass(frozen=True, eq=False)
class Identification:
    fit: LinearFit
    a0_hat: float
    data: VelocityDataset
    residuals: ResidualDataset


def identify(traj: RawTrajectory, cutoff_hz: float | None = 2.0, steady_only: bool = True) -> Identification:
    data = velocity_dataset(traj, cutoff_hz=cutoff_hz, steady_only=steady_only)
    lf = fit_linear(data)
    a0 = effective_radius(lf)
    return Identification(lf, a0, data, residuals(data, a0))
