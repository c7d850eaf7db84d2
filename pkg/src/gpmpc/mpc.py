"""Receding-horizon tracking controller.

Positions are eliminated through ``p_t = p_{t-1} + a0*dt*u_t + d*dt`` so the
horizon problem becomes a box-constrained QP in the stacked controls,

    minimize 0.5 * U' H U + g' U + const   s.t.  lower <= U <= upper,

solved with accelerated projected gradient.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import gp as gplib
from .dynamics import u_to_polar

U_BOUND = 40.0 / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class MPCConfig:
    Q: np.ndarray = field(default_factory=lambda: np.eye(2))
    R: np.ndarray = field(default_factory=lambda: 0.01 * np.eye(2))
    horizon_T: int = 5
    dt: float = 0.03
    u_min: np.ndarray = field(default_factory=lambda: np.full(2, -U_BOUND))
    u_max: np.ndarray = field(default_factory=lambda: np.full(2, U_BOUND))
    solver_tol: float = 1e-8
    max_iters: int = 20000

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float).reshape(2, 2)
        R = np.asarray(self.R, dtype=float).reshape(2, 2)
        lo = np.asarray(self.u_min, dtype=float).reshape(2)
        hi = np.asarray(self.u_max, dtype=float).reshape(2)
        for name, M in (("Q", Q), ("R", R)):
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if int(self.horizon_T) < 1:
            raise ValueError("horizon_T must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(lo < hi):
            raise ValueError("u_min must be below u_max componentwise")
        if not (self.solver_tol > 0 and self.max_iters >= 1):
            raise ValueError("solver_tol and max_iters must be positive")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)
        object.__setattr__(self, "horizon_T", int(self.horizon_T))

    def to_dict(self) -> dict:
        return {
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "horizon_T": self.horizon_T,
            "dt": self.dt,
            "u_min": self.u_min.tolist(),
            "u_max": self.u_max.tolist(),
            "solver_tol": self.solver_tol,
            "max_iters": self.max_iters,
        }


@dataclass(frozen=True, eq=False)
class QPProblem:
    hessian: np.ndarray
    gradient: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    constant: float = 0.0
    # rollout data so controls can be mapped back to positions
    p0: np.ndarray = None
    step_gain: float = 0.0
    drift: np.ndarray = None

    def objective(self, U) -> float:
        U = np.asarray(U, dtype=float)
        return float(0.5 * U @ self.hessian @ U + self.gradient @ U + self.constant)

    def rollout(self, U) -> np.ndarray:
        if self.p0 is None:
            return np.empty((0, 2))
        steps = self.step_gain * np.asarray(U, dtype=float).reshape(-1, 2) + self.drift
        return self.p0 + np.cumsum(steps, axis=0)


@dataclass(frozen=True, eq=False)
class ControlSequence:
    controls: np.ndarray
    predicted_positions: np.ndarray
    objective: float
    converged: bool
    iterations: int
    kkt_residual: float


def reference_window(full_ref, step_index: int, T: int) -> np.ndarray:
    """Rows ``step_index+1 .. step_index+T``, repeating the last waypoint past the end."""
    full_ref = np.asarray(full_ref, dtype=float).reshape(-1, 2)
    if full_ref.shape[0] == 0:
        raise ValueError("empty reference")
    idx = np.minimum(step_index + 1 + np.arange(T), full_ref.shape[0] - 1)
    return full_ref[idx]


def build_qp(p0, ref, d_hat, a0_hat: float, cfg: MPCConfig) -> QPProblem:
    T = cfg.horizon_T
    ref = np.asarray(ref, dtype=float).reshape(-1, 2)
    if ref.shape[0] != T:
        raise ValueError(f"reference window has {ref.shape[0]} rows, horizon is {T}")
    p0 = np.asarray(p0, dtype=float).reshape(2)
    d_hat = np.asarray(d_hat, dtype=float).reshape(2)
    b = a0_hat * cfg.dt
    drift = d_hat * cfg.dt

    # P = 1 (x) p0 + B U + c with B = b * (L (x) I2), L lower-triangular ones
    B = b * np.kron(np.tril(np.ones((T, T))), np.eye(2))
    c = np.outer(np.arange(1, T + 1), drift).ravel()
    e = np.tile(p0, T) + c - ref.ravel()
    Qb = np.kron(np.eye(T), cfg.Q)
    Rb = np.kron(np.eye(T), cfg.R)
    QB = Qb @ B
    H = 2.0 * (B.T @ QB + Rb)
    H = 0.5 * (H + H.T)
    g = 2.0 * (QB.T @ e)
    return QPProblem(
        hessian=H,
        gradient=g,
        lower=np.tile(cfg.u_min, T),
        upper=np.tile(cfg.u_max, T),
        constant=float(e @ Qb @ e),
        p0=p0,
        step_gain=b,
        drift=drift,
    )


def kkt_residual(qp: QPProblem, U) -> float:
    """Infinity norm of ``U - proj(U - grad)``; zero exactly at the box-QP optimum."""
    grad = qp.hessian @ U + qp.gradient
    return float(np.max(np.abs(U - np.clip(U - grad, qp.lower, qp.upper))))


def solve_qp(qp: QPProblem, cfg: MPCConfig, warm_start=None) -> ControlSequence:
    """Accelerated projected gradient (FISTA) with gradient-based restarts.

    Step size is ``1/L`` with ``L`` the Gershgorin bound on the largest
    Hessian eigenvalue.
    """
    H, g, lo, hi = qp.hessian, qp.gradient, qp.lower, qp.upper
    L = float(np.max(np.sum(np.abs(H), axis=1)))
    if L <= 0:
        U = np.clip(np.zeros_like(g), lo, hi)
        return _finish(qp, U, True, 0)
    step = 1.0 / L

    x = np.clip(np.zeros_like(g) if warm_start is None else np.asarray(warm_start, dtype=float), lo, hi)
    y = x.copy()
    t = 1.0
    best, best_res = x, math.inf
    for it in range(1, cfg.max_iters + 1):
        grad_y = H @ y + g
        x_new = np.clip(y - step * grad_y, lo, hi)
        grad_x = H @ x_new + g
        res = float(np.max(np.abs(x_new - np.clip(x_new - grad_x, lo, hi))))
        if res < best_res:
            best, best_res = x_new, res
        if res <= cfg.solver_tol:
            return _finish(qp, _polish(qp, x_new), True, it)
        if (y - x_new) @ (x_new - x) > 0:
            # momentum is pointing uphill; restart
            t = 1.0
            y = x_new
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
    return _finish(qp, best, False, cfg.max_iters)


def _polish(qp: QPProblem, U):
    """Exact solve on the free variables of the active set identified by ``U``.

    A KKT residual of ``tol`` only bounds the distance to the optimum by
    ``tol / lambda_min(H)``; the Newton step removes that gap when the active
    set is already correct.  The polished point is kept only if it is no worse.
    """
    H, g, lo, hi = qp.hessian, qp.gradient, qp.lower, qp.upper
    free = (U > lo) & (U < hi)
    if not np.any(free):
        return U
    V = U.copy()
    rhs = -(g[free] + H[np.ix_(free, ~free)] @ U[~free])
    try:
        V[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
    except np.linalg.LinAlgError:
        return U
    V = np.clip(V, lo, hi)
    return V if kkt_residual(qp, V) <= kkt_residual(qp, U) else U


def _finish(qp, U, converged, iters):
    U = np.clip(U, qp.lower, qp.upper)
    return ControlSequence(
        controls=U.reshape(-1, 2) if qp.p0 is not None else U.reshape(-1, 1),
        predicted_positions=qp.rollout(U),
        objective=qp.objective(U),
        converged=bool(converged),
        iterations=int(iters),
        kkt_residual=kkt_residual(qp, U),
    )


@dataclass(frozen=True, eq=False)
class StepDiagnostics:
    step_index: int
    d_hat: np.ndarray
    query: tuple
    objective: float
    converged: bool
    iterations: int
    predicted_positions: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "step": self.step_index,
                "d_hat": self.d_hat.tolist(),
                "alpha": self.query[0],
                "f": self.query[1],
                "objective": self.objective,
                "converged": self.converged,
                "iterations": self.iterations,
                "predicted_positions": self.predicted_positions.tolist(),
            },
            sort_keys=True,
        )


def estimate_disturbance(gps, u_prev) -> tuple[np.ndarray, tuple]:
    """GP disturbance estimate at the (alpha, f) of ``u_prev``; zero without models."""
    pc = u_to_polar(u_prev)
    query = (pc.heading, pc.freq)
    if gps is None:
        return np.zeros(2), query
    gx, gy = gps
    x = np.array(query)
    return np.array([gplib.predict_mean(gx, x), gplib.predict_mean(gy, x)]), query


def mpc_step(p0, full_ref, step_index: int, gps, a0_hat: float, cfg: MPCConfig, u_prev, warm_start=None):
    """One receding-horizon step; returns the first control and diagnostics.

    The disturbance estimate is held constant over the horizon.  Pass
    ``gps=None`` for the no-learning baseline.
    """
    d_hat, query = estimate_disturbance(gps, u_prev)
    ref = reference_window(full_ref, step_index, cfg.horizon_T)
    qp = build_qp(p0, ref, d_hat, a0_hat, cfg)
    seq = solve_qp(qp, cfg, warm_start=warm_start)
    diag = StepDiagnostics(
        step_index=int(step_index),
        d_hat=d_hat,
        query=query,
        objective=seq.objective,
        converged=seq.converged,
        iterations=seq.iterations,
        predicted_positions=seq.predicted_positions,
    )
    return seq.controls[0].copy(), diag
