import json
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpmpc import gp as gplib
from gpmpc import mpc
from gpmpc.dynamics import ModelParams, step
from gpmpc.mpc import MPCConfig, QPProblem


def random_instance(rng, T=None, box=None):
    T = int(rng.integers(1, 7)) if T is None else T
    A = rng.normal(size=(2, 2))
    Q = A @ A.T + 0.1 * np.eye(2) if rng.random() < 0.8 else np.diag([1.0, 0.0])
    Bm = rng.normal(size=(2, 2))
    R = 0.01 * (Bm @ Bm.T) + 1e-3 * np.eye(2)
    hi = rng.uniform(0.5, 20.0, size=2) if box is None else np.full(2, box)
    cfg = MPCConfig(Q=Q, R=R, horizon_T=T, dt=float(rng.uniform(0.01, 0.2)), u_min=-hi, u_max=hi,
                    solver_tol=1e-8, max_iters=100000)
    p0 = rng.uniform(-20, 20, size=2)
    ref = p0 + rng.uniform(-5, 5, size=(T, 2))
    d_hat = rng.uniform(-3, 3, size=2)
    a0 = float(rng.uniform(0.5, 5))
    return cfg, p0, ref, d_hat, a0


def direct_objective(U, p0, ref, d_hat, a0, cfg):
    """Uncondensed cost with positions rolled out by the dynamics module."""
    prm = ModelParams(a0, cfg.dt)
    p, J = np.asarray(p0, float), 0.0
    for t, u in enumerate(np.asarray(U).reshape(-1, 2)):
        p = step(p, u, d_hat, prm)
        e = p - ref[t]
        J += e @ cfg.Q @ e + u @ cfg.R @ u
    return J


# --- reference window ---------------------------------------------------------

REF10 = np.column_stack([np.arange(1.0, 11.0), np.zeros(10)])


def test_reference_window_examples():
    np.testing.assert_array_equal(mpc.reference_window(REF10, 0, 5)[:, 0], [2, 3, 4, 5, 6])
    np.testing.assert_array_equal(mpc.reference_window(REF10, 7, 5)[:, 0], [9, 10, 10, 10, 10])
    np.testing.assert_array_equal(mpc.reference_window(REF10, 9, 5)[:, 0], [10] * 5)


def test_reference_window_empty():
    with pytest.raises(ValueError):
        mpc.reference_window(np.empty((0, 2)), 0, 3)


# --- config -------------------------------------------------------------------

def test_config_defaults_and_validation():
    cfg = MPCConfig()
    np.testing.assert_array_equal(cfg.Q, np.eye(2))
    np.testing.assert_array_equal(cfg.R, 0.01 * np.eye(2))
    assert np.hypot(*cfg.u_max) == pytest.approx(40.0)
    with pytest.raises(ValueError):
        MPCConfig(Q=-np.eye(2))
    with pytest.raises(ValueError):
        MPCConfig(u_min=[1, -1], u_max=[1, 1])
    with pytest.raises(ValueError):
        MPCConfig(horizon_T=0)


# --- build_qp -----------------------------------------------------------------

def test_build_qp_single_step_example():
    cfg = MPCConfig(R=np.zeros((2, 2)), horizon_T=1, dt=1.0)
    qp = mpc.build_qp([0, 0], [[1, 0]], [0, 0], 1.0, cfg)
    seq = mpc.solve_qp(qp, cfg)
    np.testing.assert_allclose(seq.controls[0], [1.0, 0.0], atol=1e-8)


def test_build_qp_zero_tracking_weight():
    cfg = MPCConfig(Q=np.zeros((2, 2)), horizon_T=4)
    qp = mpc.build_qp([3, 1], np.ones((4, 2)) * 9, [2, -1], 1.5, cfg)
    assert np.all(qp.gradient == 0)
    np.testing.assert_allclose(mpc.solve_qp(qp, cfg).controls, 0.0, atol=1e-12)


def test_drift_is_a_reference_shift():
    rng = np.random.default_rng(3)
    for _ in range(20):
        cfg, p0, ref, _, a0 = random_instance(rng)
        c = rng.uniform(-2, 2)
        d = np.array([c, c])
        T = cfg.horizon_T
        shifted = ref - np.outer(np.arange(1, T + 1), d * cfg.dt)
        a = mpc.solve_qp(mpc.build_qp(p0, ref, d, a0, cfg), cfg).controls
        b = mpc.solve_qp(mpc.build_qp(p0, shifted, [0, 0], a0, cfg), cfg).controls
        np.testing.assert_allclose(a, b, atol=1e-6)


def test_build_qp_rejects_wrong_window():
    with pytest.raises(ValueError):
        mpc.build_qp([0, 0], np.zeros((3, 2)), [0, 0], 1.0, MPCConfig(horizon_T=5))


def test_hessian_symmetric_pd():
    rng = np.random.default_rng(0)
    for _ in range(50):
        cfg, p0, ref, d, a0 = random_instance(rng)
        H = mpc.build_qp(p0, ref, d, a0, cfg).hessian
        assert np.max(np.abs(H - H.T)) <= 1e-12
        assert np.linalg.eigvalsh(H).min() > 0


def test_condensation_matches_rollout_objective():
    rng = np.random.default_rng(1)
    for _ in range(100):
        cfg, p0, ref, d, a0 = random_instance(rng)
        qp = mpc.build_qp(p0, ref, d, a0, cfg)
        U = rng.uniform(qp.lower, qp.upper)
        J = direct_objective(U, p0, ref, d, a0, cfg)
        assert qp.objective(U) == pytest.approx(J, rel=1e-9, abs=1e-9)
        # without the constant the two differ by exactly that constant
        assert qp.objective(U) - qp.constant == pytest.approx(J - qp.constant, rel=1e-9, abs=1e-9)


def test_one_step_prediction_matches_dynamics():
    rng = np.random.default_rng(2)
    for _ in range(30):
        cfg, p0, ref, d, a0 = random_instance(rng)
        qp = mpc.build_qp(p0, ref, d, a0, cfg)
        seq = mpc.solve_qp(qp, cfg)
        p = p0
        for t in range(cfg.horizon_T):
            p = step(p, seq.controls[t], d, ModelParams(a0, cfg.dt))
            np.testing.assert_allclose(seq.predicted_positions[t], p, atol=1e-9)


# --- solve_qp -----------------------------------------------------------------

def test_solve_1d_active_bound():
    qp = QPProblem(np.array([[1.0]]), np.array([-10.0]), np.array([0.0]), np.array([2.0]))
    seq = mpc.solve_qp(qp, MPCConfig())
    assert seq.controls.ravel()[0] == 2.0
    assert seq.converged


def test_zero_gradient_projects_zero():
    H = np.diag([2.0, 3.0, 1.0, 4.0])
    lo = np.array([0.5, -1.0, -2.0, 1.0])
    hi = np.array([1.0, 1.0, -1.0, 2.0])
    qp = QPProblem(H, np.zeros(4), lo, hi)
    seq = mpc.solve_qp(qp, MPCConfig())
    np.testing.assert_allclose(seq.controls.ravel(), np.clip(0, lo, hi))


def test_inactive_box_matches_dense_solve():
    rng = np.random.default_rng(4)
    for _ in range(50):
        cfg, p0, ref, d, a0 = random_instance(rng, box=1e6)
        qp = mpc.build_qp(p0, ref, d, a0, cfg)
        seq = mpc.solve_qp(qp, cfg)
        np.testing.assert_allclose(seq.controls.ravel(), np.linalg.solve(qp.hessian, -qp.gradient), atol=1e-6)


def test_beats_random_feasible_points_and_kkt():
    rng = np.random.default_rng(5)
    for _ in range(40):
        cfg, p0, ref, d, a0 = random_instance(rng)
        qp = mpc.build_qp(p0, ref, d, a0, cfg)
        seq = mpc.solve_qp(qp, cfg)
        assert seq.converged and seq.kkt_residual <= cfg.solver_tol
        U = rng.uniform(qp.lower, qp.upper, size=(1000, qp.lower.size))
        vals = 0.5 * np.einsum("ij,jk,ik->i", U, qp.hessian, U) + U @ qp.gradient + qp.constant
        assert seq.objective <= vals.min() + 1e-9 * abs(vals.min())
        assert np.all(seq.controls.ravel() >= qp.lower) and np.all(seq.controls.ravel() <= qp.upper)


def test_max_iters_flags_nonconvergence():
    rng = np.random.default_rng(6)
    cfg, p0, ref, d, a0 = random_instance(rng, T=6)
    tight = MPCConfig(Q=cfg.Q, R=cfg.R, horizon_T=6, dt=cfg.dt, u_min=cfg.u_min, u_max=cfg.u_max,
                      solver_tol=1e-14, max_iters=2)
    seq = mpc.solve_qp(mpc.build_qp(p0, ref, d, a0, tight), tight)
    assert not seq.converged and seq.iterations == 2


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), shrink=st.floats(0.05, 0.95))
def test_shrinking_box_never_lowers_optimum(seed, shrink):
    rng = np.random.default_rng(seed)
    cfg, p0, ref, d, a0 = random_instance(rng)
    small = MPCConfig(Q=cfg.Q, R=cfg.R, horizon_T=cfg.horizon_T, dt=cfg.dt, u_min=shrink * cfg.u_min,
                      u_max=shrink * cfg.u_max, solver_tol=cfg.solver_tol, max_iters=cfg.max_iters)
    big = mpc.solve_qp(mpc.build_qp(p0, ref, d, a0, cfg), cfg).objective
    little = mpc.solve_qp(mpc.build_qp(p0, ref, d, a0, small), small).objective
    assert little >= big - 1e-9 * max(1.0, abs(big))


# --- mpc_step -----------------------------------------------------------------

def constant_gps(cx, cy):
    X = np.array([[0.0, 0.0], [1.0, 10.0], [3.0, 20.0], [5.0, 35.0]])
    prm = gplib.KernelParams(1.0, (1.0, 10.0), 1e-4)
    return gplib.fit(X, np.full(4, cx), prm), gplib.fit(X, np.full(4, cy), prm)


def test_mpc_step_at_target_no_disturbance():
    cfg = MPCConfig()
    ref = np.tile([5.0, -2.0], (20, 1))
    u, diag = mpc.mpc_step([5.0, -2.0], ref, 0, constant_gps(0.0, 0.0), 1.5, cfg, np.zeros(2))
    assert np.max(np.abs(u)) <= cfg.solver_tol
    np.testing.assert_array_equal(diag.d_hat, [0.0, 0.0])


def test_mpc_step_queries_origin_at_start():
    _, diag = mpc.mpc_step([0, 0], np.ones((5, 2)), 0, None, 1.5, MPCConfig(), np.zeros(2))
    assert diag.query == (0.0, 0.0)
    doc = json.loads(diag.to_json())
    assert doc["alpha"] == 0.0 and doc["f"] == 0.0 and len(doc["predicted_positions"]) == 5


def test_mpc_step_uses_gp_estimate():
    gps = constant_gps(2.0, -1.0)
    _, diag = mpc.mpc_step([0, 0], np.ones((5, 2)), 0, gps, 1.5, MPCConfig(), np.array([3.0, 4.0]))
    np.testing.assert_allclose(diag.d_hat, [2.0, -1.0], atol=1e-12)
    assert diag.query[1] == pytest.approx(5.0)


def test_constant_disturbance_steady_state():
    c = np.array([3.0, -2.0])
    cfg = MPCConfig(R=np.zeros((2, 2)))
    gps = constant_gps(*c)
    a0 = 1.5
    target = np.array([10.0, 4.0])
    ref = np.tile(target, (200, 1))
    p, u_prev = np.zeros(2), np.zeros(2)
    for k in range(199):
        u, _ = mpc.mpc_step(p, ref, k, gps, a0, cfg, u_prev)
        p = step(p, u, c, ModelParams(a0, cfg.dt))
        u_prev = u
    lam = np.linalg.eigvalsh(cfg.Q).min()
    assert np.linalg.norm(p - target) <= 10 * cfg.solver_tol / lam


def test_mpc_step_timing_horizon_6():
    cfg = MPCConfig(horizon_T=6, dt=0.1)
    gps = constant_gps(1.0, 1.0)
    ref = np.column_stack([np.linspace(0, 30, 100), np.zeros(100)])
    mpc.mpc_step([0, 0], ref, 0, gps, 1.5, cfg, np.array([1.0, 0.0]))
    t0 = time.perf_counter()
    for k in range(20):
        mpc.mpc_step([0.3 * k, 0.1], ref, k, gps, 1.5, cfg, np.array([2.0, 0.5]))
    assert (time.perf_counter() - t0) / 20 < 0.01
