import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpmpc.dynamics import ModelParams, PolarControl, polar_to_u, step, u_to_polar, u_to_polar_batch

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_polar_to_u_examples():
    np.testing.assert_array_equal(polar_to_u(PolarControl(1.0, 0.0)), [1.0, 0.0])
    np.testing.assert_array_equal(polar_to_u(PolarControl(0.0, 2.3)), [0.0, 0.0])
    np.testing.assert_allclose(polar_to_u(PolarControl(2.0, math.pi / 2)), [0.0, 2.0], atol=1e-12)


def test_u_to_polar_examples():
    assert u_to_polar([1.0, 0.0]) == (1.0, 0.0)
    f, a = u_to_polar([-1.0, 0.0])
    assert f == 1.0 and a == pytest.approx(math.pi, abs=1e-15)
    assert u_to_polar([0.0, 0.0]) == (0.0, 0.0)


def test_heading_in_range_for_all_quadrants():
    for u in ([1, 1], [-1, 1], [-1, -1], [1, -1], [0, -1], [1e-300, -0.0]):
        _, a = u_to_polar(u)
        assert 0.0 <= a < 2 * math.pi


def test_batch_matches_scalar():
    U = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0], [0.3, -2.0]])
    out = u_to_polar_batch(U)
    for row, u in zip(out, U):
        f, a = u_to_polar(u)
        assert row[1] == pytest.approx(f) and row[0] == pytest.approx(a)


def test_step_examples():
    np.testing.assert_allclose(step([0, 0], [1, 0], [0, 0], ModelParams(1.0, 0.1)), [0.1, 0.0])
    np.testing.assert_allclose(step([3, 4], [0, 0], [0, -2], ModelParams(1.0, 0.5)), [3.0, 3.0])
    np.testing.assert_allclose(step([1, 1], [2, 3], [0.5, -0.5], ModelParams(2.0, 0.1)), [1.45, 1.55], atol=1e-15)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(0.0, 0.1)
    with pytest.raises(ValueError):
        ModelParams(1.0, -0.1)


@given(ux=finite, uy=finite)
def test_round_trip_u(ux, uy):
    if math.hypot(ux, uy) < 1e-6:
        return
    back = polar_to_u(u_to_polar([ux, uy]))
    np.testing.assert_allclose(back, [ux, uy], atol=1e-12 * max(1.0, math.hypot(ux, uy)), rtol=0)


@given(f=st.floats(1e-3, 1e3), a=st.floats(0, 2 * math.pi, exclude_max=True))
def test_round_trip_polar(f, a):
    f2, a2 = u_to_polar(polar_to_u(PolarControl(f, a)))
    assert f2 == pytest.approx(f, rel=1e-12)
    # headings within 1e-12 of 2*pi legitimately wrap to ~0
    diff = abs(a2 - a)
    assert min(diff, 2 * math.pi - diff) <= 1e-12


@settings(max_examples=50)
@given(ux=finite, uy=finite, th=st.floats(0, 2 * math.pi))
def test_norm_rotation_invariant(ux, uy, th):
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    f1 = u_to_polar([ux, uy]).freq
    f2 = u_to_polar(R @ [ux, uy]).freq
    assert f2 == pytest.approx(f1, abs=1e-12 * max(1.0, f1))


@given(u1=st.tuples(finite, finite), u2=st.tuples(finite, finite), a0=st.floats(0.1, 10), dt=st.floats(1e-3, 1))
def test_step_is_affine_in_u(u1, u2, a0, dt):
    prm = ModelParams(a0, dt)
    p, D = np.array([1.0, -2.0]), np.array([0.3, 0.1])
    u1, u2 = np.array(u1), np.array(u2)
    lhs = step(p, u1 + u2, D, prm) - step(p, u2, D, prm)
    np.testing.assert_allclose(lhs, a0 * dt * u1, atol=1e-9 * (1 + np.abs(u1).max() + np.abs(u2).max()))
