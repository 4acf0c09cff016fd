import numpy as np
import pytest

from wallbrace.discretize import (DiscreteDynamics, zoh_discretize,
                                  zoh_transition, zoh_transition_nilpotent3)
from wallbrace.srb import ContactSet, RobotParams, SrbState, build_continuous_dynamics


def series_expm(A, dt, terms=30):
    """Truncated Taylor series oracle for the matrix exponential."""
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ (A * dt) / k
        out = out + term
    return out


def series_psi(A, dt, terms=30):
    """Series oracle for the input integral: sum A^k dt^(k+1) / (k+1)!."""
    n = A.shape[0]
    out = np.eye(n) * dt
    term = np.eye(n) * dt
    for k in range(1, terms):
        term = term @ (A * dt) / (k + 1)
        out = out + term
    return out


def test_double_integrator_exact():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    d = zoh_discretize(A, B, 0.1)
    assert np.allclose(d.A_d, [[1.0, 0.1], [0.0, 1.0]], atol=1e-15)
    assert np.allclose(d.B_d, [[0.005], [0.1]], atol=1e-15)


def test_zero_dynamics():
    B = np.array([[2.0], [3.0]])
    d = zoh_discretize(np.zeros((2, 2)), B, 0.25)
    assert np.allclose(d.A_d, np.eye(2))
    assert np.allclose(d.B_d, 0.25 * B)


def test_pendulum_block_matches_series_oracle():
    lam2 = 9.81 / 0.7
    A = np.array([[0.0, 1.0], [lam2, 0.0]])
    B = np.array([[0.0], [1.0]])
    d = zoh_discretize(A, B, 0.33)
    assert np.max(np.abs(d.A_d - series_expm(A, 0.33))) < 1e-9
    assert np.max(np.abs(d.B_d - series_psi(A, 0.33) @ B)) < 1e-9


def test_semigroup_property():
    rng = np.random.default_rng(5)
    for _ in range(10):
        A = rng.normal(size=(4, 4))
        A = A - 1.5 * np.eye(4)  # stable-ish
        d1 = zoh_discretize(A, np.zeros((4, 1)), 0.05)
        d2 = zoh_discretize(A, np.zeros((4, 1)), 0.10)
        assert np.max(np.abs(d2.A_d - d1.A_d @ d1.A_d)) < 1e-9


def test_srb_matrix_exponential_truncates_exactly():
    params = RobotParams()
    st = SrbState.nominal(params)
    st.theta[2] = 0.4
    contacts = ContactSet.double_support([0, 0.07, 0], [0, -0.07, 0])
    A, B = build_continuous_dynamics(st, contacts, params)
    dt = 0.025
    d = zoh_discretize(A, B, dt)
    A2 = A @ A
    assert np.max(np.abs(A2 @ A)) == 0.0
    expected = np.eye(13) + A * dt + A2 * dt * dt / 2
    assert np.max(np.abs(d.A_d - expected)) < 1e-14


def test_nilpotent_fast_path_matches_generic():
    params = RobotParams()
    st = SrbState.nominal(params)
    st.theta[2] = -0.7
    contacts = ContactSet.single_support("right", [0.1, -0.07, 0])
    A, B = build_continuous_dynamics(st, contacts, params)
    A_d, Psi = zoh_transition(A, 0.025)
    A_f, Psi_f = zoh_transition_nilpotent3(A, 0.025)
    assert np.max(np.abs(A_d - A_f)) < 1e-13
    assert np.max(np.abs(Psi - Psi_f)) < 1e-13


def test_rejects_bad_dt():
    with pytest.raises(ValueError):
        zoh_discretize(np.zeros((2, 2)), np.zeros((2, 1)), 0.0)
    with pytest.raises(ValueError):
        zoh_discretize(np.zeros((2, 2)), np.zeros((2, 1)), -0.1)


def test_discrete_dynamics_validates():
    with pytest.raises(ValueError):
        DiscreteDynamics(np.full((2, 2), np.nan), np.zeros((2, 1)), 0.1)
