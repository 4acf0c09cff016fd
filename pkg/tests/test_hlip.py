import numpy as np
import pytest

from wallbrace.hlip import (HlipConfig, HlipState, SwingTarget,
                            alternating_p2_orbit, deadbeat_gain,
                            nominal_p1_orbit, s2s_matrices, ssp_flow,
                            step_feedback, swing_trajectory)

from oracles import ackermann_origin, rk4_flow

LAM = np.sqrt(9.81 / 0.7)


@pytest.fixture
def cfg():
    return HlipConfig(lam=LAM, t_ssp=0.33, z_swing_min=0.0, z_swing_max=0.06)


def test_ssp_flow_identity_at_zero_time(cfg):
    x = HlipState(0.04, -0.3)
    out = ssp_flow(x, 0.0, cfg.lam)
    assert out.p == x.p and out.v == x.v


def test_ssp_flow_equilibrium(cfg):
    out = ssp_flow(HlipState(0.0, 0.0), 0.5, cfg.lam)
    assert out.p == 0.0 and out.v == 0.0


def test_ssp_flow_matches_rk4_oracle(cfg):
    rng = np.random.default_rng(0)
    lam2 = cfg.lam ** 2
    for _ in range(5):
        x0 = rng.normal(size=2) * 0.3
        xf = rk4_flow(lambda x: np.array([x[1], lam2 * x[0]]), x0, 0.3, dt=1e-5)
        out = ssp_flow(HlipState(*x0), 0.3, cfg.lam)
        assert np.max(np.abs(out.as_vector() - xf)) < 1e-8


def test_s2s_zero_duration_limit():
    cfg = HlipConfig(lam=LAM, t_ssp=1e-9)
    A, B = s2s_matrices(cfg)
    assert np.allclose(A, np.eye(2), atol=1e-7)
    assert np.allclose(B, [-1.0, 0.0], atol=1e-7)


def test_s2s_input_column_structure(cfg):
    A, B = s2s_matrices(cfg)
    assert np.allclose(B, -A[:, 0])


def test_s2s_matches_series_oracle(cfg):
    A, B = s2s_matrices(cfg)
    A_ssp = np.array([[0.0, 1.0], [cfg.lam ** 2, 0.0]])
    expm = np.eye(2)
    term = np.eye(2)
    for k in range(1, 30):
        term = term @ (A_ssp * cfg.t_ssp) / k
        expm = expm + term
    assert np.max(np.abs(A - expm)) < 1e-9


def test_p1_orbit_standing(cfg):
    x_star, u_star = nominal_p1_orbit(0.0, cfg)
    assert u_star == 0.0
    assert np.allclose(x_star.as_vector(), 0.0)


def test_p1_orbit_fixed_point_identity(cfg):
    rng = np.random.default_rng(1)
    A, B = s2s_matrices(cfg)
    for v in rng.uniform(-0.8, 0.8, size=10):
        x_star, u_star = nominal_p1_orbit(v, cfg)
        nxt = A @ x_star.as_vector() + B * u_star
        assert np.max(np.abs(nxt - x_star.as_vector())) < 1e-12


def test_p1_orbit_step_length(cfg):
    x_star, u_star = nominal_p1_orbit(0.5, cfg)
    assert abs(u_star - 0.165) < 1e-12
    A, B = s2s_matrices(cfg)
    expected = np.linalg.solve(np.eye(2) - A, B * u_star)
    assert np.allclose(x_star.as_vector(), expected)


def test_p2_orbit_alternates(cfg):
    A, B = s2s_matrices(cfg)
    x1 = alternating_p2_orbit(0.14, cfg).as_vector()
    x2 = A @ x1 + B * 0.14
    x1_back = A @ x2 + B * (-0.14)
    assert np.max(np.abs(x2 + x1)) < 1e-12       # opposite-leg state mirrors
    assert np.max(np.abs(x1_back - x1)) < 1e-12  # period 2


def test_deadbeat_gain_nilpotent(cfg):
    A, B = s2s_matrices(cfg)
    K = deadbeat_gain(A, B)
    # additive law u = u* + K e gives closed loop A + B K
    ABK = A + np.outer(B, K)
    assert np.max(np.abs(ABK @ ABK)) < 1e-10
    assert np.max(np.abs(np.linalg.eigvals(ABK))) < 1e-7


def test_deadbeat_gain_matches_ackermann_oracle():
    cfg = HlipConfig(lam=np.sqrt(14.01), t_ssp=0.33)
    A, B = s2s_matrices(cfg)
    K = deadbeat_gain(A, B)
    assert np.max(np.abs(K - ackermann_origin(A, B))) < 1e-9
    # closed form for this family: [1, coth(lam T)/lam]
    lt = cfg.lam * cfg.t_ssp
    expected = np.array([1.0, np.cosh(lt) / np.sinh(lt) / cfg.lam])
    assert np.max(np.abs(K - expected)) < 1e-9


def test_deadbeat_rejects_uncontrollable():
    with pytest.raises(ValueError):
        deadbeat_gain(np.eye(2), np.zeros(2))


def test_step_feedback_zero_error(cfg):
    A, B = s2s_matrices(cfg)
    K = deadbeat_gain(A, B)
    x = HlipState(0.02, 0.4)
    assert step_feedback(x, x, 0.165, K) == 0.165


def test_step_feedback_deadbeat_in_two_steps(cfg):
    A, B = s2s_matrices(cfg)
    K = deadbeat_gain(A, B)
    rng = np.random.default_rng(2)
    x_star, u_star = nominal_p1_orbit(0.3, cfg)
    for _ in range(10):
        err = rng.uniform(-0.5, 0.5, size=2)
        x = HlipState(*(x_star.as_vector() + err))
        for _ in range(2):
            u = step_feedback(x, x_star, u_star, K)
            x = HlipState(*(A @ x.as_vector() + B * u))
        assert np.max(np.abs(x.as_vector() - x_star.as_vector())) < 1e-9


def test_step_feedback_extends_into_push(cfg):
    A, B = s2s_matrices(cfg)
    K = deadbeat_gain(A, B)
    x_star, u_star = nominal_p1_orbit(0.3, cfg)
    pushed = HlipState(x_star.p, x_star.v + 0.2)
    assert step_feedback(pushed, x_star, u_star, K) > u_star
    assert np.all(K > 0)


def test_orbit_consistency_flow_vs_s2s(cfg):
    # continuous flow over one support then the nominal step returns the
    # fixed point exactly
    x_star, u_star = nominal_p1_orbit(0.4, cfg)
    end = ssp_flow(x_star, cfg.t_ssp, cfg.lam)
    post = HlipState(end.p - u_star, end.v)
    assert np.max(np.abs(ssp_flow(post, cfg.t_ssp, cfg.lam).as_vector()
                         - x_star.as_vector())) < 1e-9


def test_swing_trajectory_endpoints(cfg):
    target = SwingTarget(u_x=0.2, u_y=0.05, touchdown_time=0.33,
                         start_xy=[-0.1, 0.02])
    p0 = swing_trajectory(0.0, target, cfg)
    assert np.allclose(p0[:2], [-0.1, 0.02])
    assert abs(p0[2] - cfg.z_swing_min) < 1e-12
    p1 = swing_trajectory(cfg.t_ssp, target, cfg)
    assert np.allclose(p1[:2], [0.2, 0.05])
    assert abs(p1[2] - cfg.z_swing_min) < 1e-12


def test_swing_trajectory_apex(cfg):
    target = SwingTarget(0.2, 0.0, 0.33, [0.0, 0.0])
    zs = [swing_trajectory(t, target, cfg)[2]
          for t in np.linspace(0, cfg.t_ssp, 2001)]
    assert abs(max(zs) - cfg.z_swing_max) < 1e-3


def test_swing_trajectory_continuous_in_time(cfg):
    target = SwingTarget(0.2, -0.1, 0.33, [0.0, 0.05])
    ts = np.linspace(0, cfg.t_ssp, 500)
    pts = np.array([swing_trajectory(t, target, cfg) for t in ts])
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert steps.max() < 0.01


def test_swing_trajectory_continuous_across_replanning(cfg):
    # replanning replaces the start point with the current position, so the
    # evaluated point moves smoothly even when the target jumps
    t = 0.5 * cfg.t_ssp
    tgt1 = SwingTarget(0.20, 0.0, 0.33, [0.0, 0.0])
    now = swing_trajectory(t, tgt1, cfg)
    tgt2 = SwingTarget(0.26, 0.02, 0.33, now[:2])
    moved = swing_trajectory(t, tgt2, cfg)
    assert np.linalg.norm(moved[:2] - now[:2]) < 0.04


def test_faster_stepping_shrinks_nominal_step(cfg):
    fast = cfg.with_frequency(5.0)
    slow = cfg.with_frequency(3.0)
    _, u_fast = nominal_p1_orbit(0.5, fast)
    _, u_slow = nominal_p1_orbit(0.5, slow)
    assert abs(u_fast / u_slow - (3.0 / 5.0)) < 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        HlipConfig(lam=-1.0)
    with pytest.raises(ValueError):
        HlipConfig(lam=LAM, z_swing_min=0.1, z_swing_max=0.05)
    with pytest.raises(ValueError):
        ssp_flow(HlipState(0, 0), -0.1, LAM)
