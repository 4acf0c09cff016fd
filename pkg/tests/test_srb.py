import json

import numpy as np
import pytest

from wallbrace.srb import (ContactSet, InputWrench, RobotParams, SrbState,
                           build_continuous_dynamics, rotation_z,
                           rotation_z_inverse, selection_matrices, skew)


def test_rotation_z_inverse_identity():
    assert np.allclose(rotation_z_inverse(0.0), np.eye(3))


def test_rotation_z_inverse_quarter_turn():
    expected = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 1.0]])
    assert np.allclose(rotation_z_inverse(np.pi / 2), expected, atol=1e-15)


def test_rotation_z_inverse_orthonormal():
    R = rotation_z_inverse(0.3)
    assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-12
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


def test_rotation_inverse_times_forward_is_identity():
    rng = np.random.default_rng(1)
    for th in rng.uniform(-np.pi, np.pi, size=100):
        assert np.max(np.abs(rotation_z_inverse(th) @ rotation_z(th) - np.eye(3))) < 1e-12


def test_selection_matrices_hand_off():
    T_h, L_h, T_f, L_f = selection_matrices(ContactSet(hand_in_contact=False))
    assert np.all(T_h == 0) and np.all(L_h == 0)


def test_selection_matrices_hand_on():
    T_h, L_h, T_f, L_f = selection_matrices(ContactSet(hand_in_contact=True))
    assert np.allclose(T_h, np.diag([1, 1, 0]))
    assert np.allclose(L_h, np.diag([1, 0, 0]))


def test_selection_matrices_feet_unconditional():
    for flag in (True, False):
        _, _, T_f, L_f = selection_matrices(ContactSet(hand_in_contact=flag))
        assert np.allclose(T_f, np.eye(3))
        assert np.allclose(L_f, np.diag([0, 1, 1]))


@pytest.fixture
def params():
    return RobotParams()


def nominal_state(params, theta_z=0.0):
    st = SrbState.nominal(params)
    st.theta[2] = theta_z
    return st


def test_dynamics_theta_block_identity_at_zero_yaw(params):
    contacts = ContactSet.double_support([0, 0.1, 0], [0, -0.1, 0])
    A, _ = build_continuous_dynamics(nominal_state(params), contacts, params)
    assert np.allclose(A[0:3, 6:9], np.eye(3))


def test_dynamics_foot_force_feeds_accel_through_mass(params):
    contacts = ContactSet.double_support([0, 0.1, 0], [0, -0.1, 0])
    _, B = build_continuous_dynamics(nominal_state(params), contacts, params)
    assert np.allclose(B[9:12, 3:6], np.eye(3) / params.mass)
    assert np.allclose(B[9:12, 6:9], np.eye(3) / params.mass)


def test_dynamics_no_contacts_is_free_fall(params):
    contacts = ContactSet(False, False, False)
    A, B = build_continuous_dynamics(nominal_state(params), contacts, params)
    assert np.all(B == 0)
    st = nominal_state(params)
    st.omega[:] = [0.1, -0.2, 0.3]
    st.v_c[:] = [1.0, 2.0, 3.0]
    xdot = A @ st.as_vector()
    assert np.allclose(xdot[0:3], rotation_z_inverse(0.0) @ st.omega)
    assert np.allclose(xdot[3:6], st.v_c)
    assert np.allclose(xdot[6:9], 0.0)
    assert np.allclose(xdot[9:12], -params.gravity)


def test_dynamics_inactive_contact_columns_zero(params):
    contacts = ContactSet.single_support("left", [0.0, 0.07, 0.0])
    _, B = build_continuous_dynamics(nominal_state(params), contacts, params)
    assert np.all(B[:, 6:9] == 0)     # right foot force
    assert np.all(B[:, 15:18] == 0)   # right foot moment
    assert np.all(B[:, 0:3] == 0)     # hand force
    assert np.all(B[:, 9:12] == 0)    # hand moment


def test_dynamics_moment_rows_match_cross_product(params):
    rng = np.random.default_rng(7)
    for _ in range(20):
        p_foot = rng.normal(size=3)
        st = nominal_state(params)
        st.p_c[:] = rng.normal(size=3) + [0, 0, 1.0]
        contacts = ContactSet.single_support("left", p_foot)
        _, B = build_continuous_dynamics(st, contacts, params)
        F = rng.normal(size=3) * 50
        # torque of a force at the site about the CoM
        expected = params.inertia_inv @ np.cross(p_foot - st.p_c, F)
        assert np.max(np.abs(B[6:9, 3:6] @ F - expected)) < 1e-12


def test_dynamics_hand_moment_selection(params):
    st = nominal_state(params)
    contacts = ContactSet(True, True, True, p_hand=np.array([0, 0.5, 0.8]),
                          p_left=np.array([0, 0.07, 0]), p_right=np.array([0, -0.07, 0]))
    _, B = build_continuous_dynamics(st, contacts, params)
    # hand transmits roll moment only, feet pitch/yaw only
    assert np.allclose(B[6:9, 9:12], params.inertia_inv @ np.diag([1.0, 0, 0]))
    assert np.allclose(B[6:9, 12:15], params.inertia_inv @ np.diag([0.0, 1, 1]))


def test_dynamics_hand_force_vertical_mask(params):
    st = nominal_state(params)
    contacts = ContactSet(True, False, False, p_hand=np.array([0, 0.5, 0.8]))
    _, B = build_continuous_dynamics(st, contacts, params)
    # vertical hand force never reaches the CoM acceleration rows
    assert np.all(B[9:12, 2] == 0)


def test_skew_matches_cross():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=3), rng.normal(size=3)
    assert np.allclose(skew(a) @ b, np.cross(a, b))


def test_state_vector_round_trip(params):
    st = SrbState.nominal(params)
    st.theta[:] = [0.01, -0.02, 0.5]
    x = st.as_vector()
    st2 = SrbState.from_vector(x)
    assert np.allclose(st2.as_vector(), x)
    st.validate(params)


def test_state_gravity_slot_checked(params):
    st = SrbState.nominal(params)
    st.g_slot = -5.0
    with pytest.raises(ValueError):
        st.validate(params)


def test_input_wrench_layout():
    w = InputWrench.from_site_wrenches(F_left=[1, 2, 3], M_right=[4, 5, 6])
    assert np.allclose(w.force("left"), [1, 2, 3])
    assert np.allclose(w.moment("right"), [4, 5, 6])
    assert np.allclose(w.force("hand"), 0)


def test_params_json_round_trip(tmp_path):
    path = tmp_path / "robot.json"
    path.write_text(json.dumps({
        "mass": 18.5, "inertia": [1.0, 1.1, 0.4], "mu": 0.6, "z0": 0.65,
        "arm_reach": 0.55, "f_foot_max": 450, "f_hand_min": 5, "f_hand_max": 120,
    }))
    p = RobotParams.from_json(path)
    assert p.mass == 18.5
    assert np.allclose(p.inertia, np.diag([1.0, 1.1, 0.4]))
    assert p.mu == 0.6 and p.z0 == 0.65
    assert p.f_hand_min == 5 and p.f_hand_max == 120


def test_params_validation():
    with pytest.raises(ValueError):
        RobotParams(mass=-1)
    with pytest.raises(ValueError):
        RobotParams(inertia=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        RobotParams(f_hand_min=10, f_hand_max=5)
