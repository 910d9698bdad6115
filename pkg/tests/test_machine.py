import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from liqss.machine import (
    OMEGA_R,
    PSI_DR,
    PSI_F,
    STATE_NAMES,
    THETA,
    CurrentSolution,
    FluxState,
    GridSpec,
    MachineParams,
    MachineSystem,
    MechState,
    TorqueProfile,
    angle_derivative,
    build_atoms,
    bus_voltage_dq,
    currents,
    d_axis_matrix,
    flux_derivatives,
    init_steady_state,
    power_output,
    q_axis_matrix,
    solve_d_currents,
    solve_q_currents,
    speed_derivative,
    torque_at,
)

P = MachineParams()
V_M = 20000 * math.sqrt(2) / math.sqrt(3)
NO_CURRENT = CurrentSolution(0.0, 0.0, 0.0, 0.0, 0.0)


def test_params_reject_nonphysical_values():
    with pytest.raises(ValueError):
        MachineParams(R_s=0.0)
    with pytest.raises(ValueError):
        MachineParams(J=-1.0)
    with pytest.raises(ValueError):
        MachineParams(n=1.5)
    with pytest.raises(ValueError):
        MachineParams.from_dict({"R_x": 1.0})


def test_axis_matrices_are_spd():
    for M in (d_axis_matrix(P), q_axis_matrix(P)):
        np.testing.assert_array_equal(M, M.T)
        assert np.all(np.linalg.eigvalsh(M) > 0)


def test_d_currents_zero_flux():
    assert solve_d_currents(0.0, 0.0, 0.0, P) == (0.0, 0.0, 0.0)


def test_d_currents_decoupled():
    p = P.replace(L_md=0.0, L_L=1.0, L_F=1.0, L_D=1.0)
    assert solve_d_currents(2.0, 3.0, 4.0, p) == pytest.approx((2.0, 3.0, 4.0))


def test_d_currents_match_dense_solve():
    expect = np.linalg.solve(d_axis_matrix(P), [1.0, 1.0, 1.0])
    np.testing.assert_allclose(solve_d_currents(1.0, 1.0, 1.0, P), expect, rtol=1e-10)


def test_q_currents_zero_flux():
    assert solve_q_currents(0.0, 0.0, P) == (0.0, 0.0)


def test_q_currents_decoupled():
    p = P.replace(L_mq=0.0, L_L=0.5, L_Q=0.5)
    assert solve_q_currents(1.0, 2.0, p) == pytest.approx((2.0, 4.0))


def test_q_currents_match_dense_solve():
    expect = np.linalg.solve(q_axis_matrix(P), [0.3, -0.1])
    np.testing.assert_allclose(solve_q_currents(0.3, -0.1, P), expect, rtol=1e-10)


@given(st.lists(st.floats(-100, 100), min_size=5, max_size=5))
def test_constraint_residual(psi):
    c = currents(FluxState(*psi), P)
    rd = d_axis_matrix(P) @ [c.i_dr, c.i_F, c.i_D] - [psi[0], psi[2], psi[3]]
    rq = q_axis_matrix(P) @ [c.i_qr, c.i_Q] - [psi[1], psi[4]]
    scale = max(1.0, max(abs(v) for v in psi))
    assert np.abs(np.concatenate([rd, rq])).max() <= 1e-9 * scale


def test_flux_derivatives_term_by_term():
    flux = FluxState(1.0, 0.0, 0.5, 0.2, 0.0)
    mech = MechState(P.omega_b, 0.0)
    d = flux_derivatives(flux, mech, 0.0, 0.0, NO_CURRENT, P)
    assert d[0] == 0.0
    d = flux_derivatives(flux, mech, 0.0, 0.0, NO_CURRENT, P.replace(e_fd=10.0))
    assert d[2] == 10.0


def test_speed_derivative_signs():
    flux = FluxState(1.0, 0.0, 0.0, 0.0, 0.0)
    assert speed_derivative(flux, NO_CURRENT, 0.0, P) == 0.0
    assert speed_derivative(flux, NO_CURRENT, 1e5, P) > 0.0


def test_speed_derivative_torque_balance():
    p = P.replace(n=1, J=1000.0)
    flux = FluxState(50.0, 0.0, 0.0, 0.0, 0.0)
    cur = CurrentSolution(0.0, 100.0, 0.0, 0.0, 0.0)
    assert speed_derivative(flux, cur, 5000.0, p) == 0.0


def test_angle_derivative():
    assert angle_derivative(P.omega_b, P.omega_b) == 0.0
    assert angle_derivative(100 * math.pi + 0.1, 100 * math.pi) == pytest.approx(0.1)


def test_bus_voltage():
    g = GridSpec()
    assert g.v_peak == pytest.approx(16329.93, abs=0.01)
    v_d, v_q = bus_voltage_dq(0.0, g)
    assert (v_d, v_q) == (-0.0, pytest.approx(V_M))
    v_d, v_q = bus_voltage_dq(math.pi / 2, g)
    assert v_d == pytest.approx(-V_M)
    assert v_q == pytest.approx(0.0, abs=1e-9)


@given(st.floats(-10, 10))
def test_bus_voltage_magnitude_constant(theta):
    v_d, v_q = bus_voltage_dq(theta, GridSpec())
    assert math.hypot(v_d, v_q) == pytest.approx(V_M, rel=1e-12)


@pytest.mark.parametrize("t,frac", [(0.0, 0.0), (10.0, 0.0), (17.5, 0.125), (20.0, 0.25), (25.0, 0.25)])
def test_torque_ramp(t, frac):
    assert torque_at(t, TorqueProfile(), P) == pytest.approx(frac * P.T_rated)


def test_torque_profile_validation():
    with pytest.raises(ValueError):
        TorqueProfile(t_start=20, t_end=15)
    with pytest.raises(ValueError):
        TorqueProfile(fraction=-0.1)


def test_steady_state_is_an_equilibrium():
    grid = GridSpec()
    flux, mech, e_fd = init_steady_state(P, grid)
    p = P.replace(e_fd=e_fd)
    cur = currents(flux, p)
    assert (cur.i_dr, cur.i_qr, cur.i_D, cur.i_Q) == pytest.approx((0, 0, 0, 0), abs=1e-9)
    assert mech.omega_r == pytest.approx(100 * math.pi)
    v_d, v_q = bus_voltage_dq(mech.theta, grid)
    dpsi = flux_derivatives(flux, mech, v_d, v_q, cur, p)
    # relative to the size of the individual terms (v_q ~ 1.6e4 V)
    assert np.abs(dpsi).max() <= 1e-9 * V_M
    assert speed_derivative(flux, cur, 0.0, p) == pytest.approx(0.0, abs=1e-12)
    assert angle_derivative(mech.omega_r, p.omega_b) == 0.0


def test_system_rhs_is_zero_at_start():
    sys_ = MachineSystem.create()
    assert np.abs(sys_.rhs(sys_.x0, 0.0)).max() <= 1e-9 * V_M


def test_power_output():
    assert power_output(0.0, V_M, 0.0, 0.0) == (0.0, 0.0)
    p, q = power_output(0.0, V_M, 0.0, 10.0)
    assert p == pytest.approx(1.5 * V_M * 10.0)
    assert q == 0.0


def test_atoms_and_graph():
    model, x0, dq = build_atoms()
    assert model.names == STATE_NAMES
    deps = model.graph.dependents
    assert OMEGA_R in deps[PSI_DR]
    assert THETA in deps[OMEGA_R]
    assert THETA not in deps[PSI_F]
    assert PSI_DR in deps[THETA]
    np.testing.assert_allclose(dq[:5], 1e-4)
    assert dq[OMEGA_R] == pytest.approx(1e-5)
    np.testing.assert_allclose(x0, MachineSystem.create().x0)


def test_graph_matches_jacobian_sparsity():
    # j depends on i iff df_j/dx_i is structurally non-zero somewhere
    model, _, _ = build_atoms()
    sys_ = MachineSystem.create()
    x = sys_.x0 + np.array([0.3, -0.2, 0.1, 0.05, 0.1, 0.5, 0.2])
    jac = np.abs(sys_.jacobian(x, 30.0)) > 1e-9
    for i in range(7):
        reads_i = {j for j in range(7) if j != i and jac[j, i]}
        assert reads_i == set(model.graph.dependents[i]), STATE_NAMES[i]


def test_atom_quanta_overrides():
    _, _, dq = build_atoms(flux_dq=1e-3, overrides={"omega_r": 1e-7})
    assert dq[OMEGA_R] == 1e-7
    assert dq[PSI_DR] == 1e-3
    with pytest.raises(ValueError):
        build_atoms(overrides={"speed": 1.0})


def test_final_power_near_calibration_target(scenario, reference):
    p, q = scenario.system().power(reference.values[-1])
    assert p > 0
    assert abs(p - 83e6) <= 0.2 * 83e6
