import dataclasses

import numpy as np
import pytest

from chargeopt import (NoRootError, Simulator, SimulationBlowupError,
                       default_params)

R_GAS = 8.314462618
FARADAY = 96485.33212


def perturbed_state(sim, rng, ocv=3.7, T_jel=303.0, T_can=300.0, scale=0.06):
    """A physically admissible but non-uniform state for oracle checks."""
    st = sim.init_equilibrium(ocv, T_jel)
    p = sim.params
    st.c_s_neg *= 1.0 + scale * np.linspace(-1.0, 1.0, p.N_r) * rng.uniform(0.5, 1.0)
    st.c_s_pos *= 1.0 + scale * np.linspace(1.0, -1.0, p.N_r) * rng.uniform(0.5, 1.0)
    st.c_e *= 1.0 + 0.3 * np.sin(np.linspace(0.0, 3.0, 3 * p.N_x)) * rng.uniform(0.5, 1.0)
    st.T_can = T_can
    st.delta_film = p.delta_film0 * rng.uniform(1.0, 3.0)
    return st


# ---------------------------------------------------------------------------
# straight-line duplicates used as oracles

def oracle_surface_conc(c, R_s, grad):
    dr = R_s / c.shape[0]
    return c[-1] + 0.5 * dr * grad


def oracle_interface_conc(cL, cR, dxL, dxR, epsL, epsR, dL, dR):
    rL = 0.5 * dxL / (epsL * dL)
    rR = 0.5 * dxR / (epsR * dR)
    return cL + (cR - cL) / (rL + rR) * rL


def oracle_arr(x, e, T, Tref):
    return x * np.exp(e / R_GAS * (1.0 / Tref - 1.0 / T))


def oracle_voltage(sim, st, I):
    """Independent term-by-term evaluation of the output-voltage expression."""
    p, f = sim.params, sim.funcs
    T = st.T_jel
    nx = p.N_x
    ds_n = oracle_arr(p.D_s_neg, p.E_act["D_s_neg"], T, p.T_ref)
    ds_p = oracle_arr(p.D_s_pos, p.E_act["D_s_pos"], T, p.T_ref)
    css_n = oracle_surface_conc(st.c_s_neg, p.R_s_neg, I / (ds_n * p.F * p.a_neg * p.L_neg))
    css_p = oracle_surface_conc(st.c_s_pos, p.R_s_pos, -I / (ds_p * p.F * p.a_pos * p.L_pos))
    ce_n, ce_s, ce_p = (st.c_e[:nx].mean(), st.c_e[nx:2 * nx].mean(),
                        st.c_e[2 * nx:].mean())
    k_n = oracle_arr(p.k_neg, p.E_act["k_neg"], T, p.T_ref)
    k_p = oracle_arr(p.k_pos, p.E_act["k_pos"], T, p.T_ref)
    i0_n = k_n * css_n ** p.alpha_c * (ce_n * (p.c_s_max_neg - css_n)) ** p.alpha_a
    i0_p = k_p * css_p ** p.alpha_c * (ce_p * (p.c_s_max_pos - css_p)) ** p.alpha_a

    kt = R_GAS * T / (p.alpha * p.F)
    eta_p = kt * np.arcsinh(I / (2.0 * p.a_pos * p.L_pos * i0_p))
    eta_n = kt * np.arcsinh(-I / (2.0 * p.a_neg * p.L_neg * i0_n))
    u_p = float(f.u_pos(css_p / p.c_s_max_pos))
    u_n = float(f.u_neg(css_n / p.c_s_max_neg))
    r_film = (p.R_f_pos / (p.a_pos * p.L_pos) + p.R_f_neg / (p.a_neg * p.L_neg)) * I

    kap_n = oracle_arr(float(f.kappa(ce_n)) * p.eps_e_neg ** p.brugg,
                       p.E_act["kappa_eff_neg"], T, p.T_ref)
    kap_s = float(f.kappa(ce_s)) * p.eps_e_sep ** p.brugg
    kap_p = oracle_arr(float(f.kappa(ce_p)) * p.eps_e_pos ** p.brugg,
                       p.E_act["kappa_eff_pos"], T, p.T_ref)
    r_elyte = (p.L_pos / (2 * kap_p) + p.L_sep / kap_s + p.L_neg / (2 * kap_n)) * I

    dx_n, dx_s, dx_p = p.L_neg / nx, p.L_sep / nx, p.L_pos / nx
    cg1 = oracle_interface_conc(st.c_e[nx - 1], st.c_e[nx], dx_n, dx_s,
                                p.eps_e_neg, p.eps_e_sep,
                                float(f.d_e(st.c_e[nx - 1])), float(f.d_e(st.c_e[nx])))
    cg2 = oracle_interface_conc(st.c_e[2 * nx - 1], st.c_e[2 * nx], dx_s, dx_p,
                                p.eps_e_sep, p.eps_e_pos,
                                float(f.d_e(st.c_e[2 * nx - 1])), float(f.d_e(st.c_e[2 * nx])))
    nu = lambda c: 2.0 * R_GAS * T / p.F * (1.0 - p.t_c0) * float(f.activity(c))
    conc = (nu(ce_p) * (np.log(st.c_e[-1]) - np.log(cg2))
            + nu(ce_s) * (np.log(cg2) - np.log(cg1))
            + nu(ce_n) * (np.log(cg1) - np.log(st.c_e[0])))
    return eta_p - eta_n + u_p - u_n + r_film - r_elyte + conc, eta_n, css_n, ce_n


def oracle_sei_flux(sim, st, I):
    p, f = sim.params, sim.funcs
    T = st.T_jel
    _, eta_int, css_n, _ = oracle_voltage(sim, st, I)
    u_n = float(f.u_neg(css_n / p.c_s_max_neg))
    eta_sei = eta_int + u_n - p.U_SEI
    k_sei = oracle_arr(p.k_SEI, p.E_act["k_SEI"], T, p.T_ref)
    d_ec = oracle_arr(p.D_EC, p.E_act["D_EC"], T, p.T_ref)
    kin = k_sei * np.exp(-p.alpha_c_SEI * p.F * eta_sei / (R_GAS * T))
    return -p.c_EC0 / (st.delta_film / d_ec + 1.0 / kin)


def oracle_lp_flux(sim, st, I):
    p = sim.params
    T = st.T_jel
    _, eta_int, css_n, ce_n = oracle_voltage(sim, st, I)
    u_n = float(sim.funcs.u_neg(css_n / p.c_s_max_neg))
    eta_lp = eta_int + u_n
    k_lp = oracle_arr(p.k_LP, p.E_act["k_LP"], T, p.T_ref)
    z = p.F * eta_lp / (R_GAS * T)
    bv = np.exp(p.alpha_a_LP * z) - np.exp(-p.alpha_c_LP * z)
    return min(0.0, k_lp * (ce_n / p.c_e_ref) ** p.alpha_a_LP * bv)


# ---------------------------------------------------------------------------

class TestInitEquilibrium:
    def test_open_circuit_voltage_matches_target(self, cell):
        st = cell.init_equilibrium(3.3, 298.15)
        assert cell.voltage(st, 0.0) == pytest.approx(3.3, abs=1e-3)

    def test_top_of_window_is_full(self, cell):
        st = cell.init_equilibrium(cell.params.ocv_soc100, 298.15)
        assert cell.soc(st) == pytest.approx(1.0, abs=1e-3)

    def test_out_of_range_ocv_raises(self, cell):
        with pytest.raises(NoRootError):
            cell.init_equilibrium(5.0, 298.15)

    def test_open_circuit_sei_flux_matches_direct_evaluation(self, cell):
        st = cell.init_equilibrium(3.7, 298.15)
        assert cell.sei_flux(st, 0.0) == pytest.approx(oracle_sei_flux(cell, st, 0.0),
                                                       rel=1e-12)


class TestVoltage:
    def test_zero_current_uniform_state_is_ocp_difference(self, cell):
        st = cell.init_equilibrium(3.6, 298.15)
        p, f = cell.params, cell.funcs
        expected = float(f.u_pos(st.c_s_pos[0] / p.c_s_max_pos)
                         - f.u_neg(st.c_s_neg[0] / p.c_s_max_neg))
        assert cell.voltage(st, 0.0) == pytest.approx(expected, abs=1e-12)

    def test_sign_monotonicity_in_current(self, cell):
        st = cell.init_equilibrium(3.7, 298.15)
        i_small = 0.1 * cell.i_1c
        assert cell.voltage(st, i_small) > cell.voltage(st, 0.0) > cell.voltage(st, -i_small)

    def test_matches_term_by_term_oracle(self, cell, rng):
        for k in range(8):
            st = perturbed_state(cell, rng, ocv=float(rng.uniform(3.2, 4.1)))
            I = float(rng.uniform(-3.0, 3.0)) * cell.i_1c
            v_oracle, _, _, _ = oracle_voltage(cell, st, I)
            assert cell.voltage(st, I) == pytest.approx(v_oracle, rel=1e-12)


class TestSideFluxes:
    def test_sei_flux_never_positive(self, cell, rng):
        for _ in range(6):
            st = perturbed_state(cell, rng, ocv=float(rng.uniform(3.1, 4.1)))
            I = float(rng.uniform(-2.0, 4.0)) * cell.i_1c
            assert cell.sei_flux(st, I) <= 0.0

    def test_thick_film_kills_flux(self, cell):
        st = cell.init_equilibrium(3.9, 298.15)
        st.delta_film = 1.0  # absurdly thick: diffusion-limited branch dominates
        assert abs(cell.sei_flux(st, 0.0)) < 1e-14

    def test_charging_accelerates_sei_relative_to_rest(self, cell):
        st = cell.init_equilibrium(3.9, 298.15)
        at_rest = cell.sei_flux(st, 0.0)
        charging = cell.sei_flux(st, 2.0 * cell.i_1c)
        assert abs(charging) > abs(at_rest)
        assert charging == pytest.approx(oracle_sei_flux(cell, st, 2.0 * cell.i_1c),
                                         rel=1e-12)
        assert at_rest == pytest.approx(oracle_sei_flux(cell, st, 0.0), rel=1e-12)

    def test_plating_zero_at_rest_mid_soc(self, cell):
        st = cell.init_equilibrium(3.7, 298.15)
        assert cell.lp_flux(st, 0.0) == 0.0

    def test_plating_zero_at_exact_zero_overpotential(self, cell):
        from scipy.optimize import brentq
        st = cell.init_equilibrium(4.1, 285.0)
        p, f = cell.params, cell.funcs

        def eta_lp(I):
            _, eta_int, css_n, _ = oracle_voltage(cell, st, I)
            return eta_int + float(f.u_neg(css_n / p.c_s_max_neg))

        i_star = brentq(eta_lp, 0.0, 8.0 * cell.i_1c, xtol=1e-12)
        assert cell.lp_flux(st, i_star) == pytest.approx(0.0, abs=1e-15)

    def test_hard_cold_charge_at_high_soc_plates(self, cell):
        st = cell.init_equilibrium(4.1, 285.0)
        I = 5.0 * cell.i_1c
        j = cell.lp_flux(st, I)
        assert j < 0.0
        assert j == pytest.approx(oracle_lp_flux(cell, st, I), rel=1e-12)


class TestStep:
    def test_rest_is_inert(self, cell_no_aging):
        sim = cell_no_aging
        st = sim.init_equilibrium(3.5, 298.15)
        v0, soc0 = sim.voltage(st, 0.0), sim.soc(st)
        st2, out = sim.step(st, 0.0, 5.0)
        assert out.soc == pytest.approx(soc0, abs=1e-9)
        assert out.V == pytest.approx(v0, abs=1e-6)

    def test_rest_relaxes_temperature_toward_ambient(self, cell_no_aging):
        sim = cell_no_aging
        st = sim.init_equilibrium(3.5, 310.0)
        gap0 = st.T_jel - sim.params.T_amb
        for _ in range(40):
            st, _ = sim.step(st, 0.0, 5.0)
        assert 0.0 < st.T_jel - sim.params.T_amb < gap0

    def test_one_hour_at_1c_fills_the_window(self, cell_no_aging):
        sim = cell_no_aging
        st = sim.init_equilibrium(sim.params.ocv_soc0, 298.15)
        assert sim.soc(st) == pytest.approx(0.0, abs=1e-4)
        for _ in range(720):
            st, out = sim.step(st, sim.i_1c, 5.0)
        assert out.soc == pytest.approx(1.0, abs=1e-3)

    def test_coulomb_counting_on_cc_segment(self, cell_no_aging):
        sim = cell_no_aging
        st = sim.init_equilibrium(3.3, 298.15)
        soc0 = sim.soc(st)
        I = 1.8 * sim.i_1c
        t = 600.0
        for _ in range(int(t / 5.0)):
            st, out = sim.step(st, I, 5.0)
        assert out.soc - soc0 == pytest.approx(I * t / (3600.0 * sim.i_1c), abs=1e-3)

    def test_step_halving_converges_first_order(self, cell):
        st = cell.init_equilibrium(3.5, 298.15)
        I = 2.0 * cell.i_1c
        base = cell.stable_substeps(st, 5.0)
        results = {}
        for mult in (1, 2, 4):
            s, _ = cell.step(st, I, 5.0, n_sub=base * mult)
            results[mult] = s
        err_coarse = np.abs(results[1].c_s_neg - results[4].c_s_neg).max()
        err_fine = np.abs(results[2].c_s_neg - results[4].c_s_neg).max()
        assert err_fine < err_coarse
        # halving the substep should roughly halve the defect (order 1)
        assert err_coarse / err_fine == pytest.approx(3.0, abs=1.2)

    def test_blowup_raises_instead_of_clamping(self, cell):
        st = cell.init_equilibrium(4.15, 298.15)
        with pytest.raises(SimulationBlowupError):
            for _ in range(400):
                st, _ = cell.step(st, 40.0 * cell.i_1c, 5.0)

    def test_aging_tallies_monotone_nonincreasing(self, cell):
        st = cell.init_equilibrium(3.8, 298.15)
        prev_sei, prev_lp = st.q_SEI, st.q_LP
        for _ in range(30):
            st, _ = cell.step(st, 2.5 * cell.i_1c, 5.0)
            assert st.q_SEI <= prev_sei
            assert st.q_LP <= prev_lp
            prev_sei, prev_lp = st.q_SEI, st.q_LP
        assert st.delta_film >= cell.params.delta_film0

    def test_input_state_not_mutated(self, cell):
        st = cell.init_equilibrium(3.5, 298.15)
        before = st.c_s_neg.copy()
        cell.step(st, cell.i_1c, 5.0)
        np.testing.assert_array_equal(st.c_s_neg, before)


class TestConservation:
    def test_solid_lithium_matches_coulomb_count(self, cell_no_aging):
        sim = cell_no_aging
        st = sim.init_equilibrium(3.3, 298.15)
        n0_neg, n0_pos = sim.solid_lithium(st)
        I = sim.i_1c
        t = 1800.0
        for _ in range(int(t / 5.0)):
            st, _ = sim.step(st, I, 5.0)
        n1_neg, n1_pos = sim.solid_lithium(st)
        moved = I * t / sim.params.F
        assert n1_neg - n0_neg == pytest.approx(moved, rel=1e-5)
        assert n0_pos - n1_pos == pytest.approx(moved, rel=1e-5)

    def test_electrolyte_lithium_constant(self, cell_no_aging):
        sim = cell_no_aging
        st = sim.init_equilibrium(3.3, 298.15)
        n0 = sim.electrolyte_lithium(st)
        for _ in range(160):  # 800 s at a bruising rate
            st, _ = sim.step(st, 3.0 * sim.i_1c, 5.0)
        assert abs(sim.electrolyte_lithium(st) - n0) / n0 < 0.5e-6

    def test_anode_and_cathode_soc_definitions_agree(self, cell_no_aging):
        sim = cell_no_aging
        st = sim.init_equilibrium(3.3, 298.15)
        for _ in range(120):
            st, _ = sim.step(st, 2.0 * sim.i_1c, 5.0)
            assert sim.soc(st) == pytest.approx(sim.soc_cathode(st), abs=1e-3)

    def test_thermal_equilibrium_at_rest(self, cell_no_aging):
        sim = cell_no_aging
        st = sim.init_equilibrium(3.6, 318.0)
        for _ in range(800):  # 4000 s of rest
            st, _ = sim.step(st, 0.0, 5.0)
        assert abs(st.T_jel - sim.params.T_amb) < 1e-3
        assert abs(st.T_can - sim.params.T_amb) < 1e-3


class TestGridConvergence:
    def test_grid_refinement_shrinks_terminal_voltage_error(self):
        vs = {}
        for n in (4, 8, 16):
            params, funcs = default_params(n_r=n, n_x=n, aging=False)
            sim = Simulator(params, funcs)
            st = sim.init_equilibrium(3.3, 298.15)
            for _ in range(120):
                st, out = sim.step(st, 2.0 * sim.i_1c, 5.0)
            vs[n] = out.V
        assert abs(vs[8] - vs[16]) < abs(vs[4] - vs[8])
