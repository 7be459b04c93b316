"""Reduced-order electrochemical cell simulator with surface-film aging.

Spatial scheme: conservative second-order finite volumes — one radial grid
per electrode particle, one axial electrolyte grid per region with
flux-matched interfaces. Time scheme: explicit first-order substepping
inside each control interval, with the substep capped by the diffusion
stability bound. Side-reaction molar fluxes are accumulated with the same
quadrature, so every control step also reports their interval integrals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import SimulationBlowupError, VoltageDomainError
from .interp import pchip_eval
from .params import (BatteryParams, FunctionTable, arrhenius_correct,
                     i_1crate, stoich_from_ocv)

# packed parameter-vector slots for the compiled kernels
(P_F, P_RGAS, P_ALPHA, P_ALPHA_A, P_ALPHA_C,
 P_A_NEG, P_A_POS, P_L_NEG, P_L_SEP, P_L_POS,
 P_EPS_E_NEG, P_EPS_E_SEP, P_EPS_E_POS,
 P_RS_NEG, P_RS_POS, P_DS_NEG, P_DS_POS,
 P_CSMAX_NEG, P_CSMAX_POS,
 P_TC0, P_BRUGG,
 P_K_NEG, P_K_POS, P_RF_NEG, P_RF_POS,
 P_RHO_JEL, P_CP_JEL, P_RHO_CAN, P_CP_CAN, P_H_JC, P_H_CA, P_T_AMB,
 P_C_EC0, P_D_EC, P_K_SEI, P_K_LP, P_AC_SEI, P_AA_LP, P_AC_LP,
 P_U_SEI, P_CE_REF, P_M_SEI, P_RHO_SEI, P_M_LI, P_RHO_LI,
 P_T_REF,
 P_E_DS_NEG, P_E_DS_POS, P_E_KAP_NEG, P_E_KAP_POS,
 P_E_K_NEG, P_E_K_POS, P_E_K_SEI, P_E_D_EC, P_E_K_LP,
 P_NR, P_NX) = range(57)

# kernel status codes
OK = 0
ST_NONFINITE = 1
ST_SOLID_BOUNDS = 2
ST_ELYTE_BOUNDS = 3
ST_DOMAIN = 4

_STATUS_MSG = {
    ST_NONFINITE: "non-finite state value",
    ST_SOLID_BOUNDS: "solid concentration left [0, c_max]",
    ST_ELYTE_BOUNDS: "electrolyte concentration reached zero",
    ST_DOMAIN: "voltage/kinetics domain violation (log or exchange current <= 0)",
}


def pack_params(p: BatteryParams) -> np.ndarray:
    pv = np.zeros(57)
    pv[P_F] = p.F
    pv[P_RGAS] = p.R_gas
    pv[P_ALPHA] = p.alpha
    pv[P_ALPHA_A] = p.alpha_a
    pv[P_ALPHA_C] = p.alpha_c
    pv[P_A_NEG] = p.a_neg
    pv[P_A_POS] = p.a_pos
    pv[P_L_NEG] = p.L_neg
    pv[P_L_SEP] = p.L_sep
    pv[P_L_POS] = p.L_pos
    pv[P_EPS_E_NEG] = p.eps_e_neg
    pv[P_EPS_E_SEP] = p.eps_e_sep
    pv[P_EPS_E_POS] = p.eps_e_pos
    pv[P_RS_NEG] = p.R_s_neg
    pv[P_RS_POS] = p.R_s_pos
    pv[P_DS_NEG] = p.D_s_neg
    pv[P_DS_POS] = p.D_s_pos
    pv[P_CSMAX_NEG] = p.c_s_max_neg
    pv[P_CSMAX_POS] = p.c_s_max_pos
    pv[P_TC0] = p.t_c0
    pv[P_BRUGG] = p.brugg
    pv[P_K_NEG] = p.k_neg
    pv[P_K_POS] = p.k_pos
    pv[P_RF_NEG] = p.R_f_neg
    pv[P_RF_POS] = p.R_f_pos
    pv[P_RHO_JEL] = p.rho_jel
    pv[P_CP_JEL] = p.cp_jel
    pv[P_RHO_CAN] = p.rho_can
    pv[P_CP_CAN] = p.cp_cans
    pv[P_H_JC] = p.h_jel_can
    pv[P_H_CA] = p.h_can_amb
    pv[P_T_AMB] = p.T_amb
    pv[P_C_EC0] = p.c_EC0
    pv[P_D_EC] = p.D_EC
    pv[P_K_SEI] = p.k_SEI
    pv[P_K_LP] = p.k_LP
    pv[P_AC_SEI] = p.alpha_c_SEI
    pv[P_AA_LP] = p.alpha_a_LP
    pv[P_AC_LP] = p.alpha_c_LP
    pv[P_U_SEI] = p.U_SEI
    pv[P_CE_REF] = p.c_e_ref
    pv[P_M_SEI] = p.M_SEI
    pv[P_RHO_SEI] = p.rho_SEI
    pv[P_M_LI] = p.M_Li
    pv[P_RHO_LI] = p.rho_Li
    pv[P_T_REF] = p.T_ref
    pv[P_E_DS_NEG] = p.E_act["D_s_neg"]
    pv[P_E_DS_POS] = p.E_act["D_s_pos"]
    pv[P_E_KAP_NEG] = p.E_act["kappa_eff_neg"]
    pv[P_E_KAP_POS] = p.E_act["kappa_eff_pos"]
    pv[P_E_K_NEG] = p.E_act["k_neg"]
    pv[P_E_K_POS] = p.E_act["k_pos"]
    pv[P_E_K_SEI] = p.E_act["k_SEI"]
    pv[P_E_D_EC] = p.E_act["D_EC"]
    pv[P_E_K_LP] = p.E_act["k_LP"]
    pv[P_NR] = float(p.N_r)
    pv[P_NX] = float(p.N_x)
    return pv


@dataclass
class BatteryState:
    """Value-type snapshot of the cell; stepping never mutates its input."""

    c_s_pos: np.ndarray          # radial solid grid, cathode [mol/m^3]
    c_s_neg: np.ndarray          # radial solid grid, anode [mol/m^3]
    c_e: np.ndarray              # electrolyte cells, anode|sep|cathode [mol/m^3]
    T_jel: float
    T_can: float
    delta_film: float            # anode surface film thickness [m]
    q_SEI: float                 # cumulative film-forming flux integral [mol/m^2], <= 0
    q_LP: float                  # cumulative plating flux integral [mol/m^2], <= 0
    t_elapsed: float = 0.0

    def copy(self) -> "BatteryState":
        return BatteryState(self.c_s_pos.copy(), self.c_s_neg.copy(),
                            self.c_e.copy(), self.T_jel, self.T_can,
                            self.delta_film, self.q_SEI, self.q_LP,
                            self.t_elapsed)


@dataclass
class StepOutput:
    """Control-interval outputs: terminal voltage and SOC at the end of the
    interval, side-reaction fluxes integrated over it, and temperatures."""

    V: float
    soc: float
    J_SEI_int: float
    J_LP_int: float
    T_jel: float
    T_can: float


@njit(cache=True, inline="always")
def _arr(x, e, T, T_ref):
    return x * np.exp((e / GAS_R) * (1.0 / T_ref - 1.0 / T))


GAS_R = 8.314462618


@njit(cache=True)
def _solid_mean(c, R_s):
    n = c.shape[0]
    dr = R_s / n
    tot = 0.0
    vol = 0.0
    for i in range(n):
        r0 = i * dr
        r1 = r0 + dr
        v = (r1 ** 3 - r0 ** 3) / 3.0
        tot += v * c[i]
        vol += v
    return tot / vol


@njit(cache=True, inline="always")
def _surface_conc(c, R_s, grad):
    # linear reconstruction from the outermost shell center to the surface
    n = c.shape[0]
    dr = R_s / n
    return c[n - 1] + 0.5 * dr * grad


@njit(cache=True)
def _region_mean(c_e, lo, hi):
    s = 0.0
    for i in range(lo, hi):
        s += c_e[i]
    return s / (hi - lo)


@njit(cache=True)
def _interface_conc(cL, cR, dxL, dxR, epsL, epsR, dL, dR):
    """Concentration and flux at a region interface, matching porosity-scaled
    diffusive fluxes on both sides with concentration continuity."""
    rL = 0.5 * dxL / (epsL * dL)
    rR = 0.5 * dxR / (epsR * dR)
    flux = (cR - cL) / (rL + rR)
    return cL + flux * rL, flux


@njit(cache=True, inline="always")
def _exchange_current(k_T, css, cbar_e, c_max, aa, ac):
    if css <= 0.0 or css >= c_max or cbar_e <= 0.0:
        return -1.0
    return k_T * css ** ac * (cbar_e * (c_max - css)) ** aa


@njit(cache=True)
def _voltage_core(I, css_n, css_p, c_e, T_jel, pv,
                  ux_up, uc_up, ux_un, uc_un,
                  ux_de, uc_de, ux_kp, uc_kp, ux_ac, uc_ac):
    """Terminal voltage: kinetic overpotentials, OCP difference, film and
    electrolyte ohmic terms, and the three log-concentration terms.
    Returns (V, eta_int_neg, status)."""
    F = pv[P_F]
    R = pv[P_RGAS]
    nx = int(pv[P_NX])
    cbar_n = _region_mean(c_e, 0, nx)
    cbar_s = _region_mean(c_e, nx, 2 * nx)
    cbar_p = _region_mean(c_e, 2 * nx, 3 * nx)

    k_n = _arr(pv[P_K_NEG], pv[P_E_K_NEG], T_jel, pv[P_T_REF])
    k_p = _arr(pv[P_K_POS], pv[P_E_K_POS], T_jel, pv[P_T_REF])
    i0_n = _exchange_current(k_n, css_n, cbar_n, pv[P_CSMAX_NEG], pv[P_ALPHA_A], pv[P_ALPHA_C])
    i0_p = _exchange_current(k_p, css_p, cbar_p, pv[P_CSMAX_POS], pv[P_ALPHA_A], pv[P_ALPHA_C])
    if i0_n <= 0.0 or i0_p <= 0.0:
        return 0.0, 0.0, ST_DOMAIN

    kt = R * T_jel / (pv[P_ALPHA] * F)
    aLn = pv[P_A_NEG] * pv[P_L_NEG]
    aLp = pv[P_A_POS] * pv[P_L_POS]
    eta_p = kt * np.arcsinh(I / (2.0 * aLp * i0_p))
    eta_n = kt * np.arcsinh(-I / (2.0 * aLn * i0_n))

    u_p = pchip_eval(ux_up, uc_up, css_p / pv[P_CSMAX_POS])
    u_n = pchip_eval(ux_un, uc_un, css_n / pv[P_CSMAX_NEG])

    r_film = (pv[P_RF_POS] / aLp + pv[P_RF_NEG] / aLn) * I

    kap_n = pchip_eval(ux_kp, uc_kp, cbar_n) * pv[P_EPS_E_NEG] ** pv[P_BRUGG]
    kap_s = pchip_eval(ux_kp, uc_kp, cbar_s) * pv[P_EPS_E_SEP] ** pv[P_BRUGG]
    kap_p = pchip_eval(ux_kp, uc_kp, cbar_p) * pv[P_EPS_E_POS] ** pv[P_BRUGG]
    kap_n = _arr(kap_n, pv[P_E_KAP_NEG], T_jel, pv[P_T_REF])
    kap_p = _arr(kap_p, pv[P_E_KAP_POS], T_jel, pv[P_T_REF])
    if kap_n <= 0.0 or kap_s <= 0.0 or kap_p <= 0.0:
        return 0.0, 0.0, ST_DOMAIN
    r_elyte = (pv[P_L_POS] / (2.0 * kap_p) + pv[P_L_SEP] / kap_s
               + pv[P_L_NEG] / (2.0 * kap_n)) * I

    # interface and collector-edge concentrations
    dx_n = pv[P_L_NEG] / nx
    dx_s = pv[P_L_SEP] / nx
    dx_p = pv[P_L_POS] / nx
    d_a = pchip_eval(ux_de, uc_de, c_e[nx - 1])
    d_b = pchip_eval(ux_de, uc_de, c_e[nx])
    c_g1, _ = _interface_conc(c_e[nx - 1], c_e[nx], dx_n, dx_s,
                              pv[P_EPS_E_NEG], pv[P_EPS_E_SEP], d_a, d_b)
    d_c = pchip_eval(ux_de, uc_de, c_e[2 * nx - 1])
    d_d = pchip_eval(ux_de, uc_de, c_e[2 * nx])
    c_g2, _ = _interface_conc(c_e[2 * nx - 1], c_e[2 * nx], dx_s, dx_p,
                              pv[P_EPS_E_SEP], pv[P_EPS_E_POS], d_c, d_d)
    ce_coll_n = c_e[0]
    ce_coll_p = c_e[3 * nx - 1]
    if c_g1 <= 0.0 or c_g2 <= 0.0 or ce_coll_n <= 0.0 or ce_coll_p <= 0.0:
        return 0.0, 0.0, ST_DOMAIN

    two_rt = 2.0 * R * T_jel / F * (1.0 - pv[P_TC0])
    nu_n = two_rt * pchip_eval(ux_ac, uc_ac, cbar_n)
    nu_s = two_rt * pchip_eval(ux_ac, uc_ac, cbar_s)
    nu_p = two_rt * pchip_eval(ux_ac, uc_ac, cbar_p)
    conc = (nu_p * (np.log(ce_coll_p) - np.log(c_g2))
            + nu_s * (np.log(c_g2) - np.log(c_g1))
            + nu_n * (np.log(c_g1) - np.log(ce_coll_n)))

    v = eta_p - eta_n + u_p - u_n + r_film - r_elyte + conc
    return v, eta_n, OK


@njit(cache=True)
def _side_fluxes(I, css_n, cbar_e_n, eta_int, delta_film, T_jel, pv, ux_un, uc_un):
    """Film-formation and plating molar fluxes at the anode surface (<= 0)."""
    F = pv[P_F]
    R = pv[P_RGAS]
    u_n = pchip_eval(ux_un, uc_un, css_n / pv[P_CSMAX_NEG])

    j_sei = 0.0
    if pv[P_K_SEI] > 0.0:
        k_sei = _arr(pv[P_K_SEI], pv[P_E_K_SEI], T_jel, pv[P_T_REF])
        d_ec = _arr(pv[P_D_EC], pv[P_E_D_EC], T_jel, pv[P_T_REF])
        eta_sei = eta_int + u_n - pv[P_U_SEI]
        kin = k_sei * np.exp(-pv[P_AC_SEI] * F * eta_sei / (R * T_jel))
        j_sei = -pv[P_C_EC0] / (delta_film / d_ec + 1.0 / kin)

    j_lp = 0.0
    if pv[P_K_LP] > 0.0 and cbar_e_n > 0.0:
        k_lp = _arr(pv[P_K_LP], pv[P_E_K_LP], T_jel, pv[P_T_REF])
        eta_lp = eta_int + u_n
        z = F * eta_lp / (R * T_jel)
        bv = np.exp(pv[P_AA_LP] * z) - np.exp(-pv[P_AC_LP] * z)
        j = k_lp * (cbar_e_n / pv[P_CE_REF]) ** pv[P_AA_LP] * bv
        j_lp = min(0.0, j)
    return j_sei, j_lp


@njit(cache=True)
def _step_core(c_s_n, c_s_p, c_e, T_jel, T_can, delta_film, q_sei, q_lp,
               I, dt, n_sub, pv,
               ux_up, uc_up, ux_un, uc_un, ux_dp, uc_dp, ux_dn, uc_dn,
               ux_de, uc_de, ux_kp, uc_kp, ux_ac, uc_ac):
    F = pv[P_F]
    nr = int(pv[P_NR])
    nx = int(pv[P_NX])
    h = dt / n_sub

    dr_n = pv[P_RS_NEG] / nr
    dr_p = pv[P_RS_POS] / nr
    dx_n = pv[P_L_NEG] / nx
    dx_s = pv[P_L_SEP] / nx
    dx_p = pv[P_L_POS] / nx
    aLn = pv[P_A_NEG] * pv[P_L_NEG]
    aLp = pv[P_A_POS] * pv[P_L_POS]

    vol_n = np.empty(nr)
    vol_p = np.empty(nr)
    for i in range(nr):
        vol_n[i] = ((i + 1) ** 3 - i ** 3) * dr_n ** 3 / 3.0
        vol_p[i] = ((i + 1) ** 3 - i ** 3) * dr_p ** 3 / 3.0

    flux_n = np.empty(nr + 1)
    flux_p = np.empty(nr + 1)
    dce = np.empty(3 * nx)

    j_sei_int = 0.0
    j_lp_int = 0.0
    v_last = 0.0

    for _ in range(n_sub):
        ds_n = _arr(pv[P_DS_NEG], pv[P_E_DS_NEG], T_jel, pv[P_T_REF])
        ds_p = _arr(pv[P_DS_POS], pv[P_E_DS_POS], T_jel, pv[P_T_REF])
        grad_n = I / (ds_n * F * aLn)
        grad_p = -I / (ds_p * F * aLp)
        css_n = _surface_conc(c_s_n, pv[P_RS_NEG], grad_n)
        css_p = _surface_conc(c_s_p, pv[P_RS_POS], grad_p)

        v, eta_int, status = _voltage_core(
            I, css_n, css_p, c_e, T_jel, pv,
            ux_up, uc_up, ux_un, uc_un, ux_de, uc_de, ux_kp, uc_kp, ux_ac, uc_ac)
        if status != OK:
            return T_jel, T_can, delta_film, q_sei, q_lp, 0.0, 0.0, 0.0, status
        v_last = v

        cbar_e_n = _region_mean(c_e, 0, nx)
        j_sei, j_lp = _side_fluxes(I, css_n, cbar_e_n, eta_int, delta_film,
                                   T_jel, pv, ux_un, uc_un)

        # solid diffusion, conservative spherical finite volumes
        flux_n[0] = 0.0
        flux_p[0] = 0.0
        for i in range(1, nr):
            r = i * dr_n
            flux_n[i] = r * r * ds_n * (c_s_n[i] - c_s_n[i - 1]) / dr_n
            r = i * dr_p
            flux_p[i] = r * r * ds_p * (c_s_p[i] - c_s_p[i - 1]) / dr_p
        flux_n[nr] = pv[P_RS_NEG] ** 2 * (I / (F * aLn))
        flux_p[nr] = pv[P_RS_POS] ** 2 * (-I / (F * aLp))

        # electrolyte diffusion with interface flux matching and charge source
        src_n = -(1.0 - pv[P_TC0]) * I / (F * pv[P_L_NEG])
        src_p = (1.0 - pv[P_TC0]) * I / (F * pv[P_L_POS])
        for i in range(3 * nx):
            dce[i] = 0.0
        # faces inside regions + the two interfaces; accumulate conservative flux
        for i in range(3 * nx - 1):
            if i < nx - 1:
                dxl = dx_n
                epsl = pv[P_EPS_E_NEG]
                inside = True
            elif i == nx - 1:
                inside = False
                dm = pchip_eval(ux_de, uc_de, c_e[i])
                dp = pchip_eval(ux_de, uc_de, c_e[i + 1])
                _, fl = _interface_conc(c_e[i], c_e[i + 1], dx_n, dx_s,
                                        pv[P_EPS_E_NEG], pv[P_EPS_E_SEP], dm, dp)
            elif i < 2 * nx - 1:
                dxl = dx_s
                epsl = pv[P_EPS_E_SEP]
                inside = True
            elif i == 2 * nx - 1:
                inside = False
                dm = pchip_eval(ux_de, uc_de, c_e[i])
                dp = pchip_eval(ux_de, uc_de, c_e[i + 1])
                _, fl = _interface_conc(c_e[i], c_e[i + 1], dx_s, dx_p,
                                        pv[P_EPS_E_SEP], pv[P_EPS_E_POS], dm, dp)
            else:
                dxl = dx_p
                epsl = pv[P_EPS_E_POS]
                inside = True
            if inside:
                dmid = pchip_eval(ux_de, uc_de, 0.5 * (c_e[i] + c_e[i + 1]))
                fl = epsl * dmid * (c_e[i + 1] - c_e[i]) / dxl
            dce[i] += fl
            dce[i + 1] -= fl
        for i in range(nx):
            dce[i] = (dce[i] + src_n * dx_n) / (pv[P_EPS_E_NEG] * dx_n)
            dce[nx + i] = dce[nx + i] / (pv[P_EPS_E_SEP] * dx_s)
            dce[2 * nx + i] = (dce[2 * nx + i] + src_p * dx_p) / (pv[P_EPS_E_POS] * dx_p)

        # lumped thermal: polarization + entropic heat, two-body exchange
        tbar_n = _solid_mean(c_s_n, pv[P_RS_NEG]) / pv[P_CSMAX_NEG]
        tbar_p = _solid_mean(c_s_p, pv[P_RS_POS]) / pv[P_CSMAX_POS]
        u_avg = (pchip_eval(ux_up, uc_up, tbar_p) - pchip_eval(ux_un, uc_un, tbar_n))
        dudt_avg = (pchip_eval(ux_dp, uc_dp, tbar_p) - pchip_eval(ux_dn, uc_dn, tbar_n))
        q_gen = I * (v - u_avg) + I * T_jel * dudt_avg
        dT_jel = (q_gen + pv[P_H_JC] * (T_can - T_jel)) / (pv[P_RHO_JEL] * pv[P_CP_JEL])
        dT_can = (pv[P_H_JC] * (T_jel - T_can)
                  + pv[P_H_CA] * (pv[P_T_AMB] - T_can)) / (pv[P_RHO_CAN] * pv[P_CP_CAN])

        # advance
        for i in range(nr):
            c_s_n[i] += h * (flux_n[i + 1] - flux_n[i]) / vol_n[i]
            c_s_p[i] += h * (flux_p[i + 1] - flux_p[i]) / vol_p[i]
        for i in range(3 * nx):
            c_e[i] += h * dce[i]
        T_jel += h * dT_jel
        T_can += h * dT_can
        delta_film += h * (-(j_sei * pv[P_M_SEI] / pv[P_RHO_SEI]
                             + j_lp * pv[P_M_LI] / pv[P_RHO_LI]))
        q_sei += h * j_sei
        q_lp += h * j_lp
        j_sei_int += h * j_sei
        j_lp_int += h * j_lp

        # physical-bounds watchdog; the integrator never clamps
        for i in range(nr):
            if not (np.isfinite(c_s_n[i]) and np.isfinite(c_s_p[i])):
                return T_jel, T_can, delta_film, q_sei, q_lp, 0.0, 0.0, 0.0, ST_NONFINITE
            if c_s_n[i] < 0.0 or c_s_n[i] > pv[P_CSMAX_NEG] \
                    or c_s_p[i] < 0.0 or c_s_p[i] > pv[P_CSMAX_POS]:
                return T_jel, T_can, delta_film, q_sei, q_lp, 0.0, 0.0, 0.0, ST_SOLID_BOUNDS
        for i in range(3 * nx):
            if not np.isfinite(c_e[i]):
                return T_jel, T_can, delta_film, q_sei, q_lp, 0.0, 0.0, 0.0, ST_NONFINITE
            if c_e[i] <= 0.0:
                return T_jel, T_can, delta_film, q_sei, q_lp, 0.0, 0.0, 0.0, ST_ELYTE_BOUNDS
        if not (np.isfinite(T_jel) and np.isfinite(T_can)):
            return T_jel, T_can, delta_film, q_sei, q_lp, 0.0, 0.0, 0.0, ST_NONFINITE

    # end-of-interval voltage under the held current
    ds_n = _arr(pv[P_DS_NEG], pv[P_E_DS_NEG], T_jel, pv[P_T_REF])
    ds_p = _arr(pv[P_DS_POS], pv[P_E_DS_POS], T_jel, pv[P_T_REF])
    css_n = _surface_conc(c_s_n, pv[P_RS_NEG], I / (ds_n * F * aLn))
    css_p = _surface_conc(c_s_p, pv[P_RS_POS], -I / (ds_p * F * aLp))
    v_end, _, status = _voltage_core(
        I, css_n, css_p, c_e, T_jel, pv,
        ux_up, uc_up, ux_un, uc_un, ux_de, uc_de, ux_kp, uc_kp, ux_ac, uc_ac)
    if status != OK:
        return T_jel, T_can, delta_film, q_sei, q_lp, 0.0, 0.0, 0.0, status
    return T_jel, T_can, delta_film, q_sei, q_lp, j_sei_int, j_lp_int, v_end, OK


class Simulator:
    """Owns one read-only parameter set; steps value-type states."""

    def __init__(self, params: BatteryParams, funcs: FunctionTable):
        params._require_window()
        self.params = params
        self.funcs = funcs
        self.pv = pack_params(params)
        self._tbl = (
            funcs.u_pos.breaks, funcs.u_pos.coefs,
            funcs.u_neg.breaks, funcs.u_neg.coefs,
            funcs.du_dT_pos.breaks, funcs.du_dT_pos.coefs,
            funcs.du_dT_neg.breaks, funcs.du_dT_neg.coefs,
            funcs.d_e.breaks, funcs.d_e.coefs,
            funcs.kappa.breaks, funcs.kappa.coefs,
            funcs.activity.breaks, funcs.activity.coefs,
        )
        self.i_1c = i_1crate(params)

    # -- construction ------------------------------------------------------

    def init_equilibrium(self, ocv0: float, T0: float) -> BatteryState:
        """Spatially uniform state whose zero-current voltage equals ocv0."""
        if T0 <= 0.0:
            raise SimulationBlowupError("initial temperature must be positive")
        c_n, c_p = stoich_from_ocv(self.params, self.funcs, ocv0)
        p = self.params
        return BatteryState(
            c_s_pos=np.full(p.N_r, c_p),
            c_s_neg=np.full(p.N_r, c_n),
            c_e=np.full(3 * p.N_x, p.c_e0),
            T_jel=float(T0), T_can=float(T0),
            delta_film=p.delta_film0, q_SEI=0.0, q_LP=0.0, t_elapsed=0.0)

    # -- inspection --------------------------------------------------------

    def mean_solid_conc(self, state: BatteryState) -> tuple[float, float]:
        p = self.params
        return (_solid_mean(state.c_s_neg, p.R_s_neg),
                _solid_mean(state.c_s_pos, p.R_s_pos))

    def soc(self, state: BatteryState) -> float:
        """SOC from the anode average concentration."""
        p = self.params
        cbar_n = _solid_mean(state.c_s_neg, p.R_s_neg)
        return (cbar_n - p.c_s_soc0_neg) / p.window_span_neg()

    def soc_cathode(self, state: BatteryState) -> float:
        """Cross-check SOC from the cathode side; diagnostic only."""
        p = self.params
        cbar_p = _solid_mean(state.c_s_pos, p.R_s_pos)
        return (p.c_s_soc0_pos - cbar_p) / p.window_span_pos()

    def solid_lithium(self, state: BatteryState) -> tuple[float, float]:
        """Per-area solid lithium in (anode, cathode) [mol/m^2]."""
        p = self.params
        cbar_n, cbar_p = self.mean_solid_conc(state)
        return (p.eps_s_neg * p.L_neg * cbar_n, p.eps_s_pos * p.L_pos * cbar_p)

    def electrolyte_lithium(self, state: BatteryState) -> float:
        """Porosity-weighted electrolyte lithium across all regions [mol/m^2]."""
        p = self.params
        nx = p.N_x
        parts = (
            p.eps_e_neg * p.L_neg / nx * state.c_e[:nx].sum(),
            p.eps_e_sep * p.L_sep / nx * state.c_e[nx:2 * nx].sum(),
            p.eps_e_pos * p.L_pos / nx * state.c_e[2 * nx:].sum(),
        )
        return float(sum(parts))

    def voltage(self, state: BatteryState, I: float) -> float:
        p = self.params
        ds_n = arrhenius_correct(p.D_s_neg, p.E_act["D_s_neg"], state.T_jel, p.T_ref)
        ds_p = arrhenius_correct(p.D_s_pos, p.E_act["D_s_pos"], state.T_jel, p.T_ref)
        css_n = _surface_conc(state.c_s_neg, p.R_s_neg, I / (ds_n * p.F * p.a_neg * p.L_neg))
        css_p = _surface_conc(state.c_s_pos, p.R_s_pos, -I / (ds_p * p.F * p.a_pos * p.L_pos))
        v, _, status = _voltage_core(
            float(I), css_n, css_p, state.c_e, state.T_jel, self.pv,
            self._tbl[0], self._tbl[1], self._tbl[2], self._tbl[3],
            self._tbl[8], self._tbl[9], self._tbl[10], self._tbl[11],
            self._tbl[12], self._tbl[13])
        if status != OK:
            raise VoltageDomainError(_STATUS_MSG[status])
        return float(v)

    def overpotential_neg(self, state: BatteryState, I: float) -> float:
        """Anode intercalation overpotential at the applied current."""
        p = self.params
        ds_n = arrhenius_correct(p.D_s_neg, p.E_act["D_s_neg"], state.T_jel, p.T_ref)
        ds_p = arrhenius_correct(p.D_s_pos, p.E_act["D_s_pos"], state.T_jel, p.T_ref)
        css_n = _surface_conc(state.c_s_neg, p.R_s_neg, I / (ds_n * p.F * p.a_neg * p.L_neg))
        css_p = _surface_conc(state.c_s_pos, p.R_s_pos, -I / (ds_p * p.F * p.a_pos * p.L_pos))
        _, eta, status = _voltage_core(
            float(I), css_n, css_p, state.c_e, state.T_jel, self.pv,
            self._tbl[0], self._tbl[1], self._tbl[2], self._tbl[3],
            self._tbl[8], self._tbl[9], self._tbl[10], self._tbl[11],
            self._tbl[12], self._tbl[13])
        if status != OK:
            raise VoltageDomainError(_STATUS_MSG[status])
        return float(eta)

    def sei_flux(self, state: BatteryState, I: float) -> float:
        return self._fluxes(state, I)[0]

    def lp_flux(self, state: BatteryState, I: float) -> float:
        return self._fluxes(state, I)[1]

    def _fluxes(self, state: BatteryState, I: float) -> tuple[float, float]:
        p = self.params
        eta = self.overpotential_neg(state, I)
        ds_n = arrhenius_correct(p.D_s_neg, p.E_act["D_s_neg"], state.T_jel, p.T_ref)
        css_n = _surface_conc(state.c_s_neg, p.R_s_neg, I / (ds_n * p.F * p.a_neg * p.L_neg))
        cbar_e_n = float(state.c_e[:p.N_x].mean())
        j_sei, j_lp = _side_fluxes(float(I), css_n, cbar_e_n, eta,
                                   state.delta_film, state.T_jel, self.pv,
                                   self._tbl[2], self._tbl[3])
        return float(j_sei), float(j_lp)

    # -- stepping ----------------------------------------------------------

    def stable_substeps(self, state: BatteryState, dt: float) -> int:
        """Substep count from the explicit diffusion stability bound."""
        p = self.params
        T_hot = state.T_jel + 15.0
        ds_n = arrhenius_correct(p.D_s_neg, p.E_act["D_s_neg"], T_hot, p.T_ref)
        ds_p = arrhenius_correct(p.D_s_pos, p.E_act["D_s_pos"], T_hot, p.T_ref)
        lo = max(self.funcs.d_e.x[0], 0.3 * float(state.c_e.min()))
        hi = min(self.funcs.d_e.x[-1], 2.0 * float(state.c_e.max()))
        mask = (self.funcs.d_e.x >= lo) & (self.funcs.d_e.x <= hi)
        de_max = float(self.funcs.d_e.y[mask].max()) if mask.any() else float(self.funcs.d_e.y.max())
        dt_stab = 0.3 * min(
            (p.R_s_neg / p.N_r) ** 2 / ds_n,
            (p.R_s_pos / p.N_r) ** 2 / ds_p,
            (p.L_neg / p.N_x) ** 2 / de_max,
            (p.L_sep / p.N_x) ** 2 / de_max,
            (p.L_pos / p.N_x) ** 2 / de_max,
        )
        return max(1, int(np.ceil(dt / dt_stab)))

    def step(self, state: BatteryState, I: float, dt: float,
             n_sub: int = None) -> tuple[BatteryState, StepOutput]:
        """Advance dt seconds with the current held constant.

        Raises SimulationBlowupError on non-finite values or physical-bound
        violations; the input state is never mutated.
        """
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if n_sub is None:
            n_sub = self.stable_substeps(state, dt)
        new = state.copy()
        out = _step_core(new.c_s_neg, new.c_s_pos, new.c_e,
                         new.T_jel, new.T_can, new.delta_film,
                         new.q_SEI, new.q_LP,
                         float(I), float(dt), int(n_sub), self.pv, *self._tbl)
        (T_jel, T_can, delta_film, q_sei, q_lp,
         j_sei_int, j_lp_int, v_end, status) = out
        if status != OK:
            raise SimulationBlowupError(
                f"{_STATUS_MSG[status]} at t={state.t_elapsed:.1f}s, I={I:.3f} A/m^2 "
                f"(dt={dt}, substeps={n_sub})")
        new.T_jel, new.T_can = float(T_jel), float(T_can)
        new.delta_film = float(delta_film)
        new.q_SEI, new.q_LP = float(q_sei), float(q_lp)
        new.t_elapsed = state.t_elapsed + dt
        return new, StepOutput(V=float(v_end), soc=self.soc(new),
                               J_SEI_int=float(j_sei_int), J_LP_int=float(j_lp_int),
                               T_jel=new.T_jel, T_can=new.T_can)
