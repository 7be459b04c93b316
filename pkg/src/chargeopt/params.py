"""Cell parameters, property tables, and the OCV-defined SOC window.

The shipped default set is a graphite/NMC-class cell assembled from the
open single-particle-model literature. Every quantity is per unit
electrode cross-section area, current densities in A/m^2, concentrations
in mol/m^3, temperatures in K.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import NoRootError, ParameterError
from .interp import CubicTable

FARADAY = 96485.33212
GAS_CONSTANT = 8.314462618

ARRHENIUS_KEYS = (
    "D_s_pos", "D_s_neg", "kappa_eff_pos", "kappa_eff_neg",
    "k_pos", "k_neg", "k_SEI", "D_EC", "k_LP",
)


def arrhenius_correct(x_ref: float, e_act: float, temp: float, t_ref: float) -> float:
    """Temperature-shift a reference parameter: x_ref * exp((E/R)(1/T_ref - 1/T))."""
    if temp <= 0.0 or t_ref <= 0.0:
        raise ParameterError("temperatures must be positive")
    return x_ref * np.exp((e_act / GAS_CONSTANT) * (1.0 / t_ref - 1.0 / temp))


@dataclass
class BatteryParams:
    """Physical, geometric, kinetic, and aging constants of the cell."""

    # geometry
    R_s_pos: float
    R_s_neg: float
    L_pos: float
    L_neg: float
    L_sep: float
    # solid transport
    D_s_pos: float
    D_s_neg: float
    # structure
    eps_e_pos: float
    eps_e_neg: float
    eps_e_sep: float
    eps_s_pos: float
    eps_s_neg: float
    a_pos: float
    a_neg: float
    brugg: float
    # electrolyte / kinetics
    t_c0: float
    k_pos: float
    k_neg: float
    alpha: float
    alpha_a: float
    alpha_c: float
    R_f_pos: float
    R_f_neg: float
    c_s_max_pos: float
    c_s_max_neg: float
    c_e0: float
    n_li_solid: float
    # thermal (areal lumped model)
    rho_jel: float
    rho_can: float
    cp_jel: float
    cp_cans: float
    h_jel_can: float
    h_can_amb: float
    T_amb: float
    # side reactions
    c_EC0: float
    D_EC: float
    k_SEI: float
    k_LP: float
    alpha_c_SEI: float
    alpha_a_LP: float
    alpha_c_LP: float
    U_SEI: float
    c_e_ref: float
    M_SEI: float
    rho_SEI: float
    M_Li: float
    rho_Li: float
    delta_film0: float
    # temperature corrections
    E_act: dict
    T_ref: float
    # SOC window definition
    ocv_soc0: float
    ocv_soc100: float
    # physical constants
    F: float = FARADAY
    R_gas: float = GAS_CONSTANT
    # spatial discretization
    N_r: int = 16
    N_x: int = 16
    # OCV-window concentration endpoints, attached after root solving
    c_s_soc0_pos: Optional[float] = None
    c_s_soc100_pos: Optional[float] = None
    c_s_soc0_neg: Optional[float] = None
    c_s_soc100_neg: Optional[float] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        pos = {
            "R_s_pos": self.R_s_pos, "R_s_neg": self.R_s_neg,
            "L_pos": self.L_pos, "L_neg": self.L_neg, "L_sep": self.L_sep,
            "D_s_pos": self.D_s_pos, "D_s_neg": self.D_s_neg,
            "a_pos": self.a_pos, "a_neg": self.a_neg,
            "k_pos": self.k_pos, "k_neg": self.k_neg,
            "c_s_max_pos": self.c_s_max_pos, "c_s_max_neg": self.c_s_max_neg,
            "c_e0": self.c_e0, "n_li_solid": self.n_li_solid,
            "rho_jel": self.rho_jel, "rho_can": self.rho_can,
            "cp_jel": self.cp_jel, "cp_cans": self.cp_cans,
            "h_jel_can": self.h_jel_can, "h_can_amb": self.h_can_amb,
            "T_amb": self.T_amb, "c_EC0": self.c_EC0, "D_EC": self.D_EC,
            "c_e_ref": self.c_e_ref, "M_SEI": self.M_SEI,
            "rho_SEI": self.rho_SEI, "M_Li": self.M_Li, "rho_Li": self.rho_Li,
            "delta_film0": self.delta_film0, "T_ref": self.T_ref,
            "F": self.F, "R_gas": self.R_gas, "brugg": self.brugg,
        }
        for name, v in pos.items():
            if not np.isfinite(v) or v <= 0.0:
                raise ParameterError(f"{name} must be finite and > 0, got {v}")
        # rate constants may be zero to switch the side reactions off
        for name, v in (("k_SEI", self.k_SEI), ("k_LP", self.k_LP)):
            if not np.isfinite(v) or v < 0.0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v}")
        if not 0.0 < self.t_c0 < 1.0:
            raise ParameterError(f"t_c0 must be in (0, 1), got {self.t_c0}")
        for name, v in (("eps_e_pos", self.eps_e_pos), ("eps_e_neg", self.eps_e_neg),
                        ("eps_e_sep", self.eps_e_sep)):
            if not 0.0 < v < 1.0:
                raise ParameterError(f"{name} must be in (0, 1), got {v}")
        for name, v in (("eps_s_pos", self.eps_s_pos), ("eps_s_neg", self.eps_s_neg)):
            if not 0.0 < v < 1.0:
                raise ParameterError(f"{name} must be in (0, 1), got {v}")
        if self.eps_s_pos + self.eps_e_pos > 1.0 or self.eps_s_neg + self.eps_e_neg > 1.0:
            raise ParameterError("solid fraction plus porosity exceeds 1 in an electrode")
        for name, v in (("alpha", self.alpha), ("alpha_a", self.alpha_a),
                        ("alpha_c", self.alpha_c), ("alpha_c_SEI", self.alpha_c_SEI),
                        ("alpha_a_LP", self.alpha_a_LP), ("alpha_c_LP", self.alpha_c_LP)):
            if not 0.0 < v <= 1.0:
                raise ParameterError(f"{name} must be in (0, 1], got {v}")
        for name, v in (("R_f_pos", self.R_f_pos), ("R_f_neg", self.R_f_neg)):
            if not np.isfinite(v) or v < 0.0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v}")
        if not self.ocv_soc0 < self.ocv_soc100:
            raise ParameterError("ocv_soc0 must be below ocv_soc100")
        missing = [k for k in ARRHENIUS_KEYS if k not in self.E_act]
        if missing:
            raise ParameterError(f"E_act map missing keys: {missing}")
        if self.N_r < 2 or self.N_x < 2:
            raise ParameterError("need at least 2 radial shells and 2 cells per region")

    @property
    def has_window(self) -> bool:
        return self.c_s_soc0_neg is not None

    def window_span_neg(self) -> float:
        self._require_window()
        return self.c_s_soc100_neg - self.c_s_soc0_neg

    def window_span_pos(self) -> float:
        self._require_window()
        return self.c_s_soc0_pos - self.c_s_soc100_pos

    def _require_window(self):
        if not self.has_window:
            raise ParameterError(
                "SOC window endpoints not attached; call attach_soc_window first")


class FunctionTable:
    """Tabulated property curves of the cell.

    u_pos/u_neg: open-circuit potentials vs normalized stoichiometry [V];
    du_dT_pos/du_dT_neg: entropic coefficients [V/K]; d_e: electrolyte
    diffusivity [m^2/s]; kappa: electrolyte conductivity [S/m]; activity:
    the thermodynamic-factor multiplier inside the concentration-polarization
    coefficient, sampled at the reference temperature.
    """

    NAMES = ("u_pos", "u_neg", "du_dT_pos", "du_dT_neg", "d_e", "kappa", "activity")

    def __init__(self, u_pos, u_neg, du_dT_pos, du_dT_neg, d_e, kappa, activity):
        self.u_pos = u_pos
        self.u_neg = u_neg
        self.du_dT_pos = du_dT_pos
        self.du_dT_neg = du_dT_neg
        self.d_e = d_e
        self.kappa = kappa
        self.activity = activity
        self.validate()

    def validate(self):
        for name in ("u_pos", "u_neg"):
            t: CubicTable = getattr(self, name)
            if np.any(np.diff(t.y) >= 0.0):
                raise ParameterError(
                    f"{name} samples must be strictly decreasing in stoichiometry")
        for name in ("d_e", "kappa", "activity"):
            t = getattr(self, name)
            if np.any(t.y <= 0.0):
                raise ParameterError(f"{name} must be positive over its sample range")

    def as_dict(self):
        return {n: {"x": getattr(self, n).x.tolist(), "y": getattr(self, n).y.tolist()}
                for n in self.NAMES}

    @classmethod
    def from_dict(cls, d):
        try:
            tables = {n: CubicTable(d[n]["x"], d[n]["y"]) for n in cls.NAMES}
        except KeyError as e:
            raise ParameterError(f"missing table in parameter file: {e}") from e
        return cls(**tables)


# ---------------------------------------------------------------------------
# SOC window (cell OCV -> electrode concentration endpoints)

def _balance_cathode_conc(params: BatteryParams, c_n: float) -> float:
    """Cathode average concentration paired with an anode one by the fixed
    total solid-lithium inventory."""
    return (params.n_li_solid - params.eps_s_neg * params.L_neg * c_n) / (
        params.eps_s_pos * params.L_pos)


def ocv_at_anode_conc(params: BatteryParams, funcs: FunctionTable, c_n: float) -> float:
    c_p = _balance_cathode_conc(params, c_n)
    return float(funcs.u_pos(c_p / params.c_s_max_pos)
                 - funcs.u_neg(c_n / params.c_s_max_neg))


def _anode_conc_bracket(params: BatteryParams) -> tuple[float, float]:
    margin = 1e-3
    lo = margin * params.c_s_max_neg
    hi = (1.0 - margin) * params.c_s_max_neg
    # keep the paired cathode stoichiometry inside its table range too
    cap_p = params.eps_s_pos * params.L_pos * params.c_s_max_pos
    cap_n = params.eps_s_neg * params.L_neg
    lo = max(lo, (params.n_li_solid - (1.0 - margin) * cap_p) / cap_n)
    hi = min(hi, (params.n_li_solid - margin * cap_p) / cap_n)
    if lo >= hi:
        raise ParameterError("solid lithium inventory incompatible with electrode sizes")
    return lo, hi


def stoich_from_ocv(params: BatteryParams, funcs: FunctionTable,
                    ocv_target: float) -> tuple[float, float]:
    """Solve the equilibrium pair (c_s_neg, c_s_pos) whose OCP difference
    equals ocv_target, under the fixed solid-lithium inventory.

    Raises NoRootError when the target lies outside the achievable OCV range.
    """
    lo, hi = _anode_conc_bracket(params)
    f_lo = ocv_at_anode_conc(params, funcs, lo) - ocv_target
    f_hi = ocv_at_anode_conc(params, funcs, hi) - ocv_target
    if f_lo * f_hi > 0.0:
        raise NoRootError(
            f"OCV target {ocv_target} V outside achievable range "
            f"[{f_lo + ocv_target:.4f}, {f_hi + ocv_target:.4f}] V")
    c_n = brentq(lambda c: ocv_at_anode_conc(params, funcs, c) - ocv_target,
                 lo, hi, xtol=1e-10, rtol=8.9e-16)
    return float(c_n), float(_balance_cathode_conc(params, c_n))


def soc_window(params: BatteryParams, funcs: FunctionTable):
    """Concentration endpoints of the OCV-defined SOC window.

    Returns (c_s_soc0_pos, c_s_soc100_pos, c_s_soc0_neg, c_s_soc100_neg),
    each solved to |OCP difference - target| < 1e-6 V.
    """
    c_n0, c_p0 = stoich_from_ocv(params, funcs, params.ocv_soc0)
    c_n1, c_p1 = stoich_from_ocv(params, funcs, params.ocv_soc100)
    for (c_n, c_p, tgt) in ((c_n0, c_p0, params.ocv_soc0), (c_n1, c_p1, params.ocv_soc100)):
        ocv = float(funcs.u_pos(c_p / params.c_s_max_pos)
                    - funcs.u_neg(c_n / params.c_s_max_neg))
        if abs(ocv - tgt) > 1e-6:
            raise NoRootError(f"window solve did not reach 1e-6 V at target {tgt}")
    return c_p0, c_p1, c_n0, c_n1


def attach_soc_window(params: BatteryParams, funcs: FunctionTable) -> BatteryParams:
    """Solve and store the window endpoints on the params object."""
    c_p0, c_p1, c_n0, c_n1 = soc_window(params, funcs)
    params.c_s_soc0_pos, params.c_s_soc100_pos = c_p0, c_p1
    params.c_s_soc0_neg, params.c_s_soc100_neg = c_n0, c_n1
    # the OCV curve must rise monotonically across the window for the SOC
    # definition to be invertible
    cs = np.linspace(c_n0, c_n1, 64)
    ocvs = np.array([ocv_at_anode_conc(params, funcs, c) for c in cs])
    if np.any(np.diff(ocvs) <= 0.0):
        raise ParameterError("cell OCV is not strictly increasing across the SOC window")
    return params


def i_1crate_sides(params: BatteryParams) -> tuple[float, float]:
    """Anode- and cathode-side evaluations of the 1C current density.

    1C is the areal current that moves the full SOC-window solid charge,
    F * eps_s * L * (concentration span), in 3600 s.
    """
    params._require_window()
    i_neg = params.F * params.eps_s_neg * params.L_neg * params.window_span_neg() / 3600.0
    i_pos = params.F * params.eps_s_pos * params.L_pos * params.window_span_pos() / 3600.0
    return i_neg, i_pos


def i_1crate(params: BatteryParams) -> float:
    """1C current density (A/m^2), from the anode-side expression.

    Raises ParameterError when the two electrode-side evaluations disagree
    by more than 1%, which signals an unbalanced parameter file.
    """
    i_neg, i_pos = i_1crate_sides(params)
    if abs(i_neg - i_pos) > 0.01 * abs(i_neg):
        raise ParameterError(
            f"1C definitions disagree: anode {i_neg:.6g} vs cathode {i_pos:.6g} A/m^2")
    return i_neg


# ---------------------------------------------------------------------------
# Default parameter set (graphite/NMC-class, open-literature values)

def _u_neg_graphite(t):
    return (1.9793 * np.exp(-39.3631 * t) + 0.2482
            - 0.0909 * np.tanh(29.8538 * (t - 0.1234))
            - 0.04478 * np.tanh(14.9159 * (t - 0.2769))
            - 0.0205 * np.tanh(30.4444 * (t - 0.6103)))


def _u_pos_nmc(t):
    return (-0.8090 * t + 4.4875
            - 0.0428 * np.tanh(18.5138 * (t - 0.5542))
            - 17.7326 * np.tanh(15.7890 * (t - 0.3117))
            + 17.5842 * np.tanh(15.9308 * (t - 0.3120)))


def _du_dT_neg(t):
    # smooth entropic-coefficient curve, magnitude ~0.1 mV/K
    return 1e-3 * (0.112 - 0.350 * t + 0.149 * t ** 2)


def _du_dT_pos(t):
    return -1e-3 * (0.040 + 0.100 * t)


def _d_e_electrolyte(c):
    # carbonate-electrolyte diffusivity correlation at 298.15 K
    return 1e-4 * 10.0 ** (-4.43 - 54.0 / (298.15 - 229.0 - 5e-3 * c) - 0.22e-3 * c)


def _kappa_electrolyte(c):
    # conductivity correlation at 298.15 K; c in mol/m^3, result S/m
    T = 298.15
    poly = (-10.5 + 0.668e-3 * c + 0.494e-6 * c ** 2
            + (0.074 - 1.78e-5 * c - 8.86e-10 * c ** 2) * T
            + (-6.96e-5 + 2.8e-8 * c) * T ** 2)
    return 1e-4 * c * poly ** 2


def _activity_factor(c):
    # thermodynamic factor (1 + dln f / dln c) at 298.15 K
    return 0.601 - 0.24 * np.sqrt(1e-3 * c) + 0.982 * (1e-3 * c) ** 1.5


def default_function_table() -> FunctionTable:
    th = np.linspace(0.0, 1.0, 201)
    ce = np.linspace(10.0, 3500.0, 80)
    return FunctionTable(
        u_pos=CubicTable(th, _u_pos_nmc(th)),
        u_neg=CubicTable(th, _u_neg_graphite(th)),
        du_dT_pos=CubicTable(th, _du_dT_pos(th)),
        du_dT_neg=CubicTable(th, _du_dT_neg(th)),
        d_e=CubicTable(ce, _d_e_electrolyte(ce)),
        kappa=CubicTable(ce, _kappa_electrolyte(ce)),
        activity=CubicTable(ce, _activity_factor(ce)),
    )


def default_params(n_r: int = 16, n_x: int = 16,
                   aging: bool = True) -> tuple[BatteryParams, FunctionTable]:
    """The shipped graphite/NMC-class cell with the SOC window attached."""
    funcs = default_function_table()
    params = BatteryParams(
        R_s_pos=10e-6, R_s_neg=10e-6,
        L_pos=100e-6, L_neg=100e-6, L_sep=25e-6,
        D_s_pos=1.0e-13, D_s_neg=3.9e-14,
        eps_e_pos=0.30, eps_e_neg=0.30, eps_e_sep=0.45,
        eps_s_pos=0.50, eps_s_neg=0.60,
        a_pos=3 * 0.50 / 10e-6, a_neg=3 * 0.60 / 10e-6,
        brugg=1.5,
        t_c0=0.38,
        k_pos=1.0e-6, k_neg=2.2e-6,
        alpha=0.5, alpha_a=0.5, alpha_c=0.5,
        R_f_pos=5e-4, R_f_neg=1e-3,
        c_s_max_pos=48000.0, c_s_max_neg=30000.0,
        c_e0=1000.0,
        n_li_solid=2.0,
        rho_jel=0.35, rho_can=0.10,
        cp_jel=1100.0, cp_cans=900.0,
        h_jel_can=8.0, h_can_amb=2.0,
        T_amb=298.15,
        c_EC0=4541.0,
        D_EC=2.0e-18,
        k_SEI=2.0e-19 if aging else 0.0,
        k_LP=1.0e-10 if aging else 0.0,
        alpha_c_SEI=0.65, alpha_a_LP=0.3, alpha_c_LP=0.7,
        U_SEI=0.4,
        c_e_ref=1.0,
        M_SEI=0.162, rho_SEI=1690.0,
        M_Li=6.94e-3, rho_Li=534.0,
        delta_film0=5e-9,
        E_act={
            "D_s_pos": 37.04e3, "D_s_neg": 42.77e3,
            "kappa_eff_pos": 34.70e3, "kappa_eff_neg": 34.70e3,
            "k_pos": 39.57e3, "k_neg": 37.48e3,
            "k_SEI": 60.0e3, "D_EC": 25.0e3, "k_LP": 30.0e3,
        },
        T_ref=298.15,
        ocv_soc0=3.0, ocv_soc100=4.2,
        N_r=n_r, N_x=n_x,
    )
    return attach_soc_window(params, funcs), funcs


# ---------------------------------------------------------------------------
# Parameter file I/O (JSON schema documented in the README)

def params_to_dict(params: BatteryParams, funcs: FunctionTable) -> dict:
    d = asdict(params)
    return {"battery": d, "tables": funcs.as_dict()}


def params_from_dict(d: dict) -> tuple[BatteryParams, FunctionTable]:
    if "battery" not in d or "tables" not in d:
        raise ParameterError("parameter file needs 'battery' and 'tables' sections")
    funcs = FunctionTable.from_dict(d["tables"])
    known = set(BatteryParams.__dataclass_fields__)
    extra = set(d["battery"]) - known
    if extra:
        raise ParameterError(f"unknown battery parameter keys: {sorted(extra)}")
    try:
        params = BatteryParams(**d["battery"])
    except TypeError as e:
        raise ParameterError(f"battery section incomplete: {e}") from e
    if not params.has_window:
        attach_soc_window(params, funcs)
    return params, funcs


def save_params(path, params: BatteryParams, funcs: FunctionTable, extra: dict = None):
    doc = params_to_dict(params, funcs)
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def load_params(path) -> tuple[BatteryParams, FunctionTable]:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ParameterError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    return params_from_dict(doc)
