"""Goal-conditioned charging MDP around the cell simulator.

One episode charges from a fixed equilibrium start toward a goal SOC within
a user-chosen charge time. Actions are normalized current densities held
constant over 5 s control intervals. The reward is sparse: a single terminal
value combining the episode's film-formation integral with a count of
safety-condition violations, plus a simulated constant-current completion
tail that takes the cell exactly to the goal SOC when an episode ends on a
rate-feasibility boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .battery import BatteryState, Simulator, StepOutput
from .errors import ParameterError, SimulationBlowupError

TIME_UP = "time_up"
MAX_RATE = "max_rate_boundary"
MIN_RATE = "min_rate_boundary"
NONE = "none"

LP_TOL = 1e-12  # mol/m^2 tolerance on the interval-integrated plating flux


def safety_indicator(cfg: "EnvConfig", I: float, out) -> int:
    """Interval safety flag shared by the environment and the profile scorer:
    1 iff current, voltage, or jelly-roll temperature left its closed range,
    or the interval's plating-flux integral went negative beyond tolerance."""
    if I < cfg.I_min or I > cfg.I_max:
        return 1
    if out.V < cfg.V_min or out.V > cfg.V_max:
        return 1
    if out.T_jel < cfg.T_min or out.T_jel > cfg.T_max:
        return 1
    if out.J_LP_int < -LP_TOL:
        return 1
    return 0


@dataclass
class EnvConfig:
    dt: float = 5.0
    window_l: int = 12
    soc_given: float = 0.8
    t_given_range: tuple = (720.0, 7200.0)
    I_min: float = 0.0
    I_max: float = 170.53339501662288      # 5x the shipped cell's 1C rate
    V_min: float = 2.8
    V_max: float = 4.5
    T_min: float = 273.15
    T_max: float = 273.15 + 45.0
    omega_SEI: float = 2.0e10
    omega_SAF: float = 1.0e2
    ocv0: float = 3.3
    T0: float = 298.15
    T_window_source: str = "jel"   # which lumped temperature feeds the window

    def __post_init__(self):
        if self.T_window_source not in ("jel", "can"):
            raise ParameterError("T_window_source must be 'jel' or 'can'")
        if not self.I_min < self.I_max:
            raise ParameterError("need I_min < I_max")
        if not self.V_min < self.V_max:
            raise ParameterError("need V_min < V_max")
        if not self.T_min < self.T_max:
            raise ParameterError("need T_min < T_max")
        if not 0.0 < self.soc_given <= 1.0:
            raise ParameterError("soc_given must be in (0, 1]")
        lo, hi = self.t_given_range
        if not 0.0 < lo < hi:
            raise ParameterError("t_given_range must be positive and ordered")
        if self.window_l < 1:
            raise ParameterError("window length must be >= 1")
        if self.dt <= 0.0:
            raise ParameterError("dt must be positive")

    @classmethod
    def for_cell(cls, sim: Simulator, **overrides) -> "EnvConfig":
        """Defaults with the current range tied to the cell's 1C rate."""
        overrides.setdefault("I_max", 5.0 * sim.i_1c)
        return cls(**overrides)

    def as_dict(self):
        d = asdict(self)
        d["t_given_range"] = list(self.t_given_range)
        return d


@dataclass
class Observation:
    """Policy input: goal fields, sliding measurement windows, current SOC."""

    t_remaining: float
    soc_given: float
    I_window: np.ndarray
    V_window: np.ndarray
    T_window: np.ndarray
    soc_now: float

    def to_vector(self, cfg: EnvConfig) -> np.ndarray:
        """Affine-normalize every field to about [-1, 1] for the networks."""
        t_hi = cfg.t_given_range[1]
        parts = [
            2.0 * self.t_remaining / t_hi - 1.0,
            2.0 * self.soc_given - 1.0,
            2.0 * (self.I_window - cfg.I_min) / (cfg.I_max - cfg.I_min) - 1.0,
            2.0 * (self.V_window - cfg.V_min) / (cfg.V_max - cfg.V_min) - 1.0,
            2.0 * (self.T_window - cfg.T_min) / (cfg.T_max - cfg.T_min) - 1.0,
            2.0 * self.soc_now - 1.0,
        ]
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=np.float64))
                               for p in parts])


def observation_dim(cfg: EnvConfig) -> int:
    return 3 * cfg.window_l + 3


@dataclass
class IntervalRecord:
    """One control interval of an episode (or of a completion tail)."""

    k: int
    t: float
    a: float
    I: float
    V: float
    soc: float
    T_jel: float
    T_can: float
    J_SEI_int: float
    J_LP_int: float
    violation: int
    dur: float


@dataclass
class StepResult:
    obs: Observation
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class ChargeEnv:
    """Single-owner environment; create one per concurrent rollout."""

    def __init__(self, sim: Simulator, config: EnvConfig = None):
        self.sim = sim
        self.config = config if config is not None else EnvConfig.for_cell(sim)
        self.i_1c = sim.i_1c
        self._state: Optional[BatteryState] = None
        self._done = True
        self.records: list[IntervalRecord] = []
        self.tail_records: list[IntervalRecord] = []
        self.cause = NONE
        self.t_given = None
        self.clip_events = 0

    # -- episode control ----------------------------------------------------

    def reset(self, t_given: float) -> Observation:
        cfg = self.config
        lo, hi = cfg.t_given_range
        if not lo <= t_given <= hi:
            raise ParameterError(f"t_given {t_given} outside [{lo}, {hi}]")
        self._state = self.sim.init_equilibrium(cfg.ocv0, cfg.T0)
        self.t_given = float(t_given)
        self.k = 0
        self._done = False
        self.records = []
        self.tail_records = []
        self.cause = NONE
        self.clip_events = 0
        v0 = self.sim.voltage(self._state, 0.0)
        # pre-episode window entries carry the initial-rest values
        t0 = self._state.T_jel if cfg.T_window_source == "jel" else self._state.T_can
        self._I_win = np.zeros(cfg.window_l)
        self._V_win = np.full(cfg.window_l, v0)
        self._T_win = np.full(cfg.window_l, t0)
        return self._observation()

    def _observation(self) -> Observation:
        return Observation(
            t_remaining=self.t_given - self.k * self.config.dt,
            soc_given=self.config.soc_given,
            I_window=self._I_win.copy(),
            V_window=self._V_win.copy(),
            T_window=self._T_win.copy(),
            soc_now=self.sim.soc(self._state),
        )

    # -- pieces of the step contract -----------------------------------------

    def scale_action(self, a: float) -> float:
        """Map a normalized action in [0, 1] onto the current range; values
        outside are clipped and the clip recorded."""
        if a < 0.0 or a > 1.0:
            self.clip_events += 1
            a = min(1.0, max(0.0, a))
        return self.config.I_min + a * (self.config.I_max - self.config.I_min)

    def check_termination(self, soc_now: float, t_remaining: float) -> str:
        cfg = self.config
        need = cfg.soc_given - soc_now
        if t_remaining <= 1e-9:
            return TIME_UP
        if (cfg.I_max / self.i_1c) * t_remaining / 3600.0 <= need:
            return MAX_RATE
        if (cfg.I_min / self.i_1c) * t_remaining / 3600.0 >= need:
            return MIN_RATE
        return NONE

    def safety_indicator(self, I: float, out: StepOutput) -> int:
        """1 iff any safety condition failed during the interval (closed bounds)."""
        return safety_indicator(self.config, I, out)

    def terminal_reward(self, records, tail_records) -> float:
        """Sparse terminal reward from logged intervals plus the tail."""
        cfg = self.config
        sei = sum(r.J_SEI_int for r in records) + sum(r.J_SEI_int for r in tail_records)
        bad = sum(r.violation for r in records) + sum(r.violation for r in tail_records)
        return cfg.omega_SEI * sei - cfg.omega_SAF * bad

    def completion_tail_duration(self, soc_now: float, cause: str) -> tuple[float, float]:
        """(tail current, tail duration in seconds) that coulomb-counts the
        cell from soc_now exactly to the goal SOC."""
        cfg = self.config
        if cause == MAX_RATE:
            I_tail = cfg.I_max
        elif cause == MIN_RATE:
            I_tail = cfg.I_min
        else:
            return 0.0, 0.0
        need = cfg.soc_given - soc_now
        if I_tail <= 0.0 or need <= 0.0:
            return I_tail, 0.0
        return I_tail, 3600.0 * need * self.i_1c / I_tail

    def _simulate_tail(self, cause: str, soc_now: float) -> tuple[list[IntervalRecord], bool]:
        cfg = self.config
        I_tail, t_need = self.completion_tail_duration(soc_now, cause)
        if t_need <= 0.0:
            return [], False
        n_full = int(np.floor(t_need / cfg.dt))
        frac = t_need - n_full * cfg.dt
        durations = [cfg.dt] * n_full + ([frac] if frac > 1e-9 else [])
        state = self._state.copy()
        recs = []
        for j, dur in enumerate(durations):
            try:
                state, out = self.sim.step(state, I_tail, dur)
            except SimulationBlowupError:
                # remaining tail intervals count as violated, film tally stops
                for jj in range(j, len(durations)):
                    recs.append(IntervalRecord(
                        k=self.k + 1 + jj, t=self.k * cfg.dt + sum(durations[:jj + 1]),
                        a=np.nan, I=I_tail, V=np.nan, soc=np.nan,
                        T_jel=np.nan, T_can=np.nan, J_SEI_int=0.0, J_LP_int=0.0,
                        violation=1, dur=durations[jj]))
                return recs, True
            recs.append(IntervalRecord(
                k=self.k + 1 + j, t=self.k * cfg.dt + sum(durations[:j + 1]),
                a=np.nan, I=I_tail, V=out.V, soc=out.soc,
                T_jel=out.T_jel, T_can=out.T_can,
                J_SEI_int=out.J_SEI_int, J_LP_int=out.J_LP_int,
                violation=self.safety_indicator(I_tail, out), dur=dur))
        return recs, False

    # -- the transition ------------------------------------------------------

    def step(self, action: float) -> StepResult:
        if self._done:
            raise RuntimeError("episode finished; call reset() first")
        cfg = self.config
        I = self.scale_action(float(action))
        try:
            self._state, out = self.sim.step(self._state, I, cfg.dt)
        except SimulationBlowupError as e:
            return self._terminate_blown_up(I, float(action), str(e))
        self.k += 1
        t_remaining = self.t_given - self.k * cfg.dt
        violation = self.safety_indicator(I, out)
        t_sample = out.T_jel if cfg.T_window_source == "jel" else out.T_can
        self._push_window(I, out.V, t_sample)
        self.records.append(IntervalRecord(
            k=self.k, t=self.k * cfg.dt, a=float(action), I=I, V=out.V,
            soc=out.soc, T_jel=out.T_jel, T_can=out.T_can,
            J_SEI_int=out.J_SEI_int, J_LP_int=out.J_LP_int,
            violation=violation, dur=cfg.dt))

        cause = self.check_termination(out.soc, t_remaining)
        obs = self._observation()
        info = {
            "termination_cause": cause,
            "safety_violation": bool(violation),
            "J_SEI_int": out.J_SEI_int,
            "J_LP_int": out.J_LP_int,
            "I": I, "V": out.V, "soc": out.soc, "T_jel": out.T_jel,
        }
        if cause == NONE:
            return StepResult(obs=obs, reward=0.0, done=False, info=info)

        self.cause = cause
        self._done = True
        self.tail_records, tail_blowup = self._simulate_tail(cause, out.soc)
        reward = self.terminal_reward(self.records, self.tail_records)
        info["tail_steps"] = len(self.tail_records)
        info["tail_blowup"] = tail_blowup
        info["soc_final"] = (self.tail_records[-1].soc if self.tail_records
                             else out.soc)
        info["elapsed_with_tail"] = (self.k * cfg.dt
                                     + sum(r.dur for r in self.tail_records))
        return StepResult(obs=obs, reward=reward, done=True, info=info)

    def _terminate_blown_up(self, I, action, msg) -> StepResult:
        """A diverged simulation ends the episode with the worst-case safety
        penalty for every interval that would have remained."""
        cfg = self.config
        self.k += 1
        self._push_window(I, np.nan, np.nan)
        remaining = max(0, int(np.ceil(self.t_given / cfg.dt)) - self.k + 1)
        self.records.append(IntervalRecord(
            k=self.k, t=self.k * cfg.dt, a=action, I=I, V=np.nan, soc=np.nan,
            T_jel=np.nan, T_can=np.nan, J_SEI_int=0.0, J_LP_int=0.0,
            violation=remaining, dur=cfg.dt))
        self.cause = TIME_UP
        self._done = True
        self.tail_records = []
        reward = self.terminal_reward(self.records, [])
        obs = self._observation()
        return StepResult(obs=obs, reward=reward, done=True, info={
            "termination_cause": TIME_UP, "safety_violation": True,
            "blowup": msg, "J_SEI_int": 0.0, "J_LP_int": 0.0,
            "I": I, "V": np.nan, "soc": np.nan, "T_jel": np.nan,
            "tail_steps": 0, "tail_blowup": False, "soc_final": np.nan,
            "elapsed_with_tail": self.k * cfg.dt,
        })

    def _push_window(self, I, V, T):
        self._I_win = np.roll(self._I_win, -1)
        self._V_win = np.roll(self._V_win, -1)
        self._T_win = np.roll(self._T_win, -1)
        self._I_win[-1] = I
        self._V_win[-1] = V
        self._T_win[-1] = T

    # -- goal relabeling support ----------------------------------------------

    def achieved_goal(self) -> tuple[float, float]:
        """(elapsed time incl. tail, SOC incl. tail) of the finished episode."""
        if not self._done or not self.records:
            raise RuntimeError("no finished episode to read the achieved goal from")
        elapsed = self.k * self.config.dt + sum(r.dur for r in self.tail_records)
        soc = self.tail_records[-1].soc if self.tail_records else self.records[-1].soc
        return elapsed, soc

    def reward_for_goal(self, soc_given_new: float) -> float:
        """Terminal reward of the logged episode under a relabeled goal SOC."""
        if not self._done or not self.records:
            raise RuntimeError("no finished episode to rescore")
        if self.cause == TIME_UP:
            return self.terminal_reward(self.records, [])
        I_tail = self.config.I_max if self.cause == MAX_RATE else self.config.I_min
        need = soc_given_new - self.records[-1].soc
        if I_tail <= 0.0 or need <= 0.0:
            return self.terminal_reward(self.records, [])
        t_need = 3600.0 * need * self.i_1c / I_tail
        used, acc = [], 0.0
        for r in self.tail_records:
            if acc + 1e-9 >= t_need:
                break
            used.append(r)
            acc += r.dur
        return self.terminal_reward(self.records, used)
