"""Soft actor-critic trainer for the charging environment.

Off-policy training with a uniform replay buffer, separate soft Q and soft
state-value networks, a slowly tracking target value network, and a
charging-specific hindsight relabeling step that rewrites episode goals to
the quantities the episode actually achieved.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .env import ChargeEnv, observation_dim
from .errors import ParameterError
from .nets import (Adam, MlpNet, sample_squashed_with_grads, save_checkpoint,
                   split_policy_output, squash)


@dataclass
class SacConfig:
    gamma: float = 0.999
    lr: float = 1e-4
    tau: float = 0.005
    batch_size: int = 256
    updates_per_episode: int = 0      # 0: one gradient update per control step
    entropy_scale: float = 1.0
    her_relabels: int = 1
    eval_every: int = 60
    eval_episodes: int = 30
    buffer_capacity: int = 2_000_000
    hidden_layers: tuple = (256, 256, 256, 256)
    min_buffer: int = 1000
    episodes: int = 600
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ParameterError("gamma must be in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ParameterError("tau must be in (0, 1]")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ParameterError("batch size must fit the buffer")

    def as_dict(self):
        d = asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d


@dataclass
class Transition:
    s: np.ndarray
    a: float
    r: float
    s_next: np.ndarray
    done: bool
    episode_id: int
    step_index: int
    t_given: float
    soc_given: float


class ReplayBuffer:
    """Fixed-capacity ring with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self._s = np.empty((self.capacity, obs_dim))
        self._a = np.empty(self.capacity)
        self._r = np.empty(self.capacity)
        self._s2 = np.empty((self.capacity, obs_dim))
        self._done = np.empty(self.capacity)
        self._write = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, tr: Transition):
        i = self._write
        self._s[i] = tr.s
        self._a[i] = tr.a
        self._r[i] = tr.r
        self._s2[i] = tr.s_next
        self._done[i] = 1.0 if tr.done else 0.0
        self._write = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, transitions):
        for tr in transitions:
            self.push(tr)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self._size, size=batch_size)
        return {
            "s": self._s[idx].copy(),
            "a": self._a[idx].copy(),
            "r": self._r[idx].copy(),
            "s2": self._s2[idx].copy(),
            "done": self._done[idx].copy(),
        }


class SacNetworks:
    """Policy, soft Q, soft value, and the target value network."""

    def __init__(self, obs_dim: int, hidden, rng: np.random.Generator):
        h = list(hidden)
        self.policy = MlpNet([obs_dim] + h + [2], rng, final_scale=0.01)
        self.q = MlpNet([obs_dim + 1] + h + [1], rng)
        self.v = MlpNet([obs_dim] + h + [1], rng)
        self.v_target = MlpNet([obs_dim] + h + [1], rng)
        self.v_target.set_parameters([p.copy() for p in self.v.parameters()])

    def named_arrays(self) -> dict:
        out = {}
        for name in ("policy", "q", "v", "v_target"):
            for i, p in enumerate(getattr(self, name).parameters()):
                out[f"{name}.{i}"] = p
        return out

    def load_named_arrays(self, arrays: dict):
        for name in ("policy", "q", "v", "v_target"):
            net = getattr(self, name)
            net.set_parameters([np.asarray(arrays[f"{name}.{i}"])
                                for i in range(2 * net.n_layers)])


def policy_update_core(policy: MlpNet, opt: Adam, s: np.ndarray,
                       eps: np.ndarray, q_and_grad, entropy_scale: float):
    """One reparameterized policy-gradient step.

    q_and_grad(s, a) must return (q values, dq/da), both shape (B,);
    gradients flow through the action into q but never into eps.
    Returns the scalar objective value before the step.
    """
    B = s.shape[0]
    out, cache = policy.forward_cached(s)
    mu, raw = split_policy_output(out)
    a, logp, g = sample_squashed_with_grads(mu, raw, eps)
    q, dq_da = q_and_grad(s, a)
    loss = float(np.mean(entropy_scale * logp - q))
    d_mu = (entropy_scale * g["dlogp_dmu"] - dq_da * g["da_dmu"]) / B
    d_raw = (entropy_scale * g["dlogp_dlogstd"] - dq_da * g["da_dlogstd"]) / B
    grad_out = np.stack([d_mu, d_raw], axis=1)
    grads, _ = policy.backward(cache, grad_out)
    opt.step(policy.parameters(), grads)
    return loss


class SacAgent:
    """Networks plus the three gradient updates and the target smoothing."""

    def __init__(self, obs_dim: int, config: SacConfig, rng: np.random.Generator):
        self.config = config
        self.obs_dim = obs_dim
        self.nets = SacNetworks(obs_dim, config.hidden_layers, rng)
        self.opt_policy = Adam(self.nets.policy.parameters(), lr=config.lr)
        self.opt_q = Adam(self.nets.q.parameters(), lr=config.lr)
        self.opt_v = Adam(self.nets.v.parameters(), lr=config.lr)

    # -- acting -------------------------------------------------------------

    def act(self, obs_vec: np.ndarray, rng: np.random.Generator = None) -> float:
        """Stochastic action when rng is given, mean action otherwise."""
        out = self.nets.policy.forward(obs_vec.reshape(1, -1))
        mu, raw = split_policy_output(out)
        if rng is None:
            return float(squash(mu[0]))
        eps = rng.standard_normal(1)
        a, _, _ = sample_squashed_with_grads(mu, raw, eps)
        return float(a[0])

    # -- critic updates -------------------------------------------------------

    def update_value(self, batch, rng: np.random.Generator) -> float:
        """Regress V(s) onto Q(s, a~pi) - entropy_scale * log pi(a|s)."""
        s = batch["s"]
        B = s.shape[0]
        out = self.nets.policy.forward(s)
        mu, raw = split_policy_output(out)
        eps = rng.standard_normal(B)
        a, logp, _ = sample_squashed_with_grads(mu, raw, eps)
        q = self.nets.q.forward(np.column_stack([s, a]))[:, 0]
        target = q - self.config.entropy_scale * logp
        v, cache = self.nets.v.forward_cached(s)
        resid = v[:, 0] - target
        loss = float(0.5 * np.mean(resid ** 2))
        grads, _ = self.nets.v.backward(cache, (resid / B).reshape(-1, 1))
        self.opt_v.step(self.nets.v.parameters(), grads)
        return loss

    def update_q(self, batch) -> float:
        """Regress Q(s, a) onto r + gamma * V_target(s'); no bootstrap past
        terminal transitions."""
        s, a, r, s2, done = (batch["s"], batch["a"], batch["r"],
                             batch["s2"], batch["done"])
        B = s.shape[0]
        v2 = self.nets.v_target.forward(s2)[:, 0]
        target = r + self.config.gamma * (1.0 - done) * v2
        q, cache = self.nets.q.forward_cached(np.column_stack([s, a]))
        resid = q[:, 0] - target
        loss = float(0.5 * np.mean(resid ** 2))
        grads, _ = self.nets.q.backward(cache, (resid / B).reshape(-1, 1))
        self.opt_q.step(self.nets.q.parameters(), grads)
        return loss

    def update_policy(self, batch, rng: np.random.Generator) -> float:
        s = batch["s"]
        eps = rng.standard_normal(s.shape[0])

        def q_and_grad(s_in, a_in):
            x = np.column_stack([s_in, a_in])
            q, cache = self.nets.q.forward_cached(x)
            _, gx = self.nets.q.backward(cache, np.ones((s_in.shape[0], 1)))
            return q[:, 0], gx[:, -1]

        return policy_update_core(self.nets.policy, self.opt_policy, s, eps,
                                  q_and_grad, self.config.entropy_scale)

    def soft_update_target(self):
        tau = self.config.tau
        for tgt, src in zip(self.nets.v_target.parameters(),
                            self.nets.v.parameters()):
            tgt *= 1.0 - tau
            tgt += tau * src

    # -- persistence ----------------------------------------------------------

    def state_arrays(self) -> dict:
        arrays = dict(self.nets.named_arrays())
        for tag, opt in (("policy", self.opt_policy), ("q", self.opt_q),
                         ("v", self.opt_v)):
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"opt.{tag}.m.{i}"] = m
                arrays[f"opt.{tag}.v.{i}"] = v
            arrays[f"opt.{tag}.t"] = np.array([opt.t], dtype=np.int64)
        return arrays

    def load_state_arrays(self, arrays: dict):
        self.nets.load_named_arrays(arrays)
        for tag, opt in (("policy", self.opt_policy), ("q", self.opt_q),
                         ("v", self.opt_v)):
            for i in range(len(opt.m)):
                opt.m[i][...] = arrays[f"opt.{tag}.m.{i}"]
                opt.v[i][...] = arrays[f"opt.{tag}.v.{i}"]
            opt.t = int(arrays[f"opt.{tag}.t"][0])


@dataclass
class EpisodeResult:
    transitions: list
    reward_sum: float
    steps: int
    cause: str
    info: dict = field(default_factory=dict)


class SacTrainer:
    """Episode collection, hindsight relabeling, and the update schedule."""

    def __init__(self, env: ChargeEnv, config: SacConfig = None):
        self.env = env
        self.config = config if config is not None else SacConfig()
        self.obs_dim = observation_dim(env.config)
        root = np.random.default_rng([self.config.seed, 0xC0FFEE])
        self.agent = SacAgent(self.obs_dim, self.config, root)
        self.buffer = ReplayBuffer(self.config.buffer_capacity, self.obs_dim)
        self.episode_count = 0
        self._metrics_rows = []

    def _episode_rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, 1, index])

    # -- data generation -------------------------------------------------------

    def collect_episode(self, t_given: float, rng: np.random.Generator,
                        episode_id: int = -1, stochastic: bool = True) -> EpisodeResult:
        env = self.env
        obs = env.reset(t_given)
        vec = obs.to_vector(env.config)
        transitions = []
        reward_sum = 0.0
        step = 0
        while True:
            a = self.agent.act(vec, rng if stochastic else None)
            res = env.step(a)
            vec_next = res.obs.to_vector(env.config)
            transitions.append(Transition(
                s=vec, a=a, r=res.reward, s_next=vec_next, done=res.done,
                episode_id=episode_id, step_index=step,
                t_given=t_given, soc_given=env.config.soc_given))
            reward_sum += res.reward
            vec = vec_next
            step += 1
            if res.done:
                return EpisodeResult(transitions=transitions,
                                     reward_sum=reward_sum, steps=step,
                                     cause=res.info["termination_cause"],
                                     info=res.info)

    def her_relabel(self, episode: EpisodeResult) -> list:
        """Transitions rewritten toward the episode's achieved goal.

        The goal fields become the actually elapsed charge time (including
        the completion tail) and the SOC actually reached; the terminal
        reward is rescored from the logged trajectory under that goal.
        Skipped entirely when the achieved goal leaves the configured ranges.
        """
        env = self.env
        cfg = env.config
        t_ach, soc_ach = env.achieved_goal()
        lo, hi = cfg.t_given_range
        if not (lo <= t_ach <= hi) or not (0.0 < soc_ach <= 1.0):
            return []
        if np.isnan(soc_ach):
            return []
        r_new = env.reward_for_goal(soc_ach)
        t_hi = cfg.t_given_range[1]
        out = []
        for tr in episode.transitions:
            s = tr.s.copy()
            s2 = tr.s_next.copy()
            k = tr.step_index
            s[0] = 2.0 * (t_ach - k * cfg.dt) / t_hi - 1.0
            s2[0] = 2.0 * (t_ach - (k + 1) * cfg.dt) / t_hi - 1.0
            s[1] = 2.0 * soc_ach - 1.0
            s2[1] = 2.0 * soc_ach - 1.0
            out.append(Transition(
                s=s, a=tr.a, r=r_new if tr.done else 0.0, s_next=s2,
                done=tr.done, episode_id=tr.episode_id, step_index=k,
                t_given=t_ach, soc_given=soc_ach))
        return out

    # -- schedule ---------------------------------------------------------------

    def run_updates(self, n_updates: int, rng: np.random.Generator) -> dict:
        sums = {"J_V": 0.0, "J_Q": 0.0, "J_pi": 0.0}
        done = 0
        for _ in range(n_updates):
            if len(self.buffer) < max(self.config.batch_size, self.config.min_buffer):
                break
            batch = self.buffer.sample(self.config.batch_size, rng)
            sums["J_V"] += self.agent.update_value(batch, rng)
            sums["J_Q"] += self.agent.update_q(batch)
            sums["J_pi"] += self.agent.update_policy(batch, rng)
            self.agent.soft_update_target()
            done += 1
        if done:
            for k in sums:
                sums[k] /= done
        sums["n_updates"] = done
        return sums

    def train(self, episodes: int = None, on_eval=None) -> list:
        """Alternate collection and updates; returns the metrics rows.

        on_eval, when given, is called with each metrics row (checkpointing
        hook for the command-line harness).
        """
        cfg = self.config
        total = episodes if episodes is not None else cfg.episodes
        lo, hi = self.env.config.t_given_range
        loss_acc = {"J_V": [], "J_Q": [], "J_pi": []}
        while self.episode_count < total:
            ep = self.episode_count
            rng = self._episode_rng(ep)
            t_given = float(rng.uniform(lo, hi))
            episode = self.collect_episode(t_given, rng, episode_id=ep)
            self.buffer.extend(episode.transitions)
            for _ in range(cfg.her_relabels):
                self.buffer.extend(self.her_relabel(episode))
            n_upd = cfg.updates_per_episode if cfg.updates_per_episode > 0 \
                else episode.steps
            losses = self.run_updates(n_upd, rng)
            for k in loss_acc:
                if losses["n_updates"]:
                    loss_acc[k].append(losses[k])
            self.episode_count += 1
            if self.episode_count % cfg.eval_every == 0:
                row = self._evaluation_row(loss_acc)
                self._metrics_rows.append(row)
                if on_eval is not None:
                    on_eval(row)
                loss_acc = {k: [] for k in loss_acc}
        return self._metrics_rows

    def _evaluation_row(self, loss_acc) -> dict:
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, 2, self.episode_count])
        lo, hi = self.env.config.t_given_range
        t_list = rng.uniform(lo, hi, size=cfg.eval_episodes)
        sums = [m["reward_sum"] for m in self.evaluate_policy(t_list)]
        return {
            "episode": self.episode_count,
            "eval_mean": float(np.mean(sums)),
            "eval_min": float(np.min(sums)),
            "eval_max": float(np.max(sums)),
            "J_V": float(np.mean(loss_acc["J_V"])) if loss_acc["J_V"] else np.nan,
            "J_Q": float(np.mean(loss_acc["J_Q"])) if loss_acc["J_Q"] else np.nan,
            "J_pi": float(np.mean(loss_acc["J_pi"])) if loss_acc["J_pi"] else np.nan,
            "buffer_size": len(self.buffer),
        }

    # -- evaluation ---------------------------------------------------------------

    def evaluate_policy(self, t_given_list, keep_records: bool = False) -> list:
        """Deterministic (mean-action) rollouts; per-episode aging metrics."""
        env = self.env
        out = []
        for t_given in t_given_list:
            episode = self.collect_episode(float(t_given), rng=None,
                                           stochastic=False)
            recs = list(env.records) + list(env.tail_records)
            sei_total = -sum(r.J_SEI_int for r in recs)
            violations = sum(r.violation for r in recs)
            row = {
                "t_given": float(t_given),
                "reward_sum": episode.reward_sum,
                "sei_total": sei_total,
                "violations": int(violations),
                "steps": episode.steps,
                "cause": episode.cause,
                "soc_final": episode.info.get("soc_final", np.nan),
                "peak_T": max((r.T_jel for r in recs if np.isfinite(r.T_jel)),
                              default=np.nan),
                "peak_V": max((r.V for r in recs if np.isfinite(r.V)),
                              default=np.nan),
            }
            if keep_records:
                row["records"] = recs
            out.append(row)
        return out

    # -- persistence ----------------------------------------------------------------

    def save(self, path, config_hash: str, extra_meta: dict = None):
        meta = {"config_hash": config_hash,
                "episode_count": self.episode_count,
                "obs_dim": self.obs_dim,
                "sac_config": self.config.as_dict()}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.state_arrays_with_counter(), meta)

    def state_arrays_with_counter(self) -> dict:
        arrays = self.agent.state_arrays()
        arrays["episode_count"] = np.array([self.episode_count], dtype=np.int64)
        return arrays

    def load_arrays(self, arrays: dict):
        self.agent.load_state_arrays(arrays)
        self.episode_count = int(arrays["episode_count"][0])
