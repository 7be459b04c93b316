"""Acceptance gate: one test per criterion, run with `pytest -v -s`.

Each criterion prints a `[PASS]`/`[REPORTED]` line. The suite is dominated
by the desk-scale training run (criteria 9 and 10, ~45-60 min on a 2-core
box); everything else finishes in a few minutes.
"""
import os
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from chargeopt import (SacAgent, SacConfig, SacTrainer, Simulator,
                       default_params, i_1crate)
from chargeopt.baselines import (PiecewiseProfile, cc_controller,
                                 cccv_controller, evaluate_profile)
from chargeopt.env import ChargeEnv, EnvConfig
from chargeopt.nets import (log_prob_of_action, sample_squashed_with_grads,
                            split_policy_output, squash)
from chargeopt.runio import COMPARISON_COLUMNS, write_csv
from chargeopt.sac import ReplayBuffer, Transition

ARTIFACT_DIR = "tests_output"

# criterion 9/10 training setup (reduced grids, recorded in configs/desk_cell.json)
DESK_SAC = dict(updates_per_episode=120, eval_every=60, eval_episodes=30,
                episodes=900, batch_size=128, min_buffer=2000,
                buffer_capacity=400_000, her_relabels=1, seed=0)


def report(line):
    print(f"\n{line}")


@pytest.fixture(scope="module")
def full_cell():
    params, funcs = default_params(aging=False)
    return Simulator(params, funcs)


@pytest.fixture(scope="module")
def aging_cell():
    params, funcs = default_params()
    return Simulator(params, funcs)


@pytest.fixture(scope="module")
def desk_env():
    params, funcs = default_params(n_r=8, n_x=8)
    sim = Simulator(params, funcs)
    return ChargeEnv(sim, EnvConfig.for_cell(sim))


@pytest.fixture(scope="module")
def trained(desk_env):
    """Criterion 9's desk-scale training run; shared with criterion 10."""
    trainer = SacTrainer(desk_env, SacConfig(**DESK_SAC))
    t0 = time.monotonic()
    rows = trainer.train()
    wall = time.monotonic() - t0
    return trainer, rows, wall


def test_criterion_01_lithium_conservation(full_cell):
    """Side reactions disabled, 2 h of 1C operation (charge then discharge,
    since a monotone 2 h 1C charge would leave the SOC window by the
    definition of 1C): solid change matches the coulomb count to 1e-5,
    electrolyte drift < 1e-6/h, runtime < 10 s."""
    sim = full_cell
    st = sim.init_equilibrium(sim.params.ocv_soc0, 298.15)
    sim.step(st, sim.i_1c, 5.0)  # JIT warmup outside the timed window
    n_e0 = sim.electrolyte_lithium(st)

    t0 = time.monotonic()
    for sign in (+1.0, -1.0):
        n_neg0, n_pos0 = sim.solid_lithium(st)
        I = sign * sim.i_1c
        for _ in range(720):
            st, _ = sim.step(st, I, 5.0)
        n_neg1, n_pos1 = sim.solid_lithium(st)
        moved = I * 3600.0 / sim.params.F
        assert n_neg1 - n_neg0 == pytest.approx(moved, rel=1e-5)
        assert n_pos1 - n_pos0 == pytest.approx(-moved, rel=1e-5)
    wall = time.monotonic() - t0

    drift_per_hour = abs(sim.electrolyte_lithium(st) - n_e0) / n_e0 / 2.0
    assert drift_per_hour < 1e-6
    assert wall < 10.0
    report(f"[PASS] criterion 1: solid lithium matches coulomb count (rel 1e-5), "
           f"electrolyte drift {drift_per_hour:.2e}/h, runtime {wall:.1f}s < 10s")


def test_criterion_02_equilibrium_voltage(aging_cell):
    st = aging_cell.init_equilibrium(3.3, 298.15)
    v = aging_cell.voltage(st, 0.0)
    assert v == pytest.approx(3.300, abs=1e-3)
    report(f"[PASS] criterion 2: V(I=0) after init at 3.3 V = {v:.6f} V (+-1 mV)")


def test_criterion_03_coulomb_counting_soc(full_cell, aging_cell):
    for sim, label in ((full_cell, "aging off"), (aging_cell, "aging on")):
        st = sim.init_equilibrium(3.3, 298.15)
        soc0 = sim.soc(st)
        I = 1.5 * sim.i_1c
        t = 900.0
        for _ in range(int(t / 5.0)):
            st, out = sim.step(st, I, 5.0)
        counted = I * t / (3600.0 * sim.i_1c)
        achieved = out.soc - soc0
        if label == "aging off":
            assert achieved == pytest.approx(counted, abs=1e-3)
        assert achieved <= counted + 1e-3
    report("[PASS] criterion 3: CC segment SOC matches I*t/(3600*I_1C) within "
           "1e-3 (aging off); achieved <= counted (aging on)")


def test_criterion_04_convergence_order():
    t0 = time.monotonic()
    # time refinement at fixed grid: first-order substepping
    params, funcs = default_params(aging=False)
    sim = Simulator(params, funcs)
    st0 = sim.init_equilibrium(3.3, 298.15)
    base = sim.stable_substeps(st0, 5.0)
    v_end = {}
    for mult in (1, 2, 4, 8):
        st = st0.copy()
        for _ in range(180):  # 15 min at 1C
            st, out = sim.step(st, sim.i_1c, 5.0, n_sub=base * mult)
        v_end[mult] = out.V
    e1 = abs(v_end[1] - v_end[8])
    e2 = abs(v_end[2] - v_end[8])
    e4 = abs(v_end[4] - v_end[8])
    assert e1 > e2 > e4 > 0.0
    order_t = np.log2(e1 / e2)

    # grid refinement: second-order finite volumes
    v_grid = {}
    for n in (4, 8, 16, 24):
        p, f = default_params(n_r=n, n_x=n, aging=False)
        s = Simulator(p, f)
        st = s.init_equilibrium(3.3, 298.15)
        for _ in range(180):
            st, out = s.step(st, s.i_1c, 5.0)
        v_grid[n] = out.V
    g1 = abs(v_grid[4] - v_grid[24])
    g2 = abs(v_grid[8] - v_grid[24])
    g3 = abs(v_grid[16] - v_grid[24])
    assert g1 > g2 > g3 > 0.0
    order_x = np.log2(g1 / g2)
    wall = time.monotonic() - t0
    assert wall < 60.0
    assert 0.7 < order_t < 1.6      # documented: first order in time
    assert 1.4 < order_x < 3.0      # documented: second order in space
    report(f"[PASS] criterion 4: monotone refinement; measured orders "
           f"time~{order_t:.2f} (doc 1), grid~{order_x:.2f} (doc 2), "
           f"runtime {wall:.0f}s < 60s")


# ---------------------------------------------------------------------------
# criterion 5 helpers

H_FD = 1e-5
REL_TOL_FD = 1e-4


def _relu_masks(net, x):
    _, cache = net.forward_cached(x)
    return [c > 0 for c in cache[1:-1]]


def _fd_check(param_arrays, objective, masks_fn, analytic, rng, n_coords=4):
    """Central-difference check on sampled coordinates, skipping those whose
    perturbation flips a rectifier mask (the loss is nonsmooth there)."""
    checked = 0
    for p, g in zip(param_arrays, analytic):
        for fi in rng.choice(p.size, size=min(n_coords, p.size), replace=False):
            idx = np.unravel_index(fi, p.shape)
            orig = p[idx]
            p[idx] = orig + H_FD
            jp, mp = objective(), masks_fn()
            p[idx] = orig - H_FD
            jm, mm = objective(), masks_fn()
            p[idx] = orig
            if any(not np.array_equal(a, b) for a, b in zip(mp, mm)):
                continue
            fd = (jp - jm) / (2 * H_FD)
            denom = max(abs(g[idx]), abs(fd))
            if denom < 1e-10:
                continue
            assert abs(g[idx] - fd) / denom < REL_TOL_FD, \
                f"rel err {abs(g[idx]-fd)/denom:.2e} at {idx}"
            checked += 1
    assert checked > 0


def _grad_checks_for_agent(agent, batch, rng):
    cfg = agent.config
    B = batch["s"].shape[0]

    # value loss: target frozen at the current policy/Q
    mu, raw = split_policy_output(agent.nets.policy.forward(batch["s"]))
    eps_v = rng.standard_normal(B)
    a_v, logp_v, _ = sample_squashed_with_grads(mu, raw, eps_v)
    target_v = agent.nets.q.forward(np.column_stack([batch["s"], a_v]))[:, 0] \
        - cfg.entropy_scale * logp_v

    def j_v():
        v = agent.nets.v.forward(batch["s"])[:, 0]
        return float(0.5 * np.mean((v - target_v) ** 2))

    v_out, v_cache = agent.nets.v.forward_cached(batch["s"])
    resid = v_out[:, 0] - target_v
    g_v, _ = agent.nets.v.backward(v_cache, (resid / B).reshape(-1, 1))
    _fd_check(agent.nets.v.parameters(), lambda: (j_v(), None)[0],
              lambda: _relu_masks(agent.nets.v, batch["s"]),
              g_v, rng)

    # Q loss: bootstrap target frozen at the target-value net
    target_q = batch["r"] + cfg.gamma * (1 - batch["done"]) * \
        agent.nets.v_target.forward(batch["s2"])[:, 0]
    x_q = np.column_stack([batch["s"], batch["a"]])

    def j_q():
        q = agent.nets.q.forward(x_q)[:, 0]
        return float(0.5 * np.mean((q - target_q) ** 2))

    q_out, q_cache = agent.nets.q.forward_cached(x_q)
    resid_q = q_out[:, 0] - target_q
    g_q, _ = agent.nets.q.backward(q_cache, (resid_q / B).reshape(-1, 1))
    _fd_check(agent.nets.q.parameters(), lambda: (j_q(), None)[0],
              lambda: _relu_masks(agent.nets.q, x_q),
              g_q, rng)

    # policy loss: reparameterized action, epsilon frozen
    eps_pi = rng.standard_normal(B)

    def pi_parts():
        out = agent.nets.policy.forward(batch["s"])
        mu_, raw_ = split_policy_output(out)
        a_, logp_, _ = sample_squashed_with_grads(mu_, raw_, eps_pi)
        x = np.column_stack([batch["s"], a_])
        q_ = agent.nets.q.forward(x)[:, 0]
        masks = (_relu_masks(agent.nets.policy, batch["s"])
                 + _relu_masks(agent.nets.q, x))
        return float(np.mean(cfg.entropy_scale * logp_ - q_)), masks

    out, cache = agent.nets.policy.forward_cached(batch["s"])
    mu_, raw_ = split_policy_output(out)
    a_, logp_, gparts = sample_squashed_with_grads(mu_, raw_, eps_pi)
    x = np.column_stack([batch["s"], a_])
    q_, q_cache2 = agent.nets.q.forward_cached(x)
    _, gx = agent.nets.q.backward(q_cache2, np.ones((B, 1)))
    dq_da = gx[:, -1]
    d_mu = (cfg.entropy_scale * gparts["dlogp_dmu"] - dq_da * gparts["da_dmu"]) / B
    d_raw = (cfg.entropy_scale * gparts["dlogp_dlogstd"]
             - dq_da * gparts["da_dlogstd"]) / B
    g_pi, _ = agent.nets.policy.backward(cache, np.stack([d_mu, d_raw], axis=1))
    _fd_check(policy_params(agent), lambda: pi_parts()[0],
              lambda: pi_parts()[1], g_pi, rng)


def policy_params(agent):
    return agent.nets.policy.parameters()


def test_criterion_05_gradient_validation(desk_env):
    cfg = SacConfig(batch_size=64, min_buffer=64, buffer_capacity=50_000, seed=11)
    trainer = SacTrainer(desk_env, cfg)
    for ep in range(2):
        rng = trainer._episode_rng(ep)
        e = trainer.collect_episode(float(rng.uniform(720, 3600)), rng, ep)
        trainer.buffer.extend(e.transitions)
    rng = np.random.default_rng(101)
    batch = trainer.buffer.sample(8, rng)
    _grad_checks_for_agent(trainer.agent, batch, rng)     # at initialization
    trainer.run_updates(100, rng)
    batch = trainer.buffer.sample(8, rng)
    _grad_checks_for_agent(trainer.agent, batch, rng)     # after 100 updates
    report("[PASS] criterion 5: finite-difference agreement (rel err < 1e-4, "
           "h=1e-5, kink-adjacent coords skipped) for policy/Q/value losses "
           "at init and after 100 updates")


def test_criterion_06_squashed_gaussian_normalization():
    rng = np.random.default_rng(7)
    grid = squash(np.linspace(-18.0, 18.0, 8001))
    worst = 0.0
    for _ in range(100):
        mu = rng.uniform(-2.5, 2.5)
        raw = rng.uniform(-2.5, 0.7)
        dens = np.exp(log_prob_of_action(mu, raw, grid))
        worst = max(worst, abs(np.trapezoid(dens, grid) - 1.0))
    assert worst < 1e-3
    report(f"[PASS] criterion 6: density quadrature = 1 within {worst:.1e} "
           "(tol 1e-3) for 100 random heads")


def test_criterion_07_bandit_sanity():
    t0 = time.monotonic()
    a_star = 0.6
    cfg = SacConfig(hidden_layers=(64, 64), lr=1e-3, batch_size=64,
                    min_buffer=64, buffer_capacity=100_000, tau=0.01,
                    gamma=0.99, seed=5)
    rng = np.random.default_rng(5)
    agent = SacAgent(1, cfg, rng)
    buf = ReplayBuffer(cfg.buffer_capacity, 1)
    s = np.zeros(1)
    for _ in range(2500):
        for _ in range(4):
            a = agent.act(s, rng)
            r = -50.0 * (a - a_star) ** 2
            buf.push(Transition(s, a, r, s, True, 0, 0, 0.0, 0.0))
        batch = buf.sample(cfg.batch_size, rng)
        agent.update_value(batch, rng)
        agent.update_q(batch)
        agent.update_policy(batch, rng)
        agent.soft_update_target()
    mean_action = agent.act(s, rng=None)
    wall = time.monotonic() - t0
    assert wall < 120.0
    assert abs(mean_action - a_star) < 1e-2
    report(f"[PASS] criterion 7: bandit mean action {mean_action:.4f} vs "
           f"argmax {a_star} (tol 1e-2) in {wall:.0f}s < 120s")


def test_criterion_08_goal_attainment(desk_env):
    env = desk_env
    rng = np.random.default_rng(88)
    one_interval = (env.config.I_max / env.i_1c) * env.config.dt / 3600.0
    worst = 0.0
    for _ in range(100):
        t_given = float(rng.uniform(*env.config.t_given_range))
        env.reset(t_given)
        while True:
            res = env.step(float(rng.uniform(0.0, 1.0)))
            if res.done:
                break
        gap = abs(res.info["soc_final"] - env.config.soc_given)
        worst = max(worst, gap)
        assert gap <= one_interval
    report(f"[PASS] criterion 8: 100 random-action episodes end at SOC "
           f"{env.config.soc_given} within one-interval bound "
           f"{one_interval:.4f} (worst {worst:.4f})")


def test_criterion_09_desk_scale_training_trend(trained):
    trainer, rows, wall = trained
    means = [r["eval_mean"] for r in rows]
    rho, p_two = spearmanr(np.arange(len(means)), means)
    p_one = p_two / 2.0 if rho > 0 else 1.0 - p_two / 2.0
    print(f"\n  eval means: {[f'{m:.0f}' for m in means]}")
    print(f"  spearman rho={rho:.3f}, one-sided p={p_one:.4f}, "
          f"training wall {wall/60:.0f} min")
    assert rho > 0.0
    assert p_one < 0.05
    report(f"[PASS] criterion 9: evaluation mean-reward trend rho={rho:.3f} > 0, "
           f"p={p_one:.4f} < 0.05 over {len(means)} evaluation rounds "
           f"({trainer.episode_count} episodes)")


def test_criterion_10_comparative_claim(trained, desk_env):
    trainer, _, _ = trained
    sim = desk_env.sim
    env_cfg = desk_env.config
    soc0 = sim.soc(sim.init_equilibrium(env_cfg.ocv0, env_cfg.T0))
    t_list = np.linspace(env_cfg.t_given_range[0], env_cfg.t_given_range[1], 12)

    rows = []
    sac_le_cc = 0
    sac_viol = cc_viol = cccv_viol = 0
    for t_given in t_list:
        sac = trainer.evaluate_policy([float(t_given)])[0]
        rows.append({"strategy": "sac", "t_given": t_given,
                     "sei_total": sac["sei_total"], "violations": sac["violations"],
                     "peak_T": sac["peak_T"], "peak_V": sac["peak_V"],
                     "terminal_soc": sac["soc_final"], "status": "ok"})
        cc = evaluate_profile(sim, env_cfg,
                              cc_controller(sim, env_cfg, t_given,
                                            env_cfg.soc_given, soc0),
                              t_given, name="cc")
        cccv = evaluate_profile(sim, env_cfg,
                                cccv_controller(sim, env_cfg, t_given,
                                                env_cfg.soc_given, soc0),
                                t_given, name="cccv")
        for m in (cc, cccv):
            rows.append({**m.__dict__, "status": "ok"})
        sac_le_cc += sac["sei_total"] <= cc.sei_total
        sac_viol += sac["violations"]
        cc_viol += cc.violations
        cccv_viol += cccv.violations

    os.makedirs(ARTIFACT_DIR, exist_ok=True)
    csv_path = os.path.join(ARTIFACT_DIR, "acceptance_comparison.csv")
    write_csv(csv_path, COMPARISON_COLUMNS, rows)
    frac = sac_le_cc / len(t_list)
    print(f"\n  SAC sei <= CC on {sac_le_cc}/{len(t_list)} charge times "
          f"({100*frac:.0f}%); violations: sac={sac_viol} cc={cc_viol} "
          f"cccv={cccv_viol}; comparison CSV: {csv_path}")
    met = frac >= 0.6 and sac_viol <= cccv_viol
    if met:
        report(f"[PASS] criterion 10: SEI <= CC in {100*frac:.0f}% >= 60% of "
               f"cases and total violations {sac_viol} <= CC-CV's {cccv_viol}")
    else:
        report(f"[REPORTED] criterion 10 bar unmet (SEI<=CC {100*frac:.0f}%, "
               f"violations sac={sac_viol} vs cccv={cccv_viol}); comparison "
               f"CSV attached at {csv_path}")
    assert len(rows) == 3 * len(t_list)


def test_criterion_11_metric_consistency(desk_env):
    env = desk_env
    sim = env.sim
    env.reset(1800.0)
    rng = np.random.default_rng(6)
    while True:
        if env.step(float(rng.uniform(0.1, 0.9))).done:
            break
    currents = np.array([r.I for r in env.records])
    prof = PiecewiseProfile(currents=currents, dt=env.config.dt)
    metrics = evaluate_profile(sim, env.config, prof,
                               t_given=len(currents) * env.config.dt)
    env_sei = -sum(r.J_SEI_int for r in env.records)
    env_viol = sum(r.violation for r in env.records)
    assert metrics.sei_total == env_sei       # exact equality required
    assert metrics.violations == env_viol
    report("[PASS] criterion 11: identical trajectory scores identically "
           "through the environment and the profile scorer (exact)")
