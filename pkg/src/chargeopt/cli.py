"""Command-line harness: simulate, train, compare, eval.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
A run directory is written by exactly one command invocation and carries a
manifest tying every output file to the hashed configuration and seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .baselines import (ConstantCurrentProfile, PiecewiseProfile,
                        cc_controller, cccv_controller, evaluate_profile)
from .battery import Simulator
from .env import ChargeEnv, EnvConfig
from .errors import (ChargeOptError, CheckpointError, ConfigError,
                     InfeasibleRateError, ParameterError,
                     SimulationBlowupError)
from .nets import load_checkpoint
from .params import default_params, params_from_dict, params_to_dict
from .runio import (COMPARISON_COLUMNS, EPISODE_LOG_KEYS, METRICS_COLUMNS,
                    TRAJECTORY_COLUMNS, RunManifest, append_csv_row,
                    config_hash, write_csv, write_jsonl)
from .sac import SacConfig, SacTrainer

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


def _build_section(cls, section: dict, name: str, **computed):
    known = set(cls.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown key in '{name}' section: {sorted(unknown)[0]}")
    merged = dict(computed)
    merged.update(section)
    if "t_given_range" in merged:
        merged["t_given_range"] = tuple(merged["t_given_range"])
    if "hidden_layers" in merged:
        merged["hidden_layers"] = tuple(merged["hidden_layers"])
    return cls(**merged)


def load_run_config(path):
    """Resolve (params, funcs, env section, sac section) from a config file,
    or the shipped defaults when no file is given."""
    if path is None:
        params, funcs = default_params()
        return params, funcs, {}, {}
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(
                f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    params, funcs = params_from_dict(doc)
    return params, funcs, doc.get("env", {}), doc.get("sac", {})


def resolved_config_doc(params, funcs, env_cfg: EnvConfig, sac_cfg: SacConfig = None):
    doc = params_to_dict(params, funcs)
    doc["env"] = env_cfg.as_dict()
    if sac_cfg is not None:
        doc["sac"] = sac_cfg.as_dict()
    return doc


def _prepare(args, need_sac=False):
    params, funcs, env_sec, sac_sec = load_run_config(args.config)
    sim = Simulator(params, funcs)
    env_cfg = _build_section(EnvConfig, env_sec, "env", I_max=5.0 * sim.i_1c)
    sac_cfg = None
    if need_sac:
        sac_sec = dict(sac_sec)
        if args.seed is not None:
            sac_sec["seed"] = args.seed
        sac_cfg = _build_section(SacConfig, sac_sec, "sac")
    return sim, env_cfg, sac_cfg


def _manifest_for(args, doc):
    return RunManifest(config_hash=config_hash(doc),
                       seed=args.seed if args.seed is not None else 0,
                       code_version=__version__)


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


# ---------------------------------------------------------------------------

def _parse_profile(spec: str, sim, env_cfg, t_given):
    soc0 = sim.soc(sim.init_equilibrium(env_cfg.ocv0, env_cfg.T0))
    if spec.startswith("const:"):
        return ConstantCurrentProfile(I=float(spec.split(":", 1)[1]), name="const")
    if spec.startswith("table:"):
        path = spec.split(":", 1)[1]
        with open(path) as f:
            currents = np.array([float(line.split(",")[-1])
                                 for line in f if line.strip()
                                 and not line.lower().startswith("t")])
        return PiecewiseProfile(currents=currents, dt=env_cfg.dt)
    if spec == "cc":
        return cc_controller(sim, env_cfg, t_given, env_cfg.soc_given, soc0)
    if spec == "cccv":
        return cccv_controller(sim, env_cfg, t_given, env_cfg.soc_given, soc0)
    raise ConfigError(f"unknown profile spec '{spec}' "
                      "(use const:<A/m2>, table:<csv>, cc, or cccv)")


def cmd_simulate(args) -> int:
    sim, env_cfg, _ = _prepare(args)
    out = _outdir(args)
    profile = _parse_profile(args.profile, sim, env_cfg, args.t_given)
    metrics, records = evaluate_profile(sim, env_cfg, profile, args.t_given,
                                        keep_records=True)
    traj_path = os.path.join(out, "trajectory.csv")
    write_csv(traj_path, TRAJECTORY_COLUMNS, records)
    summary_path = os.path.join(out, "summary.json")
    with open(summary_path, "w") as f:
        json.dump({"strategy": metrics.strategy, "t_given": metrics.t_given,
                   "terminal_soc": metrics.terminal_soc,
                   "sei_total": metrics.sei_total,
                   "violations": metrics.violations,
                   "peak_T": metrics.peak_T, "peak_V": metrics.peak_V}, f, indent=1)
    doc = resolved_config_doc(sim.params, sim.funcs, env_cfg)
    manifest = _manifest_for(args, doc)
    manifest.add(traj_path, summary_path)
    manifest.save(os.path.join(out, "manifest.json"))
    print(f"wrote {traj_path} ({len(records)} intervals, "
          f"terminal soc {metrics.terminal_soc:.4f})")
    return 0


def cmd_train(args) -> int:
    sim, env_cfg, sac_cfg = _prepare(args, need_sac=True)
    out = _outdir(args)
    doc = resolved_config_doc(sim.params, sim.funcs, env_cfg, sac_cfg)
    run_hash = config_hash(doc)
    env = ChargeEnv(sim, env_cfg)
    trainer = SacTrainer(env, sac_cfg)

    latest = os.path.join(out, "checkpoint_latest.npz")
    if os.path.exists(latest):
        arrays, meta = load_checkpoint(latest, expected_config_hash=run_hash)
        trainer.load_arrays(arrays)
        print(f"resumed at episode {trainer.episode_count}")

    with open(os.path.join(out, "config.json"), "w") as f:
        json.dump(doc, f, indent=1)
    manifest = _manifest_for(args, doc)
    metrics_path = os.path.join(out, "metrics.csv")

    def on_eval(row):
        append_csv_row(metrics_path, METRICS_COLUMNS, row)
        ck = os.path.join(out, f"checkpoint_ep{row['episode']}.npz")
        trainer.save(ck, run_hash)
        trainer.save(latest, run_hash)
        manifest.add(ck)
        print(f"episode {row['episode']}: eval mean {row['eval_mean']:.2f} "
              f"[{row['eval_min']:.2f}, {row['eval_max']:.2f}]")

    episodes = args.episodes if args.episodes is not None else sac_cfg.episodes
    trainer.train(episodes=episodes, on_eval=on_eval)
    trainer.save(latest, run_hash)
    manifest.add(metrics_path, latest, os.path.join(out, "config.json"))
    manifest.save(os.path.join(out, "manifest.json"))
    print(f"trained to episode {trainer.episode_count}; run dir {out}")
    return 0


def _load_trainer_from_checkpoint(args, sim, env_cfg):
    arrays, meta = load_checkpoint(args.checkpoint)
    sac_sec = meta.get("sac_config", {})
    sac_cfg = _build_section(SacConfig, sac_sec, "sac")
    env = ChargeEnv(sim, env_cfg)
    trainer = SacTrainer(env, sac_cfg)
    if trainer.obs_dim != int(meta.get("obs_dim", trainer.obs_dim)):
        raise CheckpointError(
            f"checkpoint expects observation dim {meta.get('obs_dim')}, "
            f"environment provides {trainer.obs_dim}")
    trainer.load_arrays(arrays)
    return trainer


def _t_given_list(args, env_cfg):
    if args.t_given:
        return [float(x) for x in args.t_given.split(",")]
    lo, hi = env_cfg.t_given_range
    return list(np.linspace(lo, hi, args.n_t_given))


def cmd_compare(args) -> int:
    sim, env_cfg, _ = _prepare(args)
    out = _outdir(args)
    trainer = _load_trainer_from_checkpoint(args, sim, env_cfg)
    t_list = _t_given_list(args, env_cfg)
    soc0 = sim.soc(sim.init_equilibrium(env_cfg.ocv0, env_cfg.T0))

    # fairness: every strategy must share the initial state, dt, and goal
    assert trainer.env.config is env_cfg and trainer.env.sim is sim

    rows, log_paths = [], []
    for t_given in t_list:
        sac_rows = trainer.evaluate_policy([t_given], keep_records=True)
        sac = sac_rows[0]
        rows.append({"strategy": "sac", "t_given": t_given,
                     "sei_total": sac["sei_total"],
                     "violations": sac["violations"],
                     "peak_T": sac["peak_T"], "peak_V": sac["peak_V"],
                     "terminal_soc": sac["soc_final"], "status": "ok"})
        log = os.path.join(out, f"sac_t{int(t_given)}.jsonl")
        write_jsonl(log, [r.__dict__ for r in sac["records"]])
        log_paths.append(log)
        for name, builder in (("cc", cc_controller),
                              ("cccv", cccv_controller)):
            try:
                prof = builder(sim, env_cfg, t_given, env_cfg.soc_given, soc0)
                metrics, recs = evaluate_profile(sim, env_cfg, prof, t_given,
                                                 name=name, keep_records=True)
                rows.append({**metrics.__dict__, "status": "ok"})
                log = os.path.join(out, f"{name}_t{int(t_given)}.jsonl")
                write_jsonl(log, recs)
                log_paths.append(log)
            except InfeasibleRateError as e:
                rows.append({"strategy": name, "t_given": t_given,
                             "sei_total": np.nan, "violations": -1,
                             "peak_T": np.nan, "peak_V": np.nan,
                             "terminal_soc": np.nan, "status": f"infeasible: {e}"})
    report = os.path.join(out, "comparison.csv")
    write_csv(report, COMPARISON_COLUMNS, rows)
    doc = resolved_config_doc(sim.params, sim.funcs, env_cfg)
    manifest = _manifest_for(args, doc)
    manifest.add(report, *log_paths)
    manifest.save(os.path.join(out, "manifest.json"))
    print(f"wrote {report} with {len(rows)} rows")
    return 0


def cmd_eval(args) -> int:
    sim, env_cfg, _ = _prepare(args)
    out = _outdir(args)
    trainer = _load_trainer_from_checkpoint(args, sim, env_cfg)
    t_list = _t_given_list(args, env_cfg)
    rows = trainer.evaluate_policy(t_list, keep_records=True)
    log_paths = []
    for row in rows:
        recs = row.pop("records")
        log = os.path.join(out, f"eval_t{int(row['t_given'])}.jsonl")
        payload = []
        for r in recs:
            d = {k: getattr(r, k) for k in EPISODE_LOG_KEYS if hasattr(r, k)}
            d["reward"] = 0.0
            d["done"] = False
            d["cause"] = ""
            payload.append(d)
        if payload:
            payload[-1]["reward"] = row["reward_sum"]
            payload[-1]["done"] = True
            payload[-1]["cause"] = row["cause"]
        write_jsonl(log, payload)
        log_paths.append(log)
    report = os.path.join(out, "eval.csv")
    write_csv(report, ("t_given", "reward_sum", "sei_total", "violations",
                       "steps", "cause", "soc_final", "peak_T", "peak_V"), rows)
    doc = resolved_config_doc(sim.params, sim.funcs, env_cfg)
    manifest = _manifest_for(args, doc)
    manifest.add(report, *log_paths)
    manifest.save(os.path.join(out, "manifest.json"))
    print(f"wrote {report} ({len(rows)} episodes)")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="chargeopt",
        description="Battery charging optimization: simulate, train, compare.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False, episodes=False):
        sp.add_argument("--config", default=None, help="JSON parameter/config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", required=True, help="run output directory")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)
            sp.add_argument("--t-given", dest="t_given", default=None,
                            help="comma-separated charge times in seconds")
            sp.add_argument("--n-t-given", dest="n_t_given", type=int, default=40)
        if episodes:
            sp.add_argument("--episodes", type=int, default=None)

    sp = sub.add_parser("simulate", help="run one charging profile")
    common(sp)
    sp.add_argument("--profile", required=True,
                    help="const:<A/m2> | table:<csv> | cc | cccv")
    sp.add_argument("--t-given", dest="t_given", type=float, required=True,
                    help="profile duration in seconds")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="train the charging policy")
    common(sp, episodes=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("compare", help="policy vs CC and CC-CV baselines")
    common(sp, checkpoint=True)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("eval", help="evaluate a trained policy")
    common(sp, checkpoint=True)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, ParameterError, CheckpointError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except (SimulationBlowupError, InfeasibleRateError, ChargeOptError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
