"""Command-line entry point: ``dynasindy {collect,fit,train,eval,compare}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .dyna import LIBRARIES, collect_initial_data
from .experiments import evaluate, learning_curves, make_env, run_training
from .scenarios import KINDS, Scenario
from .signals import ChirpConfig, read_trajectory_csv, write_trajectory_csv
from .sindy import StlsqConfig, fit_sindy, fit_transitions, save_model
from .td3 import load_agent, save_agent


def _config(path) -> ExperimentConfig:
    return load_config(path) if path else ExperimentConfig()


def cmd_collect(args):
    # The chirp is deterministic; the seed is accepted for interface symmetry.
    cfg = _config(args.config)
    chirp = ChirpConfig(t_span=args.tspan, dt=args.dt, scale=cfg.chirp.scale,
                        offset=None if args.tspan != cfg.chirp.t_span else cfg.chirp.offset)
    data = collect_initial_data(make_env(cfg), chirp)
    write_trajectory_csv(args.out, data)
    print(f"wrote {len(data)} samples to {args.out}")


def cmd_fit(args):
    data = read_trajectory_csv(args.data)
    library = LIBRARIES[args.library]()
    cfg = StlsqConfig(lam=args.lam, threshold_mode=args.threshold_mode)
    if args.method == "central":
        model = fit_sindy(data, library, cfg)
    else:
        # Inputs are held between samples, so difference each transition on its own.
        model = fit_transitions(data.states[:-1], data.inputs[:-1], data.states[1:], data.dt,
                                library, cfg)
    save_model(model, args.out)
    print("\n".join(model.equations()))


def cmd_train(args):
    cfg = _config(args.config).with_values(
        rollouts_per_planning=args.rollouts, total_episodes=args.episodes, seed=args.seed,
    )

    def report(episode, log):
        if (episode + 1) % 10 == 0 or episode + 1 == len(log) == cfg.dyna.total_episodes:
            print(f"episode {episode + 1}: reward {log.reward[-1]:.2f} "
                  f"avg {log.avg_reward[-1]:.2f} synthetic {log.synthetic_steps[-1]}")

    agent, log, model = run_training(cfg, callback=report)
    save_agent(agent, args.out)
    log.to_csv(args.log)
    if args.model and model is not None:
        save_model(model, args.model)


def cmd_eval(args):
    cfg = _config(args.config)
    agent = load_agent(args.ckpt)
    data, metrics, _ = evaluate(agent, cfg, Scenario.default(args.scenario))
    write_trajectory_csv(args.out, data)
    metrics.to_csv(args.metrics)
    ss = metrics.steady_state_error
    print(f"steady-state error: azimuth {ss[0]:.4f} rad, pitch {ss[1]:.4f} rad")


def cmd_compare(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in args.configs:
        base = load_config(path)
        logs = []
        for seed in range(args.seeds):
            _, log, _ = run_training(base.with_values(seed=seed))
            logs.append(log)
        curves = learning_curves(logs)
        header = "episode," + ",".join(f"seed{s}" for s in range(args.seeds)) + ",mean"
        table = np.column_stack([np.arange(len(curves)), curves, curves.mean(axis=1)])
        target = out / f"{Path(path).stem}.csv"
        np.savetxt(target, table, delimiter=",", header=header, comments="", fmt="%.12g")
        print(f"wrote {target}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynasindy", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("collect", help="record open-loop chirp data from the plant")
    c.add_argument("--out", required=True)
    c.add_argument("--tspan", type=float, default=10.0)
    c.add_argument("--dt", type=float, default=0.01)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--config")
    c.set_defaults(func=cmd_collect)

    f = sub.add_parser("fit", help="identify a sparse model from a trajectory CSV")
    f.add_argument("--data", required=True)
    f.add_argument("--lambda", dest="lam", type=float, default=0.9)
    f.add_argument("--out", required=True)
    f.add_argument("--library", choices=sorted(LIBRARIES), default="identified")
    f.add_argument("--threshold-mode", default="normalized")
    f.add_argument("--method", choices=("transition", "central"), default="transition",
                   help="derivative estimate: per-transition difference or central differences")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("train", help="train an agent with optional model-based planning")
    t.add_argument("--config")
    t.add_argument("--rollouts", type=int, choices=(0, 400, 800), required=True)
    t.add_argument("--episodes", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--log", required=True)
    t.add_argument("--model", help="also save the final identified model here")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="run a trained agent on a reference scenario")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--scenario", choices=KINDS, default="step")
    e.add_argument("--out", required=True)
    e.add_argument("--metrics", required=True)
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("compare", help="learning curves over seeds for several configs")
    m.add_argument("--configs", nargs="+", required=True)
    m.add_argument("--seeds", type=int, default=5)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
