"""Command-line entry points.

Subcommands:

* ``demon run``    -- sample one guided (or plain / best-of-N) trajectory and
                      write a step-by-step JSONL plus a summary JSON
* ``demon verify`` -- run a named certification suite and report pass/fail
* ``demon serve``  -- start the interactive steering service
* ``demon judge``  -- start the simulated external-reward endpoint

Outputs are byte-reproducible for a fixed seed: wall-clock timings are only
written when --timing is passed. The environment variable DEMON_SEED, when
set, overrides the configured seed everywhere.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .benchmarks import resolve_model
from .core import ConfigurationError
from .engine import DemonConfig, sample_ensemble, sample_trajectory
from .rewards import ClosedFormSource, ExternalSource, RewardSourceError, parse_reward_spec
from .suites import SUITE_NAMES, run_suite
from .verification import write_reports_csv, write_reports_json


def _env_seed(seed: int) -> int:
    value = os.environ.get("DEMON_SEED")
    return int(value) if value else seed


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demon", description="Reward-guided diffusion sampling toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="sample a trajectory and write JSONL + summary")
    run.add_argument("--model", default="gmm2d", help="bundled model name or JSON path")
    run.add_argument("--reward", default="linear", help="reward spec, e.g. linear:1,0 or @spec.json")
    run.add_argument(
        "--external-reward", default=None, metavar="URL", help="score states via an HTTP endpoint"
    )
    run.add_argument(
        "--demon",
        default="tanh",
        choices=["tanh", "boltzmann", "none", "best_of_n"],
        help="noise weighting rule",
    )
    run.add_argument("--K", type=int, default=16, help="candidate noises per step")
    run.add_argument("--T", type=int, default=64, help="time grid points")
    run.add_argument("--beta", type=float, default=0.1)
    run.add_argument("--rho", type=float, default=7.0)
    run.add_argument("--t-min", type=float, default=0.002)
    run.add_argument("--t-max", type=float, default=14.648)
    run.add_argument("--tau", default="adaptive", help="'adaptive', a float, or 'inf'")
    run.add_argument("--ode-steps", type=int, default=20, help="clean-map steps per estimate")
    run.add_argument("--t-switch", type=float, default=None, help="plain flow below this time")
    run.add_argument("--n", type=int, default=None, help="samples for best_of_n")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="trajectory.jsonl")
    run.add_argument("--summary", default="summary.json")
    run.add_argument("--timing", action="store_true", help="include wall times in outputs")

    verify = sub.add_parser("verify", help="run certification suites")
    verify.add_argument("suite", choices=list(SUITE_NAMES) + ["all"])
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", default="verify_out", help="report directory")
    verify.add_argument("--timing", action="store_true")

    serve = sub.add_parser("serve", help="start the interactive steering service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--snapshot-dir", default=None)

    judge = sub.add_parser("judge", help="start the simulated reward endpoint")
    judge.add_argument("--reward", required=True, help="hidden reward spec")
    judge.add_argument("--dim", type=int, default=2, help="state dimension for bare specs")
    judge.add_argument("--flip-probability", type=float, default=0.0)
    judge.add_argument("--seed", type=int, default=0)
    judge.add_argument("--host", default="127.0.0.1")
    judge.add_argument("--port", type=int, default=8001)
    return parser


def _parse_tau(text: str):
    if text == "adaptive":
        return "adaptive"
    if text == "inf":
        return float("inf")
    return float(text)


def cmd_run(args) -> int:
    model = resolve_model(args.model)
    seed = _env_seed(args.seed)
    cfg = DemonConfig(
        kind="none" if args.demon == "best_of_n" else args.demon,
        n_candidates=1 if args.demon in ("none", "best_of_n") else args.K,
        temperature=_parse_tau(args.tau),
        ode_steps=args.ode_steps,
        beta=args.beta,
        n_steps=args.T,
        rho=args.rho,
        t_min=args.t_min,
        t_max=args.t_max,
        seed=seed,
        t_switch=args.t_switch,
    )
    if args.external_reward:
        source = ExternalSource(args.external_reward, mode="score")
    else:
        source = ClosedFormSource(parse_reward_spec(args.reward, model.dim))

    if args.demon == "best_of_n":
        n = args.n if args.n is not None else cfg.n_candidates * (cfg.n_steps - 1)
        if not hasattr(source, "score_states"):
            raise ConfigurationError("best_of_n needs a state-scoring reward source")
        _, rewards = sample_ensemble(model, cfg, source, n, seed=seed)
        winner = int(np.argmax(rewards))
        child = np.random.SeedSequence(seed).spawn(n)[winner]
        trajectory = sample_trajectory(model, cfg, source, rng=np.random.default_rng(child))
        reward_queries = n
    else:
        trajectory = sample_trajectory(model, cfg, source)
        reward_queries = trajectory.reward_queries

    if not args.timing:
        trajectory.wall_time_ms = None
    lines = trajectory.to_jsonl_lines()
    lines[-1]["reward_queries"] = reward_queries
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")
    summary = {
        "final_reward": trajectory.final_reward,
        "reward_queries": reward_queries,
        "wall_time_ms": trajectory.wall_time_ms,
    }
    with open(args.summary, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out} and {args.summary} (final_reward={trajectory.final_reward})")
    return 0


def cmd_verify(args) -> int:
    seed = _env_seed(args.seed)
    names = list(SUITE_NAMES) if args.suite == "all" else [args.suite]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_passed = True
    for name in names:
        reports = run_suite(name, seed=seed, timing=args.timing)
        write_reports_json(reports, out_dir / f"{name}.json")
        write_reports_csv(reports, out_dir / f"{name}.csv")
        for report in reports:
            status = "PASS" if report.passed else "FAIL"
            print(
                f"[{name}] {report.check_id}: {status} "
                f"(lhs={report.lhs:.6g}, rhs={report.rhs:.6g}, tol={report.tolerance:.6g})"
            )
            all_passed = all_passed and report.passed
    print("verification:", "PASS" if all_passed else "FAIL")
    return 0 if all_passed else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(snapshot_dir=args.snapshot_dir), host=args.host, port=args.port)
    return 0


def cmd_judge(args) -> int:
    import uvicorn

    from .judge import create_judge_app

    spec = parse_reward_spec(args.reward, args.dim)
    app = create_judge_app(spec, flip_probability=args.flip_probability, seed=_env_seed(args.seed))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "verify": cmd_verify, "serve": cmd_serve, "judge": cmd_judge}
    try:
        return handlers[args.command](args)
    except (ConfigurationError, RewardSourceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
