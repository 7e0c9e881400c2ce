"""Command line entry point: ``hetbandits run|preset|bounds|replay``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import bound_report, compute_gaps
from .env import Instance
from .harness.config import ConfigError, ExperimentConfig, base_instance, preset
from .harness.experiment import emit_results, replay, run_experiment
from .policies import EmptyCandidateSet

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.trials is not None:
        out["trials"] = args.trials
    if args.horizon is not None:
        out["horizon"] = args.horizon
    if args.algos:
        out["algorithms"] = tuple(a.strip() for a in args.algos.split(",") if a.strip())
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--trials", type=int, help="number of trials")
    p.add_argument("--horizon", type=int, help="number of rounds T")
    p.add_argument("--algos", help="comma-separated subset of CO-UCB,CO-AAE,IND-UCB,IND-AAE")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetbandits", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    _common(p)

    p = sub.add_parser("preset", help="run one of the built-in experiment sweeps")
    p.add_argument("name", choices=["exp1", "exp2", "exp3"])
    _common(p)

    p = sub.add_parser("bounds", help="print closed-form bounds for an instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config")
    src.add_argument("--instance")
    p.add_argument("--horizon", type=int)
    p.add_argument("--alpha", type=float, default=2.5)

    p = sub.add_parser("replay", help="re-run an emitted result directory")
    p.add_argument("directory")
    p.add_argument("--out", help="output directory (default: <directory>/replay)")
    return parser


def _run(configs: list[ExperimentConfig], out: str | None, nested: bool) -> None:
    for cfg in configs:
        target = Path(out or cfg.out_dir)
        if nested:
            target = target / cfg.name
        result = run_experiment(cfg)
        emit_results(result, target)
        for algo, s in result.algorithms.items():
            print(f"{cfg.name} {algo}: regret {s.regret_mean[-1]:.1f} "
                  f"messages {s.comm_mean[-1]:.0f} -> {target}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "run":
            cfg = ExperimentConfig.load(args.config)
            cfg = cfg.replace(**_overrides(args))
            _run([cfg], args.out, nested=False)
        elif args.command == "preset":
            _run(preset(args.name, **_overrides(args)), args.out or "results", nested=True)
        elif args.command == "bounds":
            if args.config:
                cfg = ExperimentConfig.load(args.config)
                if args.horizon:
                    cfg = cfg.replace(horizon=args.horizon)
                inst = base_instance(cfg)
            else:
                inst = Instance.load(args.instance)
            horizon = args.horizon or inst.horizon
            print(json.dumps(bound_report(compute_gaps(inst), horizon, args.alpha), indent=1))
        elif args.command == "replay":
            out = args.out or str(Path(args.directory) / "replay")
            replay(args.directory, out)
            print(f"replayed {args.directory} -> {out}")
    except EmptyCandidateSet as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
