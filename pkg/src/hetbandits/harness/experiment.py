"""Seeded multi-trial execution, aggregation and file emission."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..analysis import (
    TrialTrace,
    bound_report,
    coaae_regret_bound,
    compute_gaps,
    coucb_regret_bound,
    empirical_regret,
)
from ..env import Instance
from .config import (
    ExperimentConfig,
    base_instance,
    delay_seed,
    instance_seed,
    reward_seed,
    trial_instance,
)
from .kernel import simulate_fast
from .simulate import simulate_reference

log = logging.getLogger(__name__)

CSV_HEADER = "round,regret_mean,regret_std,comm_mean,comm_std"


def run_trial(
    config: ExperimentConfig, trial: int, base: Instance | None = None
) -> tuple[Instance, dict[str, TrialTrace]]:
    """Run every configured algorithm on trial ``trial``'s instance and reward streams.

    All algorithms of a trial share the instance, the delay matrix and the
    per-arm reward streams.
    """
    inst = trial_instance(config, trial, base)
    simulate = simulate_fast if config.engine == "fast" else simulate_reference
    seed = reward_seed(config, trial)
    traces = {}
    for algo in config.algorithms:
        traces[algo] = simulate(
            inst, algo, seed, config.alpha, config.delta(), keep_log=config.keep_message_log
        )
    return inst, traces


@dataclass
class AlgorithmSummary:
    rounds: np.ndarray
    regret_mean: np.ndarray
    regret_std: np.ndarray
    comm_mean: np.ndarray
    comm_std: np.ndarray
    final_regret: list[float]
    final_pseudo_regret: list[float]
    final_messages: list[int]
    per_agent_regret: np.ndarray
    regret_bound: list[float | None]
    violations: list[int]
    in_flight: list[int]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    instance: Instance
    algorithms: dict[str, AlgorithmSummary]
    bounds: list[dict]
    message_logs: dict[tuple[str, int], list[str]] = field(default_factory=dict)

    def summary(self) -> dict:
        algos = {}
        for name, s in self.algorithms.items():
            algos[name] = {
                "final_regret_mean": float(np.mean(s.final_regret)),
                "final_regret_std": _std(np.array(s.final_regret)),
                "final_regret_per_trial": s.final_regret,
                "final_pseudo_regret_per_trial": s.final_pseudo_regret,
                "messages_per_trial": s.final_messages,
                "messages_mean": float(np.mean(s.final_messages)),
                "per_agent_regret_mean": s.per_agent_regret.tolist(),
                "regret_bound_per_trial": s.regret_bound,
                "confidence_violations_per_trial": s.violations,
                "in_flight_per_trial": s.in_flight,
            }
        return {
            "name": self.config.name,
            "num_arms": self.instance.num_arms,
            "num_agents": self.instance.num_agents,
            "horizon": self.config.horizon,
            "trials": self.config.trials,
            "algorithms": algos,
            "bounds": self.bounds[0],
            "bounds_per_trial": [
                {k: b[k] for k in ("coucb_regret_bound", "coaae_regret_bound",
                                   "coucb_comm_bound", "coaae_comm_bound", "lower_bound")}
                for b in self.bounds
            ],
        }


def _std(x: np.ndarray, axis=None):
    # sample standard deviation; zero for a single trial
    n = x.shape[0] if axis == 0 else x.size
    out = np.std(x, axis=axis, ddof=1) if n > 1 else np.zeros_like(np.mean(x, axis=axis))
    return float(out) if np.ndim(out) == 0 else out


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    base = base_instance(config)
    rounds = np.arange(config.stride, config.horizon + 1, config.stride)
    series = {a: {"regret": [], "comm": [], "final": [], "pseudo": [], "msgs": [],
                  "agent": [], "bound": [], "viol": [], "flight": []}
              for a in config.algorithms}
    bounds, logs = [], {}
    for trial in range(config.trials):
        inst, traces = run_trial(config, trial, base)
        profile = compute_gaps(inst)
        bounds.append(bound_report(profile, config.horizon, config.alpha))
        for algo, trace in traces.items():
            reg = empirical_regret(trace, inst, rounds)
            rec = series[algo]
            rec["regret"].append(reg.realized)
            rec["comm"].append(trace.comm_series[rounds])
            rec["final"].append(reg.aggregate)
            rec["pseudo"].append(float(reg.per_agent_pseudo.sum()))
            rec["msgs"].append(trace.messages)
            rec["agent"].append(reg.per_agent_realized)
            rec["viol"].append(trace.violations)
            rec["flight"].append(trace.in_flight)
            if algo == "CO-UCB":
                rec["bound"].append(coucb_regret_bound(profile, config.horizon, config.alpha))
            elif algo == "CO-AAE":
                rec["bound"].append(coaae_regret_bound(profile, config.horizon, config.alpha))
            else:
                rec["bound"].append(None)
            if trace.message_log is not None:
                logs[(algo, trial)] = trace.message_log
        log.info("%s trial %d done", config.name, trial)

    summaries = {}
    for algo, rec in series.items():
        regret = np.array(rec["regret"])
        comm = np.array(rec["comm"], dtype=float)
        summaries[algo] = AlgorithmSummary(
            rounds=rounds,
            regret_mean=regret.mean(axis=0),
            regret_std=_std(regret, axis=0),
            comm_mean=comm.mean(axis=0),
            comm_std=_std(comm, axis=0),
            final_regret=[float(x) for x in rec["final"]],
            final_pseudo_regret=rec["pseudo"],
            final_messages=[int(x) for x in rec["msgs"]],
            per_agent_regret=np.mean(rec["agent"], axis=0),
            regret_bound=rec["bound"],
            violations=[int(x) for x in rec["viol"]],
            in_flight=[int(x) for x in rec["flight"]],
        )
    return ExperimentResult(config, base, summaries, bounds, logs)


def csv_name(algorithm: str) -> str:
    return algorithm.lower().replace("-", "_") + ".csv"


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_results(result: ExperimentResult, directory) -> list[Path]:
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for algo, s in result.algorithms.items():
        lines = [CSV_HEADER]
        for k, r in enumerate(s.rounds):
            lines.append(",".join([
                str(int(r)), _fmt(s.regret_mean[k]), _fmt(s.regret_std[k]),
                _fmt(s.comm_mean[k]), _fmt(s.comm_std[k]),
            ]))
        path = out / csv_name(algo)
        path.write_text("\n".join(lines) + "\n")
        written.append(path)

    cfg = result.config
    files = {
        "summary.json": json.dumps(result.summary(), indent=1, sort_keys=True),
        "config.json": cfg.dumps(),
        "instance.json": result.instance.dumps(),
        "seeds.json": json.dumps({
            "base_seed": cfg.seed,
            "instance_seed": instance_seed(cfg),
            "reward_seeds": [reward_seed(cfg, t) for t in range(cfg.trials)],
            "delay_seeds": [delay_seed(cfg, t) for t in range(cfg.trials)]
            if cfg.delay_mode == "uniform" else [],
        }, indent=1),
    }
    for name, text in files.items():
        (out / name).write_text(text + "\n")
        written.append(out / name)
    for (algo, trial), lines in sorted(result.message_logs.items()):
        path = out / f"messages_{algo.lower().replace('-', '_')}_trial{trial}.jsonl"
        path.write_text("".join(line + "\n" for line in lines))
        written.append(path)
    return written


def replay(directory, out_dir) -> ExperimentResult:
    """Re-run the experiment recorded in ``directory`` and emit into ``out_dir``."""
    config = ExperimentConfig.load(Path(directory) / "config.json")
    result = run_experiment(config)
    emit_results(result, out_dir)
    return result
