"""Run every named experiment at its default size and print one line per experiment."""
from __future__ import annotations

import argparse
from dataclasses import dataclass, field

from coalflow.experiments import EXPERIMENTS, ExperimentConfig, run_experiment


@dataclass
class RunAll:
    out: str = "results"
    seed: int = 42
    jobs: int | None = None
    only: list = field(default_factory=lambda: list(EXPERIMENTS))


def main(cfg: RunAll) -> int:
    failed = 0
    for exp in cfg.only:
        report = run_experiment(ExperimentConfig.for_experiment(exp, seed=cfg.seed, output_dir=cfg.out), jobs=cfg.jobs)
        gated = [s for s in report.statistics if s["gate"]]
        worst = ", ".join(f"{s['name']}={s['value']:.4g}" for s in gated if not s["pass"]) or "all gated statistics pass"
        print(f"{exp:<24s} {'PASS' if report.passed else 'FAIL'} {report.wall_clock:7.1f}s  {worst}", flush=True)
        failed += not report.passed
    return 1 if failed else 0


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int)
    p.add_argument("--only", nargs="+", choices=EXPERIMENTS, default=list(EXPERIMENTS))
    a = p.parse_args()
    raise SystemExit(main(RunAll(a.out, a.seed, a.jobs, a.only)))
