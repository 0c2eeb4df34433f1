"""Sup-norm convergence rate of the white-noise scheme as a function of the mollifier width.

For a narrow mollifier the Euler step sqrt(C_m / n) stays comparable to epsilon
over the whole n range, and the fitted slope is flatter than -1/2.  Widening the
mollifier moves the same n range into the asymptotic regime.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from coalflow.experiments import ExperimentConfig, run_experiment


@dataclass
class RateStudy:
    epsilons: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0])
    replicas: int = 500
    seed: int = 42
    out: str = "results/rate_study"
    jobs: int | None = None


def main(cfg: RateStudy) -> None:
    rows = []
    for eps in cfg.epsilons:
        out = Path(cfg.out) / f"eps_{eps:g}"
        rc = ExperimentConfig.for_experiment("thm3prime_rate", kernel={"id": "mollified", "epsilon": eps},
                                             replicas=cfg.replicas, seed=cfg.seed, output_dir=str(out))
        stats = {s["name"]: s["value"] for s in run_experiment(rc, jobs=cfg.jobs).statistics}
        rows.append((eps, 3.0 / eps**2, stats["sup_norm_rate_slope"], stats["one_point_sq_rate_slope"]))
        print(f"eps={eps:<5g} C_m={rows[-1][1]:<7.3g} sup slope={rows[-1][2]:.3f} one-point sq slope={rows[-1][3]:.3f}",
              flush=True)
    table = Path(cfg.out) / "slopes.dat"
    table.write_text("# epsilon C_m sup_slope one_point_sq_slope\n"
                     + "".join(f"{e:g} {c:.6g} {s:.6g} {q:.6g}\n" for e, c, s, q in rows))


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--epsilon", type=float, nargs="+", default=[0.5, 1.0, 2.0, 5.0])
    p.add_argument("--replicas", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="results/rate_study")
    p.add_argument("--jobs", type=int)
    a = p.parse_args()
    main(RateStudy(a.epsilon, a.replicas, a.seed, a.out, a.jobs))
