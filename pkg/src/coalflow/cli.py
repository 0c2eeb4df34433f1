"""Command line entry point: ``coalflow {kernel,flow,experiment,report}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import EXPERIMENTS, ConfigInvalid, ExperimentConfig, ReplicaError, run_experiment
from .flow_engine import DIRECT, WHITE_NOISE, FlowConfig, run_flow_batch, write_paths_csv
from .gaussian_field import replica_streams
from .kernels import kernel_from_config, kernel_functionals

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    return data


def _kernel_spec(args, cfg: dict) -> dict:
    spec = dict(cfg.get("kernel", {}))
    if args.id is not None:
        spec["id"] = args.id
    if getattr(args, "epsilon", None) is not None:
        spec["epsilon"] = args.epsilon
    if "id" not in spec:
        raise ConfigInvalid("kernel id missing (use --id or a config 'kernel' entry)")
    return spec


def cmd_kernel(args) -> int:
    cfg = _load_config(args.config)
    try:
        kernel = kernel_from_config(_kernel_spec(args, cfg))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    xs = np.linspace(-args.extent, args.extent, args.points)
    gamma = np.asarray(kernel(xs), dtype=float)
    if args.report:
        fn = kernel_functionals(kernel)
        body = {
            "kernel": kernel.to_config(),
            "C": fn.c_smooth,
            "C_m": fn.c_m,
            "L2": fn.l_squared,
            "extra": fn.extra,
            "grid": [[float(x), float(g)] for x, g in zip(xs, gamma)],
        }
        print(json.dumps(body, indent=2, default=float))
    else:
        for x, g in zip(xs, gamma):
            print(f"{x:.6g} {g:.12g}")
    return EXIT_OK


def cmd_flow(args) -> int:
    cfg = _load_config(args.config)
    try:
        kernel = kernel_from_config(_kernel_spec(args, cfg))
        n = int(args.n if args.n is not None else cfg.get("n", 100))
        starts = tuple(args.starts if args.starts else cfg.get("starts", [0.0, 0.5]))
        scheme = args.scheme or cfg.get("scheme", DIRECT)
        fc = FlowConfig(kernel, n, starts, scheme, h=cfg.get("h"))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 42))
    replicas = args.replicas if args.replicas is not None else int(cfg.get("replicas", 1))
    if replicas < 1:
        raise ConfigInvalid("replicas must be >= 1")
    out = Path(args.out or cfg.get("output_dir", "results"))
    out.mkdir(parents=True, exist_ok=True)
    target = out / "flow.csv"
    pos = run_flow_batch(fc, replica_streams(seed, range(replicas)))
    write_paths_csv(target, pos)
    print(f"wrote {replicas} replica(s) x {len(starts)} particle(s) x {n} steps to {target}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    if args.id is not None:
        cfg["experiment"] = args.id
    for key, val in (("seed", args.seed), ("replicas", args.replicas), ("output_dir", args.out)):
        if val is not None:
            cfg[key] = val
    config = ExperimentConfig.from_dict(cfg)
    report = run_experiment(config, jobs=args.jobs)
    _print_report(json.loads(report.to_json()))
    print(f"wall clock {report.wall_clock:.1f}s; report in {Path(config.output_dir) / (config.experiment + '.json')}")
    return EXIT_OK if report.passed else EXIT_FAILED


def _print_report(body: dict) -> None:
    print(f"{body['experiment']}: {'PASS' if body['passed'] else 'FAIL'}  ({body['claim']})")
    for s in body["statistics"]:
        mark = "pass" if s["pass"] else "FAIL"
        gate = "" if s["gate"] else " (info)"
        print(f"  {mark:4s} {s['name']:<40s} {s['value']:.6g} {s['comparison']} {s['threshold']}{gate}")


def cmd_report(args) -> int:
    code = EXIT_OK
    for path in args.reports:
        try:
            body = json.loads(Path(path).read_text())
            _print_report(body)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigInvalid(f"cannot read report {path}: {exc}") from exc
        if not body["passed"]:
            code = EXIT_FAILED
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coalflow", description="Discrete approximations of Harris and Arratia flows.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")

    k = sub.add_parser("kernel", help="evaluate a kernel and its functionals")
    k.add_argument("--id", choices=["gaussian", "mollified", "indicator", "table"])
    k.add_argument("--epsilon", type=float)
    k.add_argument("--report", action="store_true", help="print JSON with C, C_m, L2 and a grid of values")
    k.add_argument("--extent", type=float, default=3.0)
    k.add_argument("--points", type=int, default=61)
    k.add_argument("--config")
    k.set_defaults(func=cmd_kernel)

    f = sub.add_parser("flow", help="simulate a flow and write paths as CSV")
    common(f)
    f.add_argument("--id", choices=["gaussian", "mollified", "indicator", "table"])
    f.add_argument("--epsilon", type=float)
    f.add_argument("--n", type=int)
    f.add_argument("--starts", type=float, nargs="+")
    f.add_argument("--scheme", choices=[DIRECT, WHITE_NOISE])
    f.set_defaults(func=cmd_flow)

    e = sub.add_parser("experiment", help="run a named experiment")
    common(e)
    e.add_argument("--id", choices=EXPERIMENTS)
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="summarize JSON reports")
    r.add_argument("reports", nargs="+")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"coalflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplicaError as exc:
        print(f"coalflow: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
