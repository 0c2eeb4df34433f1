"""Named convergence experiments, run over replica blocks with per-replica streams.

Replicas are split into fixed blocks of ``BLOCK`` ids.  Each block is simulated
in one vectorized pass and returns per-replica arrays; blocks are concatenated in
id order and reduced with compensated sums, so a report depends only on the
config and seed, never on how many worker processes were used.
"""
from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import metrics
from .flow_engine import (
    DIRECT,
    WHITE_NOISE,
    FlowConfig,
    cluster_counts,
    lemma1_one_point_batch,
    lemma1_two_point_batch,
    run_flow_batch,
    write_paths_csv,
)
from .gaussian_field import NormalBlock, WindowTooSmall, coarsen, integrate_against, make_slab, noise_window, replica_streams
from .kernels import compute_c, epsilon_schedule, kernel_from_config
from .metrics import MonotonePath, stable_mean
from .reference_flows import arratia_l_point_batch, coalescence_probability, harris_l_point_batch

SCHEMA_VERSION = 1
BLOCK = 250

EXPERIMENTS = (
    "one_point_law",
    "lemma1_equiv",
    "scheme_equiv",
    "thm3_moment_bound",
    "joint_characteristic",
    "thm3prime_rate",
    "arratia_coalescence",
    "arratia_cluster_count",
    "lp_unit",
)


class ConfigInvalid(ValueError):
    pass


class ReplicaError(RuntimeError):
    """A numeric failure inside a replica block, with the block's seed context."""


DEFAULTS = {
    "one_point_law": dict(kernel={"id": "gaussian"}, n=[2000], starts=[0.0], replicas=5000),
    "lemma1_equiv": dict(kernel={"id": "gaussian"}, n=[500], starts=[0.0], replicas=5000,
                         params={"d0": [0.1, 1.0]}),
    "scheme_equiv": dict(kernel={"id": "mollified", "epsilon": 0.2}, n=[256], starts=[0.0, 0.2],
                         replicas=5000, params={"h_ratio": 20}),
    "thm3_moment_bound": dict(kernel={"id": "gaussian"}, n=[50, 200], starts=[0.0, 0.1, 0.5, 1.0],
                              replicas=10_000),
    "joint_characteristic": dict(kernel={"id": "gaussian"}, n=[1000], starts=[0.0, 0.5], replicas=10_000),
    "thm3prime_rate": dict(kernel={"id": "mollified", "epsilon": 0.5}, n=[8, 16, 32, 64, 128],
                           starts=list(np.linspace(0.0, 1.0, 21)), replicas=500,
                           params={"fine_factor": 16, "h_ratio": 20}),
    "arratia_coalescence": dict(kernel={"id": "mollified"}, n=[4096], starts=[0.0, 0.1], replicas=2000,
                                params={"eps_target": 0.02, "merge_tol": 1e-9, "r": 0.05, "h_ratio": 20}),
    "arratia_cluster_count": dict(kernel={"id": "mollified"}, n=[4096], starts=list(np.linspace(0.0, 1.0, 10)),
                                  replicas=2000, params={"eps_target": 0.02, "merge_tol": 1e-9, "h_ratio": 20}),
    "lp_unit": dict(kernel={"id": "gaussian"}, n=[1], starts=[0.0], replicas=1, params={"fixtures": 20}),
}

CLAIMS = {
    "one_point_law": "one-point motion of the interpolated discrete flow is Brownian (Harris flow limit)",
    "lemma1_equiv": "two-point gap of the discrete flow equals the scalar gap chain in law",
    "scheme_equiv": "random-field scheme and white-noise scheme give the same two-point law",
    "thm3_moment_bound": "second-moment bound E(x(u)-x(v))^2 <= e^{2C}(u-v)^2 behind weak compactness",
    "joint_characteristic": "cross-variation of two trajectories has rate Gamma(gap)",
    "thm3prime_rate": "white-noise scheme converges in sup-norm at rate n^{-1/2}",
    "arratia_coalescence": "two trajectories coalesce with the Arratia probability and keep their order",
    "arratia_cluster_count": "cluster counts at t=1 match the Arratia l-point motion",
    "lp_unit": "Levy-Prokhorov distance for monotone maps is computed exactly",
}


@dataclass
class ExperimentConfig:
    experiment: str
    kernel: dict = field(default_factory=dict)
    n: list = field(default_factory=list)
    starts: list = field(default_factory=list)
    replicas: int = 1
    seed: int = 42
    output_dir: str = "results"
    params: dict = field(default_factory=dict)
    csv_replicas: int = 20
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigInvalid(f"unknown experiment {self.experiment!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigInvalid(f"unsupported schema_version {self.schema_version}")
        if int(self.replicas) < 1:
            raise ConfigInvalid("replicas must be >= 1")
        if not self.n or any(int(v) < 1 for v in self.n):
            raise ConfigInvalid("n values must be positive")
        if not self.starts or any(b < a for a, b in zip(self.starts, self.starts[1:])):
            raise ConfigInvalid("starts must be nonempty and sorted")
        if int(self.seed) < 0:
            raise ConfigInvalid("seed must be nonnegative")
        self.replicas = int(self.replicas)
        self.seed = int(self.seed)
        self.n = [int(v) for v in self.n]
        self.starts = [float(s) for s in self.starts]
        try:
            kernel_from_config(self.kernel if self.kernel.get("id") != "mollified" or "epsilon" in self.kernel
                               else {**self.kernel, "epsilon": 1.0})
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigInvalid(str(exc)) from exc

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        if experiment not in DEFAULTS:
            raise ConfigInvalid(f"unknown experiment {experiment!r}")
        base = json.loads(json.dumps(DEFAULTS[experiment]))
        params = {**base.pop("params", {}), **overrides.pop("params", {})}
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(experiment=experiment, params=params, **base)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        exp = data.pop("experiment", None)
        if exp is None:
            raise ConfigInvalid("config needs an 'experiment' field")
        known = {f for f in cls.__dataclass_fields__} - {"experiment"}
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config fields {sorted(unknown)}")
        return cls.for_experiment(exp, **data)


@dataclass
class ExperimentReport:
    config: dict
    statistics: list
    passed: bool
    seed: int
    claim: str
    wall_clock: float = 0.0

    def to_json(self) -> str:
        # wall-clock time is kept out of the JSON so reruns are byte-identical
        body = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.config["experiment"],
            "claim": self.claim,
            "seed": self.seed,
            "config": self.config,
            "statistics": self.statistics,
            "passed": self.passed,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _stat(name, value, threshold, comparison, checks, gate=True):
    value = float(value)
    if comparison == "<":
        ok = value < threshold
    elif comparison == "<=":
        ok = value <= threshold
    elif comparison == "in":
        ok = threshold[0] <= value <= threshold[1]
    elif comparison == "==":
        ok = value == threshold
    elif comparison == "report":
        ok = True
    else:
        raise ValueError(comparison)
    return {
        "name": name,
        "value": value,
        "threshold": threshold,
        "comparison": comparison,
        "pass": bool(ok),
        "gate": gate,
        "checks": checks,
    }


def _kernel(cfg: ExperimentConfig, n: int | None = None):
    kcfg = dict(cfg.kernel)
    if kcfg.get("id") == "mollified" and "epsilon" not in kcfg:
        # eps_n schedule rescaled so that eps equals eps_target at the largest n
        n_max = max(cfg.n)
        scale = cfg.params["eps_target"] / epsilon_schedule(n_max)
        kcfg["epsilon"] = epsilon_schedule(n if n is not None else n_max, scale)
    return kernel_from_config(kcfg)


def _h(cfg, kernel):
    return kernel.eps / cfg.params.get("h_ratio", 20)


# --- per-block simulations -------------------------------------------------------

def _streams(cfg, ids, tag):
    return replica_streams(cfg.seed, ids, tag)


def _block_one_point_law(cfg, ids):
    n = cfg.n[0]
    fc = FlowConfig(_kernel(cfg), n, tuple(cfg.starts), DIRECT)
    pos = run_flow_batch(fc, _streams(cfg, ids, 0))
    return {"terminal": pos[:, -1, 0], "paths": pos}


def _block_lemma1_equiv(cfg, ids):
    n, kernel = cfg.n[0], _kernel(cfg)
    out = {}
    for i, d0 in enumerate(cfg.params["d0"]):
        fc = FlowConfig(kernel, n, (0.0, float(d0)), DIRECT)
        pos = run_flow_batch(fc, _streams(cfg, ids, 10 + i))
        chain = lemma1_two_point_batch(float(d0), kernel, n, _streams(cfg, ids, 20 + i))
        out[f"flow_gap_{i}"] = pos[:, -1, 1] - pos[:, -1, 0]
        out[f"chain_gap_{i}"] = chain[:, -1]
        out[f"flow_first_{i}"] = pos[:, -1, 0]
        if i == 0:
            out["paths"] = pos
    out["one_point_chain"] = lemma1_one_point_batch(0.0, n, _streams(cfg, ids, 30))[:, -1]
    return out


def _block_scheme_equiv(cfg, ids):
    kernel = _kernel(cfg)
    n = cfg.n[0]
    direct = run_flow_batch(FlowConfig(kernel, n, tuple(cfg.starts), DIRECT), _streams(cfg, ids, 0))
    white = run_flow_batch(
        FlowConfig(kernel, n, tuple(cfg.starts), WHITE_NOISE, h=_h(cfg, kernel)), _streams(cfg, ids, 1)
    )
    return {
        "direct_gap": direct[:, -1, -1] - direct[:, -1, 0],
        "white_gap": white[:, -1, -1] - white[:, -1, 0],
        "paths": white,
    }


def _block_thm3_moment_bound(cfg, ids):
    kernel = _kernel(cfg)
    out = {}
    for i, m in enumerate(cfg.n):
        pos = run_flow_batch(FlowConfig(kernel, m, tuple(cfg.starts), DIRECT), _streams(cfg, ids, i))
        term = pos[:, -1, :]
        out[f"sq_{m}"] = (term[:, 1:] - term[:, :1]) ** 2
        if i == 0:
            out["paths"] = pos
    return out


def _block_joint_characteristic(cfg, ids):
    kernel = _kernel(cfg)
    n = cfg.n[0]
    pos = harris_l_point_batch(kernel, cfg.starts[:2], n, _streams(cfg, ids, 0))
    a, b = pos[:, :, 0], pos[:, :, 1]
    gaps = b - a
    cross = metrics.quadratic_covariation(a, b)
    predicted = np.sum(kernel(gaps[:, :-1]), axis=1) / n
    d0 = gaps[:, 0]
    # f(y) = y^2 along the gap: f(y(1)) - f(y(0)) - sum (2 - 2 Gamma(y_k)) / n
    mart = gaps[:, -1] ** 2 - d0**2 - np.sum(kernel.gap_variance(gaps[:, :-1]), axis=1) / n
    return {"cross": cross, "predicted": predicted, "martingale": mart, "paths": pos}


def _coupled_rate_block(cfg, ids, attempt=0):
    kernel = _kernel(cfg)
    ns = sorted(cfg.n)
    ff = int(cfg.params["fine_factor"])
    finest = ff * ns[-1]
    h = _h(cfg, kernel)
    margin = 4.0 * (attempt + 1)
    grid = noise_window(cfg.starts, kernel.eps, h, margin)
    streams = _streams(cfg, ids, 0) if attempt == 0 else [s.child(attempt) for s in _streams(cfg, ids, 0)]
    normals = NormalBlock(streams)
    R, l = len(ids), len(cfg.starts)
    x0 = np.tile(np.asarray(cfg.starts), (R, 1))
    state = {}
    for n in ns:
        if finest % (ff * n):
            raise ConfigInvalid("every fine_factor * n must divide fine_factor * max(n)")
        state[n] = {"coarse": x0.copy(), "fine": x0.copy(), "acc_c": None, "acc_f": None,
                    "per_c": finest // n, "per_f": finest // (ff * n)}
    dt = 1.0 / finest
    for k in range(finest):
        slab = make_slab(grid, dt, normals)
        for n, st in state.items():
            for key, per, pos in (("acc_f", st["per_f"], "fine"), ("acc_c", st["per_c"], "coarse")):
                st[key] = slab if st[key] is None else coarsen([st[key], slab], 2)[0]
                if (k + 1) % per == 0:
                    s = st[key]
                    st[pos] = st[pos] + integrate_against(s, kernel, st[pos])
                    st[key] = None
    out = {}
    for n, st in state.items():
        diff = st["coarse"] - st["fine"]
        out[f"sup_{n}"] = np.max(np.abs(diff), axis=1)
        out[f"one_{n}"] = diff[:, 0] ** 2
        out[f"coarse_{n}"] = st["coarse"]
        out[f"fine_{n}"] = st["fine"]
    return out


def _block_thm3prime_rate(cfg, ids):
    try:
        return _coupled_rate_block(cfg, ids)
    except WindowTooSmall:
        return _coupled_rate_block(cfg, ids, attempt=1)


def _block_arratia_coalescence(cfg, ids):
    kernel = _kernel(cfg)
    n = cfg.n[0]
    fc = FlowConfig(kernel, n, tuple(cfg.starts), WHITE_NOISE, h=_h(cfg, kernel))
    pos = run_flow_batch(fc, _streams(cfg, ids, 0))
    gaps = pos[:, :, 1] - pos[:, :, 0]
    tol = cfg.params["merge_tol"]
    _, oracle_ids = arratia_l_point_batch(cfg.starts, n, _streams(cfg, ids, 1))
    return {
        "merged": (np.abs(gaps[:, -1]) < tol).astype(float),
        "min_gap": np.min(gaps, axis=1),
        "oracle_merged": (oracle_ids[:, -1, 0] == oracle_ids[:, -1, 1]).astype(float),
        "paths": pos,
    }


def _block_arratia_cluster_count(cfg, ids):
    kernel = _kernel(cfg)
    n = cfg.n[0]
    fc = FlowConfig(kernel, n, tuple(cfg.starts), WHITE_NOISE, h=_h(cfg, kernel))
    pos = run_flow_batch(fc, _streams(cfg, ids, 0))
    oracle_pos, oracle_ids = arratia_l_point_batch(cfg.starts, n, _streams(cfg, ids, 1))
    counts = cluster_counts(pos[:, -1, :], cfg.params["merge_tol"])
    oracle = np.array([len(np.unique(row)) for row in oracle_ids[:, -1, :]])
    return {"counts": counts, "oracle_counts": oracle, "terminal": pos[:, -1, :],
            "oracle_terminal": oracle_pos[:, -1, :], "paths": pos, "cluster_ids": oracle_ids}


BLOCKS = {name: globals()[f"_block_{name}"] for name in EXPERIMENTS if name != "lp_unit"}


def _run_block(args):
    name, cfg_dict, ids = args
    cfg = ExperimentConfig(**cfg_dict)
    try:
        out = BLOCKS[name](cfg, ids)
    except ConfigInvalid:
        raise
    except Exception as exc:  # attach replica/seed context
        raise ReplicaError(f"{name}: replicas {ids[0]}..{ids[-1]} seed {cfg.seed}: {exc}") from exc
    keep = ids < cfg.csv_replicas
    for key in ("paths", "cluster_ids"):
        if key in out:
            out[key] = out[key][keep]
    return out


def _run_all_blocks(cfg: ExperimentConfig, jobs: int) -> dict:
    ids = np.arange(cfg.replicas)
    chunks = [ids[i : i + BLOCK] for i in range(0, cfg.replicas, BLOCK)]
    tasks = [(cfg.experiment, asdict(cfg), c) for c in chunks]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_block, tasks))
    else:
        results = [_run_block(t) for t in tasks]
    merged = {}
    for key in results[0]:
        merged[key] = np.concatenate([r[key] for r in results], axis=0)
    return merged


# --- reductions ------------------------------------------------------------------

def _finish_one_point_law(cfg, data, out_dir):
    ks = metrics.ks_statistic(data["terminal"], norm(loc=cfg.starts[0]).cdf)
    return [_stat("ks_terminal_vs_normal", ks, 0.03, "<", "x(u,1) ~ N(u,1)")]


def _finish_lemma1_equiv(cfg, data, out_dir):
    stats = []
    for i, d0 in enumerate(cfg.params["d0"]):
        ks = metrics.ks_two_sample(data[f"flow_gap_{i}"], data[f"chain_gap_{i}"])
        stats.append(_stat(f"ks_gap_d0={d0}", ks, 0.03, "<", "flow gap vs scalar gap chain"))
    ks1 = metrics.ks_two_sample(data["flow_first_0"], data["one_point_chain"])
    thr = metrics.ks_threshold(cfg.replicas, cfg.replicas)
    stats.append(_stat("ks_one_point_vs_chain", ks1, thr, "<", "one-point motion vs Gaussian chain", gate=False))
    return stats


def _finish_scheme_equiv(cfg, data, out_dir):
    ks = metrics.ks_two_sample(data["direct_gap"], data["white_gap"])
    return [_stat("ks_gap_direct_vs_white_noise", ks, 0.05, "<", "random-field vs white-noise scheme")]


def _finish_thm3_moment_bound(cfg, data, out_dir):
    kernel = _kernel(cfg)
    c = compute_c(kernel)
    stats = []
    for m in cfg.n:
        sq = data[f"sq_{m}"]
        for j, v in enumerate(cfg.starts[1:]):
            d = v - cfg.starts[0]
            bound = math.exp(2 * c) * d * d * 1.1
            stats.append(_stat(f"second_moment_m={m}_gap={d:g}", stable_mean(sq[:, j]), bound, "<=",
                               "E(x(u)-x(v))^2 <= e^{2C}(u-v)^2 * 1.1"))
    return stats


def _finish_joint_characteristic(cfg, data, out_dir):
    ratio = stable_mean(data["cross"]) / stable_mean(data["predicted"])
    mart = data["martingale"]
    se = float(np.std(mart, ddof=1)) / math.sqrt(len(mart))
    z = stable_mean(mart) / se
    return [
        _stat("cross_variation_ratio", ratio, [0.9, 1.1], "in", "d<x(u1),x(u2)> = Gamma(gap) dt"),
        _stat("martingale_problem_z", abs(z), 4.0, "<=", "f(y)-f(y0)-int (1-Gamma(y)) f''(y) ds is a martingale"),
    ]


def _finish_thm3prime_rate(cfg, data, out_dir):
    ns = sorted(cfg.n)
    sup_err = [stable_mean(data[f"sup_{n}"]) for n in ns]
    one_err = [stable_mean(data[f"one_{n}"]) for n in ns]
    fit = metrics.rate_fit(ns, sup_err)
    fit1 = metrics.rate_fit(ns, one_err)
    _write_dat(out_dir / "thm3prime_rate_sup.dat", "n error", zip(ns, sup_err))
    _write_dat(out_dir / "thm3prime_rate_one_point.dat", "n error", zip(ns, one_err))
    u = np.asarray(cfg.starts)
    n_top = ns[-1]
    _write_dat(out_dir / "thm3prime_rate_flow_map.dat", "u value", zip(u, data[f"fine_{n_top}"][0]))
    stats = [
        _stat("sup_norm_rate_slope", fit.slope, [-0.75, -0.30], "in", "E||z^n_n - z(.,1)|| ~ n^{-1/2}"),
        _stat("one_point_sq_rate_slope", fit1.slope, None, "report", "E(z^n_n(0)-z(0,1))^2 slope", gate=False),
    ]
    for n, e in zip(ns, sup_err):
        stats.append(_stat(f"sup_norm_error_n={n}", e, None, "report", "mean sup-norm error", gate=False))
    # Levy-Prokhorov distance between coarse and fine maps at the largest n, raw and rearranged
    lp_raw, lp_sorted, sup = [], [], []
    for a, b in zip(data[f"coarse_{n_top}"], data[f"fine_{n_top}"]):
        fa = MonotonePath.from_samples(u, a, rearrange=True)
        fb = MonotonePath.from_samples(u, b, rearrange=True)
        lp_sorted.append(metrics.levy_prokhorov(fa, fb))
        sup.append(metrics.sup_norm(fa, fb))
        if np.all(np.diff(a) >= 0) and np.all(np.diff(b) >= 0):
            lp_raw.append(lp_sorted[-1])
    stats.append(_stat("lp_rearranged_mean", stable_mean(lp_sorted), None, "report",
                       "Levy-Prokhorov distance, monotone rearrangement", gate=False))
    stats.append(_stat("lp_raw_monotone_fraction", len(lp_raw) / len(lp_sorted), None, "report",
                       "fraction of replicas whose raw maps are already monotone", gate=False))
    stats.append(_stat("lp_le_sup_norm_violations", sum(p > s + 1e-9 for p, s in zip(lp_sorted, sup)), 0, "==",
                       "rho <= sup-norm", gate=False))
    return stats


def _finish_arratia_coalescence(cfg, data, out_dir):
    d = cfg.starts[1] - cfg.starts[0]
    target = coalescence_probability(d, 1.0)
    frac = stable_mean(data["merged"])
    ovp = float(np.mean(data["min_gap"] < -cfg.params["r"]))
    oracle = stable_mean(data["oracle_merged"])
    eps = _kernel(cfg).eps
    return [
        _stat("merge_fraction_error", abs(frac - target), 0.05, "<=", f"merge fraction vs 2 Phi(-d/sqrt 2) = {target:.4f}"),
        _stat("merge_fraction", frac, None, "report", "fraction merged by t=1", gate=False),
        _stat("order_violation_probability", ovp, 0.05, "<", "P(inf gap < -r) -> 0"),
        _stat("oracle_merge_fraction", oracle, [target - 0.05, target + 0.05], "in",
              "discrete Arratia oracle vs closed form", gate=False),
        _stat("epsilon", eps, None, "report", "mollifier width used", gate=False),
    ]


def _finish_arratia_cluster_count(cfg, data, out_dir):
    tv = metrics.total_variation(data["counts"], data["oracle_counts"])
    _write_dat(out_dir / "arratia_cluster_count_flow_map.dat", "u value", zip(cfg.starts, data["terminal"][0]))
    hist = np.bincount(data["counts"], minlength=len(cfg.starts) + 1)
    ohist = np.bincount(data["oracle_counts"], minlength=len(cfg.starts) + 1)
    _write_dat(out_dir / "arratia_cluster_count_hist.dat", "clusters approx oracle",
               zip(range(len(hist)), hist, ohist))
    return [
        _stat("cluster_count_tv", tv, 0.1, "<", "cluster-count law vs Arratia oracle"),
        _stat("mean_clusters", stable_mean(data["counts"]), None, "report", "approximation", gate=False),
        _stat("mean_clusters_oracle", stable_mean(data["oracle_counts"]), None, "report", "oracle", gate=False),
    ]


def lp_unit_statistics(fixtures: int = 20, seed: int = 0) -> list:
    """Deterministic Levy-Prokhorov checks: identity, shift, brute force, sup-norm bound."""
    from .lp_fixtures import brute_force_lp, random_monotone_paths

    stats = []
    u = np.linspace(0.0, 1.0, 11)
    f = MonotonePath(u, u)
    stats.append(_stat("rho_identity", metrics.levy_prokhorov(f, f), 0.0, "==", "rho(f,f) = 0"))
    fa = MonotonePath(u, u, extension="affine")
    ga = MonotonePath(u, u + 0.1, extension="affine")
    stats.append(_stat("rho_shift_0.1_affine_error", abs(metrics.levy_prokhorov(fa, ga) - 0.05), 1e-6, "<=",
                       "vertical shift by c gives c/2"))
    gc = MonotonePath(u, u + 0.1)
    stats.append(_stat("rho_shift_0.1_constant", metrics.levy_prokhorov(f, gc), None, "report",
                       "same shift with constant extension (boundary binds)", gate=False))
    paths = random_monotone_paths(fixtures, seed)
    worst_bf, worst_sup, worst_sym, worst_tri = 0.0, -math.inf, 0.0, -math.inf
    pairs = list(zip(paths, paths[1:] + paths[:1]))
    for p, q in pairs:
        rho = metrics.levy_prokhorov(p, q)
        worst_bf = max(worst_bf, abs(rho - brute_force_lp(p, q)))
        worst_sup = max(worst_sup, rho - metrics.sup_norm(p, q))
        worst_sym = max(worst_sym, abs(rho - metrics.levy_prokhorov(q, p)))
    for i in range(0, fixtures - 2, 3):
        p, q, r = paths[i], paths[i + 1], paths[i + 2]
        worst_tri = max(worst_tri, metrics.levy_prokhorov(p, r)
                        - metrics.levy_prokhorov(p, q) - metrics.levy_prokhorov(q, r))
    stats.append(_stat("max_bisection_vs_brute_force", worst_bf, 1e-3, "<=", "bisection vs grid search"))
    stats.append(_stat("max_rho_minus_sup_norm", worst_sup, 1e-9, "<=", "rho <= sup-norm"))
    stats.append(_stat("max_asymmetry", worst_sym, 1e-9, "<=", "rho symmetric", gate=False))
    stats.append(_stat("max_triangle_excess", worst_tri, 1e-9, "<=", "triangle inequality", gate=False))
    return stats


def _write_dat(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None) -> ExperimentReport:
    """Run one named experiment, write its CSV / JSON / .dat outputs, return the report."""
    jobs = jobs or os.cpu_count() or 1
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigInvalid(f"output directory {out_dir} not writable: {exc}") from exc
    t0 = time.perf_counter()
    if cfg.experiment == "lp_unit":
        stats = lp_unit_statistics(int(cfg.params.get("fixtures", 20)), cfg.seed)
    else:
        data = _run_all_blocks(cfg, jobs)
        stats = globals()[f"_finish_{cfg.experiment}"](cfg, data, out_dir)
        if "paths" in data and len(data["paths"]):
            paths = data["paths"]
            stride = max(1, (paths.shape[1] - 1) // 100)
            write_paths_csv(out_dir / f"{cfg.experiment}.csv", paths, data.get("cluster_ids"), stride=stride)
    passed = all(s["pass"] for s in stats if s["gate"])
    report = ExperimentReport(asdict(cfg), stats, passed, cfg.seed, CLAIMS[cfg.experiment],
                              wall_clock=time.perf_counter() - t0)
    (out_dir / f"{cfg.experiment}.json").write_text(report.to_json())
    (out_dir / f"{cfg.experiment}.timing.json").write_text(
        json.dumps({"experiment": cfg.experiment, "wall_clock_seconds": report.wall_clock, "jobs": jobs}) + "\n"
    )
    return report
