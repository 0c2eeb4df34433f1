"""Distances between monotone maps and the statistics the experiments are judged by."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

LINEAR = "linear"
STEP = "step"


class LengthMismatch(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


@dataclass(frozen=True)
class MonotonePath:
    """A nondecreasing function on [0, 1] given by breakpoints and values.

    ``kind`` is ``"linear"`` (interpolate between breakpoints) or ``"step"``
    (right-continuous, constant on ``[b_i, b_{i+1})``).  Outside [0, 1] the path
    is extended either by its end values (``extension="constant"``) or, for
    linear paths, by continuing the first and last segments (``"affine"``).
    """

    breakpoints: np.ndarray
    values: np.ndarray
    kind: str = LINEAR
    extension: str = "constant"

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        if b.ndim != 1 or b.shape != v.shape or len(b) < 2:
            raise ValueError("breakpoints and values must be 1-d arrays of equal length >= 2")
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        if np.any(np.diff(v) < 0):
            raise ValueError("values must be nondecreasing")
        if self.kind not in (LINEAR, STEP):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.extension not in ("constant", "affine"):
            raise ValueError(f"unknown extension {self.extension!r}")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        b, v = self.breakpoints, self.values
        if self.kind == STEP:
            idx = np.searchsorted(b, u, side="right") - 1
            out = v[np.clip(idx, 0, len(v) - 1)]
        else:
            out = np.interp(u, b, v)
            if self.extension == "affine":
                lo = (v[1] - v[0]) / (b[1] - b[0])
                hi = (v[-1] - v[-2]) / (b[-1] - b[-2])
                out = np.where(u < 0, v[0] + lo * u, out)
                out = np.where(u > 1, v[-1] + hi * (u - 1), out)
        return out

    @classmethod
    def from_samples(cls, u, values, kind: str = LINEAR, rearrange: bool = False, **kw) -> "MonotonePath":
        """Build from a sampled flow map; ``rearrange`` sorts values (monotone rearrangement)."""
        values = np.asarray(values, dtype=float)
        if rearrange:
            values = np.sort(values)
        return cls(np.asarray(u, dtype=float), values, kind, **kw)


def _envelope_ok(f: MonotonePath, g: MonotonePath, eps: float, tol: float = 1e-12) -> bool:
    cand = np.concatenate([f.breakpoints, g.breakpoints])
    cand = np.concatenate([cand, cand - eps, cand + eps, [0.0, 1.0]])
    u = cand[(cand >= 0.0) & (cand <= 1.0)]
    fu, gu = f(u), g(u)
    return bool(
        np.all(f(u - eps) - eps <= gu + tol)
        and np.all(gu <= f(u + eps) + eps + tol)
        and np.all(g(u - eps) - eps <= fu + tol)
        and np.all(fu <= g(u + eps) + eps + tol)
    )


def sup_norm(f: MonotonePath, g: MonotonePath) -> float:
    """max |f - g| over [0, 1], exact at the union of breakpoints."""
    if f.kind != g.kind:
        raise ValueError("paths must share the same interpretation")
    u = np.union1d(f.breakpoints, g.breakpoints)
    return float(np.max(np.abs(f(u) - g(u))))


def levy_prokhorov(f: MonotonePath, g: MonotonePath, tol: float = 1e-9) -> float:
    """Smallest eps such that each path lies in the other's eps-envelope on [0, 1].

    Feasibility is monotone in eps and ``sup_norm`` is always feasible, so this
    bisects on ``[0, sup_norm]``.  The envelope conditions are piecewise linear
    (or piecewise constant) in u with kinks only at breakpoints and breakpoints
    shifted by +-eps, so checking there is exact.
    """
    u = np.union1d(f.breakpoints, g.breakpoints)
    hi = float(np.max(np.abs(f(u) - g(u))))
    if _envelope_ok(f, g, 0.0):
        return 0.0
    lo = 0.0
    while not _envelope_ok(f, g, hi):
        hi = 2 * hi + tol
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _envelope_ok(f, g, mid):
            hi = mid
        else:
            lo = mid
    return hi


def quadratic_covariation(path_i, path_j) -> float:
    """Realized cross-variation: sum of products of successive increments."""
    a = np.asarray(path_i, dtype=float)
    b = np.asarray(path_j, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"paths have shapes {a.shape} and {b.shape}")
    if a.shape[-1] < 2:
        raise LengthMismatch("paths need at least two points")
    out = np.sum(np.diff(a, axis=-1) * np.diff(b, axis=-1), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def ks_statistic(samples, cdf: Callable) -> float:
    """One-sample Kolmogorov-Smirnov distance sup |F_n - F|."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n == 0:
        raise ValueError("samples must be nonempty")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_two_sample(a, b) -> float:
    """Two-sample KS distance sup |F_a - F_b| over the pooled sample."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / len(a)
    fb = np.searchsorted(b, pooled, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def ks_threshold(n: int, m: int | None = None, alpha: float = 0.01, safety: float = 1.3) -> float:
    """Asymptotic Kolmogorov quantile at level ``alpha`` times a safety factor."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    eff = n if m is None else n * m / (n + m)
    return safety * c / math.sqrt(eff)


def normal_cdf(mean: float = 0.0, sd: float = 1.0) -> Callable:
    def cdf(x):
        return 0.5 * np.vectorize(math.erfc)(-(np.asarray(x) - mean) / (sd * math.sqrt(2)))

    return cdf


@dataclass(frozen=True)
class RateFit:
    log_n: np.ndarray
    log_error: np.ndarray
    slope: float
    intercept: float
    residual_norm: float


def rate_fit(ns, errors) -> RateFit:
    """Least-squares line through (log n, log error)."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(ns) < 3 or len(ns) != len(errors):
        raise DegenerateInput("need at least 3 (n, error) pairs")
    if np.any(errors <= 0) or np.any(ns <= 0) or len(np.unique(ns)) < 2:
        raise DegenerateInput("n and errors must be positive and n not all equal")
    x, y = np.log(ns), np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(x, y, float(slope), float(intercept), float(np.linalg.norm(resid)))


def order_violation_probability(paths, r: float) -> float:
    """Fraction of two-particle replicas whose gap ever drops below ``-r``."""
    if isinstance(paths, (list, tuple)):
        pos = np.stack([getattr(p, "positions", p) for p in paths])
    else:
        pos = np.asarray(paths, dtype=float)
        if pos.ndim == 2:
            pos = pos[None]
    if math.isinf(r):
        return 0.0
    gaps = pos[..., 1] - pos[..., 0]
    return float(np.mean(np.min(gaps, axis=-1) < -r))


def total_variation(counts_a, counts_b) -> float:
    """TV distance between two empirical distributions on the integers."""
    a = np.asarray(counts_a, dtype=np.int64)
    b = np.asarray(counts_b, dtype=np.int64)
    top = int(max(a.max(), b.max())) + 1
    pa = np.bincount(a, minlength=top) / len(a)
    pb = np.bincount(b, minlength=top) / len(b)
    return float(0.5 * np.sum(np.abs(pa - pb)))


def stable_mean(values) -> float:
    """Mean with compensated summation in the given order."""
    values = np.asarray(values, dtype=float).ravel()
    return math.fsum(values.tolist()) / len(values)
