"""Random monotone paths and a grid-search Levy-Prokhorov oracle used to check the bisection."""
from __future__ import annotations

import numpy as np

from .metrics import MonotonePath


def random_monotone_paths(count: int, seed: int = 0, breaks: int = 8) -> list[MonotonePath]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        b = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, breaks - 2)), [1.0]])
        v = np.cumsum(rng.exponential(0.2, breaks)) + rng.normal(0, 0.3)
        out.append(MonotonePath(b, v))
    return out


def _first_feasible(f, g, u, fu, gu, eps_all, chunk):
    for start in range(0, len(eps_all), chunk):
        eps = eps_all[start : start + chunk, None]
        ok = ((f(u - eps) - eps <= gu + 1e-12) & (gu <= f(u + eps) + eps + 1e-12)
              & (g(u - eps) - eps <= fu + 1e-12) & (fu <= g(u + eps) + eps + 1e-12)).all(axis=1)
        if ok.any():
            return start + int(np.argmax(ok))
    return None


def brute_force_lp(f: MonotonePath, g: MonotonePath, grid: int = 2001, step: float = 2e-4,
                   coarse: float = 1e-2, chunk: int = 64) -> float:
    """Smallest eps on a uniform eps-grid whose envelope holds on a dense u-grid.

    Feasibility only grows with eps, so a coarse eps-grid first brackets the
    answer and the fine grid is scanned inside that bracket.
    """
    u = np.union1d(np.linspace(0.0, 1.0, grid), np.union1d(f.breakpoints, g.breakpoints))
    fu, gu = f(u), g(u)
    top = float(np.max(np.abs(fu - gu))) + coarse
    rough = np.arange(0.0, top + coarse, coarse)
    i = _first_feasible(f, g, u, fu, gu, rough, chunk)
    if i is None:
        return top
    if i == 0:
        return 0.0
    fine = np.arange(rough[i - 1], rough[i] + step, step)
    j = _first_feasible(f, g, u, fu, gu, fine, chunk)
    return float(fine[j])
