"""Covariance kernels and the analytic functionals the convergence results depend on.

Every kernel is an even function ``Gamma`` with ``Gamma(0) = 1`` (except the
indicator, which is the Arratia limit).  Kernels evaluate on numpy arrays of any
shape and always work on ``|x|``, so ``Gamma(x) == Gamma(-x)`` holds bit-for-bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

@lru_cache(maxsize=None)
def _legendre(nodes: int):
    return np.polynomial.legendre.leggauss(nodes)


def _gauss_legendre(func: Callable[[np.ndarray], np.ndarray], a, b, nodes: int = 48) -> np.ndarray:
    """Integrate ``func`` over ``[a, b]`` elementwise for array-valued endpoints."""
    x, w = _legendre(nodes)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    s = mid[..., None] + half[..., None] * x
    return half * np.sum(func(s) * w, axis=-1)


@dataclass(frozen=True)
class Mollifier:
    """A C^1 bump supported in [-1, 1] with unit L2 norm.

    ``nodes`` is the Gauss-Legendre order used for integrals of products of psi
    over intervals where both factors are smooth.
    """

    psi: Callable[[np.ndarray], np.ndarray]
    dpsi: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    nodes: int = 48

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) < 1.0, self.psi(np.clip(u, -1.0, 1.0)), 0.0)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) < 1.0, self.dpsi(np.clip(u, -1.0, 1.0)), 0.0)

    def scaled(self, eps: float, u):
        """psi_eps(u) = eps^{-1/2} psi(u / eps)."""
        return self(np.asarray(u, dtype=float) / eps) / math.sqrt(eps)

    def scaled_derivative(self, eps: float, u):
        """Derivative of psi_eps, i.e. eps^{-3/2} psi'(u / eps)."""
        return self.derivative(np.asarray(u, dtype=float) / eps) / eps**1.5

    def norm2(self) -> float:
        return float(_gauss_legendre(lambda s: self(s) ** 2, -1.0, 1.0, self.nodes))

    def energy(self) -> float:
        """Derivative energy, the integral of psi'(u)^2."""
        return float(_gauss_legendre(lambda s: self.derivative(s) ** 2, -1.0, 1.0, self.nodes))


_BUMP_C = math.sqrt(315.0 / 256.0)


def _bump(u):
    return _BUMP_C * (1.0 - u * u) ** 2


def _bump_derivative(u):
    return -4.0 * _BUMP_C * u * (1.0 - u * u)


def bump_mollifier() -> Mollifier:
    """psi(u) = c (1 - u^2)^2 on [-1, 1], normalized so that the L2 norm is one.

    Products of two bumps are degree-8 polynomials on each piece, so 8 nodes are exact.
    """
    return Mollifier(psi=_bump, dpsi=_bump_derivative, name="bump", nodes=8)


class Kernel:
    """Base class for covariance kernels ``Gamma``."""

    kind = "abstract"
    support_radius = math.inf
    lipschitz_constant = math.inf

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def gap_variance(self, x) -> np.ndarray:
        """``2 - 2 Gamma(x)``, the conditional variance of a two-point increment."""
        return 2.0 - 2.0 * self(x)

    def curvature_at_zero(self) -> float | None:
        """``-Gamma''(0)`` when known analytically, else None."""
        return None

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianKernel(Kernel):
    """Gamma(x) = exp(-x^2 / (2 scale^2))."""

    scale: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def lipschitz_constant(self) -> float:
        return math.exp(-0.5) / self.scale

    def __call__(self, x):
        x = np.abs(np.asarray(x, dtype=float)) / self.scale
        return np.exp(-0.5 * x * x)

    def gap_variance(self, x):
        x = np.abs(np.asarray(x, dtype=float)) / self.scale
        return -2.0 * np.expm1(-0.5 * x * x)

    def curvature_at_zero(self):
        return 1.0 / self.scale**2

    def to_config(self):
        return {"id": "gaussian", "scale": self.scale}


@dataclass(frozen=True)
class MollifiedKernel(Kernel):
    """Autocorrelation Gamma_eps = psi_eps * psi_eps of a rescaled mollifier."""

    psi: Mollifier
    eps: float
    kind = "mollified"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def support_radius(self) -> float:
        return 2.0 * self.eps

    @property
    def lipschitz_constant(self) -> float:
        # |Gamma'| <= ||psi_eps||_2 ||psi_eps'||_2 by Cauchy-Schwarz
        return math.sqrt(self.psi.energy() / self.eps**2)

    def __call__(self, x):
        v = np.abs(np.asarray(x, dtype=float)) / self.eps
        inside = v < 2.0
        vv = np.where(inside, v, 0.0)
        # overlap of supp psi(s) and supp psi(s + v) is [-1, 1 - v]
        vals = _gauss_legendre(
            lambda s: self.psi(s) * self.psi(s + vv[..., None]), -np.ones_like(vv), 1.0 - vv, self.psi.nodes
        )
        return np.where(inside, vals, 0.0)

    def gap_variance(self, x):
        # 2 - 2 Gamma(x) = int (psi(s) - psi(s + v))^2 ds, free of cancellation near 0
        v = np.abs(np.asarray(x, dtype=float)) / self.eps
        inside = v < 2.0
        vv = np.where(inside, v, 0.0)

        def sq(s):
            return (self.psi(s) - self.psi(s + vv[..., None])) ** 2

        total = (
            _gauss_legendre(sq, -1.0 - vv, -np.ones_like(vv), self.psi.nodes)
            + _gauss_legendre(sq, -np.ones_like(vv), 1.0 - vv, self.psi.nodes)
            + _gauss_legendre(sq, 1.0 - vv, np.ones_like(vv), self.psi.nodes)
        )
        return np.where(inside, total, 2.0 - 2.0 * self(x))

    def curvature_at_zero(self):
        return derivative_energy(self.psi, self.eps)

    def generator(self, u):
        """The generating function psi_eps, for the white-noise representation."""
        return self.psi.scaled(self.eps, u)

    def generator_derivative(self, u):
        return self.psi.scaled_derivative(self.eps, u)

    def to_config(self):
        return {"id": "mollified", "epsilon": self.eps, "mollifier": self.psi.name}


@dataclass(frozen=True)
class IndicatorKernel(Kernel):
    """Gamma = 1_{0}, the local characteristic of the Arratia flow."""

    kind = "indicator"
    support_radius = 0.0

    def __call__(self, x):
        return (np.asarray(x, dtype=float) == 0.0).astype(float)

    def to_config(self):
        return {"id": "indicator"}


@dataclass(frozen=True)
class TableKernel(Kernel):
    """Kernel given by samples on x >= 0, linearly interpolated in |x|.

    Beyond the last sample the last value is held.  Nothing here checks positive
    definiteness; use :func:`check_positive_definite` on the points you need.
    """

    x: tuple
    values: tuple
    kind = "table"

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float)
        if xs.ndim != 1 or len(xs) < 2 or xs[0] != 0.0 or np.any(np.diff(xs) <= 0):
            raise ValueError("table x must start at 0 and increase strictly")
        if len(self.values) != len(xs):
            raise ValueError("table x and values differ in length")

    @property
    def support_radius(self) -> float:
        vals = np.asarray(self.values, dtype=float)
        nz = np.nonzero(vals)[0]
        if vals[-1] != 0.0:
            return math.inf
        return float(self.x[nz[-1] + 1]) if len(nz) else 0.0

    @property
    def lipschitz_constant(self) -> float:
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.x))))

    def __call__(self, x):
        return np.interp(np.abs(np.asarray(x, dtype=float)), self.x, self.values)

    def curvature_at_zero(self):
        slope = (self.values[1] - self.values[0]) / (self.x[1] - self.x[0])
        return math.inf if slope != 0.0 else None

    def to_config(self):
        return {"id": "table", "x": list(self.x), "values": list(self.values)}


def eval_gamma(kernel: Kernel, x):
    """Evaluate Gamma at ``x`` (scalar in, float out; arrays pass through)."""
    out = kernel(x)
    return float(out) if np.ndim(out) == 0 else out


def mollified_kernel(psi: Mollifier, eps: float) -> MollifiedKernel:
    return MollifiedKernel(psi, float(eps))


@dataclass(frozen=True)
class KernelFunctionals:
    c_smooth: float
    c_m: float
    l_squared: float | None = None
    extra: dict = field(default_factory=dict)


def compute_cm(kernel: Kernel, grid_points: int = 10_000) -> float:
    """sup over x != 0 of (2 - 2 Gamma(x)) / x^2.

    Dense log grid plus a linear grid near zero, combined with the analytic
    small-x limit ``-Gamma''(0)`` when the kernel knows it.
    """
    if isinstance(kernel, IndicatorKernel):
        return math.inf
    limit = kernel.curvature_at_zero()
    if limit is not None and math.isinf(limit):
        return math.inf
    radius = kernel.support_radius if math.isfinite(kernel.support_radius) else 0.0
    unit = max(1.0, radius)
    top = max(10.0, 4.0 * radius)
    xs = np.concatenate(
        [
            np.geomspace(1e-6 * unit, top, grid_points),
            np.linspace(1e-4, 1e-2, 200) * unit,
            [1e-4],
        ]
    )
    ratio = kernel.gap_variance(xs) / xs**2
    sup = float(np.max(ratio))
    if limit is None:
        # second-difference estimate of -Gamma''(0) at step 1e-4
        limit = float(kernel.gap_variance(1e-4)) / 1e-8
    return max(sup, limit)


def compute_c(kernel: Kernel) -> float:
    """Least C with 1 - Gamma(u) <= C u^2, which is C_m / 2."""
    return 0.5 * compute_cm(kernel)


def compute_l2(psi: Mollifier, eps: float) -> float:
    """L^2_eps = (1 / eps) * integral of psi'(p)^2."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return psi.energy() / eps


def derivative_energy(psi: Mollifier, eps: float) -> float:
    """Integral of psi_eps'(p)^2 = eps^{-2} * integral of psi'^2.

    This is the quadratic-variation rate of the spatial-derivative noise and equals
    ``-Gamma_eps''(0)``.  Note it scales as 1/eps^2, not as :func:`compute_l2`.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    return psi.energy() / eps**2


def kernel_functionals(kernel: Kernel) -> KernelFunctionals:
    cm = compute_cm(kernel)
    extra = {}
    if isinstance(kernel, MollifiedKernel):
        l2 = derivative_energy(kernel.psi, kernel.eps)
        extra["l_squared_eps_scaled"] = compute_l2(kernel.psi, kernel.eps)
    elif isinstance(kernel, GaussianKernel):
        # Gamma = phi * phi with phi Gaussian, so int phi'^2 = -Gamma''(0)
        l2 = kernel.curvature_at_zero()
    else:
        l2 = None
    return KernelFunctionals(c_smooth=0.5 * cm, c_m=cm, l_squared=l2, extra=extra)


def epsilon_schedule(n: int, scale: float = 1.0) -> float:
    """eps_n = scale * (log log max(n, 27))^{-1/4}, so 1/eps_n^2 = o(log log n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return scale * math.log(math.log(max(n, 27))) ** -0.25


def check_positive_definite(kernel: Kernel, points) -> bool:
    pts = np.asarray(points, dtype=float).ravel()
    if pts.size == 0:
        return True
    gram = kernel(pts[:, None] - pts[None, :])
    lam = np.linalg.eigvalsh(gram)
    return bool(lam[0] >= -1e-10 * pts.size)


_MOLLIFIERS = {"bump": bump_mollifier}


def kernel_from_config(cfg: dict | str) -> Kernel:
    """Build a kernel from its config dict, e.g. ``{"id": "mollified", "epsilon": 0.2}``."""
    if isinstance(cfg, str):
        cfg = {"id": cfg}
    kid = cfg.get("id")
    if kid == "gaussian":
        return GaussianKernel(float(cfg.get("scale", 1.0)))
    if kid == "mollified":
        if "epsilon" not in cfg:
            raise ValueError("mollified kernel needs an 'epsilon' parameter")
        name = cfg.get("mollifier", "bump")
        if name not in _MOLLIFIERS:
            raise ValueError(f"unknown mollifier {name!r}")
        return MollifiedKernel(_MOLLIFIERS[name](), float(cfg["epsilon"]))
    if kid == "indicator":
        return IndicatorKernel()
    if kid == "table":
        return TableKernel(tuple(map(float, cfg["x"])), tuple(map(float, cfg["values"])))
    raise ValueError(f"unknown kernel id {kid!r}")
