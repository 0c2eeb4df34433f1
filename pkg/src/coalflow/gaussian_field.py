"""Sampling of stationary Gaussian fields and of discretized space-time white noise.

Two sources of randomness drive every flow in the package:

* joint draws of a centered stationary Gaussian process with covariance
  ``Gamma`` at a finite set of points (the per-step random map), and
* space-time white noise on a uniform spatial grid, one *slab* per time step.

All sampling functions accept either a single :class:`RngStream` or a
:class:`NormalBlock`, which stacks one stream per replica so that a whole block of
replicas can be advanced with vectorized numpy while every replica still reads
only from its own stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .kernels import Kernel, MollifiedKernel

JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8)


class FactorizationFailure(np.linalg.LinAlgError):
    """The Gram matrix is not positive semidefinite even after jitter escalation."""


class WindowTooSmall(ValueError):
    """A generating function's support leaves the slab's spatial grid."""


class GridMismatch(ValueError):
    pass


class RngStream:
    """Counter-based (Philox) random stream identified by ``(seed, stream_id, *path)``.

    Streams with the same identity reproduce the same draws; distinct identities
    are statistically independent via numpy's ``SeedSequence`` spawn keys.
    """

    def __init__(self, seed: int, stream_id: int = 0, path: tuple = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, key: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + (key,))

    def standard_normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


def replica_streams(seed: int, replica_ids, tag: int = 0) -> list[RngStream]:
    """One stream per replica; ``tag`` separates independent uses within an experiment."""
    return [RngStream(seed, int(r), (tag,)) for r in replica_ids]


class NormalBlock:
    """Standard normals for a block of replicas; row ``r`` comes from stream ``r`` only.

    Draws are buffered ``chunk`` calls at a time per requested width, so a replica's
    values depend only on its own stream and the sequence of requested widths,
    never on which other replicas share the block.
    """

    def __init__(self, streams: Sequence[RngStream], chunk: int = 64):
        self.streams = list(streams)
        self.chunk = int(chunk)
        self._buffers: dict[int, list] = {}

    def __len__(self):
        return len(self.streams)

    def draw(self, width: int) -> np.ndarray:
        buf = self._buffers.get(width)
        if buf is None or buf[1] == self.chunk:
            data = np.stack([s.standard_normal((self.chunk, width)) for s in self.streams])
            buf = [data, 0]
            self._buffers[width] = buf
        out = buf[0][:, buf[1], :]
        buf[1] += 1
        return out


def _normals(rng, shape) -> np.ndarray:
    if isinstance(rng, NormalBlock):
        out = rng.draw(int(shape[-1]))
        return out.reshape(shape)
    return rng.standard_normal(shape)


def symmetric_sqrt(matrix: np.ndarray, indefinite: Callable | None = None) -> np.ndarray:
    """Symmetric square root of a batch of (nearly) PSD matrices.

    Negative eigenvalues down to ``-JITTER_LEVELS[-1]`` are rounding and clipped
    to zero.  Deeper ones raise :class:`FactorizationFailure`, unless the optional
    ``indefinite(mask)`` callback decides they are rounding too (it should raise
    itself when the underlying covariance really is indefinite).
    """
    lam, vec = np.linalg.eigh(matrix)
    need = -lam[..., 0]
    deep = need > JITTER_LEVELS[-1]
    if np.any(deep):
        if indefinite is None:
            raise FactorizationFailure(
                f"Gram matrix has eigenvalue {-float(np.max(need)):.3e}; kernel not positive definite on these points"
            )
        indefinite(deep)
    root = np.sqrt(np.maximum(lam, 0.0))
    scaled = vec * root[..., None, :]
    out = np.zeros_like(matrix)
    for k in range(matrix.shape[-1]):
        out += scaled[..., :, k, None] * vec[..., None, :, k]
    return out


def _difference_covariance(kernel: Kernel, xs: np.ndarray) -> np.ndarray:
    """Covariance of (xi_0, xi_1 - xi_0, ..., xi_{l-1} - xi_{l-2}) at sorted points.

    Built from ``2 - 2 Gamma`` so that the variance of a tiny gap's increment
    keeps full relative precision.
    """
    d = kernel.gap_variance(xs[..., :, None] - xs[..., None, :])
    d = np.concatenate([d[..., :1, :], np.diff(d, axis=-2)], axis=-2)
    d = np.concatenate([d[..., :, :1], np.diff(d, axis=-1)], axis=-1)
    cov = -0.5 * d
    cov[..., 0, 0] += 1.0
    return cov


def correlate(kernel: Kernel, points: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Map iid standard normals ``z`` to a joint draw with covariance ``[Gamma(p_i - p_j)]``.

    The draw is factorized in sorted difference coordinates (scaled to unit
    diagonal), so nearby points keep accurate relative increments; coincident
    points receive exactly equal values.
    """
    points = np.asarray(points, dtype=float)
    l = points.shape[-1]
    if l == 1:
        return z.copy()
    order = np.argsort(points, axis=-1, kind="stable")
    xs = np.take_along_axis(points, order, axis=-1)
    cov = _difference_covariance(kernel, xs)
    var = np.diagonal(cov, axis1=-2, axis2=-1)
    dup = var <= 0.0
    sd = np.sqrt(np.where(dup, 1.0, var))
    corr = cov / (sd[..., :, None] * sd[..., None, :])
    decouple = dup[..., :, None] | dup[..., None, :]
    corr = np.where(decouple, np.eye(l), corr)

    def check_gram(mask):
        # difference coordinates amplify rounding near tiny gaps; judge definiteness on the plain Gram
        sub = xs[mask] if xs.ndim > 1 else xs
        gram = kernel(sub[..., :, None] - sub[..., None, :])
        low = np.linalg.eigvalsh(gram)[..., 0]
        if np.any(low < -JITTER_LEVELS[-1]):
            raise FactorizationFailure(
                f"Gram matrix has eigenvalue {float(np.min(low)):.3e}; kernel not positive definite on these points"
            )

    root = symmetric_sqrt(corr, check_gram)
    diffs = np.zeros(points.shape)
    for k in range(l):
        diffs += root[..., :, k] * z[..., None, k]
    diffs = np.where(dup, 0.0, sd * diffs)
    values_sorted = np.cumsum(diffs, axis=-1)
    values = np.empty_like(values_sorted)
    np.put_along_axis(values, order, values_sorted, axis=-1)
    return values


def sample_field_at(kernel: Kernel, points, rng) -> np.ndarray:
    """One joint draw of the stationary field at ``points`` (shape ``(..., l)``)."""
    points = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    return correlate(kernel, points, _normals(rng, points.shape))


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cells ``[left + i h, left + (i + 1) h)``, ``i < cell_count``."""

    left: float
    h: float
    cell_count: int

    def __post_init__(self):
        if not (self.h > 0 and self.cell_count >= 1):
            raise ValueError("need h > 0 and cell_count >= 1")

    @classmethod
    def covering(cls, lo: float, hi: float, h: float) -> "SpatialGrid":
        """Smallest grid aligned to multiples of ``h`` that covers ``[lo, hi]``."""
        i0 = math.floor(lo / h)
        i1 = math.ceil(hi / h)
        return cls(i0 * h, h, max(i1 - i0, 1))

    @property
    def right(self) -> float:
        return self.left + self.h * self.cell_count

    def midpoints(self) -> np.ndarray:
        return self.left + (np.arange(self.cell_count) + 0.5) * self.h


@dataclass
class NoiseSlab:
    """White-noise increments over one time slab; ``increments`` has shape ``(..., cells)``."""

    grid: SpatialGrid
    dt: float
    increments: np.ndarray


def make_slab(grid: SpatialGrid, dt: float, rng) -> NoiseSlab:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(rng, NormalBlock):
        shape = (len(rng), grid.cell_count)
    else:
        shape = (grid.cell_count,)
    z = _normals(rng, shape)
    return NoiseSlab(grid, float(dt), math.sqrt(grid.h * dt) * z)


def _generator_of(phi, radius):
    if isinstance(phi, MollifiedKernel):
        return phi.generator, phi.eps
    if radius is None:
        raise ValueError("a plain callable needs its support radius")
    return phi, float(radius)


def integrate_against(
    slab: NoiseSlab, phi: MollifiedKernel | Callable, x, radius: float | None = None
) -> np.ndarray:
    """Midpoint-rule value of ``int phi(x - p) W(dp, dt)`` over one slab.

    ``phi`` is either a mollified kernel (its generating function ``psi_eps`` is
    used) or a callable supported in ``[-radius, radius]``.  ``x`` has shape
    ``(..., l)`` with leading dims matching the slab's batch dims.
    """
    func, r = _generator_of(phi, radius)
    grid = slab.grid
    x = np.asarray(x, dtype=float)
    # cells whose midpoints lie in [x - r, x + r]
    first = np.ceil((x - r - grid.left) / grid.h - 0.5).astype(np.int64)
    last = np.floor((x + r - grid.left) / grid.h - 0.5).astype(np.int64)
    if np.any(first < 0) or np.any(last >= grid.cell_count):
        raise WindowTooSmall(
            f"support [x-{r}, x+{r}] leaves grid [{grid.left}, {grid.right}] "
            f"for x in [{x.min()}, {x.max()}]"
        )
    width = int(math.floor(2 * r / grid.h)) + 2
    idx = first[..., None] + np.arange(width)
    valid = idx <= last[..., None]
    idx = np.minimum(idx, grid.cell_count - 1)
    mids = grid.left + (idx + 0.5) * grid.h
    weights = np.where(valid, func(x[..., None] - mids), 0.0)
    inc = slab.increments
    flat_idx = idx.reshape(idx.shape[:-2] + (-1,))
    dw = np.take_along_axis(inc, flat_idx, axis=-1).reshape(idx.shape)
    return np.sum(weights * dw, axis=-1)


def coarsen(fine_slabs: Sequence[NoiseSlab], factor: int) -> list[NoiseSlab]:
    """Sum ``factor`` consecutive slabs into one; white noise is additive in time."""
    if factor < 1 or len(fine_slabs) % factor:
        raise ValueError("number of slabs must be a positive multiple of factor")
    grid = fine_slabs[0].grid if fine_slabs else None
    for s in fine_slabs:
        if s.grid != grid:
            raise GridMismatch("slabs live on different spatial grids")
    out = []
    for i in range(0, len(fine_slabs), factor):
        group = fine_slabs[i : i + factor]
        total = group[0].increments.copy()
        for s in group[1:]:
            total = total + s.increments
        out.append(NoiseSlab(grid, sum(s.dt for s in group), total))
    return out


def noise_window(starts, eps: float, h: float, margin: float = 4.0) -> SpatialGrid:
    """Grid covering ``[min start - margin - eps, max start + margin + eps]``."""
    starts = np.asarray(starts, dtype=float)
    return SpatialGrid.covering(starts.min() - margin - eps, starts.max() + margin + eps, h)


def local_white_noise(
    kernel: MollifiedKernel, x: np.ndarray, h: float, dt: float, normals: NormalBlock,
    derivative: bool = False,
):
    """White-noise integrals at ``x`` (shape ``(R, l)``) with cells materialized on demand.

    Only the cells (on the global grid ``i h``) that lie under some particle's
    support are sampled, each cell exactly once, so overlapping supports share
    increments.  The result has the law of :func:`integrate_against` on a full
    slab.  With ``derivative=True`` also returns the integrals against
    ``psi_eps'`` on the same cells.
    """
    eps = kernel.eps
    R, l = x.shape
    order = np.argsort(x, axis=1, kind="stable")
    xs = np.take_along_axis(x, order, axis=1)
    first = np.ceil((xs - eps) / h - 0.5).astype(np.int64)
    K = int(math.floor(2 * eps / h)) + 1
    ks = np.arange(K)

    slots = np.empty((R, l, K), dtype=np.int64)
    slots[:, 0, :] = ks
    used = np.full(R, K, dtype=np.int64)
    for j in range(1, l):
        delta = (first[:, j] - first[:, j - 1])[:, None]
        shifted = ks + delta
        reuse = shifted < K
        prev = np.take_along_axis(slots[:, j - 1, :], np.minimum(shifted, K - 1), axis=1)
        fresh = used[:, None] + ks - np.maximum(K - delta, 0)
        slots[:, j, :] = np.where(reuse, prev, fresh)
        used += np.minimum(delta[:, 0], K)

    dw = math.sqrt(h * dt) * normals.draw(l * K)
    cell_dw = np.take_along_axis(dw, slots.reshape(R, l * K), axis=1).reshape(R, l, K)
    offsets = xs[..., None] - (first[..., None] + ks + 0.5) * h
    inc_sorted = np.sum(kernel.generator(offsets) * cell_dw, axis=-1)
    inc = np.empty_like(inc_sorted)
    np.put_along_axis(inc, order, inc_sorted, axis=1)
    if not derivative:
        return inc
    der_sorted = np.sum(kernel.generator_derivative(offsets) * cell_dw, axis=-1)
    der = np.empty_like(der_sorted)
    np.put_along_axis(der, order, der_sorted, axis=1)
    return inc, der
