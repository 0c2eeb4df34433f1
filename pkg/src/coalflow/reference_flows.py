"""Ground-truth simulators: scalar Euler-Maruyama, Harris l-point motions,
the Arratia l-point motion, and fine-grid reference runs on shared noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .flow_engine import FlowConfig, FlowPath, WHITE_NOISE, _seed_record, step_white_noise
from .gaussian_field import GridMismatch, NoiseSlab, NormalBlock, RngStream, correlate
from .kernels import IndicatorKernel, Kernel, compute_cm


@dataclass(frozen=True)
class SdeSpec:
    """dx = a(x) dt + b(x) dw, x(0) = u0.  ``drift``/``diffusion`` act on arrays."""

    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    u0: float


def gap_sde(kernel: Kernel, d0: float) -> SdeSpec:
    """The two-point gap SDE dy = sqrt(2 - 2 Gamma(y)) dw."""
    return SdeSpec(
        drift=np.zeros_like,
        diffusion=lambda y: np.sqrt(np.maximum(kernel.gap_variance(y), 0.0)),
        u0=float(d0),
    )


def euler_sde_batch(spec: SdeSpec, m: int, streams: Sequence[RngStream]) -> np.ndarray:
    normals = NormalBlock(streams)
    out = np.empty((len(streams), m + 1))
    x = np.full(len(streams), float(spec.u0))
    out[:, 0] = x
    for k in range(m):
        xi = normals.draw(1)[:, 0]
        x = x + spec.drift(x) / m + spec.diffusion(x) * xi / math.sqrt(m)
        out[:, k + 1] = x
    return out


def euler_sde(spec: SdeSpec, m: int, rng: RngStream) -> np.ndarray:
    """x_{k+1} = x_k + a(x_k)/m + b(x_k) xi_k / sqrt(m) on [0, 1]."""
    return euler_sde_batch(spec, m, [rng])[0]


def harris_l_point_batch(kernel: Kernel, starts, steps: int, streams: Sequence[RngStream]) -> np.ndarray:
    if isinstance(kernel, IndicatorKernel) or not math.isfinite(compute_cm(kernel)):
        raise ValueError("harris_l_point needs a kernel with finite C_m")
    starts = np.asarray(starts, dtype=float)
    normals = NormalBlock(streams)
    R, l = len(streams), len(starts)
    out = np.empty((R, steps + 1, l))
    x = np.tile(starts, (R, 1))
    out[:, 0] = x
    for k in range(steps):
        # increments with covariance [Gamma(x_i - x_j)] / steps
        x = x + correlate(kernel, x, normals.draw(l)) / math.sqrt(steps)
        out[:, k + 1] = x
    return out


def harris_l_point(kernel: Kernel, starts, steps: int, rng: RngStream) -> FlowPath:
    """Euler scheme for the Harris l-point motion with correlated Brownian increments."""
    return FlowPath(harris_l_point_batch(kernel, starts, steps, [rng])[0], seed=_seed_record([rng]))


@dataclass
class ArratiaState:
    """Cluster positions and membership at one instant."""

    positions: np.ndarray
    cluster_of: np.ndarray

    @property
    def cluster_count(self) -> int:
        return len(np.unique(self.cluster_of))


def arratia_l_point_batch(starts, steps: int, streams: Sequence[RngStream]):
    """Returns ``(positions, cluster_ids)``, both shaped ``(R, steps + 1, l)``.

    Clusters move with independent Gaussian increments of variance 1/steps (each
    cluster reads the normal of its leftmost member).  Adjacent clusters that
    touch or cross within a step merge at the midpoint of the crossing pair.
    """
    starts = np.asarray(starts, dtype=float)
    if np.any(np.diff(starts) < 0):
        raise ValueError("starts must be sorted")
    normals = NormalBlock(streams)
    R, l = len(streams), len(starts)
    x = np.tile(starts, (R, 1))
    leader = np.tile(np.arange(l), (R, 1))
    # coincident starts form one cluster from the outset
    for j in range(1, l):
        same = x[:, j] == x[:, j - 1]
        leader[same, j] = leader[same, j - 1]
    pos = np.empty((R, steps + 1, l))
    ids = np.empty((R, steps + 1, l), dtype=np.int64)
    pos[:, 0], ids[:, 0] = x, leader
    scale = 1.0 / math.sqrt(steps)
    rows = np.arange(R)[:, None]
    for k in range(steps):
        z = normals.draw(l)
        x = x + scale * z[rows, leader]
        while True:
            crossed = (np.diff(x, axis=1) <= 0) & (leader[:, 1:] != leader[:, :-1])
            if not crossed.any():
                break
            for j in range(l - 1):
                hit = crossed[:, j] & (leader[:, j + 1] != leader[:, j])
                if not hit.any():
                    continue
                mid = 0.5 * (x[hit, j] + x[hit, j + 1])
                left, right = leader[hit, j], leader[hit, j + 1]
                members = (leader[hit] == left[:, None]) | (leader[hit] == right[:, None])
                sub_x = x[hit]
                sub_x[members] = np.repeat(mid, members.sum(axis=1))
                x[hit] = sub_x
                sub_l = leader[hit]
                sub_l[members] = np.repeat(left, members.sum(axis=1))
                leader[hit] = sub_l
        pos[:, k + 1], ids[:, k + 1] = x, leader
    return pos, ids


def arratia_l_point(starts, steps: int, rng: RngStream) -> FlowPath:
    pos, ids = arratia_l_point_batch(starts, steps, [rng])
    return FlowPath(pos[0], seed=_seed_record([rng]), cluster_ids=ids[0])


def arratia_final_state(path: FlowPath) -> ArratiaState:
    return ArratiaState(path.positions[-1].copy(), path.cluster_ids[-1].copy())


def coalescence_probability(d: float, t: float) -> float:
    """P(two Arratia trajectories started ``d`` apart have met by time ``t``) = 2 Phi(-d / sqrt(2t))."""
    if not (d > 0 and t > 0):
        raise ValueError("need d > 0 and t > 0")
    return math.erfc(d / math.sqrt(2.0 * t) / math.sqrt(2.0))


def fine_reference(config: FlowConfig, fine_factor: int, fine_slabs: Sequence[NoiseSlab]) -> FlowPath:
    """The white-noise scheme at step ``1 / (fine_factor n)`` on the given fine slabs.

    Pair it with a coarse run on ``coarsen(fine_slabs, fine_factor)`` so both use
    one noise realization.
    """
    if config.scheme != WHITE_NOISE:
        raise ValueError("fine_reference needs a white-noise config")
    n_fine = fine_factor * config.n_steps
    if len(fine_slabs) != n_fine:
        raise ValueError(f"expected {n_fine} fine slabs, got {len(fine_slabs)}")
    grid = fine_slabs[0].grid if fine_slabs else None
    if any(s.grid != grid for s in fine_slabs):
        raise GridMismatch("fine slabs live on different grids")
    batch = fine_slabs[0].increments.shape[:-1] if fine_slabs else ()
    x = np.broadcast_to(np.asarray(config.starts, dtype=float), batch + (len(config.starts),)).copy()
    out = np.empty(batch + (n_fine + 1, len(config.starts)))
    out[..., 0, :] = x
    for k, slab in enumerate(fine_slabs):
        x = step_white_noise(x, config.kernel, slab)
        out[..., k + 1, :] = x
    return FlowPath(out, config)


def run_on_slabs(config: FlowConfig, slabs: Sequence[NoiseSlab]) -> FlowPath:
    """Coarse white-noise run on explicit slabs (one per step)."""
    return fine_reference(config, 1, slabs)
