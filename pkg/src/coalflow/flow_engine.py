"""Discrete flow iterations and their one/two-point oracle chains.

Batched functions (suffix ``_batch``) take one :class:`RngStream` per replica and
return arrays with a leading replica axis; the single-path functions wrap them.
Paths are stored as ``positions[step, particle]`` with ``n_steps + 1`` rows and
time ``step / n_steps``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gaussian_field import (
    NoiseSlab,
    NormalBlock,
    RngStream,
    WindowTooSmall,
    coarsen,
    correlate,
    integrate_against,
    local_white_noise,
    make_slab,
    noise_window,
    sample_field_at,
)
from .kernels import Kernel, MollifiedKernel, derivative_energy

DIRECT = "direct"
WHITE_NOISE = "white_noise"


@dataclass(frozen=True)
class FlowConfig:
    """What to simulate: scheme, kernel, number of steps on [0, 1], start points.

    ``h`` is the white-noise cell width (default ``eps / 20``); ``noise`` selects
    full slabs over a window (``"dense"``) or on-demand cells (``"local"``).
    """

    kernel: Kernel
    n_steps: int
    starts: tuple
    scheme: str = DIRECT
    h: float | None = None
    noise: str = "local"
    window_margin: float = 4.0

    def __post_init__(self):
        starts = tuple(float(s) for s in self.starts)
        object.__setattr__(self, "starts", starts)
        if not starts:
            raise ValueError("starts must be nonempty")
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("starts must be sorted")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if self.scheme not in (DIRECT, WHITE_NOISE):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == WHITE_NOISE:
            if not isinstance(self.kernel, MollifiedKernel):
                raise ValueError("the white-noise scheme needs a mollified kernel")
            if self.h is None:
                object.__setattr__(self, "h", self.kernel.eps / 20)
            if self.noise not in ("local", "dense"):
                raise ValueError(f"unknown noise mode {self.noise!r}")

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps


@dataclass
class FlowPath:
    """Particle positions over the discrete steps, ``positions[..., step, particle]``."""

    positions: np.ndarray
    config: FlowConfig | None = None
    seed: tuple | None = None
    cluster_ids: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.positions.shape[-2] - 1

    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_steps + 1)


@dataclass
class DerivativePath:
    """Spatial derivative y^n_k of the discrete flow and its continuous reference.

    ``reference`` is ``exp(eta - t L^2 / 2)`` evaluated at the coarse times, with
    ``eta`` accumulated along a finer run on the same noise.
    """

    values: np.ndarray
    reference: np.ndarray
    eta: np.ndarray
    l_squared: float
    flow: np.ndarray


@dataclass
class CoalescenceReport:
    pair_merge_steps: dict = field(default_factory=dict)
    order_violations: int = 0
    min_gap: float = math.inf


def _seed_record(streams) -> tuple:
    return tuple((s.seed, s.stream_id, s.path) for s in streams)


def step_direct(positions, kernel: Kernel, m: int, rng) -> np.ndarray:
    """x + m^{-1/2} xi(x) with one joint draw of the field at all positions."""
    positions = np.asarray(positions, dtype=float)
    return positions + sample_field_at(kernel, positions, rng) / math.sqrt(m)


def step_white_noise(positions, kernel: MollifiedKernel, slab: NoiseSlab) -> np.ndarray:
    """x + int psi_eps(x - p) W(dp, dt) over one shared slab."""
    positions = np.asarray(positions, dtype=float)
    return positions + integrate_against(slab, kernel, positions)


def _run_direct(config: FlowConfig, normals: NormalBlock) -> np.ndarray:
    R, n, l = len(normals), config.n_steps, len(config.starts)
    out = np.empty((R, n + 1, l))
    x = np.tile(np.asarray(config.starts), (R, 1))
    out[:, 0] = x
    scale = 1.0 / math.sqrt(n) if n else 0.0
    for k in range(n):
        x = x + scale * correlate(config.kernel, x, normals.draw(l))
        out[:, k + 1] = x
    return out


def _run_white_local(config: FlowConfig, normals: NormalBlock) -> np.ndarray:
    R, n, l = len(normals), config.n_steps, len(config.starts)
    out = np.empty((R, n + 1, l))
    x = np.tile(np.asarray(config.starts), (R, 1))
    out[:, 0] = x
    for k in range(n):
        x = x + local_white_noise(config.kernel, x, config.h, config.dt, normals)
        out[:, k + 1] = x
    return out


def _run_white_dense(config: FlowConfig, normals: NormalBlock, margin: float) -> np.ndarray:
    R, n, l = len(normals), config.n_steps, len(config.starts)
    grid = noise_window(config.starts, config.kernel.eps, config.h, margin)
    out = np.empty((R, n + 1, l))
    x = np.tile(np.asarray(config.starts), (R, 1))
    out[:, 0] = x
    for k in range(n):
        x = step_white_noise(x, config.kernel, make_slab(grid, config.dt, normals))
        out[:, k + 1] = x
    return out


def run_flow_batch(config: FlowConfig, streams: Sequence[RngStream]) -> np.ndarray:
    """Positions of every replica, shape ``(len(streams), n_steps + 1, l)``."""
    if config.scheme == DIRECT:
        return _run_direct(config, NormalBlock(streams))
    if config.noise == "local":
        return _run_white_local(config, NormalBlock(streams))
    try:
        return _run_white_dense(config, NormalBlock(streams), config.window_margin)
    except WindowTooSmall:
        # one retry on a doubled window, with fresh noise
        retry = NormalBlock([s.child(1) for s in streams])
        return _run_white_dense(config, retry, 2 * config.window_margin)


def run_flow(config: FlowConfig, rng: RngStream) -> FlowPath:
    positions = run_flow_batch(config, [rng])[0]
    return FlowPath(positions, config, _seed_record([rng]))


def interpolate(path: FlowPath | np.ndarray, start_index: int, t: float):
    """Piecewise-linear-in-time value of particle ``start_index`` at time ``t``."""
    pos = path.positions if isinstance(path, FlowPath) else np.asarray(path)
    n = pos.shape[-2] - 1
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    track = pos[..., start_index]
    if n == 0:
        return track[..., 0]
    k = min(int(math.floor(t * n)), n - 1)
    a = n * ((k + 1) / n - t)
    b = n * (t - k / n)
    return a * track[..., k] + b * track[..., k + 1]


def lemma1_one_point_batch(u: float, n: int, streams, scale: float | None = None) -> np.ndarray:
    scale = 1.0 / math.sqrt(n) if scale is None else scale
    normals = NormalBlock(streams)
    steps = np.stack([normals.draw(1)[:, 0] for _ in range(n)], axis=1) if n else np.zeros((len(streams), 0))
    out = np.empty((len(streams), n + 1))
    out[:, 0] = u
    out[:, 1:] = u + np.cumsum(scale * steps, axis=1)
    return out


def lemma1_one_point(u: float, n: int, rng: RngStream, scale: float | None = None) -> np.ndarray:
    """y_0 = u, y_{k+1} = y_k + scale * eta_k, scale defaulting to n^{-1/2}.

    ``scale=1.0`` gives the unit-step chain exactly as the lemma prints it.
    """
    return lemma1_one_point_batch(u, n, [rng], scale)[0]


def lemma1_two_point_batch(d0: float, kernel: Kernel, n: int, streams, scale: float | None = None) -> np.ndarray:
    if d0 < 0:
        raise ValueError("d0 must be nonnegative")
    scale = 1.0 / math.sqrt(n) if scale is None else scale
    normals = NormalBlock(streams)
    out = np.empty((len(streams), n + 1))
    z = np.full(len(streams), float(d0))
    out[:, 0] = z
    for k in range(n):
        eta = normals.draw(1)[:, 0]
        z = z + scale * np.sqrt(np.maximum(kernel.gap_variance(z), 0.0)) * eta
        out[:, k + 1] = z
    return out


def lemma1_two_point(d0: float, kernel: Kernel, n: int, rng: RngStream, scale: float | None = None) -> np.ndarray:
    """z_0 = d0, z_{k+1} = z_k + scale * sqrt(2 - 2 Gamma(z_k)) * eta_k."""
    return lemma1_two_point_batch(d0, kernel, n, [rng], scale)[0]


def derivative_path_batch(
    config: FlowConfig, streams: Sequence[RngStream], fine_factor: int = 1
) -> DerivativePath:
    """Spatial derivatives of the white-noise flow at every start point.

    Fine slabs of width ``1 / (fine_factor n)`` are generated per coarse step; the
    coarse scheme runs on their sum, the reference ``eta`` on the fine slabs.
    """
    if config.scheme != WHITE_NOISE:
        raise ValueError("derivative paths need the white-noise scheme")
    kernel = config.kernel
    R, n, l = len(streams), config.n_steps, len(config.starts)
    grid = noise_window(config.starts, kernel.eps, config.h, config.window_margin)
    normals = NormalBlock(streams)
    dt_fine = config.dt / fine_factor
    l2 = derivative_energy(kernel.psi, kernel.eps)
    deriv_radius = kernel.eps

    x = np.tile(np.asarray(config.starts), (R, 1))
    z = x.copy()
    y = np.ones((R, l))
    eta = np.zeros((R, l))
    values = np.empty((R, n + 1, l))
    ref = np.empty((R, n + 1, l))
    etas = np.empty((R, n + 1, l))
    flow = np.empty((R, n + 1, l))
    values[:, 0], ref[:, 0], etas[:, 0], flow[:, 0] = 1.0, 1.0, 0.0, x
    for k in range(n):
        fine = [make_slab(grid, dt_fine, normals) for _ in range(fine_factor)]
        for slab in fine:
            eta = eta + integrate_against(slab, kernel.generator_derivative, z, deriv_radius)
            z = step_white_noise(z, kernel, slab)
        (coarse,) = coarsen(fine, fine_factor)
        y = y * (1.0 + integrate_against(coarse, kernel.generator_derivative, x, deriv_radius))
        x = step_white_noise(x, kernel, coarse)
        t = (k + 1) / n
        values[:, k + 1], etas[:, k + 1], flow[:, k + 1] = y, eta, x
        ref[:, k + 1] = np.exp(eta - 0.5 * t * l2)
    return DerivativePath(values, ref, etas, l2, flow)


def derivative_path(config: FlowConfig, rng: RngStream, fine_factor: int = 1) -> DerivativePath:
    d = derivative_path_batch(config, [rng], fine_factor)
    return DerivativePath(d.values[0], d.reference[0], d.eta[0], d.l_squared, d.flow[0])


def analyze_coalescence(path: FlowPath | np.ndarray, merge_tol: float = 1e-9) -> CoalescenceReport:
    """Merge steps of adjacent pairs and order violations along one path."""
    if not merge_tol > 0:
        raise ValueError("merge_tol must be positive")
    pos = path.positions if isinstance(path, FlowPath) else np.asarray(path)
    gaps = np.diff(pos, axis=1)
    report = CoalescenceReport()
    if gaps.shape[1] == 0:
        return report
    close = np.abs(gaps) < merge_tol
    # stays merged from step k through the end
    stays = np.logical_and.accumulate(close[::-1], axis=0)[::-1]
    for j in range(gaps.shape[1]):
        hits = np.nonzero(stays[:, j])[0]
        report.pair_merge_steps[(j, j + 1)] = int(hits[0]) if len(hits) else None
    report.order_violations = int(np.sum(gaps < -merge_tol))
    report.min_gap = float(np.min(gaps))
    return report


def cluster_counts(terminal: np.ndarray, merge_tol: float = 1e-9) -> np.ndarray:
    """Number of distinct clusters per replica from terminal positions ``(R, l)``."""
    terminal = np.sort(np.asarray(terminal, dtype=float), axis=-1)
    return 1 + np.sum(np.diff(terminal, axis=-1) >= merge_tol, axis=-1)


def write_paths_csv(path_file, positions: np.ndarray, cluster_ids: np.ndarray | None = None,
                    replica_offset: int = 0, stride: int = 1) -> None:
    """CSV rows ``replica,start_index,step,time,position[,cluster_id]``."""
    positions = np.asarray(positions)
    if positions.ndim == 2:
        positions = positions[None]
        cluster_ids = None if cluster_ids is None else np.asarray(cluster_ids)[None]
    R, N, l = positions.shape
    n = N - 1
    steps = list(range(0, N, stride))
    if steps[-1] != n:
        steps.append(n)
    header = ["replica", "start_index", "step", "time", "position"]
    if cluster_ids is not None:
        header.append("cluster_id")
    with open(path_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(R):
            for j in range(l):
                for k in steps:
                    row = [r + replica_offset, j, k, repr(k / n if n else 0.0), repr(float(positions[r, k, j]))]
                    if cluster_ids is not None:
                        row.append(int(cluster_ids[r, k, j]))
                    w.writerow(row)
