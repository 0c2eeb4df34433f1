import math

import numpy as np
import pytest
from scipy.stats import norm

from coalflow.flow_engine import WHITE_NOISE, FlowConfig, run_flow_batch
from coalflow.gaussian_field import GridMismatch, RngStream, SpatialGrid, coarsen, make_slab, noise_window, replica_streams
from coalflow.kernels import GaussianKernel, IndicatorKernel, bump_mollifier, mollified_kernel
from coalflow.metrics import ks_statistic, ks_two_sample, quadratic_covariation
from coalflow.reference_flows import (
    SdeSpec,
    arratia_final_state,
    arratia_l_point,
    arratia_l_point_batch,
    coalescence_probability,
    euler_sde,
    euler_sde_batch,
    fine_reference,
    gap_sde,
    harris_l_point,
    harris_l_point_batch,
    run_on_slabs,
)

GAUSS = GaussianKernel()
PSI = bump_mollifier()


def streams(n, tag=0, seed=9):
    return replica_streams(seed, range(n), tag)


def test_euler_constant_when_no_noise():
    spec = SdeSpec(np.zeros_like, np.zeros_like, 0.4)
    assert np.all(euler_sde(spec, 50, RngStream(0)) == 0.4)


def test_euler_brownian_terminal_law():
    spec = SdeSpec(np.zeros_like, np.ones_like, 0.5)
    term = euler_sde_batch(spec, 1000, streams(10_000))[:, -1]
    assert ks_statistic(term, norm(loc=0.5).cdf) < 0.02


def test_euler_drift():
    spec = SdeSpec(lambda x: np.ones_like(x), np.zeros_like, 0.0)
    assert euler_sde(spec, 10, RngStream(0))[-1] == pytest.approx(1.0)


def test_harris_single_point_brownian():
    term = harris_l_point_batch(GAUSS, [0.2], 200, streams(10_000))[:, -1, 0]
    assert ks_statistic(term, norm(loc=0.2).cdf) < 0.02


def test_harris_gap_quadratic_variation():
    pos = harris_l_point_batch(GAUSS, [0.0, 0.5], 300, streams(10_000, 1))
    gap = pos[:, :, 1] - pos[:, :, 0]
    qv = quadratic_covariation(gap, gap)
    predicted = np.sum(GAUSS.gap_variance(gap[:, :-1]), axis=1) / 300
    assert 0.9 <= np.mean(qv) / np.mean(predicted) <= 1.1


def test_harris_identical_starts_identical_paths():
    p = harris_l_point(GAUSS, [0.3, 0.3], 100, RngStream(0))
    assert np.array_equal(p.positions[:, 0], p.positions[:, 1])


def test_harris_rejects_indicator():
    with pytest.raises(ValueError):
        harris_l_point(IndicatorKernel(), [0.0, 1.0], 10, RngStream(0))


def test_harris_matches_white_noise_gap_law():
    k = mollified_kernel(PSI, 0.2)
    h = harris_l_point_batch(k, [0.0, 0.2], 500, streams(5000, 2))
    w = run_flow_batch(FlowConfig(k, 500, (0.0, 0.2), WHITE_NOISE), streams(5000, 3))
    assert ks_two_sample(h[:, -1, 1] - h[:, -1, 0], w[:, -1, 1] - w[:, -1, 0]) < 0.04


def test_euler_gap_sde_matches_harris_gap():
    k = mollified_kernel(PSI, 0.5)
    e = euler_sde_batch(gap_sde(k, 0.4), 500, streams(5000, 4))[:, -1]
    h = harris_l_point_batch(k, [0.0, 0.4], 500, streams(5000, 5))
    # the Harris gap is signed while the SDE gap reflects through zero by symmetry of the law of |gap|
    assert ks_two_sample(np.abs(e), np.abs(h[:, -1, 1] - h[:, -1, 0])) < 0.04


def test_arratia_single_start_is_brownian():
    p = arratia_l_point([0.0], 100, RngStream(0))
    assert np.all(p.cluster_ids == 0)
    term, _ = arratia_l_point_batch([0.0], 500, streams(10_000))
    assert ks_statistic(term[:, -1, 0], norm.cdf) < 0.02


def test_arratia_order_and_cluster_monotonicity():
    pos, ids = arratia_l_point_batch(np.linspace(0, 1, 10), 2000, streams(200, 1))
    assert np.all(np.diff(pos, axis=2) >= 0)
    counts = np.array([[len(np.unique(r)) for r in rep] for rep in ids])
    assert np.all(np.diff(counts, axis=1) <= 0)
    # merged clusters move together
    same = ids[:, :, 1:] == ids[:, :, :-1]
    assert np.all(np.diff(pos, axis=2)[same] == 0)
    state = arratia_final_state(arratia_l_point(np.linspace(0, 1, 10), 500, RngStream(3)))
    assert np.all(np.diff(np.unique(state.positions)) > 0)
    assert 1 <= state.cluster_count <= 10


def test_arratia_merge_fraction_matches_closed_form():
    _, ids = arratia_l_point_batch([0.0, 0.1], 10_000, streams(10_000, 2))
    frac = np.mean(ids[:, -1, 0] == ids[:, -1, 1])
    assert abs(frac - coalescence_probability(0.1, 1.0)) <= 0.02


def test_coalescence_probability():
    assert coalescence_probability(0.1, 1.0) == pytest.approx(0.94362, abs=1e-5)
    assert coalescence_probability(0.1, 1.0) == pytest.approx(2 * norm.cdf(-0.1 / math.sqrt(2)), rel=1e-12)
    assert coalescence_probability(50.0, 1.0) < 1e-100
    ds = np.linspace(0.05, 3, 20)
    vals = [coalescence_probability(d, 1.0) for d in ds]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    ts = np.linspace(0.1, 3, 20)
    vals = [coalescence_probability(0.5, t) for t in ts]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        coalescence_probability(0.0, 1.0)


def test_fine_reference_factor_one_is_coarse_run():
    k = mollified_kernel(PSI, 0.3)
    cfg = FlowConfig(k, 8, (0.0, 0.1), WHITE_NOISE)
    grid = noise_window(cfg.starts, k.eps, cfg.h)
    slabs = [make_slab(grid, cfg.dt, RngStream(0, i)) for i in range(8)]
    assert np.array_equal(fine_reference(cfg, 1, slabs).positions, run_on_slabs(cfg, slabs).positions)


def test_fine_reference_zero_noise_gives_zero_error():
    k = mollified_kernel(PSI, 0.3)
    cfg = FlowConfig(k, 4, (0.0, 0.5), WHITE_NOISE)
    grid = noise_window(cfg.starts, k.eps, cfg.h)
    slabs = [make_slab(grid, cfg.dt / 4, RngStream(0, i)) for i in range(16)]
    for s in slabs:
        s.increments[:] = 0.0
    fine = fine_reference(cfg, 4, slabs).positions
    coarse = run_on_slabs(cfg, coarsen(slabs, 4)).positions
    assert np.array_equal(fine[-1], coarse[-1])


def test_fine_reference_checks_grids_and_counts():
    k = mollified_kernel(PSI, 0.3)
    cfg = FlowConfig(k, 2, (0.0,), WHITE_NOISE)
    g1 = noise_window([0.0], 0.3, cfg.h)
    g2 = SpatialGrid(g1.left, g1.h, g1.cell_count + 1)
    with pytest.raises(GridMismatch):
        fine_reference(cfg, 1, [make_slab(g1, 0.5, RngStream(0)), make_slab(g2, 0.5, RngStream(1))])
    with pytest.raises(ValueError):
        fine_reference(cfg, 2, [make_slab(g1, 0.25, RngStream(0))])


def test_coupled_error_decreases_with_n():
    k = mollified_kernel(PSI, 2.0)
    h = k.eps / 20
    errs = []
    for n in (4, 16):
        cfg = FlowConfig(k, n, (0.0,), WHITE_NOISE, h=h)
        grid = noise_window(cfg.starts, k.eps, h, margin=6.0)
        sq = []
        for r in range(200):
            rng = RngStream(1, r)
            fine = [make_slab(grid, 1 / (8 * n), rng) for _ in range(8 * n)]
            ref = fine_reference(cfg, 8, fine).positions[-1, 0]
            coarse = run_on_slabs(cfg, coarsen(fine, 8)).positions[-1, 0]
            sq.append((coarse - ref) ** 2)
        errs.append(np.mean(sq))
    assert errs[1] < errs[0]
