import math

import numpy as np
import pytest

from dsiscan import density, genmodel, spectral
from dsiscan.errors import InputValidationError
from dsiscan.schemas import DensityEstimate, SizeSample
from dsiscan.utils import geometric_candidates


def test_kde_integrates_to_one(lognormal_sample):
    estimate = density.kde(lognormal_sample, 0.4, 512)
    assert estimate.integral() == pytest.approx(1.0, abs=1e-3)
    assert estimate.sample_count == lognormal_sample.count


def test_kde_single_point_peak():
    h = 0.3
    estimate = density.kde(SizeSample.from_sizes([1.0]), h, 65)
    assert estimate.grid[32] == pytest.approx(0.0, abs=1e-12)
    assert estimate.density[32] == pytest.approx(1 / (h * math.sqrt(2 * math.pi)), rel=1e-9)


def test_kde_two_separated_bumps():
    sample = SizeSample.from_sizes(np.exp([-5.0, 5.0]))
    estimate = density.kde(sample, 0.1, 4001)
    left = estimate.grid <= 0
    assert np.trapz(estimate.density[left], estimate.grid[left]) == pytest.approx(0.5, abs=0.01)
    assert np.trapz(estimate.density[~left], estimate.grid[~left]) == pytest.approx(0.5, abs=0.01)


def test_kde_of_union_is_the_mixture(lognormal_sample):
    other = genmodel.sample_lognormal(15.0, 1.0, 200, seed=8)
    union = SizeSample.from_sizes(np.concatenate([lognormal_sample.sizes, other.sizes]))
    grid = np.linspace(8.0, 30.0, 400)
    f1 = density.kde(lognormal_sample, 0.3, 400, grid=grid).density
    f2 = density.kde(other, 0.3, 400, grid=grid).density
    mixture = (lognormal_sample.count * f1 + other.count * f2) / union.count
    assert np.allclose(density.kde(union, 0.3, 400, grid=grid).density, mixture, rtol=1e-12, atol=1e-14)


def test_total_variation_shrinks_with_bandwidth(lognormal_sample):
    logs = lognormal_sample.log_sizes
    grid = np.linspace(logs.min() - 5, logs.max() + 5, 4096)
    tv = [
        np.abs(np.diff(density.kde(lognormal_sample, h, 4096, grid=grid).density)).sum()
        for h in geometric_candidates(0.05, 1.0, 12)
    ]
    assert all(wider <= narrower + 1e-12 for narrower, wider in zip(tv, tv[1:]))


def test_binned_kde_tracks_exact_kde(lognormal_sample):
    exact = density.kde(lognormal_sample, 0.3, 512)
    binned = density.kde_binned(lognormal_sample, 0.3, 512, grid=exact.grid)
    assert np.max(np.abs(binned.density - exact.density)) <= 1e-2 * exact.density.max()
    assert binned.integral() == pytest.approx(1.0, abs=1e-3)
    assert binned.sample_count == lognormal_sample.count


def test_binned_kde_counts_points_outside_the_grid():
    sample = SizeSample.from_sizes(np.exp([-1.0, 0.0, 3.0]))
    grid = np.linspace(-0.5, 0.5, 101)
    exact = density.kde(sample, 0.5, 101, grid=grid)
    binned = density.kde_binned(sample, 0.5, 101, grid=grid)
    assert np.allclose(binned.density, exact.density, rtol=1e-3)


def test_binned_kde_needs_uniform_grid(lognormal_sample):
    with pytest.raises(InputValidationError, match="uniform"):
        density.kde_binned(lognormal_sample, 0.3, 64, grid=np.array([10.0, 11.0, 13.0]))


def test_kde_rejects_bad_bandwidth(lognormal_sample):
    with pytest.raises(InputValidationError):
        density.kde(lognormal_sample, 0.0, 512)


def test_cv_bandwidth_is_a_candidate(lognormal_sample):
    candidates = [0.1, 0.2, 0.4, 0.8, 1.6]
    chosen = density.select_bandwidth_cv(lognormal_sample, candidates)
    assert chosen in candidates
    scores = {h: density.loo_log_likelihood(lognormal_sample, h) for h in candidates}
    assert scores[chosen] == max(scores.values())


def test_cv_bandwidth_preconditions(lognormal_sample):
    with pytest.raises(InputValidationError):
        density.select_bandwidth_cv(SizeSample.from_sizes(np.arange(1.0, 6.0)), [0.1, 0.2])
    with pytest.raises(InputValidationError):
        density.select_bandwidth_cv(lognormal_sample, [0.3])


def test_kde_family_shares_grid(lognormal_sample):
    half, selected, double = density.kde_family(lognormal_sample, 0.4, 256)
    assert half.bandwidth == pytest.approx(0.2)
    assert double.bandwidth == pytest.approx(0.8)
    assert np.array_equal(half.grid, double.grid)
    assert np.array_equal(selected.grid, double.grid)


def test_hq_derivative_of_identity_is_one():
    q = 0.8
    step = -math.log(q) / 4
    grid = np.arange(200) * step
    estimate = DensityEstimate(grid=grid, density=np.exp(grid), bandwidth=0.1)
    d = density.hq_derivative(estimate, H=1.0, q=q)
    assert d.grid.size in (195, 196)
    assert np.allclose(d.values, 1.0, rtol=1e-9)


def test_hq_derivative_h_zero_is_a_plain_difference():
    grid = np.linspace(0, 5, 101)
    f = np.exp(-((grid - 2.5) ** 2))
    estimate = DensityEstimate(grid=grid, density=f, bandwidth=0.1)
    d = density.hq_derivative(estimate, H=0.0, q=0.9)
    expected = np.interp(d.grid, grid, f) - np.interp(d.grid + math.log(0.9), grid, f)
    assert np.allclose(d.values, expected)


def test_hq_derivative_rejects_bad_parameters():
    estimate = DensityEstimate(grid=np.linspace(0, 1, 10), density=np.ones(10), bandwidth=0.1)
    with pytest.raises(InputValidationError):
        density.hq_derivative(estimate, H=0.5, q=1.0)
    with pytest.raises(InputValidationError):
        density.hq_derivative(estimate, H=1.5, q=0.5)


def test_hq_pairs_grid():
    pairs = density.hq_pairs()
    assert len(pairs) == 36
    assert min(h for h, _ in pairs) == 0.5 and max(h for h, _ in pairs) == 0.9
    assert min(q for _, q in pairs) == 0.65 and max(q for _, q in pairs) == 0.95
    assert density.hq_pairs(full_scan=False) == [(0.5, 0.65)]


def test_hq_scan_covers_every_pair(lognormal_sample):
    estimate = density.kde(lognormal_sample, 0.3, 256)
    scan = density.hq_scan(estimate)
    assert [(d.H, d.q) for d in scan] == density.hq_pairs()
    # smaller q reaches further back, so fewer grid points survive
    sizes = {d.q: d.grid.size for d in scan}
    assert sizes[0.65] < sizes[0.95] < estimate.grid.size


def test_hq_scan_of_constant_density_vanishes():
    grid = np.linspace(0.0, 5.0, 200)
    scan = density.hq_scan(DensityEstimate(grid=grid, density=np.full(200, 0.2), bandwidth=0.1))
    assert len(scan) == 36
    assert all(np.all(d.values == 0.0) for d in scan)


def test_hq_scan_follows_monotone_trend():
    grid = np.linspace(0.0, 5.0, 200)
    rising = density.hq_scan(DensityEstimate(grid=grid, density=np.exp(2 * grid), bandwidth=0.1))
    falling = density.hq_scan(DensityEstimate(grid=grid, density=np.exp(-2 * grid), bandwidth=0.1))
    assert all(np.all(d.values > 0) for d in rising)
    assert all(np.all(d.values < 0) for d in falling)


@pytest.mark.parametrize("H,q", density.hq_pairs())
def test_hq_derivative_keeps_log_frequency(H, q):
    omega0, m = 4.6, 2.0
    grid = np.linspace(0.0, 12.0, 2048)
    f = np.exp(-m * grid) * (1 + 0.3 * np.cos(omega0 * grid))
    d = density.hq_derivative(DensityEstimate(grid=grid, density=f, bandwidth=0.1), H, q)
    # without the power-law factor only a constant and a cosine at omega0 remain
    y = d.values * np.exp((m + H) * d.grid)
    omegas = spectral.default_omega_grid(d.grid)
    pg = spectral.lomb(d.grid, y, omegas)
    assert abs(pg.omegas[np.argmax(pg.powers)] - omega0) <= omegas[1] - omegas[0]


def test_standardized_derivative_clips_support_to_grid(lognormal_sample):
    estimate = density.kde(lognormal_sample, 0.15, 512)
    trend = density.kde(lognormal_sample, 1.2, 512, grid=estimate.grid)
    g = estimate.grid
    # a resampled support can reach well past the grid the estimates share
    support = (g[0] - 3.0, g[-1] + 3.0)
    series = [
        density.standardized_derivative(
            density.hq_derivative(estimate, 0.5, q),
            density.hq_derivative(trend, 0.5, q),
            estimate,
            trend,
            lognormal_sample.count,
            support,
            q_floor=min(density.HQ_Q_VALUES),
        )
        for q in density.HQ_Q_VALUES
    ]
    for t, y in series:
        assert np.array_equal(t, series[0][0])
        assert y.size == t.size
    assert series[0][0].min() >= g[0] + 1.2 - math.log(0.65) - 1e-9
    assert series[0][0].max() <= g[-1] - 1.2 + math.log(0.65) + 1e-9


def test_standardized_derivative_spacing(lognormal_sample):
    h = 0.3
    estimate = density.kde(lognormal_sample, h, 512)
    trend = density.kde(lognormal_sample, 8 * h, 512, grid=estimate.grid)
    d = density.hq_derivative(estimate, 0.5, 0.65)
    d_trend = density.hq_derivative(trend, 0.5, 0.65)
    logs = lognormal_sample.log_sizes
    t, y = density.standardized_derivative(
        d, d_trend, estimate, trend, lognormal_sample.count, (logs.min(), logs.max())
    )
    assert t.size == y.size >= 8
    assert np.all(np.diff(t) >= h - 1e-9)
    assert t.min() >= logs.min() + trend.bandwidth - math.log(0.65) - 1e-9
    assert t.max() <= logs.max() - trend.bandwidth + math.log(0.65) + 1e-9
    assert np.all(np.isfinite(y))
