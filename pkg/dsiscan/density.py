import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal
from sklearn.metrics.pairwise import rbf_kernel
from sklearn.neighbors import KernelDensity

from dsiscan.errors import InputValidationError, NumericError
from dsiscan.schemas import DensityEstimate, DerivativeSeries, SizeSample

logger = logging.getLogger(__name__)

GRID_SPAN_BANDWIDTHS = 4.0
KERNEL_REACH_BANDWIDTHS = 8.0
HQ_H_VALUES = [round(0.5 + 0.08 * k, 10) for k in range(6)]
HQ_Q_VALUES = [round(0.65 + 0.06 * k, 10) for k in range(6)]
_LOG_FLOOR = 1e-300
_LOO_CHUNK = 1024


def _kernel_density(points: np.ndarray, bandwidth: float) -> KernelDensity:
    return KernelDensity(kernel="gaussian", bandwidth=bandwidth, atol=0.0, rtol=0.0).fit(
        points[:, None]
    )


def _estimate_grid(
    sample: SizeSample, bandwidth: float, grid_size: int, grid: Optional[np.ndarray]
) -> np.ndarray:
    if sample.count == 0:
        raise InputValidationError("kernel density of an empty sample")
    if bandwidth <= 0:
        raise InputValidationError(f"bandwidth must be positive, got {bandwidth}")
    if grid is not None:
        return np.asarray(grid, dtype=float)
    if grid_size < 64:
        raise InputValidationError(f"grid_size must be at least 64, got {grid_size}")
    logs = sample.log_sizes
    pad = GRID_SPAN_BANDWIDTHS * bandwidth
    return np.linspace(logs.min() - pad, logs.max() + pad, grid_size)


def kde(
    sample: SizeSample,
    bandwidth: float,
    grid_size: int,
    grid: Optional[np.ndarray] = None,
) -> DensityEstimate:
    """Gaussian KDE of ln S on a uniform grid spanning the data +/- 4 bandwidths.

    An explicit `grid` replaces the default one, so estimates at several
    bandwidths can share points.
    """
    grid = _estimate_grid(sample, bandwidth, grid_size, grid)
    log_density = _kernel_density(sample.log_sizes, bandwidth).score_samples(grid[:, None])
    return DensityEstimate(
        grid=grid,
        density=np.exp(log_density),
        bandwidth=bandwidth,
        sample_count=sample.count,
    )


def kde_binned(
    sample: SizeSample,
    bandwidth: float,
    grid_size: int,
    grid: Optional[np.ndarray] = None,
) -> DensityEstimate:
    """Gaussian KDE by linear binning onto the grid lattice and direct convolution.

    Agrees with `kde` up to O((step / bandwidth)^2). The lattice is extended
    past both grid ends to cover every point, so sizes outside the grid still
    reach the edge values. The grid must be uniform.
    """
    grid = _estimate_grid(sample, bandwidth, grid_size, grid)
    if grid.size < 2:
        raise InputValidationError("binned KDE needs at least two grid points")
    step = (grid[-1] - grid[0]) / (grid.size - 1)
    if not np.allclose(np.diff(grid), step, rtol=1e-6, atol=0.0):
        raise InputValidationError("binned KDE needs a uniform grid")

    position = (sample.log_sizes - grid[0]) / step
    base = np.floor(position).astype(np.int64)
    frac = position - base
    first = min(int(base.min()), 0)
    length = max(int(base.max()) + 2, grid.size) - first
    counts = np.bincount(base - first, weights=1.0 - frac, minlength=length) + np.bincount(
        base + 1 - first, weights=frac, minlength=length
    )

    reach = int(math.ceil(KERNEL_REACH_BANDWIDTHS * bandwidth / step))
    offsets = np.arange(-reach, reach + 1) * step
    kernel = np.exp(-0.5 * (offsets / bandwidth) ** 2) / (bandwidth * math.sqrt(2 * math.pi))
    smoothed = signal.convolve(counts, kernel, mode="full", method="direct")
    start = reach - first
    return DensityEstimate(
        grid=grid,
        density=np.maximum(smoothed[start:start + grid.size], 0.0) / sample.count,
        bandwidth=bandwidth,
        sample_count=sample.count,
    )


def loo_log_likelihood(sample: SizeSample, bandwidth: float) -> float:
    """Sum of ln f_{-i}(ln S_i), each point's own kernel term removed."""
    logs = sample.log_sizes[:, None]
    n = logs.shape[0]
    gamma = 0.5 / bandwidth ** 2
    norm = 1.0 / ((n - 1) * bandwidth * math.sqrt(2 * math.pi))
    total = []
    for start in range(0, n, _LOO_CHUNK):
        block = rbf_kernel(logs[start:start + _LOO_CHUNK], logs, gamma=gamma)
        rows = np.arange(block.shape[0])
        block[rows, start + rows] = 0.0
        loo = norm * block.sum(axis=1)
        total.append(np.sum(np.log(np.maximum(loo, _LOG_FLOOR))))
    return float(math.fsum(total))


def select_bandwidth_cv(sample: SizeSample, candidates: Sequence[float]) -> float:
    if sample.count < 10:
        raise InputValidationError(
            f"bandwidth cross-validation needs at least 10 sizes, got {sample.count}"
        )
    if len(candidates) < 2:
        raise InputValidationError("need at least two bandwidth candidates")
    if any(c <= 0 for c in candidates):
        raise InputValidationError("bandwidth candidates must be positive")

    best, best_score = None, -np.inf
    # ascending order with >= so ties go to the larger bandwidth
    for h in sorted(float(c) for c in candidates):
        score = loo_log_likelihood(sample, h)
        logger.debug("LOO log-likelihood at bandwidth %.4g: %.6f", h, score)
        if score >= best_score:
            best, best_score = h, score
    logger.info("Cross-validated bandwidth %.4g (of %d candidates)", best, len(candidates))
    return best


def kde_family(sample: SizeSample, bandwidth: float, grid_size: int) -> List[DensityEstimate]:
    """Estimates at bandwidth/2, bandwidth and 2*bandwidth on one shared grid."""
    widest = kde(sample, 2 * bandwidth, grid_size)
    return [
        kde(sample, 0.5 * bandwidth, grid_size, grid=widest.grid),
        kde(sample, bandwidth, grid_size, grid=widest.grid),
        widest,
    ]


def hq_derivative(estimate: DensityEstimate, H: float, q: float) -> DerivativeSeries:
    """(f(x) - f(qx)) / ((1-q)x)^H with x = exp(grid); points whose qx leaves the grid are dropped."""
    if not 0 < q < 1:
        raise InputValidationError(f"q must lie in (0, 1), got {q}")
    if not 0 <= H <= 1:
        raise InputValidationError(f"H must lie in [0, 1], got {H}")

    g = estimate.grid
    f = estimate.density
    shifted = g + math.log(q)
    keep = shifted >= g[0]
    f_q = np.interp(shifted[keep], g, f)
    scale = ((1 - q) * np.exp(g[keep])) ** H
    return DerivativeSeries(grid=g[keep], values=(f[keep] - f_q) / scale, H=H, q=q)


def hq_pairs(full_scan: bool = True) -> List[Tuple[float, float]]:
    if not full_scan:
        return [(HQ_H_VALUES[0], HQ_Q_VALUES[0])]
    return [(H, q) for H in HQ_H_VALUES for q in HQ_Q_VALUES]


def hq_scan(estimate: DensityEstimate) -> List[DerivativeSeries]:
    return [hq_derivative(estimate, H, q) for H, q in hq_pairs()]


def standardized_derivative(
    derivative: DerivativeSeries,
    trend_derivative: DerivativeSeries,
    estimate: DensityEstimate,
    trend_estimate: DensityEstimate,
    sample_count: int,
    support: Tuple[float, float],
    q_floor: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Band-passed (H,q)-derivative in units of the KDE standard error.

    Returns the (ln S, y) series fed to the periodogram. Points are kept
    inside `support` clipped to the grid and shrunk by h_trend - ln(q_floor)
    on both sides where N*f_trend*h >= 1, then thinned to one point per
    bandwidth. Pairs that share `q_floor` share their points.
    """
    if not np.array_equal(estimate.grid, trend_estimate.grid):
        raise InputValidationError("estimate and trend estimate must share a grid")
    if not np.array_equal(derivative.grid, trend_derivative.grid):
        raise InputValidationError("derivative series must share a grid")
    if derivative.H != trend_derivative.H or derivative.q != trend_derivative.q:
        raise InputValidationError("derivative series must share (H, q)")

    q_floor = derivative.q if q_floor is None else q_floor
    h = estimate.bandwidth
    g = estimate.grid
    margin = trend_estimate.bandwidth - math.log(q_floor)
    # a sample drawn after the grid was fixed may reach past it
    lo = max(support[0], g[0]) + margin
    hi = min(support[1], g[-1]) - margin

    step = g[1] - g[0]
    stride = max(1, int(math.ceil(h / step - 1e-9)))
    anchor = int(np.searchsorted(g, lo, side="left"))
    index = np.arange(g.size)
    f_trend = trend_estimate.density
    keep = (
        (g >= lo)
        & (g <= hi)
        & (sample_count * f_trend * h >= 1.0)
        & ((index - anchor) % stride == 0)
    )

    # derivative grids drop a prefix of the estimate grid
    offset = g.size - derivative.grid.size
    keep_d = keep[offset:]
    t = derivative.grid[keep_d]
    factor = ((1 - derivative.q) * np.exp(t)) ** derivative.H
    band = (derivative.values[keep_d] - trend_derivative.values[keep_d]) * factor
    stderr = np.sqrt(f_trend[offset:][keep_d] / (sample_count * h))
    y = band / stderr

    if t.size < 8:
        raise NumericError(
            f"only {t.size} usable points for the density spectrum; the sample is too small "
            "or the bandwidth too wide"
        )
    return t, y
