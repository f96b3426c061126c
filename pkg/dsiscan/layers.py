import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from dsiscan.errors import InputValidationError
from dsiscan.schemas import (
    DensityEstimate,
    HoldingsTable,
    LayerPartition,
    LayerStats,
    LayerSummary,
    SizeSample,
)
from dsiscan.utils import local_maxima, local_minima

logger = logging.getLogger(__name__)


def _chain_from(
    anchor: int, positions: np.ndarray, depths: np.ndarray, low: float, high: float
) -> List[int]:
    """Greedy chain of minima starting at `anchor`; the deepest qualifying successor wins."""
    chain = [anchor]
    current = anchor
    while True:
        gaps = positions - positions[current]
        ok = np.nonzero((gaps > 0) & (gaps >= low) & (gaps <= high))[0]
        if ok.size == 0:
            return chain
        current = int(ok[np.argmin(depths[ok])])
        chain.append(current)


def _layer_modes(estimate: DensityEstimate, boundary_index: Sequence[int]) -> List[float]:
    """Size at the highest density maximum inside each layer; layers without one add nothing."""
    peaks = local_maxima(estimate.density)
    edges = [-1, *boundary_index, estimate.grid.size]
    modes = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = peaks[(peaks > lo) & (peaks < hi)]
        if inside.size:
            best = inside[np.argmax(estimate.density[inside])]
            modes.append(float(math.exp(estimate.grid[best])))
    return modes


def partition_from_density(
    estimate: DensityEstimate, target_ratio: float, tolerance: float
) -> LayerPartition:
    """Layer boundaries at density minima spaced by about `target_ratio` in size.

    The walk starts at the smallest interior minimum and adds minima from
    small to large sizes while consecutive size ratios stay in
    [target_ratio / (1 + tolerance), target_ratio * (1 + tolerance)], the
    deepest candidate winning. Minima past the first gap with no candidate
    are dropped.
    """
    if estimate.grid.size == 0 or not np.any(estimate.density > 0):
        raise InputValidationError("cannot partition an empty density")
    if target_ratio <= 0:
        raise InputValidationError(f"target_ratio must be positive, got {target_ratio}")
    if tolerance <= 0:
        raise InputValidationError(f"tolerance must be positive, got {tolerance}")

    minima = local_minima(estimate.density)
    if minima.size == 0:
        logger.info("Density has no interior minimum; single layer")
        return LayerPartition(boundaries=[], modes=_layer_modes(estimate, []))

    positions = estimate.grid[minima]
    depths = estimate.density[minima]
    band = math.log1p(tolerance)
    low = math.log(target_ratio) - band
    high = math.log(target_ratio) + band

    chain = _chain_from(0, positions, depths, low, high)
    index = [int(minima[c]) for c in chain]
    boundaries = np.exp(estimate.grid[index])
    partition = LayerPartition(boundaries=boundaries, modes=_layer_modes(estimate, index))
    logger.info(
        "Partition with %d layers, ratios %s",
        partition.layer_count, [round(r, 3) for r in partition.ratios],
    )
    return partition


def assign(
    sample: SizeSample, boundaries: Sequence[float], modes: Optional[Sequence[float]] = None
) -> LayerPartition:
    """Layer i covers (ub_{i-1}, ub_i]; sizes above the last bound go to the top layer."""
    b = np.asarray(boundaries, dtype=float)
    if b.size > 1 and not np.all(np.diff(b) > 0):
        raise InputValidationError("boundaries must be strictly increasing")
    if np.any(b <= 0):
        raise InputValidationError("boundaries must be positive")
    layers = np.searchsorted(b, sample.sizes, side="left") + 1
    return LayerPartition(
        boundaries=b,
        assignments={e: int(l) for e, l in zip(sample.entity_ids, layers)},
        modes=list(modes or []),
    )


def layer_stats(partition: LayerPartition, holdings: Optional[HoldingsTable] = None) -> LayerStats:
    counts = holdings.holding_counts() if holdings is not None else {}
    b = partition.boundaries
    summaries = []
    for layer in range(1, partition.layer_count + 1):
        members = partition.members(layer)
        lower = float(b[layer - 2]) if layer >= 2 else 0.0
        upper = float(b[layer - 1]) if layer <= b.size else None
        ratio = float(b[layer - 1] / b[layer - 2]) if 2 <= layer <= b.size else None

        mean_holdings, missing = None, 0
        if holdings is not None and members:
            missing = sum(1 for e in members if e not in counts)
            mean_holdings = float(np.mean([counts.get(e, 0) for e in members]))
            if missing:
                logger.warning("Layer %d: %d entities have no holdings", layer, missing)

        summaries.append(
            LayerSummary(
                layer=layer,
                lower=lower,
                upper=upper,
                count=len(members),
                mean_holdings=mean_holdings,
                ratio=ratio,
                missing_holdings=missing,
            )
        )

    ratios = partition.ratios
    return LayerStats(
        layers=summaries,
        mean_ratio=float(np.mean(ratios)) if ratios else None,
        universe_size=len(partition.assignments),
    )
