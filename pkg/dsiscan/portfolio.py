import itertools
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from dsiscan import config
from dsiscan.errors import InputValidationError, NumericError
from dsiscan.schemas import (
    AdjacencyMatrices,
    HoldingsTable,
    LayerCapSummary,
    LayerPartition,
    LayerPerformance,
    PerformanceSummary,
    ReturnsTable,
    SimilarityMatrix,
    SizeEffectTest,
    UbiquityFit,
)

logger = logging.getLogger(__name__)

Portfolio = Mapping[str, float]

MIN_TAIL_ASSETS = 100


# ---------------------------------------------------------------------------
# Similarity
# ---------------------------------------------------------------------------


def _norm(p: Portfolio) -> float:
    return math.sqrt(math.fsum(w * w for w in p.values()))


def similarity(e: Portfolio, e_prime: Portfolio) -> float:
    """Cosine similarity of two weight vectors over their common assets, in [0, 1]."""
    n_e, n_p = _norm(e), _norm(e_prime)
    if n_e == 0 or n_p == 0:
        raise InputValidationError("portfolio has an all-zero weight vector")
    common = sorted(e.keys() & e_prime.keys())
    dot = math.fsum(e[a] * e_prime[a] for a in common)
    return min(1.0, max(0.0, dot / (n_e * n_p)))


def _books_by_layer(partition: LayerPartition, holdings: HoldingsTable) -> Dict[int, List[str]]:
    books = holdings.portfolios()
    by_layer = {}
    for layer in range(1, partition.layer_count + 1):
        members = partition.members(layer)
        held = [e for e in members if e in books]
        if len(held) < len(members):
            logger.warning(
                "Layer %d: %d entities without positive holdings left out of similarity",
                layer, len(members) - len(held),
            )
        by_layer[layer] = held
    return by_layer


def layer_similarity_matrix(partition: LayerPartition, holdings: HoldingsTable) -> SimilarityMatrix:
    """Mean pairwise similarity within (distinct pairs) and between layers."""
    books = holdings.portfolios()
    by_layer = _books_by_layer(partition, holdings)
    size = partition.layer_count
    values = np.full((size, size), np.nan)
    counts = np.zeros((size, size), dtype=np.int64)

    for i in range(1, size + 1):
        for j in range(i, size + 1):
            if i == j:
                pairs = itertools.combinations(by_layer[i], 2)
            else:
                pairs = itertools.product(by_layer[i], by_layer[j])
            sims = [similarity(books[a], books[b]) for a, b in pairs]
            counts[i - 1, j - 1] = counts[j - 1, i - 1] = len(sims)
            if sims:
                values[i - 1, j - 1] = values[j - 1, i - 1] = math.fsum(sims) / len(sims)
    return SimilarityMatrix(values=values, pair_counts=counts)


def market_portfolio(holdings: HoldingsTable) -> Dict[str, float]:
    """Cap-weighted portfolio over every distinct asset with a known cap."""
    caps = holdings.asset_caps()
    missing = len(holdings.distinct_assets()) - len(caps)
    if not caps:
        raise InputValidationError("no market caps available for the market portfolio")
    if missing:
        logger.warning("%d assets without a market cap left out of the market portfolio", missing)
    assets = sorted(caps)
    total = math.fsum(caps[a] for a in assets)
    return {a: caps[a] / total for a in assets}


def layer_market_similarity(
    partition: LayerPartition, holdings: HoldingsTable
) -> Dict[int, Optional[float]]:
    market = market_portfolio(holdings)
    books = holdings.portfolios()
    result = {}
    for layer, members in _books_by_layer(partition, holdings).items():
        sims = [similarity(books[e], market) for e in members]
        result[layer] = math.fsum(sims) / len(sims) if sims else None
    return result


# ---------------------------------------------------------------------------
# Adjacency and ubiquity
# ---------------------------------------------------------------------------


def _ubiquity(holdings: HoldingsTable) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for book in holdings.portfolios().values():
        for asset in book:
            counts[asset] = counts.get(asset, 0) + 1
    return counts


def ubiquity_ranking(holdings: HoldingsTable) -> List[str]:
    counts = _ubiquity(holdings)
    return sorted(counts, key=lambda a: (-counts[a], a))


def adjacency(partition: LayerPartition, holdings: HoldingsTable) -> AdjacencyMatrices:
    counts = _ubiquity(holdings)
    order = sorted(counts, key=lambda a: (-counts[a], a))
    column = {a: c for c, a in enumerate(order)}
    books = holdings.portfolios()

    size = partition.layer_count
    frac = np.zeros((size, len(order)))
    empty = []
    for layer in range(1, size + 1):
        members = partition.members(layer)
        if not members:
            empty.append(layer)
            logger.warning("Layer %d is empty; its adjacency row is all zeros", layer)
            continue
        for entity in members:
            for asset in books.get(entity, {}):
                frac[layer - 1, column[asset]] += 1
        frac[layer - 1] /= len(members)

    return AdjacencyMatrices(
        m_bin=(frac > 0).astype(np.int8),
        m_frac=frac,
        holding_order=order,
        ubiquity=[counts[a] for a in order],
        empty_layers=empty,
    )


def ubiquity_table(holdings: HoldingsTable) -> List[Dict[str, object]]:
    counts = _ubiquity(holdings)
    caps = holdings.asset_caps()
    return [
        {
            "asset_id": asset,
            "rank": rank,
            "ubiquity_count": counts[asset],
            "market_cap": caps.get(asset),
        }
        for rank, asset in enumerate(ubiquity_ranking(holdings), start=1)
    ]


def layer_cap_rows(partition: LayerPartition, holdings: HoldingsTable) -> List[Dict[str, object]]:
    """Each layer's distinct holdings in global ubiquity order, with holder counts and caps."""
    caps = holdings.asset_caps()
    rank = {asset: r for r, asset in enumerate(ubiquity_ranking(holdings), start=1)}
    books = holdings.portfolios()
    rows = []
    for layer in range(1, partition.layer_count + 1):
        holders: Dict[str, int] = {}
        for entity in partition.members(layer):
            for asset in books.get(entity, {}):
                holders[asset] = holders.get(asset, 0) + 1
        for asset in sorted(holders, key=rank.__getitem__):
            rows.append(
                {
                    "layer": layer,
                    "asset_id": asset,
                    "rank": rank[asset],
                    "holders": holders[asset],
                    "market_cap": caps.get(asset),
                }
            )
    return rows


def _cap_summary(layer: Optional[int], assets: Sequence[str], caps: Mapping[str, float]) -> LayerCapSummary:
    values = [caps[a] for a in assets if a in caps]
    if not values:
        return LayerCapSummary(layer=layer, holdings=len(assets))
    return LayerCapSummary(layer=layer, holdings=len(assets), with_cap=len(values), **_quartiles(values))


def layer_cap_summary(partition: LayerPartition, holdings: HoldingsTable) -> List[LayerCapSummary]:
    """Market-cap quartiles of the distinct assets held in each layer, then over all layers.

    The last entry pools distinct assets across layers, so it is not a mix of
    the per-layer rows.
    """
    caps = holdings.asset_caps()
    by_layer: Dict[int, List[str]] = {layer: [] for layer in range(1, partition.layer_count + 1)}
    for row in layer_cap_rows(partition, holdings):
        by_layer[row["layer"]].append(row["asset_id"])
    pooled = sorted({a for assets in by_layer.values() for a in assets})
    summaries = [_cap_summary(layer, assets, caps) for layer, assets in by_layer.items()]
    summaries.append(_cap_summary(None, pooled, caps))
    return summaries


def power_law_mle(values: Sequence[float]) -> UbiquityFit:
    """Continuous power-law MLE above the sample minimum, f(x) ~ x^-(alpha+1)."""
    x = np.asarray(values, dtype=float)
    x_min = float(x.min())
    total = math.fsum(np.log(x / x_min))
    if total <= 0:
        raise NumericError("all market caps are equal; power-law fit is degenerate")
    alpha = x.size / total
    return UbiquityFit(
        alpha=alpha,
        stderr=alpha / math.sqrt(x.size),
        x_min=x_min,
        n_tail=int(x.size),
        rank_threshold=0,
    )


def ubiquity_cap_fit(
    holdings: HoldingsTable, rank_threshold: int = config.DSI_RANK_THRESHOLD
) -> UbiquityFit:
    """Power-law fit to the caps of assets ranked below `rank_threshold` by ubiquity."""
    tail = [
        row["market_cap"]
        for row in ubiquity_table(holdings)
        if row["rank"] > rank_threshold and row["market_cap"] is not None
    ]
    if len(tail) < MIN_TAIL_ASSETS:
        raise InputValidationError(
            f"insufficient data: {len(tail)} assets with caps beyond rank {rank_threshold}, "
            f"need {MIN_TAIL_ASSETS}"
        )
    fit = power_law_mle(tail).model_copy(update={"rank_threshold": rank_threshold})
    logger.info("Ubiquity tail fit: alpha=%.4f +/- %.4f over %d assets", fit.alpha, fit.stderr, fit.n_tail)
    return fit


# ---------------------------------------------------------------------------
# Performance
# ---------------------------------------------------------------------------


def sharpe(returns, periods_per_year: int = config.DSI_PERIODS_PER_YEAR) -> float:
    """Annualized mean over annualized volatility, zero risk-free rate."""
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        raise InputValidationError(f"Sharpe ratio needs at least 2 returns, got {r.size}")
    if np.ptp(r) == 0:
        raise NumericError("return series has zero variance")
    return float(r.mean() * periods_per_year / (r.std(ddof=1) * math.sqrt(periods_per_year)))


def _quartiles(values: Sequence[float]) -> Dict[str, float]:
    v = np.asarray(values, dtype=float)
    q1, median, q3 = np.percentile(v, [25, 50, 75])
    return {
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "min": float(v.min()),
        "max": float(v.max()),
    }


def _summarize(layer: Optional[int], values: List[float]) -> LayerPerformance:
    if not values:
        return LayerPerformance(layer=layer, count=0)
    return LayerPerformance(layer=layer, count=len(values), **_quartiles(values))


def layer_performance(
    partition: LayerPartition,
    returns: ReturnsTable,
    periods_per_year: int = config.DSI_PERIODS_PER_YEAR,
    year: Optional[int] = None,
    min_observations: int = config.DSI_MIN_RETURN_OBSERVATIONS,
) -> PerformanceSummary:
    ratios: Dict[str, float] = {}
    no_returns = short = degenerate = 0
    for entity in sorted(partition.assignments):
        series = returns.series.get(entity)
        if series is None:
            no_returns += 1
            continue
        if year is not None:
            series = series.for_year(year)
        if series.returns.size < min_observations:
            short += 1
            continue
        try:
            ratios[entity] = sharpe(series.returns, periods_per_year)
        except NumericError:
            degenerate += 1

    if no_returns or short or degenerate:
        logger.info(
            "Performance%s: %d without returns, %d short, %d zero-variance entities excluded",
            f" {year}" if year is not None else "", no_returns, short, degenerate,
        )

    layers = [
        _summarize(layer, [ratios[e] for e in partition.members(layer) if e in ratios])
        for layer in range(1, partition.layer_count + 1)
    ]
    return PerformanceSummary(
        sharpe=ratios,
        layers=layers,
        universe=_summarize(None, [ratios[e] for e in sorted(ratios)]),
        periods_per_year=periods_per_year,
        min_observations=min_observations,
        year=year,
        excluded_no_returns=no_returns,
        excluded_short=short,
        excluded_degenerate=degenerate,
    )


def size_effect_test(
    summary: PerformanceSummary,
    partition: LayerPartition,
    upper_layers: Sequence[int],
    lower_layers: Sequence[int],
) -> SizeEffectTest:
    """One-sided Mann-Whitney U test that the upper layers' Sharpe ratios exceed the lower ones'."""
    upper = [summary.sharpe[e] for l in upper_layers for e in partition.members(l) if e in summary.sharpe]
    lower = [summary.sharpe[e] for l in lower_layers for e in partition.members(l) if e in summary.sharpe]
    if not upper or not lower:
        raise InputValidationError("size-effect test needs Sharpe ratios in both layer groups")
    result = stats.mannwhitneyu(upper, lower, alternative="greater")
    return SizeEffectTest(
        upper_layers=list(upper_layers),
        lower_layers=list(lower_layers),
        upper_median=float(np.median(upper)),
        lower_median=float(np.median(lower)),
        statistic=float(result.statistic),
        p_value=float(result.pvalue),
    )
