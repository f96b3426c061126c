import math

import numpy as np
import pytest
from scipy import stats

from dsiscan import layers
from dsiscan.errors import InputValidationError
from dsiscan.schemas import DensityEstimate, HoldingsTable, LayerPartition, SizeSample


def _bumps(ratio: float, count: int, width: float = 0.3) -> DensityEstimate:
    centers = math.log(1e7) + math.log(ratio) * np.arange(count)
    grid = np.linspace(centers[0] - 3, centers[-1] + 3, 1024)
    values = np.mean([stats.norm.pdf(grid, c, width) for c in centers], axis=0)
    return DensityEstimate(grid=grid, density=values, bandwidth=width)


def test_assign_layers_are_right_closed():
    sample = SizeSample(entity_ids=list("abcde"), sizes=[5.0, 10.0, 50.0, 100.0, 1000.0])
    partition = layers.assign(sample, [10.0, 100.0])
    assert partition.layer_count == 3
    assert [partition.assignments[e] for e in "abcde"] == [1, 1, 2, 2, 3]
    assert partition.members(2) == ["c", "d"]


def test_assign_rejects_unsorted_boundaries():
    sample = SizeSample.from_sizes([1.0, 2.0])
    with pytest.raises(InputValidationError):
        layers.assign(sample, [10.0, 5.0])


def test_partition_three_bumps():
    partition = layers.partition_from_density(_bumps(3.5, 3), 3.5, 0.35)
    assert partition.layer_count == 3
    assert partition.ratios[0] == pytest.approx(3.5, rel=0.02)
    assert len(partition.modes) == 3
    assert partition.modes[0] == pytest.approx(1e7, rel=0.02)


def test_partition_skips_minima_off_ratio():
    # bumps 10x apart: no pair of minima within [3.5/1.35, 3.5*1.35]
    partition = layers.partition_from_density(_bumps(10.0, 3), 3.5, 0.35)
    assert partition.layer_count == 2


def _dips(positions, depths) -> DensityEstimate:
    grid = np.linspace(0.0, 10.0, 1001)
    values = 2.0 - sum(d * np.exp(-(((grid - p) / 0.05) ** 2)) for p, d in zip(positions, depths))
    return DensityEstimate(grid=grid, density=values, bandwidth=0.05)


def test_partition_walks_up_from_smallest_minimum():
    # the three upper dips form a longer chain, but the walk starts at 1.0
    step = math.log(3.5)
    upper = 1.0 + math.log(10.0)
    estimate = _dips([1.0, upper, upper + step, upper + 2 * step], [0.5] * 4)
    partition = layers.partition_from_density(estimate, 3.5, 0.35)
    assert partition.layer_count == 2
    assert partition.boundaries[0] == pytest.approx(math.e, rel=0.011)


def test_partition_prefers_deeper_candidate():
    step = math.log(3.5)
    # both 1.0 + 0.9 step and 1.0 + 1.1 step lie in the ratio band
    estimate = _dips([1.0, 1.0 + 0.9 * step, 1.0 + 1.1 * step], [0.5, 0.2, 0.8])
    partition = layers.partition_from_density(estimate, 3.5, 0.35)
    assert partition.layer_count == 3
    assert math.log(partition.boundaries[1]) == pytest.approx(1.0 + 1.1 * step, abs=0.011)


def test_unimodal_density_is_one_layer():
    grid = np.linspace(-5, 5, 201)
    estimate = DensityEstimate(grid=grid, density=stats.norm.pdf(grid), bandwidth=0.2)
    partition = layers.partition_from_density(estimate, 3.5, 0.35)
    assert partition.layer_count == 1
    assert partition.modes == [pytest.approx(1.0)]


def test_reference_boundary_ratios():
    partition = LayerPartition(boundaries=[9e6, 38e6, 150e6, 430e6, 1500e6, 5000e6])
    assert np.allclose(partition.ratios, [4.2, 3.9, 2.9, 3.4, 3.3], atol=0.1)
    assert np.mean(partition.ratios) == pytest.approx(3.6, abs=0.05)


def test_layer_stats(three_entity_books):
    sample, holdings = three_entity_books
    extra = SizeSample(entity_ids=sample.entity_ids + ["d"], sizes=list(sample.sizes) + [500.0])
    partition = layers.assign(extra, [10.0, 20.0])
    table = layers.layer_stats(partition, holdings)
    assert [s.count for s in table.layers] == [2, 0, 2]
    assert table.universe_size == 4
    assert table.layers[0].lower == 0.0 and table.layers[0].upper == 10.0
    assert table.layers[2].upper is None
    assert table.layers[1].ratio == pytest.approx(2.0)
    assert table.layers[0].mean_holdings == pytest.approx(1.5)
    # d has no holdings
    assert table.layers[2].missing_holdings == 1
    assert table.mean_ratio == pytest.approx(2.0)


def test_layer_stats_without_holdings(three_entity_books):
    sample, _ = three_entity_books
    table = layers.layer_stats(layers.assign(sample, [10.0]))
    assert [s.count for s in table.layers] == [2, 1]
    assert all(s.mean_holdings is None for s in table.layers)
    assert table.mean_ratio is None
