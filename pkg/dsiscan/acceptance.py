"""Desk-scale acceptance suite run by `main.py selftest`.

Each criterion returns (passed, detail). Monte-Carlo criteria draw every
sample from seeds derived from the suite seed, so a run is reproducible.
"""
import filecmp
import logging
import math
import os
import tempfile
import time
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel
from scipy import optimize, stats

from dsiscan import config, dataio, density, distfit, genmodel, layers, pipeline, portfolio, spectral
from dsiscan.schemas import (
    DensityEstimate,
    GriddedDensity,
    GrowthModelParams,
    HoldingsTable,
    LayerPartition,
    PipelineConfig,
    ReturnSeries,
    ReturnsTable,
    SizeSample,
)
from dsiscan.utils import counter_uniforms, derive_seed, philox_generator

logger = logging.getLogger(__name__)

Check = Tuple[bool, str]

REFERENCE_MU, REFERENCE_SIGMA, REFERENCE_COUNT = 18.7, 2.24, 479
REFERENCE_BOUNDARIES = [9e6, 38e6, 150e6, 430e6, 1500e6, 5000e6]
REFERENCE_RATIOS = [4.2, 3.9, 2.9, 3.4, 3.3]
# still several bins per peak width at the Monte-Carlo sample sizes
MONTE_CARLO_OMEGA_BINS = 256


class CriterionResult(BaseModel):
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget_seconds: float


def hill_exponent(values: Sequence[float], k: int) -> float:
    """Hill estimate of the CCDF tail exponent from the k largest values."""
    x = np.sort(np.asarray(values, dtype=float))[::-1]
    return k / float(np.sum(np.log(x[:k] / x[k])))


def brute_force_similarity_matrix(partition: LayerPartition, holdings: HoldingsTable) -> np.ndarray:
    books = holdings.portfolios()
    size = partition.layer_count
    out = np.full((size, size), np.nan)
    for i in range(1, size + 1):
        for j in range(1, size + 1):
            left = [e for e in partition.members(i) if e in books]
            right = [e for e in partition.members(j) if e in books]
            sims = [
                portfolio.similarity(books[a], books[b])
                for a in left
                for b in right
                if (i != j or a < b)
            ]
            if sims:
                out[i - 1, j - 1] = math.fsum(sims) / len(sims)
    return out


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def lognormal_recovery(seed: int) -> Check:
    sample = genmodel.sample_lognormal(REFERENCE_MU, REFERENCE_SIGMA, REFERENCE_COUNT, derive_seed(seed, 1))
    fit = distfit.fit_lognormal(sample)
    reference_mean = math.exp(REFERENCE_MU + REFERENCE_SIGMA ** 2 / 2)
    ok = (
        abs(fit.mu - REFERENCE_MU) <= 0.31
        and abs(fit.sigma - REFERENCE_SIGMA) <= 0.22
        and abs(reference_mean / 1.6e9 - 1) <= 0.1
    )
    return ok, f"mu={fit.mu:.3f} sigma={fit.sigma:.3f} implied mean at reference fit {reference_mean:.3g}"


def lomb_correctness(seed: int) -> Check:
    u = np.sort(counter_uniforms(derive_seed(seed, 2), REFERENCE_COUNT))
    t = 13.8 * (u - u[0]) / (u[-1] - u[0])
    omegas = spectral.default_omega_grid(t)
    pg = spectral.lomb(t, np.cos(2.5 * t), omegas)
    peak = float(pg.omegas[np.argmax(pg.powers)])
    step = float(omegas[1] - omegas[0])
    ratio = spectral.scaling_ratio(2.5)
    ok = abs(peak - 2.5) <= step and abs(ratio - 12.3) <= 0.1
    return ok, f"peak at {peak:.3f} (bin {step:.3f}), p(2.5)={ratio:.3f}"


def _density_fundamental(sample: SizeSample, cfg: PipelineConfig):
    fit = distfit.fit_lognormal(sample)
    bandwidth = density.select_bandwidth_cv(sample, cfg.bandwidth_candidates())
    return pipeline.density_branch(sample, fit, bandwidth, cfg).peaks.fundamental


def _monte_carlo_config(seed: int) -> PipelineConfig:
    # runs go to the workers; replicates inside a run stay serial
    return PipelineConfig(
        seed=seed, null_model="bootstrap", bootstrap_replicates=100,
        omega_bins=MONTE_CARLO_OMEGA_BINS, n_jobs=1,
    )


def _recovery_run(seed: int, r: int, count: int) -> bool:
    params = genmodel.params_for_omega(4.6, 100, 2.0, w0=1.0, w1=0.3)
    sample = genmodel.sample_logperiodic(params, 1e6, 1e11, count, derive_seed(seed, 3, r))
    f = _density_fundamental(sample, _monte_carlo_config(derive_seed(seed, 30, r)))
    return f is not None and abs(f.omega - 4.6) <= 0.6 and f.p_value < 0.01


def dsi_recovery(seed: int, runs: int = 20, count: int = 5000) -> Check:
    outcomes = Parallel(n_jobs=config.DSI_SELFTEST_JOBS)(
        delayed(_recovery_run)(seed, r, count) for r in range(runs)
    )
    hits = sum(outcomes)
    return hits >= math.ceil(0.9 * runs), f"{hits}/{runs} runs recovered omega=4.6"


def _null_run(seed: int, r: int) -> bool:
    cfg = _monte_carlo_config(derive_seed(seed, 40, r))
    sample = genmodel.sample_lognormal(REFERENCE_MU, REFERENCE_SIGMA, REFERENCE_COUNT, derive_seed(seed, 4, r))
    fit = distfit.fit_lognormal(sample)
    bandwidth = density.select_bandwidth_cv(sample, cfg.bandwidth_candidates())
    peaks = pipeline.density_branch(sample, fit, bandwidth, cfg).peaks
    return any(p.p_value < 0.01 for p in peaks.peaks)


def null_specificity(seed: int, runs: int = 20) -> Check:
    outcomes = Parallel(n_jobs=config.DSI_SELFTEST_JOBS)(delayed(_null_run)(seed, r) for r in range(runs))
    false_alarms = sum(outcomes)
    return false_alarms <= runs // 20, f"{false_alarms}/{runs} pure-lognormal runs flagged a peak"


def analytic_identities(seed: int) -> Check:
    worst = 0.0
    for gamma in np.geomspace(1e-4, 0.1, 10):
        for kappa in (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000):
            omega = genmodel.predict_omega(float(gamma), kappa)
            worst = max(worst, abs(omega * kappa * math.log1p(gamma) - 2 * math.pi))
    limits = [
        abs(genmodel.complex_exponents(1e-8, n, 0)[0].real_part - n) for n in (1.5, 2, 3, 6, 8)
    ]
    real = genmodel.complex_exponents(0.01, 2.0, 0)[0].real_part
    expansion = abs(real - (2.0 + 0.5 * 2.0 * 3.0 * 0.01))
    ok = worst <= 1e-12 and max(limits) <= 1e-5 and expansion <= 10 * 0.01 ** 2
    return ok, f"identity {worst:.2e}, limit {max(limits):.2e}, expansion {expansion:.2e}"


def tsallis_fidelity(seed: int, count: int = 100_000) -> Check:
    params = GrowthModelParams(n=3.0, T0=1.0)
    sample = genmodel.sample_tsallis(params, count, derive_seed(seed, 6))
    ks = stats.kstest(sample.sizes, lambda s: 1 - genmodel.tsallis_ccdf(params, s)).statistic
    # the CCDF is an exact Pareto law in S + n T0
    hill = hill_exponent(sample.sizes + params.n * params.T0, count // 10)
    ok = ks <= 0.01 and abs(hill / (params.n - 1) - 1) <= 0.1
    return ok, f"KS={ks:.4f} Hill={hill:.3f}"


def evolution_consistency(seed: int) -> Check:
    params = GrowthModelParams(n=2.0, T0=1.0, gamma=0.014, kappa=100)
    sizes = np.exp(np.linspace(math.log(1e-2), math.log(1e8), 4001))
    power_law = GriddedDensity(sizes=sizes, density=sizes ** -params.n)
    stepped = genmodel.evolve_distribution(params, power_law, 1, renormalize=False)
    interior = sizes[(sizes > 100 * params.T0) & (sizes < 1e6)]
    positive = stepped.density > 0
    moved = np.exp(np.interp(np.log(interior * (1 + params.gamma)), np.log(sizes[positive]), np.log(stepped.density[positive])))
    scaling = np.max(np.abs(moved / interior ** -params.n / (1 - params.gamma * params.n) - 1))

    grid = np.exp(np.linspace(math.log(1e-3), 26.0, 4096))
    initial = GriddedDensity(sizes=grid, density=genmodel.boltzmann_density(params.T0, grid))
    cohorts = genmodel.evolve_cohorts(params, initial, 18)
    step = (1 + params.gamma) ** params.kappa
    t, y = genmodel.log_density_residuals(cohorts, params.T0 * step ** 6, params.T0 * step ** 16)
    pg = spectral.lomb(t, y, spectral.default_omega_grid(t))
    above = pg.omegas > pg.low_omega_cutoff
    peak = float(pg.omegas[above][np.argmax(pg.powers[above])])
    expected = genmodel.predict_omega(params.gamma, params.kappa)
    ok = scaling <= 0.01 and abs(peak / expected - 1) <= 0.1
    return ok, f"one-step deviation {scaling:.2e}, cohort peak {peak:.3f} vs {expected:.3f}"


def _mixture_density(grid: np.ndarray, centers: np.ndarray, width: float) -> np.ndarray:
    return np.mean([stats.norm.pdf(grid, c, width) for c in centers], axis=0)


def layer_partitioning(seed: int) -> Check:
    centers = np.log(1e7 * 3.5 ** np.arange(3))
    width = 0.3
    grid = np.linspace(centers[0] - 3, centers[-1] + 3, 1024)
    estimate = DensityEstimate(grid=grid, density=_mixture_density(grid, centers, width), bandwidth=width)
    partition = layers.partition_from_density(estimate, 3.5, 0.35)

    truth = []
    for lo, hi in zip(centers[:-1], centers[1:]):
        found = optimize.minimize_scalar(
            lambda g: _mixture_density(np.array([g]), centers, width)[0],
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        truth.append(found.x)
    step = grid[1] - grid[0]
    located = (
        partition.layer_count == 3
        and np.all(np.abs(np.log(partition.boundaries) - np.array(truth)) <= step)
    )

    table = LayerPartition(boundaries=REFERENCE_BOUNDARIES)
    ratios_ok = np.all(np.abs(np.array(table.ratios) - REFERENCE_RATIOS) <= 0.1)
    mean_ok = abs(np.mean(table.ratios) - 3.6) <= 0.05
    ok = bool(located and ratios_ok and mean_ok)
    return ok, f"{partition.layer_count} layers, reference mean ratio {np.mean(table.ratios):.3f}"


def random_universe(rng: np.random.Generator) -> Tuple[LayerPartition, HoldingsTable]:
    n_entities = int(rng.integers(2, 21))
    n_assets = int(rng.integers(1, 31))
    entities, assets, weights = [], [], []
    for e in range(n_entities):
        held = rng.choice(n_assets, size=int(rng.integers(1, n_assets + 1)), replace=False)
        for a in sorted(held):
            entities.append(f"F{e:02d}")
            assets.append(f"A{a:02d}")
            weights.append(float(rng.uniform(0.01, 1.0)))
    table = HoldingsTable(
        entity_ids=entities, asset_ids=assets, weights=weights, market_caps=[np.nan] * len(entities)
    )
    sample = SizeSample(
        entity_ids=[f"F{e:02d}" for e in range(n_entities)],
        sizes=np.exp(rng.uniform(10, 20, n_entities)),
    )
    bounds = np.sort(np.exp(rng.uniform(10, 20, int(rng.integers(0, 4)))))
    return layers.assign(sample, bounds), table


def similarity_oracle(seed: int, universes: int = 200) -> Check:
    rng = philox_generator(derive_seed(seed, 9))
    for _ in range(universes):
        partition, table = random_universe(rng)
        sim = portfolio.layer_similarity_matrix(partition, table)
        oracle = brute_force_similarity_matrix(partition, table)
        values = sim.values
        finite = values[~np.isnan(values)]
        if not np.array_equal(values, oracle, equal_nan=True):
            return False, "similarity matrix differs from the brute-force double loop"
        if not np.array_equal(values, values.T, equal_nan=True) or np.any((finite < 0) | (finite > 1)):
            return False, "similarity matrix not symmetric or outside [0, 1]"
    return True, f"{universes} universes matched exactly"


def power_law_universe(seed: int, alpha: float, tail: int, head: int = 500) -> Tuple[HoldingsTable, np.ndarray]:
    """Head assets held twice (top ubiquity ranks), tail assets held once with power-law caps."""
    caps = 1e6 * counter_uniforms(derive_seed(seed, 10), tail) ** (-1 / alpha)
    entities, assets, weights, market = [], [], [], []
    for h in range(head):
        for holder in ("H0", "H1"):
            entities.append(holder)
            assets.append(f"A{h:05d}")
            weights.append(1.0)
            market.append(1e12)
    for i, cap in enumerate(caps):
        entities.append(f"T{i // 100:03d}")
        assets.append(f"B{i:05d}")
        weights.append(1.0)
        market.append(float(cap))
    table = HoldingsTable(entity_ids=entities, asset_ids=assets, weights=weights, market_caps=market)
    return table, caps


def brute_force_alpha(values: np.ndarray) -> float:
    """Root of the power-law score equation n/alpha - sum ln(x/x_min) = 0."""
    x = np.asarray(values, dtype=float)
    logs = np.log(x / x.min())
    return optimize.brentq(
        lambda a: x.size / a - logs.sum(), 1e-3, 1e3, xtol=1e-15, rtol=4 * np.finfo(float).eps
    )


def power_law_recovery(seed: int) -> Check:
    table, caps = power_law_universe(seed, alpha=1.7, tail=10_000)
    fit = portfolio.ubiquity_cap_fit(table, rank_threshold=500)
    oracle = brute_force_alpha(caps)
    ok = abs(fit.alpha - 1.7) <= 3 * fit.stderr and abs(fit.alpha / oracle - 1) <= 1e-10
    return ok, f"alpha={fit.alpha:.4f} +/- {fit.stderr:.4f}, oracle {oracle:.10f}"


def write_demo_universe(directory: str, seed: int, count: int = REFERENCE_COUNT) -> Tuple[str, str, str]:
    """Small synthetic sizes/holdings/returns bundle used for end-to-end runs."""
    params = genmodel.params_for_omega(4.6, 100, 1.3)
    sample = genmodel.sample_logperiodic(params, 1e6, 1e11, count, derive_seed(seed, 11))
    rng = philox_generator(derive_seed(seed, 12))
    entities, assets, weights, caps = [], [], [], []
    asset_caps = np.exp(rng.uniform(18, 26, 200))
    for e in sample.entity_ids:
        held = rng.choice(200, size=int(rng.integers(3, 30)), replace=False)
        for a in sorted(held):
            entities.append(e)
            assets.append(f"A{a:03d}")
            weights.append(float(rng.uniform(0.001, 0.1)))
            caps.append(float(asset_caps[a]))
    holdings = HoldingsTable(entity_ids=entities, asset_ids=assets, weights=weights, market_caps=caps)

    days = np.arange(np.datetime64("2014-01-01"), np.datetime64("2016-01-01"))
    days = days[np.is_busday(days)]
    series = {
        e: ReturnSeries(dates=days, returns=rng.normal(0.0003, 0.01, days.size))
        for e in sample.entity_ids
    }
    paths = tuple(os.path.join(directory, n) for n in ("sizes.csv", "holdings.csv", "returns.csv"))
    dataio.save_sizes(paths[0], sample)
    dataio.save_holdings(paths[1], holdings)
    dataio.save_returns(paths[2], ReturnsTable(series=series))
    return paths


def report_determinism(seed: int) -> Check:
    with tempfile.TemporaryDirectory() as tmp:
        sizes, holdings, returns = write_demo_universe(tmp, seed)
        runs = []
        for name in ("run1", "run2"):
            out = os.path.join(tmp, name)
            cfg = PipelineConfig(
                sizes=sizes, holdings=holdings, returns=returns, out=out, seed=seed,
                surrogates=100, bootstrap_replicates=100, n_jobs=config.DSI_SELFTEST_JOBS,
            )
            pipeline.analyze(cfg)
            runs.append(out)
        names = sorted(os.listdir(runs[0]))
        # the output directory name is part of the recorded config
        compared = [n for n in names if n != "report.json"]
        _, mismatch, errors = filecmp.cmpfiles(runs[0], runs[1], compared, shallow=False)
        with open(os.path.join(runs[0], "report.json")) as a, open(os.path.join(runs[1], "report.json")) as b:
            first, second = a.read().replace(runs[0], "<out>"), b.read().replace(runs[1], "<out>")
        ok = not mismatch and not errors and first == second and names == sorted(os.listdir(runs[1]))
    return ok, f"{len(names)} files compared" if ok else f"differing files: {mismatch + errors}"


CRITERIA: List[Tuple[int, str, Callable[[int], Check], float]] = [
    (1, "Lognormal MLE recovery", lognormal_recovery, 1.0),
    (2, "Lomb correctness", lomb_correctness, 1.0),
    (3, "End-to-end DSI recovery", dsi_recovery, 60.0),
    (4, "Null specificity", null_specificity, 60.0),
    (5, "Analytic identities", analytic_identities, 1.0),
    (6, "Tsallis sampler fidelity", tsallis_fidelity, 5.0),
    (7, "Evolution-operator consistency", evolution_consistency, 30.0),
    (8, "Layer partitioning", layer_partitioning, 5.0),
    (9, "Similarity oracle equivalence", similarity_oracle, 10.0),
    (10, "Power-law fit recovery", power_law_recovery, 5.0),
    (11, "Determinism", report_determinism, 60.0),
]


def run_criteria(seed: int = config.DSI_SEED, only: Optional[Sequence[int]] = None) -> List[CriterionResult]:
    results = []
    for number, title, check, budget in CRITERIA:
        if only and number not in only:
            continue
        started = time.perf_counter()
        try:
            passed, detail = check(seed)
        except Exception as e:
            logger.exception("Criterion %d raised", number)
            passed, detail = False, f"{type(e).__name__}: {e}"
        seconds = time.perf_counter() - started
        if passed and seconds > budget:
            passed, detail = False, f"{detail}; took {seconds:.1f}s, over the {budget:.0f}s budget"
        results.append(
            CriterionResult(
                number=number,
                title=title,
                passed=bool(passed),
                detail=detail,
                seconds=seconds,
                budget_seconds=budget,
            )
        )
    return results
