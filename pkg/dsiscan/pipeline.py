import logging
import os
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from dsiscan import dataio, density, distfit, genmodel, layers, portfolio, spectral
from dsiscan.errors import InputValidationError, NumericError, stage
from dsiscan.schemas import (
    DensityEstimate,
    DensitySpectrum,
    HoldingsTable,
    LayerPartition,
    LognormalFit,
    PeakReport,
    Periodogram,
    PipelineConfig,
    ResidualSeries,
    ReturnsTable,
    SizeSample,
)
from dsiscan.utils import derive_seed, philox_generator, round_sig

logger = logging.getLogger(__name__)

RESIDUAL_STREAM = 1
DENSITY_STREAM = 2
SIGNIFICANCE_LEVEL = 0.01

StageOutcome = Tuple[bool, str]
StageCallback = Callable[[str, bool, str], None]


# ---------------------------------------------------------------------------
# Residual branch: lognormal fit -> CCDF residuals -> Lomb
# ---------------------------------------------------------------------------


def _residual_replicate(
    fit: LognormalFit, count: int, omegas: np.ndarray, cutoff: float, seed: int, r: int
) -> float:
    replicate = genmodel.sample_lognormal(fit.mu, fit.sigma, count, derive_seed(seed, RESIDUAL_STREAM, r))
    series = distfit.residuals(replicate, distfit.fit_lognormal(replicate))
    return float(spectral.LombBasis(series.ln_sizes, omegas).max_power(series.delta_f, cutoff))


def residual_null(
    fit: LognormalFit,
    count: int,
    omegas: np.ndarray,
    cutoff: float,
    replicates: int,
    seed: int,
    n_jobs: int = 1,
) -> np.ndarray:
    """Global maxima above `cutoff` for residual periodograms of samples from the fitted lognormal."""
    maxima = Parallel(n_jobs=n_jobs)(
        delayed(_residual_replicate)(fit, count, omegas, cutoff, seed, r) for r in range(replicates)
    )
    return np.asarray(maxima, dtype=float)


def residual_branch(
    sample: SizeSample, fit: LognormalFit, cfg: PipelineConfig
) -> Tuple[ResidualSeries, Periodogram, PeakReport]:
    series = distfit.residuals(sample, fit)
    omegas = spectral.default_omega_grid(series.ln_sizes, cfg.omega_max, cfg.omega_bins)
    pg = spectral.lomb(series.ln_sizes, series.delta_f, omegas)
    if cfg.null_model == "permutation":
        null = spectral.permutation_null(pg, cfg.surrogates, derive_seed(cfg.seed, RESIDUAL_STREAM))
    else:
        null = residual_null(
            fit, sample.count, omegas, pg.low_omega_cutoff, cfg.bootstrap_replicates, cfg.seed, cfg.n_jobs
        )
    return series, pg, spectral.detect_peaks_against(pg, null, cfg.null_model)


# ---------------------------------------------------------------------------
# Density branch: KDE -> (H,q)-derivatives -> averaged Lomb
# ---------------------------------------------------------------------------


def density_series(
    sample: SizeSample,
    estimate: DensityEstimate,
    trend: DensityEstimate,
    full_scan: bool = True,
):
    """Standardized (H,q)-derivative series on points shared by every pair."""
    pairs = density.hq_pairs(full_scan)
    q_floor = min(q for _, q in pairs)
    logs = sample.log_sizes
    support = (float(logs.min()), float(logs.max()))

    derivatives, rows, t = [], [], None
    for H, q in pairs:
        d = density.hq_derivative(estimate, H, q)
        d_trend = density.hq_derivative(trend, H, q)
        t, y = density.standardized_derivative(
            d, d_trend, estimate, trend, sample.count, support, q_floor=q_floor
        )
        derivatives.append(d)
        rows.append(y)
    return derivatives, t, np.vstack(rows)


def _spectral_estimates(
    sample: SizeSample, bandwidth: float, cfg: PipelineConfig, grid: Optional[np.ndarray] = None
) -> Tuple[DensityEstimate, DensityEstimate]:
    h = bandwidth * cfg.spectral_bandwidth_factor
    estimate = density.kde_binned(sample, h, cfg.grid_size, grid=grid)
    trend = density.kde_binned(sample, h * cfg.trend_bandwidth_factor, cfg.grid_size, grid=estimate.grid)
    return estimate, trend


def _density_replicate(
    fit: LognormalFit,
    count: int,
    bandwidth: float,
    grid: np.ndarray,
    omegas: np.ndarray,
    cutoff: float,
    cfg: PipelineConfig,
    r: int,
) -> float:
    replicate = genmodel.sample_lognormal(fit.mu, fit.sigma, count, derive_seed(cfg.seed, DENSITY_STREAM, r))
    estimate, trend = _spectral_estimates(replicate, bandwidth, cfg, grid=grid)
    _, t, y = density_series(replicate, estimate, trend, cfg.hq_scan)
    powers = spectral.LombBasis(t, omegas).powers(y).mean(axis=0)
    return float(powers[omegas > cutoff].max())


def density_null(
    fit: LognormalFit,
    count: int,
    bandwidth: float,
    grid: np.ndarray,
    omegas: np.ndarray,
    cutoff: float,
    cfg: PipelineConfig,
) -> np.ndarray:
    """Averaged-periodogram maxima for samples from the fitted lognormal at a fixed bandwidth."""
    maxima = Parallel(n_jobs=cfg.n_jobs)(
        delayed(_density_replicate)(fit, count, bandwidth, grid, omegas, cutoff, cfg, r)
        for r in range(cfg.bootstrap_replicates)
    )
    return np.asarray(maxima, dtype=float)


def density_permutation_null(
    basis: spectral.LombBasis, y: np.ndarray, cutoff: float, surrogates: int, seed: int
) -> np.ndarray:
    """One shared shuffle of the points per surrogate, applied to every (H,q) row."""
    if surrogates < 100:
        raise InputValidationError(f"need at least 100 surrogates, got {surrogates}")
    rng = philox_generator(derive_seed(seed, DENSITY_STREAM))
    above = basis.omegas > cutoff
    maxima = np.empty(surrogates)
    for i in range(surrogates):
        order = rng.permutation(y.shape[1])
        maxima[i] = basis.powers(y[:, order]).mean(axis=0)[above].max()
    return maxima


def density_branch(
    sample: SizeSample, fit: LognormalFit, bandwidth: float, cfg: PipelineConfig
) -> DensitySpectrum:
    estimate, trend = _spectral_estimates(sample, bandwidth, cfg)
    derivatives, t, y = density_series(sample, estimate, trend, cfg.hq_scan)

    omegas = spectral.default_omega_grid(t, cfg.omega_max, cfg.omega_bins)
    basis = spectral.LombBasis(t, omegas)
    pg = spectral.average_periodograms(
        [Periodogram(omegas=omegas, powers=p, low_omega_cutoff=basis.cutoff) for p in basis.powers(y)]
    )
    if cfg.null_model == "permutation":
        null = density_permutation_null(basis, y, pg.low_omega_cutoff, cfg.surrogates, cfg.seed)
    else:
        null = density_null(
            fit, sample.count, bandwidth, estimate.grid, omegas, pg.low_omega_cutoff, cfg
        )
    return DensitySpectrum(
        estimate=estimate,
        trend=trend,
        derivatives=derivatives,
        t=t,
        y=y,
        periodogram=pg,
        peaks=spectral.detect_peaks_against(pg, null, cfg.null_model),
    )


# ---------------------------------------------------------------------------
# Report helpers
# ---------------------------------------------------------------------------


def peak_summary(report: PeakReport) -> Dict[str, Any]:
    fundamental = report.fundamental
    summary: Dict[str, Any] = {
        "low_omega_cutoff": report.low_omega_cutoff,
        "null_model": report.null_model,
        "null_size": report.null_size,
        "significant_peaks": [
            {"omega": p.omega, "p_value": p.p_value, "scaling_ratio": p.scaling_ratio}
            for p in report.peaks
            if p.p_value < SIGNIFICANCE_LEVEL
        ],
        "fundamental": None,
        "harmonics": [],
    }
    if fundamental is not None:
        group = report.harmonic_groups[0]
        summary["fundamental"] = {
            "omega": fundamental.omega,
            "power": fundamental.power,
            "p_value": fundamental.p_value,
            "scaling_ratio": fundamental.scaling_ratio,
        }
        summary["harmonics"] = [
            {"k": k, "omega": w, "scaling_ratio": spectral.scaling_ratio(w)}
            for k, w in zip(group.harmonic_numbers, group.members)
        ]
    return summary


def _skipped(reason: str) -> Dict[str, str]:
    return {"status": "skipped", "reason": reason}


# ---------------------------------------------------------------------------
# Orchestrator
# ---------------------------------------------------------------------------


class AnalysisPipeline:
    """Runs the analysis stages in order and writes the report bundle under `cfg.out`."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.sample: Optional[SizeSample] = None
        self.holdings: Optional[HoldingsTable] = None
        self.returns: Optional[ReturnsTable] = None
        self.fit: Optional[LognormalFit] = None
        self.residual_series: Optional[ResidualSeries] = None
        self.residual_periodogram: Optional[Periodogram] = None
        self.residual_peaks: Optional[PeakReport] = None
        self.bandwidth: Optional[float] = None
        self.estimate: Optional[DensityEstimate] = None
        self.spectrum: Optional[DensitySpectrum] = None
        self.partition: Optional[LayerPartition] = None
        self.report: Dict[str, Any] = {}
        self.outputs: List[str] = []

    def _path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.cfg.out, name)

    def stages(self) -> List[Tuple[str, Callable[[], StageOutcome]]]:
        return [
            ("inputs", self.load_inputs),
            ("lognormal fit", self.fit_distribution),
            ("residual spectrum", self.residual_spectrum),
            ("density estimate", self.estimate_density),
            ("density spectrum", self.density_spectrum),
            ("peaks", self.write_peaks),
            ("layers", self.partition_layers),
            ("portfolio", self.portfolio_analytics),
            ("performance", self.performance),
            ("report", self.write_report),
        ]

    def run(self, on_stage: Optional[StageCallback] = None) -> Dict[str, Any]:
        for name, step in self.stages():
            with stage(name):
                ok, message = step()
            logger.debug("Stage %s: %s", name, message)
            if on_stage is not None:
                on_stage(name, ok, message)
        return self.report

    # -- stages -------------------------------------------------------------

    def load_inputs(self) -> StageOutcome:
        cfg = self.cfg
        if not cfg.sizes:
            raise InputValidationError("a sizes file is required")
        self.sample = dataio.load_sizes(cfg.sizes)
        if cfg.holdings:
            self.holdings = dataio.load_holdings(cfg.holdings)
        if cfg.returns:
            self.returns = dataio.load_returns(cfg.returns)
        os.makedirs(cfg.out, exist_ok=True)
        self.report["sample"] = {
            "count": self.sample.count,
            "currency": self.sample.currency_label,
        }
        return True, f"{self.sample.count} sizes loaded"

    def fit_distribution(self) -> StageOutcome:
        self.fit = distfit.fit_lognormal(self.sample)
        ccdf = distfit.empirical_ccdf(self.sample)
        dataio.write_series_csv(self._path("ccdf.csv"), {"size": ccdf.sizes, "ccdf": ccdf.ccdf})
        self.report["lognormal_fit"] = self.fit.model_dump()
        return True, f"mu={self.fit.mu:.3f} sigma={self.fit.sigma:.3f}"

    def residual_spectrum(self) -> StageOutcome:
        series, pg, peaks = residual_branch(self.sample, self.fit, self.cfg)
        self.residual_series, self.residual_periodogram, self.residual_peaks = series, pg, peaks
        dataio.write_series_csv(
            self._path("residuals.csv"), {"ln_size": series.ln_sizes, "delta_f": series.delta_f}
        )
        dataio.write_series_csv(self._path("periodogram.csv"), {"omega": pg.omegas, "power": pg.powers})
        return True, self._peak_message(peaks)

    def estimate_density(self) -> StageOutcome:
        cfg = self.cfg
        self.bandwidth = density.select_bandwidth_cv(self.sample, cfg.bandwidth_candidates())
        self.estimate = density.kde(self.sample, self.bandwidth, cfg.grid_size)
        dataio.write_series_csv(
            self._path("kde.csv"), {"ln_size": self.estimate.grid, "density": self.estimate.density}
        )
        half, selected, double = density.kde_family(self.sample, self.bandwidth, cfg.grid_size)
        dataio.write_series_csv(
            self._path("kde_bandwidths.csv"),
            {
                "ln_size": selected.grid,
                "density_half": half.density,
                "density_selected": selected.density,
                "density_double": double.density,
            },
        )
        self.report["bandwidth"] = {
            "selected": self.bandwidth,
            "candidates": cfg.bandwidth_candidates(),
            "spectral": self.bandwidth * cfg.spectral_bandwidth_factor,
            "trend": self.bandwidth * cfg.spectral_bandwidth_factor * cfg.trend_bandwidth_factor,
        }
        return True, f"bandwidth {self.bandwidth:.4g}"

    def density_spectrum(self) -> StageOutcome:
        self.spectrum = density_branch(self.sample, self.fit, self.bandwidth, self.cfg)
        ln_size, value, hs, qs = [], [], [], []
        for d in self.spectrum.derivatives:
            ln_size.extend(d.grid.tolist())
            value.extend(d.values.tolist())
            hs.extend([d.H] * d.grid.size)
            qs.extend([d.q] * d.grid.size)
        dataio.write_series_csv(
            self._path("hq_derivative.csv"), {"ln_size": ln_size, "value": value, "H": hs, "q": qs}
        )
        pg = self.spectrum.periodogram
        dataio.write_series_csv(self._path("periodogram_hq.csv"), {"omega": pg.omegas, "power": pg.powers})
        return True, self._peak_message(self.spectrum.peaks)

    def write_peaks(self) -> StageOutcome:
        residual = self.residual_peaks.model_dump()
        fundamental = self.residual_peaks.fundamental
        residual["oscillation"] = (
            spectral.fit_logperiodic_residual(self.residual_series, fundamental.omega).model_dump()
            if fundamental is not None
            else None
        )
        dataio.write_json(
            self._path("peaks.json"),
            {"residual": residual, "density": self.spectrum.peaks.model_dump()},
        )
        self.report["spectral"] = {
            "primary": "density",
            "density": peak_summary(self.spectrum.peaks),
            "residual": peak_summary(self.residual_peaks),
        }
        return True, "peaks.json written"

    def partition_layers(self) -> StageOutcome:
        cfg = self.cfg
        found = layers.partition_from_density(self.estimate, cfg.layer_ratio, cfg.layer_tolerance)
        self.partition = layers.assign(self.sample, found.boundaries, found.modes)
        table = layers.layer_stats(self.partition, self.holdings)

        boundaries = self.partition.boundaries.tolist()
        payload = {
            "boundaries": boundaries,
            "boundaries_rounded": [round_sig(b) for b in boundaries],
            "ratios": self.partition.ratios,
            "mean_ratio": table.mean_ratio,
            "modes": self.partition.modes,
            "layers": [s.model_dump() for s in table.layers],
        }
        dataio.write_json(self._path("layers.json"), payload)
        dataio.write_series_csv(
            self._path("assignments.csv"),
            {
                "entity_id": self.sample.entity_ids,
                "layer": [self.partition.assignments[e] for e in self.sample.entity_ids],
            },
        )
        self.report["layers"] = payload
        return True, f"{self.partition.layer_count} layers"

    def portfolio_analytics(self) -> StageOutcome:
        if self.holdings is None:
            self.report["portfolio"] = _skipped("no holdings input")
            return False, "skipped (no holdings input)"

        partition, holdings = self.partition, self.holdings
        layer_ids = list(range(1, partition.layer_count + 1))

        sim = portfolio.layer_similarity_matrix(partition, holdings)
        columns: Dict[str, Any] = {"layer": layer_ids}
        for j in layer_ids:
            columns[str(j)] = sim.values[:, j - 1] * 100
        dataio.write_series_csv(self._path("similarity_matrix.csv"), columns)

        adj = portfolio.adjacency(partition, holdings)
        for name, matrix in (("adjacency_bin.csv", adj.m_bin), ("adjacency_frac.csv", adj.m_frac)):
            columns = {"layer": layer_ids}
            for c, asset in enumerate(adj.holding_order):
                columns[asset] = matrix[:, c]
            dataio.write_series_csv(self._path(name), columns)

        rows = portfolio.ubiquity_table(holdings)
        dataio.write_series_csv(
            self._path("ubiquity.csv"),
            {key: [row[key] for row in rows] for key in ("asset_id", "rank", "ubiquity_count", "market_cap")},
        )
        rows = portfolio.layer_cap_rows(partition, holdings)
        dataio.write_series_csv(
            self._path("layer_caps.csv"),
            {key: [row[key] for row in rows] for key in ("layer", "asset_id", "rank", "holders", "market_cap")},
        )

        section: Dict[str, Any] = {
            "status": "done",
            "sim_intra_percent": {str(l): sim.values[l - 1, l - 1] * 100 for l in layer_ids},
            "empty_layers": adj.empty_layers,
            "distinct_holdings": len(adj.holding_order),
            "layer_caps": [s.model_dump() for s in portfolio.layer_cap_summary(partition, holdings)],
        }
        try:
            market = portfolio.layer_market_similarity(partition, holdings)
            section["sim_market_percent"] = {
                str(l): (v * 100 if v is not None else None) for l, v in market.items()
            }
        except InputValidationError as e:
            section["sim_market_percent"] = _skipped(e.detail)
        try:
            section["ubiquity_fit"] = portfolio.ubiquity_cap_fit(holdings, self.cfg.rank_threshold).model_dump()
        except (InputValidationError, NumericError) as e:
            logger.warning("Ubiquity fit skipped: %s", e.detail)
            section["ubiquity_fit"] = _skipped(e.detail)
        self.report["portfolio"] = section
        return True, f"{len(adj.holding_order)} distinct holdings"

    def performance(self) -> StageOutcome:
        if self.returns is None:
            self.report["performance"] = _skipped("no returns input")
            return False, "skipped (no returns input)"

        cfg, partition = self.cfg, self.partition
        full = portfolio.layer_performance(partition, self.returns, cfg.periods_per_year)
        years = {
            str(y): portfolio.layer_performance(partition, self.returns, cfg.periods_per_year, year=y).model_dump()
            for y in self.returns.years()
        }
        size_effect = None
        k = min(3, partition.layer_count // 2)
        if k >= 1:
            top = partition.layer_count
            try:
                size_effect = portfolio.size_effect_test(
                    full, partition, list(range(top - k + 1, top + 1)), list(range(1, k + 1))
                ).model_dump()
            except InputValidationError as e:
                size_effect = _skipped(e.detail)

        dataio.write_json(
            self._path("performance.json"),
            {"full": full.model_dump(), "years": years, "size_effect": size_effect},
        )
        self.report["performance"] = {
            "status": "done",
            "median_sharpe_by_layer": {str(s.layer): s.median for s in full.layers},
            "universe": full.universe.model_dump(),
            "size_effect": size_effect,
        }
        return True, f"{len(full.sharpe)} Sharpe ratios"

    def write_report(self) -> StageOutcome:
        self.report["config"] = self.cfg.model_dump()
        self.report["outputs"] = sorted(self.outputs + ["report.json"])
        dataio.write_json(self._path("report.json"), self.report)
        return True, f"{len(self.outputs)} files in {self.cfg.out}"

    @staticmethod
    def _peak_message(peaks: PeakReport) -> str:
        f = peaks.fundamental
        if f is None:
            return "no peak above the low-omega cutoff"
        return f"omega={f.omega:.3f} p={f.p_value:.3g} ratio={f.scaling_ratio:.3f}"


def analyze(cfg: PipelineConfig, on_stage: Optional[StageCallback] = None) -> Dict[str, Any]:
    return AnalysisPipeline(cfg).run(on_stage)
