from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from dsiscan import config
from dsiscan.utils import geometric_candidates


def _frozen_array(value, dtype=float) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    return arr


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# ---------------------------------------------------------------------------
# Input tables
# ---------------------------------------------------------------------------


class SizeSample(ArrayModel):
    entity_ids: List[str]
    sizes: np.ndarray
    currency_label: str = "USD"

    @field_validator("sizes", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.sizes.ndim != 1 or self.sizes.size != len(self.entity_ids):
            raise ValueError("entity_ids and sizes must have the same length")
        if self.sizes.size and not np.all(np.isfinite(self.sizes) & (self.sizes > 0)):
            raise ValueError("every size must be finite and positive")
        if len(set(self.entity_ids)) != len(self.entity_ids):
            raise ValueError("entity_ids must be unique")
        return self

    @classmethod
    def from_sizes(cls, sizes, prefix: str = "E", currency_label: str = "USD") -> "SizeSample":
        values = np.asarray(sizes, dtype=float).ravel()
        width = len(str(max(values.size - 1, 0)))
        ids = [f"{prefix}{i:0{width}d}" for i in range(values.size)]
        return cls(entity_ids=ids, sizes=values, currency_label=currency_label)

    @property
    def count(self) -> int:
        return int(self.sizes.size)

    @property
    def log_sizes(self) -> np.ndarray:
        return np.log(self.sizes)

    def scaled(self, factor: float) -> "SizeSample":
        return SizeSample(
            entity_ids=list(self.entity_ids),
            sizes=self.sizes * factor,
            currency_label=self.currency_label,
        )


class HoldingsTable(ArrayModel):
    entity_ids: List[str]
    asset_ids: List[str]
    weights: np.ndarray
    market_caps: np.ndarray  # NaN marks a missing cap

    @field_validator("weights", "market_caps", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def _check_invariants(self):
        n = len(self.entity_ids)
        if len(self.asset_ids) != n or self.weights.size != n or self.market_caps.size != n:
            raise ValueError("holdings columns must have the same length")
        if n and not np.all(np.isfinite(self.weights) & (self.weights >= 0)):
            raise ValueError("weights must be finite and nonnegative")
        known = ~np.isnan(self.market_caps)
        if np.any(self.market_caps[known] <= 0) or np.any(np.isinf(self.market_caps)):
            raise ValueError("market caps must be positive when present")
        if len(set(zip(self.entity_ids, self.asset_ids))) != n:
            raise ValueError("(entity_id, asset_id) pairs must be unique")
        return self

    @property
    def position_count(self) -> int:
        return len(self.entity_ids)

    def portfolios(self) -> Dict[str, Dict[str, float]]:
        """entity -> {asset: weight}, positions with zero weight dropped."""
        books: Dict[str, Dict[str, float]] = {}
        for entity, asset, weight in zip(self.entity_ids, self.asset_ids, self.weights):
            if weight > 0:
                books.setdefault(entity, {})[asset] = float(weight)
        return books

    def weight_sums(self) -> Dict[str, float]:
        sums: Dict[str, float] = {}
        for entity, weight in zip(self.entity_ids, self.weights):
            sums[entity] = sums.get(entity, 0.0) + float(weight)
        return sums

    def holding_counts(self) -> Dict[str, int]:
        return {entity: len(book) for entity, book in self.portfolios().items()}

    def asset_caps(self) -> Dict[str, float]:
        """First reported cap per asset; assets without any cap are absent."""
        caps: Dict[str, float] = {}
        for asset, cap in zip(self.asset_ids, self.market_caps):
            if asset not in caps and not np.isnan(cap):
                caps[asset] = float(cap)
        return caps

    def distinct_assets(self) -> List[str]:
        return sorted(set(self.asset_ids))


class ReturnSeries(ArrayModel):
    dates: np.ndarray
    returns: np.ndarray

    @field_validator("dates", mode="before")
    @classmethod
    def _as_dates(cls, v):
        return _frozen_array(v, dtype="datetime64[D]")

    @field_validator("returns", mode="before")
    @classmethod
    def _as_returns(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.dates.size != self.returns.size:
            raise ValueError("dates and returns must have the same length")
        if self.dates.size > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        if self.returns.size and not np.all(np.isfinite(self.returns) & (self.returns > -1)):
            raise ValueError("returns must be finite and greater than -1")
        return self

    def for_year(self, year: int) -> "ReturnSeries":
        years = self.dates.astype("datetime64[Y]").astype(int) + 1970
        keep = years == year
        return ReturnSeries(dates=self.dates[keep], returns=self.returns[keep])

    def years(self) -> List[int]:
        return sorted(set((self.dates.astype("datetime64[Y]").astype(int) + 1970).tolist()))


class ReturnsTable(ArrayModel):
    series: Dict[str, ReturnSeries]

    def years(self) -> List[int]:
        found = set()
        for s in self.series.values():
            found.update(s.years())
        return sorted(found)


# ---------------------------------------------------------------------------
# Distribution fit
# ---------------------------------------------------------------------------


class LognormalFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: float
    sigma: float = Field(gt=0)
    log_likelihood: float
    implied_mean: float = Field(gt=0)
    implied_log_mode: float = Field(gt=0)
    sample_count: int = Field(ge=0, default=0)

    @model_validator(mode="after")
    def _check_invariants(self):
        expected_mean = np.exp(self.mu + self.sigma ** 2 / 2)
        if not np.isclose(self.implied_mean, expected_mean, rtol=1e-9):
            raise ValueError("implied_mean must equal exp(mu + sigma^2/2)")
        if not np.isclose(self.implied_log_mode, np.exp(self.mu), rtol=1e-9):
            raise ValueError("implied_log_mode must equal exp(mu)")
        return self


class CCDFSeries(ArrayModel):
    sizes: np.ndarray
    ccdf: np.ndarray

    @field_validator("sizes", "ccdf", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)


class ResidualSeries(ArrayModel):
    ln_sizes: np.ndarray
    delta_f: np.ndarray

    @field_validator("ln_sizes", "delta_f", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.ln_sizes.size != self.delta_f.size:
            raise ValueError("ln_sizes and delta_f must have the same length")
        if self.ln_sizes.size > 1 and not np.all(np.diff(self.ln_sizes) > 0):
            raise ValueError("ln_sizes must be strictly increasing")
        if np.any(np.abs(self.delta_f) > 1 + 1e-12):
            raise ValueError("|delta_F| must not exceed 1")
        return self


# ---------------------------------------------------------------------------
# Density estimation
# ---------------------------------------------------------------------------


class DensityEstimate(ArrayModel):
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float = Field(gt=0)
    sample_count: int = Field(ge=0, default=0)

    @field_validator("grid", "density", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.grid.size != self.density.size:
            raise ValueError("grid and density must have the same length")
        if self.grid.size > 1 and not np.all(np.diff(self.grid) > 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(self.density < 0):
            raise ValueError("density must be nonnegative")
        return self

    def integral(self) -> float:
        return float(np.trapz(self.density, self.grid))


class DerivativeSeries(ArrayModel):
    grid: np.ndarray
    values: np.ndarray
    H: float = Field(ge=0, le=1)
    q: float = Field(gt=0, lt=1)

    @field_validator("grid", "values", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.grid.size != self.values.size:
            raise ValueError("grid and values must have the same length")
        return self


# ---------------------------------------------------------------------------
# Spectral analysis
# ---------------------------------------------------------------------------

NullModel = Literal["permutation", "bootstrap"]


class Periodogram(ArrayModel):
    omegas: np.ndarray
    powers: np.ndarray
    low_omega_cutoff: float = Field(gt=0)
    t: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None

    @field_validator("omegas", "powers", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @field_validator("t", "y", mode="before")
    @classmethod
    def _as_optional_array(cls, v):
        return None if v is None else _frozen_array(v)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.omegas.size != self.powers.size:
            raise ValueError("omegas and powers must have the same length")
        if np.any(self.omegas <= 0):
            raise ValueError("omegas must be positive")
        if np.any(self.powers < 0):
            raise ValueError("powers must be nonnegative")
        if self.t is not None:
            span = float(self.t.max() - self.t.min())
            if not np.isclose(self.low_omega_cutoff, 2 * np.pi / span, rtol=1e-12):
                raise ValueError("low_omega_cutoff must equal 2*pi / (max t - min t)")
        return self


class Peak(BaseModel):
    omega: float
    power: float
    p_value: float = Field(ge=0, le=1)
    scaling_ratio: float


class ExcludedPeak(BaseModel):
    omega: float
    power: float
    reason: str


class HarmonicGroup(BaseModel):
    fundamental: float
    members: List[float] = []
    harmonic_numbers: List[int] = []


class PeakReport(BaseModel):
    peaks: List[Peak]
    harmonic_groups: List[HarmonicGroup]
    scaling_ratios: List[float]
    excluded: List[ExcludedPeak] = []
    low_omega_cutoff: float
    null_model: NullModel
    null_size: int

    @property
    def fundamental(self) -> Optional[Peak]:
        if not self.harmonic_groups:
            return None
        omega = self.harmonic_groups[0].fundamental
        return next(p for p in self.peaks if p.omega == omega)


class OscillationFit(BaseModel):
    A: float
    B: float = Field(ge=0)
    phi: float = Field(ge=0, lt=2 * np.pi)
    omega: float = Field(gt=0)


# ---------------------------------------------------------------------------
# Generative model
# ---------------------------------------------------------------------------


class GrowthModelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: float = Field(default=2.0, gt=1)
    T0: float = Field(default=1.0, gt=0)
    gamma: float = Field(default=0.014, gt=0)
    kappa: int = Field(default=100, ge=1)
    w0: float = Field(default=1.0, gt=0)
    w1: float = 0.0

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.gamma * self.n >= 1:
            raise ValueError(f"gamma * n must be < 1, got {self.gamma * self.n}")
        if abs(self.w1) >= self.w0:
            raise ValueError("|w1| must be < w0 for a positive density")
        return self


class ComplexExponent(BaseModel):
    k: int
    real_part: float
    imag_part: float


class GriddedDensity(ArrayModel):
    sizes: np.ndarray
    density: np.ndarray

    @field_validator("sizes", "density", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.sizes.size != self.density.size or self.sizes.size < 2:
            raise ValueError("need at least two grid points with matching density values")
        if np.any(self.sizes <= 0) or not np.all(np.diff(self.sizes) > 0):
            raise ValueError("size grid must be positive and strictly increasing")
        if np.any(self.density < 0) or not np.all(np.isfinite(self.density)):
            raise ValueError("density must be finite and nonnegative")
        return self

    @property
    def log_sizes(self) -> np.ndarray:
        return np.log(self.sizes)

    def mass(self) -> float:
        return float(np.trapz(self.density * self.sizes, self.log_sizes))


class LogPeriodicDensity(BaseModel):
    model_config = ConfigDict(frozen=True)

    params: GrowthModelParams
    s_min: float = Field(gt=0)
    s_max: float = Field(gt=0)
    exponent: float
    omega: float
    log_norm: float

    def pdf(self, sizes) -> np.ndarray:
        s = np.asarray(sizes, dtype=float)
        inside = (s >= self.s_min) & (s <= self.s_max)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.log(s)
            value = np.exp(-self.exponent * u - self.log_norm) * (
                self.params.w0 + self.params.w1 * np.cos(self.omega * u)
            )
        return np.where(inside, value, 0.0)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


class LayerPartition(ArrayModel):
    boundaries: np.ndarray
    assignments: Dict[str, int] = {}
    modes: List[float] = []

    @field_validator("boundaries", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @model_validator(mode="after")
    def _check_invariants(self):
        if np.any(self.boundaries <= 0):
            raise ValueError("boundaries must be positive")
        if self.boundaries.size > 1 and not np.all(np.diff(self.boundaries) > 0):
            raise ValueError("boundaries must be strictly increasing")
        top = self.layer_count
        if any(not 1 <= layer <= top for layer in self.assignments.values()):
            raise ValueError(f"layer indices must lie in 1..{top}")
        return self

    @property
    def layer_count(self) -> int:
        return int(self.boundaries.size) + 1

    @property
    def ratios(self) -> List[float]:
        b = self.boundaries
        return [float(b[i] / b[i - 1]) for i in range(1, b.size)]

    def members(self, layer: int) -> List[str]:
        return sorted(e for e, lay in self.assignments.items() if lay == layer)


class LayerSummary(BaseModel):
    layer: int
    lower: float
    upper: Optional[float]
    count: int
    mean_holdings: Optional[float]
    ratio: Optional[float] = None
    missing_holdings: int = 0


class LayerStats(BaseModel):
    layers: List[LayerSummary]
    mean_ratio: Optional[float]
    universe_size: int

    @model_validator(mode="after")
    def _check_counts(self):
        if sum(layer.count for layer in self.layers) != self.universe_size:
            raise ValueError("layer counts must sum to the universe size")
        return self


# ---------------------------------------------------------------------------
# Portfolios
# ---------------------------------------------------------------------------


class SimilarityMatrix(ArrayModel):
    values: np.ndarray  # NaN where undefined
    pair_counts: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @field_validator("pair_counts", mode="before")
    @classmethod
    def _as_counts(cls, v):
        return _frozen_array(v, dtype=np.int64)

    @model_validator(mode="after")
    def _check_invariants(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("similarity matrix must be square")
        both = ~np.isnan(v) & ~np.isnan(v.T)
        if np.any(np.abs(v - v.T)[both] > 1e-12) or np.any(np.isnan(v) != np.isnan(v.T)):
            raise ValueError("similarity matrix must be symmetric")
        finite = v[~np.isnan(v)]
        if np.any(finite < 0) or np.any(finite > 1):
            raise ValueError("similarities must lie in [0, 1]")
        return self


class AdjacencyMatrices(ArrayModel):
    m_bin: np.ndarray
    m_frac: np.ndarray
    holding_order: List[str]
    ubiquity: List[int]
    empty_layers: List[int] = []

    @field_validator("m_frac", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @field_validator("m_bin", mode="before")
    @classmethod
    def _as_bits(cls, v):
        return _frozen_array(v, dtype=np.int8)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.m_bin.shape != self.m_frac.shape:
            raise ValueError("adjacency matrices must share a shape")
        if np.any(self.m_frac < 0) or np.any(self.m_frac > 1):
            raise ValueError("m_frac entries must lie in [0, 1]")
        if not np.array_equal(self.m_bin == 1, self.m_frac > 0):
            raise ValueError("m_bin must be 1 exactly where m_frac > 0")
        keys = [(-u, a) for u, a in zip(self.ubiquity, self.holding_order)]
        if keys != sorted(keys):
            raise ValueError("holding_order must be sorted by descending ubiquity")
        return self


class UbiquityFit(BaseModel):
    alpha: float
    stderr: float
    x_min: float
    n_tail: int
    rank_threshold: int


class LayerCapSummary(BaseModel):
    layer: Optional[int]  # None for every layer together
    holdings: int
    with_cap: int = 0
    median: Optional[float] = None
    q1: Optional[float] = None
    q3: Optional[float] = None
    min: Optional[float] = None
    max: Optional[float] = None


class LayerPerformance(BaseModel):
    layer: Optional[int]  # None for the whole universe
    count: int
    median: Optional[float] = None
    q1: Optional[float] = None
    q3: Optional[float] = None
    min: Optional[float] = None
    max: Optional[float] = None


class PerformanceSummary(BaseModel):
    sharpe: Dict[str, float]
    layers: List[LayerPerformance]
    universe: LayerPerformance
    periods_per_year: int
    min_observations: int
    year: Optional[int] = None
    excluded_no_returns: int = 0
    excluded_short: int = 0
    excluded_degenerate: int = 0


class SizeEffectTest(BaseModel):
    upper_layers: List[int]
    lower_layers: List[int]
    upper_median: Optional[float]
    lower_median: Optional[float]
    statistic: float
    p_value: float


# ---------------------------------------------------------------------------
# Pipeline configuration
# ---------------------------------------------------------------------------


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sizes: Optional[str] = None
    holdings: Optional[str] = None
    returns: Optional[str] = None
    out: str = config.DSI_OUTPUT_DIR
    seed: int = Field(default=config.DSI_SEED, ge=0)
    surrogates: int = Field(default=config.DSI_SURROGATES, ge=100)
    bootstrap_replicates: int = Field(default=config.DSI_BOOTSTRAP_REPLICATES, ge=100)
    null_model: NullModel = config.DSI_NULL_MODEL
    omega_max: float = Field(default=config.DSI_OMEGA_MAX, gt=0)
    omega_bins: int = Field(default=config.DSI_OMEGA_BINS, ge=16)
    bandwidths: Optional[List[float]] = None
    grid_size: int = Field(default=config.DSI_GRID_SIZE, ge=64)
    spectral_bandwidth_factor: float = Field(default=config.DSI_SPECTRAL_BANDWIDTH_FACTOR, gt=0)
    trend_bandwidth_factor: float = Field(default=config.DSI_TREND_BANDWIDTH_FACTOR, gt=1)
    hq_scan: bool = True
    layer_ratio: float = Field(default=config.DSI_LAYER_RATIO, gt=1)
    layer_tolerance: float = Field(default=config.DSI_LAYER_TOLERANCE, gt=0)
    rank_threshold: int = Field(default=config.DSI_RANK_THRESHOLD, ge=0)
    periods_per_year: int = Field(default=config.DSI_PERIODS_PER_YEAR, ge=1)
    n_jobs: int = config.DSI_N_JOBS
    log_level: str = config.DSI_LOG_LEVEL

    @field_validator("n_jobs")
    @classmethod
    def _check_jobs(cls, v):
        if v == 0:
            raise ValueError("n_jobs must be a positive count or negative (-1 for every core)")
        return v

    @field_validator("bandwidths")
    @classmethod
    def _check_bandwidths(cls, v):
        if v is None:
            return v
        if len(v) < 2 or any(b <= 0 for b in v):
            raise ValueError("need at least two positive bandwidth candidates")
        return sorted(v)

    def bandwidth_candidates(self) -> List[float]:
        if self.bandwidths is not None:
            return list(self.bandwidths)
        return geometric_candidates(
            config.DSI_BANDWIDTH_MIN, config.DSI_BANDWIDTH_MAX, config.DSI_BANDWIDTH_COUNT
        )


class DensitySpectrum(ArrayModel):
    """Everything the density branch produces for one sample."""

    estimate: DensityEstimate
    trend: DensityEstimate
    derivatives: List[DerivativeSeries]
    t: np.ndarray
    y: np.ndarray  # one row per (H, q) pair
    periodogram: Periodogram
    peaks: Optional[PeakReport] = None

    @field_validator("t", "y", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)


class SynthConfig(BaseModel):
    """Parameters of `synth`; `omega` (with `exponent`) overrides gamma and n."""

    model_config = ConfigDict(extra="forbid")

    n: float = Field(default=2.0, gt=1)
    T0: float = Field(default=1.0, gt=0)
    gamma: float = Field(default=0.014, gt=0)
    kappa: int = Field(default=100, ge=1)
    w0: float = Field(default=1.0, gt=0)
    w1: float = 0.3
    omega: Optional[float] = Field(default=None, gt=0)
    exponent: Optional[float] = Field(default=None, gt=1)
    s_min: float = Field(default=1e5, gt=0)
    s_max: float = Field(default=1e11, gt=0)
    count: int = Field(default=479, ge=0)
    seed: int = Field(default=config.DSI_SEED, ge=0)
    out: str = "dsi_synth"
    log_level: str = config.DSI_LOG_LEVEL

    @model_validator(mode="after")
    def _check_range(self):
        if self.s_max <= self.s_min:
            raise ValueError("s_max must exceed s_min")
        return self
