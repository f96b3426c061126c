import logging
import math
from typing import List, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.interpolate import PchipInterpolator

from dsiscan.errors import InputValidationError, NumericError
from dsiscan.schemas import (
    ComplexExponent,
    GriddedDensity,
    GrowthModelParams,
    LogPeriodicDensity,
    SizeSample,
)
from dsiscan.utils import counter_uniforms

logger = logging.getLogger(__name__)

CDF_TABLE_POINTS = 16384
MIN_TABLE_POINTS_PER_WAVELENGTH = 8
MIN_EVOLUTION_POINTS_PER_WAVELENGTH = 16
DEFAULT_K_MAX = 3


# ---------------------------------------------------------------------------
# Frequency predictions and exponents
# ---------------------------------------------------------------------------


def predict_omega(gamma: float, kappa: int) -> float:
    """Angular log-frequency 2*pi / (kappa * ln(1 + gamma)) after kappa steps."""
    if gamma <= 0:
        raise InputValidationError(f"gamma must be positive, got {gamma}")
    if kappa < 1:
        raise InputValidationError(f"kappa must be at least 1, got {kappa}")
    return 2 * math.pi / (kappa * math.log1p(gamma))


def complex_exponents(gamma: float, n: float, k_max: int = DEFAULT_K_MAX) -> List[ComplexExponent]:
    if gamma <= 0:
        raise InputValidationError(f"gamma must be positive, got {gamma}")
    if n <= 1:
        raise InputValidationError(f"n must exceed 1, got {n}")
    if n * gamma >= 1:
        raise InputValidationError(f"n * gamma must be < 1, got {n * gamma}")
    if k_max < 0:
        raise InputValidationError(f"k_max must be nonnegative, got {k_max}")

    log_step = math.log1p(gamma)
    real = -math.log1p(-n * gamma) / log_step
    return [
        ComplexExponent(k=k, real_part=real, imag_part=2 * math.pi * k / log_step)
        for k in range(k_max + 1)
    ]


def logperiodic_exponent(params: GrowthModelParams) -> float:
    """Tail exponent m = n + (n/2)(n+1)gamma of the log-periodic density."""
    n, g = params.n, params.gamma
    return n + 0.5 * n * (n + 1) * g


def logperiodic_omega(params: GrowthModelParams) -> float:
    return predict_omega(params.gamma, params.kappa)


def params_for_omega(
    omega: float,
    kappa: int,
    exponent: float,
    T0: float = 1.0,
    w0: float = 1.0,
    w1: float = 0.3,
) -> GrowthModelParams:
    """Model parameters whose density shows angular log-frequency `omega` and tail exponent `exponent`."""
    if omega <= 0:
        raise InputValidationError(f"omega must be positive, got {omega}")
    if kappa < 1:
        raise InputValidationError(f"kappa must be at least 1, got {kappa}")
    gamma = math.expm1(2 * math.pi / (kappa * omega))
    # m = n + (gamma/2)(n^2 + n), solved for the positive root
    b = 1 + gamma / 2
    n = (-b + math.sqrt(b * b + 2 * gamma * exponent)) / gamma
    return GrowthModelParams(n=n, T0=T0, gamma=gamma, kappa=kappa, w0=w0, w1=w1)


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def sample_boltzmann(T0: float, count: int, seed: int) -> SizeSample:
    if T0 <= 0:
        raise InputValidationError(f"T0 must be positive, got {T0}")
    u = counter_uniforms(seed, count)
    return SizeSample.from_sizes(-T0 * np.log1p(-u))


def boltzmann_density(T0: float, sizes) -> np.ndarray:
    s = np.asarray(sizes, dtype=float)
    return np.exp(-s / T0) / T0


def tsallis_quantile(params: GrowthModelParams, u) -> np.ndarray:
    n, T0 = params.n, params.T0
    return n * T0 * np.expm1(-np.log1p(-np.asarray(u, dtype=float)) / (n - 1))


def sample_tsallis(params: GrowthModelParams, count: int, seed: int) -> SizeSample:
    return SizeSample.from_sizes(tsallis_quantile(params, counter_uniforms(seed, count)))


def tsallis_ccdf(params: GrowthModelParams, sizes) -> np.ndarray:
    s = np.asarray(sizes, dtype=float)
    return (1 + s / (params.n * params.T0)) ** (-(params.n - 1))


def sample_lognormal(mu: float, sigma: float, count: int, seed: int) -> SizeSample:
    if sigma <= 0:
        raise InputValidationError(f"sigma must be positive, got {sigma}")
    u = counter_uniforms(seed, count)
    return SizeSample.from_sizes(np.exp(mu + sigma * stats.norm.ppf(u)))


def _check_range(s_min: float, s_max: float) -> Tuple[float, float]:
    if s_min <= 0 or s_max <= s_min:
        raise InputValidationError(f"need 0 < s_min < s_max, got [{s_min}, {s_max}]")
    return math.log(s_min), math.log(s_max)


def logperiodic_pdf(params: GrowthModelParams, s_min: float, s_max: float) -> LogPeriodicDensity:
    """S^-m [w0 + w1 cos(omega ln S)] normalized on [s_min, s_max].

    The normalization integral is taken in u = ln S, the cosine part with
    quad's oscillatory weight.
    """
    ua, ub = _check_range(s_min, s_max)
    m = logperiodic_exponent(params)
    omega = logperiodic_omega(params)

    decay = 1.0 - m
    base, base_err = integrate.quad(
        lambda u: math.exp(decay * (u - ua)), ua, ub, epsabs=0.0, epsrel=1e-12, limit=200
    )
    wave = 0.0
    if params.w1 != 0:
        wave, _ = integrate.quad(
            lambda u: math.exp(decay * (u - ua)),
            ua,
            ub,
            weight="cos",
            wvar=omega,
            epsabs=0.0,
            epsrel=1e-12,
            limit=400,
        )
    total = params.w0 * base + params.w1 * wave
    if total <= 0:
        raise NumericError("log-periodic density does not normalize on the given range")
    return LogPeriodicDensity(
        params=params,
        s_min=s_min,
        s_max=s_max,
        exponent=m,
        omega=omega,
        log_norm=decay * ua + math.log(total),
    )


def logperiodic_cdf_table(
    params: GrowthModelParams, s_min: float, s_max: float, points: int = CDF_TABLE_POINTS
) -> Tuple[np.ndarray, np.ndarray]:
    """(ln S, CDF) on a uniform ln S grid, from the cumulative trapezoid rule."""
    ua, ub = _check_range(s_min, s_max)
    omega = logperiodic_omega(params)
    u = np.linspace(ua, ub, points)
    per_wavelength = (2 * math.pi / omega) / (u[1] - u[0])
    if per_wavelength < MIN_TABLE_POINTS_PER_WAVELENGTH:
        raise NumericError(
            f"CDF table resolves only {per_wavelength:.1f} points per log-period; "
            "narrow the range or lower omega"
        )
    m = logperiodic_exponent(params)
    weight = np.exp((1 - m) * (u - ua)) * (params.w0 + params.w1 * np.cos(omega * u))
    cdf = integrate.cumulative_trapezoid(weight, u, initial=0.0)
    return u, cdf / cdf[-1]


def sample_logperiodic(
    params: GrowthModelParams, s_min: float, s_max: float, count: int, seed: int
) -> SizeSample:
    u_grid, cdf = logperiodic_cdf_table(params, s_min, s_max)
    if count == 0:
        return SizeSample.from_sizes([])
    u = counter_uniforms(seed, count)
    sizes = np.exp(np.interp(u, cdf, u_grid))
    return SizeSample.from_sizes(np.clip(sizes, s_min, s_max))


# ---------------------------------------------------------------------------
# Multiplicative evolution
# ---------------------------------------------------------------------------


def _check_evolution_grid(params: GrowthModelParams, initial: GriddedDensity) -> None:
    wavelength = params.kappa * math.log1p(params.gamma)
    widest = float(np.max(np.diff(initial.log_sizes)))
    if widest > wavelength / MIN_EVOLUTION_POINTS_PER_WAVELENGTH:
        raise NumericError(
            f"grid step {widest:.4g} in ln S is coarser than 1/16 of the predicted "
            f"log-period {wavelength:.4g}"
        )


def _evolve_once(params: GrowthModelParams, sizes: np.ndarray, density: np.ndarray) -> np.ndarray:
    """P'(y) = (1 - gamma n) P((y - gamma n T0) / (1 + gamma)); zero where the preimage leaves the grid."""
    g, n = params.gamma, params.n
    preimage = (sizes - g * n * params.T0) / (1 + g)
    log_sizes = np.log(sizes)
    inside = preimage >= sizes[0]
    out = np.zeros_like(density)
    if inside.any():
        interpolant = PchipInterpolator(log_sizes, density, extrapolate=False)
        out[inside] = (1 - g * n) * interpolant(np.log(preimage[inside]))
    return np.maximum(np.nan_to_num(out, nan=0.0), 0.0)


def evolve_distribution(
    params: GrowthModelParams,
    initial: GriddedDensity,
    steps: int,
    renormalize: bool = True,
) -> GriddedDensity:
    """Apply the single-step growth operator `steps` times.

    With `renormalize` the mass (integral of P dS) is restored to the
    initial mass after every step.
    """
    if steps < 0:
        raise InputValidationError(f"steps must be nonnegative, got {steps}")
    _check_evolution_grid(params, initial)
    if steps == 0:
        return initial

    sizes = initial.sizes
    density = np.array(initial.density)
    mass = initial.mass()
    for _ in range(steps):
        density = _evolve_once(params, sizes, density)
        if renormalize:
            current = float(np.trapz(density * sizes, np.log(sizes)))
            if current <= 0:
                raise NumericError("evolved density lost all mass on the grid")
            density *= mass / current
    return GriddedDensity(sizes=sizes, density=density)


def evolve_cohorts(params: GrowthModelParams, initial: GriddedDensity, epochs: int) -> GriddedDensity:
    """Superpose cohorts: each epoch evolves all mass by kappa steps, then a fresh `initial` cohort enters."""
    if epochs < 0:
        raise InputValidationError(f"epochs must be nonnegative, got {epochs}")
    total = initial
    for epoch in range(epochs):
        evolved = evolve_distribution(params, total, params.kappa, renormalize=False)
        total = GriddedDensity(sizes=initial.sizes, density=evolved.density + initial.density)
        logger.debug("Cohort epoch %d done", epoch + 1)
    return total


def log_density_residuals(
    density: GriddedDensity, s_lo: float, s_hi: float
) -> Tuple[np.ndarray, np.ndarray]:
    """ln P minus its least-squares power-law line, on [s_lo, s_hi] where P > 0."""
    keep = (density.sizes >= s_lo) & (density.sizes <= s_hi) & (density.density > 0)
    if keep.sum() < 8:
        raise NumericError("fewer than 8 positive density points in the detrending window")
    t = density.log_sizes[keep]
    log_p = np.log(density.density[keep])
    line = np.polynomial.polynomial.Polynomial.fit(t, log_p, 1)
    return t, log_p - line(t)
