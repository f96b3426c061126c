import logging

import numpy as np
from scipy import stats

from dsiscan.errors import InputValidationError, NumericError
from dsiscan.schemas import CCDFSeries, LognormalFit, ResidualSeries, SizeSample

logger = logging.getLogger(__name__)


def lognormal_log_likelihood(sample: SizeSample, mu: float, sigma: float) -> float:
    if sigma <= 0:
        raise InputValidationError(f"sigma must be positive, got {sigma}")
    return float(np.sum(stats.lognorm.logpdf(sample.sizes, s=sigma, scale=np.exp(mu))))


def fit_lognormal(sample: SizeSample) -> LognormalFit:
    """Closed-form maximum-likelihood lognormal fit (population variance of ln S)."""
    if sample.count < 2:
        raise InputValidationError(f"lognormal fit needs at least 2 sizes, got {sample.count}")

    logs = sample.log_sizes
    mu = float(np.mean(logs))
    sigma = float(np.std(logs))
    if np.ptp(logs) == 0 or sigma <= 0:
        raise NumericError("all sizes are identical; lognormal fit is degenerate (sigma = 0)")

    fit = LognormalFit(
        mu=mu,
        sigma=sigma,
        log_likelihood=lognormal_log_likelihood(sample, mu, sigma),
        implied_mean=float(np.exp(mu + sigma ** 2 / 2)),
        implied_log_mode=float(np.exp(mu)),
        sample_count=sample.count,
    )
    logger.info(
        "Lognormal fit over %d sizes: mu=%.4f sigma=%.4f mean=%.4g",
        sample.count, fit.mu, fit.sigma, fit.implied_mean,
    )
    return fit


def lognormal_ccdf(sizes, fit: LognormalFit) -> np.ndarray:
    return stats.norm.sf((np.log(np.asarray(sizes, dtype=float)) - fit.mu) / fit.sigma)


def empirical_ccdf(sample: SizeSample) -> CCDFSeries:
    """Fraction of entities with size >= S at each distinct observed size."""
    if sample.count == 0:
        raise InputValidationError("empirical CCDF of an empty sample")
    sizes, counts = np.unique(sample.sizes, return_counts=True)
    at_least = sample.count - np.cumsum(counts) + counts
    return CCDFSeries(sizes=sizes, ccdf=at_least / sample.count)


def residuals(sample: SizeSample, fit: LognormalFit) -> ResidualSeries:
    """Fitted CCDF minus empirical CCDF at every distinct observed size."""
    emp = empirical_ccdf(sample)
    delta = lognormal_ccdf(emp.sizes, fit) - emp.ccdf
    return ResidualSeries(ln_sizes=np.log(emp.sizes), delta_f=delta)
