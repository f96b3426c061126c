import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from scipy import signal

from dsiscan import config
from dsiscan.errors import InputValidationError, NumericError
from dsiscan.schemas import (
    ExcludedPeak,
    HarmonicGroup,
    NullModel,
    OscillationFit,
    Peak,
    PeakReport,
    Periodogram,
    ResidualSeries,
)
from dsiscan.utils import local_maxima, philox_generator

logger = logging.getLogger(__name__)

CUTOFF_REASON = "wavelength spans entire range"
HARMONIC_MIN_POWER_FRACTION = 0.05
_SURROGATE_CHUNK = 100


def scaling_ratio(omega: float) -> float:
    if omega <= 0:
        raise InputValidationError(f"omega must be positive, got {omega}")
    return math.exp(2 * math.pi / omega)


def low_omega_cutoff(t) -> float:
    t = np.asarray(t, dtype=float)
    span = float(t.max() - t.min())
    if span <= 0:
        raise InputValidationError("all t values are equal")
    return 2 * math.pi / span


def default_omega_grid(t, omega_max: float = config.DSI_OMEGA_MAX, bins: int = config.DSI_OMEGA_BINS) -> np.ndarray:
    """Linear grid from half the low-omega cutoff up to `omega_max`."""
    start = low_omega_cutoff(t) / 2
    if omega_max <= start:
        raise InputValidationError(
            f"omega_max={omega_max} lies below the grid start {start:.4g}"
        )
    if bins < 2:
        raise InputValidationError(f"need at least 2 omega bins, got {bins}")
    return np.linspace(start, omega_max, bins)


class LombBasis:
    """Fixed sample times and frequencies shared by many y vectors (surrogates, (H,q) pairs)."""

    def __init__(self, t, omegas):
        t = np.asarray(t, dtype=float)
        omegas = np.asarray(omegas, dtype=float)
        if t.size < 8:
            raise InputValidationError(f"Lomb periodogram needs at least 8 points, got {t.size}")
        if omegas.size == 0:
            raise InputValidationError("empty omega grid")
        if np.any(omegas <= 0):
            raise InputValidationError("omegas must be positive")

        self.t = t
        self.omegas = omegas
        self.cutoff = low_omega_cutoff(t)
        # powers do not depend on the origin of t
        self._centered_t = t - t.mean()

    def _row_powers(self, y: np.ndarray) -> np.ndarray:
        centered = y - y.mean()
        var = centered.var(ddof=1)
        if np.ptp(y) == 0 or var <= 0:
            raise NumericError("constant series has zero variance; Lomb power undefined")
        return signal.lombscargle(self._centered_t, centered, self.omegas) / var

    def powers(self, y) -> np.ndarray:
        """Normalized powers for one series (shape N) or a stack (shape M x N)."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.t.size:
            raise InputValidationError("t and y must have the same length")
        if y.ndim == 1:
            return self._row_powers(y)
        return np.vstack([self._row_powers(row) for row in y])

    def max_power(self, y, cutoff: Optional[float] = None) -> np.ndarray:
        """Global maximum of the powers over omegas above `cutoff` (default: own cutoff)."""
        cutoff = self.cutoff if cutoff is None else cutoff
        above = self.omegas > cutoff
        if not above.any():
            raise InputValidationError("no omega above the low-omega cutoff")
        return self.powers(y)[..., above].max(axis=-1)


def lomb(t, y, omegas) -> Periodogram:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size != y.size:
        raise InputValidationError("t and y must have the same length")
    basis = LombBasis(t, omegas)
    return Periodogram(
        omegas=basis.omegas,
        powers=basis.powers(y),
        low_omega_cutoff=basis.cutoff,
        t=t,
        y=y,
    )


def average_periodograms(periodograms: Sequence[Periodogram]) -> Periodogram:
    if not periodograms:
        raise InputValidationError("nothing to average")
    omegas = periodograms[0].omegas
    if any(not np.array_equal(p.omegas, omegas) for p in periodograms):
        raise InputValidationError("periodograms must share an omega grid")
    powers = np.mean([p.powers for p in periodograms], axis=0)
    cutoff = max(p.low_omega_cutoff for p in periodograms)
    return Periodogram(omegas=omegas, powers=powers, low_omega_cutoff=cutoff)


def permutation_null(pg: Periodogram, surrogates: int, rng_seed: int) -> np.ndarray:
    """Global maxima above the cutoff of periodograms of y shuffled over fixed t."""
    if surrogates < 100:
        raise InputValidationError(f"need at least 100 surrogates, got {surrogates}")
    if pg.t is None or pg.y is None:
        raise InputValidationError("periodogram carries no series to shuffle")

    basis = LombBasis(pg.t, pg.omegas)
    rng = philox_generator(rng_seed)
    maxima = []
    for start in range(0, surrogates, _SURROGATE_CHUNK):
        count = min(_SURROGATE_CHUNK, surrogates - start)
        shuffled = rng.permuted(np.tile(pg.y, (count, 1)), axis=1)
        maxima.append(basis.max_power(shuffled, pg.low_omega_cutoff))
    return np.concatenate(maxima)


def _harmonic_group(peaks: List[Peak], tolerance: float) -> HarmonicGroup:
    """Group peaks around the most powerful one.

    A peak is harmonic k >= 2 of w1 when its implied fundamental w/k lies
    within tolerance*w1 of w1 and its power reaches 5% of the fundamental's.
    The strongest peak wins each harmonic number.
    """
    fundamental = max(peaks, key=lambda p: (p.power, -p.omega))
    w1 = fundamental.omega
    best = {}
    for p in peaks:
        k = int(round(p.omega / w1))
        if k < 2:
            continue
        if abs(p.omega / k - w1) > tolerance * w1:
            continue
        if p.power < HARMONIC_MIN_POWER_FRACTION * fundamental.power:
            continue
        if k not in best or p.power > best[k].power:
            best[k] = p
    return HarmonicGroup(
        fundamental=w1,
        members=[best[k].omega for k in sorted(best)],
        harmonic_numbers=sorted(best),
    )


def detect_peaks_against(
    pg: Periodogram,
    null_maxima,
    null_model: NullModel,
    tolerance: float = config.DSI_HARMONIC_TOLERANCE,
) -> PeakReport:
    """Peak report with p-values from simulated null global maxima."""
    null_maxima = np.asarray(null_maxima, dtype=float)
    if null_maxima.size == 0:
        raise InputValidationError("empty null distribution")

    peaks, excluded = [], []
    for i in local_maxima(pg.powers):
        omega, power = float(pg.omegas[i]), float(pg.powers[i])
        if omega <= pg.low_omega_cutoff:
            excluded.append(ExcludedPeak(omega=omega, power=power, reason=CUTOFF_REASON))
            continue
        peaks.append(
            Peak(
                omega=omega,
                power=power,
                p_value=float(np.mean(null_maxima > power)),
                scaling_ratio=scaling_ratio(omega),
            )
        )

    groups = [_harmonic_group(peaks, tolerance)] if peaks else []
    report = PeakReport(
        peaks=peaks,
        harmonic_groups=groups,
        scaling_ratios=[p.scaling_ratio for p in peaks],
        excluded=excluded,
        low_omega_cutoff=pg.low_omega_cutoff,
        null_model=null_model,
        null_size=int(null_maxima.size),
    )
    if report.fundamental is not None:
        f = report.fundamental
        logger.info(
            "Fundamental omega=%.3f (p=%.3g, ratio %.3f) with %d harmonics",
            f.omega, f.p_value, f.scaling_ratio, len(groups[0].members),
        )
    return report


def detect_peaks(pg: Periodogram, surrogates: int, rng_seed: int) -> PeakReport:
    return detect_peaks_against(pg, permutation_null(pg, surrogates, rng_seed), "permutation")


def fit_oscillation(t, y, omega: float) -> OscillationFit:
    """Least-squares A + B cos(omega t + phi) at fixed omega."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 8:
        raise InputValidationError(f"oscillation fit needs at least 8 points, got {t.size}")
    if omega <= 0:
        raise InputValidationError(f"omega must be positive, got {omega}")

    design = np.column_stack([np.ones_like(t), np.cos(omega * t), np.sin(omega * t)])
    if np.ptp(t) == 0 or np.linalg.matrix_rank(design) < 3:
        raise NumericError("singular design: the sample times do not resolve the oscillation")
    (a, c, s), *_ = np.linalg.lstsq(design, y, rcond=None)

    # c = B cos(phi), s = -B sin(phi)
    b = math.hypot(c, s)
    phi = math.atan2(-s, c) % (2 * math.pi) if b > 0 else 0.0
    if phi >= 2 * math.pi:
        phi = 0.0
    return OscillationFit(A=float(a), B=float(b), phi=float(phi), omega=float(omega))


def fit_logperiodic_residual(series: ResidualSeries, omega: float) -> OscillationFit:
    return fit_oscillation(series.ln_sizes, series.delta_f, omega)
