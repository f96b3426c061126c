import math
from typing import Sequence

import numpy as np

from dsiscan.errors import InputValidationError

_DOUBLE_UNIT = 2.0 ** -53


def counter_uniforms(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Uniform draws on the open interval (0, 1) from a counter-based Philox stream.

    Draw `i` of the stream keyed by `seed` depends only on (seed, i), so any
    slice [offset, offset + count) can be regenerated on its own and
    concatenated slices equal one long draw.
    """
    if seed < 0:
        raise InputValidationError(f"seed must be nonnegative, got {seed}")
    if count < 0 or offset < 0:
        raise InputValidationError("count and offset must be nonnegative")
    if count == 0:
        return np.empty(0, dtype=float)

    block, skip = divmod(offset, 4)
    bitgen = np.random.Philox(key=seed, counter=block)
    raw = bitgen.random_raw(count + skip)[skip:]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _DOUBLE_UNIT


def derive_seed(seed: int, *labels: int) -> int:
    """Child seed for a labelled sub-stream (replicate index, branch, ...)."""
    state = np.random.SeedSequence([seed, *labels]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def philox_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def geometric_candidates(low: float, high: float, count: int) -> list:
    if low <= 0 or high <= low or count < 2:
        raise InputValidationError(
            f"invalid bandwidth candidate range [{low}, {high}] with {count} values"
        )
    return [float(v) for v in np.geomspace(low, high, count)]


def round_sig(value: float, digits: int = 2) -> float:
    """Round to `digits` significant figures (report style)."""
    if value == 0 or not math.isfinite(value):
        return value
    return round(value, digits - 1 - int(math.floor(math.log10(abs(value)))))


def local_maxima(values: Sequence[float]) -> np.ndarray:
    """Indices of interior local maxima (plateaus report their left edge)."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return np.empty(0, dtype=int)
    mask = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])
    return np.nonzero(mask)[0] + 1


def local_minima(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return np.empty(0, dtype=int)
    mask = (v[1:-1] < v[:-2]) & (v[1:-1] <= v[2:])
    return np.nonzero(mask)[0] + 1
