import numpy as np
import pytest

from dsiscan.errors import InputValidationError
from dsiscan.utils import (
    counter_uniforms,
    derive_seed,
    geometric_candidates,
    local_maxima,
    local_minima,
    round_sig,
)


def test_counter_uniforms_open_interval_and_reproducible():
    u = counter_uniforms(42, 10_000)
    assert u.shape == (10_000,)
    assert np.all((u > 0) & (u < 1))
    assert np.array_equal(u, counter_uniforms(42, 10_000))
    assert not np.array_equal(u, counter_uniforms(43, 10_000))


def test_counter_uniforms_slices_match_one_long_draw():
    full = counter_uniforms(5, 23)
    pieces = np.concatenate([counter_uniforms(5, 7), counter_uniforms(5, 16, offset=7)])
    assert np.array_equal(full, pieces)


def test_counter_uniforms_rejects_negative_seed():
    with pytest.raises(InputValidationError):
        counter_uniforms(-1, 3)


def test_derive_seed_separates_streams():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)


def test_geometric_candidates():
    values = geometric_candidates(0.05, 1.0, 12)
    assert len(values) == 12
    assert values[0] == pytest.approx(0.05)
    assert values[-1] == pytest.approx(1.0)
    with pytest.raises(InputValidationError):
        geometric_candidates(1.0, 0.5, 3)


def test_round_sig():
    assert round_sig(1_234_000_000) == 1_200_000_000
    assert round_sig(0.0) == 0.0


def test_local_extrema():
    values = [0, 2, 1, 1, 3, 3, 0]
    assert local_maxima(values).tolist() == [1, 4]
    assert local_minima(values).tolist() == [2]
