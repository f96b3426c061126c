import math

import numpy as np
import pytest

from dsiscan import spectral
from dsiscan.errors import InputValidationError, NumericError
from dsiscan.schemas import Periodogram, ResidualSeries
from dsiscan.utils import counter_uniforms, philox_generator


@pytest.fixture
def uneven_t():
    u = np.sort(counter_uniforms(11, 479))
    return 13.8 * (u - u[0]) / (u[-1] - u[0])


def test_scaling_ratio():
    assert spectral.scaling_ratio(2.5) == pytest.approx(12.35, abs=0.01)
    assert spectral.scaling_ratio(2 * math.pi) == pytest.approx(math.e)
    with pytest.raises(InputValidationError):
        spectral.scaling_ratio(0.0)


def test_low_omega_cutoff():
    assert spectral.low_omega_cutoff([1.0, 3.0, 2.0]) == pytest.approx(math.pi)
    with pytest.raises(InputValidationError):
        spectral.low_omega_cutoff([1.0, 1.0])


def test_lomb_finds_pure_cosine(uneven_t):
    omegas = spectral.default_omega_grid(uneven_t)
    pg = spectral.lomb(uneven_t, np.cos(2.5 * uneven_t), omegas)
    peak = pg.omegas[np.argmax(pg.powers)]
    assert abs(peak - 2.5) <= omegas[1] - omegas[0]
    assert pg.low_omega_cutoff == pytest.approx(2 * math.pi / 13.8)


def test_lomb_matches_fft_on_even_samples():
    n = 64
    t = np.arange(n, dtype=float)
    y = philox_generator(3).normal(size=n)
    k = np.arange(1, n // 2)
    pg = spectral.lomb(t, y, 2 * math.pi * k / n)
    fft = np.abs(np.fft.fft(y - y.mean())[k]) ** 2 / n
    assert np.allclose(pg.powers * y.var(ddof=1), fft, rtol=1e-9)


def test_lomb_ignores_affine_changes_of_y(uneven_t):
    omegas = spectral.default_omega_grid(uneven_t)
    y = np.cos(2.5 * uneven_t) + 0.3 * np.sin(uneven_t ** 1.5)
    base = spectral.lomb(uneven_t, y, omegas).powers
    changed = spectral.lomb(uneven_t, -3.0 * y + 7.0, omegas).powers
    assert np.allclose(changed, base, rtol=0, atol=1e-10)


def test_lomb_ignores_translation_of_t(uneven_t):
    omegas = spectral.default_omega_grid(uneven_t)
    y = np.cos(2.5 * uneven_t) + 0.3 * np.sin(uneven_t ** 1.5)
    base = spectral.lomb(uneven_t, y, omegas).powers
    moved = spectral.lomb(uneven_t + 25.0, y, omegas).powers
    assert np.allclose(moved, base, rtol=0, atol=1e-10)


def test_lomb_constant_series():
    t = np.linspace(0, 10, 50)
    with pytest.raises(NumericError):
        spectral.lomb(t, np.ones_like(t), spectral.default_omega_grid(t))


def test_basis_stack_matches_single_rows(uneven_t):
    omegas = spectral.default_omega_grid(uneven_t, bins=64)
    basis = spectral.LombBasis(uneven_t, omegas)
    rows = np.vstack([np.sin(uneven_t), np.cos(3 * uneven_t) + uneven_t])
    stacked = basis.powers(rows)
    assert np.allclose(stacked[0], basis.powers(rows[0]))
    assert np.allclose(stacked[1], basis.powers(rows[1]))
    with pytest.raises(InputValidationError):
        basis.powers(rows[:, :-1])


def test_average_periodograms():
    omegas = np.linspace(1, 2, 5)
    a = Periodogram(omegas=omegas, powers=np.ones(5), low_omega_cutoff=0.5)
    b = Periodogram(omegas=omegas, powers=3 * np.ones(5), low_omega_cutoff=0.7)
    avg = spectral.average_periodograms([a, b])
    assert np.allclose(avg.powers, 2.0)
    assert avg.low_omega_cutoff == 0.7


def test_permutation_null_is_seeded(uneven_t):
    pg = spectral.lomb(uneven_t, np.sin(uneven_t), spectral.default_omega_grid(uneven_t, bins=64))
    first = spectral.permutation_null(pg, 150, rng_seed=9)
    assert first.shape == (150,)
    assert np.array_equal(first, spectral.permutation_null(pg, 150, rng_seed=9))
    with pytest.raises(InputValidationError):
        spectral.permutation_null(pg, 50, rng_seed=9)


def test_detect_peaks_on_noisy_cosine(uneven_t):
    noise = philox_generator(5).normal(scale=0.3, size=uneven_t.size)
    y = np.cos(2.5 * uneven_t) + noise
    pg = spectral.lomb(uneven_t, y, spectral.default_omega_grid(uneven_t))
    report = spectral.detect_peaks(pg, 200, rng_seed=1)
    assert report.fundamental.omega == pytest.approx(2.5, abs=0.1)
    assert report.fundamental.p_value < 0.01
    assert report.null_model == "permutation"
    assert report.null_size == 200
    assert all(p.omega > report.low_omega_cutoff for p in report.peaks)


def _spiky_periodogram():
    omegas = np.arange(1, 41) * 0.25
    powers = np.zeros(40)
    for omega, power in [(2.5, 10.0), (3.75, 4.0), (5.0, 3.0), (7.5, 0.3), (8.25, 2.0)]:
        powers[int(round(omega / 0.25)) - 1] = power
    return Periodogram(omegas=omegas, powers=powers, low_omega_cutoff=0.5)


def test_harmonics_use_implied_fundamental():
    report = spectral.detect_peaks_against(_spiky_periodogram(), [1.0, 2.5, 3.5, 20.0], "bootstrap")
    group = report.harmonic_groups[0]
    assert group.fundamental == 2.5
    assert group.harmonic_numbers == [2, 3]
    assert group.members == [5.0, 8.25]
    assert report.fundamental.p_value == 0.25


def test_peaks_below_cutoff_are_excluded():
    pg = Periodogram(
        omegas=np.arange(1, 41) * 0.25,
        powers=np.where(np.arange(40) == 1, 50.0, 0.0) + np.where(np.arange(40) == 9, 10.0, 0.0),
        low_omega_cutoff=0.6,
    )
    report = spectral.detect_peaks_against(pg, [1.0], "bootstrap")
    assert [e.omega for e in report.excluded] == [0.5]
    assert report.excluded[0].reason == spectral.CUTOFF_REASON
    assert report.fundamental.omega == 2.5


def test_fit_oscillation_recovers_parameters(uneven_t):
    y = 0.1 + 0.5 * np.cos(3.0 * uneven_t + 1.0)
    fit = spectral.fit_oscillation(uneven_t, y, 3.0)
    assert fit.A == pytest.approx(0.1, abs=1e-9)
    assert fit.B == pytest.approx(0.5, abs=1e-9)
    assert fit.phi == pytest.approx(1.0, abs=1e-9)


def test_fit_logperiodic_residual(uneven_t):
    series = ResidualSeries(ln_sizes=uneven_t, delta_f=0.02 * np.cos(2.5 * uneven_t + 4.0))
    fit = spectral.fit_logperiodic_residual(series, 2.5)
    assert fit.B == pytest.approx(0.02, abs=1e-9)
    assert fit.phi == pytest.approx(4.0, abs=1e-9)


def test_fit_oscillation_singular_design():
    with pytest.raises(NumericError):
        spectral.fit_oscillation(np.full(10, 2.0), np.arange(10.0), 1.0)
