import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from rngprobe import entropy as E
from rngprobe import lcg


def test_histogram_example():
    d = E.histogram(np.array([1, 1, 2]))
    assert d.support.tolist() == [1, 2]
    assert d.probs.tolist() == pytest.approx([2 / 3, 1 / 3])
    assert E.guessing_probability(d) == pytest.approx(2 / 3)
    assert d.mode() == 1 and d.total == 3


def test_histogram_of_empty_stream():
    with pytest.raises(ValueError):
        E.histogram(np.array([]))


def test_full_period_lcg_is_exactly_uniform():
    s = lcg.emit_bytes(lcg.LcgParams(a=1103515245, c=12345, m=2 ** 16, seed=1), 2 ** 16)
    d = E.histogram(s)
    assert E.guessing_probability(d) == 1 / 256
    assert E.min_entropy(d) == 8.0


@pytest.mark.parametrize("pg, bits", [(0.0137, 6.19), (1 / 256, 8.0), (0.5, 1.0), (1.0, 0.0)])
def test_min_entropy_of_guessing_probability(pg, bits):
    assert E.min_entropy(pg) == pytest.approx(bits, abs=5e-3)


def test_distribution_from_probs_validates():
    d = E.distribution_from_probs([0.25, 0.75])
    assert E.min_entropy(d) == pytest.approx(-math.log2(0.75))
    with pytest.raises(ValueError):
        E.distribution_from_probs([0.5, 0.6])


@pytest.mark.parametrize("sd_m, sd_e, db", [(2.0, 1.0, 6.0206), (10.0, 1.0, 20.0),
                                            (1.0, 1.0, 0.0), (math.sqrt(10), 1.0, 10.0)])
def test_snr_db(sd_m, sd_e, db):
    assert E.snr_db(sd_m, sd_e) == pytest.approx(db, abs=1e-4)


def test_snr_rejects_zero_noise():
    with pytest.raises(ValueError):
        E.snr_db(1.0, 0.0)


# ---------------------------------------------------------------------------
# conditional min-entropy


def brute_force_conditional(sd_m, sd_e, bits, fullscale, grid_points):
    """Every code's mass for every grid offset, straight from the normal CDF."""
    hi = 2 ** (bits - 1) - 1
    lo = -hi - 1
    step = fullscale / hi
    sd_q = math.sqrt(sd_m ** 2 - sd_e ** 2)
    edges = (np.arange(lo, hi) + 0.5) * step  # boundaries between consecutive codes
    best = 0.0
    for e in np.linspace(-5 * sd_e, 5 * sd_e, grid_points):
        cdf = norm.cdf((edges - e) / sd_q)
        mass = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
        best = max(best, mass.max())
    return -math.log2(best)


@pytest.mark.parametrize("sd_m, sd_e, fullscale", [(0.05, 0.02, 1.0), (0.2, 0.1, 1.0),
                                                   (0.6, 0.3, 1.0), (0.01, 0.005, 1.0)])
def test_conditional_matches_brute_force(sd_m, sd_e, fullscale):
    got = E.conditional_min_entropy(sd_m, sd_e, bits=8, fullscale=fullscale, grid_points=201)
    ref = brute_force_conditional(sd_m, sd_e, 8, fullscale, 201)
    assert got == pytest.approx(ref, abs=1e-9)


def test_conditional_tends_to_unconditional_as_noise_vanishes():
    sd_m = 8.5 / 32767
    h0 = E.gaussian_min_entropy(sd_m)
    h = E.conditional_min_entropy(sd_m, sd_m * 1e-6)
    assert h == pytest.approx(h0, abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-4, 0.05), st.floats(0.05, 0.95))
def test_conditional_never_exceeds_unconditional(sd_m, frac):
    assert E.conditional_min_entropy(sd_m, frac * sd_m) <= E.gaussian_min_entropy(sd_m) + 1e-12


def test_conditional_decreases_with_fullscale():
    sd_m, sd_e = 28 / 32767, 8.5 / 32767
    hs = [E.conditional_min_entropy(sd_m, sd_e, fullscale=f) for f in (0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(hs, hs[1:]))


def test_conditional_grid_refinement_stable():
    sd_m, sd_e = 28 / 32767, 8.5 / 32767
    coarse = E.conditional_min_entropy(sd_m, sd_e, grid_points=2001)
    fine = E.conditional_min_entropy(sd_m, sd_e, grid_points=8001)
    assert abs(coarse - fine) < 1e-3


def test_conditional_requires_quantum_excess():
    with pytest.raises(ValueError, match="no extractable"):
        E.conditional_min_entropy(0.1, 0.1)
    with pytest.raises(ValueError):
        E.conditional_min_entropy(0.1, 0.0)


def test_gaussian_min_entropy_wide_gaussian():
    # far wider than a code: mass of the central code ~ step * pdf(0)
    sd = 1000 / 32767
    expected = -math.log2((1 / 32767) / (sd * math.sqrt(2 * math.pi)))
    assert E.gaussian_min_entropy(sd) == pytest.approx(expected, abs=1e-4)


# ---------------------------------------------------------------------------
# correlation and spectra


def direct_autocorrelation(x, max_lag):
    x = x - x.mean()
    d = np.dot(x, x)
    return np.array([np.dot(x[:len(x) - k], x[k:]) / d for k in range(max_lag + 1)])


def test_autocorrelation_matches_direct_sum():
    x = np.random.default_rng(0).normal(size=5000).cumsum()
    r, _ = E.autocorrelation(x, 40)
    np.testing.assert_allclose(r, direct_autocorrelation(x, 40), atol=1e-12)


def test_autocorrelation_band_and_lag_zero():
    x = np.random.default_rng(1).integers(-100, 100, size=5_000_000)
    r, band = E.autocorrelation(x, 20)
    assert band == pytest.approx(4.472e-4, rel=1e-3)
    assert r[0] == 1.0
    assert np.mean(np.abs(r[1:]) > 3 * band) <= 0.05


def test_autocorrelation_alternating_sign():
    r, _ = E.autocorrelation(np.tile([1, -1], 500), 2)
    assert r[1] == pytest.approx(-1.0, abs=2e-3)
    assert r[2] == pytest.approx(1.0, abs=3e-3)


def test_autocorrelation_arguments():
    with pytest.raises(ValueError):
        E.autocorrelation(np.ones(10), 3)
    with pytest.raises(ValueError):
        E.autocorrelation(np.arange(10), 10)


def test_psd_tone_stands_out():
    rng = np.random.default_rng(2)
    t = np.arange(200_000)
    x = rng.normal(size=t.size) + 5.0 * np.sin(2 * np.pi * 0.125 * t)
    f, p = E.psd(x, 1024)
    assert E.peak_prominence_db(p) >= 30.0
    assert f[np.argmax(p)] == pytest.approx(0.125, abs=1 / 1024)


def test_psd_white_noise_is_flat():
    x = np.random.default_rng(3).normal(size=1_000_000)
    _, p = E.psd(x, 1024)
    db = 10 * np.log10(p[1:-1] / np.median(p[1:-1]))
    assert np.all(np.abs(db) <= 3.0)


def test_psd_parseval():
    x = np.random.default_rng(4).normal(0, 3.0, size=400_000)
    f, p = E.psd(x, 2048)
    power = np.sum(p) * (f[1] - f[0])
    assert power == pytest.approx(np.var(x), rel=0.05)


def test_psd_segment_validation():
    with pytest.raises(ValueError):
        E.psd(np.zeros(100), 48)
    with pytest.raises(ValueError):
        E.psd(np.zeros(100), 128)


def test_cross_correlation_extremes():
    a = np.random.default_rng(5).normal(size=1000)
    assert E.cross_correlation(a, a) == pytest.approx(1.0)
    assert E.cross_correlation(a, -2 * a + 3) == pytest.approx(-1.0)
    b = np.random.default_rng(6).normal(size=1000)
    assert abs(E.cross_correlation(a, b)) < 0.15
    with pytest.raises(ValueError):
        E.cross_correlation(a, b[:10])


def test_csv_writers(tmp_path):
    d = E.histogram(np.array([3, 3, 5]))
    E.histogram_csv(tmp_path / "h.csv", d)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "value,count,prob" and lines[1].startswith("3,2,")
    r, band = E.autocorrelation(np.arange(10.0), 3)
    E.autocorrelation_csv(tmp_path / "a.csv", r, band)
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 5
