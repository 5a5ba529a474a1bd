import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rngprobe import sts
from rngprobe.stream import SampleStream

# worked examples published with SP 800-22
EPS100 = ("11001001000011111101101010100010001000010110100011"
          "00001000110100110001001100011001100010100010111000")
EPS128 = ("1100110000010101011011000100110011100000000000100100"
          "1101010100010001001111010110100000001101011111001100"
          "111001101101100010110010")


def bits(text):
    return np.array([int(c) for c in text], dtype=np.uint8)


@pytest.mark.parametrize("fn, seq, kw, expected", [
    (sts.frequency, "1011010101", {}, 0.527089),
    (sts.frequency, EPS100, {}, 0.109599),
    (sts.block_frequency, "0110011010", {"M": 3}, 0.801252),
    (sts.block_frequency, EPS100, {"M": 10}, 0.706438),
    (sts.runs, "1001101011", {}, 0.147232),
    (sts.runs, EPS100, {}, 0.500798),
    (sts.approximate_entropy, "0100110101", {"m": 3}, 0.261961),
    (sts.approximate_entropy, EPS100, {"m": 2}, 0.235301),
    (sts.longest_run, EPS128, {}, 0.180609),
])
def test_known_answer(fn, seq, kw, expected):
    assert fn(bits(seq), **kw) == pytest.approx(expected, abs=2e-5)


def test_cumulative_sums_known_answer():
    fwd, bwd = sts.cumulative_sums(bits(EPS100))
    assert fwd == pytest.approx(0.219194, abs=2e-6)
    assert bwd == pytest.approx(0.114866, abs=2e-6)


def test_cumulative_sums_short_example_against_mpmath():
    # the published 7-digit value for this example carries table rounding
    n, z = 10, 4
    phi = lambda t: mpmath.ncdf(t)  # noqa: E731
    r = mpmath.sqrt(n)
    lo1, hi1 = math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4)
    lo2 = math.floor((-n / z - 3) / 4)
    t1 = sum(phi((4 * k + 1) * z / r) - phi((4 * k - 1) * z / r) for k in range(lo1, hi1 + 1))
    t2 = sum(phi((4 * k + 3) * z / r) - phi((4 * k + 1) * z / r) for k in range(lo2, hi1 + 1))
    ref = float(1 - t1 + t2)
    assert sts.cumulative_sums(bits("1011010111"))[0] == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(0.4116588, abs=1e-4)


def naive_spectral_p(b):
    n = len(b)
    x = 2.0 * b - 1.0
    t = np.arange(n)
    mags = [abs(np.sum(x * np.exp(-2j * np.pi * k * t / n))) for k in range(n // 2)]
    threshold = math.sqrt(math.log(20.0) * n)
    n1 = sum(m < threshold for m in mags)
    d = (n1 - 0.95 * n / 2) / math.sqrt(n * 0.95 * 0.05 / 4)
    return float(mpmath.erfc(abs(d) / mpmath.sqrt(2)))


@pytest.mark.parametrize("seq", ["1001010011", EPS100])
def test_fft_against_naive_dft(seq):
    assert sts.fft(bits(seq)) == pytest.approx(naive_spectral_p(bits(seq)), rel=1e-12)


def test_fft_detects_periodic_sequence():
    b = np.tile([1, 1, 0, 0], 1024).astype(np.uint8)
    assert sts.fft(b) < 1e-6


def test_serial_known_answer():
    p1, p2 = sts.serial(bits("0011011101"), m=3)
    assert p1 == pytest.approx(0.808792, abs=2e-6)
    assert p2 == pytest.approx(0.670320, abs=2e-6)


@pytest.mark.parametrize("a, x", [(0.5, 0.1), (0.5, 3.0), (4.5, 2.0), (4.5, 9.0),
                                  (32.0, 30.0), (512.0, 600.0), (2.0 ** 14, 2.0 ** 14 + 50)])
def test_igamc_against_mpmath(a, x):
    ref = float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))
    assert sts.igamc(a, x) == pytest.approx(ref, rel=1e-10, abs=1e-300)
    assert sts.igam(a, x) + sts.igamc(a, x) == pytest.approx(1.0)


def test_igamc_domain():
    assert sts.igamc(3.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        sts.igamc(0.0, 1.0)
    with pytest.raises(ValueError):
        sts.igamc(1.0, -1.0)


@pytest.mark.parametrize("n, half", [(1000, 0.0094392), (100, 0.02985)])
def test_proportion_band(n, half):
    lo, hi = sts.proportion_band(n, 0.01)
    assert lo == pytest.approx(0.99 - half, abs=1e-6)
    assert hi == pytest.approx(0.99 + half, abs=1e-6)


def test_uniformity_of_flat_histogram():
    p = (np.arange(1000) + 0.5) / 1000
    assert sts.uniformity_pvalue(p) == pytest.approx(1.0)
    assert sts.uniformity_pvalue(np.full(1000, 0.05)) < 1e-100


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_symmetric_tests_invariant_under_complement(seed):
    b = np.random.default_rng(seed).integers(0, 2, 2048).astype(np.uint8)
    c = 1 - b
    for fn in (sts.frequency, sts.block_frequency, sts.runs, sts.fft):
        assert fn(b) == pytest.approx(fn(c), rel=1e-9)
    assert sts.cumulative_sums(b) == pytest.approx(sts.cumulative_sums(c), rel=1e-9)
    assert sts.serial(b, 4) == pytest.approx(sts.serial(c, 4), rel=1e-9)
    assert sts.approximate_entropy(b, 3) == pytest.approx(sts.approximate_entropy(c, 3), rel=1e-9)


@pytest.mark.parametrize("name", sts.TEST_NAMES)
def test_constant_sequence_fails_every_test(name):
    p = sts.run_test(name, np.zeros(4096, dtype=np.uint8), sts.default_params(4096).get(name))
    assert max(np.atleast_1d(p)) < 0.01


@pytest.mark.parametrize("name", sts.TEST_NAMES)
def test_run_test_enforces_minimum_length(name):
    short = np.ones(sts.MIN_LENGTH[name] - 1, dtype=np.uint8)
    with pytest.raises(ValueError, match=str(sts.MIN_LENGTH[name])):
        sts.run_test(name, short)


def test_unknown_test_name():
    with pytest.raises(ValueError, match="unknown test"):
        sts.run_test("poker", np.ones(200, dtype=np.uint8))


def test_bytes_to_bits_msb_first():
    s = SampleStream(values=np.array([0x80, 0x01]), bit_depth=8, signed=False)
    assert sts.bytes_to_bits(s).bits.tolist() == [1, 0, 0, 0, 0, 0, 0, 0] + [0] * 7 + [1]
    with pytest.raises(ValueError):
        sts.bytes_to_bits(SampleStream(values=np.array([1]), bit_depth=16))


def test_bit_sequence_rejects_non_binary():
    with pytest.raises(ValueError):
        sts.BitSequence(np.array([0, 2]))


def test_battery_on_good_generator_passes():
    rng = np.random.default_rng(11)
    res = sts.run_battery(rng.integers(0, 2, 100 * 20_000), 100, 20_000)
    assert res.total_passed >= len(sts.TEST_NAMES) - 1
    d = res.to_dict()
    assert d["total_tests"] == len(sts.TEST_NAMES) and len(d["tests"]) == len(sts.TEST_NAMES)


def test_battery_on_biased_source_fails_frequency():
    rng = np.random.default_rng(12)
    biased = (rng.random(50 * 10_000) < 0.52).astype(np.uint8)
    res = sts.run_battery(biased, 50, 10_000, tests=("frequency", "runs"))
    assert not res.per_test["frequency"].passed


def test_battery_needs_enough_bits():
    with pytest.raises(ValueError, match="needs"):
        sts.run_battery(np.ones(100, dtype=np.uint8), 10, 1000)


def test_worst_variant_reported_for_two_valued_tests():
    rng = np.random.default_rng(13)
    res = sts.run_battery(rng.integers(0, 2, 40 * 4096), 40, 4096, tests=("cumulative_sums",))
    o = res.per_test["cumulative_sums"]
    assert o.variant in (0, 1) and len(o.p_values) == 40


def test_default_params_scale_with_length():
    assert sts.default_params(10 ** 5)["serial"]["m"] == 13
    assert sts.default_params(10 ** 6)["serial"]["m"] == 16
    assert sts.default_params(10 ** 5)["approximate_entropy"]["m"] == 10
    assert math.isfinite(sts.igamc(2.0 ** 15, 2.0 ** 15))
