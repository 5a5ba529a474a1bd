"""Eight tests from the NIST SP 800-22 randomness battery.

Implemented: frequency (monobit), block frequency, runs, longest run of
ones, cumulative sums (forward and backward), spectral DFT, serial (two
p-values) and approximate entropy.  Battery verdicts follow the usual
two-level rule: the fraction of sequences with ``p >= alpha`` must sit in
``(1-alpha) +- 3 sqrt(alpha (1-alpha) / s)`` and the chi-square P-value of
the p-value histogram over ten bins must exceed 1e-4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .stream import SampleStream

UNIFORMITY_THRESHOLD = 1e-4
TEST_NAMES = ("frequency", "block_frequency", "cumulative_sums", "runs",
              "longest_run", "fft", "approximate_entropy", "serial")


# ---------------------------------------------------------------------------
# special functions


def erfc(x):
    return math.erfc(x)


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def igamc(a, x):
    """Regularised upper incomplete gamma ``Q(a, x)``.

    Series expansion of ``P`` below ``x = a + 1``, modified Lentz continued
    fraction for ``Q`` above it.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def igam(a, x):
    return 1.0 - igamc(a, x)


def _gamma_series(a, x, tol=1e-16, max_iter=100000):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * tol:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x, tol=1e-16, max_iter=100000):
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, max_iter):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


# ---------------------------------------------------------------------------
# bit sequences


@dataclass(frozen=True)
class BitSequence:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.size and b.max() > 1:
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", b)

    def __len__(self):
        return len(self.bits)

    @classmethod
    def from_bytes(cls, data):
        return cls(np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8)))


def bytes_to_bits(stream):
    """Unpack an 8-bit stream MSB first."""
    if stream.bit_depth != 8:
        raise ValueError(f"bytes_to_bits needs an 8-bit stream, got {stream.bit_depth}-bit")
    codes = stream.values.astype(np.int64) & 0xFF
    return BitSequence(np.unpackbits(codes.astype(np.uint8)))


def _bits(seq):
    if isinstance(seq, BitSequence):
        return seq.bits
    if isinstance(seq, SampleStream):
        return bytes_to_bits(seq).bits
    return np.asarray(seq, dtype=np.uint8)


# ---------------------------------------------------------------------------
# parameters


MIN_LENGTH = {
    "frequency": 100,
    "block_frequency": 100,
    "runs": 100,
    "longest_run": 128,
    "cumulative_sums": 100,
    "fft": 1000,
    "serial": 32,
    "approximate_entropy": 64,
}


def default_params(n):
    """Per-test parameters recommended by SP 800-22 for sequence length ``n``."""
    log2n = int(math.floor(math.log2(max(n, 2))))
    return {
        "block_frequency": {"M": 128},
        "serial": {"m": max(2, min(16, log2n - 3))},
        "approximate_entropy": {"m": max(1, min(10, log2n - 6))},
    }


def _check_length(name, n):
    need = MIN_LENGTH[name]
    if n < need:
        raise ValueError(f"{name} test needs at least {need} bits, got {n}")


# ---------------------------------------------------------------------------
# the tests


def frequency(seq):
    b = _bits(seq)
    n = len(b)
    s = 2 * int(b.sum()) - n
    return erfc(abs(s) / math.sqrt(n) / math.sqrt(2.0))


def block_frequency(seq, M=128):
    b = _bits(seq)
    n = len(b)
    blocks = n // M
    if blocks < 1:
        raise ValueError(f"block_frequency needs at least one block of {M} bits")
    pi = b[:blocks * M].reshape(blocks, M).mean(axis=1)
    chi2 = 4.0 * M * float(np.sum((pi - 0.5) ** 2))
    return igamc(blocks / 2.0, chi2 / 2.0)


def runs(seq):
    b = _bits(seq)
    n = len(b)
    pi = float(b.mean())
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v_obs = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    num = abs(v_obs - 2.0 * n * pi * (1 - pi))
    return erfc(num / (2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)))


_LONGEST_RUN_TABLE = (
    # (min n, M, class lower bound, class upper bound, probabilities)
    (750000, 10000, 10, 16, (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6272, 128, 4, 9, (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, 1, 4, (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _longest_runs(blocks):
    """Longest run of ones in each row of a 0/1 matrix."""
    m = blocks.shape[1]
    padded = np.zeros((blocks.shape[0], m + 2), dtype=np.int8)
    padded[:, 1:-1] = blocks
    d = np.diff(padded, axis=1)
    out = np.zeros(blocks.shape[0], dtype=np.int64)
    rows_s, cols_s = np.nonzero(d == 1)
    rows_e, cols_e = np.nonzero(d == -1)
    # starts and ends pair up in row-major order
    lengths = cols_e - cols_s
    np.maximum.at(out, rows_s, lengths)
    return out


def longest_run(seq):
    b = _bits(seq)
    n = len(b)
    if n < MIN_LENGTH["longest_run"]:
        raise ValueError(f"longest_run needs at least {MIN_LENGTH['longest_run']} bits, got {n}")
    for min_n, M, lo, hi, probs in _LONGEST_RUN_TABLE:
        if n >= min_n:
            break
    blocks = n // M
    longest = _longest_runs(b[:blocks * M].reshape(blocks, M))
    classes = np.clip(longest, lo, hi) - lo
    v = np.bincount(classes, minlength=hi - lo + 1)
    probs = np.asarray(probs)
    chi2 = float(np.sum((v - blocks * probs) ** 2 / (blocks * probs)))
    return igamc((len(probs) - 1) / 2.0, chi2 / 2.0)


def _cusum_p(z, n):
    sqn = math.sqrt(n)
    total1 = 0.0
    for k in range(int(math.floor((-n / z + 1) / 4)), int(math.floor((n / z - 1) / 4)) + 1):
        total1 += normal_cdf((4 * k + 1) * z / sqn) - normal_cdf((4 * k - 1) * z / sqn)
    total2 = 0.0
    for k in range(int(math.floor((-n / z - 3) / 4)), int(math.floor((n / z - 1) / 4)) + 1):
        total2 += normal_cdf((4 * k + 3) * z / sqn) - normal_cdf((4 * k + 1) * z / sqn)
    return min(1.0, max(0.0, 1.0 - total1 + total2))


def cumulative_sums(seq):
    """Forward and backward cumulative-sums p-values."""
    b = _bits(seq)
    n = len(b)
    x = 2 * b.astype(np.int64) - 1
    z_fwd = int(np.max(np.abs(np.cumsum(x))))
    z_bwd = int(np.max(np.abs(np.cumsum(x[::-1]))))
    return [_cusum_p(z_fwd, n), _cusum_p(z_bwd, n)]


def fft(seq):
    """Discrete Fourier transform (spectral) test."""
    b = _bits(seq)
    n = len(b)
    x = 2.0 * b - 1.0
    mod = np.abs(np.fft.fft(x))[: n // 2]
    threshold = math.sqrt(math.log(1.0 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = float(np.count_nonzero(mod < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return erfc(abs(d) / math.sqrt(2.0))


def _pattern_counts(b, m):
    """Counts of every overlapping m-bit pattern, wrapping around the end."""
    if m == 0:
        return np.array([len(b)])
    n = len(b)
    ext = np.concatenate([b, b[:m - 1]]).astype(np.int64)
    codes = np.zeros(n, dtype=np.int64)
    for j in range(m):
        codes = (codes << 1) | ext[j:j + n]
    return np.bincount(codes, minlength=1 << m)


def _psi2(b, m):
    if m <= 0:
        return 0.0
    n = len(b)
    counts = _pattern_counts(b, m).astype(float)
    return (1 << m) / n * float(np.dot(counts, counts)) - n


def serial(seq, m=16):
    b = _bits(seq)
    n = len(b)
    if m < 2:
        raise ValueError("serial test needs m >= 2")
    p0, p1, p2 = _psi2(b, m), _psi2(b, m - 1), _psi2(b, m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    return [igamc(2.0 ** (m - 2), d1 / 2.0), igamc(2.0 ** (m - 3), d2 / 2.0)]


def _phi(b, m):
    n = len(b)
    counts = _pattern_counts(b, m)
    c = counts[counts > 0] / n
    return float(np.sum(c * np.log(c)))


def approximate_entropy(seq, m=10):
    b = _bits(seq)
    n = len(b)
    apen = _phi(b, m) - _phi(b, m + 1)
    chi2 = 2.0 * n * (math.log(2.0) - apen)
    return igamc(2.0 ** (m - 1), max(chi2, 0.0) / 2.0)


_TESTS = {
    "frequency": frequency,
    "block_frequency": block_frequency,
    "runs": runs,
    "longest_run": longest_run,
    "cumulative_sums": cumulative_sums,
    "fft": fft,
    "serial": serial,
    "approximate_entropy": approximate_entropy,
}


def run_test(name, seq, params=None):
    """p-value (or list of p-values) of one named test.

    Unlike the bare test functions this enforces the recommended minimum
    sequence length, so it is the entry point for battery use.
    """
    try:
        fn = _TESTS[name]
    except KeyError:
        raise ValueError(f"unknown test {name!r}; choose from {sorted(_TESTS)}") from None
    b = _bits(seq)
    _check_length(name, len(b))
    return fn(b, **(params or {}))


# ---------------------------------------------------------------------------
# battery


def proportion_band(n_sequences, alpha=0.01):
    p = 1.0 - alpha
    half = 3.0 * math.sqrt(alpha * (1.0 - alpha) / n_sequences)
    return p - half, p + half


def uniformity_pvalue(pvalues, bins=10):
    """Chi-square P-value of the p-value histogram over ``bins`` equal bins."""
    p = np.asarray(pvalues, dtype=float)
    idx = np.minimum((p * bins).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    expected = len(p) / bins
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return igamc((bins - 1) / 2.0, chi2 / 2.0)


@dataclass
class TestOutcome:
    name: str
    p_values: list[float]
    uniformity_P: float
    proportion: float
    passed: bool
    variant: int = 0


@dataclass
class BatteryResult:
    per_test: dict[str, TestOutcome]
    n_sequences: int
    seq_len: int
    alpha: float
    band: tuple[float, float]
    params: dict = field(default_factory=dict)

    @property
    def total_passed(self):
        return sum(o.passed for o in self.per_test.values())

    def rows(self):
        return [
            {"test": o.name, "uniformity_P": o.uniformity_P, "proportion": o.proportion,
             "result": "success" if o.passed else "failure"}
            for o in self.per_test.values()
        ]

    def to_dict(self):
        return {
            "n_sequences": self.n_sequences,
            "seq_len": self.seq_len,
            "alpha": self.alpha,
            "proportion_band": list(self.band),
            "uniformity_threshold": UNIFORMITY_THRESHOLD,
            "params": self.params,
            "tests": self.rows(),
            "total_passed": self.total_passed,
            "total_tests": len(self.per_test),
        }


def _judge(name, pvals, alpha, band, variant=0):
    pvals = list(map(float, pvals))
    prop = sum(p >= alpha for p in pvals) / len(pvals)
    unif = uniformity_pvalue(pvals)
    ok = band[0] <= prop <= band[1] and unif > UNIFORMITY_THRESHOLD
    return TestOutcome(name, pvals, unif, prop, ok, variant)


def _worst(outcomes):
    # failures first, then the smaller uniformity P-value
    return min(outcomes, key=lambda o: (o.passed, o.uniformity_P, o.proportion))


def run_battery(source, n_sequences, seq_len, alpha=0.01, tests=TEST_NAMES, params=None):
    """Run the battery over ``n_sequences`` consecutive ``seq_len``-bit sequences.

    ``source`` is a BitSequence, a 0/1 array or an 8-bit SampleStream.
    """
    bits = _bits(source)
    need = n_sequences * seq_len
    if len(bits) < need:
        raise ValueError(f"battery needs {need} bits, source has {len(bits)}")
    prm = default_params(seq_len)
    for k, v in (params or {}).items():
        prm.setdefault(k, {}).update(v)
    seqs = bits[:need].reshape(n_sequences, seq_len)
    band = proportion_band(n_sequences, alpha)
    per_test = {}
    for name in tests:
        kw = prm.get(name, {})
        results = [run_test(name, s, kw) for s in seqs]
        if isinstance(results[0], list):
            cols = list(zip(*results))
            outcomes = [_judge(name, c, alpha, band, i) for i, c in enumerate(cols)]
            per_test[name] = _worst(outcomes)
        else:
            per_test[name] = _judge(name, results, alpha, band)
    return BatteryResult(per_test=per_test, n_sequences=n_sequences, seq_len=seq_len,
                         alpha=alpha, band=band, params=prm)
