"""Guessing probability, min-entropy and the usual correlation diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.special import ndtr

from .stream import SampleStream


@dataclass(frozen=True)
class Distribution:
    support: np.ndarray
    probs: np.ndarray
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    def mode(self):
        return self.support[int(np.argmax(self.counts))]


def _as_array(stream):
    if isinstance(stream, SampleStream):
        return stream.values
    return np.asarray(stream)


def histogram(stream):
    values = _as_array(stream)
    if len(values) == 0:
        raise ValueError("histogram of an empty stream")
    support, counts = np.unique(values, return_counts=True)
    return Distribution(support=support, probs=counts / counts.sum(), counts=counts)


def distribution_from_probs(probs, support=None):
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must be non-negative and sum to 1")
    support = np.arange(len(probs)) if support is None else np.asarray(support)
    return Distribution(support=support, probs=probs, counts=np.zeros(len(probs), dtype=int))


def guessing_probability(dist):
    """Probability of the single most likely value."""
    return float(np.max(dist.probs))


def min_entropy(dist_or_pg):
    """``-log2`` of the guessing probability (accepts a Distribution or a float)."""
    pg = dist_or_pg if isinstance(dist_or_pg, float) else guessing_probability(dist_or_pg)
    return -math.log2(pg) if pg < 1.0 else 0.0


def snr_db(sd_m, sd_e):
    if sd_e <= 0:
        raise ValueError("electronic noise SD must be positive")
    return 10.0 * math.log10(sd_m ** 2 / sd_e ** 2)


def _max_bin_mass(mean, sd, bits, fullscale):
    """Largest probability any ADC code receives from N(mean, sd**2).

    Codes follow the quantiser: ``round(v / step)`` clamped to the signed
    range, with ``step = fullscale / (2**(bits-1) - 1)``.  For equal-width
    interior bins the heaviest is the one nearest the mean, so only that
    bin and the two clipped edge bins need evaluating.
    """
    lo = -(1 << (bits - 1))
    hi = (1 << (bits - 1)) - 1
    step = fullscale / hi
    mean = np.asarray(mean, dtype=float)
    k = np.clip(np.round(mean / step), lo + 1, hi - 1)
    upper = ndtr(((k + 0.5) * step - mean) / sd)
    lower = ndtr(((k - 0.5) * step - mean) / sd)
    centre = upper - lower
    bottom = ndtr(((lo + 0.5) * step - mean) / sd)
    top = 1.0 - ndtr(((hi - 0.5) * step - mean) / sd)
    return np.maximum(centre, np.maximum(bottom, top))


def conditional_min_entropy(sd_m, sd_e, bits=16, fullscale=1.0, grid_points=2001, span=5.0):
    """Worst-case min-entropy of the quantised output given the electronic noise.

    The measured signal is modelled as quantum N(0, sd_m**2 - sd_e**2) plus
    electronic noise ``e`` known to the adversary.  The adversary's best
    guess probability is maximised over ``e`` on a uniform grid spanning
    ``+-span * sd_e``; the result is ``-log2`` of that maximum.
    """
    if sd_e <= 0 or sd_m <= sd_e:
        raise ValueError(
            f"need sd_m > sd_e > 0 (got sd_m={sd_m}, sd_e={sd_e}): "
            "no extractable quantum entropy")
    sd_q = math.sqrt(sd_m ** 2 - sd_e ** 2)
    grid = np.linspace(-span * sd_e, span * sd_e, grid_points)
    pmax = float(np.max(_max_bin_mass(grid, sd_q, bits, fullscale)))
    return -math.log2(pmax)


def gaussian_min_entropy(sd, bits=16, fullscale=1.0):
    """Min-entropy of a zero-mean quantised Gaussian with no side information."""
    return -math.log2(float(_max_bin_mass(0.0, sd, bits, fullscale)))


# ---------------------------------------------------------------------------
# correlation and spectra


def autocorrelation(stream, max_lag):
    """Normalised sample autocorrelation for lags ``0..max_lag`` and its ``1/sqrt(N)`` band."""
    x = _as_array(stream).astype(float)
    n = len(x)
    if not 0 <= max_lag < n:
        raise ValueError("max_lag must lie in [0, len)")
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0:
        raise ValueError("zero-variance stream has no autocorrelation")
    size = 1 << int(math.ceil(math.log2(n + max_lag + 1)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:max_lag + 1]
    r = acov / denom
    r[0] = 1.0
    return r, 1.0 / math.sqrt(n)


def psd(stream, segment_len=1024):
    """One-sided Welch PSD (Hann window, 50 % overlap) versus frequency in cycles/sample."""
    x = _as_array(stream).astype(float)
    if segment_len & (segment_len - 1) or segment_len > len(x):
        raise ValueError("segment_len must be a power of two no longer than the stream")
    freqs, power = sps.welch(x, fs=1.0, window="hann", nperseg=segment_len,
                             noverlap=segment_len // 2, return_onesided=True,
                             detrend="constant", scaling="density")
    return freqs, power


def peak_prominence_db(power, exclude_dc=True):
    """Height of the largest PSD bin above the median bin, in dB."""
    p = power[1:] if exclude_dc else power
    return 10.0 * math.log10(p.max() / np.median(p))


def cross_correlation(a, b):
    """Pearson correlation at lag 0."""
    a = _as_array(a).astype(float)
    b = _as_array(b).astype(float)
    if len(a) != len(b):
        raise ValueError("streams differ in length")
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if den == 0:
        raise ValueError("zero-variance stream")
    return float(np.dot(a, b)) / den


# ---------------------------------------------------------------------------
# CSV series


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def autocorrelation_csv(path, r, band):
    write_csv(path, ["lag", "r", "band"],
              ((lag, repr(float(v)), repr(band)) for lag, v in enumerate(r)))


def psd_csv(path, freqs, power):
    db = 10.0 * np.log10(np.maximum(power, np.finfo(float).tiny))
    write_csv(path, ["freq_fraction", "power_db"],
              ((repr(float(f)), repr(float(p))) for f, p in zip(freqs, db)))


def histogram_csv(path, dist):
    write_csv(path, ["value", "count", "prob"],
              ((int(v), int(c), repr(float(p)))
               for v, c, p in zip(dist.support, dist.counts, dist.probs)))
