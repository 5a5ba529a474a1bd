"""Desk-scale simulation of a balanced-homodyne entropy chain.

Two detector traces are synthesised at ``oversample`` times the output
rate, then tapped at four points, each point giving two streams:

====  ======================================================  ==============
tap   processing                                              stages
====  ======================================================  ==============
a     each detector, anti-aliased and decimated               det1, det2
b     difference / sum of the detectors (scaled by 1/sqrt 2)  diff, sum
c     difference mixed down at each demod frequency and       demod1, demod2
      decimated *without* anti-aliasing
d     as c but low-pass filtered before anti-aliased          lpf1, lpf2
      decimation
====  ======================================================  ==============

Every stream is quantised by a 16-bit ADC and truncated to its 13 most
significant bits.  All frequencies are fractions of the internal
(oversampled) rate.  The defaults map the reference hardware (250 MS/s
output, 16x oversampling, mixing at 1.375/1.625 GHz, 125 MHz low-pass) onto
those fractions.

Noise is drawn per fixed block of the internal time axis from generators
keyed on ``(seed, component, block)``, so the chain can be evaluated in
chunks of any size and still produce identical samples.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .stream import SampleStream, Scenario, Stage, truncate_to_msb

STAGES = ("det1", "det2", "diff", "sum", "demod1", "demod2", "lpf1", "lpf2")
STAGE_LABELS = {
    "det1": "a(i)", "det2": "a(ii)", "diff": "b(i)", "sum": "b(ii)",
    "demod1": "c(i)", "demod2": "c(ii)", "lpf1": "d(i)", "lpf2": "d(ii)",
}
_TAPE_BLOCK = 1 << 16
_COMPONENTS = {"e1": 0, "e2": 1, "lo": 2, "q": 3}


class ToneKind(str, enum.Enum):
    common_mode = "common_mode"
    detector1_only = "detector1_only"
    detector2_only = "detector2_only"


@dataclass(frozen=True)
class ToneSpec:
    freq: float
    amplitude: float
    phase: float = 0.0
    kind: ToneKind = ToneKind.common_mode

    def __post_init__(self):
        object.__setattr__(self, "kind", ToneKind(self.kind))
        if self.amplitude < 0:
            raise ValueError("tone amplitude must be non-negative")
        if not 0 <= self.freq < 0.5:
            raise ValueError("tone frequency must lie in [0, 0.5) of the internal rate")


def _default_tones():
    # pickup just below the first mixing frequency: after mixing it sits
    # above the output Nyquist frequency, so it survives only by aliasing
    return (ToneSpec(freq=0.27375, amplitude=6.0, phase=0.3, kind=ToneKind.detector1_only),)


@dataclass(frozen=True)
class ChainConfig:
    n_samples: int = 600_000
    oversample: int = 16
    lo_on: bool = False
    quantum_sd: float = math.sqrt(10.0)
    electronic_sd: float = 1.0
    lo_sd: float = 2.0
    tones: tuple[ToneSpec, ...] = field(default_factory=_default_tones)
    cmrr_epsilon: float = 0.01
    demod_freqs: tuple[float, float] = (1.375 / 4.0, 1.625 / 4.0)
    lpf_cutoff: float = 1.0
    lpf_taps: int = 255
    rolloff: float = 0.05
    adc_bits: int = 16
    adc_fullscale: float = 660.0
    seed: int = 20180601

    def __post_init__(self):
        object.__setattr__(self, "tones", tuple(
            t if isinstance(t, ToneSpec) else ToneSpec(**t) for t in self.tones))
        object.__setattr__(self, "demod_freqs", tuple(float(f) for f in self.demod_freqs))
        self.validate()

    def validate(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.oversample < 2:
            raise ValueError("oversample must be >= 2")
        if len(self.demod_freqs) != 2 or not all(0 < f < 0.5 for f in self.demod_freqs):
            raise ValueError("demod_freqs must be two fractions in (0, 0.5)")
        if not 0 < self.lpf_cutoff <= 1:
            raise ValueError("lpf_cutoff must lie in (0, 1]")
        if self.lpf_taps < 1 or self.lpf_taps % 2 == 0:
            raise ValueError("lpf_taps must be a positive odd integer")
        if not 0 < self.rolloff < 1:
            raise ValueError("rolloff must lie in (0, 1)")
        if min(self.quantum_sd, self.electronic_sd, self.lo_sd) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if not 0 <= self.cmrr_epsilon <= 1:
            raise ValueError("cmrr_epsilon must lie in [0, 1]")
        if self.adc_bits not in (8, 16):
            raise ValueError("adc_bits must be 8 or 16")
        if self.adc_fullscale <= 0:
            raise ValueError("adc_fullscale must be positive")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def internal_length(self):
        return self.n_samples * self.oversample

    def to_dict(self):
        d = asdict(self)
        d["tones"] = [dict(asdict(t), kind=t.kind.value) for t in self.tones]
        d["demod_freqs"] = list(self.demod_freqs)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path):
    """Read a JSON config document; keys are the ChainConfig field names."""
    with open(path) as fh:
        return ChainConfig.from_dict(json.load(fh))


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# elementary operations


def combine(trace1, trace2, mode):
    trace1 = np.asarray(trace1, dtype=float)
    trace2 = np.asarray(trace2, dtype=float)
    if trace1.shape != trace2.shape:
        raise ValueError("traces differ in length")
    if mode == "diff":
        return trace1 - trace2
    if mode == "sum":
        return trace1 + trace2
    raise ValueError(f"mode must be 'diff' or 'sum', got {mode!r}")


def demodulate(trace, f, t0=0):
    """Mix with ``2 cos(2 pi f t)``; ``t0`` is the time index of the first sample."""
    if not 0 < f < 0.5:
        raise ValueError("demodulation frequency must lie in (0, 0.5)")
    t = np.arange(t0, t0 + len(trace), dtype=float)
    return 2.0 * np.asarray(trace, dtype=float) * np.cos(2 * np.pi * f * t)


def lowpass_taps(cutoff, taps):
    """Hamming-windowed sinc with unit DC gain; ``cutoff`` in cycles/sample."""
    if taps % 2 == 0:
        raise ValueError("FIR length must be odd for a linear-phase centred filter")
    if not 0 < cutoff < 0.5:
        raise ValueError("cutoff must lie in (0, 0.5)")
    n = np.arange(taps) - (taps - 1) / 2
    h = 2 * cutoff * np.sinc(2 * cutoff * n) * np.hamming(taps)
    return h / h.sum()


def fir_lowpass(trace, cutoff, taps):
    """Zero-phase FIR low-pass, output the same length as the input (zero-padded edges)."""
    h = lowpass_taps(cutoff, taps)
    return sps.oaconvolve(np.asarray(trace, dtype=float), h, mode="same")


def antialias_taps(r, taps):
    return max(taps, 64 * r + 1) | 1


def root_nyquist_taps(r, beta=0.05, taps=None):
    """Root-raised-cosine low-pass for decimation by ``r``, unit DC gain.

    Its squared magnitude is a Nyquist response, so white noise filtered and
    decimated by ``r`` stays white; a windowed sinc cut at ``1/(2r)`` instead
    leaves a dip at the band edge that shows up as short-lag correlation.
    """
    if not 0 < beta < 1:
        raise ValueError("roll-off must lie in (0, 1)")
    taps = max(taps or 0, 128 * r + 1) | 1
    x = (np.arange(taps) - (taps - 1) / 2) / r
    with np.errstate(divide="ignore", invalid="ignore"):
        h = ((np.sin(np.pi * x * (1 - beta)) + 4 * beta * x * np.cos(np.pi * x * (1 + beta)))
             / (np.pi * x * (1 - (4 * beta * x) ** 2)))
    h[x == 0] = 1 - beta + 4 * beta / np.pi
    edge = np.isclose(np.abs(4 * beta * x), 1.0)
    a = np.pi / (4 * beta)
    h[edge] = beta / math.sqrt(2) * ((1 + 2 / np.pi) * math.sin(a) + (1 - 2 / np.pi) * math.cos(a))
    return h / h.sum()


def decimate(trace, r, antialias=True, taps=None):
    """Keep every ``r``-th sample, optionally after low-passing at ``1/(2r)``."""
    if r < 1:
        raise ValueError("decimation factor must be >= 1")
    trace = np.asarray(trace, dtype=float)
    if r == 1:
        return trace.copy()
    if antialias:
        trace = fir_lowpass(trace, 0.5 / r, antialias_taps(r, taps or 0))
    return trace[::r]


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_codes(trace, bits, fullscale):
    """ADC codes and the number of clipped samples."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    if fullscale <= 0:
        raise ValueError("fullscale must be positive")
    top = (1 << (bits - 1)) - 1
    raw = _round_half_away(np.asarray(trace, dtype=float) / fullscale * top)
    clipped = int(np.count_nonzero((raw > top) | (raw < -top - 1)))
    return np.clip(raw, -top - 1, top).astype(np.int64), clipped


def quantize(trace, bits, fullscale, **stream_kw):
    """Quantise to a SampleStream; the clip count is kept in ``meta['clipped']``."""
    codes, clipped = quantize_codes(trace, bits, fullscale)
    meta = dict(stream_kw.pop("meta", {}))
    meta["clipped"] = clipped
    return SampleStream(values=codes, bit_depth=bits, meta=meta, **stream_kw)


# ---------------------------------------------------------------------------
# trace synthesis


def _noise(seed, component, start, stop, sd):
    """Gaussian samples for tape positions ``[start, stop)`` of one noise component."""
    if sd == 0 or stop <= start:
        return np.zeros(max(stop - start, 0))
    first, last = start // _TAPE_BLOCK, (stop - 1) // _TAPE_BLOCK
    parts = []
    for j in range(first, last + 1):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(_COMPONENTS[component], j))
        parts.append(np.random.Generator(np.random.PCG64(ss)).standard_normal(_TAPE_BLOCK))
    tape = np.concatenate(parts)
    off = first * _TAPE_BLOCK
    return sd * tape[start - off:stop - off]


class _Tape:
    """Detector traces over arbitrary windows of the internal time axis.

    Time index 0 is the first internal sample behind output sample 0; the
    tape extends ``margin`` samples before it so filters have history.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.margin = _filter_margin(cfg)

    def traces(self, t0, t1):
        cfg = self.cfg
        s0, s1 = t0 + self.margin, t1 + self.margin
        t = np.arange(t0, t1, dtype=float)
        eps = cfg.cmrr_epsilon
        imb1, imb2 = eps / 2.0, -eps / 2.0
        tr1 = _noise(cfg.seed, "e1", s0, s1, cfg.electronic_sd)
        tr2 = _noise(cfg.seed, "e2", s0, s1, cfg.electronic_sd)
        for tone in cfg.tones:
            wave = tone.amplitude * np.cos(2 * np.pi * tone.freq * t + tone.phase)
            if tone.kind is ToneKind.common_mode:
                tr1 += (1 + imb1) * wave
                tr2 += (1 + imb2) * wave
            elif tone.kind is ToneKind.detector1_only:
                tr1 += wave
            else:
                tr2 += wave
        if cfg.lo_on:
            lo = _noise(cfg.seed, "lo", s0, s1, cfg.lo_sd) / math.sqrt(2.0)
            q = _noise(cfg.seed, "q", s0, s1, cfg.quantum_sd) / math.sqrt(2.0)
            tr1 += lo + q
            tr2 += lo - q
        return tr1, tr2


def _filter_margin(cfg):
    r = cfg.oversample
    span = cfg.lpf_taps + len(root_nyquist_taps(r, cfg.rolloff))
    return -(-span // r) * r


def synth_detector_traces(cfg, t0=0, t1=None):
    """The two detector traces at the internal rate for internal times ``[t0, t1)``."""
    t1 = cfg.internal_length if t1 is None else t1
    return _Tape(cfg).traces(t0, t1)


# ---------------------------------------------------------------------------
# the chain


def _stage_gains(cfg):
    # band-limiting amplifiers restore the white-noise variance lost by filtering
    r = cfg.oversample
    return math.sqrt(r), math.sqrt(r / cfg.lpf_cutoff)


def _chain_chunk(cfg, tape, n0, n1):
    """Analog values of all eight stages for output samples ``[n0, n1)``."""
    r = cfg.oversample
    m = tape.margin
    t0, t1 = n0 * r - m, n1 * r + m
    tr1, tr2 = tape.traces(t0, t1)
    keep = slice(m, m + (n1 - n0) * r, r)
    g_aa, g_lpf = _stage_gains(cfg)
    aa = root_nyquist_taps(r, cfg.rolloff)
    lpf_cut = cfg.lpf_cutoff * 0.5 / r

    def aa_decimate(x):
        return sps.oaconvolve(x, aa, mode="same")[keep]

    out = {
        "det1": g_aa * aa_decimate(tr1),
        "det2": g_aa * aa_decimate(tr2),
    }
    diff = combine(tr1, tr2, "diff") / math.sqrt(2.0)
    out["diff"] = g_aa * aa_decimate(diff)
    out["sum"] = g_aa * aa_decimate(combine(tr1, tr2, "sum") / math.sqrt(2.0))
    for k, f in enumerate(cfg.demod_freqs, start=1):
        mixed = demodulate(diff, f, t0=t0)
        out[f"demod{k}"] = mixed[keep]
        out[f"lpf{k}"] = g_lpf * aa_decimate(fir_lowpass(mixed, lpf_cut, cfg.lpf_taps))
    return out


def chain_analog(cfg, chunk=1 << 16):
    """Unquantised stage outputs (float arrays of length ``n_samples``)."""
    tape = _Tape(cfg)
    parts = {s: [] for s in STAGES}
    for n0 in range(0, cfg.n_samples, chunk):
        n1 = min(cfg.n_samples, n0 + chunk)
        for s, v in _chain_chunk(cfg, tape, n0, n1).items():
            parts[s].append(v)
    return {s: np.concatenate(v) for s, v in parts.items()}


def scenario_config(cfg, scenario):
    scenario = Scenario(scenario)
    if scenario is Scenario.none:
        raise ValueError("chain scenario must be classical or quantum_classical")
    return replace(cfg, lo_on=scenario is Scenario.quantum_classical)


def run_chain(cfg, scenario, chunk=1 << 16, stages=STAGES):
    """All stage streams for one scenario: 16-bit ADC codes truncated to 13 bits.

    ``scenario`` switches the local oscillator (off for ``classical``).
    """
    cfg = scenario_config(cfg, scenario)
    tape = _Tape(cfg)
    codes = {s: [] for s in stages}
    clipped = dict.fromkeys(stages, 0)
    for n0 in range(0, cfg.n_samples, chunk):
        n1 = min(cfg.n_samples, n0 + chunk)
        analog = _chain_chunk(cfg, tape, n0, n1)
        for s in stages:
            c, k = quantize_codes(analog[s], cfg.adc_bits, cfg.adc_fullscale)
            codes[s].append(c)
            clipped[s] += k
    rate = Fraction(1, cfg.oversample)
    out = {}
    for s in stages:
        raw = SampleStream(values=np.concatenate(codes[s]), bit_depth=cfg.adc_bits,
                           stage=Stage(s), scenario=Scenario(scenario),
                           seed_provenance=cfg.seed, rate_ratio=rate,
                           meta={"clipped": clipped[s]})
        out[s] = truncate_to_msb(raw) if cfg.adc_bits == 16 else raw
    return out


def stream_filename(scenario, stage):
    return f"{Scenario(scenario).value}_{stage}.rns"
