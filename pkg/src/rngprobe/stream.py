"""Sample streams and their on-disk format.

File layout::

    format_version: 1
    count: 3
    bit_depth: 16
    signed: true
    stage: diff
    scenario: classical
    seed: 1234
    rate_ratio: 1/16
    <blank line>
    <count little-endian int16 words>

Every value is written as a two's-complement 16-bit word whatever the
bit depth.  Unsigned 8-bit streams (LCG output, hashed bytes) carry
``signed: false`` and keep their codes in ``[0, 255]``.  Extra
``key: value`` lines are preserved in :attr:`SampleStream.meta`.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

FORMAT_VERSION = 1
BIT_DEPTHS = (8, 13, 16)
_CORE_KEYS = ("format_version", "count", "bit_depth", "signed", "stage",
              "scenario", "seed", "rate_ratio")


class Stage(str, enum.Enum):
    det1 = "det1"
    det2 = "det2"
    diff = "diff"
    sum = "sum"
    demod1 = "demod1"
    demod2 = "demod2"
    lpf1 = "lpf1"
    lpf2 = "lpf2"
    hashed = "hashed"
    lcg = "lcg"


class Scenario(str, enum.Enum):
    classical = "classical"
    quantum_classical = "quantum_classical"
    none = "none"


class StreamFormatError(ValueError):
    """Raised when a stream file cannot be parsed; ``field`` names the culprit."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class StreamIOError(OSError):
    def __init__(self, offset, cause):
        super().__init__(f"write failed at byte offset {offset}: {cause}")
        self.offset = offset


def value_range(bit_depth, signed=True):
    if signed:
        return -(1 << (bit_depth - 1)), (1 << (bit_depth - 1)) - 1
    return 0, (1 << bit_depth) - 1


@dataclass(frozen=True, eq=False)
class SampleStream:
    values: np.ndarray
    bit_depth: int
    stage: Stage = Stage.diff
    scenario: Scenario = Scenario.none
    seed_provenance: int = 0
    rate_ratio: Fraction = Fraction(1)
    signed: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "rate_ratio", Fraction(self.rate_ratio))
        if self.bit_depth not in BIT_DEPTHS:
            raise ValueError(f"bit_depth must be one of {BIT_DEPTHS}, got {self.bit_depth}")
        if not self.signed and self.bit_depth == 16:
            # 16-bit containers cannot hold unsigned codes above 32767
            raise ValueError("unsigned streams are limited to 8 or 13 bits")
        lo, hi = value_range(self.bit_depth, self.signed)
        if vals.size and (vals.min() < lo or vals.max() > hi):
            bad = vals[(vals < lo) | (vals > hi)][0]
            raise ValueError(f"value {bad} outside [{lo}, {hi}] for {self.bit_depth}-bit stream")

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, SampleStream):
            return NotImplemented
        return (self.bit_depth == other.bit_depth and self.stage == other.stage
                and self.scenario == other.scenario
                and self.seed_provenance == other.seed_provenance
                and self.rate_ratio == other.rate_ratio
                and self.signed == other.signed and self.meta == other.meta
                and np.array_equal(self.values, other.values))

    def header(self):
        return {
            "format_version": FORMAT_VERSION,
            "count": len(self.values),
            "bit_depth": self.bit_depth,
            "signed": self.signed,
            "stage": self.stage.value,
            "scenario": self.scenario.value,
            "seed": self.seed_provenance,
            "rate_ratio": str(self.rate_ratio),
        }

    def with_values(self, values, **changes):
        return replace(self, values=values, **changes)


def _header_text(stream):
    lines = []
    for key, value in stream.header().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}: {value}")
    for key, value in stream.meta.items():
        if key in _CORE_KEYS or ":" in key or "\n" in str(value):
            raise ValueError(f"invalid meta entry {key!r}")
        lines.append(f"{key}: {value}")
    return ("\n".join(lines) + "\n\n").encode("ascii")


def encode_stream(stream):
    payload = stream.values.astype("<i2").tobytes()
    return _header_text(stream) + payload


def store_stream(stream, destination):
    """Write ``stream`` to a path or binary file object; returns bytes written."""
    data = encode_stream(stream)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            return _write_all(fh, data)
    return _write_all(destination, data)


def _write_all(fh, data):
    written = 0
    view = memoryview(data)
    try:
        while written < len(data):
            n = fh.write(view[written:])
            written += len(data) - written if n is None else n
    except OSError as exc:
        raise StreamIOError(written, exc) from exc
    return written


def _parse_bool(text):
    if text in ("true", "false"):
        return text == "true"
    raise StreamFormatError("signed", f"expected true/false, got {text!r}")


def _parse_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise StreamFormatError(key, f"expected integer, got {text!r}") from None


def decode_stream(data):
    sep = data.find(b"\n\n")
    if sep < 0:
        raise StreamFormatError("header", "missing blank line terminating the header")
    try:
        text = data[:sep].decode("ascii")
    except UnicodeDecodeError:
        raise StreamFormatError("header", "header is not ASCII text") from None
    fields = {}
    for line in text.split("\n"):
        key, colon, value = line.partition(":")
        if not colon:
            raise StreamFormatError("header", f"malformed line {line!r}")
        fields[key.strip()] = value.strip()
    for key in ("format_version", "count", "bit_depth", "stage", "scenario", "seed"):
        if key not in fields:
            raise StreamFormatError(key, "missing from header")
    version = _parse_int("format_version", fields.pop("format_version"))
    if version != FORMAT_VERSION:
        raise StreamFormatError("format_version", f"unsupported version {version}")
    count = _parse_int("count", fields.pop("count"))
    if count < 0:
        raise StreamFormatError("count", "negative")
    bit_depth = _parse_int("bit_depth", fields.pop("bit_depth"))
    if bit_depth not in BIT_DEPTHS:
        raise StreamFormatError("bit_depth", f"unsupported bit depth {bit_depth}")
    signed = _parse_bool(fields.pop("signed", "true"))
    try:
        stage = Stage(fields.pop("stage"))
    except ValueError as exc:
        raise StreamFormatError("stage", str(exc)) from None
    try:
        scenario = Scenario(fields.pop("scenario"))
    except ValueError as exc:
        raise StreamFormatError("scenario", str(exc)) from None
    seed = _parse_int("seed", fields.pop("seed"))
    try:
        rate = Fraction(fields.pop("rate_ratio", "1"))
    except (ValueError, ZeroDivisionError):
        raise StreamFormatError("rate_ratio", "not a rational number") from None

    payload = data[sep + 2:]
    if len(payload) != 2 * count:
        raise StreamFormatError(
            "count", f"count mismatch: header says {count} samples, payload has "
                     f"{len(payload) / 2:g}")
    values = np.frombuffer(payload, dtype="<i2").astype(np.int64)
    lo, hi = value_range(bit_depth, signed)
    if values.size and (values.min() < lo or values.max() > hi):
        bad = values[(values < lo) | (values > hi)][0]
        raise StreamFormatError(
            "values", f"range error: {bad} outside [{lo}, {hi}] for bit_depth {bit_depth}")
    return SampleStream(values=values, bit_depth=bit_depth, stage=stage, scenario=scenario,
                        seed_provenance=seed, rate_ratio=rate, signed=signed, meta=fields)


def load_stream(source):
    """Read a stream from a path, bytes, or binary file object."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        return decode_stream(bytes(source))
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return decode_stream(fh.read())
    return decode_stream(source.read())


def truncate_to_msb(stream):
    """Keep the 13 most significant bits of a signed 16-bit stream (arithmetic shift)."""
    if stream.bit_depth != 16:
        raise ValueError(f"truncate_to_msb expects a 16-bit stream, got {stream.bit_depth}-bit")
    return stream.with_values(stream.values >> 3, bit_depth=13)


def roundtrip(stream):
    buf = io.BytesIO()
    store_stream(stream, buf)
    return load_stream(buf.getvalue())
