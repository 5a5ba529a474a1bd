"""Seeded Toeplitz hashing sized by the conditional min-entropy.

The Toeplitz matrix ``T`` (``out x in``) is constant along diagonals,
``T[i, j] = seed[out - 1 - i + j]``, so its first row is
``seed[out-1:]`` and its first column is ``seed[:out]`` read bottom-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stream import SampleStream, Scenario, Stage

DEFAULT_IN_BLOCK = 1024


@dataclass(frozen=True)
class ExtractorConfig:
    in_block_bits: int
    out_block_bits: int
    seed_bits: np.ndarray
    safety_factor: float = 0.5

    def __post_init__(self):
        seed = np.asarray(self.seed_bits, dtype=np.uint8)
        object.__setattr__(self, "seed_bits", seed)
        if not 0 < self.out_block_bits <= self.in_block_bits:
            raise ValueError("need 0 < out_block_bits <= in_block_bits")
        if len(seed) != self.in_block_bits + self.out_block_bits - 1:
            raise ValueError(
                f"seed must have {self.in_block_bits + self.out_block_bits - 1} bits, "
                f"got {len(seed)}")
        if not 0 < self.safety_factor <= 1:
            raise ValueError("safety_factor must lie in (0, 1]")

    @property
    def ratio(self):
        return self.out_block_bits / self.in_block_bits

    def seed_hex(self):
        return bits_to_hex(self.seed_bits)


def extraction_ratio(h_min_cond, bits_per_sample, safety=0.5):
    """Output/input ratio: the secure fraction ``safety`` of the min-entropy rate."""
    if not 0 < h_min_cond <= bits_per_sample:
        raise ValueError("need 0 < h_min_cond <= bits_per_sample")
    return safety * h_min_cond / bits_per_sample


def bits_to_hex(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-len(bits)) % 8
    return np.packbits(np.concatenate([bits, np.zeros(pad, np.uint8)])).tobytes().hex()


def hex_to_bits(text, length):
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if len(bits) < length:
        raise ValueError(f"seed hex holds {len(bits)} bits, need {length}")
    return bits[:length]


def make_config(h_min_cond, bits_per_sample, seed, in_block_bits=DEFAULT_IN_BLOCK,
                safety=0.5):
    """Config whose output block is the extraction ratio times the input block, rounded down.

    ``seed`` is an integer (expanded by a seeded generator) or a hex string.
    """
    ratio = extraction_ratio(h_min_cond, bits_per_sample, safety)
    out_bits = int(math.floor(ratio * in_block_bits))
    if out_bits < 1:
        raise ValueError("extraction ratio too small for the block size")
    length = in_block_bits + out_bits - 1
    if isinstance(seed, str):
        seed_bits = hex_to_bits(seed, length)
    else:
        seed_bits = np.random.default_rng(seed).integers(0, 2, size=length, dtype=np.uint8)
    return ExtractorConfig(in_block_bits, out_bits, seed_bits, safety)


def toeplitz_matrix(cfg):
    out, n = cfg.out_block_bits, cfg.in_block_bits
    i = np.arange(out)[:, None]
    j = np.arange(n)[None, :]
    return cfg.seed_bits[out - 1 - i + j]


def toeplitz_extract(block, cfg):
    """``T @ block`` over GF(2) for a single input block."""
    block = np.asarray(block, dtype=np.uint8)
    if block.shape != (cfg.in_block_bits,):
        raise ValueError(f"input block must have {cfg.in_block_bits} bits, got {block.shape}")
    return hash_blocks(block[None, :], cfg)[0]


def hash_blocks(blocks, cfg):
    """Hash every row of a ``[k, in_block_bits]`` 0/1 matrix."""
    t = toeplitz_matrix(cfg).astype(np.float32)
    # integer sums of at most in_block_bits ones are exact in float32
    acc = np.asarray(blocks, dtype=np.float32) @ t.T
    return (acc.astype(np.int64) & 1).astype(np.uint8)


def samples_to_bits(values, bits_per_sample):
    """Two's-complement serialisation, ``bits_per_sample`` bits per value, MSB first."""
    v = np.asarray(values, dtype=np.int64) & ((1 << bits_per_sample) - 1)
    shifts = np.arange(bits_per_sample - 1, -1, -1)
    return ((v[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def extract_stream(stream, cfg, h_min_cond=None, chunk_blocks=4096):
    """Hash a sample stream into an 8-bit unsigned stream.

    Samples are serialised at the stream's bit depth, cut into
    ``in_block_bits`` blocks (a trailing partial block is dropped), hashed,
    concatenated and repacked into bytes (trailing partial byte dropped).
    """
    if len(stream) == 0:
        raise ValueError("empty stream")
    bits = samples_to_bits(stream.values, stream.bit_depth)
    n_blocks = len(bits) // cfg.in_block_bits
    blocks = bits[:n_blocks * cfg.in_block_bits].reshape(n_blocks, cfg.in_block_bits)
    out = np.empty((n_blocks, cfg.out_block_bits), dtype=np.uint8)
    for start in range(0, n_blocks, chunk_blocks):
        out[start:start + chunk_blocks] = hash_blocks(blocks[start:start + chunk_blocks], cfg)
    flat = out.reshape(-1)
    n_bytes = len(flat) // 8
    codes = np.packbits(flat[:n_bytes * 8]).astype(np.int64)
    meta = {
        "block_ratio": repr(cfg.ratio),
        "in_block_bits": cfg.in_block_bits,
        "out_block_bits": cfg.out_block_bits,
        "safety_factor": repr(cfg.safety_factor),
        "toeplitz_seed": cfg.seed_hex(),
        "source_stage": stream.stage.value,
    }
    if h_min_cond is not None:
        meta["h_min_cond"] = repr(float(h_min_cond))
        meta["extraction_ratio"] = repr(
            extraction_ratio(h_min_cond, stream.bit_depth, cfg.safety_factor))
    return SampleStream(values=codes, bit_depth=8, stage=Stage.hashed,
                        scenario=stream.scenario if stream.scenario else Scenario.none,
                        seed_provenance=stream.seed_provenance, signed=False, meta=meta)
