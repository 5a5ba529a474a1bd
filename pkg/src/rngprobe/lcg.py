"""Linear congruential generator X <- (a X + c) mod m and its period test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stream import SampleStream, Scenario, Stage

# multiplier/increment pair attacked in the CRNG study
GLIBC_A = 1103515245
GLIBC_C = 12345


@dataclass(frozen=True)
class LcgParams:
    a: int = GLIBC_A
    c: int = GLIBC_C
    m: int = 1 << 24
    seed: int = 1

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("modulus must be >= 2")
        if self.a < 1 or self.c < 0:
            raise ValueError("need a >= 1 and c >= 0")
        if not 0 <= self.seed < self.m:
            raise ValueError("seed must lie in [0, m)")

    def reduced(self):
        """Same generator with ``a`` and ``c`` reduced mod ``m``."""
        return LcgParams(self.a % self.m or self.m, self.c % self.m, self.m, self.seed)


def next_state(x, p):
    # Python ints are arbitrary precision, so no intermediate overflow
    return (p.a * x + p.c) % p.m


def states(p, n):
    """The ``n`` states following the seed, as a Python list."""
    out = [0] * n
    a, c, m, x = p.a % p.m, p.c, p.m, p.seed
    for k in range(n):
        x = (a * x + c) % m
        out[k] = x
    return out


def _states_u64(p, n):
    """Vectorised state generation for power-of-two ``m <= 2**32``.

    Runs ``L`` interleaved lanes using the jump-ahead map
    ``X_{k+L} = A X_k + C (mod m)``; uint64 arithmetic wraps mod 2**64,
    which is harmless because ``m`` divides 2**64.
    """
    m = p.m
    lanes = min(n, 4096)
    head = states(p, lanes)
    big_a, big_c = 1, 0
    for _ in range(lanes):
        big_a, big_c = (p.a * big_a) % m, (p.a * big_c + p.c) % m
    rows = -(-n // lanes)
    out = np.empty((rows, lanes), dtype=np.uint64)
    out[0] = head
    mask = np.uint64(m - 1)
    ua, uc = np.uint64(big_a), np.uint64(big_c)
    for r in range(1, rows):
        out[r] = (out[r - 1] * ua + uc) & mask
    return out.reshape(-1)[:n]


def state_array(p, n):
    m = p.m
    if m & (m - 1) == 0 and m <= 1 << 32:
        return _states_u64(p, n)
    return np.array(states(p, n), dtype=object)


def emit_bytes(p, n):
    """Top 8 bits ``floor(256 X_k / m)`` of states ``X_1 .. X_n`` as an 8-bit stream."""
    if p.m < 256:
        raise ValueError("modulus must be at least 256 to emit bytes")
    if n == 0:
        codes = np.zeros(0, dtype=np.int64)
    else:
        x = state_array(p, n)
        if x.dtype == object:
            codes = np.array([(v * 256) // p.m for v in x], dtype=np.int64)
        else:
            shift = np.uint64(int(math.log2(p.m)) - 8)
            codes = (x >> shift).astype(np.int64)
    return SampleStream(values=codes, bit_depth=8, stage=Stage.lcg, scenario=Scenario.none,
                        seed_provenance=p.seed, signed=False,
                        meta={"lcg_a": p.a, "lcg_c": p.c, "lcg_m": p.m})


def prime_factors(n):
    """Distinct prime factors by trial division."""
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out.append(n)
    return out


def hull_dobell_check(p):
    """Full-period test; returns ``(full_period, reasons)`` naming every failed condition."""
    reasons = []
    if math.gcd(p.m, p.c) != 1:
        reasons.append(f"gcd(m, c) = {math.gcd(p.m, p.c)} != 1")
    for q in prime_factors(p.m):
        if (p.a - 1) % q:
            reasons.append(f"a-1 = {p.a - 1} not divisible by prime factor {q} of m")
    if p.m % 4 == 0 and (p.a - 1) % 4:
        reasons.append(f"m divisible by 4 but a-1 = {p.a - 1} is not")
    return not reasons, reasons


def period(p, limit=None):
    """Brute-force cycle length of the state sequence starting at the seed."""
    limit = p.m if limit is None else limit
    seen = {}
    x = p.seed
    for k in range(limit + 1):
        if x in seen:
            return k - seen[x]
        seen[x] = k
        x = next_state(x, p)
    return None
