"""Prime pools for the fingerprinting modulus: exact sieve + uniform sampling.

The randomized products draw p uniformly from all primes in an interval that
depends on n and the scaling exponent: [ceil(40*n^alpha), floor(80*n^alpha)]
for the level recursion, [n^alpha, 2*n^alpha] for the single-level scheme.
For tiny n those intervals may be empty of primes; sampling_pool widens the
upper end by doubling until a prime appears and reports how often it did, so
run metadata can record the deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PrimePool:
    lo: int
    hi: int
    primes: np.ndarray  # sorted, exactly the primes in [lo, hi]

    def __len__(self) -> int:
        return int(self.primes.shape[0])


def primes_in(lo: int, hi: int) -> PrimePool:
    """Exact prime pool for [lo, hi] via a segmented sieve; 2 <= lo <= hi <= 2^32."""
    if not (2 <= lo <= hi <= 2**32):
        raise ValueError("need 2 <= lo <= hi <= 2^32")
    root = int(math.isqrt(hi))
    small = _sieve_upto(root)
    seg = np.ones(hi - lo + 1, dtype=bool)
    for p in small:
        # every composite c in the segment has a prime factor p <= sqrt(hi)
        # and satisfies c >= p*p, so starting at p*p never kills p itself
        start = max(p * p, ((lo + p - 1) // p) * p)
        if start <= hi:
            seg[start - lo :: p] = False
    return PrimePool(lo, hi, np.nonzero(seg)[0] + lo)


def _sieve_upto(n: int) -> np.ndarray:
    if n < 2:
        return np.empty(0, dtype=np.int64)
    mask = np.ones(n + 1, dtype=bool)
    mask[:2] = False
    for p in range(2, int(math.isqrt(n)) + 1):
        if mask[p]:
            mask[p * p :: p] = False
    return np.nonzero(mask)[0].astype(np.int64)


def sample(pool: PrimePool, rng: np.random.Generator) -> int:
    """Uniform draw from the pool; reproducible under the caller's seeded rng."""
    if len(pool) == 0:
        raise ValueError(f"no primes in [{pool.lo}, {pool.hi}]")
    return int(pool.primes[rng.integers(0, len(pool))])


def is_probable_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24 (fixed base set)."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def recursive_interval(n: int, alpha: float) -> tuple[int, int]:
    """[ceil(40*n^alpha), floor(80*n^alpha)], floored at lo >= 2."""
    na = round(float(n) ** alpha, 9)  # kill float fuzz on exact powers (8^(1/3) etc.)
    return max(2, math.ceil(40.0 * na)), max(2, math.floor(80.0 * na))


def basic_interval(n: int, alpha: float) -> tuple[int, int]:
    """[n^alpha, 2*n^alpha] as integers: [max(2, ceil(n^alpha)), floor(2*n^alpha)]."""
    na = round(float(n) ** alpha, 9)
    return max(2, math.ceil(na)), max(2, math.floor(2.0 * na))


def sampling_pool(lo: int, hi: int) -> tuple[PrimePool, int]:
    """Pool for [lo, hi], doubling hi until nonempty; returns (pool, widenings)."""
    widened = 0
    pool = primes_in(lo, max(lo, hi))
    while len(pool) == 0:
        hi = max(hi * 2, lo + 1)
        pool = primes_in(lo, hi)
        widened += 1
    return pool, widened
