"""
SplitMix64 generator used by the simulation harness
Fixed constants so traces are reproducible across implementations
"""

import hashlib
from typing import Union

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX_1) & MASK64
        z = ((z ^ (z >> 27)) * MIX_2) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform on [0, 1) with 53 random bits"""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniforms(self, count: int) -> np.ndarray:
        return np.fromiter((self.uniform() for _ in range(count)), dtype=float, count=count)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, without modulo bias"""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def binomial(self, n: int, p: float) -> int:
        """Sum of n Bernoulli draws"""
        return sum(1 for _ in range(n) if self.bernoulli(p))

    @classmethod
    def derive(cls, seed: int, *labels: Union[int, str]) -> "SplitMix64":
        """Independent stream for (seed, labels), e.g. derive(seed, "arrivals", trace)"""
        text = ":".join([str(seed & MASK64)] + [str(label) for label in labels])
        digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
        return cls(int.from_bytes(digest, "little"))
