"""Deterministic random stream.

State is a single 64-bit counter advanced by the splitmix64 increment; outputs
come from the splitmix64 xorshift-multiply finalizer. Uniforms use the top 53
bits, Gaussians come from Box-Muller on uniform pairs (an odd request burns the
spare sample so the stream position depends only on how many values were
asked for). The Rng value itself is immutable: every draw returns the value(s)
plus the advanced Rng.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

ALGORITHM = "splitmix64"


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class Rng:
    state: int
    algorithm: str = ALGORITHM

    @classmethod
    def from_seed(cls, seed: int) -> "Rng":
        return cls(state=seed & _MASK)

    def fork(self, tag: int) -> "Rng":
        """Derive an independent stream, e.g. one per rollout worker."""
        return Rng.from_seed(_mix((self.state + _GOLDEN * ((tag & _MASK) + 1)) & _MASK))

    def next_u64(self) -> tuple[int, "Rng"]:
        s = (self.state + _GOLDEN) & _MASK
        return _mix(s), Rng(s, self.algorithm)

    def _raw(self, n: int) -> tuple[np.ndarray, "Rng"]:
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
            states = np.uint64(self.state) + steps
            out = _mix_vec(states)
        return out, Rng((self.state + _GOLDEN * n) & _MASK, self.algorithm)

    def uniform(self, n: int | None = None) -> tuple[float | np.ndarray, "Rng"]:
        """Uniform draws in [0, 1) with 53-bit resolution."""
        raw, rng = self._raw(1 if n is None else n)
        vals = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (float(vals[0]) if n is None else vals), rng

    def normal(self, n: int | None = None) -> tuple[float | np.ndarray, "Rng"]:
        """Standard Gaussian draws via Box-Muller."""
        m = 1 if n is None else n
        pairs = (m + 1) // 2
        raw, rng = self._raw(2 * pairs)
        # u1 in (0, 1] keeps log() finite
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        vals = z[:m]
        return (float(vals[0]) if n is None else vals), rng

    def integer(self, lo: int, hi: int) -> tuple[int, "Rng"]:
        """Uniform integer in [lo, hi). Floor-scaling; the 2^-53 bias is irrelevant here."""
        u, rng = self.uniform()
        return lo + int(u * (hi - lo)), rng

    def choice(self, seq, k: int | None = None):
        """One element (k=None) or k elements with replacement, plus the advanced Rng."""
        if k is None:
            i, rng = self.integer(0, len(seq))
            return seq[i], rng
        u, rng = self.uniform(k)
        return [seq[int(x * len(seq))] for x in u], rng

    def shuffled_indices(self, n: int) -> tuple[np.ndarray, "Rng"]:
        """Fisher-Yates permutation of range(n)."""
        idx = np.arange(n)
        u, rng = self.uniform(max(n - 1, 1))
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            idx[i], idx[j] = idx[j], idx[i]
        return idx, rng
