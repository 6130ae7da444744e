"""Deterministic 64-bit random number generator.

The generator is splitmix64 (Steele, Lea & Flood; the same algorithm used
to seed xoshiro state).  It is tiny, has a public reference implementation,
and produces the identical stream on every platform and Python version,
which is what makes seeded corpora reproducible byte-for-byte.  The stdlib
Mersenne Twister would also be stable, but its state is large and its
integer helpers have changed across Python majors; owning 10 lines of
arithmetic removes the dependency on interpreter history.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


class Rng:
    """splitmix64 stream with the integer/choice helpers the fuzzer needs."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of entropy."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive.

        Plain modulo reduction: the bias is < 2**-50 for every range this
        project uses, and cross-platform determinism matters more here than
        perfect uniformity.
        """
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def choice(self, seq):
        if not seq:
            raise ValueError("choice from empty sequence")
        return seq[self.randint(0, len(seq) - 1)]

    def weighted_choice(self, items, weights) -> int:
        """Index sampled proportionally to ``weights`` (not all zero)."""
        total = float(sum(weights))
        if total <= 0.0:
            raise ValueError("weights sum to zero")
        x = self.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if x < acc:
                return i
        return len(items) - 1

    def shuffle(self, seq) -> None:
        """Fisher-Yates, in place."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(0, i)
            seq[i], seq[j] = seq[j], seq[i]

    def fork(self, stream_id: int) -> "Rng":
        """Independent child stream; used to give each case its own seed."""
        child = Rng((self._state ^ (0xA0761D6478BD642F * (stream_id + 1))) & _MASK)
        child.next_u64()
        return child
