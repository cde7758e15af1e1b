"""Reproducible random-number streams.

Every stochastic operation in the package takes an :class:`RngStream`.
A stream is identified by ``(seed, stream_id)``; identical identifiers
reproduce identical draws, and distinct ``stream_id`` values yield
statistically independent streams.  The mixing function is NumPy's
``SeedSequence``: the stream id (plus any derivation path) is fed in as
the spawn key, which hashes it together with the seed into independent
generator states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Handle for a deterministic, independently seeded random stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be nonnegative integers")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)

    def substream(self, *path: int) -> "RngStream":
        """Derive an independent child stream from integer path components.

        The path is hashed together with the current stream id through
        ``SeedSequence.generate_state`` into a fresh 64-bit stream id, so
        nested derivations (replicate index, model tag, ...) stay
        independent and reproducible.
        """
        if not path:
            raise ValueError("substream requires at least one path component")
        ss = np.random.SeedSequence(entropy=self.stream_id, spawn_key=tuple(path))
        child_id = int(ss.generate_state(1, dtype=np.uint64)[0])
        return RngStream(seed=self.seed, stream_id=child_id)


def open_uniform(gen: np.random.Generator, size) -> np.ndarray:
    """Uniform draws from the open interval (0, 1).

    NumPy's ``random`` can return exactly 0.0 (probability 2^-53 per
    draw); those are redrawn because downstream formulas take logs.
    """
    u = gen.random(size)
    mask = u == 0.0
    while mask.any():
        u[mask] = gen.random(int(mask.sum()))
        mask = u == 0.0
    return u
