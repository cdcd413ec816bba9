"""Deterministic fan-out of a master seed into labelled sub-streams.

Every stochastic component (path simulation, default triggers, weight
initialisation, batch shuffling, exercise-state randomisation) draws from its
own labelled stream, so components can be varied independently and any run is
reproducible from the master seed alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["SeedBank"]


def _label_words(label: tuple) -> tuple[int, ...]:
    """Map an arbitrary label tuple to stable 32-bit spawn-key words."""
    text = "/".join(repr(part) for part in label)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class SeedBank:
    """Labelled RNG streams derived from one master seed.

    The same (master_seed, label) pair always yields the same stream,
    independently of how many other streams were requested and in what order.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def sequence(self, *label) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=_label_words(tuple(label)))

    def generator(self, *label) -> np.random.Generator:
        return np.random.default_rng(self.sequence(*label))

    def seed_int(self, *label) -> int:
        """A 63-bit integer seed for components that want a plain int."""
        return int(self.sequence(*label).generate_state(1, np.uint64)[0] >> 1)

    def __repr__(self) -> str:  # pragma: no cover
        return f"SeedBank(master_seed={self.master_seed})"
