"""Keyed random streams.

Every random draw in an experiment comes from a generator derived from the
master seed and a tuple of integer keys (scenario, stage, action, sample...),
so results do not depend on the order in which work units are executed.
"""

from __future__ import annotations

import numpy as np

# first-level keys
SCENARIO = 0
TRAJECTORY = 1
PLANNER = 2


class Streams:
    def __init__(self, seed: int, key: tuple[int, ...] = ()) -> None:
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)

    def child(self, *key: int) -> "Streams":
        return Streams(self.seed, self.key + key)

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key + tuple(int(k) for k in key))
        return np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"Streams(seed={self.seed}, key={self.key})"
