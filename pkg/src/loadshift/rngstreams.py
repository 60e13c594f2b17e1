"""Deterministic random-stream derivation for every pipeline stage.

All randomness in a run flows from one master seed. Each stage (graph
construction, opinion sampling, calibration, chain generation, engagement
draws, per-period games) pulls its own generator from a seed tree, so
stages can run in any order or concurrently without changing results.
"""
from __future__ import annotations

import numpy as np

# Stage tags; fixed constants so derived streams never collide or move
# between releases.
GRAPH = 1
OPINIONS = 2
CALIBRATION = 3
PROFILES = 4
ENGAGEMENT = 5
GAME = 6
ANALYSIS = 7


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the generator for a stage path, e.g. substream(seed, GAME, period)."""
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=tuple(int(p) for p in path)
    )
    return np.random.Generator(np.random.PCG64(ss))


def seed_int(master_seed: int, *path: int) -> int:
    """32-bit seed from the same tree, for libraries that want a plain int."""
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=tuple(int(p) for p in path)
    )
    return int(ss.generate_state(1, np.uint32)[0])
