"""
Seed-derived random streams.
Every stage draws from its own stream so results do not depend on call order or thread count.
"""

import zlib

import numpy as np


def stage_rng(seed: int, stage: str, *keys: int) -> np.random.Generator:
    """
    Build a generator for one named stage.

    Args:
        seed: Run seed
        stage: Stage name, hashed with crc32 (stable across interpreter runs, unlike hash())
        *keys: Extra integers (window index, frame index, ...) for sub-streams

    Returns:
        Independent numpy Generator
    """
    entropy = [int(seed), zlib.crc32(stage.encode("utf-8")), *[int(k) for k in keys]]
    return np.random.default_rng(np.random.SeedSequence(entropy))
