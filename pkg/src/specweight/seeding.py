"""Deterministic named random substreams.

Every piece of randomness in the package flows from a single integer seed
through named substreams, so that e.g. the fold assignment and the model
initialization cannot interfere with each other and runs are reproducible
across platforms.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_ints(keys: tuple) -> list[int]:
    out = []
    for k in keys:
        if isinstance(k, str):
            out.append(zlib.crc32(k.encode("utf-8")))
        elif isinstance(k, (int, np.integer)):
            out.append(int(k) & 0xFFFFFFFFFFFFFFFF)
        else:
            raise TypeError(f"substream keys must be str or int, got {type(k)!r}")
    return out


def rng_for(seed: int, *keys) -> np.random.Generator:
    """Generator for the substream identified by `keys` under `seed`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + _key_ints(keys)))


def derive_seed(seed: int, *keys) -> int:
    """Stable derived integer seed for an independent child run (e.g. one CV fold)."""
    ss = np.random.SeedSequence([int(seed)] + _key_ints(keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
