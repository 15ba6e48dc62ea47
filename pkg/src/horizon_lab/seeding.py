"""Deterministic, counter-style random stream derivation.

Every randomized quantity in the lab draws from a generator derived from a
key tuple such as ``(master_seed, experiment_kind, trial_index)``.  Keys are
hashed into a ``SeedSequence`` so results are independent of execution order,
thread count, and platform.  No ambient (module-level) randomness is used
anywhere.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def seed_sequence(*key_parts) -> np.random.SeedSequence:
    """Hash a key tuple (ints / strings / floats) into a SeedSequence."""
    h = hashlib.blake2b(digest_size=16)
    for part in key_parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return np.random.SeedSequence(int.from_bytes(h.digest(), "big"))


def derive_rng(*key_parts) -> np.random.Generator:
    """Deterministic generator keyed by the given parts."""
    return np.random.default_rng(seed_sequence(*key_parts))


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Map ``fn`` over ``items`` preserving input order.

    With ``jobs <= 1`` runs inline.  Workers receive their own derived seeds
    through ``items``, so the output is identical at any parallelism level.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunk = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
