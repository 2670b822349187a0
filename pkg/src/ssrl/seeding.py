"""Named, counter-based RNG streams.

Every random consumer (init, augmentation, batch sampling, phantom geometry)
derives its own generator from ``(master_seed, *tags)``, so adding draws to
one consumer never perturbs the others, and per-index streams make results
independent of evaluation order.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key(value) -> int:
    if isinstance(value, str):
        digest = hashlib.sha256(value.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    return int(value) & _MASK64


def stream(master_seed: int, *tags) -> np.random.Generator:
    """Generator for the stream named by ``tags``, derived from the master seed."""
    words = [_key(master_seed)] + [_key(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(words))


def derive_seed(master_seed: int, *tags) -> int:
    """A new 63-bit master seed, a pure function of ``(master_seed, *tags)``."""
    words = [_key(master_seed)] + [_key(t) for t in tags]
    digest = hashlib.sha256(b"".join(w.to_bytes(8, "little") for w in words)).digest()
    return int.from_bytes(digest[:8], "little") >> 1
