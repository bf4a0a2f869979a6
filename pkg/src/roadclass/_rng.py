from __future__ import annotations

import hashlib

import numpy as np


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)
    digest = hashlib.sha256(repr(key).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def keyed_rng(*keys) -> np.random.Generator:
    """Generator whose stream depends only on ``keys``, never on call order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([_key_int(k) for k in keys])))
