"""Deterministic random-stream derivation.

Every stochastic step draws from a substream named by (seed, *labels), so
results do not depend on execution order or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(*labels) -> int:
    """Stable 64-bit key for a label path (order-sensitive)."""
    text = "/".join(str(label) for label in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *labels) -> np.random.Generator:
    """Generator for the substream identified by (seed, *labels)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), derive_key(*labels)])))
