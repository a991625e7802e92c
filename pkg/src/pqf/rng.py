"""Seeded, platform-stable randomness helpers.

Every stochastic routine in the package draws from a counter-based Philox
generator keyed by a user seed plus string tags, and Gaussian variates are
produced by an explicit Box-Muller transform over Philox uniforms. This keeps
results reproducible across runs, thread counts, and platforms without
depending on the default bit generator or its normal-sampling algorithm.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_entropy(tag: str) -> int:
    digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int, *tags: str) -> np.random.Generator:
    """Build a Philox generator keyed by `seed` and optional string tags."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    entropy.extend(_tag_entropy(t) for t in tags)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *tags: str) -> int:
    """Derive a stable child seed for a named subtask."""
    h = hashlib.blake2s(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=True))
    for t in tags:
        h.update(b"\x00")
        h.update(t.encode("utf-8"))
    return int.from_bytes(h.digest(), "little") >> 1


def gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal samples via Box-Muller over Philox uniforms."""
    n = int(np.prod(shape)) if shape else 1
    half = (n + 1) // 2
    # 1 - U keeps the log argument in (0, 1].
    u1 = 1.0 - rng.random(half)
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])
    return z[:n].reshape(shape)
