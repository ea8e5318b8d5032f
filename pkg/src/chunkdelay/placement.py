"""Randomized dissemination of coded blocks across servers.

A k-chunk file is coded into alpha_k blocks which are spread as evenly as
possible: every server stores floor(alpha_k/m) blocks and the remainder goes
to a uniformly random subset of servers.  Placement is resampled per arrival,
which models the per-request symmetry of a catalog much larger than the
cluster.
"""

from __future__ import annotations

import numpy as np

from .core import FileSizeDistribution


def sample_chunk_count(dist: FileSizeDistribution, rng: np.random.Generator) -> int:
    """Draw one chunk count from the file-size distribution."""
    return int(sample_chunk_counts(dist, rng, 1)[0])


def sample_chunk_counts(dist: FileSizeDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw i.i.d. chunk counts; vectorized for the simulation driver."""
    if dist.kind == "binomial":
        return rng.binomial(dist.m, dist.p, size=size)
    if dist.kind == "geometric":
        return rng.geometric(dist.p, size=size)
    if dist.kind == "delta":
        return np.full(size, dist.k0, dtype=np.int64)
    ks, probs = dist.pmf()
    return rng.choice(ks, size=size, p=probs / probs.sum())


def random_subset_indices(m: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random r-subset of range(m).

    Implemented by ranking i.i.d. uniform keys: the r smallest keys form an
    exactly uniform subset in O(m).
    """
    if not 0 <= r <= m:
        raise ValueError("subset size out of range")
    if r == 0:
        return np.empty(0, dtype=np.int64)
    if r == m:
        return np.arange(m)
    keys = rng.random(m)
    return np.argpartition(keys, r - 1)[:r]


def sample_placement(k: int, alpha_k: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a placement vector for a k-chunk file coded into alpha_k blocks.

    Every server receives floor(alpha_k/m) blocks; the remaining
    alpha_k - m*floor(alpha_k/m) blocks land on a uniformly random subset of
    servers, one extra block each.
    """
    if k < 1:
        raise ValueError("need at least one chunk")
    if alpha_k < k:
        raise ValueError("coding cannot shrink a file: alpha_k >= k required")
    if m < 1:
        raise ValueError("need at least one server")
    base, extras = divmod(alpha_k, m)
    a = np.full(m, base, dtype=np.int64)
    if extras:
        a[random_subset_indices(m, extras, rng)] += 1
    return a
