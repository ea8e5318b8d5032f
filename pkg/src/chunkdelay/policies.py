"""Routing policies: which servers serve the k requested blocks.

All three policies request floor(k/m) blocks from every server and differ in
where the k' = k - m*floor(k/m) leftover blocks go:

* balanced random (BR): a uniformly random subset of the servers holding a
  spare block, independent of workloads;
* batch sampling (BS): the k' least-loaded servers holding a spare block;
* water filling (WF): k sequential picks of the server with the smallest
  effective load (current workload plus blocks already taken this arrival).

Ties are broken uniformly at random via one vector of per-server keys drawn
per arrival.  Exposing the keys explicitly lets coupled experiments feed the
identical tie-break randomness to every policy.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field

import numpy as np


class Policy(enum.Enum):
    BR = "BR"
    BS = "BS"
    WF = "WF"

    def __str__(self):  # CSV / report labels
        return self.value


@dataclass
class OpCounter:
    """Counts elementary selection operations (heap events, scanned items)."""

    heap_ops: int = 0
    scanned: int = 0

    @property
    def total(self) -> int:
        return self.heap_ops + self.scanned


def _base_split(a: np.ndarray, k: int):
    """Common preamble: per-server base count and the spare-block candidates."""
    m = a.size
    if k < 1:
        raise ValueError("need at least one block to route")
    if int(a.sum()) < k:
        raise ValueError("placement holds fewer blocks than requested")
    base, kp = divmod(k, m)
    if base and np.any(a < base):
        raise ValueError("placement too uneven to request floor(k/m) everywhere")
    eligible = np.flatnonzero(a > base)
    if kp > eligible.size:
        raise ValueError("placement too uneven to route the leftover blocks")
    return base, kp, eligible


def route_br_with_keys(a: np.ndarray, k: int, keys: np.ndarray) -> np.ndarray:
    """Balanced random routing; leftover blocks go to the servers with the
    smallest tie-break keys among the candidates (a uniform random subset)."""
    base, kp, eligible = _base_split(a, k)
    s = np.full(a.size, base, dtype=np.int64)
    if kp:
        if kp == eligible.size:
            chosen = eligible
        else:
            chosen = eligible[np.argpartition(keys[eligible], kp - 1)[:kp]]
        s[chosen] += 1
    return s


def route_bs_with_keys(a: np.ndarray, k: int, w: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Batch-sampling routing; leftovers go to the candidates with the least
    instantaneous workload, key-ordered among exact ties."""
    base, kp, eligible = _base_split(a, k)
    s = np.full(a.size, base, dtype=np.int64)
    if kp:
        order = np.lexsort((keys[eligible], w[eligible]))
        s[eligible[order[:kp]]] += 1
    return s


def _bs_selection_counted(a, k, w, keys, ops: OpCounter):
    """Heap-based equivalent of the batch-sampling selection, instrumented.

    Keeps a size-k' max-heap of the current best candidates, so the work is
    O(n log k') over n candidates.  Returns the same index set as the lexsort
    path (selection by the total order (w, key) has a unique answer).
    """
    base, kp, eligible = _base_split(a, k)
    s = np.full(a.size, base, dtype=np.int64)
    if kp:
        heap = []  # max-heap via negated (w, key)
        for i in eligible:
            ops.scanned += 1
            item = (-w[i], -keys[i], i)
            if len(heap) < kp:
                heapq.heappush(heap, item)
                ops.heap_ops += 1
            elif item > heap[0]:
                heapq.heapreplace(heap, item)
                ops.heap_ops += 1
        for _, _, i in heap:
            s[i] += 1
    return s


def route_wf_with_keys(
    a: np.ndarray,
    k: int,
    w: np.ndarray,
    chunk: float,
    keys: np.ndarray,
    ops: OpCounter | None = None,
) -> np.ndarray:
    """Water-filling routing: k greedy picks of the minimum effective load.

    A server's effective load is its workload plus chunk * (blocks already
    taken from it this arrival); a taken server is re-inserted with its
    updated load, as long as it still holds spare blocks.
    """
    if k < 1:
        raise ValueError("need at least one block to route")
    if int(a.sum()) < k:
        raise ValueError("placement holds fewer blocks than requested")
    if chunk <= 0:
        raise ValueError("chunk size must be positive")
    heap = [(w[i], keys[i], i) for i in np.flatnonzero(a > 0)]
    heapq.heapify(heap)
    if ops is not None:
        ops.scanned += len(heap)
    taken = np.zeros(a.size, dtype=np.int64)
    for _ in range(k):
        load, key, i = heapq.heappop(heap)
        taken[i] += 1
        if ops is not None:
            ops.heap_ops += 1
        if taken[i] < a[i]:
            heapq.heappush(heap, (w[i] + chunk * taken[i], key, i))
            if ops is not None:
                ops.heap_ops += 1
    return taken


# -- public single-shot wrappers -------------------------------------------
#
# Each wrapper draws one key vector from the supplied generator, so repeated
# calls are i.i.d.  The engine uses the *_with_keys forms directly to share
# one key draw across coupled policies.

def route_br(a, k: int, rng: np.random.Generator) -> np.ndarray:
    a = np.asarray(a)
    return route_br_with_keys(a, k, rng.random(a.size))


def route_bs(a, k: int, w, rng: np.random.Generator) -> np.ndarray:
    a = np.asarray(a)
    return route_bs_with_keys(a, k, np.asarray(w, dtype=float), rng.random(a.size))


def route_wf(a, k: int, w, c: float, rng: np.random.Generator) -> np.ndarray:
    a = np.asarray(a)
    return route_wf_with_keys(a, k, np.asarray(w, dtype=float), c, rng.random(a.size))


def route_with_keys(policy: Policy, a, k, w, chunk, keys) -> np.ndarray:
    if policy is Policy.BR:
        return route_br_with_keys(a, k, keys)
    if policy is Policy.BS:
        return route_bs_with_keys(a, k, w, keys)
    return route_wf_with_keys(a, k, w, chunk, keys)
