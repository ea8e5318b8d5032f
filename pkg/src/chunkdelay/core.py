"""Shared domain types, balance orderings, and empirical stochastic-order checks.

Vectors are plain ``numpy`` float/int arrays indexed by server (0-based).
The validators below are the single place where structural invariants are
enforced; simulation code assumes validated inputs on its hot path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Absolute-plus-relative tolerance for floating-point comparisons in the
# ordering predicates.  Exact equality is brittle: the workload recursion
# accumulates rounding across 1e5 additions.
ORDER_TOL = 1e-9


def _astol(scale: float) -> float:
    return ORDER_TOL * max(1.0, abs(scale))


# ---------------------------------------------------------------------------
# vector validators
# ---------------------------------------------------------------------------

def as_workload(entries, m: int | None = None) -> np.ndarray:
    """Validate and return a workload vector (non-negative floats, length m)."""
    w = np.asarray(entries, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("workload vector must be 1-D and non-empty")
    if m is not None and w.size != m:
        raise ValueError(f"workload vector has length {w.size}, expected {m}")
    if np.any(w < 0):
        raise ValueError("workload entries must be non-negative")
    return w


def check_placement(a, alpha_k: int, m: int | None = None) -> np.ndarray:
    """Validate a placement vector: sum alpha_k, entries spread at most 1.

    Every valid placement has entries in {floor(alpha_k/m), floor(alpha_k/m)+1}
    with exactly alpha_k - m*floor(alpha_k/m) entries at the larger value.
    """
    av = np.asarray(a)
    if not np.issubdtype(av.dtype, np.integer):
        raise ValueError("placement entries must be integers")
    if m is not None and av.size != m:
        raise ValueError(f"placement vector has length {av.size}, expected {m}")
    if np.any(av < 0):
        raise ValueError("placement entries must be non-negative")
    if av.sum() != alpha_k:
        raise ValueError(f"placement sums to {av.sum()}, expected {alpha_k}")
    base = alpha_k // av.size
    extras = alpha_k - av.size * base
    n_hi = int(np.count_nonzero(av == base + 1))
    n_lo = int(np.count_nonzero(av == base))
    if n_hi != extras or n_lo != av.size - extras:
        raise ValueError("placement entries must be balanced (spread <= 1)")
    return av


def check_routing(s, a, k: int) -> np.ndarray:
    """Validate a routing vector against its placement: s <= a and |s| = k."""
    sv = np.asarray(s)
    av = np.asarray(a)
    if sv.shape != av.shape:
        raise ValueError("routing/placement length mismatch")
    if np.any(sv < 0) or np.any(sv > av):
        raise ValueError("routing must satisfy 0 <= s <= a entrywise")
    if sv.sum() != k:
        raise ValueError(f"routing sums to {sv.sum()}, expected {k}")
    return sv


# ---------------------------------------------------------------------------
# file-size distribution and system parameters
# ---------------------------------------------------------------------------

# Tail mass below which infinite-support pmfs are truncated.
PMF_TAIL_EPS = 1e-12

_THETA_FAMILIES = ("binomial", "geometric")
_BOUND_FAMILIES = ("binomial", "geometric", "delta")


@dataclass(frozen=True)
class FileSizeDistribution:
    """Distribution of the number of chunks per requested file.

    ``kind`` is one of ``binomial`` (p, over 0..m), ``geometric`` (p, support
    k >= 1), ``delta`` (point mass at k0), or ``explicit`` (list of (k, p_k)).
    ``alpha_offset`` encodes the coding rule alpha_k = k + r giving the number
    of coded blocks stored for a k-chunk file.
    """

    kind: str
    p: float | None = None
    k0: int | None = None
    m: int | None = None
    pmf_items: tuple[tuple[int, float], ...] | None = None
    alpha_offset: int = 0

    def __post_init__(self):
        if self.alpha_offset < 0 or int(self.alpha_offset) != self.alpha_offset:
            raise ValueError("alpha_offset must be a non-negative integer")
        if self.kind == "binomial":
            if self.m is None or self.m < 1:
                raise ValueError("binomial distribution needs the server count m")
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError("binomial p must be in [0, 1]")
        elif self.kind == "geometric":
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise ValueError("geometric p must be in (0, 1]")
        elif self.kind == "delta":
            if self.k0 is None or self.k0 < 1:
                raise ValueError("delta distribution needs k0 >= 1")
        elif self.kind == "explicit":
            if not self.pmf_items:
                raise ValueError("explicit distribution needs pmf items")
            ks = [k for k, _ in self.pmf_items]
            ps = [q for _, q in self.pmf_items]
            if any(k < 0 or int(k) != k for k in ks) or len(set(ks)) != len(ks):
                raise ValueError("explicit pmf needs distinct non-negative integer k")
            if any(q < 0 for q in ps):
                raise ValueError("explicit pmf entries must be non-negative")
            if abs(math.fsum(ps) - 1.0) > PMF_TAIL_EPS:
                raise ValueError("explicit pmf must sum to 1 within 1e-12")
        else:
            raise ValueError(f"unknown file-size distribution kind {self.kind!r}")

    # -- pmf ----------------------------------------------------------------

    def support(self) -> np.ndarray:
        """Chunk counts carrying mass, truncated where tail mass < 1e-12."""
        if self.kind == "binomial":
            return np.arange(0, self.m + 1)
        if self.kind == "geometric":
            kmax = max(1, int(math.ceil(math.log(PMF_TAIL_EPS) / math.log1p(-self.p))))
            return np.arange(1, kmax + 1)
        if self.kind == "delta":
            return np.array([self.k0])
        return np.array(sorted(k for k, _ in self.pmf_items))

    def pmf(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (support, probabilities); infinite tails truncated."""
        ks = self.support()
        if self.kind == "binomial":
            # iterative binomial pmf, stable for m up to a few thousand
            probs = np.zeros(ks.size)
            logp = [
                math.lgamma(self.m + 1) - math.lgamma(k + 1) - math.lgamma(self.m - k + 1)
                + (k * math.log(self.p) if self.p > 0 else (0.0 if k == 0 else -math.inf))
                + ((self.m - k) * math.log1p(-self.p) if self.p < 1 else (0.0 if k == self.m else -math.inf))
                for k in ks
            ]
            probs = np.exp(logp)
        elif self.kind == "geometric":
            probs = (1 - self.p) ** (ks - 1) * self.p
        elif self.kind == "delta":
            probs = np.array([1.0])
        else:
            items = dict(self.pmf_items)
            probs = np.array([items[int(k)] for k in ks])
        return ks, probs

    def mean_chunks(self) -> float:
        if self.kind == "binomial":
            return self.m * self.p
        if self.kind == "geometric":
            return 1.0 / self.p
        if self.kind == "delta":
            return float(self.k0)
        return float(sum(k * q for k, q in self.pmf_items))

    def alpha(self, k: int) -> int:
        """Number of coded blocks stored for a k-chunk file."""
        if k < 1:
            raise ValueError("alpha is defined for k >= 1")
        return k + self.alpha_offset

    # -- modelling flags ----------------------------------------------------

    @property
    def theta_m_assumed(self) -> bool:
        """Whether the family is assumed to make random routing associated.

        Recorded as an assumption, not verified: holds for the binomial and
        geometric families.
        """
        return self.kind in _THETA_FAMILIES

    @property
    def bound_suite_supported(self) -> bool:
        """Families for which the delay-bound comparison suite is enabled."""
        return self.kind in _BOUND_FAMILIES


@dataclass(frozen=True)
class ChunkModel:
    """Chunk-size model: every block of one file has the same size in bits.

    ``fixed`` uses a constant size; ``exponential`` draws one size per file.
    """

    kind: str = "fixed"
    size: float = 1.0  # fixed size, or the mean for exponential

    def __post_init__(self):
        if self.kind not in ("fixed", "exponential"):
            raise ValueError(f"unknown chunk model {self.kind!r}")
        if self.size <= 0:
            raise ValueError("chunk size must be positive")

    @property
    def mean(self) -> float:
        return self.size

    @property
    def random(self) -> bool:
        return self.kind == "exponential"


@dataclass(frozen=True)
class SystemParams:
    """Cluster-level parameters: m servers at rate mu, request rate lam."""

    m: int
    mu: float
    lam: float
    chunk: ChunkModel

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one server")
        if self.mu <= 0:
            raise ValueError("service rate mu must be positive")
        if self.lam <= 0:
            raise ValueError("arrival rate must be positive")

    def load_per_server(self, dist: FileSizeDistribution) -> float:
        """Offered load rho = lam * nu / m in bits/sec per server."""
        return self.lam * self.chunk.mean * dist.mean_chunks() / self.m

    def stable(self, dist: FileSizeDistribution) -> bool:
        return self.load_per_server(dist) < self.mu


# ---------------------------------------------------------------------------
# balance orderings
# ---------------------------------------------------------------------------

def majorizes(x, y) -> bool:
    """True iff x is majorized by y (x is at least as balanced as y).

    Requires equal totals; then every partial sum of the l smallest entries
    of x must be >= the corresponding partial sum for y, l = 1..m-1.
    """
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.shape != yv.shape or xv.ndim != 1 or xv.size < 1:
        raise ValueError("majorizes needs two 1-D vectors of equal length")
    sx, sy = float(xv.sum()), float(yv.sum())
    if abs(sx - sy) > _astol(sx):
        return False
    cx = np.cumsum(np.sort(xv))
    cy = np.cumsum(np.sort(yv))
    tol = _astol(max(np.abs(cx).max(), np.abs(cy).max()))
    return bool(np.all(cx[:-1] >= cy[:-1] - tol))


def submajorizes(x, y) -> bool:
    """True iff x is submajorized by y: top-l sums of x never exceed y's."""
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.shape != yv.shape or xv.ndim != 1 or xv.size < 1:
        raise ValueError("submajorizes needs two 1-D vectors of equal length")
    cx = np.cumsum(np.sort(xv)[::-1])
    cy = np.cumsum(np.sort(yv)[::-1])
    tol = _astol(max(np.abs(cx).max(), np.abs(cy).max()))
    return bool(np.all(cx <= cy + tol))


def apply_balancing_transfer(x, i: int, j: int, delta: float) -> np.ndarray:
    """Move delta from a larger entry j to a smaller entry i (0-based indices).

    Requires x[i] <= x[j] and 0 <= delta <= x[j] - x[i]; the result is always
    majorized by x, which makes this a convenient oracle for ``majorizes``.
    """
    xv = np.asarray(x, dtype=float)
    if xv.ndim != 1:
        raise ValueError("transfer needs a 1-D vector")
    if not (0 <= i < xv.size and 0 <= j < xv.size):
        raise ValueError("transfer indices out of range")
    if xv[i] > xv[j]:
        raise ValueError("transfer requires x[i] <= x[j]")
    if not 0 <= delta <= xv[j] - xv[i]:
        raise ValueError("transfer amount must lie in [0, x[j] - x[i]]")
    out = xv.copy()
    out[i] += delta
    out[j] -= delta
    return out


# ---------------------------------------------------------------------------
# empirical increasing-convex-order check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IcxPoint:
    t: float
    mean_x: float
    mean_y: float
    gap: float           # mean_x - mean_y; positive gaps count against X <= Y
    halfwidth: float     # combined 95% half-width for the gap
    flagged: bool


@dataclass(frozen=True)
class IcxReport:
    points: tuple[IcxPoint, ...]
    consistent: bool
    worst_gap: float     # largest gap minus halfwidth over the grid

    @property
    def verdict(self) -> str:
        return "consistent with <=icx" if self.consistent else "inconsistent with <=icx"


def empirical_icx_leq(samples_x, samples_y, t_grid) -> IcxReport:
    """Statistical consistency check for X <= Y in increasing convex order.

    Uses the generating family g_t(x) = max(x - t, 0): X <= Y in this order
    iff E[(X-t)+] <= E[(Y-t)+] for all t.  For each grid point the sample
    means are compared with a two-sample 95% normal half-width; a point is
    flagged when mean_x exceeds mean_y beyond that half-width.  This is a
    consistency check on a finite grid, not a decision procedure.
    """
    xs = np.asarray(samples_x, dtype=float).ravel()
    ys = np.asarray(samples_y, dtype=float).ravel()
    ts = np.asarray(t_grid, dtype=float).ravel()
    if xs.size == 0 or ys.size == 0:
        raise ValueError("icx check needs non-empty sample sets")
    if ts.size == 0:
        raise ValueError("icx check needs a non-empty t grid")

    points = []
    worst = -math.inf
    for t in ts:
        gx = np.maximum(xs - t, 0.0)
        gy = np.maximum(ys - t, 0.0)
        mx, my = float(gx.mean()), float(gy.mean())
        hx = 1.96 * float(gx.std(ddof=1)) / math.sqrt(gx.size) if gx.size > 1 else 0.0
        hy = 1.96 * float(gy.std(ddof=1)) / math.sqrt(gy.size) if gy.size > 1 else 0.0
        hw = math.hypot(hx, hy)
        gap = mx - my
        flagged = gap > hw
        worst = max(worst, gap - hw)
        points.append(IcxPoint(float(t), mx, my, gap, hw, flagged))
    consistent = not any(p.flagged for p in points)
    return IcxReport(tuple(points), consistent, worst)


def percentile_grid(samples, n_points: int = 20, upper_q: float = 99.0) -> np.ndarray:
    """Evenly spaced t-grid from 0 to the upper_q-th percentile of samples."""
    hi = float(np.percentile(np.asarray(samples, dtype=float), upper_q))
    return np.linspace(0.0, max(hi, 0.0), n_points)
