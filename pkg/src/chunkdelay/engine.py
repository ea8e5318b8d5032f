"""Workload-recursion simulator.

There is no event-driven queue here: the per-arrival recursion

    W[n+1] = (W[n] + chunk * s[n] - mu * tau[n] * 1)+

is the simulator.  Each arrival sees the current workload vector, a routing
policy picks s[n], the arrival's delay is read off directly, and the state
advances.  A coupled run drives several policies through identical arrival
randomness (inter-arrival times, chunk counts, placements, chunk sizes, and
tie-break keys) while keeping one workload state per policy.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .core import ChunkModel, FileSizeDistribution, SystemParams
from .placement import sample_chunk_counts, sample_placement
from .policies import Policy, route_with_keys


@dataclass(frozen=True)
class ArrivalEvent:
    """One request: inter-arrival gap to the next one, chunk count, placement,
    and the (possibly drawn) chunk size shared by all its blocks."""

    tau: float
    k: int
    a: np.ndarray | None  # None when k == 0 (empty request, nothing routed)
    chunk_size: float


@dataclass(frozen=True)
class DelayRecord:
    n: int
    k: int
    delay: float
    policy: Policy


@dataclass(frozen=True)
class ExperimentConfig:
    params: SystemParams
    dist: FileSizeDistribution
    policies: tuple[Policy, ...] = (Policy.BR,)
    iterations: int = 100_000
    warmup: int | None = None  # default: iterations // 10
    seed: int = 0
    coupled: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if not self.policies:
            raise ValueError("need at least one policy")
        if self.warmup is not None and not 0 <= self.warmup < self.iterations:
            raise ValueError("warmup must satisfy 0 <= warmup < iterations")

    @property
    def warmup_count(self) -> int:
        return self.iterations // 10 if self.warmup is None else self.warmup

    @property
    def rho(self) -> float:
        return self.params.load_per_server(self.dist)

    @property
    def stable(self) -> bool:
        return self.rho < self.params.mu


class DelaySamples:
    """Column store of the post-warmup delay records of one policy."""

    def __init__(self, policy: Policy, ns, ks, delays):
        self.policy = policy
        self.ns = np.asarray(ns, dtype=np.int64)
        self.ks = np.asarray(ks, dtype=np.int64)
        self.delays = np.asarray(delays, dtype=float)

    def __len__(self) -> int:
        return self.delays.size

    def __iter__(self):
        for n, k, d in zip(self.ns, self.ks, self.delays):
            yield DelayRecord(int(n), int(k), float(d), self.policy)

    def mean_ci(self) -> tuple[float, float, int]:
        d = self.delays
        if d.size == 0:
            return math.nan, math.nan, 0
        hw = 1.96 * float(d.std(ddof=1)) / math.sqrt(d.size) if d.size > 1 else 0.0
        return float(d.mean()), hw, int(d.size)

    def stratum(self, k: int) -> np.ndarray:
        return self.delays[self.ks == k]

    def strata(self, min_count: int = 1) -> dict[int, np.ndarray]:
        out = {}
        for k in np.unique(self.ks):
            sel = self.delays[self.ks == k]
            if sel.size >= min_count:
                out[int(k)] = sel
        return out


@dataclass(frozen=True)
class PolicyStats:
    mean_delay: float
    ci95: float
    count: int


@dataclass(frozen=True)
class RunSummary:
    rho: float
    mu: float
    stable: bool
    warning: str | None
    stats: dict[Policy, PolicyStats]


@dataclass(frozen=True)
class RunResult:
    config: ExperimentConfig
    delays: dict[Policy, DelaySamples]
    total_workload: dict[Policy, np.ndarray]  # per-arrival totals, full trace
    marginal: dict[Policy, np.ndarray] | None  # tracked-server samples
    summary: RunSummary


# ---------------------------------------------------------------------------
# single-step operations
# ---------------------------------------------------------------------------

def step(w: np.ndarray, s: np.ndarray, chunk: float, tau: float, mu: float) -> np.ndarray:
    """One recursion step: add the routed bits, drain mu*tau, clip at zero."""
    if w.shape != np.shape(s):
        raise ValueError("workload/routing length mismatch")
    if chunk <= 0 or tau < 0 or mu <= 0:
        raise ValueError("need chunk > 0, tau >= 0, mu > 0")
    return np.maximum(w + chunk * np.asarray(s) - mu * tau, 0.0)


def delay_of(w: np.ndarray, s: np.ndarray, chunk: float, mu: float) -> float:
    """Delay of one arrival: slowest selected server, in time units (bits/mu)."""
    sv = np.asarray(s)
    sel = sv > 0
    if not sel.any():
        raise ValueError("delay undefined for an all-zero routing vector")
    return float((np.asarray(w)[sel] + chunk * sv[sel]).max() / mu)


# ---------------------------------------------------------------------------
# arrival stream
# ---------------------------------------------------------------------------

def arrival_stream(params: SystemParams, dist: FileSizeDistribution,
                   rng: np.random.Generator, n: int):
    """Yield n ArrivalEvents; placements are resampled per arrival."""
    taus = rng.exponential(1.0 / params.lam, size=n)
    ks = sample_chunk_counts(dist, rng, n)
    if params.chunk.random:
        chunks = rng.exponential(params.chunk.mean, size=n)
    else:
        chunks = np.full(n, params.chunk.size)
    for i in range(n):
        k = int(ks[i])
        a = sample_placement(k, dist.alpha(k), params.m, rng) if k > 0 else None
        yield ArrivalEvent(float(taus[i]), k, a, float(chunks[i]))


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def _drive(params: SystemParams, dist: FileSizeDistribution,
           policies: tuple[Policy, ...], n_iter: int, warmup: int,
           env: np.random.Generator, tie: np.random.Generator,
           track_server: int | None):
    m, mu = params.m, params.mu
    w = {pol: np.zeros(m) for pol in policies}
    rec = {pol: ([], [], []) for pol in policies}
    totals = {pol: np.empty(n_iter) for pol in policies}
    marg = {pol: [] for pol in policies} if track_server is not None else None

    for n, ev in enumerate(arrival_stream(params, dist, env, n_iter)):
        keys = tie.random(m) if ev.k > 0 else None
        for pol in policies:
            wv = w[pol]
            totals[pol][n] = wv.sum()
            if marg is not None and n >= warmup:
                marg[pol].append(wv[track_server])
            if ev.k == 0:
                w[pol] = np.maximum(wv - mu * ev.tau, 0.0)
                continue
            s = route_with_keys(pol, ev.a, ev.k, wv, ev.chunk_size, keys)
            if n >= warmup:
                ns, ks, ds = rec[pol]
                ns.append(n)
                ks.append(ev.k)
                ds.append(delay_of(wv, s, ev.chunk_size, mu))
            w[pol] = np.maximum(wv + ev.chunk_size * s - mu * ev.tau, 0.0)

    delays = {pol: DelaySamples(pol, *rec[pol]) for pol in policies}
    marginal = ({pol: np.asarray(v) for pol, v in marg.items()}
                if marg is not None else None)
    return delays, totals, marginal


def run(config: ExperimentConfig, track_server: int | None = None) -> RunResult:
    """Run the recursion for every configured policy and collect delays.

    With ``config.coupled`` every policy consumes identical environment
    randomness (tau, chunk counts, placements, chunk sizes) and identical
    tie-break keys; otherwise each policy gets its own independent streams.
    """
    params, dist = config.params, config.dist
    if track_server is not None and not 0 <= track_server < params.m:
        raise ValueError("tracked server index out of range")
    warmup = config.warmup_count
    root = np.random.SeedSequence(config.seed)

    if config.coupled or len(config.policies) == 1:
        env_ss, tie_ss = root.spawn(2)
        delays, totals, marginal = _drive(
            params, dist, config.policies, config.iterations, warmup,
            np.random.default_rng(env_ss), np.random.default_rng(tie_ss),
            track_server)
    else:
        delays, totals, marginal = {}, {}, ({} if track_server is not None else None)
        for pol, child in zip(config.policies, root.spawn(len(config.policies))):
            env_ss, tie_ss = child.spawn(2)
            d, t, mg = _drive(params, dist, (pol,), config.iterations, warmup,
                              np.random.default_rng(env_ss),
                              np.random.default_rng(tie_ss), track_server)
            delays.update(d)
            totals.update(t)
            if mg is not None:
                marginal.update(mg)

    rho = config.rho
    stable = rho < params.mu
    warning = None if stable else (
        f"offered load {rho:.4g} >= service rate {params.mu:.4g}; "
        "workloads drift, steady-state statistics are not meaningful")
    stats = {pol: PolicyStats(*delays[pol].mean_ci()) for pol in config.policies}
    summary = RunSummary(rho, params.mu, stable, warning, stats)
    return RunResult(config, delays, totals, marginal, summary)


def conditional_mean_delay(samples: DelaySamples, k: int) -> tuple[float, float, int] | None:
    """Mean delay over records with chunk count k, with a 95% half-width.

    Returns None when the stratum is empty (absent, not an error).
    """
    d = samples.stratum(k)
    if d.size == 0:
        return None
    hw = 1.96 * float(d.std(ddof=1)) / math.sqrt(d.size) if d.size > 1 else 0.0
    return float(d.mean()), hw, int(d.size)


def conditional_means(samples: DelaySamples, min_count: int = 1) -> dict[int, tuple[float, float, int]]:
    """Per-k conditional mean delays for all strata with at least min_count."""
    return {k: (float(v.mean()),
                1.96 * float(v.std(ddof=1)) / math.sqrt(v.size) if v.size > 1 else 0.0,
                int(v.size))
            for k, v in samples.strata(min_count).items()}


def marginal_workload_samples(config: ExperimentConfig, server_index: int) -> np.ndarray:
    """Per-arrival workload at one server under balanced-random routing.

    This is the stream to compare against the single-queue companion model:
    under workload-oblivious routing the marginal at any one server evolves
    as an M/GI/1 queue.
    """
    if config.policies != (Policy.BR,):
        config = dataclasses.replace(config, policies=(Policy.BR,))
    result = run(config, track_server=server_index)
    return result.marginal[Policy.BR]
