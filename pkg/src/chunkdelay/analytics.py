"""Closed-form companions to the simulator.

The marginal workload of one server under balanced-random routing is an
M/GI/1 queue whose service requirement is a multiple of the chunk size; the
helpers here build that queue's service pmf, evaluate its Pollaczek-Khinchine
workload transform, extract the deterministic-service tail exponent via the
Lambert W function, and assemble the resulting closed-form delay bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ChunkModel, FileSizeDistribution

_INV_E = math.exp(-1.0)


def harmonic_number(k: int) -> float:
    """H(k) = sum_{l=1..k} 1/l, summed small-to-large for accuracy."""
    if k < 1:
        raise ValueError("harmonic number defined for k >= 1")
    return float(np.sum(1.0 / np.arange(k, 0, -1)))


# ---------------------------------------------------------------------------
# companion single-queue model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CavityPmf:
    """Service pmf of the single-queue companion model.

    ``probs[l]`` is the probability that one request loads a given server
    with exactly ``levels[l]`` blocks (of ``chunk`` bits each).  The queue
    sees every request in the system as an arrival, so ``arrival_rate`` is
    the total request rate; most arrivals bring zero work.
    """

    levels: np.ndarray      # block counts, starting at 0
    probs: np.ndarray
    arrival_rate: float
    chunk: float

    def mean_service_bits(self) -> float:
        return self.chunk * float(np.dot(self.levels, self.probs))

    def second_moment_bits(self) -> float:
        return self.chunk ** 2 * float(np.dot(self.levels.astype(float) ** 2, self.probs))

    def utilization(self, mu: float) -> float:
        return self.arrival_rate * self.mean_service_bits() / mu

    def service_lst(self, mu: float):
        """Laplace transform s -> E[exp(-s * service_time)] at rate mu."""
        times = self.levels * self.chunk / mu

        def lst(s: float) -> float:
            return float(np.dot(np.exp(-s * times), self.probs))

        return lst


def cavity_pmf(pi: FileSizeDistribution, m: int, c: float, lam: float) -> CavityPmf:
    """Per-request block-count pmf at one server under even random routing.

    A request for k chunks loads a given server with floor(k/m) blocks, plus
    one more with probability k/m - floor(k/m).  Averaging over the file-size
    pmf gives atoms at 0, c, 2c, ... whose mean is exactly c * E[k] / m.
    """
    if m < 1 or c <= 0 or lam <= 0:
        raise ValueError("need m >= 1, c > 0, lam > 0")
    ks, probs = pi.pmf()
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError("file-size pmf does not sum to 1")
    lmax = int(math.ceil(ks.max() / m)) + 1
    atoms = np.zeros(lmax + 1)
    for k, p in zip(ks, probs):
        b, frac = divmod(float(k) / m, 1.0)
        b = int(b)
        atoms[b] += (1.0 - frac) * p
        if frac > 0:
            atoms[b + 1] += frac * p
    while atoms.size > 1 and atoms[-1] == 0.0:
        atoms = atoms[:-1]
    return CavityPmf(np.arange(atoms.size), atoms, lam, c)


def pk_workload_transform(arrival_rate: float, service_lst, mean_service: float, s: float) -> float:
    """Stationary M/GI/1 workload transform E[exp(-sW)].

        G(s) = (1 - rate * E[sigma]) * s / (s - rate * (1 - psi(s)))

    where psi is the service-time Laplace transform.  The s -> 0 limit is 1
    (probability normalization); tiny s would hit 0/0 cancellation, so it is
    short-circuited.
    """
    load = arrival_rate * mean_service
    if load >= 1.0:
        raise ValueError(f"unstable queue: arrival_rate * mean_service = {load:.4g} >= 1")
    if s < 0:
        raise ValueError("transform defined for s >= 0")
    if s <= 1e-10:
        return 1.0
    denom = s - arrival_rate * (1.0 - service_lst(s))
    return (1.0 - load) * s / denom


def pk_mean_workload(arrival_rate: float, mean_service: float, second_moment: float) -> float:
    """Stationary mean workload rate*E[sigma^2] / (2 (1 - rate*E[sigma]))."""
    load = arrival_rate * mean_service
    if load >= 1.0:
        raise ValueError("unstable queue")
    return arrival_rate * second_moment / (2.0 * (1.0 - load))


# ---------------------------------------------------------------------------
# Lambert W (Halley iteration)
# ---------------------------------------------------------------------------

def _halley(x: float, w: float, tol: float) -> float:
    for _ in range(100):
        e = math.exp(w)
        p = w * e - x
        if abs(p) <= tol:
            return w
        w1 = w + 1.0
        dw = p / (e * w1 - (w + 2.0) * p / (2.0 * w1))
        w -= dw
        if not math.isfinite(w):
            raise ArithmeticError("Lambert W iteration diverged")
    e = math.exp(w)
    if abs(w * e - x) <= 10 * tol:
        return w
    raise ArithmeticError(f"Lambert W did not converge for x={x!r}")


def lambert_w_principal(x: float) -> float:
    """Principal branch W0: the solution w >= -1 of w * exp(w) = x.

    Defined for x >= -1/e; Halley iteration from a branch-point series guess
    near -1/e and a log-based guess for large x, converged to residual
    |w exp(w) - x| <= 1e-12 * max(1, |x|).
    """
    if x < -_INV_E:
        if x > -_INV_E - 1e-15 * abs(_INV_E):
            x = -_INV_E
        else:
            raise ValueError("lambert_w_principal defined for x >= -1/e")
    tol = 1e-13 * max(1.0, abs(x))
    if x == 0.0:
        return 0.0
    if x == -_INV_E:
        return -1.0
    if x < -0.32:
        # series around the branch point, Corless et al. style
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 * p ** 3 / 72.0
    elif x < math.e:
        w = x / (1.0 + x) if x > -0.3 else x
    else:
        lx = math.log(x)
        w = lx - math.log(lx)
    return _halley(x, w, tol)


def lambert_w_lower(x: float) -> float:
    """Lower branch W-1: the solution w <= -1 of w * exp(w) = x, x in [-1/e, 0)."""
    if not -_INV_E <= x < 0.0:
        if -_INV_E - 1e-15 <= x < -_INV_E:
            x = -_INV_E
        else:
            raise ValueError("lambert_w_lower defined for -1/e <= x < 0")
    tol = 1e-13 * max(1.0, abs(x))
    if x == -_INV_E:
        return -1.0
    if x > -0.32:
        # w ~ log(-x) - log(-log(-x)) as x -> 0-
        l1 = math.log(-x)
        w = l1 - math.log(-l1)
    else:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 - p - p * p / 3.0 - 11.0 * p ** 3 / 72.0
    return _halley(x, w, tol)


# ---------------------------------------------------------------------------
# deterministic-service tail exponent
# ---------------------------------------------------------------------------

def md1_tail_exponent_bisection(lam: float, sigma: float) -> float:
    """Positive root q of q = lam * (exp(q * sigma) - 1) by plain bisection.

    This is the magnitude of the nonzero (negative) solution of
    s = lam * (1 - exp(-s * sigma)); kept as an independent cross-check for
    the closed form.
    """
    if lam <= 0 or sigma <= 0 or lam * sigma >= 1.0:
        raise ValueError("tail exponent needs lam, sigma > 0 and lam * sigma < 1")
    phi = lambda q: lam * math.expm1(q * sigma) - q
    lo = 1e-300
    hi = max(1.0 / sigma, lam)
    while phi(hi) <= 0.0:
        hi *= 2.0
        if hi * sigma > 700.0:
            raise ArithmeticError("bisection bracket overflow")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def md1_tail_exponent(lam: float, sigma: float) -> float:
    """Decay rate q of the stationary M/D/1 workload tail P(W > x) ~ C e^{-qx}.

    q = |lam + W(-lam*sigma*exp(-lam*sigma)) / sigma| where W must be the
    *lower* real branch: the principal branch reproduces the trivial root 0
    of s = lam * (1 - exp(-s*sigma)) because W0(y e^y) = y for y in (-1, 0).
    The result is cross-validated against direct root bisection.
    """
    if lam <= 0 or sigma <= 0:
        raise ValueError("tail exponent needs lam > 0 and sigma > 0")
    if lam * sigma >= 1.0:
        raise ValueError(f"unstable queue: lam * sigma = {lam * sigma:.4g} >= 1")
    arg = -lam * sigma * math.exp(-lam * sigma)
    q = abs(lam + lambert_w_lower(arg) / sigma)
    q_check = md1_tail_exponent_bisection(lam, sigma)
    if abs(q - q_check) > 1e-8:
        raise ArithmeticError(
            f"tail exponent mismatch: closed form {q!r} vs bisection {q_check!r}")
    return q


# ---------------------------------------------------------------------------
# delay bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    """One evaluated upper bound on the conditional mean delay E[D | k].

    ``value`` is in time units (bits / mu) and never drops below the trivial
    per-block floor chunk/mu; ``raw`` keeps the unfloored formula value and
    any companion forms.
    """

    k: int
    value: float
    regime: str  # "log" | "harmonic" | "chunk_scaled"
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def log_bound(k: int, rho: float, c: float, mu: float) -> BoundReport:
    """Logarithmic-regime bound: chunk time plus log(k) over the tail exponent.

    Valid for file-size families keeping every chunk count at or below the
    server count: the delay is at most the chunk service time plus the max of
    k independent single-queue workloads, whose tail decays at rate
    q(rho/c, c/mu).
    """
    if k < 1:
        raise ValueError("bound defined for k >= 1")
    if not 0 <= rho < mu:
        raise ValueError("bound needs 0 <= rho < mu")
    q = md1_tail_exponent(rho / c, c / mu)
    value = c / mu + math.log(k) / q
    return BoundReport(k, value, "log",
                       params={"rho": rho, "c": c, "mu": mu, "q": q},
                       raw={"formula": value})


def harmonic_bound(k: int, rho: float, mu: float, mean_chunk: float) -> BoundReport:
    """Exponential-chunk-size bound: mean chunk time plus a harmonic sum.

    With exponentially distributed chunk sizes the companion queue is M/M/1,
    whose workload tail decays at rate (mu - rho) / mean_chunk, so the max of
    k independent copies has mean H(k) * mean_chunk / (mu - rho).  Unit audit:
    the dimensionless prefactor mu/(mu - rho) found in back-of-envelope forms
    must be scaled by the per-block time mean_chunk/mu to carry time units;
    both raw forms are reported, the inequality is asserted on the audited
    one.
    """
    if k < 1:
        raise ValueError("bound defined for k >= 1")
    if not 0 <= rho < mu:
        raise ValueError("bound needs 0 <= rho < mu")
    if mean_chunk <= 0:
        raise ValueError("mean chunk size must be positive")
    hk = harmonic_number(k)
    value = mean_chunk / mu + mean_chunk / (mu - rho) * hk
    return BoundReport(
        k, value, "harmonic",
        params={"rho": rho, "mu": mu, "mean_chunk": mean_chunk},
        raw={
            "harmonic_sum": hk,
            "prefactor_time": mean_chunk / (mu - rho),
            "prefactor_dimensionless": mu / (mu - rho),
            "dimensionless_form": mean_chunk / mu + mu / (mu - rho) * hk,
        })


def chunk_scaling_bound(k: int, a: int, lambda_p: float, c: float) -> BoundReport:
    """Bound after re-chunking: blocks of size c/a, a*k of them per file.

    Returns both the exact-root version (tail exponent of the rescaled
    single queue with arrival rate lambda_p * a and service c/a) and the
    large-a approximation 2a(1 - lambda_p c) / (c^2 lambda_p) for that root;
    the report carries their relative gap.  Time units assume unit service
    rate; the approximation additionally assumes the file-size parameter
    times a stays below one.
    """
    if k < 1 or a < 1 or int(a) != a:
        raise ValueError("bound defined for k >= 1 and integer a >= 1")
    if lambda_p <= 0 or c <= 0 or lambda_p * c >= 1.0:
        raise ValueError("bound needs lambda_p, c > 0 and lambda_p * c < 1")
    q_exact = md1_tail_exponent(lambda_p * a, c / a)
    q_approx = 2.0 * a * (1.0 - lambda_p * c) / (c * c * lambda_p)
    log_term = math.log(a * k)
    exact = log_term / q_exact
    approx = log_term / q_approx
    gap = abs(exact - approx) / exact if exact > 0 else 0.0
    floor = c / a  # per-block service time at unit rate
    return BoundReport(
        k, max(exact, floor), "chunk_scaled",
        params={"a": a, "lambda_p": lambda_p, "c": c,
                "q_exact": q_exact, "q_approx": q_approx},
        raw={"exact": exact, "approx": approx, "relative_gap": gap})


def expected_max_exponential(k: int, rate: float) -> float:
    """Mean of the max of k i.i.d. exponentials: H(k) / rate (exact)."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    return harmonic_number(k) / rate


# ---------------------------------------------------------------------------
# companion-queue simulation
# ---------------------------------------------------------------------------

def simulate_cavity_queue(pmf: CavityPmf, mu: float, n: int, seed,
                          chunk_dist: ChunkModel | None = None,
                          warmup: int | None = None) -> np.ndarray:
    """Workload (bits) seen by each arrival of the companion M/GI/1 queue.

    Runs the scalar recursion w[n+1] = (w[n] + x[n] - mu*tau[n])+ from empty,
    with x ~ pmf atoms; when ``chunk_dist`` is given, each arrival's block
    count is multiplied by its own chunk-size draw instead of the fixed
    chunk.  Returns the post-warmup samples (default warmup: n // 10).
    """
    if mu <= 0:
        raise ValueError("service rate must be positive")
    if pmf.utilization(mu) >= 1.0 and n > 10_000:
        # still simulate, but an unstable queue never reaches steady state
        pass
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts = rng.choice(pmf.levels, size=n, p=pmf.probs / pmf.probs.sum())
    if chunk_dist is None:
        x = counts * pmf.chunk
    elif chunk_dist.random:
        x = counts * rng.exponential(chunk_dist.mean, size=n)
    else:
        x = counts * chunk_dist.size
    taus = rng.exponential(1.0 / pmf.arrival_rate, size=n)
    drift = x - mu * taus
    s = np.concatenate(([0.0], np.cumsum(drift)))
    w = s - np.minimum.accumulate(s)  # w[i] = workload seen by arrival i
    cut = n // 10 if warmup is None else warmup
    return w[cut:n]


def routed_max_oracle(workload_pool: np.ndarray, k: int, m: int, chunk: float,
                      mu: float, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Samples of max_i(W~_i + chunk * s_i) / mu over independent workloads.

    W~ draws are bootstrapped from ``workload_pool`` (bits); s is a typical
    evenly-split routing vector for k blocks over m servers: floor(k/m)
    everywhere plus one extra on k - m*floor(k/m) servers.  This is the
    independent-version upper bound for the conditional delay at chunk
    count k.
    """
    if k < 1 or m < 1:
        raise ValueError("need k >= 1 and m >= 1")
    pool = np.asarray(workload_pool, dtype=float)
    base, kp = divmod(k, m)
    if base == 0:
        draws = rng.choice(pool, size=(n_samples, kp))
        return (draws.max(axis=1) + chunk) / mu
    hi = rng.choice(pool, size=(n_samples, kp)).max(axis=1) + chunk * (base + 1) if kp else None
    lo = rng.choice(pool, size=(n_samples, m - kp)).max(axis=1) + chunk * base
    out = lo if hi is None else np.maximum(hi, lo)
    return out / mu
