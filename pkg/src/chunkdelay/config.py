"""TOML run-spec parsing and validation.

The schema is flat key/value (see README).  Validation is strict: unknown
keys are rejected by name, the arrival rate may be given as ``lambda`` or as
a per-server load ``rho`` but not both, and a ``seed`` is mandatory because
every published number must be reproducible.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .core import ChunkModel, FileSizeDistribution, SystemParams
from .engine import ExperimentConfig
from .policies import Policy


class ConfigError(ValueError):
    pass


_KNOWN_KEYS = {
    "m", "mu", "c", "chunk_dist", "lambda", "rho", "pi", "alpha",
    "policy", "policies", "iters", "warmup", "seed", "mode", "coupling",
    "out", "preset", "k_grid", "m_grid", "a_grid",
}

_DIST_RE = re.compile(r"^\s*(\w+)\s*\(\s*([^)]*)\s*\)\s*$")
_ALPHA_RE = re.compile(r"^\s*k\s*(?:\+\s*(\d+))?\s*$")


@dataclass(frozen=True)
class RunSpec:
    """A validated run request: experiment config plus output/sweep options."""

    experiment: ExperimentConfig
    out: str | None = None
    preset: str | None = None
    k_grid: tuple[int, ...] | None = None
    m_grid: tuple[int, ...] | None = None
    a_grid: tuple[int, ...] | None = None


def _parse_pi(text: str, m: int, alpha_offset: int) -> FileSizeDistribution:
    match = _DIST_RE.match(text)
    if not match:
        raise ConfigError(f"key 'pi': cannot parse distribution {text!r}")
    name, args = match.group(1).lower(), match.group(2)
    try:
        if name == "binomial":
            return FileSizeDistribution("binomial", p=float(args), m=m,
                                        alpha_offset=alpha_offset)
        if name == "geometric":
            return FileSizeDistribution("geometric", p=float(args),
                                        alpha_offset=alpha_offset)
        if name == "delta":
            return FileSizeDistribution("delta", k0=int(args),
                                        alpha_offset=alpha_offset)
    except ValueError as exc:
        raise ConfigError(f"key 'pi': {exc}") from exc
    raise ConfigError(f"key 'pi': unknown family {name!r}")


def _parse_chunk(raw: dict) -> ChunkModel:
    has_c = "c" in raw
    has_dist = "chunk_dist" in raw
    if has_c and has_dist:
        raise ConfigError("keys 'c' and 'chunk_dist' are mutually exclusive")
    if not has_c and not has_dist:
        raise ConfigError("one of 'c' or 'chunk_dist' is required")
    if has_c:
        model = ChunkModel("fixed", float(raw["c"]))
    else:
        match = _DIST_RE.match(str(raw["chunk_dist"]))
        if not match or match.group(1).lower() != "exponential":
            raise ConfigError(
                f"key 'chunk_dist': expected 'exponential(mean)', got {raw['chunk_dist']!r}")
        model = ChunkModel("exponential", float(match.group(2)))
    mode = raw.get("mode")
    if mode is not None:
        expected = "random_chunk" if model.random else "fixed_chunk"
        if mode not in ("fixed_chunk", "random_chunk"):
            raise ConfigError(f"key 'mode': must be fixed_chunk or random_chunk, got {mode!r}")
        if mode != expected:
            raise ConfigError(
                f"key 'mode': {mode!r} contradicts the configured chunk model ({expected})")
    return model


def _parse_policies(raw: dict) -> tuple[Policy, ...]:
    if "policy" in raw and "policies" in raw:
        raise ConfigError("keys 'policy' and 'policies' are mutually exclusive")
    names = raw.get("policies", [raw["policy"]] if "policy" in raw else ["BR"])
    if isinstance(names, str):
        raise ConfigError("key 'policies': expected a list of policy names")
    out = []
    for name in names:
        try:
            out.append(Policy(str(name).upper()))
        except ValueError:
            raise ConfigError(f"unknown policy {name!r} (expected BR, BS, or WF)") from None
    if len(set(out)) != len(out):
        raise ConfigError("key 'policies': duplicate policy names")
    return tuple(out)


def _int_grid(raw: dict, key: str) -> tuple[int, ...] | None:
    if key not in raw:
        return None
    vals = raw[key]
    if not isinstance(vals, list) or not vals or not all(
            isinstance(v, int) and v >= 0 for v in vals):
        raise ConfigError(f"key {key!r}: expected a non-empty list of non-negative integers")
    return tuple(vals)


def build_run_spec(raw: dict) -> RunSpec:
    """Validate a raw mapping (parsed TOML) into a RunSpec."""
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    for key in ("m", "mu", "pi"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    if "seed" not in raw:
        raise ConfigError("missing required key 'seed' (runs must be reproducible)")

    m = int(raw["m"])
    mu = float(raw["mu"])
    chunk = _parse_chunk(raw)

    alpha_match = _ALPHA_RE.match(str(raw.get("alpha", "k")))
    if not alpha_match:
        raise ConfigError(f"key 'alpha': expected 'k' or 'k+<int>', got {raw.get('alpha')!r}")
    alpha_offset = int(alpha_match.group(1) or 0)

    dist = _parse_pi(str(raw["pi"]), m, alpha_offset)

    if "lambda" in raw and "rho" in raw:
        raise ConfigError("keys 'lambda' and 'rho' are over-determined; give exactly one")
    if "lambda" in raw:
        lam = float(raw["lambda"])
    elif "rho" in raw:
        nu = chunk.mean * dist.mean_chunks()
        if nu <= 0:
            raise ConfigError("key 'rho': mean file size is zero, cannot derive lambda")
        lam = float(raw["rho"]) * m / nu
    else:
        raise ConfigError("one of 'lambda' or 'rho' is required")

    iters = int(raw.get("iters", 100_000))
    warmup = int(raw["warmup"]) if "warmup" in raw else None
    policies = _parse_policies(raw)

    try:
        params = SystemParams(m=m, mu=mu, lam=lam, chunk=chunk)
        experiment = ExperimentConfig(
            params=params, dist=dist, policies=policies, iterations=iters,
            warmup=warmup, seed=int(raw["seed"]),
            coupled=bool(raw.get("coupling", True)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return RunSpec(
        experiment=experiment,
        out=str(raw["out"]) if "out" in raw else None,
        preset=str(raw["preset"]) if "preset" in raw else None,
        k_grid=_int_grid(raw, "k_grid"),
        m_grid=_int_grid(raw, "m_grid"),
        a_grid=_int_grid(raw, "a_grid"),
    )


def parse_config(text: str) -> RunSpec:
    """Parse a TOML document into a validated RunSpec."""
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return build_run_spec(raw)


def load_config(path) -> RunSpec:
    with open(path, "rb") as fh:
        try:
            raw = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    return build_run_spec(raw)
