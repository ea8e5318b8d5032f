"""Command-line front end: run one experiment, a preset sweep, or the audit.

    chunkdelay run --config cfg.toml [--out delays.csv] [--seed N] [--iters N]
    chunkdelay preset fig_filesize --seed N [--out sweep.csv] [--threads T]
    chunkdelay audit --seed N [--out report.txt] [--mislabel br_as_wf]

Identical configuration and seed always produce byte-identical CSV.
"""

from __future__ import annotations

import argparse
import sys

from . import presets
from .config import ConfigError, load_config
from .engine import conditional_means, run
from .policies import Policy

PRESETS = ("fig_filesize", "fig_codingrate", "policy_audit")


def _cmd_run(args) -> int:
    spec = load_config(args.config)
    exp = spec.experiment
    if args.seed is not None or args.iters is not None:
        import dataclasses
        exp = dataclasses.replace(
            exp,
            seed=args.seed if args.seed is not None else exp.seed,
            iterations=args.iters if args.iters is not None else exp.iterations)
    result = run(exp)
    if result.summary.warning:
        print(f"warning: {result.summary.warning}", file=sys.stderr)
    header = ["k", "policy", "count", "mean_delay", "ci"]
    rows = []
    for policy in exp.policies:
        for k, (mean, ci, count) in sorted(conditional_means(result.delays[policy]).items()):
            rows.append((k, str(policy), count, float(mean), float(ci)))
    rows.sort(key=lambda r: (r[0], r[1]))
    out = args.out or spec.out
    text = presets.write_csv(out, header, rows)
    if out is None:
        sys.stdout.write(text)
    for policy in exp.policies:
        stats = result.summary.stats[policy]
        print(f"{policy}: mean delay {stats.mean_delay:.6g} "
              f"+/- {stats.ci95:.3g} over {stats.count} records", file=sys.stderr)
    return 0


def _cmd_preset(args) -> int:
    overrides = _config_overrides(args)
    if args.name == "fig_filesize":
        _, _, text = presets.preset_fig_filesize(args.seed, overrides, out=args.out)
    elif args.name == "fig_codingrate":
        _, _, text = presets.preset_fig_codingrate(
            args.seed, overrides, threads=args.threads, out=args.out)
    elif args.name == "policy_audit":
        report = presets.preset_policy_audit(args.seed, overrides)
        text = report.to_text()
        if args.out:
            with open(args.out, "w", newline="") as fh:
                fh.write(text)
    else:
        raise SystemExit(f"unknown preset {args.name!r}; choose from {PRESETS}")
    if args.out is None:
        sys.stdout.write(text)
    return 0


def _config_overrides(args) -> dict:
    overrides = {}
    if args.config:
        if sys.version_info >= (3, 11):
            import tomllib as toml
        else:
            import tomli as toml
        with open(args.config, "rb") as fh:
            overrides.update(toml.load(fh))
        overrides.pop("seed", None)  # the preset seed comes from --seed
    if args.iters is not None:
        overrides["iters"] = args.iters
    return overrides


def _cmd_audit(args) -> int:
    overrides = {}
    if args.iters is not None:
        overrides["iters"] = args.iters
    mislabel = None
    if args.mislabel == "br_as_wf":
        mislabel = {Policy.WF: Policy.BR}
    report = presets.preset_policy_audit(args.seed, overrides, mislabel=mislabel)
    text = report.to_text()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chunkdelay",
                                     description="coded-chunk delivery delay simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment, emit per-k CSV")
    p_run.add_argument("--config", required=True, help="TOML config file")
    p_run.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--iters", type=int, default=None, help="override the iteration count")
    p_run.set_defaults(func=_cmd_run)

    p_pre = sub.add_parser("preset", help="run a named preset sweep")
    p_pre.add_argument("name", choices=PRESETS)
    p_pre.add_argument("--seed", type=int, required=True)
    p_pre.add_argument("--out", default=None)
    p_pre.add_argument("--iters", type=int, default=None)
    p_pre.add_argument("--threads", type=int, default=1)
    p_pre.add_argument("--config", default=None, help="TOML file with overrides")
    p_pre.set_defaults(func=_cmd_preset)

    p_aud = sub.add_parser("audit", help="run the policy check battery")
    p_aud.add_argument("--seed", type=int, required=True)
    p_aud.add_argument("--out", default=None)
    p_aud.add_argument("--iters", type=int, default=None)
    p_aud.add_argument("--mislabel", choices=["br_as_wf"], default=None,
                       help="deliberately mislabel a policy to demonstrate check power")
    p_aud.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
