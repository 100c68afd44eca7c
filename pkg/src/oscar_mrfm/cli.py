"""Command-line entry point.

Subcommands::

    oscar-mrfm simulate --config run.cfg [--seed N] [--out DIR] [--ensemble K]
    oscar-mrfm compare  --config run.cfg [--seed N] [--out DIR]
    oscar-mrfm classify --config run.cfg [--seed N] [--out DIR]
    oscar-mrfm sweep    --config run.cfg [--seed N] [--out DIR] [--ensemble K]
    oscar-mrfm spectrum --csv trajectory.csv [--column zbar] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig
from .errors import ConfigError, NumericalError, OscarError, ParameterError
from .runner import (
    RECORD_COLUMNS,
    compare_gaussian_sme,
    kappa_sweep,
    read_trajectory_csv,
    run_classification,
    run_trajectory,
    _identity_line,
)
from .spectral import power_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(sub):
    sub.add_argument("--config", required=True, help="key = value config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--ensemble", type=int, default=None, help="override ensemble size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oscar-mrfm",
        description="Single-spin measurement simulator: cantilever frequency-shift readout",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "run trajectories in the config's mode (unitary/gaussian/sme)"),
        ("compare", "Gaussian closure vs density-matrix oracle on a shared noise stream"),
        ("classify", "closed-loop run plus frequency-shift spin classification"),
        ("sweep", "flip statistics and classification success over kappa_s values"),
    ):
        sub = subs.add_parser(name, help=helptext)
        _add_common(sub)
    spec = subs.add_parser("spectrum", help="power spectrum of a recorded CSV column")
    spec.add_argument("--csv", required=True, help="trajectory CSV file")
    spec.add_argument("--column", default="zbar", choices=RECORD_COLUMNS[1:])
    spec.add_argument("--out", default=None, help="output directory")
    return parser


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "ensemble", None) is not None:
        cfg = replace(cfg, ensemble=args.ensemble)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir) if cfg.out_dir else None
    lines = [_identity_line(cfg)]
    for k in range(cfg.ensemble):
        result = run_trajectory(cfg, trajectory_index=k, out_dir=out)
        lines.append(
            f"trajectory {k} ({cfg.mode}): flips = {result.flips}, "
            f"localized fraction = {result.localized_fraction:.3f}, "
            f"midpoint r_u = {result.r_u_midpoint:.4f}"
        )
        print(lines[-1])
    if out is not None:
        (out / "report.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = _load_config(args)
    result = compare_gaussian_sme(cfg, out_dir=cfg.out_dir)
    print(result.report_text(cfg), end="")
    return EXIT_OK


def _cmd_classify(args) -> int:
    cfg = _load_config(args)
    report = run_classification(cfg, out_dir=cfg.out_dir)
    print(report.report_text(cfg), end="")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    result = kappa_sweep(cfg, out_dir=cfg.out_dir)
    print(result.report_text(cfg), end="")
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    header, data = read_trajectory_csv(args.csv)
    if args.column not in header or "t" not in header:
        raise ConfigError(f"CSV {args.csv} lacks required columns 't'/'{args.column}'")
    t = data[:, header.index("t")]
    x = data[:, header.index(args.column)]
    n = x.shape[0]
    pow2 = 1 << (n.bit_length() - 1)
    if pow2 != n:
        x = x[:pow2]  # truncate to the largest power of two
    dt = float(t[1] - t[0])
    spec = power_spectrum(x, dt)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        spec.to_csv(out / "spectrum.csv")
        print(f"wrote {out / 'spectrum.csv'} ({spec.freqs.size} bins, df = {spec.df:.6g})")
    else:
        k = int(spec.power.argmax())
        print(f"N = {spec.n}, df = {spec.df:.6g}, peak at {spec.freqs[k]:.9f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "simulate": _cmd_simulate,
        "compare": _cmd_compare,
        "classify": _cmd_classify,
        "sweep": _cmd_sweep,
        "spectrum": _cmd_spectrum,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OscarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
