"""Command line entry point: ``tucker-irs {run,crlb,complexity}``."""

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import harness
from .analysis import CrlbInputs, complexity_estimate, crlb
from .channel_model import irs_aperture, rayleigh_distance
from .estimator import PAPER_MODE_RANKS, Hyperparams

log = logging.getLogger("tucker_irs")


def _system_for(args):
    return harness.PRESETS[args.preset or "paper"]


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config, preset=args.preset)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["output"] = args.out
    if args.trials is not None:
        over["trials"] = args.trials
    if args.workers is not None:
        over["workers"] = args.workers
    cfg = harness.validate_config(replace(cfg, **over))
    rows = harness.run_experiment(cfg, trace_path=args.traces)
    harness.emit_results(rows, cfg.output)
    failed = sum(r.iterations < 0 for r in rows)
    log.info("wrote %d rows to %s (%d failed)", len(rows), cfg.output, failed)
    return 0


def cmd_crlb(args) -> int:
    cfg = _system_for(args)
    inp = CrlbInputs(
        args.noise_power,
        args.subcarriers or cfg.subcarriers,
        args.nz or cfg.nz,
        args.ny or cfg.ny,
        args.nr or cfg.nr,
        args.pilots or cfg.pilots,
    )
    out = {
        "noise_power": inp.noise_power,
        "subcarriers": inp.subcarriers,
        "nz": inp.nz,
        "ny": inp.ny,
        "nr": inp.nr,
        "pilots": inp.pilots,
        "crlb": crlb(inp),
        "rayleigh_distance_m": rayleigh_distance(irs_aperture(cfg), cfg.wavelength),
    }
    _print(out, args.out)
    return 0


def cmd_complexity(args) -> int:
    cfg = _system_for(args)
    if args.pilots:
        cfg = replace(cfg, pilots=args.pilots)
    ranks = tuple(args.ranks) if args.ranks else (PAPER_MODE_RANKS if (args.preset or "paper") == "paper" else None)
    report = complexity_estimate(cfg, Hyperparams(), ranks, t_max=args.t_max)
    report["ranks"] = list(ranks) if ranks else None
    _print(report, args.out)
    return 0


def _print(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tucker-irs", description="Near-field IRS channel estimation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=sorted(harness.PRESETS))
    common.add_argument("--out", help="output file (default: config value or stdout)")

    r = sub.add_parser("run", parents=[common], help="run a sweep from a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--traces", help="also write convergence traces to this CSV")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("crlb", parents=[common], help="closed-form CRLB for an orthogonal schedule")
    c.add_argument("--noise-power", type=float, default=1.0)
    c.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    for name in ("subcarriers", "nz", "ny", "nr", "pilots"):
        c.add_argument(f"--{name}", type=int)
    c.set_defaults(func=cmd_crlb)

    x = sub.add_parser("complexity", parents=[common], help="multiply-count estimate")
    x.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    x.add_argument("--pilots", type=int)
    x.add_argument("--t-max", type=int, default=500)
    x.add_argument("--ranks", type=int, nargs=3, metavar=("GZ", "GR", "GY"))
    x.set_defaults(func=cmd_complexity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"tucker-irs: config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"tucker-irs: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
