"""ghostpeak command line: simulate, campaign, dissect, calibrate.

Exit codes: 0 success, 1 configuration or usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Sequence

from . import campaign as cp
from .config import parse_config
from .dissect import dissect
from .phy import ConfigurationError
from .ranging import run_exchange
from .trace import TraceError, exchange_records, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which is reserved for I/O
        raise _UsageError(message)


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit value")
    return v


def _positive(s: str) -> int:
    v = int(s, 0)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ghostpeak", description="UWB HRP ranging and overshadowing attack simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", metavar="PATH", help="scenario file (INI)")
        sp.add_argument("--seed", type=_u64, metavar="U64", help="master seed (overrides config)")

    s = sub.add_parser("simulate", help="run one exchange and print every packet")
    common(s)
    s.add_argument("--trace", metavar="PATH", help="write a GPKTRACE file")

    c = sub.add_parser("campaign", help="run N exchanges and write a CSV")
    common(c)
    c.add_argument("--trials", type=_positive, metavar="N")
    c.add_argument("--out", metavar="PATH", help="CSV path (default: stdout summary only)")
    c.add_argument("--trace", metavar="PATH", help="write a GPKTRACE file of every exchange")
    c.add_argument("--workers", type=_positive, metavar="N", help="worker processes (overrides config)")

    d = sub.add_parser("dissect", help="render a GPKTRACE file as text")
    d.add_argument("path", metavar="TRACE")
    d.add_argument("--out", metavar="PATH", help="write to a file instead of stdout")

    k = sub.add_parser("calibrate", help="derive the default noise level from the benign envelope")
    common(k)
    k.add_argument("--trials", type=_positive, metavar="N", help="benign trials per point (default 300)")
    k.add_argument("--out", metavar="PATH", help="also write the table here")
    return p


def _scenario(args: argparse.Namespace) -> cp.ScenarioConfig:
    cfg = parse_config(args.config) if args.config else cp.ScenarioConfig()
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if getattr(args, "trials", None) is not None and args.command == "campaign":
        cfg = replace(cfg, n_trials=args.trials)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


def _simulate(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    ini, resp = cfg.devices()
    attack = cfg.attack if cfg.attack.active else None
    ex = run_exchange(ini, resp, cfg.channel(), attack=attack, seed=cfg.master_seed, phy=cfg.phy, mode=cfg.mode)
    print(f"mode={ex.mode} status={ex.status} true={ex.true_distance:.4f} m")
    for p in ex.packets:
        toa = p.toa
        extra = "" if toa is None else (
            f" peak={toa.peak_index} accepted={toa.accepted_index} advance={p.advance}"
            f" leading_edge={'yes' if toa.leading_edge_used else 'no'}"
        )
        print(f"  pkt{p.index} {p.sender}->{p.receiver} tx={p.tx_time:.1f} ps rx={p.rx_status}{extra}")
    for a in ex.attacks:
        print(f"  attack {a.target} tx={a.tx_time:.1f} ps offset={a.arrival_offset / 1e3:+.3f} ns")
    if ex.ok:
        print(f"distance_full={ex.distance_full:.4f} m distance_simple={ex.distance_simple:.4f} m "
              f"reduction={ex.true_distance - ex.distance_full:.4f} m")
    if args.trace:
        write_trace(exchange_records(ex, 0), args.trace)
    return EXIT_OK


def _campaign(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    res = cp.run_campaign(cfg, trace_path=args.trace)
    if args.out:
        cp.write_csv(res, args.out)
    counts = " ".join(str(c) for c in res.reduction_histogram.counts) or "-"
    print(f"trials={len(res.measurements)} completed={res.completed} baseline={res.baseline_max_neg_dev:.4f} m")
    print(f"success_rate={res.success_rate:.4%} jamming_rate={res.jamming_rate:.4%} "
          f"failure_rate={res.failure_rate:.4%} max_reduction={res.max_reduction:.4f} m")
    print(f"histogram (bin {res.reduction_histogram.bin_width} m): {counts}")
    return EXIT_OK


def _dissect(args: argparse.Namespace) -> int:
    text = dissect(args.path)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _calibrate(args: argparse.Namespace) -> int:
    cfg = _scenario(args)
    sigma, points = cp.calibrate_noise(cfg, trials=args.trials or 300)
    lines = ["noise_sigma distance_m completion p99_abs_error_m"]
    lines += [f"{p.noise_sigma:.3f} {p.distance:.1f} {p.completion:.4f} {p.p99_abs_error:.4f}" for p in points]
    lines.append(f"recommended noise_sigma = {sigma:.3f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


_COMMANDS = {"simulate": _simulate, "campaign": _campaign, "dissect": _dissect, "calibrate": _calibrate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ghostpeak: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"ghostpeak: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TraceError) as exc:
        print(f"ghostpeak: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
