"""Benchmark command line.

    sctplab run --scenario bulk_12k --protocol sctp --csv out.csv
    sctplab sweep --drop-list 0,0.005,0.025 --seed 7 --csv sweep.csv
    sctplab report sweep.csv --out-dir figs/

Exit codes: 0 success, 1 invalid configuration or usage, 2 runtime error.
"""

import argparse
import sys

from ..netsim import SimError
from .config import build_config, ConfigError
from .metrics import emit_csv, latency_stats
from .report import render_file, ReportError
from .scenarios import run_scenario, scenario_rows
from . import report as report_mod


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract wants 1 for bad input
    def error(self, message):
        raise ConfigError(message)


def _drop_list(text):
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated floats")


def _modes(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _add_run_flags(sub):
    sub.add_argument("--scenario", default=None,
                     help="bulk_12k, small_128b, multistream, scaling, "
                          "loss_sweep, failover")
    sub.add_argument("--protocol", default=None, help="sctp or tcp")
    sub.add_argument("--sack-policy", dest="sack_policy", default=None,
                     metavar="POLICY",
                     help="per-packet | lk-double | per-k:<k> | delayed:<ms>")
    sub.add_argument("--gbn", action="store_true", default=None,
                     help="go-back-N retransmission instead of selective")
    sub.add_argument("--no-delay", dest="no_delay", action="store_true",
                     default=None, help="send small messages immediately")
    sub.add_argument("--copy-mode", dest="copy_mode", default=None,
                     help="legacy or optimized")
    sub.add_argument("--drop", dest="drop_prob", type=float, default=None,
                     metavar="P", help="uniform loss probability")
    sub.add_argument("--drop-list", dest="drop_list", type=_drop_list,
                     default=None, metavar="P,P,...",
                     help="sweep points (loss_sweep)")
    sub.add_argument("--bandwidth", dest="bandwidth_bps", type=int,
                     default=None, metavar="BPS")
    sub.add_argument("--rtt-us", dest="rtt_us", type=float, default=None)
    sub.add_argument("--rwnd", type=int, default=None,
                     help="receive buffer in bytes")
    sub.add_argument("--mbs", type=int, default=None,
                     help="maximum burst size in packets")
    sub.add_argument("--streams", type=int, default=None)
    sub.add_argument("--assocs", type=int, default=None,
                     help="associations (sctp) or connections (tcp)")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--bytes", dest="byte_target", type=int, default=None,
                     help="total payload bytes to move")
    sub.add_argument("--modes", type=_modes, default=None,
                     metavar="M,M,...",
                     help="stacks a sweep compares: tcp, sctp_sack, sctp_gbn")
    sub.add_argument("--csv", default=None, metavar="PATH",
                     help="also write the rows as CSV")
    sub.add_argument("--config", default=None, metavar="PATH",
                     help="key=value file applied under the flags")


def make_parser():
    parser = _Parser(prog="sctplab",
                     description="transport benchmark scenarios")
    subs = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(subs.add_parser("run", help="run one scenario"))
    _add_run_flags(subs.add_parser("sweep", help="run the loss sweep"))
    rep = subs.add_parser("report", help="tables and figures from CSV")
    rep.add_argument("paths", nargs="+", metavar="CSV")
    rep.add_argument("--out-dir", dest="out_dir", default=None,
                     help="directory for figures (default: beside the CSV)")
    return parser


_CONFIG_KEYS = (
    "scenario", "protocol", "sack_policy", "gbn", "no_delay", "copy_mode",
    "drop_prob", "drop_list", "bandwidth_bps", "rtt_us", "rwnd", "mbs",
    "streams", "assocs", "seed", "byte_target", "modes",
)


def _paced_summary(result, out):
    flows = sorted(result.paced_clean)
    out.write("paced latency, loss injected on association 1 stream 0:\n")
    for flow in flows:
        clean = latency_stats(result.paced_clean[flow])
        lossy = latency_stats(result.paced_lossy[flow])
        same = result.paced_clean[flow] == result.paced_lossy[flow]
        tag = "identical to lossless" if same else "changed"
        out.write("  assoc %d stream %d: clean mean %.1f us, "
                  "lossy mean %.1f us (%s)\n"
                  % (flow[0] + 1, flow[1], clean.mean_us, lossy.mean_us, tag))


def _cmd_run(args, out):
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS}
    if args.command == "sweep":
        overrides.setdefault("scenario", None)
        if overrides["scenario"] not in (None, "loss_sweep"):
            raise ConfigError("sweep always runs the loss_sweep scenario")
        overrides["scenario"] = "loss_sweep"
    cfg = build_config(args.config, overrides)
    result = run_scenario(cfg)
    rows, columns = scenario_rows(cfg, result)
    out.write(report_mod.table_text(columns, rows) + "\n")
    if cfg.scenario == "multistream":
        _paced_summary(result, out)
    if args.csv:
        n = emit_csv(rows, columns, args.csv)
        out.write("wrote %d bytes to %s\n" % (n, args.csv))
    return 0


def _cmd_report(args, out):
    for path in args.paths:
        fig = render_file(path, out_dir=args.out_dir, out=out)
        if fig:
            out.write("figure: %s\n" % fig)
    return 0


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "report":
            return _cmd_report(args, sys.stdout)
        return _cmd_run(args, sys.stdout)
    except (ConfigError, ReportError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (SimError, OSError) as exc:
        print("runtime error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
