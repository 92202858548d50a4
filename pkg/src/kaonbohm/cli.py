"""Command-line driver.

    kaonbohm simulate --config exp.ini --out events.jsonl
    kaonbohm reconstruct --events events.jsonl --mode bohmian --out results.csv
    kaonbohm analyze --results classical.csv bohmian.csv --out comparison.csv
    kaonbohm spread --config exp.ini
    kaonbohm run --config exp.ini --outdir out/
    kaonbohm validate
    kaonbohm init-config --out exp.ini

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from kaonbohm import analysis, report, validation
from kaonbohm.config import RECONSTRUCTION_MODES, load_config, write_default_config
from kaonbohm.errors import ConfigError, KaonBohmError
from kaonbohm.packet import GaussianPacket
from kaonbohm.simulator import generate_events, read_events, write_events

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        out["run.seed"] = str(args.seed)
    return out


def _config(args):
    return load_config(getattr(args, "config", None), _overrides(args))


def cmd_simulate(args) -> int:
    cfg = _config(args)
    n = args.n_events if args.n_events is not None else cfg.n_events
    events, summary = generate_events(cfg.setup(), n, cfg.seed)
    write_events(events, args.out)
    lost = ", ".join(f"{k}={v}" for k, v in sorted(summary.lost.items())) or "none"
    print(f"generated {summary.generated}: detected {summary.detected}, other modes {summary.other_mode}, lost {summary.n_lost} ({lost})", file=sys.stderr)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _config(args)
    events = read_events(args.events)
    modes = RECONSTRUCTION_MODES if args.mode == "both" else (args.mode,)
    rows = analysis.reconstruct_events(events, cfg, modes)
    analysis.write_results(rows, args.out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    rows = []
    for path in args.results:
        rows.extend(analysis.read_results(path))
    modes = list(dict.fromkeys(r.mode for r in rows)) or list(RECONSTRUCTION_MODES)
    per_event, summary = analysis.compare_modes(rows, modes)
    analysis.write_comparison(per_event, summary, args.out, modes)
    for s in summary:
        print(
            f"{s['metric']}: {modes[0]} {s[modes[0]]:.4f}, {modes[1]} {s[modes[1]]:.4f}, "
            f"difference {s['difference']:+.4f} [{s['ci95_low']:+.4f}, {s['ci95_high']:+.4f}]"
        )
    return EXIT_OK


def cmd_spread(args) -> int:
    cfg = _config(args)
    beam = cfg.beam()
    t_max = cfg["spread"]["t_max_s"] or (beam.fiducial_length / beam.speed if beam.speed > 0 else 0.0)
    packet = GaussianPacket(0.0, beam.speed, cfg.sigma0, cfg.kaon_mass, 0.0, cfg.hbar)
    rows = report.spread_sweep(packet, t_max, cfg["spread"]["n_points"])
    header = ["t_s", "sigma_m", "tau_dimensionless"]
    if args.out:
        report.write_csv(args.out, header, rows)
    else:
        print(",".join(header))
        for r in rows:
            print(",".join(repr(v) for v in r))
    if args.dat:
        report.write_gnuplot(args.dat, dict(zip(header, zip(*rows))) if rows else {h: [] for h in header})
    if args.report:
        sigma0s = [1e-15, 1e-14, 1e-13, 1e-12]
        speeds = [1e6, 1e7, 1e8, beam.speed]
        table = report.flight_spread_table(sigma0s, speeds, beam.fiducial_length, cfg.kaon_mass, cfg.hbar)
        keys = list(table[0])
        report.write_csv(args.report, keys, [[r[k] for k in keys] for r in table])
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    rep = analysis.run_pipeline(cfg, args.outdir)
    sys.stdout.write(rep.text(cfg))
    return EXIT_OK


def cmd_validate(args) -> int:
    results = validation.run_all()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def cmd_init_config(args) -> int:
    write_default_config(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kaonbohm", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, required=False):
        p.add_argument("--config", required=required, help="INI experiment config (defaults used when omitted)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int, help="master seed (overrides config and KAONBOHM_SEED)")

    p = sub.add_parser("simulate", help="generate decay events")
    with_config(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-events", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="retrodict vertices and decay times")
    with_config(p)
    p.add_argument("--events", required=True)
    p.add_argument("--mode", choices=[*RECONSTRUCTION_MODES, "both"], default="both")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("analyze", help="compare classical and bohmian results")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("spread", help="tabulate kaon packet width over the flight")
    with_config(p)
    p.add_argument("--out", help="CSV file (stdout when omitted)")
    p.add_argument("--dat", help="also write a gnuplot data file")
    p.add_argument("--report", help="write a width-after-flight table over sigma0 and speed")
    p.set_defaults(func=cmd_spread)

    p = sub.add_parser("run", help="full simulate/reconstruct/classify pipeline")
    with_config(p)
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="run the oracle suites")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("init-config", help="write the default config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KaonBohmError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
