"""Command-line interface.

Subcommands: ``run`` (full pipeline), ``sweep`` (one key over values),
``keyrate`` (analytic key rate, no simulation), ``calibrate`` (vacuum-only
run), ``selftest`` (invariant suite at small n).  Exit status: 0 success,
2 configuration error, 3 module rejection / failed selftest.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    MODULATION_NAMES,
    ConfigError,
    ExperimentConfig,
    load_config,
    config_field_names,
)
from .core import DomainError
from .experiment import keyrate_only, run_experiment, summarize_report, sweep
from .reporting import (
    ReportIOError,
    ScatterCsvWriter,
    TraceCsvWriter,
    canonical_json,
    emit_report,
    write_sweep_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REJECTED = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="64-bit RNG seed")
    p.add_argument("--packets", type=int, help="number of 400-slot packets")
    p.add_argument("--modulation", choices=sorted(MODULATION_NAMES), help="PSK format")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--workers", type=int, help="parallel worker count")
    p.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )


def _build_config(args) -> ExperimentConfig:
    overrides: dict = {}
    for assignment in args.assignments:
        if "=" not in assignment:
            raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
        key, raw = assignment.split("=", 1)
        from .config import _parse_value

        overrides[key.strip()] = _parse_value(key.strip(), raw)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.packets is not None:
        overrides["n_packets"] = args.packets
    if args.modulation is not None:
        overrides["psk_order"] = MODULATION_NAMES[args.modulation]
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if getattr(args, "emit_traces", False):
        overrides["emit_traces"] = True
    return load_config(args.config, overrides)


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    out = Path(cfg.output_dir)
    trace = scatter = None
    try:
        if cfg.emit_traces:
            trace = TraceCsvWriter(out / "trace.csv")
            scatter = ScatterCsvWriter(out / "scatter.csv")
        report = run_experiment(cfg, trace_writer=trace, scatter_writer=scatter)
    finally:
        for w in (trace, scatter):
            if w is not None:
                w.close()
    paths = emit_report(report, out, formats=args.format)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    _print_summary(report)
    print(f"wall clock: {report.wall_clock_s:.2f} s", file=sys.stderr)
    return EXIT_OK


def _print_summary(report) -> None:
    s = report.security
    if report.link is not None:
        print(
            f"M={report.link.modulation}  Q={report.link.q_factor:.3f}"
            f"  BER(analytic)={report.link.ber_analytic:.3g}"
            f"  BER(empirical)={report.link.ber_empirical:.3g}"
            f"  data_rate={report.link.data_rate_bps / 1e6:.3f} Mb/s"
        )
    print(
        f"T_hat={s.t_hat:.4f}  xi_hat={s.xi_hat:.4f}"
        f"  I_AB={s.i_ab:.4f}  chi_BE={s.chi_be:.4f}"
        f"  K={s.key_rate_per_pulse:.5f} bits/pulse"
        f" = {s.key_rate_bps / 1e3:.2f} kb/s"
    )


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    values = [v for v in args.values.split(",") if v != ""]
    field_type = None
    for name in config_field_names():
        if name == args.param:
            import dataclasses

            field_type = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}[name]
    if field_type is None:
        raise ConfigError(
            f"unknown sweep key {args.param!r}; valid keys: "
            f"{', '.join(sorted(config_field_names()))}"
        )
    cast = {"int": int, "float": float, "bool": lambda s: s.lower() in ("true", "1"),
            "str": str}[field_type if isinstance(field_type, str) else field_type.__name__]
    rows = sweep(cfg, args.param, [cast(v) for v in values])
    out = Path(cfg.output_dir)
    path = write_sweep_csv(rows, out / "sweep.csv")
    (out / "sweep.json").write_text(canonical_json(rows))
    print(f"wrote {path} and {out / 'sweep.json'} ({len(rows)} rows)")
    for row in rows:
        extras = (
            f"  Q={row['q_factor']:.3f}" if "q_factor" in row else ""
        )
        print(
            f"{args.param}={row['value']}: K={row['key_rate_bps'] / 1e3:.2f} kb/s"
            f"  xi_hat={row['xi_hat']:.4f}{extras}"
        )
    return EXIT_OK


def _cmd_keyrate(args) -> int:
    cfg = _build_config(args)
    estimate = keyrate_only(cfg.security())
    import dataclasses

    doc = dataclasses.asdict(estimate)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "keyrate.json").write_text(canonical_json(doc))
    print(
        f"I_AB={estimate.i_ab:.6f}  chi_BE={estimate.chi_be:.6f}"
        f"  K={estimate.key_rate_per_pulse:.6f} bits/pulse"
        f" = {estimate.key_rate_bps / 1e3:.2f} kb/s"
    )
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = _build_config(args)
    from .dsp import calibrate_shot_noise
    from .receiver import measure_vacuum_batch
    from .core import RngStream
    import numpy as np

    n = cfg.n_packets * cfg.shot_noise_slots
    gen = RngStream(cfg.seed, 0).generator()
    vx, vp = measure_vacuum_batch(n, cfg.receiver(), gen)
    result = calibrate_shot_noise(np.stack([vx, vp], axis=1), cfg.v_ele)
    import dataclasses

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "calibration.json").write_text(canonical_json(dataclasses.asdict(result)))
    print(
        f"n0 = {result.n0_mv2:.6g} mV^2 over {result.samples_used} vacuum pulses"
        f" (divisor {result.divisor_mv:.6g} mV per sqrt(N0))"
    )
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    cfg = _build_config(args)
    results = run_selftest(cfg.seed)
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_REJECTED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsqkd",
        description="Simultaneous classical + CV-QKD transmission simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full pipeline once")
    _add_common(p_run)
    p_run.add_argument("--emit-traces", action="store_true", dest="emit_traces",
                       help="write per-pulse trace.csv and scatter.csv")
    p_run.add_argument("--format", nargs="+", choices=["json", "csv"],
                       default=["json"], help="report formats")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one config key")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="config key to sweep")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values, e.g. 2,4,8")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_key = sub.add_parser("keyrate", help="analytic key rate only")
    _add_common(p_key)
    p_key.set_defaults(func=_cmd_keyrate)

    p_cal = sub.add_parser("calibrate", help="vacuum-only calibration run")
    _add_common(p_cal)
    p_cal.set_defaults(func=_cmd_calibrate)

    p_self = sub.add_parser("selftest", help="run the invariant suite at small n")
    _add_common(p_self)
    p_self.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ReportIOError) as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED


if __name__ == "__main__":
    sys.exit(main())
