"""Command-line entry points: experiment runner and the two daemons."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import harness, service
from .params import DpBudget, derive_params, params_to_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nebula")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a population and decode")
    run.add_argument("--dataset", required=True,
                     help="path to a corpus/.csv file or synthetic:<spec>")
    run.add_argument("--columns", help="comma-separated CSV columns")
    run.add_argument("--geo-columns",
                     help="country,lat,lon columns for geographic coarse-graining")
    run.add_argument("--eps", type=float, required=True)
    run.add_argument("--delta", type=float, default=1e-8)
    run.add_argument("--alpha", type=float, default=1 / 6)
    run.add_argument("--eps-unrevealed", type=float,
                     help="defaults to --eps")
    run.add_argument("--delta-unrevealed", type=float,
                     help="defaults to --delta")
    run.add_argument("--tau-override", type=int)
    run.add_argument("--shift-override", type=int)
    run.add_argument("--bin-bits", type=int)
    run.add_argument("--multidim", action="store_true")
    run.add_argument("--transport", choices=["inproc", "daemons"], default="inproc")
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--baselines", action="store_true",
                     help="also run the central/local baselines")
    run.add_argument("--bench", action="store_true",
                     help="also emit bench.csv (timings and byte counts)")

    rnd = sub.add_parser("randomness-server", help="run the OPRF daemon")
    rnd.add_argument("--listen")
    rnd.add_argument("--key-seed-file")

    agg = sub.add_parser("aggregation-server", help="run the ingestion daemon")
    agg.add_argument("--listen")
    agg.add_argument("--log")
    agg.add_argument("--params")
    agg.add_argument("--report")
    agg.add_argument("--seal-and-decode", action="store_true",
                     help="seal the existing log, decode it, write the report, exit")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = {}
    if args.tau_override is not None:
        overrides["threshold"] = args.tau_override
    if args.shift_override is not None:
        overrides["tsdlap_shift"] = args.shift_override
    budget = DpBudget(
        eps_revealed=args.eps,
        delta_revealed=args.delta,
        eps_unrevealed=args.eps_unrevealed if args.eps_unrevealed is not None else args.eps,
        delta_unrevealed=args.delta_unrevealed if args.delta_unrevealed is not None else args.delta,
        alpha=args.alpha,
    )
    params = derive_params(budget, overrides)

    columns = args.columns.split(",") if args.columns else None
    geo = tuple(args.geo_columns.split(",")) if args.geo_columns else None
    if geo is not None and len(geo) != 3:
        print("--geo-columns needs exactly country,lat,lon", file=sys.stderr)
        return 2
    dataset = harness.load_dataset(
        args.dataset, columns=columns, geo_columns=geo, bin_bits=args.bin_bits
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "params.cfg").write_text(params_to_config(params))

    mode = "multidim" if args.multidim else "single"
    transport = "daemons" if args.transport == "daemons" else "in_process"
    result = harness.run_nebula(dataset, params, args.seed, mode=mode, transport=transport)
    (out / "report.csv").write_text(result.report_csv)

    results = [result]
    if args.baselines:
        results.append(harness.run_baseline_central(dataset, args.eps, args.seed))
        try:
            results.append(harness.run_baseline_local(dataset, args.eps, args.seed))
        except harness.CapacityError as exc:
            print(f"local baseline skipped: {exc}", file=sys.stderr)
    harness.write_errors_csv(out / "errors.csv", results)

    plot_rows = []
    if result.per_prefix_errors:
        for depth, err in enumerate(result.per_prefix_errors, start=1):
            plot_rows.append(("prefix_error", float(depth), err))
    for res in results:
        for mechanism, err in sorted(res.errors.items()):
            plot_rows.append((mechanism, float(args.bin_bits or 0), err))
    harness.write_plot_data(out / "plotdata.csv", plot_rows)

    if args.bench:
        max_attrs = dataset.num_attributes if args.multidim else 1
        rows = harness.benchmark(params, attribute_counts=range(1, max_attrs + 1))
        harness.write_bench_csv(out / "bench.csv", rows)

    for res in results:
        for mechanism, err in sorted(res.errors.items()):
            print(f"{mechanism}: error={err:.6f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "randomness-server":
        listen = service.opt(args.listen, "NEBULA_LISTEN", "127.0.0.1:4560")
        seed_file = service.opt(args.key_seed_file, "NEBULA_KEY_SEED_FILE")
        if seed_file is None:
            print("--key-seed-file (or NEBULA_KEY_SEED_FILE) required", file=sys.stderr)
            return 2
        service.run_randomness_server(listen, seed_file)
        return 0
    if args.command == "aggregation-server":
        listen = service.opt(args.listen, "NEBULA_LISTEN", "127.0.0.1:4570")
        log_path = service.opt(args.log, "NEBULA_LOG_PATH")
        params_path = service.opt(args.params, "NEBULA_PARAMS")
        report = service.opt(args.report, "NEBULA_REPORT")
        if log_path is None or params_path is None:
            print("--log and --params (or env equivalents) required", file=sys.stderr)
            return 2
        service.run_aggregation_server(
            listen, log_path, params_path, report, args.seal_and_decode
        )
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
