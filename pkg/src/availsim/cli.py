"""``availsim`` command line: discover, simulate, oracle, chaos, report, pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from availsim import __version__
from availsim.chaos import ChaosConfig, ProbeOutcomes
from availsim.core import load_targets
from availsim.errors import BudgetExceededError, ValidationError
from availsim.graph import load_graph
from availsim.oracle import DEFAULT_BUDGET
from availsim.pipeline import (
    StageError,
    copy_demo,
    read_records,
    read_service_file,
    read_weights,
    run_pipeline,
    stage_chaos,
    stage_discover,
    stage_oracle,
    stage_report,
    stage_simulate,
)
from availsim.simulation import DEFAULT_FRACTIONS, SimulationConfig, default_workers
from availsim.traces import IngestConfig

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE, EXIT_IO = 0, 1, 2, 3


def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from exc


def _graph(path: str):
    return load_graph(Path(path).read_bytes())


def _targets(path: str):
    return load_targets(Path(path).read_text(encoding="utf-8"))


def cmd_discover(args) -> None:
    ingest = IngestConfig(
        infra_services=read_service_file(args.infra),
        min_span_duration_micros=args.min_duration,
        broker_systems=frozenset(args.broker or ["kafka"]),
    )
    deployed = read_service_file(args.deployed) if args.deployed else None
    graph, warnings = stage_discover(args.traces, Path(args.out), ingest, deployed)
    print(f"{len(graph.services)} services, {len(graph.edges)} edges "
          f"({len(graph.async_edges)} async) -> {args.out}")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)


def cmd_simulate(args) -> None:
    config = SimulationConfig(
        failure_fractions=args.fractions,
        trials=args.trials,
        master_seed=args.seed,
        disallowlist=read_service_file(args.disallowlist),
        common_random_numbers=not args.no_crn,
        rounding=args.rounding,
    )
    records = stage_simulate(_graph(args.graph), _targets(args.targets), config,
                             Path(args.out), workers=args.workers)
    print(f"{len(records)} estimate records -> {args.out}")


def cmd_oracle(args) -> None:
    records = stage_oracle(_graph(args.graph), _targets(args.targets), args.fractions,
                           read_service_file(args.disallowlist), Path(args.out),
                           args.rounding, args.budget)
    print(f"{len(records)} exact records -> {args.out}")


def cmd_chaos(args) -> None:
    config = ChaosConfig(
        failure_fractions=args.fractions,
        chunks=args.chunks,
        windows_per_chunk=args.windows,
        probes_per_window=args.probes,
        probe_weights=read_weights(args.weights),
        retry_rescue_prob=args.rescue,
        gray_failure_prob=args.gray,
        master_seed=args.seed,
        rounding=args.rounding,
    )
    outcomes = stage_chaos(_graph(args.graph), _targets(args.targets), config,
                           read_service_file(args.disallowlist), Path(args.out))
    print(f"{len(outcomes)} probe outcomes -> {args.out}")


def cmd_report(args) -> None:
    exact = read_records(args.exact) if args.exact else None
    summary = stage_report(read_records(args.predictions), ProbeOutcomes.read_csv(args.live),
                           Path(args.out_dir), exact, read_weights(args.weights))
    for row in summary["bias"]:
        print(f"p_fail={row['p_fail']:g} live={row['live_aggregate']:.3f} "
              f"all={row['model_all']:.3f} async={row['model_async']:.3f} "
              f"bias_all={row['bias_all']:+.3f} bias_async={row['bias_async']:+.3f}")


def cmd_pipeline(args) -> int:
    ws = Path(args.workspace)
    try:
        result = run_pipeline(ws, args.config, workers=args.workers)
    except StageError as exc:
        report = exc.report()
        print(json.dumps(report), file=sys.stderr)
        if ws.is_dir():
            (ws / "pipeline_error.json").write_text(json.dumps(report, indent=2) + "\n")
        return exc.exit_code
    (ws / "pipeline_error.json").unlink(missing_ok=True)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps({"status": "ok", "artifacts": result.artifacts,
                      "skipped": result.skipped}, indent=2))
    return EXIT_OK


def cmd_demo(args) -> None:
    dest = copy_demo(args.dest)
    print(f"demo workspace -> {dest}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="availsim", description=__doc__)
    p.add_argument("--version", action="version", version=f"availsim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common_model(sp, fractions=True):
        sp.add_argument("--graph", required=True)
        sp.add_argument("--targets", required=True)
        if fractions:
            sp.add_argument("--fractions", type=_fractions, default=DEFAULT_FRACTIONS)
        sp.add_argument("--disallowlist", help="newline-separated services never killed")
        sp.add_argument("--rounding", choices=["half_up", "half_even"], default="half_up",
                        help="rounding of p_fail * |eligible| to a kill count")

    sp = sub.add_parser("discover", help="build graph.json from Jaeger trace exports")
    sp.add_argument("--traces", nargs="+", required=True, help="trace files or directories")
    sp.add_argument("--infra", help="file listing infrastructure services to drop")
    sp.add_argument("--min-duration", type=int, default=0,
                    help="ignore internal spans shorter than this many microseconds")
    sp.add_argument("--broker", action="append", help="messaging system treated as async broker")
    sp.add_argument("--deployed", help="file listing deployed services for sanity checks")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_discover)

    sp = sub.add_parser("simulate", help="Monte Carlo availability per endpoint and semantics")
    common_model(sp)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--no-crn", action="store_true",
                    help="sample async kill sets independently of all-blocking ones")
    sp.add_argument("--workers", type=int, default=default_workers())
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle", help="exact availability by full enumeration")
    common_model(sp)
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("chaos", help="emulated kill/stabilise/probe experiment")
    common_model(sp)
    sp.add_argument("--chunks", type=int, default=50)
    sp.add_argument("--windows", type=int, default=100)
    sp.add_argument("--probes", type=int, default=100)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--rescue", type=float, default=0.0, help="retry rescue probability")
    sp.add_argument("--gray", type=float, default=0.0, help="gray failure probability")
    sp.add_argument("--weights", help="JSON object route -> probe weight")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_chaos)

    sp = sub.add_parser("report", help="bias, error and delta tables plus SVG charts")
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--live", required=True)
    sp.add_argument("--exact")
    sp.add_argument("--weights", help="JSON object route -> weight for model aggregates")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("pipeline", help="run all stages on a workspace directory")
    sp.add_argument("--workspace", required=True)
    sp.add_argument("--config", help="pipeline config (default: <workspace>/pipeline.json)")
    sp.add_argument("--workers", type=int, default=default_workers())
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("demo", help="copy the bundled demo workspace")
    sp.add_argument("dest")
    sp.set_defaults(func=cmd_demo)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except (ValidationError, BudgetExceededError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
