"""Stage runners shared by the CLI subcommands and the end-to-end pipeline.

Every artifact gets a ``<name>.meta.json`` sidecar (tool version, seeds, config
hash) because ``graph.json``, ``predictions.json`` and ``live.csv`` have fixed
schemas with no room for one; ``summary.json`` embeds the block directly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from availsim import __version__
from availsim.chaos import ChaosConfig, ProbeOutcomes, live_availability, run_chaos
from availsim.core import EndpointSpec, load_targets
from availsim.errors import BudgetExceededError, ValidationError
from availsim.graph import ServiceGraph, load_graph, save_graph
from availsim.oracle import DEFAULT_BUDGET, exact_records
from availsim.reporting import write_report
from availsim.simulation import (
    EstimateRecord,
    SimulationConfig,
    eligible_set,
    estimate_availability,
    parse_service_list,
)
from availsim.traces import IngestConfig, discover, sanity_check

log = logging.getLogger(__name__)

CONFIG_SECTIONS = {"ingest", "simulation", "oracle", "chaos", "report", "weights",
                   "disallowlist_file", "targets_file"}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def config_hash(config: Mapping) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def metadata(stage: str, config: Mapping, seeds: Mapping[str, int | None] | None = None) -> dict:
    return {
        "tool": "availsim",
        "version": __version__,
        "stage": stage,
        "seeds": dict(seeds or {}),
        "config_hash": config_hash(config),
        "config": json.loads(canonical_json(config)),
    }


def write_meta(artifact: Path, meta: Mapping) -> None:
    artifact.with_name(artifact.name + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _ensure_parent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def read_records(path: str | Path) -> list[EstimateRecord]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list):
        raise ValidationError(f"{path}: expected an array of estimate records")
    return [EstimateRecord.from_dict(d) for d in doc]


def write_records(path: Path, records: Sequence[EstimateRecord]) -> None:
    _ensure_parent(path).write_text(
        json.dumps([r.to_dict() for r in records], indent=2) + "\n", encoding="utf-8"
    )


def read_weights(path: str | Path | None) -> dict[str, float] | None:
    if path is None:
        return None
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: weights must be an object route -> weight")
    return {str(k): float(v) for k, v in doc.items()}


def read_service_file(path: str | Path | None) -> frozenset[str]:
    if path is None:
        return frozenset()
    return parse_service_list(Path(path).read_text(encoding="utf-8"))


# -- stages -----------------------------------------------------------------


def stage_discover(trace_paths: Sequence[str | Path], out: Path, ingest: IngestConfig,
                   deployed: frozenset[str] | None = None) -> tuple[ServiceGraph, list[str]]:
    graph = discover(trace_paths, ingest)
    warnings = sanity_check(graph, deployed) if deployed else []
    for w in warnings:
        log.warning(w)
    _ensure_parent(out).write_text(save_graph(graph), encoding="utf-8")
    cfg = {"infra_services": ingest.infra_services,
           "min_span_duration_micros": ingest.min_span_duration_micros,
           "broker_systems": ingest.broker_systems}
    write_meta(out, {**metadata("discover", cfg), "warnings": warnings})
    return graph, warnings


def _sim_meta_config(config: SimulationConfig) -> dict:
    return {
        "failure_fractions": config.failure_fractions,
        "trials": config.trials,
        "master_seed": config.master_seed,
        "disallowlist": config.disallowlist,
        "common_random_numbers": config.common_random_numbers,
        "rounding": config.rounding,
        "rng": "numpy Philox4x64, counter [0, trial, stream, 0]",
    }


def stage_simulate(graph: ServiceGraph, endpoints: Sequence[EndpointSpec],
                   config: SimulationConfig, out: Path, workers: int = 1) -> list[EstimateRecord]:
    records = estimate_availability(graph, endpoints, config, workers=workers)
    write_records(out, records)
    write_meta(out, metadata("simulate", _sim_meta_config(config), {"master_seed": config.master_seed}))
    return records


def stage_oracle(graph: ServiceGraph, endpoints: Sequence[EndpointSpec], fractions: Sequence[float],
                 disallowlist: frozenset[str], out: Path, rounding: str = "half_up",
                 budget: int = DEFAULT_BUDGET) -> list[EstimateRecord]:
    eligible = eligible_set(graph, disallowlist)
    records = exact_records(graph, endpoints, eligible, fractions, rounding, budget)
    write_records(out, records)
    cfg = {"failure_fractions": fractions, "disallowlist": disallowlist,
           "rounding": rounding, "budget": budget}
    write_meta(out, metadata("oracle", cfg))
    return records


def stage_chaos(graph: ServiceGraph, endpoints: Sequence[EndpointSpec], config: ChaosConfig,
                disallowlist: frozenset[str], out: Path) -> ProbeOutcomes:
    outcomes = run_chaos(graph, endpoints, config, disallowlist)
    outcomes.write_csv(_ensure_parent(out))
    cfg = {
        "failure_fractions": config.failure_fractions, "chunks": config.chunks,
        "windows_per_chunk": config.windows_per_chunk,
        "probes_per_window": config.probes_per_window,
        "probe_weights": dict(config.probe_weights) if config.probe_weights else None,
        "retry_rescue_prob": config.retry_rescue_prob,
        "gray_failure_prob": config.gray_failure_prob,
        "master_seed": config.master_seed, "rounding": config.rounding,
        "disallowlist": disallowlist, **outcomes.metadata,
    }
    write_meta(out, metadata("chaos", cfg, {"master_seed": config.master_seed}))
    return outcomes


def stage_report(predictions: Sequence[EstimateRecord], outcomes: ProbeOutcomes, out_dir: Path,
                 exact: Sequence[EstimateRecord] | None = None,
                 weights: Mapping[str, float] | None = None,
                 upstream: Mapping | None = None) -> dict:
    seeds = sorted({r.seed for r in predictions if r.seed is not None})
    cfg = {"weights": dict(weights) if weights else None, "upstream": dict(upstream or {})}
    meta = metadata("report", cfg, {"prediction_seeds": seeds})
    return write_report(
        out_dir, predictions,
        live_availability(outcomes), live_availability(outcomes, by_chunk=True),
        exact=exact, weights=weights, metadata=meta,
    )


# -- pipeline ---------------------------------------------------------------


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self) -> int:
        if isinstance(self.cause, (ValidationError, json.JSONDecodeError)):
            return 1
        if isinstance(self.cause, OSError):
            return 3
        return 2

    def report(self) -> dict:
        return {
            "status": "error",
            "stage": self.stage,
            "error": type(self.cause).__name__,
            "message": str(self.cause),
            "exit_code": self.exit_code,
        }


@dataclass
class PipelineResult:
    artifacts: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def load_pipeline_config(path: Path) -> dict:
    cfg = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(cfg, dict):
        raise ValidationError("pipeline config must be a JSON object")
    unknown = set(cfg) - CONFIG_SECTIONS
    if unknown:
        raise ValidationError(f"unknown pipeline config sections: {sorted(unknown)}")
    return cfg


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing required file: {path}")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_pipeline(workspace: str | Path, config_path: str | Path | None = None,
                 workers: int = 1) -> PipelineResult:
    """discover -> simulate -> oracle -> chaos -> report inside ``workspace``.

    Raises :class:`StageError` naming the failing stage.
    """
    ws = Path(workspace)
    result = PipelineResult()
    stage = "config"
    try:
        cfg = load_pipeline_config(_require(Path(config_path) if config_path else ws / "pipeline.json"))
        sim_cfg = dict(cfg.get("simulation", {}))
        chaos_cfg = dict(cfg.get("chaos", {}))
        ingest_cfg = dict(cfg.get("ingest", {}))
        oracle_cfg = dict(cfg.get("oracle", {}))
        weights = cfg.get("weights")
        endpoints = load_targets(_require(ws / cfg.get("targets_file", "targets.json")).read_text())
        disallow = read_service_file(_require(ws / cfg.get("disallowlist_file", "disallowlist.txt")))

        stage = "discover"
        graph_path = ws / "graph.json"
        if (ws / "traces").is_dir():
            infra = ingest_cfg.get("infra_file")
            deployed = ingest_cfg.get("deployed_file")
            ingest = IngestConfig(
                infra_services=read_service_file(ws / infra) if infra else frozenset(),
                min_span_duration_micros=int(ingest_cfg.get("min_span_duration_micros", 0)),
                broker_systems=frozenset(ingest_cfg.get("broker_systems", ["kafka"])),
            )
            graph, warns = stage_discover(
                [ws / "traces"], graph_path, ingest,
                read_service_file(ws / deployed) if deployed else None,
            )
            result.warnings += warns
        else:
            graph = load_graph(_require(graph_path).read_bytes())
        for ep in endpoints:
            ep.check_bound(graph)
        result.artifacts["graph"] = str(graph_path)

        stage = "simulate"
        sim = SimulationConfig(
            failure_fractions=tuple(sim_cfg.get("failure_fractions", SimulationConfig.failure_fractions)),
            trials=int(sim_cfg.get("trials", SimulationConfig.trials)),
            master_seed=int(sim_cfg.get("master_seed", SimulationConfig.master_seed)),
            disallowlist=disallow,
            common_random_numbers=bool(sim_cfg.get("common_random_numbers", True)),
            rounding=sim_cfg.get("rounding", "half_up"),
        )
        predictions = stage_simulate(graph, endpoints, sim, ws / "predictions.json", workers)
        result.artifacts["predictions"] = str(ws / "predictions.json")

        stage = "oracle"
        exact = None
        try:
            exact = stage_oracle(graph, endpoints, sim.failure_fractions, disallow,
                                 ws / "exact.json", sim.rounding,
                                 int(oracle_cfg.get("budget", DEFAULT_BUDGET)))
            result.artifacts["exact"] = str(ws / "exact.json")
        except BudgetExceededError as exc:
            msg = f"oracle skipped: {exc}"
            log.warning(msg)
            result.warnings.append(msg)
            result.skipped.append("oracle")
            (ws / "exact.json").unlink(missing_ok=True)

        stage = "chaos"
        truth_path = ws / "truth.json"
        truth = load_graph(truth_path.read_bytes()) if truth_path.exists() else graph
        chaos = ChaosConfig(
            failure_fractions=tuple(chaos_cfg.get("failure_fractions", sim.failure_fractions)),
            chunks=int(chaos_cfg.get("chunks", 50)),
            windows_per_chunk=int(chaos_cfg.get("windows_per_chunk", 100)),
            probes_per_window=int(chaos_cfg.get("probes_per_window", 100)),
            probe_weights=weights,
            retry_rescue_prob=float(chaos_cfg.get("retry_rescue_prob", 0.0)),
            gray_failure_prob=float(chaos_cfg.get("gray_failure_prob", 0.0)),
            master_seed=int(chaos_cfg.get("master_seed", 7)),
            rounding=sim.rounding,
        )
        outcomes = stage_chaos(truth, endpoints, chaos, disallow, ws / "live.csv")
        result.artifacts["live"] = str(ws / "live.csv")

        stage = "report"
        stage_report(predictions, outcomes, ws / "reports", exact, weights,
                     upstream={"pipeline_config_hash": config_hash(cfg)})
        result.artifacts["reports"] = str(ws / "reports")
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc

    manifest = {
        "status": "ok",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "skipped": result.skipped,
        "warnings": result.warnings,
        "artifacts": {
            str(p.relative_to(ws)): _sha256(p)
            for p in sorted(ws.rglob("*"))
            if p.is_file() and p.suffix in {".json", ".csv", ".svg"}
            and (p.parent == ws or ws / "reports" in p.parents)
            and p.name not in {"manifest.json", "pipeline.json", "targets.json", "truth.json"}
        },
    }
    (ws / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return result


def copy_demo(dest: str | Path) -> Path:
    """Copy the bundled demo workspace to ``dest``."""
    src = resources.files("availsim") / "data" / "demo"
    dest = Path(dest)
    with resources.as_file(src) as path:
        shutil.copytree(path, dest, dirs_exist_ok=True)
    return dest
