"""Desk-scale chaos harness: kill / stabilise / probe windows on a ground-truth graph.

Each window kills a uniform random set of ``kill_count(p_fail, n)`` eligible
services, then issues a fixed number of probes whose routes follow a smooth
weighted round-robin schedule. A probe's structural outcome is the
all-blocking success predicate on the ground truth. Its recorded outcome can
be flipped by two noise channels: rescue (retries or fallbacks turn a failure
into a success) and gray failure (a healthy path still fails). Nothing sleeps;
window timings are carried as metadata only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from availsim.core import EndpointSpec, Evaluator, Semantics
from availsim.errors import ValidationError
from availsim.graph import ServiceGraph
from availsim.simulation import (
    DEFAULT_FRACTIONS,
    STREAM_CHAOS,
    STREAM_PROBE_NOISE,
    counter_rng,
    eligible_set,
    kill_count,
    trial_permutation,
)

CSV_HEADER = (
    "p_fail", "chunk", "window", "probe_index", "route",
    "structural_success", "recorded_success",
)

# model-minus-live aggregate bias measured against the real demo deployment
REFERENCE_BIAS = {0.1: 0.098, 0.3: 0.053, 0.5: -0.003, 0.7: -0.038, 0.9: -0.122}


@dataclass(frozen=True)
class ChaosConfig:
    failure_fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    chunks: int = 50
    windows_per_chunk: int = 100
    probes_per_window: int = 100
    probe_weights: Mapping[str, float] | None = None
    retry_rescue_prob: float = 0.0
    gray_failure_prob: float = 0.0
    master_seed: int = 7
    rounding: str = "half_up"
    window_seconds: float = 60.0
    stabilize_seconds: float = 15.0
    probe_seconds: float = 40.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "failure_fractions", tuple(self.failure_fractions))
        for name in ("chunks", "windows_per_chunk", "probes_per_window"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        for name in ("retry_rescue_prob", "gray_failure_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        for p in self.failure_fractions:
            if not 0 < p < 1:
                raise ValidationError(f"failure fraction must lie in (0, 1), got {p}")
        if self.probe_weights is not None and any(w < 0 for w in self.probe_weights.values()):
            raise ValidationError("probe weights must be non-negative")


@dataclass(frozen=True)
class ProbeOutcome:
    p_fail: float
    chunk: int
    window: int
    probe_index: int
    route: str
    structural_success: bool
    recorded_success: bool


@dataclass(eq=False)
class ProbeOutcomes:
    """Column store of probe outcomes in canonical (p_fail, chunk, window, probe) order."""

    routes: tuple[str, ...]
    p_fail: np.ndarray
    chunk: np.ndarray
    window: np.ndarray
    probe_index: np.ndarray
    route_index: np.ndarray
    structural: np.ndarray
    recorded: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.p_fail)

    def __iter__(self) -> Iterator[ProbeOutcome]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> ProbeOutcome:
        return ProbeOutcome(
            float(self.p_fail[i]), int(self.chunk[i]), int(self.window[i]),
            int(self.probe_index[i]), self.routes[self.route_index[i]],
            bool(self.structural[i]), bool(self.recorded[i]),
        )

    @classmethod
    def from_records(cls, outcomes: Sequence[ProbeOutcome]) -> "ProbeOutcomes":
        routes = tuple(sorted({o.route for o in outcomes}))
        pos = {r: i for i, r in enumerate(routes)}
        col = lambda attr, dt: np.array([getattr(o, attr) for o in outcomes], dtype=dt)  # noqa: E731
        return cls(
            routes,
            col("p_fail", np.float64), col("chunk", np.int64), col("window", np.int64),
            col("probe_index", np.int64),
            np.array([pos[o.route] for o in outcomes], dtype=np.int64),
            col("structural_success", bool), col("recorded_success", bool),
        )

    def write_csv(self, path: str | Path) -> None:
        fractions = {p: repr(float(p)) for p in np.unique(self.p_fail)}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            w.writerows(zip(
                (fractions[p] for p in self.p_fail.tolist()),
                self.chunk.tolist(), self.window.tolist(), self.probe_index.tolist(),
                (self.routes[i] for i in self.route_index.tolist()),
                self.structural.astype(np.int8).tolist(),
                self.recorded.astype(np.int8).tolist(),
            ))

    @classmethod
    def read_csv(cls, path: str | Path) -> "ProbeOutcomes":
        import pandas as pd

        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
        if header != ",".join(CSV_HEADER):
            raise ValidationError(f"{path}: unexpected live.csv header {header!r}")
        df = pd.read_csv(path, dtype={"route": str})
        routes = tuple(sorted(df["route"].unique()))
        return cls(
            routes,
            df["p_fail"].to_numpy(np.float64),
            df["chunk"].to_numpy(np.int64),
            df["window"].to_numpy(np.int64),
            df["probe_index"].to_numpy(np.int64),
            pd.Categorical(df["route"], categories=routes).codes.astype(np.int64),
            df["structural_success"].to_numpy().astype(bool),
            df["recorded_success"].to_numpy().astype(bool),
        )


def round_robin_schedule(weights: Sequence[float], n: int) -> list[int]:
    """Smooth weighted round-robin: ``n`` indices whose counts track the weights."""
    if not weights or sum(weights) <= 0:
        raise ValidationError("round-robin needs a positive total weight")
    current = [0.0] * len(weights)
    total = float(sum(weights))
    out = []
    for _ in range(n):
        for i, w in enumerate(weights):
            current[i] += w
        pick = max(range(len(weights)), key=lambda i: (current[i], -i))
        current[pick] -= total
        out.append(pick)
    return out


def run_chaos(
    graph: ServiceGraph,
    endpoints: Sequence[EndpointSpec],
    config: ChaosConfig,
    disallowlist=(),
) -> ProbeOutcomes:
    eligible = eligible_set(graph, disallowlist)
    ev = Evaluator(graph, endpoints)
    bits = [1 << graph.index(s) for s in eligible]
    routes = tuple(ep.route for ep in endpoints)
    if config.probe_weights is None:
        weights = [1.0] * len(endpoints)
    else:
        missing = set(routes) - set(config.probe_weights)
        if missing:
            raise ValidationError(f"missing probe weight for {sorted(missing)}")
        weights = [float(config.probe_weights[r]) for r in routes]
    schedule = np.array(round_robin_schedule(weights, config.probes_per_window), dtype=np.int64)

    F, C, W, P = (len(config.failure_fractions), config.chunks,
                  config.windows_per_chunk, config.probes_per_window)
    windows = F * C * W
    structural = np.empty((windows, P), dtype=bool)
    recorded = np.empty((windows, P), dtype=bool)
    gray, rescue = config.gray_failure_prob, config.retry_rescue_prob
    idx = 0
    for p in config.failure_fractions:
        k = kill_count(p, len(eligible), config.rounding)
        for _ in range(C * W):
            perm = trial_permutation(len(eligible), config.master_seed, idx, STREAM_CHAOS)
            killed = 0
            for j in perm[:k].tolist():
                killed |= bits[j]
            ok = np.array(ev.success_all(killed, Semantics.ALL_BLOCKING), dtype=bool)
            s = ok[schedule]
            u = counter_rng(config.master_seed, idx, STREAM_PROBE_NOISE).random(P)
            structural[idx] = s
            recorded[idx] = np.where(s, u >= gray, u < rescue)
            idx += 1

    grid = np.indices((F, C, W, P)).reshape(4, -1)
    fractions = np.asarray(config.failure_fractions, dtype=np.float64)
    return ProbeOutcomes(
        routes=routes,
        p_fail=fractions[grid[0]],
        chunk=grid[1],
        window=grid[2],
        probe_index=grid[3],
        route_index=np.tile(schedule, windows),
        structural=structural.reshape(-1),
        recorded=recorded.reshape(-1),
        metadata={
            "window_seconds": config.window_seconds,
            "stabilize_seconds": config.stabilize_seconds,
            "probe_seconds": config.probe_seconds,
        },
    )


@dataclass(frozen=True)
class LiveStratum:
    route: str
    p_fail: float
    probes: int
    successes: int
    estimate: float
    ci_low: float
    ci_high: float
    chunk: int | None = None


def _stratum(route, p, probes, successes, chunk=None) -> LiveStratum:
    if probes == 0:
        raise ValidationError(f"empty stratum for {route} at p_fail={p}")
    a = successes / probes
    half = 1.96 * math.sqrt(a * (1 - a) / probes)
    return LiveStratum(route, p, probes, successes, a,
                       max(0.0, a - half), min(1.0, a + half), chunk)


def live_availability(outcomes: ProbeOutcomes, by_chunk: bool = False) -> list[LiveStratum]:
    """Recorded success fraction per (route, p_fail) with 95% binomial CIs.

    The probe-weighted aggregate per p_fail is appended under route
    ``"aggregate"``; weighting by probe share makes it the pooled fraction.
    With ``by_chunk`` the strata are further split by chunk.
    """
    if len(outcomes) == 0:
        raise ValidationError("no probe outcomes")
    fractions = np.unique(outcomes.p_fail)
    p_code = np.searchsorted(fractions, outcomes.p_fail)
    n_routes = len(outcomes.routes)
    n_chunks = int(outcomes.chunk.max()) + 1 if by_chunk else 1
    chunk_code = outcomes.chunk if by_chunk else np.zeros(len(outcomes), dtype=np.int64)
    key = (p_code * n_chunks + chunk_code) * n_routes + outcomes.route_index
    size = len(fractions) * n_chunks * n_routes
    probes = np.bincount(key, minlength=size).reshape(len(fractions), n_chunks, n_routes)
    hits = np.bincount(key, weights=outcomes.recorded, minlength=size)
    hits = np.rint(hits).astype(np.int64).reshape(probes.shape)

    rows = []
    for f, p in enumerate(fractions.tolist()):
        for c in range(n_chunks):
            chunk = c if by_chunk else None
            if by_chunk and probes[f, c].sum() == 0:
                continue
            for r, route in enumerate(outcomes.routes):
                if probes[f, c, r]:
                    rows.append(_stratum(route, p, int(probes[f, c, r]), int(hits[f, c, r]), chunk))
            rows.append(_stratum("aggregate", p, int(probes[f, c].sum()),
                                 int(hits[f, c].sum()), chunk))
    return rows


def expected_recorded(structural: float, gray: float, rescue: float) -> float:
    """Expected recorded availability given structural availability and noise."""
    return structural * (1 - gray) + (1 - structural) * rescue


def calibrate_noise(
    model: Mapping[float, float],
    target_bias: Mapping[float, float] = REFERENCE_BIAS,
) -> tuple[float, float]:
    """Least-squares (gray, rescue) so that model - recorded matches ``target_bias``.

    With structural availability ``a`` the expected bias is
    ``a * gray - (1 - a) * rescue``; both knobs are clipped to [0, 1].
    Only fractions present in both mappings are used.
    """
    common = sorted(set(model) & set(target_bias))
    if len(common) < 2:
        raise ValidationError("calibration needs at least two shared failure fractions")
    a = np.array([model[p] for p in common])
    design = np.column_stack([a, -(1 - a)])
    b = np.array([target_bias[p] for p in common])
    (gray, rescue), *_ = np.linalg.lstsq(design, b, rcond=None)
    return float(np.clip(gray, 0, 1)), float(np.clip(rescue, 0, 1))
