"""Monte Carlo availability estimates under random fail-stop kill sets.

Randomness is counter based: trial ``i`` draws from a Philox-4x64 stream keyed
by the master seed with counter ``[0, i, stream, 0]``. Its uniforms are argsorted
into a permutation of the eligible services, and the kill set for size ``k`` is
the first ``k`` entries of that permutation. A trial is therefore a pure
function of ``(seed, i)``; worker partitioning cannot change results, and kill
sets are nested across failure fractions within one trial.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_EVEN, ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np

from availsim.core import EndpointSpec, Evaluator, FailureScenario, Semantics
from availsim.errors import ValidationError
from availsim.graph import ServiceGraph

SEMANTICS = (Semantics.ALL_BLOCKING, Semantics.ASYNC)
DEFAULT_FRACTIONS = (0.1, 0.3, 0.5, 0.7, 0.9)

# Philox counter word 2: keeps consumers of one master seed on disjoint streams.
STREAM_SCENARIO = 0
STREAM_SCENARIO_ASYNC = 1  # async kill sets when common random numbers are off
STREAM_CHAOS = 2
STREAM_PROBE_NOISE = 3

_ROUNDING = {"half_up": ROUND_HALF_UP, "half_even": ROUND_HALF_EVEN}


@dataclass(frozen=True)
class SimulationConfig:
    failure_fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    trials: int = 100_000
    master_seed: int = 42
    disallowlist: frozenset[str] = frozenset()
    common_random_numbers: bool = True
    rounding: str = "half_up"

    def __post_init__(self) -> None:
        object.__setattr__(self, "failure_fractions", tuple(self.failure_fractions))
        object.__setattr__(self, "disallowlist", frozenset(self.disallowlist))
        if not self.failure_fractions:
            raise ValidationError("at least one failure fraction is required")
        for p in self.failure_fractions:
            if not 0 < p < 1:
                raise ValidationError(f"failure fraction must lie in (0, 1), got {p}")
        if self.trials < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.master_seed < 2**64:
            raise ValidationError("master_seed must be a 64-bit unsigned integer")
        if self.rounding not in _ROUNDING:
            raise ValidationError(f"rounding must be one of {sorted(_ROUNDING)}")


@dataclass(frozen=True)
class EstimateRecord:
    route: str
    semantics: Semantics
    p_fail: float
    estimate: float
    std_error: float
    trials: int
    k_used: int
    seed: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["semantics"] = self.semantics.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EstimateRecord":
        return cls(
            route=d["route"],
            semantics=Semantics(d["semantics"]),
            p_fail=float(d["p_fail"]),
            estimate=float(d["estimate"]),
            std_error=float(d["std_error"]),
            trials=int(d["trials"]),
            k_used=int(d["k_used"]),
            seed=d.get("seed"),
        )


@dataclass(frozen=True)
class AggregateRecord:
    p_fail: float
    semantics: Semantics
    estimate: float


def binomial_se(estimate: float, n: int) -> float:
    return math.sqrt(estimate * (1.0 - estimate) / n)


def parse_service_list(text: str) -> frozenset[str]:
    """Newline-separated service names; ``#`` starts a comment."""
    names = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.add(line)
    return frozenset(names)


def eligible_set(graph: ServiceGraph, disallowlist: Iterable[str]) -> tuple[str, ...]:
    banned = set(disallowlist)
    eligible = tuple(n for n in sorted(graph.names) if n not in banned)
    if not eligible:
        raise ValidationError("no eligible services")
    return eligible


def kill_count(p_fail: float, n_eligible: int, rounding: str = "half_up") -> int:
    """``max(1, round(p_fail * n))`` with decimal rounding of the product.

    The product is formed in decimal from the shortest repr of ``p_fail`` so
    that e.g. 0.1 * 15 is exactly 1.5 before rounding.
    """
    if not 0 < p_fail < 1:
        raise ValidationError(f"p_fail must lie in (0, 1), got {p_fail}")
    if n_eligible < 1:
        raise ValidationError("n_eligible must be >= 1")
    exact = Decimal(repr(p_fail)) * n_eligible
    k = int(exact.quantize(Decimal(1), rounding=_ROUNDING[rounding]))
    return min(max(1, k), n_eligible)


def counter_rng(master_seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=master_seed, counter=[0, index, stream, 0])
    )


def trial_permutation(n: int, master_seed: int, trial_index: int, stream: int = 0) -> np.ndarray:
    u = counter_rng(master_seed, trial_index, stream).random(n)
    return np.argsort(u, kind="stable")


def sample_failure_set(
    eligible: Sequence[str],
    k: int,
    master_seed: int,
    trial_index: int,
    stream: int = STREAM_SCENARIO,
) -> FailureScenario:
    """Uniform k-subset of ``eligible``, fixed by ``(master_seed, trial_index)``."""
    if not 1 <= k <= len(eligible):
        raise ValidationError(f"k={k} outside [1, {len(eligible)}]")
    perm = trial_permutation(len(eligible), master_seed, trial_index, stream)
    return FailureScenario(frozenset(eligible[j] for j in perm[:k]))


def _prefix_masks(perm: np.ndarray, bits: Sequence[int], upto: int) -> list[int]:
    masks = [0]
    m = 0
    for j in perm[:upto].tolist():
        m |= bits[j]
        masks.append(m)
    return masks


@dataclass
class _Job:
    graph: ServiceGraph
    endpoints: list[EndpointSpec]
    eligible: tuple[str, ...]
    ks: list[int]
    master_seed: int
    crn: bool
    lo: int
    hi: int


def _count_successes(job: _Job) -> np.ndarray:
    ev = Evaluator(job.graph, job.endpoints)
    bits = [1 << job.graph.index(s) for s in job.eligible]
    n, kmax = len(job.eligible), max(job.ks)
    n_ep = len(job.endpoints)
    counts = [[0] * (2 * n_ep) for _ in job.ks]
    success = ev.success
    all_b, asyn = Semantics.ALL_BLOCKING, Semantics.ASYNC
    for i in range(job.lo, job.hi):
        perm = trial_permutation(n, job.master_seed, i, STREAM_SCENARIO)
        masks = _prefix_masks(perm, bits, kmax)
        if job.crn:
            masks_async = masks
        else:
            perm_a = trial_permutation(n, job.master_seed, i, STREAM_SCENARIO_ASYNC)
            masks_async = _prefix_masks(perm_a, bits, kmax)
        for row, k in zip(counts, job.ks):
            killed, killed_async = masks[k], masks_async[k]
            for e in range(n_ep):
                if success(e, killed, all_b):
                    row[2 * e] += 1
                if success(e, killed_async, asyn):
                    row[2 * e + 1] += 1
    return np.array(counts, dtype=np.int64).reshape(len(job.ks), n_ep, 2)


def _split(trials: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, trials))
    step = -(-trials // workers)
    return [(lo, min(lo + step, trials)) for lo in range(0, trials, step)]


def default_workers() -> int:
    return os.cpu_count() or 1


def success_counts(
    graph: ServiceGraph,
    endpoints: Sequence[EndpointSpec],
    config: SimulationConfig,
    workers: int = 1,
) -> np.ndarray:
    """Integer success counts, shape (fractions, endpoints, semantics)."""
    eligible = eligible_set(graph, config.disallowlist)
    ks = [kill_count(p, len(eligible), config.rounding) for p in config.failure_fractions]
    jobs = [
        _Job(graph, list(endpoints), eligible, ks, config.master_seed,
             config.common_random_numbers, lo, hi)
        for lo, hi in _split(config.trials, workers)
    ]
    if len(jobs) == 1:
        return _count_successes(jobs[0])
    with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
        # integer sums commute, so the merge is order independent
        return sum(pool.map(_count_successes, jobs))


def estimate_availability(
    graph: ServiceGraph,
    endpoints: Sequence[EndpointSpec],
    config: SimulationConfig,
    workers: int = 1,
) -> list[EstimateRecord]:
    for ep in endpoints:
        ep.check_bound(graph)
    eligible = eligible_set(graph, config.disallowlist)
    counts = success_counts(graph, endpoints, config, workers)
    records = []
    for f, p in enumerate(config.failure_fractions):
        k = kill_count(p, len(eligible), config.rounding)
        for e, ep in enumerate(endpoints):
            for s, sem in enumerate(SEMANTICS):
                est = int(counts[f, e, s]) / config.trials
                records.append(EstimateRecord(
                    route=ep.route,
                    semantics=sem,
                    p_fail=p,
                    estimate=est,
                    std_error=binomial_se(est, config.trials),
                    trials=config.trials,
                    k_used=k,
                    seed=config.master_seed,
                ))
    return records


def aggregate_availability(
    records: Iterable[EstimateRecord],
    weights: Mapping[str, float] | None = None,
) -> list[AggregateRecord]:
    """Weighted mean of route estimates per (p_fail, semantics).

    ``weights=None`` means uniform over the routes present.
    """
    strata: dict[tuple[float, Semantics], list[EstimateRecord]] = {}
    for r in records:
        strata.setdefault((r.p_fail, Semantics(r.semantics)), []).append(r)
    if weights is not None:
        if any(w < 0 for w in weights.values()):
            raise ValidationError("weights must be non-negative")
        missing = {r.route for rs in strata.values() for r in rs} - set(weights)
        if missing:
            raise ValidationError(f"missing weight for routes {sorted(missing)}")
    out = []
    for (p, sem), rs in sorted(strata.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        rs = sorted(rs, key=lambda r: r.route)
        ws = [1.0 if weights is None else float(weights[r.route]) for r in rs]
        total = sum(ws)
        if total <= 0:
            raise ValidationError("weights must have a positive sum")
        out.append(AggregateRecord(p, sem, sum(w * r.estimate for w, r in zip(ws, rs)) / total))
    return out
