"""Join model predictions with emulated live probes: bias, errors, deltas, charts."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from availsim.chaos import LiveStratum
from availsim.core import Semantics
from availsim.errors import ValidationError
from availsim.simulation import SEMANTICS, EstimateRecord, aggregate_availability
from availsim.svg import PALETTE, Canvas

NEGLIGIBLE_DELTA = 0.01
AGGREGATE = "aggregate"


@dataclass(frozen=True)
class BiasRow:
    p_fail: float
    live_aggregate: float
    model_all: float
    model_async: float
    bias_all: float
    bias_async: float


@dataclass(frozen=True)
class ErrorRow:
    route: str
    p_fail: float
    semantics: Semantics
    chunk: int | None
    model: float
    live: float
    error: float | None  # None when live availability is zero


@dataclass(frozen=True)
class DeltaRow:
    route: str
    p_fail: float
    delta: float
    negligible: bool


def _pooled(live: Iterable[LiveStratum]) -> list[LiveStratum]:
    return [r for r in live if r.chunk is None]


def _canonical(live: Iterable[LiveStratum]) -> list[LiveStratum]:
    return sorted(live, key=lambda r: (r.p_fail, -1 if r.chunk is None else r.chunk, r.route))


def _index(predictions: Iterable[EstimateRecord]) -> dict[tuple[str, float, Semantics], EstimateRecord]:
    return {(r.route, r.p_fail, Semantics(r.semantics)): r for r in predictions}


def probe_shares(live: Iterable[LiveStratum]) -> dict[float, dict[str, float]]:
    """Per p_fail, each route's probe count (the probe distribution)."""
    shares: dict[float, dict[str, float]] = {}
    for r in _pooled(live):
        if r.route != AGGREGATE:
            shares.setdefault(r.p_fail, {})[r.route] = float(r.probes)
    return shares


def bias_table(
    predictions: Sequence[EstimateRecord],
    live: Sequence[LiveStratum],
    weights: Mapping[str, float] | None = None,
) -> list[BiasRow]:
    """Aggregate model minus aggregate live availability per p_fail.

    Model aggregates use ``weights`` if given, else the live probe shares, so
    both sides average over the same route mix.
    """
    live_agg = {r.p_fail: r.estimate for r in _pooled(live) if r.route == AGGREGATE}
    pred_ps = {r.p_fail for r in predictions}
    if set(live_agg) != pred_ps:
        raise ValidationError(
            f"stratum mismatch: predictions {sorted(pred_ps)} vs live {sorted(live_agg)}"
        )
    shares = probe_shares(live)
    rows = []
    for p in sorted(pred_ps):
        w = weights if weights is not None else shares[p]
        stratum = [r for r in predictions if r.p_fail == p]
        model = {a.semantics: a.estimate for a in aggregate_availability(stratum, w)}
        missing = set(SEMANTICS) - set(model)
        if missing:
            raise ValidationError(f"p_fail={p}: predictions lack semantics {sorted(missing)}")
        m_all, m_async = model[Semantics.ALL_BLOCKING], model[Semantics.ASYNC]
        rows.append(BiasRow(p, live_agg[p], m_all, m_async, m_all - live_agg[p], m_async - live_agg[p]))
    return rows


def percentage_error(model: float, live: float) -> float | None:
    """Signed relative error in percent; ``None`` when live availability is zero."""
    if live == 0:
        return None
    return 100.0 * (model - live) / live


def percentage_errors(
    predictions: Sequence[EstimateRecord], live: Iterable[LiveStratum]
) -> list[ErrorRow]:
    """Errors for every live route stratum (pooled or per chunk) and semantics."""
    index = _index(predictions)
    rows = []
    for lv in _canonical(live):
        if lv.route == AGGREGATE:
            continue
        for sem in SEMANTICS:
            pred = index.get((lv.route, lv.p_fail, sem))
            if pred is None:
                raise ValidationError(f"no prediction for {lv.route} p_fail={lv.p_fail} {sem}")
            rows.append(ErrorRow(lv.route, lv.p_fail, sem, lv.chunk, pred.estimate,
                                 lv.estimate, percentage_error(pred.estimate, lv.estimate)))
    return rows


def box_stats(values: Sequence[float]) -> dict:
    """Quartiles by linear interpolation; whiskers and outliers by Tukey's 1.5 IQR rule."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = (float(x) for x in np.percentile(v, [25, 50, 75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = v[(v < lo_fence) | (v > hi_fence)]
    return {
        "n": int(len(v)),
        "median": med,
        "q1": q1,
        "q3": q3,
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": int(len(outliers)),
        "outlier_values": [float(x) for x in outliers],
        "mean_error": float(v.mean()),
        "mean_abs_error": float(np.abs(v).mean()),
    }


def error_summary(rows: Iterable[ErrorRow]) -> list[dict]:
    """Per (p_fail, semantics) distribution of percentage errors.

    Undefined errors (live = 0) are excluded and counted.
    """
    groups: dict[tuple[float, str], list[ErrorRow]] = {}
    for r in rows:
        groups.setdefault((r.p_fail, Semantics(r.semantics).value), []).append(r)
    out = []
    for (p, sem), rs in sorted(groups.items()):
        vals = sorted(r.error for r in rs if r.error is not None)
        entry = {"p_fail": p, "semantics": sem, "undefined": sum(r.error is None for r in rs)}
        if vals:
            entry.update(box_stats(vals))
        else:
            entry["n"] = 0
        out.append(entry)
    return out


def delta_table(
    predictions: Sequence[EstimateRecord], weights: Mapping[str, float] | None = None
) -> list[DeltaRow]:
    """Async minus all-blocking, per route and for the weighted aggregate."""
    index = _index(predictions)
    keys = sorted({(r.p_fail, r.route) for r in predictions})
    rows = []
    for p, route in keys:
        try:
            d = index[(route, p, Semantics.ASYNC)].estimate - index[(route, p, Semantics.ALL_BLOCKING)].estimate
        except KeyError:
            raise ValidationError(f"missing semantics stratum for {route} p_fail={p}") from None
        rows.append(DeltaRow(route, p, d, abs(d) < NEGLIGIBLE_DELTA))
    for p in sorted({p for p, _ in keys}):
        agg = {a.semantics: a.estimate for a in aggregate_availability(
            [r for r in predictions if r.p_fail == p], weights)}
        d = agg[Semantics.ASYNC] - agg[Semantics.ALL_BLOCKING]
        rows.append(DeltaRow(AGGREGATE, p, d, abs(d) < NEGLIGIBLE_DELTA))
    return rows


def _x_axis(ps: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(ps), max(ps)
    pad = 0.1 if hi == lo else (hi - lo) * 0.08
    return lo - pad, hi + pad


def availability_chart(bias: Sequence[BiasRow], live: Sequence[LiveStratum]) -> str:
    ps = [b.p_fail for b in bias]
    c = Canvas("Probe-weighted availability vs failure fraction", "failure fraction p_fail",
               "availability", (0.0, 1.0), _x_axis(ps))
    c.axes(ps, [f"{p:g}" for p in ps])
    agg = {r.p_fail: r for r in _pooled(live) if r.route == AGGREGATE}
    c.error_bars(ps, [agg[p].ci_low for p in ps], [agg[p].ci_high for p in ps], "#000")
    c.line(ps, [b.live_aggregate for b in bias], "live (95% CI)", "#000")
    c.line(ps, [b.model_all for b in bias], "model all-blocking", PALETTE[0])
    c.line(ps, [b.model_async for b in bias], "model async", PALETTE[1], dash="6,4")
    return c.render()


def delta_chart(deltas: Sequence[DeltaRow]) -> str:
    ps = sorted({d.p_fail for d in deltas})
    span = max([abs(d.delta) for d in deltas] + [0.0])
    span = span * 1.2 if span > 0 else 1e-5
    c = Canvas("Async minus all-blocking availability", "failure fraction p_fail",
               "delta", (-span, span), _x_axis(ps))
    c.axes(ps, [f"{p:g}" for p in ps])
    c.hline(0.0, "#888")
    for bound in (-NEGLIGIBLE_DELTA, NEGLIGIBLE_DELTA):
        if -span <= bound <= span:
            c.hline(bound, "#d62728", dash="2,3")
    routes = sorted({d.route for d in deltas if d.route != AGGREGATE}) + [AGGREGATE]
    for i, route in enumerate(routes):
        pts = sorted((d.p_fail, d.delta) for d in deltas if d.route == route)
        color = "#000" if route == AGGREGATE else PALETTE[i % len(PALETTE)]
        c.line([p for p, _ in pts], [v for _, v in pts], route, color,
               dash="6,4" if route == AGGREGATE else None)
    return c.render()


def error_chart(summary: Sequence[dict]) -> str:
    ps = sorted({s["p_fail"] for s in summary})
    populated = [s for s in summary if s["n"]]
    vals = [v for s in populated for v in
            (s["whisker_low"], s["whisker_high"], *s["outlier_values"])] or [0.0]
    lo, hi = min(vals + [0.0]), max(vals + [0.0])
    pad = (hi - lo) * 0.1 or 1.0
    c = Canvas("Percentage error of model vs live", "failure fraction p_fail",
               "error (%)", (lo - pad, hi + pad), _x_axis(ps))
    c.axes(ps, [f"{p:g}" for p in ps])
    c.hline(0.0, "#888")
    step = (c.x(ps[1]) - c.x(ps[0])) if len(ps) > 1 else 60.0
    colors = {Semantics.ALL_BLOCKING.value: PALETTE[0], Semantics.ASYNC.value: PALETTE[1]}
    offsets = {Semantics.ALL_BLOCKING.value: -0.18, Semantics.ASYNC.value: 0.18}
    px_per_unit = (c.x(ps[0] + 1) - c.x(ps[0]))
    for s in populated:
        xc = s["p_fail"] + offsets[s["semantics"]] * step / px_per_unit
        c.box(xc, step * 0.14, s, colors[s["semantics"]])
    for sem, color in colors.items():
        c.add_legend(sem, color)
    return c.render()


def render_charts(
    bias: Sequence[BiasRow],
    live: Sequence[LiveStratum],
    deltas: Sequence[DeltaRow],
    summary: Sequence[dict],
) -> dict[str, str]:
    if not bias or not deltas:
        raise ValidationError("nothing to chart")
    return {
        "availability.svg": availability_chart(bias, live),
        "deltas.svg": delta_chart(deltas),
        "errors.svg": error_chart(summary),
    }


def exact_check(
    predictions: Sequence[EstimateRecord], exact: Sequence[EstimateRecord], sigmas: float = 4.0
) -> dict:
    """Compare Monte Carlo estimates with oracle values at ``sigmas`` standard errors."""
    index = _index(exact)
    rows = []
    for r in predictions:
        ex = index.get((r.route, r.p_fail, Semantics(r.semantics)))
        if ex is None:
            continue
        diff = abs(r.estimate - ex.estimate)
        rows.append({
            "route": r.route, "p_fail": r.p_fail, "semantics": Semantics(r.semantics).value,
            "estimate": r.estimate, "exact": ex.estimate, "std_error": r.std_error,
            "abs_diff": diff, "within": diff <= sigmas * r.std_error,
        })
    return {"sigmas": sigmas, "compared": len(rows),
            "violations": sum(not r["within"] for r in rows), "rows": rows}


def _cell(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, rows: Sequence, fields: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            d = asdict(r)
            w.writerow([_cell(d[f].value if isinstance(d[f], Semantics) else d[f]) for f in fields])


def write_report(
    out_dir: str | Path,
    predictions: Sequence[EstimateRecord],
    live_pooled: Sequence[LiveStratum],
    live_chunks: Sequence[LiveStratum],
    exact: Sequence[EstimateRecord] | None = None,
    weights: Mapping[str, float] | None = None,
    metadata: Mapping | None = None,
) -> dict:
    """Write bias/errors/deltas CSVs, summary.json and charts; return the summary."""
    out = Path(out_dir)
    (out / "charts").mkdir(parents=True, exist_ok=True)
    bias = bias_table(predictions, live_pooled, weights)
    errors = percentage_errors(predictions, live_chunks)
    summary_rows = error_summary(errors)
    pooled_errors = percentage_errors(predictions, live_pooled)
    deltas = delta_table(predictions, weights)

    write_csv(out / "bias.csv", bias, list(BiasRow.__dataclass_fields__))
    write_csv(out / "errors.csv", errors, list(ErrorRow.__dataclass_fields__))
    write_csv(out / "deltas.csv", deltas, list(DeltaRow.__dataclass_fields__))
    for name, svg in render_charts(bias, live_pooled, deltas, summary_rows).items():
        (out / "charts" / name).write_text(svg, encoding="utf-8")

    summary = {
        "metadata": dict(metadata or {}),
        "bias": [asdict(b) for b in bias],
        "live": [asdict(r) for r in _canonical(live_pooled)],
        "route_errors": [
            {**asdict(e), "semantics": e.semantics.value} for e in pooled_errors
        ],
        "error_summary": summary_rows,
        "deltas": {
            "negligible_threshold": NEGLIGIBLE_DELTA,
            "max_abs": max(abs(d.delta) for d in deltas),
            "all_negligible": all(d.negligible for d in deltas),
            "all_non_positive": all(d.delta <= 0 for d in deltas),
        },
    }
    if exact is not None:
        summary["exact_check"] = exact_check(predictions, exact)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary
