"""Minimal deterministic SVG plotting (lines, error bars, boxes)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#7f7f7f")


def _f(x: float) -> str:
    return f"{x:.2f}"


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = step * math.ceil(lo / step - 1e-9)
    ticks = []
    t = start
    while t <= hi + step * 1e-9:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


def _label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) < 1e-3 or abs(v) >= 1e4:
        return f"{v:.1e}"
    return f"{v:.3g}"


@dataclass
class Canvas:
    title: str
    x_label: str
    y_label: str
    y_range: tuple[float, float]
    x_range: tuple[float, float] = (0.0, 1.0)
    width: int = 640
    height: int = 400
    margin: tuple[int, int, int, int] = (40, 150, 50, 70)  # top, right, bottom, left
    parts: list[str] = field(default_factory=list)
    legend: list[tuple[str, str, str]] = field(default_factory=list)

    def x(self, v: float) -> float:
        top, right, bottom, left = self.margin
        lo, hi = self.x_range
        return left + (v - lo) / (hi - lo) * (self.width - left - right)

    def y(self, v: float) -> float:
        top, right, bottom, left = self.margin
        lo, hi = self.y_range
        return self.height - bottom - (v - lo) / (hi - lo) * (self.height - top - bottom)

    def axes(self, x_ticks: Sequence[float], x_tick_labels: Sequence[str] | None = None) -> None:
        top, right, bottom, left = self.margin
        x0, x1 = left, self.width - right
        y0, y1 = self.height - bottom, top
        for t in nice_ticks(*self.y_range):
            if self.y_range[0] - 1e-12 <= t <= self.y_range[1] + 1e-12:
                yy = _f(self.y(t))
                self.parts.append(
                    f'<line x1="{x0}" y1="{yy}" x2="{x1}" y2="{yy}" stroke="#e0e0e0"/>'
                    f'<text x="{x0 - 6}" y="{yy}" text-anchor="end" dominant-baseline="middle">'
                    f"{_label(t)}</text>"
                )
        labels = x_tick_labels or [_label(t) for t in x_ticks]
        for t, lab in zip(x_ticks, labels):
            xx = _f(self.x(t))
            self.parts.append(
                f'<line x1="{xx}" y1="{y0}" x2="{xx}" y2="{y0 + 5}" stroke="#000"/>'
                f'<text x="{xx}" y="{y0 + 18}" text-anchor="middle">{escape(lab)}</text>'
            )
        self.parts.append(
            f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
            'fill="none" stroke="#000"/>'
        )
        self.parts.append(
            f'<text x="{(x0 + x1) / 2:.1f}" y="{self.height - 12}" text-anchor="middle">'
            f"{escape(self.x_label)}</text>"
            f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{escape(self.y_label)}</text>'
        )

    def hline(self, v: float, color: str = "#000", dash: str | None = None) -> None:
        top, right, bottom, left = self.margin
        d = f' stroke-dasharray="{dash}"' if dash else ""
        yy = _f(self.y(v))
        self.parts.append(
            f'<line x1="{left}" y1="{yy}" x2="{self.width - right}" y2="{yy}" '
            f'stroke="{color}"{d}/>'
        )

    def line(self, xs, ys, label: str, color: str, dash: str | None = None,
             marker: bool = True) -> None:
        pts = " ".join(f"{_f(self.x(a))},{_f(self.y(b))}" for a, b in zip(xs, ys))
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"{d}/>'
        )
        if marker:
            for a, b in zip(xs, ys):
                self.parts.append(
                    f'<circle cx="{_f(self.x(a))}" cy="{_f(self.y(b))}" r="3" fill="{color}"/>'
                )
        self.legend.append((label, color, dash or ""))

    def error_bars(self, xs, lows, highs, color: str) -> None:
        for a, lo, hi in zip(xs, lows, highs):
            xx = self.x(a)
            self.parts.append(
                f'<path d="M{_f(xx)},{_f(self.y(lo))}V{_f(self.y(hi))}'
                f"M{_f(xx - 4)},{_f(self.y(lo))}H{_f(xx + 4)}"
                f'M{_f(xx - 4)},{_f(self.y(hi))}H{_f(xx + 4)}" stroke="{color}" fill="none"/>'
            )

    def box(self, xc: float, half_width_px: float, stats: dict, color: str) -> None:
        """Tukey box: quartiles, median, whiskers and outlier points."""
        xx = self.x(xc)
        q1, q3 = self.y(stats["q1"]), self.y(stats["q3"])
        self.parts.append(
            f'<rect x="{_f(xx - half_width_px)}" y="{_f(q3)}" width="{_f(2 * half_width_px)}" '
            f'height="{_f(max(q1 - q3, 0.5))}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>'
            f'<line x1="{_f(xx - half_width_px)}" y1="{_f(self.y(stats["median"]))}" '
            f'x2="{_f(xx + half_width_px)}" y2="{_f(self.y(stats["median"]))}" stroke="#000"/>'
            f'<path d="M{_f(xx)},{_f(q3)}V{_f(self.y(stats["whisker_high"]))}'
            f'M{_f(xx)},{_f(q1)}V{_f(self.y(stats["whisker_low"]))}" stroke="{color}"/>'
        )
        for v in stats.get("outlier_values", ()):
            self.parts.append(
                f'<circle cx="{_f(xx)}" cy="{_f(self.y(v))}" r="2" fill="none" stroke="{color}"/>'
            )

    def add_legend(self, label: str, color: str, dash: str = "") -> None:
        self.legend.append((label, color, dash))

    def render(self) -> str:
        top, right, bottom, left = self.margin
        lx = self.width - right + 12
        legend = []
        for i, (label, color, dash) in enumerate(self.legend):
            ly = top + 14 + 18 * i
            d = f' stroke-dasharray="{dash}"' if dash else ""
            legend.append(
                f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
                f'stroke-width="2"{d}/>'
                f'<text x="{lx + 26}" y="{ly}" dominant-baseline="middle">{escape(label)}</text>'
            )
        body = "\n".join(self.parts + legend)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}" '
            'font-family="sans-serif" font-size="11">\n'
            f'<rect width="{self.width}" height="{self.height}" fill="#fff"/>\n'
            f'<text x="{self.width / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
            f"{escape(self.title)}</text>\n{body}\n</svg>\n"
        )
