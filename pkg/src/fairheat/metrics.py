"""Discomfort and heat-consumption metrics, and cross-strategy comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

COVERAGE_TOL = 1e-9


class CoverageError(ValueError):
    pass


@dataclass
class Metrics:
    discomfort: list  # degC*h per unit
    consumption: list  # MWh per unit
    max_deviation: list  # degC per unit
    clamp_count: list
    unit_ids: list = field(default_factory=list)

    @property
    def total_discomfort(self) -> float:
        return math.fsum(self.discomfort)

    @property
    def total_consumption(self) -> float:
        return math.fsum(self.consumption)

    def to_dict(self) -> dict:
        return {
            "unit_ids": list(self.unit_ids),
            "discomfort_Ch": list(self.discomfort),
            "total_discomfort_Ch": self.total_discomfort,
            "consumption_MWh": list(self.consumption),
            "total_consumption_MWh": self.total_consumption,
            "max_deviation_C": list(self.max_deviation),
            "clamp_count": list(self.clamp_count),
        }


def _window(t, y, t0, t_end):
    """Restrict a piecewise-linear series to ``[t0, t_end]``, interpolating the ends."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 2 or t_end < t0:
        raise CoverageError("need at least two samples and t_end >= t0")
    if t[0] > t0 + COVERAGE_TOL or t[-1] < t_end - COVERAGE_TOL:
        raise CoverageError(f"series covers [{t[0]}, {t[-1]}] h, need [{t0}, {t_end}] h")
    inner = (t > t0) & (t < t_end)
    tt = np.concatenate(([t0], t[inner], [t_end]))
    yy = np.concatenate(([np.interp(t0, t, y)], y[inner], [np.interp(t_end, t, y)]))
    return tt, yy


def abs_integral(t, e) -> float:
    """Exact integral of ``|e|`` for ``e`` linear between samples.

    Segments whose end values have equal sign reduce to the trapezoid rule;
    a sign change inside a segment is split at the zero crossing.
    """
    h = np.diff(t)
    e0, e1 = e[:-1], e[1:]
    a0, a1 = np.abs(e0), np.abs(e1)
    same = e0 * e1 >= 0
    total = np.where(same, 0.5 * (a0 + a1) * h, 0.0)
    cross = ~same
    total[cross] = 0.5 * h[cross] * (a0[cross] ** 2 + a1[cross] ** 2) / (a0[cross] + a1[cross])
    return math.fsum(total)


def discomfort(t_h, T_in, T_c: float, t0: float, t_end: float) -> float:
    """Integrated absolute deviation from the comfort temperature (degC*h)."""
    tt, yy = _window(t_h, T_in, t0, t_end)
    return abs_integral(tt, T_c - yy)


def consumption(t_h, P, t0: float = None, t_end: float = None) -> float:
    """Extracted heat (MWh) from a load series in kW, trapezoidal in time."""
    t_h = np.asarray(t_h, dtype=float)
    t0 = t_h[0] if t0 is None else t0
    t_end = t_h[-1] if t_end is None else t_end
    tt, yy = _window(t_h, P, t0, t_end)
    return math.fsum(0.5 * (yy[:-1] + yy[1:]) * np.diff(tt)) / 1000.0


def summarize(result) -> Metrics:
    n = len(result.unit_ids)
    clamps = [0] * n
    for event in result.clamp_events:
        clamps[event.unit] += 1
    return Metrics(
        discomfort=[
            discomfort(result.t_h, result.T_in[i], result.T_c, result.t0, result.t_end)
            for i in range(n)
        ],
        consumption=[consumption(result.t_h, result.P[i], result.t0, result.t_end) for i in range(n)],
        max_deviation=[float(np.max(np.abs(result.T_c - result.T_in[i]))) for i in range(n)],
        clamp_count=clamps,
        unit_ids=list(result.unit_ids),
    )


@dataclass
class ComparisonReport:
    unit_ids: list
    rows: dict  # strategy -> Metrics

    def fairness(self, name: str) -> dict:
        m = self.rows[name]
        total = m.total_discomfort
        share = [d / total if total > 0 else 0.0 for d in m.discomfort]
        lo, hi = min(m.discomfort), max(m.discomfort)
        ratio = hi / lo if lo > 0 else (1.0 if hi == 0 else math.inf)
        return {"discomfort_share": share, "max_min_ratio": ratio}

    def to_dict(self) -> dict:
        return {
            "unit_ids": list(self.unit_ids),
            "strategies": {
                name: {**m.to_dict(), **self._json_fairness(name)} for name, m in self.rows.items()
            },
        }

    def _json_fairness(self, name: str) -> dict:
        f = self.fairness(name)
        # an unbounded ratio (some unit with zero discomfort) has no JSON number
        if math.isinf(f["max_min_ratio"]):
            f["max_min_ratio"] = None
        return f

    def to_text(self) -> str:
        ids = [str(u) for u in self.unit_ids]
        blocks = []
        for title, attr, total in (
            ("Discomfort (degC h)", "discomfort", "total_discomfort"),
            ("Heat consumption (MWh)", "consumption", "total_consumption"),
        ):
            header = [title] + [f"unit {u}" for u in ids] + ["total"]
            lines = [header]
            for name, m in self.rows.items():
                vals = getattr(m, attr)
                lines.append([name] + [_fmt(v) for v in vals] + [_fmt(getattr(m, total))])
            blocks.append(_align(lines))
        header = ["Fairness"] + [f"share {u}" for u in ids] + ["max/min"]
        lines = [header]
        for name in self.rows:
            f = self.fairness(name)
            lines.append(
                [name] + [f"{s:.3f}" for s in f["discomfort_share"]] + [_fmt(f["max_min_ratio"])]
            )
        blocks.append(_align(lines))
        return "\n\n".join(blocks) + "\n"


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf"
    return f"{v:.4g}" if abs(v) < 1e-3 and v != 0 else f"{v:.4f}"


def _align(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    out = []
    for k, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [r[c].rjust(widths[c]) for c in range(1, len(r))]
        out.append("  ".join(cells).rstrip())
        if k == 0:
            out.append("-" * len(out[0]))
    return "\n".join(out)


def compare(results: Mapping[str, object]) -> ComparisonReport:
    """Per-unit discomfort and consumption for several runs of the same unit set."""
    if not results:
        raise ValueError("nothing to compare")
    items = list(results.items())
    ids = list(items[0][1].unit_ids)
    horizon = (items[0][1].t0, items[0][1].t_end)
    for name, r in items[1:]:
        if list(r.unit_ids) != ids:
            raise ValueError(f"result {name!r} has units {list(r.unit_ids)}, expected {ids}")
        if (r.t0, r.t_end) != horizon:
            raise ValueError(f"result {name!r} covers a different horizon")
    return ComparisonReport(ids, {name: r.metrics for name, r in items})
