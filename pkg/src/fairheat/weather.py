"""Outdoor temperature series: CSV ingestion, interpolation and a synthetic generator."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Union

import numpy as np

HEADER = ("time_h", "T_ext_C")
RAMP_H = 2.0


class WeatherError(ValueError):
    pass


@dataclass(frozen=True)
class WeatherSeries:
    """Outdoor temperatures sampled at strictly increasing times (hours)."""

    time_h: np.ndarray
    T_ext: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time_h, dtype=float)
        T = np.asarray(self.T_ext, dtype=float)
        if t.ndim != 1 or t.shape != T.shape:
            raise WeatherError("time and temperature columns must be 1-D and equally long")
        if len(t) < 2:
            raise WeatherError(f"need at least 2 samples, got {len(t)}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(T))):
            raise WeatherError("weather samples must be finite")
        bad = np.nonzero(np.diff(t) <= 0)[0]
        if len(bad):
            raise WeatherError(f"times must be strictly increasing (sample {bad[0] + 1})")
        object.__setattr__(self, "time_h", t)
        object.__setattr__(self, "T_ext", T)

    @property
    def start(self) -> float:
        return float(self.time_h[0])

    @property
    def end(self) -> float:
        return float(self.time_h[-1])

    def to_csv(self) -> str:
        lines = [",".join(HEADER)]
        lines += [f"{t!r},{T!r}" for t, T in zip(self.time_h.tolist(), self.T_ext.tolist())]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def load_weather_csv(source: Union[str, os.PathLike, io.TextIOBase]) -> WeatherSeries:
    """Parse a ``time_h,T_ext_C`` CSV.

    ``source`` is a path, an open text stream, or the CSV text itself (any
    string containing a newline is taken as content).
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise WeatherError(f"cannot read weather file {os.fspath(source)!r}: {exc}") from exc

    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != HEADER:
        raise WeatherError(f"expected header {','.join(HEADER)!r}")
    times, temps = [], []
    prev = -math.inf
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise WeatherError(f"row {lineno}: expected 2 fields, got {len(row)}")
        try:
            t, T = float(row[0]), float(row[1])
        except ValueError:
            raise WeatherError(f"row {lineno}: malformed number in {row!r}") from None
        if not (math.isfinite(t) and math.isfinite(T)):
            raise WeatherError(f"row {lineno}: non-finite value")
        if t <= prev:
            raise WeatherError(f"row {lineno}: time {t} does not increase (previous {prev})")
        prev = t
        times.append(t)
        temps.append(T)
    return WeatherSeries(np.array(times), np.array(temps))


def sample_weather(series: WeatherSeries, t, hold_ends: bool = False):
    """Piecewise-linear interpolation at ``t`` hours (scalar or array).

    Outside the sampled span a ``WeatherError`` is raised unless
    ``hold_ends`` is set, in which case the end values are held.
    """
    t_arr = np.asarray(t, dtype=float)
    if not hold_ends:
        lo, hi = np.min(t_arr), np.max(t_arr)
        if lo < series.start or hi > series.end:
            raise WeatherError(
                f"query time outside weather span [{series.start}, {series.end}] h"
            )
    out = np.interp(t_arr, series.time_h, series.T_ext)
    return float(out) if out.ndim == 0 else out


def _snap_profile(t: np.ndarray, start: float, stop: float) -> np.ndarray:
    """1 inside ``[start, stop]`` with raised-cosine ramps of RAMP_H at both edges."""
    ramp = min(RAMP_H, (stop - start) / 2.0)
    f = np.zeros_like(t)
    inside = (t >= start) & (t <= stop)
    f[inside] = 1.0
    if ramp > 0:
        up = inside & (t < start + ramp)
        f[up] = 0.5 * (1.0 - np.cos(np.pi * (t[up] - start) / ramp))
        down = inside & (t > stop - ramp)
        f[down] = 0.5 * (1.0 - np.cos(np.pi * (stop - t[down]) / ramp))
    return f


def synth_weather(
    base: float = -2.0,
    amplitude: float = 3.0,
    period: float = 24.0,
    depth: float = 10.0,
    snap: tuple = (72.0, 120.0),
    duration: float = 240.0,
) -> WeatherSeries:
    """Hourly synthetic outdoor temperature with a cold snap.

    ``base + amplitude * sin(2 pi t / period)`` minus ``depth`` inside the
    ``snap`` window, ramped smoothly over two hours at each edge.  Samples
    are taken at every whole hour from 0 to ``duration`` inclusive.
    """
    if not (duration > 0 and math.isfinite(duration)):
        raise WeatherError(f"duration must be > 0, got {duration}")
    if not period > 0:
        raise WeatherError(f"period must be > 0, got {period}")
    start, stop = (float(v) for v in snap)
    if not (0 <= start < stop):
        raise WeatherError(f"invalid snap window [{start}, {stop}]")
    t = np.arange(0.0, math.floor(duration) + 1.0)
    if t[-1] < duration:
        t = np.append(t, float(duration))
    T = base + amplitude * np.sin(2.0 * np.pi * t / period) - depth * _snap_profile(t, start, stop)
    return WeatherSeries(t, T)
