"""Deterministic time-stepping loop coupling the units through coordination rounds.

At every round instant each unit computes its desired load from its current
heating-system temperature, the coordinator allocates the deficit, and the
whole network is advanced to the next round with the exact zero-order-hold
solution of the resulting linear system.  Inside an interval every unit runs
one of three load laws, fixed at the round instant:

``held``
    the load is a constant (controller output clamped at zero, or sampled
    feedback);
``local``
    proportional feedback minus a constant deficit share;
``coupled``
    proportional feedback minus the unit's weighted share of the *live*
    deficit, so the group of coupled units keeps drawing exactly the budget
    it was allocated at the round instant.

The outdoor temperature ramps linearly between its values at consecutive
round instants (the weather series is piecewise linear anyway), and a
controller whose output was clamped at zero switches back to feedback at the
exact instant its output turns positive again.

``deficit_tracking="held"`` replaces ``coupled`` by ``local`` with the share
frozen at the round value.  The proportional loop then re-absorbs almost all
of that share within a fraction of a second, which is why ``live`` is the
default.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import metrics as _metrics
from .coordination import allocate, compute_deficit, compute_weights, share_weights
from .scenario import Scenario, ScenarioError
from .thermal import RegimeError, foh_matrices, steady_state
from .weather import sample_weather

SECONDS_PER_HOUR = 3600.0
_TIME_TOL = 1e-6  # seconds


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClampEvent:
    t_h: float
    unit: int
    kind: str  # "desired_load" or "allocation"


@dataclass
class SimulationResult:
    scenario_name: str
    unit_ids: list
    T_c: float
    t0: float
    t_end: float
    t_h: np.ndarray
    T_in: np.ndarray  # (units, samples)
    T_hs: np.ndarray
    P_tilde: np.ndarray
    P: np.ndarray
    P_sat: np.ndarray
    clamp_events: list
    rounds: int
    weights: np.ndarray
    metrics: _metrics.Metrics = None

    @property
    def sum_P_tilde(self) -> np.ndarray:
        return self.P_tilde.sum(axis=0)

    @property
    def sum_P(self) -> np.ndarray:
        return self.P.sum(axis=0)

    def summary(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "t0_h": self.t0,
            "t_end_h": self.t_end,
            "T_c_C": self.T_c,
            "rounds": self.rounds,
            "weights": self.weights.tolist(),
            "clamp_events": len(self.clamp_events),
            "metrics": self.metrics.to_dict(),
        }

    def write(self, out_dir) -> list[Path]:
        """Write per-unit CSVs, the round CSV and ``summary.json`` into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        t = self.t_h.tolist()
        for i, uid in enumerate(self.unit_ids):
            path = out / f"unit_{uid}.csv"
            rows = zip(t, self.T_in[i].tolist(), self.T_hs[i].tolist(),
                       self.P_tilde[i].tolist(), self.P[i].tolist())
            _write_csv(path, ("t_h", "T_in_C", "T_hs_C", "P_tilde_kW", "P_kW"), rows)
            written.append(path)
        path = out / "rounds.csv"
        rows = zip(t, self.P_sat.tolist(), self.sum_P_tilde.tolist(), self.sum_P.tolist())
        _write_csv(path, ("t_h", "P_sat_kW", "sum_P_tilde_kW", "sum_P_kW"), rows)
        written.append(path)
        path = out / "summary.json"
        path.write_text(json.dumps(self.summary(), indent=2) + "\n", encoding="utf-8")
        written.append(path)
        return written


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) for v in row])


class _Network:
    """Block-diagonal thermal model of all units plus the interval load laws.

    Inside an interval the outdoor temperature ramps linearly between its
    values at the two round instants, so every forcing term is ``b0 + b1 tau``.
    """

    def __init__(self, units, weights):
        self.units = units
        self.n = n = len(units)
        self.weights = weights
        self.k = np.array([u.k_p for u in units])
        self.a0 = np.array([u.a0 for u in units])
        self.a1 = np.array([u.a1 for u in units])
        self.eta_over_C = np.array([u.eta / u.C_hs for u in units])
        self.ext_coeff = np.array([1.0 / (u.R_ext * u.C_in) for u in units])
        A = np.zeros((2 * n, 2 * n))
        for i, u in enumerate(units):
            a, b = 2 * i, 2 * i + 1
            A[a, a] = -(1.0 / u.R_hs + 1.0 / u.R_ext) / u.C_in
            A[a, b] = 1.0 / (u.R_hs * u.C_in)
            A[b, a] = 1.0 / (u.R_hs * u.C_hs)
            A[b, b] = -1.0 / (u.R_hs * u.C_hs)
        self.A_thermal = A
        self._laws = {}
        self._prop = {}

    def law(self, kinds: tuple):
        """``(G, A, v)`` for the load law ``P = G x + c`` selected by ``kinds``."""
        cached = self._laws.get(kinds)
        if cached is not None:
            return cached
        n = self.n
        members = [i for i, kind in enumerate(kinds) if kind == "coupled"]
        v = np.zeros(n)
        if members:
            for i, share in share_weights(self.weights, members).items():
                v[i] = share
        G = np.zeros((n, 2 * n))
        for i, kind in enumerate(kinds):
            if kind == "held":
                continue
            G[i, 2 * i + 1] = -self.k[i]
            if kind == "coupled":
                for j in members:
                    G[i, 2 * j + 1] += v[i] * self.k[j]
        A = self.A_thermal.copy()
        A[1::2, :] += self.eta_over_C[:, None] * G
        self._laws[kinds] = (G, A, v)
        return G, A, v

    def propagator(self, kinds: tuple, dt: float, cache: bool = True):
        key = (kinds, dt)
        found = self._prop.get(key)
        if found is None:
            found = foh_matrices(self.law(kinds)[1], dt)
            if cache:
                self._prop[key] = found
        return found

    def desired(self, x, T_ext):
        return self.k * (self.a0 + self.a1 * T_ext - x[1::2])

    def offsets(self, kinds, T_ext, held, share, budget):
        v = self.law(kinds)[2]
        f = self.k * (self.a0 + self.a1 * T_ext)
        c = np.empty(self.n)
        coupled_f = math.fsum(f[i] for i, kind in enumerate(kinds) if kind == "coupled")
        for i, kind in enumerate(kinds):
            if kind == "held":
                c[i] = held[i]
            elif kind == "local":
                c[i] = f[i] - share[i]
            else:
                c[i] = f[i] - v[i] * (coupled_f - budget)
        return c


@dataclass
class _Interval:
    """Load law and forcing of one coordination interval, ``tau`` from its start."""

    kinds: tuple
    T0: float
    slope: float  # degC/s
    held: np.ndarray
    share: np.ndarray
    budget: float
    clamp_release: set  # units held only because their controller output clamped
    net: "_Network"

    def __post_init__(self):
        self.refresh()

    def refresh(self):
        net = self.net
        c0 = net.offsets(self.kinds, self.T0, self.held, self.share, self.budget)
        c1 = net.offsets(self.kinds, self.T0 + 1.0, self.held, self.share, self.budget) - c0
        self.c0, self.c1 = c0, c1 * self.slope
        self.b0 = np.empty(2 * net.n)
        self.b1 = np.empty(2 * net.n)
        self.b0[0::2] = net.ext_coeff * self.T0
        self.b1[0::2] = net.ext_coeff * self.slope
        self.b0[1::2] = net.eta_over_C * self.c0
        self.b1[1::2] = net.eta_over_C * self.c1

    def T_ext(self, tau):
        return self.T0 + self.slope * tau

    def advance(self, x, tau, dt, cache=True):
        Phi, Gamma, Lam = self.net.propagator(self.kinds, dt, cache)
        return Phi @ x + Gamma @ (self.b0 + self.b1 * tau) + Lam @ self.b1

    def loads(self, x, tau):
        G = self.net.law(self.kinds)[0]
        return G @ x + self.c0 + self.c1 * tau

    def release_time(self, x, tau, horizon):
        """Earliest ``(dt, unit)`` at which a clamped controller output turns positive."""
        best = None
        net = self.net
        for i in sorted(self.clamp_release):
            def raw(d, i=i):
                y = self._unit_advance(i, x, tau, d)
                return net.k[i] * (net.a0[i] + net.a1[i] * self.T_ext(tau + d) - y[1])

            if raw(0.0) >= 0:
                return 0.0, i
            if raw(horizon) < 0:
                continue
            d = brentq(raw, 0.0, horizon, xtol=1e-9)
            if best is None or d < best[0]:
                best = (d, i)
        return best

    def _unit_advance(self, i, x, tau, d):
        sl = slice(2 * i, 2 * i + 2)
        y = x[sl]
        if d == 0:
            return y
        A = self.net.law(self.kinds)[1][sl, sl]
        Phi, Gamma, Lam = foh_matrices(A, d)
        return Phi @ y + Gamma @ (self.b0[sl] + self.b1[sl] * tau) + Lam @ self.b1[sl]

    def release(self, i):
        kinds = list(self.kinds)
        kinds[i] = "local"
        self.kinds = tuple(kinds)
        self.share = self.share.copy()
        self.share[i] = 0.0
        self.clamp_release = self.clamp_release - {i}
        self.refresh()


def _initial_state(scenario: Scenario, units, T_ext0: float) -> np.ndarray:
    x = np.empty(2 * len(units))
    if scenario.initial_state == "auto":
        for i, u in enumerate(units):
            try:
                ss = steady_state(u, T_ext0)
            except RegimeError as exc:
                raise ScenarioError(f"{exc}; give an explicit initial_state") from None
            x[2 * i], x[2 * i + 1] = ss.T_in0, ss.T_hs0
    else:
        for i, (T_in, T_hs) in enumerate(scenario.initial_state):
            x[2 * i], x[2 * i + 1] = float(T_in), float(T_hs)
    return x


def _stale_schedule(scenario: Scenario, dt: float) -> dict:
    stale: dict[int, set] = {}
    for entry in scenario.broadcast_loss:
        first = max(0, math.ceil((entry["t_h"] - scenario.t0) * SECONDS_PER_HOUR / dt - 1e-9))
        for k in range(first, first + int(entry["rounds"])):
            stale.setdefault(k, set()).add(int(entry["unit"]))
    return stale


def _output_times(total_s: float, step_s: float) -> np.ndarray:
    count = int(math.floor(total_s / step_s + 1e-9))
    times = np.arange(count + 1) * step_s
    if total_s - times[-1] > _TIME_TOL:
        times = np.append(times, total_s)
    return times


def _hours(scenario: Scenario, out_s: np.ndarray) -> np.ndarray:
    t_h = scenario.t0 + out_s / SECONDS_PER_HOUR
    t_h[-1] = scenario.t_end
    return t_h


def run(scenario: Scenario) -> SimulationResult:
    """Simulate ``scenario``; identical scenarios give bit-identical results."""
    units = scenario.effective_units()
    n = len(units)
    weights = compute_weights(scenario.strategy, units)
    net = _Network(units, weights)
    weather = scenario.load_weather()

    dt = float(scenario.coordination_interval)
    total_s = (scenario.t_end - scenario.t0) * SECONDS_PER_HOUR
    n_rounds = max(1, math.ceil(total_s / dt - 1e-9))
    round_t_h = scenario.t0 + np.arange(n_rounds) * dt / SECONDS_PER_HOUR
    T_bounds = sample_weather(
        weather, np.append(round_t_h, scenario.t_end), hold_ends=scenario.weather_hold_ends
    )
    out_s = _output_times(total_s, scenario.output_interval * SECONDS_PER_HOUR)
    m = len(out_s)

    rec_T_in = np.empty((n, m))
    rec_T_hs = np.empty((n, m))
    rec_Pt = np.empty((n, m))
    rec_P = np.empty((n, m))
    rec_sat = np.empty(m)

    x = _initial_state(scenario, units, float(T_bounds[0]))
    stale_at = _stale_schedule(scenario, dt)
    last_sat = np.zeros(n)
    events: list[ClampEvent] = []
    sampled = scenario.feedback_mode == "sampled"
    live = scenario.deficit_tracking == "live"
    j = 0

    def record(idx, y, P_tilde, P, P_sat):
        rec_T_in[:, idx] = y[0::2]
        rec_T_hs[:, idx] = y[1::2]
        rec_Pt[:, idx] = P_tilde
        rec_P[:, idx] = P
        rec_sat[idx] = P_sat

    def record_between(idx, y, iv, tau, P_tilde_round, P_sat):
        P_tilde = np.maximum(net.desired(y, iv.T_ext(tau)), 0.0)
        for i, kind in enumerate(iv.kinds):
            if kind == "held":
                P_tilde[i] = P_tilde_round[i]
        record(idx, y, P_tilde, iv.loads(y, tau), P_sat)

    for k in range(n_rounds):
        s = k * dt
        e = min(s + dt, total_s)
        L = e - s
        t_h = float(round_t_h[k])
        T_ext = float(T_bounds[k])
        P_max = scenario.P_max_at(t_h)

        raw = net.desired(x, T_ext)
        ctrl_clamped = raw < 0
        P_tilde = np.where(ctrl_clamped, 0.0, raw)
        rnd = allocate(P_tilde, weights, compute_deficit(P_tilde, P_max),
                       scenario.allocation_mode, P_max)

        stale = stale_at.get(k, ())
        applied = rnd.P.copy()
        for i in range(n):
            if i in stale:
                applied[i] = max(0.0, P_tilde[i] - weights[i] * last_sat[i])
            else:
                last_sat[i] = rnd.P_sat
        for i in np.nonzero(ctrl_clamped)[0]:
            events.append(ClampEvent(t_h, int(i), "desired_load"))
        for i in rnd.clamp_events:
            if i not in stale:
                events.append(ClampEvent(t_h, int(i), "allocation"))

        kinds = []
        for i in range(n):
            if sampled or ctrl_clamped[i]:
                kinds.append("held")
            elif i in stale or rnd.P_sat == 0 or not live:
                kinds.append("local")
            elif applied[i] == 0 and P_tilde[i] > 0:
                kinds.append("held")
            else:
                kinds.append("coupled")
        members = [i for i, kind in enumerate(kinds) if kind == "coupled"]
        if members and scenario.allocation_mode == "clamp" and all(weights[i] == 0 for i in members):
            for i in members:
                kinds[i] = "local"
            members = []
        iv = _Interval(
            kinds=tuple(kinds),
            T0=T_ext,
            slope=(float(T_bounds[k + 1]) - T_ext) / L,
            held=applied,
            share=P_tilde - applied,
            budget=math.fsum(applied[i] for i in members),
            clamp_release=set() if sampled else {int(i) for i in np.nonzero(ctrl_clamped)[0]},
            net=net,
        )

        while j < m and out_s[j] <= s + _TIME_TOL:
            record(j, x, P_tilde, applied, rnd.P_sat)
            j += 1
        tau = 0.0
        regular = True  # step lengths repeat across intervals until a clamp release splits one
        while tau < L:
            is_output = j < m and out_s[j] < e - _TIME_TOL
            target = float(out_s[j] - s) if is_output else L
            if iv.clamp_release:
                found = iv.release_time(x, tau, target - tau)
                if found is not None:
                    d, unit = found
                    if d > 0:
                        x = iv.advance(x, tau, d, cache=False)
                        tau += d
                    iv.release(unit)
                    regular = False
                    continue
            x = iv.advance(x, tau, target - tau, cache=regular)
            tau = target
            if not np.all(np.isfinite(x)):
                bad = sorted({int(v) // 2 for v in np.nonzero(~np.isfinite(x))[0]})
                raise SimulationError(
                    f"non-finite state at t={scenario.t0 + (s + tau) / SECONDS_PER_HOUR:.6g} h, "
                    f"units {[units[i].unit_id for i in bad]}"
                )
            if is_output:
                record_between(j, x, iv, tau, P_tilde, rnd.P_sat)
                j += 1

    # the horizon end is reported like a round instant
    raw = net.desired(x, float(T_bounds[-1]))
    P_tilde = np.maximum(raw, 0.0)
    P_max = scenario.P_max_at(scenario.t_end)
    rnd = allocate(P_tilde, weights, compute_deficit(P_tilde, P_max), scenario.allocation_mode, P_max)
    while j < m:
        record(j, x, P_tilde, rnd.P, rnd.P_sat)
        j += 1

    result = SimulationResult(
        scenario_name=scenario.name,
        unit_ids=[u.unit_id for u in units],
        T_c=scenario.T_c,
        t0=scenario.t0,
        t_end=scenario.t_end,
        t_h=_hours(scenario, out_s),
        T_in=rec_T_in,
        T_hs=rec_T_hs,
        P_tilde=rec_Pt,
        P=rec_P,
        P_sat=rec_sat,
        clamp_events=events,
        rounds=n_rounds,
        weights=weights,
    )
    result.metrics = _metrics.summarize(result)
    return result
