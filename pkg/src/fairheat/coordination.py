"""Central deficit computation and the deficit-weighting strategies.

One coordination round is two messages: every unit uploads its desired load,
the coordinator broadcasts the deficit ``P_sat = max(sum(P_tilde) - P_max, 0)``
and unit ``i`` lowers its load by ``w_i * P_sat``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import ControlOutput, is_well_tuned
from .thermal import UnitParams

WEIGHT_SUM_TOL = 1e-12
KINDS = ("skewed", "flat", "gain", "price", "explicit")
_ALIASES = {
    "gain-proportional": "gain",
    "price-proportional": "price",
    "uncoordinated": "skewed",
}


class StrategyError(ValueError):
    """A strategy is malformed or cannot be applied to the given units."""


class NotWellTunedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Strategy:
    kind: str
    lambdas: Optional[tuple] = None
    weights: Optional[tuple] = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise StrategyError(f"unknown strategy {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "price":
            if not self.lambdas:
                raise StrategyError("price strategy needs one lambda per unit")
            lam = tuple(float(v) for v in self.lambdas)
            bad = [i for i, v in enumerate(lam) if not (math.isfinite(v) and v > 0)]
            if bad:
                raise StrategyError(f"lambda must be > 0; offending units {bad}")
            object.__setattr__(self, "lambdas", lam)
        if kind == "explicit":
            if not self.weights:
                raise StrategyError("explicit strategy needs weights")
            w = tuple(float(v) for v in self.weights)
            if any(not (v >= 0) for v in w):
                raise StrategyError(f"explicit weights must be >= 0, got {w}")
            if abs(sum(w) - 1.0) > WEIGHT_SUM_TOL:
                raise StrategyError(f"explicit weights must sum to 1, got {sum(w)!r}")
            object.__setattr__(self, "weights", w)

    @classmethod
    def from_spec(cls, spec) -> "Strategy":
        """Build from a name (``"flat"``) or a mapping such as
        ``{"kind": "price", "lambda": [2, 2, 1]}``."""
        if isinstance(spec, Strategy):
            return spec
        if isinstance(spec, str):
            return cls(spec)
        spec = dict(spec)
        unknown = set(spec) - {"kind", "lambda", "weights"}
        if unknown:
            raise StrategyError(f"unknown strategy keys {sorted(unknown)}")
        lam = spec.get("lambda")
        w = spec.get("weights")
        return cls(spec["kind"], tuple(lam) if lam else None, tuple(w) if w else None)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.lambdas is not None:
            out["lambda"] = list(self.lambdas)
        if self.weights is not None:
            out["weights"] = list(self.weights)
        return out


@dataclass
class AllocationRound:
    P_tilde: np.ndarray
    P_max: float
    P_sat: float
    weights: np.ndarray
    P: np.ndarray
    clamp_events: list = field(default_factory=list)


def _proportional(terms: np.ndarray, units: Sequence[UnitParams]) -> np.ndarray:
    zero = [u.unit_id or i for i, (u, t) in enumerate(zip(units, terms)) if t == 0]
    if zero:
        raise StrategyError(f"k_p*(1-a1) is zero for units {zero}")
    signs = np.sign(terms)
    if not (np.all(signs > 0) or np.all(signs < 0)):
        neg = [u.unit_id or i for i, (u, s) in enumerate(zip(units, signs)) if s < 0]
        pos = [u.unit_id or i for i, (u, s) in enumerate(zip(units, signs)) if s > 0]
        raise StrategyError(
            f"k_p*(1-a1) has mixed signs (negative: {neg}, positive: {pos}); "
            "strategy not applicable"
        )
    return terms / terms.sum()


def compute_weights(strategy: Strategy, units: Sequence[UnitParams]) -> np.ndarray:
    n = len(units)
    if n < 1:
        raise StrategyError("need at least one unit")
    kind = strategy.kind
    if kind == "skewed":
        w = np.zeros(n)
        w[-1] = 1.0
        return w
    if kind == "flat":
        return np.full(n, 1.0 / n)
    if kind == "explicit":
        if len(strategy.weights) != n:
            raise StrategyError(f"{len(strategy.weights)} weights for {n} units")
        return np.array(strategy.weights)
    terms = np.array([u.gain_term for u in units])
    if kind == "price":
        if len(strategy.lambdas) != n:
            raise StrategyError(f"{len(strategy.lambdas)} lambdas for {n} units")
        terms = terms / np.array(strategy.lambdas)
    return _proportional(terms, units)


def compute_deficit(P_tilde: Sequence[float], P_max: float) -> float:
    total = math.fsum(P_tilde)
    if total > P_max:
        return total - P_max
    return 0.0


def _check_weights(weights: np.ndarray, n: int) -> None:
    if len(weights) != n:
        raise StrategyError(f"{len(weights)} weights for {n} units")
    if abs(math.fsum(weights) - 1.0) > WEIGHT_SUM_TOL:
        raise StrategyError(f"weights must sum to 1, got {math.fsum(weights)!r}")


def allocate(
    P_tilde: Sequence[float],
    weights: Sequence[float],
    P_sat: float,
    mode: str = "clamp",
    P_max: float = math.nan,
) -> AllocationRound:
    """Lower each desired load by its share of the deficit.

    ``clamp`` cuts negative allocations to zero (the unit cannot absorb its
    whole share, so the total may exceed ``P_max``).  ``redistribute`` fixes
    such units at zero and spreads what they could not absorb over the other
    units in proportion to their weights, repeating until every allocation
    is non-negative.  If every remaining unit has zero weight, the residual
    is split equally between them.
    """
    P_tilde = np.asarray(P_tilde, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = len(P_tilde)
    _check_weights(weights, n)
    if P_sat == 0:
        return AllocationRound(P_tilde.copy(), P_max, 0.0, weights, P_tilde.copy(), [])

    if mode == "clamp":
        raw = P_tilde - weights * P_sat
        clamped = [i for i in range(n) if raw[i] < 0]
        P = np.maximum(raw, 0.0)
        return AllocationRound(P_tilde.copy(), P_max, P_sat, weights, P, clamped)
    if mode != "redistribute":
        raise ValueError(f"unknown allocation mode {mode!r}")

    active = list(range(n))
    zeroed: list[int] = []
    residual = P_sat
    P = P_tilde.copy()
    for _ in range(n):
        shares = share_weights(weights, active)
        raw = {i: P_tilde[i] - shares[i] * residual for i in active}
        negative = [i for i in active if raw[i] < 0]
        if not negative:
            for i in active:
                P[i] = raw[i]
            break
        for i in negative:
            P[i] = 0.0
            residual -= P_tilde[i]
            zeroed.append(i)
        active = [i for i in active if i not in negative]
        if not active:
            break
    return AllocationRound(P_tilde.copy(), P_max, P_sat, weights, P, sorted(zeroed))


def share_weights(weights: np.ndarray, members: Sequence[int]) -> dict:
    """Weights renormalised over ``members``; equal shares if they all weigh zero."""
    mass = math.fsum(weights[i] for i in members)
    if mass > 0:
        return {i: weights[i] / mass for i in members}
    return {i: 1.0 / len(members) for i in members}


def coordination_round(
    outputs: Sequence[ControlOutput],
    P_max: float,
    weights: Sequence[float],
    mode: str = "clamp",
) -> AllocationRound:
    P_tilde = [o.P_tilde for o in outputs]
    return allocate(P_tilde, weights, compute_deficit(P_tilde, P_max), mode, P_max)


def predicted_deviation(p: UnitParams, w: float, P_sat0: float) -> float:
    """Stationary indoor-temperature shift caused by a constant deficit share.

    The closed form assumes a well-tuned heating curve; for other parameters
    the value is still returned but a :class:`NotWellTunedWarning` is issued.
    """
    if not is_well_tuned(p):
        warnings.warn(
            f"unit {p.unit_id!r} is not well tuned; predicted deviation is not exact",
            NotWellTunedWarning,
            stacklevel=2,
        )
    return -w * P_sat0 / p.gain_term
