"""Two-node RC model of a building heated through a district heating substation.

States are the indoor temperature ``T_in`` and the heating-system water
temperature ``T_hs``.  Heat flows:

    q_ext = (T_in - T_ext) / R_ext        interior -> exterior
    q_hs  = (T_hs - T_in) / R_hs          heating system -> interior

    C_in dT_in/dt = q_hs - q_ext
    C_hs dT_hs/dt = -q_hs + eta * P

with the extracted load ``P`` given by the local proportional loop minus the
deficit share handed down by the coordinator:

    P = max(0, k_p (a0 + a1 T_ext - T_hs)) - deficit_share

Units: R in degC/kW, C in kJ/degC, P in kW, so time is in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import expm

# Real-axis stability bound of classical RK4 (|lambda * dt| must stay below it).
RK4_STABILITY_LIMIT = 2.785


class RegimeError(ValueError):
    """The requested stationary point lies outside the unclamped regime."""


@dataclass(frozen=True)
class UnitParams:
    """Physical and controller constants of one building.

    Parameters
    ----------
    R_ext, R_hs : float
        Thermal resistances interior/exterior and heating-system/interior (degC/kW).
    C_in, C_hs : float
        Thermal capacitances of the interior and of the heating water (kJ/degC).
    eta : float
        Heat-exchanger efficiency, ``0 < eta <= 1``.
    k_p : float
        Proportional gain of the local controller (kW/degC).
    a0, a1 : float
        Heating-curve intercept (degC) and slope.
    unit_id : str
        Opaque identifier used in reports.
    """

    R_ext: float
    R_hs: float
    C_in: float
    C_hs: float
    eta: float
    k_p: float
    a0: float = 0.0
    a1: float = 0.0
    unit_id: str = field(default="", compare=False)

    def __post_init__(self):
        for name in ("R_ext", "R_hs", "C_in", "C_hs", "k_p"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"unit {self.unit_id!r}: {name} must be > 0, got {value}")
        if not (0 < self.eta <= 1):
            raise ValueError(f"unit {self.unit_id!r}: eta must be in (0, 1], got {self.eta}")
        if not (math.isfinite(self.a0) and math.isfinite(self.a1)):
            raise ValueError(f"unit {self.unit_id!r}: a0 and a1 must be finite")

    @property
    def gain_term(self) -> float:
        """``k_p * (1 - a1)``, the per-unit factor used by the gain-based strategies."""
        return self.k_p * (1.0 - self.a1)

    def as_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "R_ext": self.R_ext,
            "R_hs": self.R_hs,
            "C_in": self.C_in,
            "C_hs": self.C_hs,
            "eta": self.eta,
            "k_p": self.k_p,
            "a0": self.a0,
            "a1": self.a1,
        }


@dataclass(frozen=True)
class UnitState:
    T_in: float
    T_hs: float

    def __post_init__(self):
        if not (math.isfinite(self.T_in) and math.isfinite(self.T_hs)):
            raise ValueError(f"non-finite unit state ({self.T_in}, {self.T_hs})")

    def as_array(self) -> np.ndarray:
        return np.array([self.T_in, self.T_hs])


@dataclass(frozen=True)
class UnitInputs:
    """Exogenous inputs held constant over one step.

    ``held_load`` switches off the local feedback: the extracted load is then
    the given constant (used for clamped controllers and sampled feedback).
    """

    T_ext: float
    deficit_share: float = 0.0
    held_load: Optional[float] = None

    def __post_init__(self):
        if self.deficit_share < 0:
            raise ValueError(f"deficit_share must be >= 0, got {self.deficit_share}")


@dataclass(frozen=True)
class SteadyState:
    T_in0: float
    T_hs0: float
    P0: float


def heat_flow_ext(state: UnitState, T_ext: float, p: UnitParams) -> float:
    """Heat lost from the interior to the exterior (kW)."""
    return (state.T_in - T_ext) / p.R_ext


def heat_flow_hs(state: UnitState, p: UnitParams) -> float:
    """Heat delivered by the heating system to the interior (kW)."""
    return (state.T_hs - state.T_in) / p.R_hs


def extracted_load(state: UnitState, inputs: UnitInputs, p: UnitParams) -> float:
    if inputs.held_load is not None:
        return inputs.held_load
    desired = p.k_p * (p.a0 + p.a1 * inputs.T_ext - state.T_hs)
    return max(0.0, desired) - inputs.deficit_share


def derivatives(state: UnitState, inputs: UnitInputs, p: UnitParams) -> tuple[float, float]:
    """Time derivatives ``(dT_in/dt, dT_hs/dt)`` in degC/s."""
    q_hs = heat_flow_hs(state, p)
    q_ext = heat_flow_ext(state, inputs.T_ext, p)
    P = extracted_load(state, inputs, p)
    return (q_hs - q_ext) / p.C_in, (-q_hs + p.eta * P) / p.C_hs


def closed_loop_system(p: UnitParams, held: bool = False):
    """Affine form ``dx/dt = A x + B u + c`` with ``x = (T_in, T_hs)``.

    ``u = (T_ext, deficit_share)`` for the feedback regime.  With ``held=True``
    the proportional loop is open and ``u = (T_ext, held_load)``.
    """
    A = np.array(
        [
            [-(1.0 / p.R_hs + 1.0 / p.R_ext) / p.C_in, 1.0 / (p.R_hs * p.C_in)],
            [1.0 / (p.R_hs * p.C_hs), -1.0 / (p.R_hs * p.C_hs)],
        ]
    )
    B = np.zeros((2, 2))
    B[0, 0] = 1.0 / (p.R_ext * p.C_in)
    c = np.zeros(2)
    if held:
        B[1, 1] = p.eta / p.C_hs
    else:
        A[1, 1] -= p.eta * p.k_p / p.C_hs
        B[1, 0] = p.eta * p.k_p * p.a1 / p.C_hs
        B[1, 1] = -p.eta / p.C_hs
        c[1] = p.eta * p.k_p * p.a0 / p.C_hs
    return A, B, c


def zoh_matrices(A: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact discretisation of ``dx/dt = A x + b`` under a held ``b``.

    Returns ``(Phi, Gamma)`` with ``x(t + dt) = Phi x(t) + Gamma b``, where
    ``Phi = exp(A dt)`` and ``Gamma = int_0^dt exp(A s) ds``.
    """
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = np.eye(n)
    E = expm(M * dt)
    return E[:n, :n], E[:n, n:]


def foh_matrices(A: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact discretisation of ``dx/dt = A x + b0 + b1 t`` (input ramping linearly).

    Returns ``(Phi, Gamma, Lambda)`` with
    ``x(dt) = Phi x(0) + Gamma b0 + Lambda b1``.
    """
    n = A.shape[0]
    M = np.zeros((3 * n, 3 * n))
    M[:n, :n] = A
    M[:n, n:2 * n] = np.eye(n)
    M[n:2 * n, 2 * n:] = np.eye(n)
    E = expm(M * dt)
    return E[:n, :n], E[:n, n:2 * n], E[:n, 2 * n:]


@lru_cache(maxsize=256)
def _unit_zoh(p: UnitParams, dt: float, held: bool):
    A, B, c = closed_loop_system(p, held=held)
    Phi, Gamma = zoh_matrices(A, dt)
    return B, c, Phi, Gamma


def step(
    state: UnitState,
    inputs: UnitInputs,
    dt: float,
    p: UnitParams,
    method: str = "exact-ZOH",
) -> UnitState:
    """Advance one unit by ``dt`` seconds with inputs held.

    ``exact-ZOH`` integrates the linear closed loop analytically and is stable
    for any ``dt``.  Whether the proportional output is clamped at zero is
    decided at the start of the step and kept for the whole step.

    ``rk4`` is a validation integrator.  The fast heating-system mode has time
    constant ``C_hs / (eta k_p + 1/R_hs)`` (about 0.2 s for typical
    parameters), so it needs ``dt`` well below a second; a ``dt`` outside the
    RK4 stability region raises ``ValueError``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if method == "rk4":
        return _step_rk4(state, inputs, dt, p)
    if method != "exact-ZOH":
        raise ValueError(f"unknown integration method {method!r}")

    held = inputs.held_load is not None
    if held:
        u1 = inputs.held_load
    elif p.k_p * (p.a0 + p.a1 * inputs.T_ext - state.T_hs) < 0:
        held = True
        u1 = -inputs.deficit_share
    else:
        u1 = inputs.deficit_share
    B, c, Phi, Gamma = _unit_zoh(p, float(dt), held)
    b = B @ np.array([inputs.T_ext, u1]) + c
    x = Phi @ state.as_array() + Gamma @ b
    return UnitState(float(x[0]), float(x[1]))


def _step_rk4(state: UnitState, inputs: UnitInputs, dt: float, p: UnitParams) -> UnitState:
    fastest = p.eta * p.k_p / p.C_hs + 1.0 / (p.R_hs * p.C_hs)
    if dt * fastest > RK4_STABILITY_LIMIT:
        raise ValueError(
            f"rk4 unstable for dt={dt} s: need dt < {RK4_STABILITY_LIMIT / fastest:.3g} s"
        )

    def f(x):
        return np.array(derivatives(UnitState(x[0], x[1]), inputs, p))

    x = state.as_array()
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return UnitState(float(x[0]), float(x[1]))


def steady_state(p: UnitParams, T_ext0: float, w: float = 0.0, P_sat0: float = 0.0) -> SteadyState:
    """Stationary point of the closed loop under constant outdoor temperature and deficit.

    Raises
    ------
    RegimeError
        If the stationary load would be negative (the controller output would
        be clamped, so the linear solution does not apply).
    """
    gain = p.k_p * p.eta
    denom = 1.0 + gain * p.R_hs + gain * p.R_ext
    numer = (
        (1.0 + gain * p.R_hs + gain * p.a1 * p.R_ext) * T_ext0
        + p.R_ext * gain * p.a0
        - p.R_ext * p.eta * w * P_sat0
    )
    T_in0 = numer / denom
    P0 = (T_in0 - T_ext0) / (p.eta * p.R_ext)
    if P0 < 0:
        raise RegimeError(
            f"unit {p.unit_id!r}: stationary load {P0:.4g} kW < 0 at T_ext={T_ext0}"
        )
    T_hs0 = T_in0 + p.R_hs * p.eta * P0
    return SteadyState(T_in0, T_hs0, P0)
