"""Local substation controller: heating curve plus proportional load request."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .thermal import UnitParams

# Relative tolerance on the well-tuned identity, scaled by 1 + k_p eta R_hs.
WELL_TUNED_RTOL = 1e-9


class NotWellTunedError(ValueError):
    pass


@dataclass(frozen=True)
class ControlOutput:
    T_hs_ref: float
    P_tilde: float
    clamped: bool = False


def feedforward(T_ext: float, p: UnitParams) -> float:
    """Heating-system setpoint from the heating curve."""
    return p.a0 + p.a1 * T_ext


def desired_load(T_hs: float, T_hs_ref: float, p: UnitParams) -> ControlOutput:
    raw = p.k_p * (T_hs_ref - T_hs)
    if raw < 0:
        return ControlOutput(T_hs_ref, 0.0, True)
    return ControlOutput(T_hs_ref, raw, False)


def control(T_hs: float, T_ext: float, p: UnitParams) -> ControlOutput:
    return desired_load(T_hs, feedforward(T_ext, p), p)


def well_tuned_residual(p: UnitParams) -> float:
    """``1 + k_p eta R_hs + k_p eta a1 R_ext``; zero when outdoor temperature
    has no effect on the stationary indoor temperature."""
    gain = p.k_p * p.eta
    return 1.0 + gain * p.R_hs + gain * p.a1 * p.R_ext


def is_well_tuned(p: UnitParams, rtol: float = WELL_TUNED_RTOL) -> bool:
    scale = 1.0 + p.k_p * p.eta * p.R_hs
    return abs(well_tuned_residual(p)) <= rtol * scale


def tune_a1(p: UnitParams) -> float:
    """Heating-curve slope that zeroes :func:`well_tuned_residual`."""
    return -(1.0 + p.k_p * p.eta * p.R_hs) / (p.k_p * p.eta * p.R_ext)


def tune_a0(p: UnitParams, T_c: float) -> float:
    """Heating-curve intercept placing the stationary indoor temperature at ``T_c``.

    ``p.a1`` must already be well tuned, otherwise the stationary temperature
    would still depend on the outdoor temperature.
    """
    if not is_well_tuned(p):
        raise NotWellTunedError(
            f"unit {p.unit_id!r}: a1={p.a1} is not well tuned "
            f"(residual {well_tuned_residual(p):.6g}); call tune_a1 first"
        )
    gain = p.k_p * p.eta
    return T_c * (1.0 + gain * p.R_hs + gain * p.R_ext) / (p.R_ext * gain)


def tuned(p: UnitParams, T_c: float) -> UnitParams:
    """Copy of ``p`` with both heating-curve coefficients retuned for ``T_c``."""
    q = dataclasses.replace(p, a1=tune_a1(p))
    return dataclasses.replace(q, a0=tune_a0(q, T_c))
