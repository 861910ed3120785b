import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairheat.control import (
    NotWellTunedError,
    control,
    desired_load,
    feedforward,
    is_well_tuned,
    tune_a0,
    tune_a1,
    tuned,
    well_tuned_residual,
)
from fairheat.thermal import UnitParams, steady_state

physical = st.builds(
    UnitParams,
    R_ext=st.floats(50, 400),
    R_hs=st.floats(50, 400),
    C_in=st.floats(200, 3000),
    C_hs=st.floats(5, 50),
    eta=st.floats(0.5, 1.0),
    k_p=st.floats(20, 300),
)


def test_feedforward(reference_units):
    u1, u2, _ = reference_units
    assert feedforward(0.0, u1) == 50.8
    assert feedforward(-10.0, u1) == pytest.approx(35.4, abs=1e-12)
    assert feedforward(10.0, u2) == pytest.approx(71.9, abs=1e-12)


class TestDesiredLoad:
    def test_zero_error(self, reference_units):
        out = desired_load(50.0, 50.0, reference_units[0])
        assert out.P_tilde == 0.0 and not out.clamped

    def test_proportional(self, reference_units):
        assert desired_load(49.0, 50.0, reference_units[0]).P_tilde == 100.0

    def test_clamped(self, reference_units):
        out = desired_load(51.0, 50.0, reference_units[0])
        assert out.P_tilde == 0.0 and out.clamped

    def test_control_chains_heating_curve(self, reference_units):
        out = control(30.0, -10.0, reference_units[0])
        assert out.T_hs_ref == pytest.approx(35.4)
        assert out.P_tilde == pytest.approx(540.0)

    @given(T_hs=st.floats(-50, 150), ref=st.floats(-50, 150))
    def test_non_negative_and_piecewise_linear(self, T_hs, ref):
        p = UnitParams(200, 270, 1000, 20, 0.9, 100)
        out = desired_load(T_hs, ref, p)
        assert out.P_tilde >= 0
        if not out.clamped:
            assert out.P_tilde == pytest.approx(p.k_p * (ref - T_hs))


class TestTuners:
    def test_tune_a1_reference_values(self, reference_units):
        assert tune_a1(reference_units[0]) == pytest.approx(-24301 / 18144, rel=1e-14)
        assert tune_a1(reference_units[2]) == pytest.approx(-50545 / 28818, rel=1e-14)

    def test_residual_of_printed_table(self, reference_units):
        assert well_tuned_residual(reference_units[0]) == pytest.approx(52242.76, rel=1e-12)
        assert well_tuned_residual(reference_units[1]) == pytest.approx(50582.8, rel=1e-12)
        assert not is_well_tuned(reference_units[0])

    def test_tune_a0_reference_value(self, reference_units):
        p = dataclasses.replace(reference_units[0], a1=tune_a1(reference_units[0]))
        expected = 20 * (1 + 24300 + 18144) / 18144
        assert tune_a0(p, 20.0) == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(46.79, abs=5e-3)

    def test_tune_a0_homogeneous(self, reference_units):
        p = dataclasses.replace(reference_units[1], a1=tune_a1(reference_units[1]))
        assert tune_a0(p, 0.0) == 0.0
        assert tune_a0(p, 40.0) == pytest.approx(2 * tune_a0(p, 20.0), rel=1e-15)

    def test_tune_a0_requires_tuned_slope(self, reference_units):
        with pytest.raises(NotWellTunedError):
            tune_a0(reference_units[0], 20.0)

    @settings(max_examples=300, deadline=None)
    @given(p=physical)
    def test_tune_a1_zeroes_residual_to_rounding(self, p):
        # the residual is a difference of terms of size 1 + k_p eta R_hs
        # so it can only vanish to a few ulps of that size
        q = dataclasses.replace(p, a1=tune_a1(p))
        assert abs(well_tuned_residual(q)) < 1e-12 * (1 + p.k_p * p.eta * p.R_hs)

    @settings(max_examples=100, deadline=None)
    @given(p=physical, T_c=st.floats(15, 25))
    def test_tuned_units_are_weather_independent(self, p, T_c):
        q = tuned(p, T_c)
        temps = [steady_state(q, T).T_in0 for T in np.linspace(-30, min(15, T_c - 1), 10)]
        assert max(abs(t - T_c) for t in temps) < 1e-9
