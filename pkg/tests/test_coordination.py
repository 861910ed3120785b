import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fairheat.control import ControlOutput
from fairheat.coordination import (
    NotWellTunedWarning,
    Strategy,
    StrategyError,
    allocate,
    compute_deficit,
    compute_weights,
    coordination_round,
    predicted_deviation,
)
from fairheat.thermal import UnitParams, steady_state


def waterfill(P_tilde, weights, P_max):
    """Independent oracle for strictly positive weights.

    Bisects on the cut level ``mu`` so that sum(max(0, P_tilde - w mu)) = P_max.
    """
    P_tilde = np.asarray(P_tilde, float)
    weights = np.asarray(weights, float)
    if P_tilde.sum() <= P_max:
        return P_tilde.copy()

    def total(mu):
        return np.maximum(0.0, P_tilde - weights * mu).sum()

    lo, hi = 0.0, float(np.max(P_tilde / weights))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) > P_max:
            lo = mid
        else:
            hi = mid
    return np.maximum(0.0, P_tilde - weights * hi)


class TestWeights:
    def test_flat(self, reference_units):
        w = compute_weights(Strategy("flat"), reference_units)
        assert np.all(np.abs(w - 1 / 3) <= 1e-15)

    def test_skewed(self, reference_units):
        assert list(compute_weights(Strategy("skewed"), reference_units)) == [0, 0, 1]

    def test_gain(self, reference_units):
        w = compute_weights(Strategy("gain-proportional"), reference_units)
        np.testing.assert_allclose(w, np.array([54, 73, 176]) / 303, rtol=0, atol=1e-12)

    def test_price(self, reference_units):
        w = compute_weights(Strategy("price", (2, 2, 1)), reference_units)
        np.testing.assert_allclose(w, np.array([27, 36.5, 176]) / 239.5, rtol=0, atol=1e-12)
        np.testing.assert_allclose(w, [0.11273, 0.15240, 0.73486], atol=5e-6)

    def test_explicit(self, reference_units):
        w = compute_weights(Strategy("explicit", weights=(0.5, 0.25, 0.25)), reference_units)
        assert list(w) == [0.5, 0.25, 0.25]

    def test_mixed_signs_name_units(self, reference_units):
        units = [dataclasses.replace(reference_units[0], a1=-1.0), reference_units[1], reference_units[2]]
        with pytest.raises(StrategyError, match=r"negative: \['2', '3'\], positive: \['1'\]"):
            compute_weights(Strategy("gain"), units)

    def test_zero_term_rejected(self, reference_units):
        units = [dataclasses.replace(reference_units[0], a1=1.0)] + reference_units[1:]
        with pytest.raises(StrategyError, match="zero"):
            compute_weights(Strategy("gain"), units)

    @pytest.mark.parametrize("lam", [(1, 0, 1), (1, -2, 1), (1, math.nan, 1)])
    def test_bad_lambda(self, lam):
        with pytest.raises(StrategyError):
            Strategy("price", lam)

    def test_bad_explicit_weights(self):
        with pytest.raises(StrategyError):
            Strategy("explicit", weights=(0.5, 0.6))
        with pytest.raises(StrategyError):
            Strategy("explicit", weights=(1.5, -0.5))

    def test_unknown_kind(self):
        with pytest.raises(StrategyError):
            Strategy("greedy")

    def test_from_spec(self):
        s = Strategy.from_spec({"kind": "price", "lambda": [2, 2, 1]})
        assert s == Strategy("price", (2.0, 2.0, 1.0))
        assert Strategy.from_spec(s.to_dict()) == s
        assert Strategy.from_spec("uncoordinated").kind == "skewed"


units_st = st.lists(
    st.builds(
        UnitParams,
        R_ext=st.floats(50, 400),
        R_hs=st.floats(50, 400),
        C_in=st.floats(200, 3000),
        C_hs=st.floats(5, 50),
        eta=st.floats(0.5, 1.0),
        k_p=st.floats(1, 500),
        a1=st.floats(-5, 0.99),
    ),
    min_size=1,
    max_size=8,
)


class TestWeightProperties:
    @settings(max_examples=300, deadline=None)
    @given(units=units_st, kind=st.sampled_from(["skewed", "flat", "gain"]))
    def test_sum_to_one(self, units, kind):
        w = compute_weights(Strategy(kind), units)
        assert abs(math.fsum(w) - 1) <= 1e-12
        assert np.all((w >= 0) & (w <= 1))

    @settings(max_examples=300, deadline=None)
    @given(units=units_st, data=st.data())
    def test_price_scale_invariant(self, units, data):
        lam = data.draw(st.lists(st.floats(0.1, 10), min_size=len(units), max_size=len(units)))
        scale = data.draw(st.floats(0.01, 100))
        a = compute_weights(Strategy("price", tuple(lam)), units)
        b = compute_weights(Strategy("price", tuple(v * scale for v in lam)), units)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
        assert abs(math.fsum(a) - 1) <= 1e-12

    @settings(max_examples=200, deadline=None)
    @given(units=units_st, lam=st.floats(0.1, 10))
    def test_equal_prices_reduce_to_gain(self, units, lam):
        a = compute_weights(Strategy("price", (lam,) * len(units)), units)
        b = compute_weights(Strategy("gain"), units)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_identical_units_reduce_to_flat(self, reference_units):
        units = [reference_units[1]] * 5
        np.testing.assert_allclose(
            compute_weights(Strategy("gain"), units), compute_weights(Strategy("flat"), units), atol=1e-15
        )


class TestDeficit:
    def test_examples(self):
        assert compute_deficit([800, 700, 600], 2200) == 0
        assert compute_deficit([900, 800, 800], 2200) == 300
        assert compute_deficit([0, 0, 0], 0) == 0


class TestAllocate:
    def test_flat_example(self):
        r = allocate([900, 800, 800], [1 / 3] * 3, 300)
        np.testing.assert_allclose(r.P, [800, 700, 700])
        assert r.P.sum() == pytest.approx(2200)
        assert r.clamp_events == []

    def test_no_deficit_is_identity(self):
        r = allocate([5.0, 6.0], [0.5, 0.5], 0.0)
        assert list(r.P) == [5.0, 6.0]

    def test_clamp_logs_event(self):
        r = allocate([10, 800, 800], [1 / 3] * 3, 300)
        np.testing.assert_allclose(r.P, [0, 700, 700])
        assert r.clamp_events == [0]

    def test_redistribute_example(self):
        # unit 1 can only give 10 of its 100; the remaining 290 split 145/145
        r = allocate([10, 800, 800], [1 / 3] * 3, 300, mode="redistribute", P_max=1310)
        np.testing.assert_allclose(r.P, [0, 655, 655], rtol=1e-14)
        np.testing.assert_allclose(r.P, waterfill([10, 800, 800], [1 / 3] * 3, 1310), atol=1e-9)
        assert r.P.sum() == pytest.approx(1310)

    def test_weight_sum_violation(self):
        with pytest.raises(StrategyError):
            allocate([1, 2], [0.5, 0.6], 1.0)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            allocate([1, 2], [0.5, 0.5], 1.0, mode="magic")

    def test_round_single_unit(self):
        r = coordination_round([ControlOutput(50, 120.0)], 100.0, [1.0])
        assert r.P_sat == 20 and list(r.P) == [100.0]
        r = coordination_round([ControlOutput(50, 80.0)], 100.0, [1.0])
        assert r.P_sat == 0 and list(r.P) == [80.0]

    def test_round_below_saturation(self):
        r = coordination_round([ControlOutput(0, 1.0), ControlOutput(0, 2.0)], 10.0, [0.5, 0.5])
        assert r.P_sat == 0 and list(r.P) == [1.0, 2.0]


def allocation_case(draw_n=st.integers(1, 8)):
    @st.composite
    def case(draw):
        n = draw(draw_n)
        P_tilde = draw(st.lists(st.floats(0, 1000), min_size=n, max_size=n))
        raw = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
        assume(sum(raw) > 0)
        weights = np.array(raw) / math.fsum(raw)
        weights[-1] = 1 - math.fsum(weights[:-1])
        assume(weights[-1] >= 0)
        P_max = draw(st.floats(0, 1.2 * sum(P_tilde) + 1))
        return np.array(P_tilde), weights, P_max

    return case()


class TestAllocationProperties:
    @settings(max_examples=1000, deadline=None)
    @given(case=allocation_case())
    def test_feasibility(self, case):
        P_tilde, weights, P_max = case
        P_sat = compute_deficit(P_tilde, P_max)
        assert P_sat >= 0
        for mode in ("clamp", "redistribute"):
            r = allocate(P_tilde, weights, P_sat, mode, P_max)
            assert np.all(r.P <= P_tilde)
            assert np.all(r.P >= 0)
            if P_sat == 0:
                assert np.array_equal(r.P, P_tilde)
            if mode == "redistribute":
                assert r.P.sum() <= P_max + 1e-9
            elif not r.clamp_events:
                assert abs(r.P.sum() - min(P_tilde.sum(), P_max)) <= 1e-9 * max(1.0, P_max)

    @settings(max_examples=500, deadline=None)
    @given(case=allocation_case())
    def test_redistribute_matches_waterfill(self, case):
        P_tilde, weights, P_max = case
        assume(np.all(weights > 1e-6))
        r = allocate(P_tilde, weights, compute_deficit(P_tilde, P_max), "redistribute", P_max)
        np.testing.assert_allclose(r.P, waterfill(P_tilde, weights, P_max), atol=1e-6)


class TestPredictedDeviation:
    def test_zero_share(self, tuned_units):
        assert predicted_deviation(tuned_units[0], 0.0, 10.0) == 0.0

    def test_value(self):
        p = UnitParams(200, 270, 1000, 20, 0.9, 100, a1=-1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotWellTunedWarning)
            assert predicted_deviation(p, 0.5, 400) == -1.0

    def test_warns_when_not_tuned(self, reference_units):
        with pytest.warns(NotWellTunedWarning):
            predicted_deviation(reference_units[0], 0.5, 1.0)

    def test_gain_weights_equalise_deviation(self, tuned_units):
        w = compute_weights(Strategy("gain"), tuned_units)
        P_sat = 0.05
        dev = [predicted_deviation(u, wi, P_sat) for u, wi in zip(tuned_units, w)]
        common = -P_sat / sum(u.gain_term for u in tuned_units)
        np.testing.assert_allclose(dev, common, rtol=1e-12)
        for u, wi, d in zip(tuned_units, w, dev):
            shifted = steady_state(u, -10.0, wi, P_sat).T_in0 - steady_state(u, -10.0).T_in0
            assert shifted == pytest.approx(d, abs=1e-6)

    def test_price_inverse_to_lambda(self, tuned_units):
        w = compute_weights(Strategy("price", (2, 2, 1)), tuned_units)
        dev = [predicted_deviation(u, wi, 0.05) for u, wi in zip(tuned_units, w)]
        assert dev[2] == pytest.approx(2 * dev[0], rel=1e-12)
        assert dev[0] == pytest.approx(dev[1], rel=1e-12)
