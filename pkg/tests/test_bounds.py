import math

import numpy as np
import pytest

from csdp import (
    CmcModel,
    LeakageParams,
    ModelError,
    StateSpace,
    adp_leakage,
    aged_tv_distance,
    baseline_bounds,
    bounded_aged_correlation,
    builtin_queries,
    cmc_leakage,
    joint_kernel,
    loose_bound,
    oracle_leakage,
    ratio_extremes,
    single_chain_tv,
    tight_bound,
    two_user_model,
    verify_reductions,
)

FLIP = np.array([[0.7, 0.3], [0.3, 0.7]])

# enumeration results from an independent reference implementation, frozen
DELTA2_LAM_050 = [1.0, 0.24, 0.0832, 0.032256, 0.01282048]
DELTA2_LAM_075 = [1.0, 0.3, 0.1, 0.036, 0.0136]


def single_chain(P=FLIP):
    return CmcModel(StateSpace(1, P.shape[0]), np.asarray(P)[None, None], np.ones((1, 1)))


def independent_pair():
    return CmcModel(
        StateSpace(2, 2), np.broadcast_to(FLIP, (2, 2, 2, 2)).copy(), np.eye(2)
    )


class TestAgedTV:
    def test_age_zero_is_one(self):
        kern = joint_kernel(two_user_model(0.3))
        assert aged_tv_distance(kern, (0, 0), 2) == pytest.approx(1.0, abs=1e-12)

    def test_single_chain_geometric(self):
        kern = joint_kernel(single_chain())
        for t in range(7):
            assert aged_tv_distance(kern, (t,), 1) == pytest.approx(0.4**t, abs=1e-10)

    @pytest.mark.parametrize("lam,expected", [(0.5, DELTA2_LAM_050), (0.75, DELTA2_LAM_075)])
    def test_frozen_benchmark_values(self, lam, expected):
        kern = joint_kernel(two_user_model(lam))
        for t, val in enumerate(expected):
            assert aged_tv_distance(kern, (t, t), 2) == pytest.approx(val, abs=1e-10)

    def test_u_shape_and_symmetry(self):
        lams = [round(0.1 * i, 10) for i in range(11)]
        for t in (1, 2, 3, 4):
            vals = {}
            for lam in lams:
                kern = joint_kernel(two_user_model(lam))
                vals[lam] = aged_tv_distance(kern, (t, t), 2)
            assert min(vals, key=vals.get) == 0.5
            for lam in lams:
                assert vals[lam] == pytest.approx(vals[round(1 - lam, 10)], abs=1e-9)

    def test_monotone_in_age(self):
        kern = joint_kernel(two_user_model(0.75))
        vals = [aged_tv_distance(kern, (t, t), 2) for t in range(9)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_bad_degree(self):
        kern = joint_kernel(two_user_model(0.75))
        with pytest.raises(ModelError):
            aged_tv_distance(kern, (1, 1), 0)


class TestLooseBound:
    def test_zero_delta(self):
        assert loose_bound(0.0, 2.0, 1.0) == (0.0, 0.0)

    def test_full_delta_unit_dk(self):
        lin, logf = loose_bound(1.0, 1.0, 3.0)
        assert logf == pytest.approx(3.0, abs=1e-12)
        assert lin == pytest.approx(3.0, abs=1e-12)

    def test_log_can_exceed_linear(self):
        lin, logf = loose_bound(0.4, 2.0, 1.0)
        assert lin == pytest.approx(0.8)
        assert logf == pytest.approx(math.log(1 + 0.4 * (math.e**2 - 1)), abs=1e-12)
        assert logf > lin  # certified budget takes the min of the two

    def test_log_dominates_linear_everywhere(self):
        # e^{xy} - 1 - x(e^y - 1) is convex in x and vanishes at x = 0 and
        # x = 1, hence is nonpositive on [0, 1]: the log form is never below
        # the linear form, so min(linear, log) is the linear form
        for delta in (0.05, 0.3, 0.7, 0.99):
            for dk in (1.0, 2.0):
                for eps in (0.1, 1.0, 5.0):
                    lin, logf = loose_bound(delta, dk, eps)
                    assert logf >= lin - 1e-12

    def test_log_equals_linear_at_extremes(self):
        lin, logf = loose_bound(1.0, 2.0, 0.7)
        assert logf == pytest.approx(lin, abs=1e-12)
        assert loose_bound(0.0, 2.0, 0.7) == (0.0, 0.0)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ModelError):
            loose_bound(1.5, 2.0, 1.0)
        with pytest.raises(ModelError):
            loose_bound(0.5, 0.5, 1.0)
        with pytest.raises(ModelError):
            loose_bound(0.5, 2.0, 0.0)


class TestBoundedAgedCorrelation:
    def test_independent_age_zero_is_one(self):
        kern = joint_kernel(independent_pair())
        assert bounded_aged_correlation(kern, (0, 0)) == pytest.approx(1.0, abs=1e-9)

    def test_single_chain_reduces_to_tv(self):
        kern = joint_kernel(single_chain())
        for t in range(5):
            assert bounded_aged_correlation(kern, (t,)) == pytest.approx(
                aged_tv_distance(kern, (t,), 1), abs=1e-9
            )

    @pytest.mark.parametrize("lam", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_benchmark_coefficient_is_single_chain_decay(self, lam):
        # on the symmetric benchmark the transport coefficient collapses to
        # the per-sequence mixing rate, independent of the coupling strength
        kern = joint_kernel(two_user_model(lam))
        for t in range(1, 5):
            assert bounded_aged_correlation(kern, (t, t)) == pytest.approx(
                0.4**t, abs=1e-8
            )

    def test_below_loose_coefficient(self):
        q = builtin_queries(StateSpace(2, 2))["mean"]
        for lam in (0.0, 0.5, 0.75):
            kern = joint_kernel(two_user_model(lam))
            for t in range(7):
                dbar = bounded_aged_correlation(kern, (t, t))
                d2 = aged_tv_distance(kern, (t, t), 2)
                assert dbar <= 2 * d2 + 1e-9

    def test_monotone_in_age(self):
        kern = joint_kernel(two_user_model(0.75))
        vals = [bounded_aged_correlation(kern, (t, t)) for t in range(9)]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


class TestRatioExtremes:
    def test_independent_model_collapses_to_one(self):
        kern = joint_kernel(independent_pair())
        for t in (0, 1, 3):
            g_max, g_min = ratio_extremes(kern, (t, t))
            assert g_max == pytest.approx(1.0, abs=1e-9)
            assert g_min == pytest.approx(1.0, abs=1e-9)

    def test_coupled_model_straddles_one(self):
        kern = joint_kernel(two_user_model(0.75))
        g_max, g_min = ratio_extremes(kern, (1, 1))
        assert g_max > 1.0 + 1e-6
        assert g_min < 1.0 - 1e-6


class TestTightBound:
    def test_zero(self):
        assert tight_bound(0.0, 5.0) == 0.0

    def test_product(self):
        assert tight_bound(1.0, 2.0) == pytest.approx(2.0)

    def test_pipeline_ordering_on_benchmark(self):
        for lam in (0.25, 0.5, 1.0):
            kern = joint_kernel(two_user_model(lam))
            for t in range(5):
                for eps in (2.0, 5.0):
                    d2 = aged_tv_distance(kern, (t, t), 2)
                    lin, logf = loose_bound(d2, 2.0, eps)
                    tgt = tight_bound(bounded_aged_correlation(kern, (t, t)), eps)
                    assert tgt <= min(lin, logf) + 1e-9


class TestCmcLeakage:
    def test_linear_in_eps(self):
        model = two_user_model(0.75)
        q = builtin_queries(model.space)["mean"]
        base = cmc_leakage(model, (2, 2), 1.0, q, 2)
        assert cmc_leakage(model, (2, 2), 1e-6, q, 2) == pytest.approx(base * 1e-6)

    def test_age_zero_value(self):
        model = two_user_model(0.75)
        q = builtin_queries(model.space)["mean"]
        assert cmc_leakage(model, (0, 0), 1.0, q, 2) == pytest.approx(2.0, abs=1e-9)

    def test_decay_below_threshold_by_six(self):
        q = builtin_queries(StateSpace(2, 2))["mean"]
        for lam in (0.5, 0.75, 1.0):
            model = two_user_model(lam)
            vals = [cmc_leakage(model, (t, t), 1.0, q, 2) for t in range(7)]
            assert vals[6] < 0.05
            assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


class TestAdpAndBaselines:
    def test_adp_endpoints(self):
        assert adp_leakage(0.0, 1.0) == 0.0
        assert adp_leakage(1.0, 2.5) == pytest.approx(2.5, abs=1e-12)

    def test_adp_flip_chain_lag_two(self):
        assert adp_leakage(0.4**2, 1.0) == pytest.approx(
            math.log(1 + 0.16 * (math.e - 1)), abs=1e-12
        )

    def test_single_chain_tv_standalone(self):
        model = two_user_model(0.25)
        for t in range(5):
            assert single_chain_tv(model, t) == pytest.approx(0.4**t, abs=1e-10)

    def test_baselines(self):
        q = builtin_queries(StateSpace(2, 2))["mean"]
        dp, ddp = baseline_bounds(1.0, 2, q)
        assert dp == pytest.approx(1.0)
        assert ddp == pytest.approx(2.0)
        dp, ddp = baseline_bounds(0.7, 1, q)
        assert dp == ddp == pytest.approx(0.7)
        assert ddp >= dp


class TestOracle:
    def test_age_zero_single_chain_equals_dp_budget(self):
        kern = joint_kernel(single_chain())
        q = builtin_queries(StateSpace(1, 2))["mean"]
        for eps in (0.5, 1.0, 5.0):
            params = LeakageParams((0,), eps, 1, q)
            est = oracle_leakage(kern, params)
            assert est.estimate == pytest.approx(eps, abs=1e-9)

    def test_frozen_benchmark_value(self):
        # reference implementation value for lam=0.75, t=1, eps=1
        kern = joint_kernel(two_user_model(0.75))
        q = builtin_queries(StateSpace(2, 2))["mean"]
        est = oracle_leakage(kern, LeakageParams((1, 1), 1.0, 2, q))
        assert est.estimate == pytest.approx(0.400180, abs=1e-5)

    def test_below_tight_bound_on_grid(self):
        q = builtin_queries(StateSpace(2, 2))["mean"]
        for lam in (0.0, 0.5, 0.75):
            kern = joint_kernel(two_user_model(lam))
            for t in (0, 1, 3):
                dbar = bounded_aged_correlation(kern, (t, t))
                for eps in (2.0, 5.0, 10.0):
                    est = oracle_leakage(kern, LeakageParams((t, t), eps, 2, q))
                    assert est.estimate <= tight_bound(dbar, eps) + 1e-9

    def test_independent_model_matches_adp(self):
        kern = joint_kernel(independent_pair())
        model = independent_pair()
        q = builtin_queries(StateSpace(2, 2))["mean"]
        for t in (1, 2):
            params = LeakageParams((t, t), 1.0, 2, q)
            sampled = oracle_leakage(kern, params, samples=10**5, seed=13,
                                     method="sampling")
            pred = adp_leakage(single_chain_tv(model, t), 1.0)
            assert abs(sampled.estimate - pred) <= 3 * sampled.half_width + 0.02

    def test_sampling_matches_exact(self):
        kern = joint_kernel(two_user_model(0.5))
        q = builtin_queries(StateSpace(2, 2))["mean"]
        params = LeakageParams((1, 1), 1.0, 2, q)
        exact = oracle_leakage(kern, params).estimate
        sampled = oracle_leakage(kern, params, samples=10**5, seed=21,
                                 method="sampling")
        assert abs(sampled.estimate - exact) <= 3 * sampled.half_width

    def test_sampling_deterministic(self):
        kern = joint_kernel(two_user_model(0.5))
        q = builtin_queries(StateSpace(2, 2))["mean"]
        params = LeakageParams((1, 1), 1.0, 2, q)
        a = oracle_leakage(kern, params, samples=5000, seed=4, method="sampling")
        b = oracle_leakage(kern, params, samples=5000, seed=4, method="sampling")
        assert a == b

    def test_insufficient_samples_rejected(self):
        kern = joint_kernel(two_user_model(0.5))
        q = builtin_queries(StateSpace(2, 2))["mean"]
        with pytest.raises(ModelError, match="samples"):
            oracle_leakage(kern, LeakageParams((1, 1), 1.0, 2, q), samples=10,
                           method="sampling")


class TestReductions:
    def test_all_applicable_pass(self):
        cases = verify_reductions(1.0, 8)
        assert all(c.passed for c in cases if c.applicable)

    def test_coupled_case_not_applicable(self):
        cases = {c.name: c for c in verify_reductions()}
        assert not cases["coupled-benchmark"].applicable

    def test_other_budgets(self):
        for eps in (0.5, 2.0):
            cases = verify_reductions(eps, 4)
            assert all(c.passed for c in cases if c.applicable)
