"""Adversarial staged construction: closed forms, exact prefix distance,
fooling Monte Carlo with stub estimators, stage advance and verification."""

import json
import math
from itertools import product

import pytest

from renewalbench.adversary import (
    BudgetExhausted,
    FoolingResult,
    SearchBudgets,
    StageState,
    advance_stage,
    audit_json,
    fooling_probability,
    mean_shift,
    mu_L_shift,
    stage0,
    tv_prefix_exact,
    verify_stage,
)
from renewalbench.laws import (
    LawError,
    make_law,
    perturb,
    residual_mean,
    stationary_zero_prob,
)
from renewalbench.schemes import EstimateEvent, SchemeConfig, iter_poly, run_poly

CFG = SchemeConfig(gamma=0.3)


def p_law(probs):
    return make_law({"type": "explicit", "p": list(probs)})


class TestStage0:
    def test_halving_law(self):
        state = stage0()
        law = state.law
        assert state.stage == 0
        assert state.markers == (0,)
        assert state.audits == ()
        assert abs(law.prob(0) - 0.5) < 1e-15
        assert abs(law.prob(1) - 0.25) < 1e-15
        assert abs(law.mean - 1.0) < 1e-9
        assert abs(stationary_zero_prob(law) - 0.5) < 1e-9

    def test_truncation_is_configurable(self):
        law = stage0(truncate=10).law
        assert law.prob(9) > 0.0
        assert law.prob(10) == 0.0


class TestMeanShift:
    def test_worked_example(self):
        assert mean_shift(0.05, 41) == pytest.approx(2.05, abs=1e-12)

    def test_matches_law_mean_difference(self):
        law = stage0().law
        moved = perturb(law, 41, 0.05)
        assert moved.mean - law.mean == pytest.approx(mean_shift(0.05, 41), abs=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            mean_shift(0.0, 5)
        with pytest.raises(ValueError):
            mean_shift(0.01, 0)


def brute_tail_mean_shift(law, age, delta, k):
    moved = perturb(law, k, delta)

    def tail_mean(l):
        hi = max(len(l.probs), k + 1)
        num = sum((i - age) * l.prob(i) for i in range(age, hi))
        den = sum(l.prob(i) for i in range(age, hi))
        return num / den

    return tail_mean(moved) - tail_mean(law)


class TestTailMeanShift:
    def test_age_zero_is_exactly_k_delta(self):
        law = stage0().law
        assert mu_L_shift(law, 0, 0.05, 41) == pytest.approx(2.05, abs=1e-12)

    @pytest.mark.parametrize("age", [0, 1, 2, 5, 10, 25])
    @pytest.mark.parametrize("delta,k", [(0.01, 80), (0.001, 60), (0.06, 200)])
    def test_closed_form_matches_brute_recomputation(self, age, delta, k):
        law = stage0().law
        closed = mu_L_shift(law, age, delta, k)
        assert closed == pytest.approx(brute_tail_mean_shift(law, age, delta, k), abs=1e-9)

    def test_k_below_age_rejected(self):
        with pytest.raises(ValueError, match="k >= L"):
            mu_L_shift(stage0().law, 10, 0.01, 9)

    def test_zero_tail_rejected(self):
        law = stage0(truncate=10).law
        with pytest.raises(LawError, match="zero tail"):
            mu_L_shift(law, 11, 0.01, 20)

    def test_delta_out_of_range_rejected(self):
        law = stage0().law
        with pytest.raises(ValueError):
            mu_L_shift(law, 1, 0.6, 10)
        with pytest.raises(ValueError):
            mu_L_shift(law, 1, 0.0, 10)


def brute_prefix_tv(law_a, law_b, n):
    # direct enumeration of every continuation after the forced zero
    total = 0.0
    for bits in product((0, 1), repeat=n):
        pa = pb = 1.0
        run = 0
        for x in bits:
            if x:
                run += 1
            else:
                pa *= law_a.prob(run)
                pb *= law_b.prob(run)
                run = 0
        total += abs(pa * law_a.tail(run) - pb * law_b.tail(run))
    return total


class TestPrefixTvExact:
    def test_identical_laws(self):
        law = stage0().law
        assert tv_prefix_exact(law, law, 8) == 0.0

    def test_disjoint_two_point_laws(self):
        assert tv_prefix_exact(p_law([0, 0, 1]), p_law([0, 1]), 2) == pytest.approx(2.0)

    def test_single_bit_perturbation(self):
        law = stage0().law
        moved = perturb(law, 41, 0.001)
        assert tv_prefix_exact(law, moved, 1) == pytest.approx(0.002, abs=1e-12)

    def test_symmetric(self):
        law = stage0().law
        moved = perturb(law, 41, 0.001)
        for n in (1, 5, 12):
            assert tv_prefix_exact(law, moved, n) == tv_prefix_exact(moved, law, n)

    def test_monotone_in_prefix_length(self):
        law = stage0().law
        moved = perturb(law, 41, 0.001)
        values = [tv_prefix_exact(law, moved, n) for n in range(1, 13)]
        for earlier, later in zip(values, values[1:]):
            assert later >= earlier - 1e-15
        assert values[-1] <= 2.0

    @pytest.mark.parametrize(
        "probs_a,probs_b",
        [
            ([0.5, 0.5], [0.25, 0.5, 0.25]),
            ([0.9, 0.1], [0.1, 0.9]),
            ([0.3, 0.0, 0.7], [0.3, 0.7]),
        ],
    )
    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_matches_direct_enumeration(self, probs_a, probs_b, n):
        law_a, law_b = p_law(probs_a), p_law(probs_b)
        assert tv_prefix_exact(law_a, law_b, n) == pytest.approx(
            brute_prefix_tv(law_a, law_b, n), abs=1e-12
        )

    def test_rejects_out_of_range_lengths(self):
        law = stage0().law
        with pytest.raises(ValueError, match="capped"):
            tv_prefix_exact(law, law, 21)
        with pytest.raises(ValueError):
            tv_prefix_exact(law, law, -1)


def silent_runner(bits, config):
    return []


def rewriting_runner(fn):
    # keeps real firing times and ages, only rewrites the estimate
    def runner(bits, config):
        for event in iter_poly(bits, config):
            yield EstimateEvent(
                ordinal=event.ordinal,
                time=event.time,
                run_age=event.run_age,
                estimate=fn(event.run_age),
                residual_counts=event.residual_counts,
                sample_count=event.sample_count,
                window_start=event.window_start,
                window_end=event.window_end,
            )

    return runner


def constant_estimate_runner(value):
    return rewriting_runner(lambda age: value)


def oracle_runner(law):
    return rewriting_runner(lambda age: residual_mean(law, age))


class TestFoolingProbability:
    def test_silent_runner_reports_diagnostic(self):
        law = stage0().law
        result = fooling_probability(law, silent_runner, CFG, (0, 64), 3.0, 200, seed=5)
        assert result.estimate == 0.0
        assert result.successes == 0
        assert not result.any_fired
        assert result.executed_reps > 0
        assert result.ci_low == 0.0
        assert result.ci_high > 0.0

    def test_runner_quoting_the_target_is_never_fooled(self):
        law = stage0().law
        runner = constant_estimate_runner(3.0)
        result = fooling_probability(law, runner, CFG, (0, 64), 3.0, 200, seed=5)
        assert result.estimate == 0.0
        assert result.any_fired

    def test_runner_outputting_zero_is_fooled_at_firing_coverage(self):
        law = stage0().law
        runner = constant_estimate_runner(0.0)
        result = fooling_probability(law, runner, CFG, (0, 64), 2.05, 400, seed=5)
        assert result.estimate > 0.9
        assert result.ci_high <= 1.0

    def test_oracle_runner_is_never_fooled_at_the_true_mean(self):
        law = stage0().law
        result = fooling_probability(law, oracle_runner(law), CFG, (0, 64), law.mean, 200, seed=5)
        assert result.estimate == 0.0

    def test_real_scheme_is_fooled_by_inflated_target(self):
        law = stage0().law
        result = fooling_probability(law, iter_poly, CFG, (0, 64), law.mean + 2.0, 500, seed=7)
        assert result.estimate > 0.98
        assert result.any_fired

    def test_reproducible_for_fixed_seed(self):
        law = stage0().law
        a = fooling_probability(law, iter_poly, CFG, (0, 64), law.mean + 2.0, 150, seed=11)
        b = fooling_probability(law, iter_poly, CFG, (0, 64), law.mean + 2.0, 150, seed=11)
        assert a == b

    def test_precondition_errors(self):
        law = stage0().law
        with pytest.raises(ValueError, match="100 reps"):
            fooling_probability(law, silent_runner, CFG, (0, 64), 3.0, 50, seed=1)
        with pytest.raises(ValueError, match="window"):
            fooling_probability(law, silent_runner, CFG, (64, 64), 3.0, 200, seed=1)


class TestAdvanceStage:
    def test_first_stage_within_default_budgets(self):
        state = advance_stage(stage0(), iter_poly, CFG, seed=0)
        assert state.stage == 1
        assert len(state.markers) == 2
        assert state.markers[0] == 0
        assert state.markers[1] >= 64
        audit = state.audits[0]
        assert audit.k * audit.delta > 2.0
        assert audit.k * audit.delta < 2.01
        assert audit.delta < 0.25 * audit.p0_before
        assert audit.tv_value <= audit.tv_threshold == 1e-3
        assert audit.tv_exact_n == 20
        assert audit.fooling_estimate >= 1.0 - 2e-3
        # exact bookkeeping: the mean moves by k*delta
        assert state.law.mean - stage0().law.mean == pytest.approx(
            audit.k * audit.delta, abs=1e-9
        )
        # the analytic per-coordinate bound dominates the exact value
        assert audit.tv_value <= audit.tv_analytic_bound

    def test_deterministic_given_seed(self):
        a = advance_stage(stage0(), iter_poly, CFG, seed=3)
        b = advance_stage(stage0(), iter_poly, CFG, seed=3)
        assert a.audits == b.audits
        assert a.markers == b.markers
        assert a.law.probs == b.law.probs

    def test_second_stage_exhausts_the_marker_search(self):
        # the first perturbation leaves every tail beyond the window at
        # exactly delta, and 3*delta sits above the next stage's cap, so
        # no admissible age marker exists at any scale
        state = advance_stage(stage0(), iter_poly, CFG, seed=0)
        with pytest.raises(BudgetExhausted) as info:
            advance_stage(state, iter_poly, CFG, seed=1)
        assert info.value.constraint == "marker"

    def test_horizon_budget_can_exhaust(self):
        budgets = SearchBudgets(horizon_start=64, horizon_max=32)
        with pytest.raises(BudgetExhausted) as info:
            advance_stage(stage0(), iter_poly, CFG, budgets=budgets, seed=0)
        assert info.value.constraint == "horizon"

    def test_perturbation_budget_can_exhaust(self):
        budgets = SearchBudgets(delta_halvings=0)
        with pytest.raises(BudgetExhausted) as info:
            advance_stage(stage0(), iter_poly, CFG, budgets=budgets, seed=0)
        assert info.value.constraint == "perturbation"

    def test_stage_cap(self):
        state = advance_stage(stage0(), iter_poly, CFG, seed=0)
        with pytest.raises(ValueError, match="cap"):
            advance_stage(state, iter_poly, CFG, budgets=SearchBudgets(max_stage=1))


class TestStageStateInvariants:
    def test_markers_must_increase(self):
        law = stage0().law
        with pytest.raises(ValueError, match="strictly increasing"):
            StageState(stage=1, markers=(5, 5), law_history=(law, law), audits=())

    def test_history_length_must_match(self):
        law = stage0().law
        with pytest.raises(ValueError, match="one law per stage"):
            StageState(stage=1, markers=(0, 64), law_history=(law,), audits=())

    def test_window_accessor(self):
        state = advance_stage(stage0(), iter_poly, CFG, seed=0)
        assert state.window(1) == (state.markers[0], state.markers[1])
        with pytest.raises(ValueError):
            state.window(2)
        with pytest.raises(ValueError):
            stage0().window(1)


class TestVerifyStage:
    def test_first_stage_verifies(self):
        state = advance_stage(stage0(), iter_poly, CFG, seed=0)
        report = verify_stage(state, iter_poly, CFG, reps=2000, seed=424243)
        assert report["all_passed"]
        by_name = {c["condition"]: c for c in report["conditions"]}
        joint = by_name["joint_fooling"]
        assert joint["estimate"] >= joint["threshold"] - (joint["ci"][1] - joint["ci"][0]) / 2
        assert joint["threshold"] == pytest.approx(0.998)
        assert by_name["mean_increment"]["first_stage_kdelta"] > 2.0
        assert by_name["prefix_tv"]["stages"][0]["value"] <= 1e-3
        assert by_name["tail_mean_monotone"]["passed"]

    def test_corrupted_law_fails_the_mean_condition(self):
        state = advance_stage(stage0(), iter_poly, CFG, seed=0)
        doctored = StageState(
            stage=1,
            markers=state.markers,
            law_history=(state.law_history[0], p_law([0, 0, 1])),
            audits=state.audits,
        )
        report = verify_stage(doctored, iter_poly, CFG, reps=300, seed=99)
        assert not report["all_passed"]
        by_name = {c["condition"]: c for c in report["conditions"]}
        assert not by_name["mean_increment"]["passed"]

    def test_requires_an_advanced_stage(self):
        with pytest.raises(ValueError):
            verify_stage(stage0(), iter_poly, CFG)

    def test_rejects_tiny_rep_counts(self):
        state = advance_stage(stage0(), iter_poly, CFG, seed=0)
        with pytest.raises(ValueError, match="100 reps"):
            verify_stage(state, iter_poly, CFG, reps=10)


class TestAuditJson:
    def test_shape_and_values(self):
        state = advance_stage(stage0(), iter_poly, CFG, seed=0)
        entries = json.loads(audit_json(state))
        assert len(entries) == 1
        entry = entries[0]
        assert set(entry) == {"stage", "law", "markers", "delta", "k", "fooling", "tv", "mean"}
        audit = state.audits[0]
        assert entry["stage"] == 1
        assert entry["delta"] == audit.delta
        assert entry["k"] == audit.k
        assert entry["markers"] == [0, state.markers[1]]
        assert entry["fooling"]["est"] == audit.fooling_estimate
        assert entry["fooling"]["ci"] == list(audit.fooling_ci)
        assert entry["tv"]["exact_n"] == 20
        assert entry["tv"]["value"] == audit.tv_value
        assert entry["mean"] == pytest.approx(state.law.mean)
        assert entry["law"]["type"] == "perturbed"
