import math

import numpy as np
import pytest

from onlinelp.algorithms import (
    AlgorithmConfig,
    AlgorithmKind,
    RepairConfig,
    repair_feasibility,
    run_dla,
    run_multi_soa,
    run_pbd,
    run_sfa,
    run_sna,
    run_soa,
)
from onlinelp.core import (
    Instance,
    MultiInstance,
    StepSchedule,
    compute_stats,
    price_norm_bound,
    threshold_decision,
    violation_norm,
)
from onlinelp.generators import GeneratorFamily, GeneratorSpec, gen_gaussian, gen_uniform
from onlinelp.simplex import solve_scaled

from oracles import subgradient_price_cap, reference_one_pass


def soa_cfg(schedule=StepSchedule.SQRT_N, **kw):
    return AlgorithmConfig(AlgorithmKind.SOA, schedule, **kw)


def uniform_instance(n, m, seed):
    return gen_uniform(GeneratorSpec(GeneratorFamily.UNIFORM, n=n, m=m, seed=seed))


def assert_trace_consistent(inst, trace):
    x = (np.asarray(trace.decisions) == 1).astype(float) if trace.decisions.max(initial=0) <= 1 \
        else None
    assert x is not None
    assert trace.objective == pytest.approx(float(inst.rewards @ x), rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(trace.consumption, inst.columns @ x, rtol=1e-9, atol=1e-12)


def assert_price_cap(inst, trace):
    cap = subgradient_price_cap(inst.rewards, inst.columns, inst.capacity)
    assert trace.max_dual_norm <= cap
    if trace.dual_norm_history is not None:
        assert (trace.dual_norm_history <= cap).all()


class TestConfigValidation:
    def test_subgradient_kinds_need_schedule(self):
        for kind in (AlgorithmKind.SOA, AlgorithmKind.SFA, AlgorithmKind.SNA):
            with pytest.raises(ValueError):
                AlgorithmConfig(kind)

    def test_lp_kinds_reject_schedule(self):
        with pytest.raises(ValueError):
            AlgorithmConfig(AlgorithmKind.DLA, StepSchedule.SQRT_T)

    def test_multi_only_sqrt_n(self):
        with pytest.raises(ValueError):
            AlgorithmConfig(AlgorithmKind.MULTI_SOA, StepSchedule.SQRT_T)
        AlgorithmConfig(AlgorithmKind.MULTI_SOA, StepSchedule.SQRT_N)

    def test_kind_mismatch(self):
        inst = uniform_instance(4, 2, 0)
        with pytest.raises(ValueError):
            run_sfa(inst, soa_cfg())


class TestRunSoa:
    def test_single_step_accept(self):
        inst = Instance(rewards=[1.0], columns=[[1.0]], capacity=[0.5])
        trace = run_soa(inst, soa_cfg(StepSchedule.UNIT))
        assert list(trace.decisions) == [1]
        assert trace.final_prices[0] == pytest.approx(0.5)

    def test_single_step_reject_projects_to_zero(self):
        inst = Instance(rewards=[-1.0], columns=[[1.0]], capacity=[0.5])
        trace = run_soa(inst, soa_cfg(StepSchedule.UNIT))
        assert list(trace.decisions) == [0]
        assert trace.final_prices[0] == 0.0

    def test_matches_straight_line_reference(self):
        inst = uniform_instance(6, 2, 42)
        trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_N, record_dual_history=True))
        gammas = [1.0 / math.sqrt(6)] * 6
        cols = [list(inst.columns[:, j]) for j in range(6)]
        ref_dec, ref_p, ref_hist = reference_one_pass(inst.rewards, cols, inst.capacity, gammas)
        assert list(trace.decisions) == ref_dec
        np.testing.assert_allclose(trace.final_prices, ref_p, atol=1e-12)
        for t, prices in enumerate(ref_hist):
            assert trace.dual_norm_history[t] == pytest.approx(
                math.sqrt(sum(v * v for v in prices)), abs=1e-12)

    def test_sqrt_t_reference(self):
        inst = gen_gaussian(GeneratorSpec(GeneratorFamily.GAUSSIAN, n=9, m=3, seed=4))
        trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_T))
        gammas = [1.0 / math.sqrt(t) for t in range(1, 10)]
        cols = [list(inst.columns[:, j]) for j in range(9)]
        ref_dec, ref_p, _ = reference_one_pass(inst.rewards, cols, inst.capacity, gammas)
        assert list(trace.decisions) == ref_dec
        np.testing.assert_allclose(trace.final_prices, ref_p, atol=1e-12)

    def test_deterministic(self):
        inst = uniform_instance(50, 4, 5)
        t1 = run_soa(inst, soa_cfg())
        t2 = run_soa(inst, soa_cfg())
        assert np.array_equal(t1.decisions, t2.decisions)
        assert t1.objective == t2.objective
        assert np.array_equal(t1.final_prices, t2.final_prices)

    def test_trace_consistency_and_price_cap(self):
        for seed in range(5):
            inst = uniform_instance(80, 3, seed)
            trace = run_soa(inst, soa_cfg(record_dual_history=True))
            assert_trace_consistent(inst, trace)
            assert_price_cap(inst, trace)

    def test_telescoping_consumption_bound(self):
        # consumption <= capacity + sqrt(n) * final prices, per coordinate
        for seed in range(5):
            inst = uniform_instance(64, 4, 100 + seed)
            trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_N))
            bound = inst.capacity + math.sqrt(inst.n) * trace.final_prices
            assert (trace.consumption <= bound + 1e-6).all()


class TestRunSfa:
    def test_output_always_feasible(self):
        for seed in range(8):
            inst = uniform_instance(60, 3, seed)
            trace = run_sfa(inst, AlgorithmConfig(AlgorithmKind.SFA, StepSchedule.SQRT_T))
            assert violation_norm(inst, trace.decisions) == 0.0
            assert_trace_consistent(inst, trace)
            assert_price_cap(inst, trace)

    def test_identical_to_soa_when_gate_never_binds(self):
        # huge capacity: the gate can never block
        rng = np.random.default_rng(3)
        inst = Instance(rewards=rng.uniform(0, 2, 30),
                        columns=rng.uniform(0, 2, (2, 30)),
                        capacity=[300.0, 300.0])
        soa = run_soa(inst, soa_cfg(StepSchedule.SQRT_T))
        sfa = run_sfa(inst, AlgorithmConfig(AlgorithmKind.SFA, StepSchedule.SQRT_T))
        assert np.array_equal(soa.decisions, sfa.decisions)
        assert np.array_equal(soa.final_prices, sfa.final_prices)

    def test_three_step_gate_and_tentative_driven_prices(self):
        # capacity 2, three unit columns: the third acceptance is blocked but
        # the price update keeps following the tentative decisions
        inst = Instance(rewards=[1.0, 1.0, 1.0],
                        columns=[[1.0, 1.0, 1.0]],
                        capacity=[2.0])
        trace = run_sfa(inst, AlgorithmConfig(AlgorithmKind.SFA, StepSchedule.SQRT_T))
        assert list(trace.decisions) == [1, 1, 0]
        gammas = [1.0 / math.sqrt(t) for t in range(1, 4)]
        ref_dec, ref_p, _ = reference_one_pass(
            inst.rewards, [[1.0], [1.0], [1.0]], inst.capacity, gammas, gate=True)
        assert list(trace.decisions) == ref_dec
        np.testing.assert_allclose(trace.final_prices, ref_p, atol=1e-12)
        # prices moved three times by gamma * (1 - 2/3): the blocked step still updated
        expected = 0.0
        for g in gammas:
            expected = max(expected + g * (1.0 - 2.0 / 3.0), 0.0)
        assert trace.final_prices[0] == pytest.approx(expected, abs=1e-12)

    def test_matches_reference_on_random_data(self):
        inst = uniform_instance(40, 2, 9)
        trace = run_sfa(inst, AlgorithmConfig(AlgorithmKind.SFA, StepSchedule.SQRT_N))
        gammas = [1.0 / math.sqrt(40)] * 40
        cols = [list(inst.columns[:, j]) for j in range(40)]
        ref_dec, ref_p, _ = reference_one_pass(inst.rewards, cols, inst.capacity, gammas, gate=True)
        assert list(trace.decisions) == ref_dec
        np.testing.assert_allclose(trace.final_prices, ref_p, atol=1e-12)


class TestRunSna:
    def test_first_step_targets_remaining_budget(self):
        inst = Instance(rewards=[1.0, 1.0], columns=[[1.0, 1.0]], capacity=[1.0])
        trace = run_sna(inst, AlgorithmConfig(AlgorithmKind.SNA, StepSchedule.UNIT))
        # step 1 accepts at zero price; b_1 = 0, target 0/(2-1) = 0, so p jumps by a_1
        assert list(trace.decisions)[:1] == [1]
        assert trace.final_prices[0] == pytest.approx(1.0)

    def test_reject_everything_keeps_zero_prices(self):
        rng = np.random.default_rng(2)
        inst = Instance(rewards=-rng.uniform(0.1, 1, 12),
                        columns=rng.uniform(0, 1, (2, 12)),
                        capacity=[4.0, 6.0])
        trace = run_sna(inst, AlgorithmConfig(AlgorithmKind.SNA, StepSchedule.SQRT_T))
        assert trace.objective == 0.0
        assert (trace.final_prices == 0.0).all()
        assert trace.max_dual_norm == 0.0

    def test_matches_straight_line_reference(self):
        inst = uniform_instance(8, 2, 77)
        trace = run_sna(inst, AlgorithmConfig(AlgorithmKind.SNA, StepSchedule.SQRT_T))
        gammas = [1.0 / math.sqrt(t) for t in range(1, 9)]
        cols = [list(inst.columns[:, j]) for j in range(8)]
        ref_dec, ref_p, _ = reference_one_pass(
            inst.rewards, cols, inst.capacity, gammas, nonstationary=True)
        assert list(trace.decisions) == ref_dec
        np.testing.assert_allclose(trace.final_prices, ref_p, atol=1e-12)

    def test_needs_two_steps(self):
        inst = Instance(rewards=[1.0], columns=[[1.0]], capacity=[0.5])
        with pytest.raises(ValueError):
            run_sna(inst, AlgorithmConfig(AlgorithmKind.SNA, StepSchedule.SQRT_T))


class TestRunMultiSoa:
    def test_k1_reduces_to_soa(self):
        for seed in range(6):
            inst = uniform_instance(50, 3, 200 + seed)
            minst = MultiInstance.from_instance(inst)
            soa = run_soa(inst, soa_cfg(StepSchedule.SQRT_N))
            multi = run_multi_soa(minst, AlgorithmConfig(
                AlgorithmKind.MULTI_SOA, StepSchedule.SQRT_N, rng_seed=seed))
            assert np.array_equal(np.asarray(soa.decisions), np.asarray(multi.decisions))
            assert np.array_equal(soa.final_prices, multi.final_prices)
            assert soa.objective == multi.objective

    def test_all_dominated_rejects_and_price_drops(self):
        minst = MultiInstance(reward_blocks=[[-1.0, -2.0]],
                              column_blocks=[[[1.0, 1.0]]],
                              capacity=[0.5])
        trace = run_multi_soa(minst, AlgorithmConfig(AlgorithmKind.MULTI_SOA, StepSchedule.SQRT_N))
        assert list(trace.decisions) == [0]
        assert (trace.final_prices == 0.0).all()

    def test_chooses_best_alternative(self):
        minst = MultiInstance(reward_blocks=[[1.0, 3.0, 2.0]],
                              column_blocks=[[[1.0, 1.0, 1.0]]],
                              capacity=[0.5])
        trace = run_multi_soa(minst, AlgorithmConfig(AlgorithmKind.MULTI_SOA, StepSchedule.SQRT_N))
        assert list(trace.decisions) == [2]  # 1-based alternative index
        assert trace.objective == pytest.approx(3.0)

    def test_tie_breaking_frequencies(self):
        minst = MultiInstance(reward_blocks=[[1.0, 1.0, 0.25]],
                              column_blocks=[[[0.0, 0.0, 0.0]]],
                              capacity=[1.0])
        counts = {1: 0, 2: 0}
        draws = 10_000
        for seed in range(draws):
            trace = run_multi_soa(minst, AlgorithmConfig(
                AlgorithmKind.MULTI_SOA, StepSchedule.SQRT_N, rng_seed=seed))
            counts[int(trace.decisions[0])] += 1
        assert counts[1] + counts[2] == draws
        assert abs(counts[1] / draws - 0.5) <= 0.02

    def test_price_cap_multi(self):
        rng = np.random.default_rng(6)
        minst = MultiInstance(reward_blocks=rng.uniform(0, 2, (40, 3)),
                              column_blocks=rng.uniform(0, 2, (40, 2, 3)),
                              capacity=rng.uniform(15, 25, 2))
        trace = run_multi_soa(minst, AlgorithmConfig(
            AlgorithmKind.MULTI_SOA, StepSchedule.SQRT_N, record_dual_history=True))
        r_bar = float(np.abs(minst.reward_blocks).max())
        a_bar = float(np.abs(minst.column_blocks).max())
        d = minst.per_column_budget
        cap = (2 * r_bar + 2 * (a_bar + d.max()) ** 2) / d.min() + 2 * (a_bar + d.max())
        assert (trace.dual_norm_history <= cap).all()


class TestRunDla:
    def test_single_column_dual(self):
        inst = Instance(rewards=[1.0], columns=[[1.0]], capacity=[0.5])
        trace = run_dla(inst)
        # first decision at zero prices accepts; final dual prices the 1x1 LP
        assert list(trace.decisions) == [1]
        assert trace.final_prices[0] == pytest.approx(1.0)

    def test_all_negative_rewards(self):
        rng = np.random.default_rng(4)
        inst = Instance(rewards=-rng.uniform(0.5, 2, 10),
                        columns=rng.uniform(0, 1, (2, 10)),
                        capacity=[4.0, 4.0])
        trace = run_dla(inst)
        assert trace.objective == 0.0
        assert (trace.final_prices == 0.0).all()
        assert trace.max_dual_norm == 0.0

    def test_decisions_consistent_with_prefix_duals(self):
        inst = uniform_instance(20, 2, 31)
        trace = run_dla(inst)
        cols = np.ascontiguousarray(inst.columns.T)
        p = np.zeros(2)
        for t in range(1, 21):
            expected = threshold_decision(inst.rewards[t - 1], cols[t - 1], p)
            assert trace.decisions[t - 1] == expected
            p = solve_scaled(inst, t).duals
        assert_trace_consistent(inst, trace)

    def test_deterministic(self):
        inst = uniform_instance(25, 2, 13)
        assert np.array_equal(run_dla(inst).decisions, run_dla(inst).decisions)


class TestRunPbd:
    def test_degenerate_probabilities(self):
        # capacity so large the prefix optimum is all-ones: accepts surely
        rng = np.random.default_rng(10)
        inst = Instance(rewards=rng.uniform(0.5, 1, 12),
                        columns=rng.uniform(0, 1, (2, 12)),
                        capacity=[200.0, 200.0])
        trace = run_pbd(inst, rng_seed=0)
        assert trace.decisions.sum() == 12
        neg = Instance(rewards=-rng.uniform(0.5, 1, 12),
                       columns=rng.uniform(0, 1, (2, 12)),
                       capacity=[200.0, 200.0])
        trace = run_pbd(neg, rng_seed=0)
        assert trace.decisions.sum() == 0

    def test_half_probability_frequency(self):
        inst = Instance(rewards=[1.0], columns=[[1.0]], capacity=[0.5])
        hits = sum(int(run_pbd(inst, rng_seed=seed).decisions[0]) for seed in range(10_000))
        assert abs(hits / 10_000 - 0.5) <= 0.02

    def test_deterministic_per_seed(self):
        inst = uniform_instance(30, 2, 8)
        a = run_pbd(inst, rng_seed=123)
        b = run_pbd(inst, rng_seed=123)
        assert np.array_equal(a.decisions, b.decisions)
        assert a.objective == b.objective

    def test_seed_actually_matters(self):
        inst = uniform_instance(30, 2, 8)
        base = run_pbd(inst, rng_seed=0).decisions
        assert any(not np.array_equal(run_pbd(inst, rng_seed=s).decisions, base)
                   for s in range(1, 20))


class TestRepairFeasibility:
    def test_removal_count_formula(self):
        # already-feasible trace: the scaled violation clamps to 1 and the
        # removal count follows the printed formula, capped at the accept count
        inst = uniform_instance(100, 2, 55)
        trace = run_sfa(inst, AlgorithmConfig(AlgorithmKind.SFA, StepSchedule.SQRT_N))
        n_plus = int((trace.decisions == 1).sum())
        assert n_plus > 0
        d_lo = 0.5
        repaired = repair_feasibility(inst, trace, RepairConfig(d_lo_override=d_lo), rng_seed=1)
        removed = n_plus - int((repaired.decisions == 1).sum())
        expected = min(math.floor(2 * 1.0 * n_plus * math.log(100) / (d_lo * 10.0)) + 1, n_plus)
        assert removed == expected

    def test_formula_clamp_to_accept_count(self):
        # tiny accepted set: formula exceeds it, so everything accepted is removed
        inst = Instance(rewards=[1.0] + [-1.0] * 99,
                        columns=np.ones((1, 100)) * 0.1,
                        capacity=[50.0])
        trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_N))
        assert int((trace.decisions == 1).sum()) == 1
        repaired = repair_feasibility(inst, trace, RepairConfig(), rng_seed=3)
        assert int((repaired.decisions == 1).sum()) == 0

    def test_empty_accept_set_returned_unchanged(self):
        rng = np.random.default_rng(0)
        inst = Instance(rewards=-rng.uniform(0.5, 1, 10),
                        columns=rng.uniform(0, 1, (1, 10)),
                        capacity=[5.0])
        trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_N))
        repaired = repair_feasibility(inst, trace, RepairConfig(), rng_seed=9)
        assert repaired is trace

    def test_disabled_and_bypass_flags(self):
        inst = uniform_instance(50, 2, 21)
        trace = run_sfa(inst, AlgorithmConfig(AlgorithmKind.SFA, StepSchedule.SQRT_N))
        assert repair_feasibility(inst, trace, RepairConfig(enabled=False), rng_seed=0) is trace
        assert repair_feasibility(
            inst, trace, RepairConfig(skip_if_feasible=True), rng_seed=0) is trace
        # but an infeasible trace is repaired even with the bypass flag
        soa_trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_N))
        if violation_norm(inst, soa_trace.decisions) > 0:
            out = repair_feasibility(
                inst, soa_trace, RepairConfig(skip_if_feasible=True), rng_seed=0)
            assert out is not soa_trace

    def test_objective_and_consumption_recomputed(self):
        inst = uniform_instance(60, 3, 14)
        trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_N))
        repaired = repair_feasibility(inst, trace, RepairConfig(), rng_seed=5)
        assert_trace_consistent(inst, repaired)
        assert repaired.objective <= trace.objective + 1e-12
        removed = set(np.flatnonzero(trace.decisions).tolist()) \
            - set(np.flatnonzero(repaired.decisions).tolist())
        assert removed  # repair always removes something when accepts exist

    def test_deterministic_per_seed(self):
        inst = uniform_instance(60, 3, 15)
        trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_N))
        a = repair_feasibility(inst, trace, RepairConfig(), rng_seed=42)
        b = repair_feasibility(inst, trace, RepairConfig(), rng_seed=42)
        assert np.array_equal(a.decisions, b.decisions)

    def test_small_n_rejected(self):
        inst = uniform_instance(2, 1, 1)
        trace = run_soa(inst, soa_cfg(StepSchedule.SQRT_N))
        with pytest.raises(ValueError):
            repair_feasibility(inst, trace, RepairConfig(), rng_seed=0)


class TestPriceCapAcrossSchedules:
    def test_unit_schedule_stays_bounded(self):
        for seed in range(4):
            inst = uniform_instance(120, 2, 300 + seed)
            trace = run_soa(inst, soa_cfg(StepSchedule.UNIT, record_dual_history=True))
            assert_price_cap(inst, trace)

    def test_gaussian_data(self):
        for seed in range(4):
            inst = gen_gaussian(GeneratorSpec(GeneratorFamily.GAUSSIAN, n=100, m=3, seed=seed))
            for schedule in (StepSchedule.SQRT_N, StepSchedule.SQRT_T):
                trace = run_soa(inst, soa_cfg(schedule, record_dual_history=True))
                assert_price_cap(inst, trace)
                stats = compute_stats(inst)
                assert trace.max_dual_norm <= price_norm_bound(stats, inst.m)
