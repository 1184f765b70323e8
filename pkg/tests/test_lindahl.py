"""Equilibrium solvers against closed forms and each other.

Reference points used here, all derivable by hand:

* disjoint voter groups with linear utilities -> x_j = B * n_j / n;
* Cobb-Douglas -> x_j = (B/n) * sum_i a_ij (first-order condition of the
  proportional-fairness program is separable in log x);
* a single voter with power utilities -> x_j proportional to u_j^{1/(1-a)}.

The two solver routes (allocation space, marginal-spend space) must agree on
instances where both apply.
"""

import numpy as np
import pytest

from budgetcore.lindahl import (
    DegenerateAgentError,
    LindahlResult,
    SolverConfig,
    lindahl_residuals,
    recover_prices,
    sgd_elicitation,
    solve_potential,
    solve_proportional_fairness,
)
from budgetcore.model import (
    CobbDouglas,
    Instance,
    Linear,
    ModelError,
    PowerSum,
    Saturating,
    make_model,
)


def disjoint_instance(counts, budget=1.0):
    """Voters in disjoint groups, each approving one item."""
    rows = []
    for j, c in enumerate(counts):
        row = np.zeros(len(counts))
        row[j] = 1.0
        rows.extend([row] * c)
    return Instance(utilities=np.array(rows), budget=budget)


def cd_instance(n, k, seed, budget=2.0):
    rng = np.random.default_rng(seed)
    e = rng.uniform(0.1, 1.0, size=(n, k))
    e /= e.sum(axis=1, keepdims=True)
    return Instance(utilities=e, budget=budget)


def max_condition_violation(inst, model, x, floor=1e-9):
    res = lindahl_residuals(inst, model, x)
    funded = np.asarray(x, dtype=float) > floor
    return float(np.where(funded, np.abs(res), np.maximum(res, 0.0)).max())


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------


class TestResiduals:
    def test_zero_at_group_proportional_split(self):
        inst = disjoint_instance([3, 2, 5], budget=4.0)
        model = Linear(inst.utilities)
        x = 4.0 * np.array([0.3, 0.2, 0.5])
        assert lindahl_residuals(inst, model, x) == pytest.approx(np.zeros(3), abs=1e-12)

    def test_sign_structure_off_equilibrium(self):
        inst = disjoint_instance([5, 5], budget=1.0)
        model = Linear(inst.utilities)
        res = lindahl_residuals(inst, model, np.array([0.8, 0.2]))
        # Overfunded item shows negative residual, underfunded positive.
        assert res[0] < 0 < res[1]

    def test_shape_check(self):
        inst = disjoint_instance([2, 2])
        with pytest.raises(ValueError, match="expected 2"):
            lindahl_residuals(inst, Linear(inst.utilities), np.array([1.0]))

    def test_degenerate_agent(self):
        inst = Instance(utilities=[[1.0, 0.0], [0.0, 1.0]], budget=1.0)
        with pytest.raises(DegenerateAgentError, match="voter 1"):
            lindahl_residuals(inst, Linear(inst.utilities), np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# Proportional-fairness route
# ---------------------------------------------------------------------------


class TestProportionalFairness:
    def test_disjoint_groups_closed_form(self):
        counts = [7, 2, 1, 10]
        inst = disjoint_instance(counts, budget=5.0)
        result = solve_proportional_fairness(inst, Linear(inst.utilities))
        expect = 5.0 * np.array(counts) / sum(counts)
        assert result.converged
        assert np.max(np.abs(result.x.x - expect)) <= 1e-6

    def test_cobb_douglas_closed_form(self):
        for seed in range(5):
            inst = cd_instance(n=20, k=6, seed=seed)
            model = CobbDouglas(inst.utilities)
            result = solve_proportional_fairness(inst, model)
            expect = (inst.budget / inst.n) * inst.utilities.sum(axis=0)
            assert result.converged
            assert np.max(np.abs(result.x.x - expect)) <= 1e-6

    def test_residual_tolerance_met(self):
        inst = disjoint_instance([4, 3, 3], budget=1.0)
        result = solve_proportional_fairness(inst, Linear(inst.utilities))
        assert max_condition_violation(inst, Linear(inst.utilities), result.x.x) <= 1e-8

    def test_rejects_inhomogeneous_families(self):
        inst = disjoint_instance([2, 2])
        model = PowerSum(inst.utilities, np.array([0.5, 0.5]))
        with pytest.raises(ModelError, match="homogeneous"):
            solve_proportional_fairness(inst, model)

    def test_budget_exhausted(self):
        inst = cd_instance(n=10, k=4, seed=3, budget=7.0)
        result = solve_proportional_fairness(inst, CobbDouglas(inst.utilities))
        assert result.x.total() == pytest.approx(7.0, rel=1e-9)

    def test_trace_records_violation_decay(self):
        inst = cd_instance(n=30, k=5, seed=1)
        result = solve_proportional_fairness(inst, CobbDouglas(inst.utilities))
        trace = result.objective_trace
        assert trace and all(len(row) == 2 for row in trace)
        iters = [it for it, _ in trace]
        assert iters == sorted(iters)
        assert trace[-1][1] <= 1e-8

    def test_moderately_large_instance_is_fast(self):
        import time

        rng = np.random.default_rng(0)
        u = rng.uniform(0.1, 1.0, size=(3000, 10))
        inst = Instance(utilities=u, budget=1.0)
        t0 = time.perf_counter()
        result = solve_proportional_fairness(inst, Linear(u))
        elapsed = time.perf_counter() - t0
        assert result.converged and elapsed < 2.0


# ---------------------------------------------------------------------------
# Potential (marginal-spend) route
# ---------------------------------------------------------------------------


class TestPotentialSolver:
    def test_agrees_with_fast_path_on_linear(self):
        rng = np.random.default_rng(7)
        u = rng.uniform(0.05, 1.0, size=(40, 5))
        inst = Instance(utilities=u, budget=3.0)
        a = solve_proportional_fairness(inst, Linear(u))
        b = solve_potential(inst, Linear(u))
        assert a.converged and b.converged
        assert np.max(np.abs(a.x.x - b.x.x)) <= 1e-6

    def test_single_voter_power_closed_form(self):
        # One voter, equal exponents a: the equilibrium maximizes the voter's
        # utility, so x_j is proportional to u_j^{1/(1-a)}.
        u = np.array([[0.6, 0.3, 0.1]])
        a = 0.5
        inst = Instance(utilities=u, budget=2.0)
        model = PowerSum(u, np.full(3, a))
        result = solve_potential(inst, model)
        w = u[0] ** (1.0 / (1.0 - a))
        expect = 2.0 * w / w.sum()
        assert result.converged
        assert np.max(np.abs(result.x.x - expect)) <= 1e-6

    def test_power_sum_residuals_meet_tolerance(self):
        rng = np.random.default_rng(11)
        u = rng.uniform(0.1, 1.0, size=(25, 4))
        inst = Instance(utilities=u, budget=1.5)
        model = PowerSum(u, np.array([0.4, 0.6, 0.8, 0.9]))
        result = solve_potential(inst, model)
        assert result.converged
        assert max_condition_violation(inst, model, result.x.x, floor=1e-10) <= 1e-8

    def test_hard_saturating_has_no_route(self):
        inst = Instance(
            utilities=[[1.0, 1.0]], budget=1.0, sizes=np.array([0.6, 0.6])
        )
        with pytest.raises(ModelError, match="non-satiating"):
            solve_potential(inst, Saturating(inst.utilities, inst.sizes))

    def test_respects_custom_tolerance(self):
        inst = cd_instance(n=15, k=4, seed=9, budget=1.0)
        model = make_model(inst, "linear")
        loose = solve_potential(inst, model, SolverConfig(residual_tol=1e-4))
        assert loose.converged
        assert max_condition_violation(inst, model, loose.x.x) <= 1e-4


# ---------------------------------------------------------------------------
# Price recovery
# ---------------------------------------------------------------------------


class TestPrices:
    def test_rows_cost_equal_share(self):
        rng = np.random.default_rng(2)
        u = rng.uniform(0.1, 1.0, size=(12, 4))
        inst = Instance(utilities=u, budget=3.0)
        result = solve_proportional_fairness(inst, Linear(u))
        prices = recover_prices(inst, Linear(u), result.x)
        spend = prices.p @ result.x.x
        assert spend == pytest.approx(np.full(12, 3.0 / 12), rel=1e-9)

    def test_item_price_sums_near_one(self):
        inst = disjoint_instance([4, 6], budget=1.0)
        result = solve_proportional_fairness(inst, Linear(inst.utilities))
        prices = recover_prices(inst, Linear(inst.utilities), result.x)
        assert prices.p.sum(axis=0) == pytest.approx(np.ones(2), abs=1e-7)


# ---------------------------------------------------------------------------
# Query-limited stochastic route
# ---------------------------------------------------------------------------


class TestSgdElicitation:
    def test_approaches_equilibrium(self):
        inst = disjoint_instance([6, 4], budget=1.0)
        model = Linear(inst.utilities)
        result = sgd_elicitation(inst, model, rounds=20_000, seed=3)
        assert np.max(np.abs(result.x.x - np.array([0.6, 0.4]))) <= 0.05
        assert result.iterations == 20_000

    def test_deterministic_given_seed(self):
        inst = disjoint_instance([3, 5], budget=1.0)
        model = Linear(inst.utilities)
        a = sgd_elicitation(inst, model, rounds=500, seed=11)
        b = sgd_elicitation(inst, model, rounds=500, seed=11)
        assert np.array_equal(a.x.x, b.x.x)
        c = sgd_elicitation(inst, model, rounds=500, seed=12)
        assert not np.array_equal(a.x.x, c.x.x)

    def test_callable_schedule_and_validation(self):
        inst = disjoint_instance([2, 2])
        model = Linear(inst.utilities)
        result = sgd_elicitation(
            inst, model, rounds=200, step_schedule=lambda t: 0.5 / t, seed=0
        )
        assert isinstance(result, LindahlResult)
        with pytest.raises(ValueError, match="rounds"):
            sgd_elicitation(inst, model, rounds=0)

    def test_trace_checkpoints(self):
        inst = disjoint_instance([4, 4])
        result = sgd_elicitation(inst, Linear(inst.utilities), rounds=1000, seed=1)
        assert result.objective_trace[-1][0] == 1000
        assert all(v >= 0 for _, v in result.objective_trace)
