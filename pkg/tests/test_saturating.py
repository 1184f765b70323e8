"""Saturating-utility solvers: smoothed relaxation and the worst-item heuristic."""

import numpy as np
import pytest

from budgetcore.ballots import gen_synthetic
from budgetcore.lindahl import lindahl_residuals
from budgetcore.model import Instance, SmoothedSaturating
from budgetcore.saturating import (
    HeuristicConfig,
    heuristic_solve,
    smooth_relax,
    smoothing_alpha,
    solve_smoothed,
)


def approval_instance(n=50, k=8, seed=0, budget=1.0):
    return gen_synthetic("k-approval", n=n, k=k, seed=seed, budget=budget)


def heuristic_bounds(inst, result):
    """Bracket the heuristic's convergence metric from its returned solution.

    Saturated items are judged one-sidedly only while pinned, and pin state is
    internal; treating all saturated items one-sidedly (lower) and none
    (upper) brackets whatever the solver reported.
    """
    u = result.perturbed_utilities
    x, y = result.x.x, result.y
    sizes = inst.sizes
    denom = u @ (x * y)
    lhs = (inst.budget / inst.n) * y * (u.T @ (1.0 / denom))
    over = lhs - 1.0
    unfunded = x == 0.0
    saturated = np.abs(x - sizes) <= 1e-12 * sizes
    upper = np.where(unfunded, np.maximum(over, 0.0), np.abs(over))
    lower = np.where(
        unfunded,
        np.maximum(over, 0.0),
        np.where(saturated, np.maximum(-over, 0.0), np.abs(over)),
    )
    return float(lower.max()), float(upper.max())


class TestConfig:
    def test_defaults_scale_with_instance(self):
        eps, pert = HeuristicConfig().resolve(n=40, k=5)
        assert eps == pytest.approx(1.0 / 40)
        assert pert == pytest.approx(1.0 / 25)

    def test_explicit_values_pass_through(self):
        cfg = HeuristicConfig(eps_target=0.01, perturb_alpha=0.0)
        assert cfg.resolve(10, 10) == (0.01, 0.0)


class TestSmoothing:
    def test_alpha_formula(self):
        # (1/e)(B/s_min)^e + 1 - 1/e, and -> 1 as the budget/size ratio -> 1.
        assert smoothing_alpha(8.0, 2.0, 0.5) == pytest.approx(2 * 2.0 + 1 - 2)
        assert smoothing_alpha(5.0, 5.0, 0.3) == pytest.approx(1.0)

    def test_relax_keeps_data(self):
        inst = approval_instance(n=10, k=4)
        from budgetcore.model import Saturating

        hard = Saturating(inst.utilities, inst.sizes)
        soft = smooth_relax(hard, 0.4)
        assert isinstance(soft, SmoothedSaturating)
        assert np.array_equal(soft.sizes, hard.sizes)
        assert soft.eps_smooth == 0.4

    def test_solve_smoothed_converges(self):
        inst = approval_instance(n=30, k=5, seed=2)
        result, alpha = solve_smoothed(inst, eps_smooth=0.5)
        assert result.converged
        assert alpha == pytest.approx(
            smoothing_alpha(inst.budget, float(inst.sizes.min()), 0.5)
        )
        model = SmoothedSaturating(inst.utilities, inst.sizes, 0.5)
        res = lindahl_residuals(inst, model, result.x.x)
        funded = result.x.x > 1e-9
        viol = np.where(funded, np.abs(res), np.maximum(res, 0.0)).max()
        assert viol <= 1e-8


class TestHeuristic:
    def test_converges_on_approval_profiles(self):
        for seed in range(5):
            inst = approval_instance(n=60, k=8, seed=seed)
            result = heuristic_solve(inst)
            assert result.converged
            assert result.max_violation_trace[-1][1] <= 1.0 / 60
            assert not result.budget_flagged
            # Spend may miss B, but only within the condition tolerance.
            result.x.validate_budget(inst.budget, tol=1.0 / 60)

    def test_trace_describes_returned_solution(self):
        inst = approval_instance(n=60, k=8, seed=0)
        assert inst.sizes.sum() > inst.budget  # the sweep actually runs
        result = heuristic_solve(inst)
        lower, upper = heuristic_bounds(inst, result)
        final = result.max_violation_trace[-1][1]
        assert lower - 1e-12 <= final <= upper + 1e-12

    def test_deterministic_given_seed(self):
        inst = approval_instance(n=30, k=5, seed=1)
        a = heuristic_solve(inst, HeuristicConfig(seed=7))
        b = heuristic_solve(inst, HeuristicConfig(seed=7))
        assert np.array_equal(a.x.x, b.x.x) and np.array_equal(a.y, b.y)

    def test_perturbation_is_bounded(self):
        inst = approval_instance(n=20, k=5, seed=0)
        result = heuristic_solve(inst)
        delta = result.perturbed_utilities - inst.utilities
        assert np.all(delta >= 0.0) and np.all(delta <= 1.0 / 25 + 1e-12)

    def test_everything_fits_is_fully_funded_and_flagged(self):
        # Total project cost is 0.6 of the budget: full funding dominates every
        # alternative, and the 0.4 B shortfall must surface through the flag
        # rather than a silent rescale.
        inst = Instance(
            utilities=np.ones((10, 2)),
            budget=1.0,
            sizes=np.array([0.3, 0.3]),
        )
        result = heuristic_solve(inst)
        assert result.converged
        assert result.x.x == pytest.approx(inst.sizes)
        assert result.budget_flagged

    def test_exact_fit_not_flagged(self):
        inst = Instance(
            utilities=np.ones((10, 2)),
            budget=0.6,
            sizes=np.array([0.3, 0.3]),
        )
        result = heuristic_solve(inst)
        assert result.converged and not result.budget_flagged

    def test_unconverged_reports_best_iterate(self):
        inst = approval_instance(n=60, k=8, seed=4)
        result = heuristic_solve(inst, HeuristicConfig(max_sweeps=1))
        assert not result.converged
        assert len(result.max_violation_trace) == 1
        full = heuristic_solve(inst)
        assert full.max_violation_trace[-1][1] <= result.max_violation_trace[0][1]

    def test_eps_target_override(self):
        inst = approval_instance(n=30, k=6, seed=5)
        tight = heuristic_solve(inst, HeuristicConfig(eps_target=1e-4))
        if tight.converged:
            assert tight.max_violation_trace[-1][1] <= 1e-4

    def test_requires_sizes(self):
        from budgetcore.model import ModelError

        inst = Instance(utilities=np.ones((3, 2)), budget=1.0)
        with pytest.raises(ModelError, match="sizes"):
            heuristic_solve(inst)
