import itertools
import time

import numpy as np
import pytest
from scipy.optimize import linprog

from ssalign.errors import CapacityError, InputError, ParameterError, ShapeError
from ssalign.ot import (
    Marginals,
    SinkhornConfig,
    entropic_objective,
    exact_ot_oracle,
    round_to_marginals,
    sinkhorn,
    solve_symmetric,
)

TIGHT_SMALL_EPS = SinkhornConfig(epsilon=1e-3, max_iters=5000, tol=1e-6)
# the transpose identity holds for exact plans; this converges to 1e-11 quickly
TIGHT = SinkhornConfig(epsilon=1e-1, max_iters=50000, tol=1e-11)


def brute_force_assignment(cost):
    """Minimum mean matched cost over all permutations (independent oracle)."""
    n = cost.shape[0]
    return min(sum(cost[i, p[i]] for i in range(n)) / n for p in itertools.permutations(range(n)))


def lp_optimum(cost, a, b):
    n, m = cost.shape
    rows = [np.kron(np.eye(n)[i], np.ones(m)) for i in range(n)]
    cols = [np.kron(np.ones(n), np.eye(m)[j]) for j in range(m)]
    res = linprog(cost.ravel(), A_eq=np.array(rows + cols), b_eq=np.concatenate([a, b]), bounds=(0, None))
    assert res.status == 0
    return res.fun


def test_config_validation():
    assert SinkhornConfig() == SinkhornConfig(3e-2, 100, 1e-2)
    for bad in [dict(epsilon=0), dict(max_iters=0), dict(tol=-1), dict(max_iters=1.5)]:
        with pytest.raises(ParameterError):
            SinkhornConfig(**bad)


def test_marginal_validation():
    with pytest.raises(InputError):
        Marginals(np.array([0.5, 0.6]), np.array([1.0]))
    with pytest.raises(InputError):
        Marginals(np.array([1.0, 0.0]), np.array([1.0]))


def test_single_coupling():
    res = sinkhorn(np.array([[0.7]]), Marginals.uniform(1, 1))
    np.testing.assert_allclose(res.plan, [[1.0]], rtol=1e-15)
    assert res.converged


def test_constant_cost_gives_uniform_plan():
    res = sinkhorn(np.full((2, 2), 0.3))
    np.testing.assert_allclose(res.plan, np.full((2, 2), 0.25), rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_small_epsilon_close_to_assignment(seed):
    cost = np.random.default_rng(seed).uniform(0, 2, (3, 3))
    res = sinkhorn(cost, None, TIGHT_SMALL_EPS)
    best = brute_force_assignment(cost)
    assert abs(res.cost_against(cost) - best) / max(best, 1e-9) <= 0.02


def test_errors():
    with pytest.raises(ShapeError):
        sinkhorn(np.ones((2, 3)), Marginals.uniform(3, 2))
    with pytest.raises(InputError):
        sinkhorn(np.array([[np.nan]]))


def test_residual_invariants_and_positivity(rng):
    for _ in range(10):
        n, m = rng.integers(2, 9, 2)
        cost = rng.uniform(0, 2, (n, m))
        res = sinkhorn(cost)
        assert res.converged
        assert res.row_residual <= 1e-2 and res.col_residual <= 1e-2
        assert res.marginal_residual == max(res.row_residual, res.col_residual)
        assert res.plan.min() > 0
        assert abs(np.abs(res.plan.sum(1) - 1 / n).sum() - res.row_residual) < 1e-12


def test_residual_non_increasing(rng):
    for _ in range(10):
        cost = rng.uniform(0, 2, (6, 5))
        res = sinkhorn(cost, None, SinkhornConfig(1e-2, 300, 1e-12))
        h = res.residual_history
        assert all(h[k + 1] <= h[k] + 1e-12 for k in range(len(h) - 1))


def test_non_convergence_is_reported_not_raised():
    cost = np.random.default_rng(0).uniform(0, 2, (5, 5))
    res = sinkhorn(cost, None, SinkhornConfig(1e-3, 2, 1e-9))
    assert not res.converged and res.iterations_used == 2


def test_epsilon_consistency(rng):
    # 1e-9 slack applies between converged runs; a run stopped by the
    # iteration cap is only accurate to about its residual times the cost range
    strict = 0
    for _ in range(10):
        cost = rng.uniform(0, 2, (4, 4))
        runs = [sinkhorn(cost, None, SinkhornConfig(eps, 20000, 1e-9)) for eps in (1e-1, 3e-2, 1e-2, 1e-3)]
        costs = [r.cost_against(cost) for r in runs]
        for k in range(3):
            lo, hi = runs[k], runs[k + 1]
            slack = 1e-9
            if lo.converged and hi.converged:
                strict += 1
            else:
                slack += 2 * cost.max() * (lo.marginal_residual + hi.marginal_residual)
            assert costs[k + 1] <= costs[k] + slack, costs
    assert strict > 0


def test_deterministic():
    cost = np.random.default_rng(3).uniform(0, 2, (7, 5))
    assert sinkhorn(cost).plan.tobytes() == sinkhorn(cost).plan.tobytes()


def test_symmetric_square_transposes():
    rng = np.random.default_rng(4)
    c = rng.uniform(0, 2, (4, 4))
    c = 0.5 * (c + c.T)
    fwd, bwd = solve_symmetric(c, None, TIGHT)
    assert fwd.converged and bwd.converged
    np.testing.assert_allclose(bwd.plan, fwd.plan.T, atol=1e-9)


def test_symmetric_one_by_one():
    fwd, bwd = solve_symmetric(np.array([[1.3]]))
    np.testing.assert_allclose(fwd.plan, [[1.0]])
    np.testing.assert_allclose(bwd.plan, [[1.0]])


def test_symmetric_rectangular_marginals():
    cost = np.random.default_rng(5).uniform(0, 2, (4, 3))
    cfg = SinkhornConfig()
    fwd, bwd = solve_symmetric(cost, None, cfg)
    assert fwd.plan.shape == (4, 3) and bwd.plan.shape == (3, 4)
    for res, (a, b) in ((fwd, (4, 3)), (bwd, (3, 4))):
        assert np.abs(res.plan.sum(1) - 1 / a).sum() <= cfg.tol
        assert np.abs(res.plan.sum(0) - 1 / b).sum() <= cfg.tol


def test_oracle_examples():
    plan, value = exact_ot_oracle(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert value == 0.0
    np.testing.assert_array_equal(plan, np.diag([0.5, 0.5]))
    plan, value = exact_ot_oracle(np.array([[0.42]]))
    assert value == 0.42


@pytest.mark.parametrize("seed", range(10))
def test_oracle_equals_brute_force(seed):
    cost = np.random.default_rng(seed).uniform(0, 2, (3, 3))
    _, value = exact_ot_oracle(cost)
    assert value == pytest.approx(brute_force_assignment(cost), abs=1e-15)


def test_oracle_tie_break_lexicographic():
    plan, _ = exact_ot_oracle(np.zeros((3, 3)))
    np.testing.assert_array_equal(plan, np.eye(3) / 3)


@pytest.mark.parametrize("seed", range(40))
def test_oracle_general_marginals_match_linprog(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 7, 2)
    a = rng.uniform(0.1, 1, n)
    b = rng.uniform(0.1, 1, m)
    marg = Marginals(a / a.sum(), b / b.sum())
    cost = rng.uniform(0, 2, (n, m))
    plan, value = exact_ot_oracle(cost, marg)
    assert value == pytest.approx(lp_optimum(cost, marg.a, marg.b), abs=1e-9)
    assert plan.min() >= 0
    np.testing.assert_allclose(plan.sum(1), marg.a, atol=1e-12)
    np.testing.assert_allclose(plan.sum(0), marg.b, atol=1e-12)


def test_oracle_rectangular_uniform_matches_linprog():
    cost = np.random.default_rng(9).uniform(0, 2, (4, 6))
    _, value = exact_ot_oracle(cost)
    assert value == pytest.approx(lp_optimum(cost, np.full(4, 0.25), np.full(6, 1 / 6)), abs=1e-9)


def test_oracle_capacity():
    with pytest.raises(CapacityError):
        exact_ot_oracle(np.zeros((7, 2)))


def test_entropic_objective_examples():
    assert entropic_objective([[1.0]], [[0.8]], 0.1) == pytest.approx(0.8 - 0.1, abs=1e-15)
    value = entropic_objective(np.full((2, 2), 0.25), np.zeros((2, 2)), 1.0)
    assert value == pytest.approx(np.log(0.25) - 1.0, abs=1e-15)
    assert np.isfinite(entropic_objective([[0.5, 0.0], [0.0, 0.5]], np.ones((2, 2)), 0.1))
    with pytest.raises(InputError):
        entropic_objective([[-0.1]], [[0.0]], 0.1)


def test_round_to_marginals_is_feasible_and_close(rng):
    cost = rng.uniform(0, 2, (5, 4))
    res = sinkhorn(cost, None, SinkhornConfig(3e-2, 3, 1e-9))
    rounded = round_to_marginals(res.plan, np.full(5, 0.2), np.full(4, 0.25))
    assert rounded.min() >= 0
    np.testing.assert_allclose(rounded.sum(1), 0.2, atol=1e-15)
    np.testing.assert_allclose(rounded.sum(0), 0.25, atol=1e-15)
    assert np.abs(rounded - res.plan).sum() <= 2 * (res.row_residual + res.col_residual) + 1e-15


def test_default_settings_64_fast():
    cost = np.random.default_rng(0).uniform(0, 2, (64, 64))
    start = time.perf_counter()
    res = sinkhorn(cost)
    assert time.perf_counter() - start < 1.0
    assert res.converged
