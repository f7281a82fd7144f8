"""Entropic optimal transport between token sets.

The solver works on dual potentials in the log domain so that kernels like
``exp(-2 / 0.03)`` never have to be formed explicitly.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InputError, ParameterError, ShapeError
from .linalg import as_matrix, as_vector, logsumexp

DEFAULT_EPSILON = 3e-2
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-2

ORACLE_MAX_SIDE = 6


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = DEFAULT_EPSILON
    max_iters: int = DEFAULT_MAX_ITERS
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ParameterError(f"max_iters must be an integer >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class Marginals:
    """Source weights ``a`` (length N) and target weights ``b`` (length L)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("a", "b"):
            w = as_vector(getattr(self, name), name)
            if w.size == 0 or np.any(w <= 0):
                raise InputError(f"marginal {name} must be non-empty with positive entries")
            if abs(w.sum() - 1.0) > 1e-12:
                raise InputError(f"marginal {name} sums to {w.sum()!r}, expected 1")
            object.__setattr__(self, name, w)

    @classmethod
    def uniform(cls, n, m):
        return cls(np.full(n, 1.0 / n), np.full(m, 1.0 / m))

    def swapped(self):
        return Marginals(self.b, self.a)


@dataclass
class TransportPlan:
    plan: np.ndarray
    iterations_used: int
    marginal_residual: float
    converged: bool
    row_residual: float = 0.0
    col_residual: float = 0.0
    residual_history: list = field(default_factory=list, repr=False)

    def cost_against(self, cost):
        return float(np.sum(self.plan * cost))


def _check_cost(cost, marg):
    cost = as_matrix(cost, "cost")
    if cost.shape != (marg.a.size, marg.b.size):
        raise ShapeError(
            f"cost has shape {cost.shape} but marginals have lengths {(marg.a.size, marg.b.size)}"
        )
    return cost


def _residuals(log_plan, log_a, log_b):
    plan = np.exp(log_plan)
    row = float(np.abs(plan.sum(axis=1) - np.exp(log_a)).sum())
    col = float(np.abs(plan.sum(axis=0) - np.exp(log_b)).sum())
    return row, col


def sinkhorn(cost, marg=None, cfg=None):
    """Solve entropic OT between ``marg.a`` and ``marg.b`` under ``cost``.

    Each iteration updates the row potential, then the column potential. The
    run stops as soon as both L1 marginal residuals drop to ``cfg.tol``;
    hitting ``cfg.max_iters`` first is not an error and is reported through
    ``converged=False``.
    """
    cfg = cfg or SinkhornConfig()
    cost = as_matrix(cost, "cost")
    if marg is None:
        marg = Marginals.uniform(*cost.shape)
    cost = _check_cost(cost, marg)
    eps = cfg.epsilon
    log_a = np.log(marg.a)
    log_b = np.log(marg.b)
    f = np.zeros(cost.shape[0])
    g = np.zeros(cost.shape[1])
    neg = -cost / eps

    history = []
    converged = False
    row_res = col_res = float("inf")
    it = 0
    for it in range(1, int(cfg.max_iters) + 1):
        f = eps * (log_a - logsumexp(neg + g[None, :] / eps, axis=1))
        g = eps * (log_b - logsumexp(neg + f[:, None] / eps, axis=0))
        log_plan = neg + (f[:, None] + g[None, :]) / eps
        row_res, col_res = _residuals(log_plan, log_a, log_b)
        history.append(max(row_res, col_res))
        if row_res <= cfg.tol and col_res <= cfg.tol:
            converged = True
            break

    plan = np.exp(neg + (f[:, None] + g[None, :]) / eps)
    return TransportPlan(
        plan=plan,
        iterations_used=it,
        marginal_residual=max(row_res, col_res),
        converged=converged,
        row_residual=row_res,
        col_residual=col_res,
        residual_history=history,
    )


def solve_symmetric(cost, marg=None, cfg=None):
    """Image-to-text and text-to-image plans, solved independently.

    Returns ``(T_it, T_ti)`` with ``T_it`` of shape (N, L) for ``cost`` and
    ``T_ti`` of shape (L, N) for ``cost.T`` with swapped marginals.
    """
    cost = as_matrix(cost, "cost")
    if marg is None:
        marg = Marginals.uniform(*cost.shape)
    forward = sinkhorn(cost, marg, cfg)
    backward = sinkhorn(np.ascontiguousarray(cost.T), marg.swapped(), cfg)
    return forward, backward


def entropic_objective(plan, cost, epsilon):
    """``<T, M> + eps * sum T (log T - 1)`` with ``0 log 0 = 0``."""
    plan = as_matrix(plan, "plan")
    cost = as_matrix(cost, "cost")
    if plan.shape != cost.shape:
        raise ShapeError(f"plan shape {plan.shape} != cost shape {cost.shape}")
    if np.any(plan < 0):
        raise InputError("plan has a negative entry")
    pos = plan > 0
    ent = np.zeros_like(plan)
    ent[pos] = plan[pos] * (np.log(plan[pos]) - 1.0)
    return float(np.sum(plan * cost) + epsilon * np.sum(ent))


def round_to_marginals(plan, a, b):
    """Nearby coupling with row sums exactly ``a`` and column sums exactly ``b``.

    Rows are scaled down to at most ``a``, then columns to at most ``b``, and
    the missing mass is restored with a rank-one correction. The result moves
    by at most twice the L1 marginal residual of ``plan``.
    """
    plan = as_matrix(plan, "plan")
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    rows = plan.sum(axis=1)
    x = plan * np.minimum(a / np.where(rows > 0, rows, 1.0), 1.0)[:, None]
    cols = x.sum(axis=0)
    y = x * np.minimum(b / np.where(cols > 0, cols, 1.0), 1.0)[None, :]
    err_r = np.maximum(a - y.sum(axis=1), 0.0)
    err_c = np.maximum(b - y.sum(axis=0), 0.0)
    mass = err_r.sum()
    if mass > 0:
        y = y + np.outer(err_r, err_c) / mass
    return y


def exact_ot_oracle(cost, marg=None):
    """Exact unregularized OT for instances with at most 6 rows and 6 columns.

    Square problems with uniform marginals are solved by enumerating every
    permutation coupling; ties keep the lexicographically smallest
    permutation. Anything else goes through the transportation simplex,
    started from the northwest-corner basis.

    Returns ``(plan, value)``.
    """
    cost = as_matrix(cost, "cost")
    n, m = cost.shape
    if n > ORACLE_MAX_SIDE or m > ORACLE_MAX_SIDE:
        raise CapacityError(f"exact oracle accepts at most {ORACLE_MAX_SIDE}x{ORACLE_MAX_SIDE}, got {n}x{m}")
    if marg is None:
        marg = Marginals.uniform(n, m)
    cost = _check_cost(cost, marg)
    if n == m and np.all(marg.a == 1.0 / n) and np.all(marg.b == 1.0 / m):
        return _permutation_oracle(cost)
    return _transportation_simplex(cost, marg.a, marg.b)


def _permutation_oracle(cost):
    n = cost.shape[0]
    rows = np.arange(n)
    best_perm, best = None, float("inf")
    for perm in itertools.permutations(range(n)):
        value = cost[rows, list(perm)].sum() / n
        if value < best:
            best_perm, best = perm, value
    plan = np.zeros_like(cost)
    plan[rows, list(best_perm)] = 1.0 / n
    return plan, float(best)


def _northwest_corner(a, b):
    n, m = a.size, b.size
    supply, demand = a.copy(), b.copy()
    plan = np.zeros((n, m))
    basis = []
    i = j = 0
    while i < n and j < m:
        q = min(supply[i], demand[j])
        plan[i, j] = q
        supply[i] -= q
        demand[j] -= q
        basis.append((i, j))
        # exactly one index advances per cell so the basis has n + m - 1 cells
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif supply[i] <= demand[j]:
            i += 1
        else:
            j += 1
    return plan, basis


def _potentials(cost, basis, n, m):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    pending = list(basis)
    while pending:
        rest = []
        for i, j in pending:
            if not np.isnan(u[i]):
                v[j] = cost[i, j] - u[i]
            elif not np.isnan(v[j]):
                u[i] = cost[i, j] - v[j]
            else:
                rest.append((i, j))
                continue
        if len(rest) == len(pending):
            raise RuntimeError("transportation basis is not a spanning tree")
        pending = rest
    return u, v


def _find_cycle(basis, enter):
    """Closed alternating row/column path through ``enter`` and basic cells."""
    cells = list(basis) + [enter]

    def walk(path, along_row):
        i, j = path[-1]
        for cell in cells:
            if cell == path[-1]:
                continue
            if along_row and cell[0] != i:
                continue
            if not along_row and cell[1] != j:
                continue
            if cell == enter:
                if not along_row and len(path) >= 4:
                    return path
                continue
            if cell in path:
                continue
            found = walk(path + [cell], not along_row)
            if found:
                return found
        return None

    return walk([enter], True)


def _transportation_simplex(cost, a, b, max_pivots=10_000):
    n, m = cost.shape
    plan, basis = _northwest_corner(a, b)
    for _ in range(max_pivots):
        u, v = _potentials(cost, basis, n, m)
        reduced = cost - u[:, None] - v[None, :]
        in_basis = np.zeros((n, m), dtype=bool)
        for i, j in basis:
            in_basis[i, j] = True
        candidates = np.argwhere((reduced < -1e-12) & ~in_basis)
        if candidates.size == 0:
            return plan, float(np.sum(plan * cost))
        # Bland's rule: smallest index enters, smallest index leaves on ties
        enter = tuple(int(k) for k in candidates[0])
        cycle = _find_cycle(basis, enter)
        minus = cycle[1::2]
        theta = min(plan[c] for c in minus)
        leaving = min(c for c in minus if plan[c] == theta)
        for k, c in enumerate(cycle):
            plan[c] += theta if k % 2 == 0 else -theta
        plan[leaving] = 0.0
        basis = [c for c in basis if c != leaving] + [enter]
    raise RuntimeError("transportation simplex did not terminate")
