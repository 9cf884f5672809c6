"""Brute-force reference implementations, for tests only.

These deliberately avoid the code paths they check: the expected-shortfall
oracle solves the defining LP instead of the sorting rule, the sharing-value
oracle searches allocation space directly instead of using closed forms or
the dual, and the LP oracle enumerates basic solutions instead of pivoting.
Everything is capped at desk scale.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .agent_space import Allocation, total_risk
from .errors import ValidationError
from .infimal_convolution import Market
from .opt_kernel import LpProblem, LpSolution, lp_solve
from .prob_core import ProbSpace

ES_ORACLE_MAX_STATES = 12
BRUTE_FORCE_MAX_DIMS = 6
VERTEX_ENUM_MAX_VARS = 6
VERTEX_ENUM_MAX_CONSTRAINTS = 8
_POLISH_STEP_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Axis-aligned search grid: bounds per coordinate plus a point count."""

    lower: np.ndarray
    upper: np.ndarray
    points_per_axis: int

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValidationError("grid bounds must have matching shapes")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValidationError("grid bounds must be finite")
        if np.any(lo >= hi):
            raise ValidationError("grid lower bounds must be below upper bounds")
        if self.points_per_axis < 2:
            raise ValidationError("need at least two points per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def default_grid(x, n_dims: int, points_per_axis: int = 13) -> GridSpec:
    """Bounds of +-2 * sup|x| per coordinate; optimal allocations of the
    covered families stay inside this box."""
    bound = 2.0 * float(np.max(np.abs(np.asarray(x, dtype=float))))
    if bound == 0.0:
        bound = 1.0
    return GridSpec(np.full(n_dims, -bound), np.full(n_dims, bound), points_per_axis)


def es_lp_oracle(space: ProbSpace, alpha: float, x) -> float:
    """Expected shortfall by its defining LP: maximize E_Q[x] over densities
    capped at 1/alpha. Independent of the sorting-rule implementation."""
    if space.n_states > ES_ORACLE_MAX_STATES:
        raise ValidationError(
            f"oracle capped at {ES_ORACLE_MAX_STATES} states, got {space.n_states}"
        )
    if not (0.0 < alpha <= 1.0):
        raise ValidationError("quantile level must lie in (0, 1]")
    x = space.rv(x)
    n = space.n_states
    p = space.probs
    problem = LpProblem(
        objective=p * x,
        a_ub=np.eye(n),
        b_ub=np.full(n, 1.0 / alpha),
        a_eq=p.reshape(1, -1),
        b_eq=np.ones(1),
    )
    sol = lp_solve(problem)
    if sol.status != "optimal":
        raise ValidationError(f"oracle LP ended with status {sol.status}")
    return float(sol.value)


def brute_force_value(market: Market, x, grid: GridSpec) -> float:
    """Direct minimization of total risk over feasible allocations.

    Exhaustive grid search over the free coordinates (the last atom's row
    is pinned by feasibility), then coordinate descent with step halving
    down to 1e-6. For the convex objectives used here the result is within
    grid resolution of the true value and never below it.
    """
    x = market.space.rv(x)
    n_atoms = market.agents.n_atoms
    n_states = market.space.n_states
    n_free = (n_atoms - 1) * n_states
    if n_free > BRUTE_FORCE_MAX_DIMS:
        raise ValidationError(
            f"free allocation dimensions {n_free} exceed cap {BRUTE_FORCE_MAX_DIMS}"
        )
    if grid.lower.size not in (1, n_free) and n_free > 0:
        raise ValidationError("grid bounds do not match the free dimensions")

    weights = market.agents.weights

    def objective(free: np.ndarray) -> float:
        shares = np.empty((n_atoms, n_states))
        if n_atoms > 1:
            shares[:-1] = free.reshape(n_atoms - 1, n_states)
        covered = weights[:-1] @ shares[:-1] if n_atoms > 1 else 0.0
        shares[-1] = (x - covered) / weights[-1]
        return total_risk(market.agents, market.family, market.space,
                          Allocation(shares))

    if n_free == 0:
        return objective(np.zeros(0))

    lo = np.broadcast_to(grid.lower, (n_free,))
    hi = np.broadcast_to(grid.upper, (n_free,))
    axes = [np.linspace(lo[d], hi[d], grid.points_per_axis) for d in range(n_free)]
    best_val = np.inf
    best_pt = None
    for combo in itertools.product(*axes):
        pt = np.array(combo)
        val = objective(pt)
        if val < best_val:
            best_val, best_pt = val, pt

    step = float(np.max((hi - lo) / (grid.points_per_axis - 1)))
    pt = best_pt.copy()
    while step > _POLISH_STEP_FLOOR:
        improved = False
        for d in range(n_free):
            for delta in (step, -step):
                trial = pt.copy()
                trial[d] += delta
                val = objective(trial)
                if val < best_val - 1e-15:
                    best_val, pt = val, trial
                    improved = True
        if not improved:
            step *= 0.5
    return float(best_val)


def vertex_enum_lp(problem: LpProblem) -> LpSolution:
    """Exhaustive basic-solution enumeration for small LPs.

    Converts to standard equality form with slacks and tries every basis.
    Assumes a bounded feasible region (the random problems this oracle is
    used on include box constraints), so the optimum sits at a vertex.
    """
    n = problem.n_vars
    m_ub = problem.b_ub.size
    m = m_ub + problem.b_eq.size
    if n > VERTEX_ENUM_MAX_VARS or m > VERTEX_ENUM_MAX_CONSTRAINTS:
        raise ValidationError(
            f"oracle capped at {VERTEX_ENUM_MAX_VARS} vars / "
            f"{VERTEX_ENUM_MAX_CONSTRAINTS} constraints"
        )
    if m == 0:
        if np.any(problem.objective > 1e-10):
            raise ValidationError("unconstrained problem has no vertices")
        return LpSolution("optimal", np.zeros(n), 0.0)
    n_cols = n + m_ub
    body = np.zeros((m, n_cols))
    body[:m_ub, :n] = problem.a_ub
    body[:m_ub, n:] = np.eye(m_ub)
    body[m_ub:, :n] = problem.a_eq
    rhs = np.concatenate([problem.b_ub, problem.b_eq])

    # Vertices are basic solutions of a full-row-rank subsystem; dependent
    # rows are dropped here and enforced through the full residual check
    # below (so inconsistent duplicates still yield "infeasible").
    independent: list[int] = []
    for i in range(m):
        candidate = body[independent + [i]]
        if np.linalg.matrix_rank(candidate, tol=1e-9) == len(independent) + 1:
            independent.append(i)
    reduced, reduced_rhs = body[independent], rhs[independent]
    rank = len(independent)
    if rank > n_cols:
        raise ValidationError("more independent equations than columns")

    best_val = -np.inf
    best_pt = None
    for cols in itertools.combinations(range(n_cols), rank):
        sub = reduced[:, cols]
        try:
            basic = np.linalg.solve(sub, reduced_rhs)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(basic)) or np.min(basic) < -1e-9:
            continue
        z = np.zeros(n_cols)
        z[list(cols)] = basic
        if np.max(np.abs(body @ z - rhs)) > 1e-7:
            continue
        val = float(problem.objective @ z[:n])
        if val > best_val:
            best_val, best_pt = val, z[:n]
    if best_pt is None:
        return LpSolution("infeasible")
    return LpSolution("optimal", np.where(best_pt < 0.0, 0.0, best_pt), best_val)
