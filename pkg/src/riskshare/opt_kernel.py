"""Small dense optimization routines: a two-phase simplex and a projected
gradient loop over densities.

Instances here are tiny (variables on the order of the number of states plus
a handful of scenario weights), so the solvers favor determinism and
anti-cycling correctness over speed: Bland's rule, no scaling, no presolve.
Identical inputs produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    InfeasibleError,
    IterationLimitError,
    UnsupportedFamilyError,
    ValidationError,
)
from .prob_core import Density, ProbSpace

_RC_TOL = 1e-10     # reduced-cost threshold for entering columns
_PIV_TOL = 1e-10    # minimum magnitude for a pivot element
_FEAS_TOL = 1e-9    # phase-1 residual above which the problem is infeasible
_ITER_FACTOR = 10_000  # iteration cap = factor * number of columns


@dataclass(frozen=True, eq=False)
class LpProblem:
    """maximize objective @ z  subject to  a_ub z <= b_ub, a_eq z = b_eq, z >= 0."""

    objective: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValidationError("objective must be a nonempty 1-d vector")
        n = c.size
        a_ub, b_ub = _as_constraints(self.a_ub, self.b_ub, n, "ub")
        a_eq, b_eq = _as_constraints(self.a_eq, self.b_eq, n, "eq")
        for arr, name in ((c, "objective"), (a_ub, "a_ub"), (b_ub, "b_ub"),
                          (a_eq, "a_eq"), (b_eq, "b_eq")):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must contain only finite entries")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "a_ub", a_ub)
        object.__setattr__(self, "b_ub", b_ub)
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "b_eq", b_eq)

    @property
    def n_vars(self) -> int:
        return int(self.objective.size)


def _as_constraints(a, b, n, name):
    if a is None and b is None:
        return np.zeros((0, n)), np.zeros(0)
    if a is None or b is None:
        raise ValidationError(f"a_{name} and b_{name} must be given together")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != (b.size, n):
        raise ValidationError(
            f"a_{name} has shape {a.shape}; expected ({b.size}, {n})"
        )
    return a, b


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str                      # "optimal" | "infeasible" | "unbounded"
    point: np.ndarray | None = None
    value: float | None = None


def _objective_row(tableau, basis, cost):
    """Reduced-cost row z - c for the current basis (rhs slot carries c_B b)."""
    row = np.concatenate([-cost, [0.0]])
    for i, b in enumerate(basis):
        if cost[b] != 0.0:
            row += cost[b] * tableau[i]
    return row


def _pivot(tableau, obj, basis, row, col):
    tableau[row] /= tableau[row, col]
    piv = tableau[row].copy()
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, piv)
    obj -= obj[col] * piv
    basis[row] = col


def _simplex_loop(tableau, obj, basis, allowed_cols, cap, counter):
    """Run Bland-rule pivots to optimality. Returns 'optimal' or 'unbounded'."""
    while True:
        entering = -1
        for j in allowed_cols:
            if obj[j] < -_RC_TOL:
                entering = j
                break
        if entering < 0:
            return "optimal"
        col = tableau[:, entering]
        rhs = tableau[:, -1]
        best_ratio = None
        leave = -1
        for i in range(tableau.shape[0]):
            if col[i] > _PIV_TOL:
                ratio = rhs[i] / col[i]
                if leave < 0 or ratio < best_ratio - 1e-12:
                    best_ratio = ratio
                    leave = i
                elif abs(ratio - best_ratio) <= 1e-12 and basis[i] < basis[leave]:
                    leave = i
        if leave < 0:
            return "unbounded"
        _pivot(tableau, obj, basis, leave, entering)
        counter[0] += 1
        if counter[0] > cap:
            raise IterationLimitError(
                f"simplex iteration cap {cap} exceeded (cycling guard)"
            )


def lp_solve(problem: LpProblem) -> LpSolution:
    """Dense two-phase simplex with Bland's rule.

    Deterministic given the input; primal residuals of an optimal point are
    verified to be within 1e-9.
    """
    n = problem.n_vars
    m_ub = problem.b_ub.size
    m = m_ub + problem.b_eq.size
    n_cols = n + m_ub  # originals + slacks

    if m == 0:
        # No constraints: optimum at 0 unless some objective entry is positive.
        if np.any(problem.objective > _RC_TOL):
            return LpSolution("unbounded")
        return LpSolution("optimal", np.zeros(n), 0.0)

    body = np.zeros((m, n_cols))
    body[:m_ub, :n] = problem.a_ub
    body[:m_ub, n:] = np.eye(m_ub)
    body[m_ub:, :n] = problem.a_eq
    rhs = np.concatenate([problem.b_ub, problem.b_eq])
    neg = rhs < 0.0
    body[neg] *= -1.0
    rhs = np.abs(rhs)

    # Phase 1: artificial basis, minimize the artificial mass.
    total_cols = n_cols + m
    tableau = np.zeros((m, total_cols + 1))
    tableau[:, :n_cols] = body
    tableau[:, n_cols:total_cols] = np.eye(m)
    tableau[:, -1] = rhs
    basis = list(range(n_cols, total_cols))
    cost1 = np.zeros(total_cols)
    cost1[n_cols:] = -1.0
    obj = _objective_row(tableau, basis, cost1)
    cap = _ITER_FACTOR * total_cols
    counter = [0]
    status = _simplex_loop(tableau, obj, basis, range(n_cols), cap, counter)
    if status != "optimal":  # phase 1 is always bounded below by 0
        raise ConvergenceError("phase-1 simplex reported unbounded")
    if obj[-1] < -_FEAS_TOL:
        return LpSolution("infeasible")

    # Drive artificials out of the basis; drop rows that are redundant.
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n_cols:
            pivot_col = -1
            for j in range(n_cols):
                if j not in basis and abs(tableau[i, j]) > _PIV_TOL:
                    pivot_col = j
                    break
            if pivot_col >= 0:
                _pivot(tableau, obj, basis, i, pivot_col)
            else:
                keep[i] = False
    tableau = tableau[keep]
    basis = [b for i, b in enumerate(basis) if keep[i]]

    # Phase 2 on the original columns only.
    tableau = np.concatenate([tableau[:, :n_cols], tableau[:, -1:]], axis=1)
    cost2 = np.zeros(n_cols)
    cost2[:n] = problem.objective
    obj = _objective_row(tableau, basis, cost2)
    status = _simplex_loop(tableau, obj, basis, range(n_cols), cap, counter)
    if status == "unbounded":
        return LpSolution("unbounded")

    full = np.zeros(n_cols)
    for i, b in enumerate(basis):
        full[b] = tableau[i, -1]
    x = full[:n]
    _verify_residuals(problem, x)
    x = np.where((x < 0.0) & (x > -_FEAS_TOL), 0.0, x)
    return LpSolution("optimal", x, float(problem.objective @ x))


def _verify_residuals(problem: LpProblem, x: np.ndarray):
    if problem.b_eq.size:
        r = np.max(np.abs(problem.a_eq @ x - problem.b_eq))
        if r > _FEAS_TOL:
            raise ConvergenceError(f"equality residual {r:.3e} exceeds 1e-9",
                                   best_point=x, residual=float(r))
    if problem.b_ub.size:
        r = np.max(problem.a_ub @ x - problem.b_ub)
        if r > _FEAS_TOL:
            raise ConvergenceError(f"inequality residual {r:.3e} exceeds 1e-9",
                                   best_point=x, residual=float(r))
    if np.min(x, initial=0.0) < -_FEAS_TOL:
        raise ConvergenceError("negative variable beyond tolerance",
                               best_point=x, residual=float(-np.min(x)))


# ---------------------------------------------------------------------------
# Maximization over densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityObjective:
    """Score q -> E_Q[payoff] - kl_weight * KL(Q || P); concave in q."""

    payoff: np.ndarray
    kl_weight: float = 0.0

    def __post_init__(self):
        if self.kl_weight < 0.0:
            raise ValidationError("kl_weight must be nonnegative")


@dataclass(frozen=True, eq=False)
class DensityConstraints:
    """Feasible densities beyond {q >= 0, E_P[q] = 1}.

    upper: entrywise cap q <= upper (np.inf entries mean uncapped).
    member_hulls: for each matrix D (rows are densities), q must lie in
        the convex hull of the rows.
    dominating_hulls: for each (gamma, D), there must exist a convex
        combination d of the rows of D with q <= gamma * d entrywise.
    """

    upper: np.ndarray | None = None
    member_hulls: tuple = ()
    dominating_hulls: tuple = ()

    def polyhedral_only(self) -> bool:
        return not self.member_hulls and not self.dominating_hulls


def maximize_over_densities(
    space: ProbSpace,
    objective: DensityObjective,
    constraints: DensityConstraints = DensityConstraints(),
    start: np.ndarray | None = None,
) -> tuple[Density, float]:
    """Maximize the score over feasible densities.

    Linear scores (kl_weight == 0) go through the simplex; entropic-penalized
    scores run projected gradient ascent on the capped density simplex,
    warm-started at the stationarity (capped-Gibbs) point unless ``start``
    overrides it. Raises InfeasibleError when no density satisfies the
    constraints, and ConvergenceError (with the best iterate) when the
    gradient loop stalls.
    """
    x = space.rv(objective.payoff)
    if objective.kl_weight == 0.0:
        return _linear_density_lp(space, x, constraints)
    if not constraints.polyhedral_only():
        raise UnsupportedFamilyError(
            "entropic-penalized scores support only box caps; scenario-hull "
            "constraints mixed with a KL penalty have no solver here"
        )
    q, value = _projected_ascent(space, x, objective.kl_weight,
                                 constraints.upper, start)
    return space.density(q), value


def _linear_density_lp(space, x, constraints):
    p = space.probs
    n = space.n_states
    hull_sizes = [np.atleast_2d(np.asarray(d, dtype=float)).shape[0]
                  for d in constraints.member_hulls]
    dom = [(float(g), np.atleast_2d(np.asarray(d, dtype=float)))
           for g, d in constraints.dominating_hulls]
    dom_sizes = [d.shape[0] for _, d in dom]
    n_total = n + sum(hull_sizes) + sum(dom_sizes)

    c = np.zeros(n_total)
    c[:n] = p * x

    eq_rows, eq_rhs = [], []
    row = np.zeros(n_total)
    row[:n] = p
    eq_rows.append(row)
    eq_rhs.append(1.0)

    offset = n
    for d, size in zip(constraints.member_hulls, hull_sizes):
        dmat = np.atleast_2d(np.asarray(d, dtype=float))
        block = np.zeros((n, n_total))
        block[:, :n] = -np.eye(n)
        block[:, offset:offset + size] = dmat.T
        eq_rows.extend(block)
        eq_rhs.extend(np.zeros(n))
        srow = np.zeros(n_total)
        srow[offset:offset + size] = 1.0
        eq_rows.append(srow)
        eq_rhs.append(1.0)
        offset += size
    for (_, dmat), size in zip(dom, dom_sizes):
        srow = np.zeros(n_total)
        srow[offset:offset + size] = 1.0
        eq_rows.append(srow)
        eq_rhs.append(1.0)
        offset += size

    ub_rows, ub_rhs = [], []
    if constraints.upper is not None:
        upper = np.asarray(constraints.upper, dtype=float)
        for i in range(n):
            if np.isfinite(upper[i]):
                row = np.zeros(n_total)
                row[i] = 1.0
                ub_rows.append(row)
                ub_rhs.append(float(upper[i]))
    offset = n + sum(hull_sizes)
    for (gamma, dmat), size in zip(dom, dom_sizes):
        block = np.zeros((n, n_total))
        block[:, :n] = np.eye(n)
        block[:, offset:offset + size] = -gamma * dmat.T
        ub_rows.extend(block)
        ub_rhs.extend(np.zeros(n))
        offset += size

    problem = LpProblem(
        objective=c,
        a_ub=np.array(ub_rows) if ub_rows else None,
        b_ub=np.array(ub_rhs) if ub_rhs else None,
        a_eq=np.array(eq_rows),
        b_eq=np.array(eq_rhs),
    )
    sol = lp_solve(problem)
    if sol.status == "infeasible":
        raise InfeasibleError("no density satisfies the feasibility constraints")
    if sol.status != "optimal":
        raise ConvergenceError(f"density LP ended with status {sol.status}")
    return space.density(sol.point[:n]), float(sol.value)


def project_to_density(space: ProbSpace, v: np.ndarray,
                       upper: np.ndarray | None = None) -> np.ndarray:
    """Euclidean projection of v onto {q : 0 <= q <= upper, E_P[q] = 1}.

    The projection is clip(v - theta * p, 0, upper) for the multiplier theta
    solving E_P[q(theta)] = 1; that mass profile is piecewise linear and
    decreasing in theta, so the crossing segment is found exactly from the
    sorted clip breakpoints. Feasibility requires E_P[upper] >= 1.
    """
    p = space.probs
    v = np.asarray(v, dtype=float)
    if upper is None:
        u = np.full(space.n_states, np.inf)
    else:
        u = np.asarray(upper, dtype=float)
        if np.any(u < -1e-12):
            raise ValidationError("upper caps must be nonnegative")
        cap_mass = float(np.dot(p, np.minimum(u, np.finfo(float).max)))
        if cap_mass < 1.0 - 1e-9:
            raise InfeasibleError(
                f"caps admit total mass {cap_mass!r} < 1; no density exists"
            )

    def mass(theta):
        return float(np.dot(p, np.clip(v - theta * p, 0.0, u)))

    def solve_at(theta_probe, lo, hi):
        # Active sets are constant between breakpoints; solve the linear
        # equation for theta there and keep it inside the bracket.
        vals = v - theta_probe * p
        free = (vals > 0.0) & (vals < u)
        capped = vals >= u
        slope = float(np.dot(p[free], p[free]))
        if slope <= 0.0:
            return lo
        const = float(np.dot(p[free], v[free])) + float(np.dot(p[capped], u[capped]))
        theta = (const - 1.0) / slope
        return min(max(theta, lo), hi)

    points = [v / p]
    finite_u = np.isfinite(u)
    if np.any(finite_u):
        points.append((v[finite_u] - u[finite_u]) / p[finite_u])
    bps = np.unique(np.concatenate(points))
    masses = np.array([mass(b) for b in bps])
    if masses[0] <= 1.0:
        theta = solve_at(bps[0] - 1.0, -np.inf, bps[0])
    else:
        k = int(np.searchsorted(-masses, -1.0))  # first index with mass < 1
        if k >= bps.size:
            theta = bps[-1]
        elif masses[k] == 1.0:
            theta = bps[k]
        else:
            theta = solve_at(0.5 * (bps[k - 1] + bps[k]), bps[k - 1], bps[k])
    return np.clip(v - theta * p, 0.0, u)


_PGA_GRAD_TOL = 1e-8
_PGA_MAX_ITER = 50_000


def capped_gibbs_point(space: ProbSpace, x, kappa: float,
                       upper: np.ndarray | None = None) -> np.ndarray:
    """Stationarity point of q -> E_Q[x] - kappa * KL(Q||P) on the capped
    density simplex: q = min(cap, exp((x - theta)/kappa - 1)) with the
    multiplier theta fixed by E_P[q] = 1 (bisection)."""
    p = space.probs
    x = np.asarray(x, dtype=float)
    if upper is None:
        u = np.full(x.size, np.inf)
    else:
        u = np.asarray(upper, dtype=float)
        if float(np.dot(p, np.minimum(u, np.finfo(float).max))) <= 1.0 + 1e-12:
            return np.minimum(u, np.finfo(float).max)

    def point(theta):
        return np.minimum(u, np.exp(np.minimum((x - theta) / kappa - 1.0, 700.0)))

    lo = hi = 0.0
    step = kappa + float(np.max(np.abs(x)))
    while float(np.dot(p, point(lo))) < 1.0:
        lo -= step
        step *= 2.0
    step = kappa + float(np.max(np.abs(x)))
    while float(np.dot(p, point(hi))) > 1.0:
        hi += step
        step *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.dot(p, point(mid))) >= 1.0:
            lo = mid
        else:
            hi = mid
    return point(0.5 * (lo + hi))


def _projected_ascent(space, x, kappa, upper, start=None):
    """Projected gradient ascent for q -> E_Q[x] - kappa * KL(Q||P).

    Backtracking uses the proximal-gradient (quadratic model) test, which
    keeps the step below the local inverse curvature and the objective
    monotone; convergence is declared when the unit-step gradient-mapping
    norm drops to 1e-8.
    """
    p = space.probs

    def score(q):
        pos = q > 0.0
        ent = np.zeros_like(q)
        ent[pos] = q[pos] * np.log(q[pos])
        return float(np.dot(p, x * q) - kappa * np.dot(p, ent))

    def grad(q):
        return p * (x - kappa * (np.log(np.maximum(q, 1e-300)) + 1.0))

    if start is None:
        start = capped_gibbs_point(space, x, kappa, upper)
    q = project_to_density(space, np.asarray(start, dtype=float), upper)
    t = 1.0
    f_q = score(q)
    best_q, best_res = q, np.inf
    for _ in range(_PGA_MAX_ITER):
        g = grad(q)
        reference = project_to_density(space, q + g, upper)
        residual = float(np.linalg.norm(q - reference))
        if residual < best_res:
            best_q, best_res = q, residual
        if residual <= _PGA_GRAD_TOL:
            return q, score(q)
        # Quadratic-model test with an absolute slack so rounding-level
        # objective noise near the optimum cannot reject useful steps.
        slack = 1e-14 * (1.0 + abs(f_q))
        while True:
            q_new = project_to_density(space, q + t * g, upper)
            delta = q_new - q
            f_new = score(q_new)
            model = f_q + float(np.dot(g, delta)) - float(np.dot(delta, delta)) / (2.0 * t)
            if f_new >= model - slack:
                break
            t *= 0.5
            if t < 1e-14:
                t = 1.0  # step at rounding floor: keep the iterate, retry
                q_new, f_new = q, f_q
                break
        q, f_q = q_new, f_new
        t = min(t * 1.2, 1e4)
    raise ConvergenceError(
        f"projected ascent did not reach gradient-mapping norm {_PGA_GRAD_TOL} "
        f"within {_PGA_MAX_ITER} iterations",
        best_point=best_q, residual=best_res,
    )
