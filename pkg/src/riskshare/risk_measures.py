"""Risk measures on finite spaces and their convex conjugates.

Five families are supported:

* ``Entropic(gamma)``: gamma * log E_P[exp(x / gamma)], conjugate
  gamma * KL(Q || P).
* ``ExpectedShortfall(alpha)``: average of the worst alpha probability mass
  of losses; equivalently the supremum of E_Q[x] over densities capped at
  1/alpha. Coherent.
* ``ScenarioSet(densities)``: supremum of E_Q[x] over a finite scenario
  hull. Coherent.
* ``Dilation(base, gamma)``: gamma * base(x / gamma). Leaves coherent
  measures unchanged; rescales the entropic family's tolerance.
* ``Inflation(base, gamma)``: enlarges a coherent base's scenario set by a
  factor gamma >= 1 (intersected with the probability densities); generates
  expected shortfall from the plain expectation.

Evaluation (``rho``), penalty (``conjugate``), and the attained dual
optimizer (``dual_solve``) are plain functions dispatching on the spec type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import opt_kernel
from .errors import ValidationError
from .prob_core import Density, ProbSpace, kl_divergence

# Shared cutoff for the 0-vs-infinity decision in coherent conjugates:
# constraint residuals up to this size still count as feasible.
MEMBERSHIP_TOL = 1e-9


class RiskSpec:
    """Base marker for risk-measure specifications. Instances are immutable."""

    __slots__ = ()


@dataclass(frozen=True)
class Entropic(RiskSpec):
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValidationError("entropic risk tolerance must be finite and > 0")


@dataclass(frozen=True)
class ExpectedShortfall(RiskSpec):
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValidationError("quantile level must lie in (0, 1]")


@dataclass(frozen=True)
class ScenarioSet(RiskSpec):
    densities: tuple[Density, ...]

    def __post_init__(self):
        dens = tuple(self.densities)
        if not dens:
            raise ValidationError("scenario set must be nonempty")
        sizes = set()
        for d in dens:
            if not isinstance(d, Density):
                raise ValidationError("scenario members must be Density instances")
            sizes.add(d.q.size)
        if len(sizes) != 1:
            raise ValidationError("scenario members must share one dimension")
        object.__setattr__(self, "densities", dens)

    def matrix(self) -> np.ndarray:
        """Scenario densities stacked as rows."""
        return np.vstack([d.q for d in self.densities])

    def contains_reference(self, tol: float = MEMBERSHIP_TOL) -> bool:
        """Whether P itself (the all-ones density) is listed as a scenario."""
        return any(np.max(np.abs(d.q - 1.0)) <= tol for d in self.densities)


@dataclass(frozen=True)
class Dilation(RiskSpec):
    base: RiskSpec
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValidationError("dilation parameter must be finite and > 0")
        if not isinstance(self.base, RiskSpec):
            raise ValidationError("dilation base must be a RiskSpec")


@dataclass(frozen=True)
class Inflation(RiskSpec):
    base: RiskSpec
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 1.0):
            raise ValidationError("inflation parameter must be >= 1")
        if not isinstance(self.base, (ScenarioSet, ExpectedShortfall)):
            raise ValidationError(
                "inflation requires a base with a scenario-supremum dual form "
                "(ScenarioSet or ExpectedShortfall); entropic-type bases are rejected"
            )
        if isinstance(self.base, ScenarioSet) and not self.base.contains_reference():
            raise ValidationError(
                "inflation of a scenario set requires the all-ones density "
                "(the reference measure) among the scenarios"
            )


@dataclass(frozen=True)
class Penalty:
    """Extended-real conjugate value in [0, +inf]; math.inf is the explicit
    infinity marker and only ever feeds comparisons, never raw arithmetic."""

    value: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def scaled(self, factor: float) -> "Penalty":
        if factor <= 0.0:
            raise ValidationError("penalty scaling factor must be positive")
        return Penalty(self.value * factor)


INFINITE_PENALTY = Penalty(math.inf)
ZERO_PENALTY = Penalty(0.0)


def dilate(spec: RiskSpec, gamma: float) -> RiskSpec:
    """gamma-dilation of a spec. Coherent scenario sets are fixed points."""
    if not (math.isfinite(gamma) and gamma > 0.0):
        raise ValidationError("dilation parameter must be finite and > 0")
    if isinstance(spec, ScenarioSet) or gamma == 1.0:
        return spec
    return Dilation(spec, gamma)


def inflate(spec: RiskSpec, gamma: float) -> RiskSpec:
    """gamma-inflation of a coherent spec with a scenario-supremum dual form."""
    if not (math.isfinite(gamma) and gamma >= 1.0):
        raise ValidationError("inflation parameter must be >= 1")
    if gamma == 1.0:
        if not isinstance(spec, (ScenarioSet, ExpectedShortfall)):
            raise ValidationError(
                "inflation requires a ScenarioSet or ExpectedShortfall base"
            )
        if isinstance(spec, ScenarioSet) and not spec.contains_reference():
            raise ValidationError(
                "inflation of a scenario set requires the all-ones density "
                "among the scenarios"
            )
        return spec
    return Inflation(spec, gamma)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def rho(spec: RiskSpec, space: ProbSpace, x) -> float:
    """Evaluate the risk of a loss vector."""
    x = space.rv(x)
    if isinstance(spec, Entropic):
        return _entropic_value(space, spec.gamma, x)
    if isinstance(spec, ExpectedShortfall):
        value, _ = _es_sorting_rule(space, spec.alpha, x)
        return value
    if isinstance(spec, ScenarioSet):
        value, _ = _scenario_max(space, spec, x)
        return value
    if isinstance(spec, Dilation):
        return spec.gamma * rho(spec.base, space, x / spec.gamma)
    if isinstance(spec, Inflation):
        value, _ = _inflation_lp(space, spec, x)
        return value
    raise ValidationError(f"unknown risk spec {type(spec).__name__}")


def dual_solve(spec: RiskSpec, space: ProbSpace, x) -> tuple[float, Density]:
    """Risk value together with a density attaining the dual supremum
    E_Q[x] - conjugate(Q)."""
    x = space.rv(x)
    if isinstance(spec, Entropic):
        return _entropic_value(space, spec.gamma, x), gibbs_density(space, spec.gamma, x)
    if isinstance(spec, ExpectedShortfall):
        value, q = _es_sorting_rule(space, spec.alpha, x)
        return value, space.density(q)
    if isinstance(spec, ScenarioSet):
        value, q = _scenario_max(space, spec, x)
        return value, q
    if isinstance(spec, Dilation):
        value, q = dual_solve(spec.base, space, x / spec.gamma)
        return spec.gamma * value, q
    if isinstance(spec, Inflation):
        return _inflation_lp(space, spec, x)
    raise ValidationError(f"unknown risk spec {type(spec).__name__}")


def _entropic_value(space, gamma, x) -> float:
    # log-sum-exp with max shift: x / gamma can overflow for small gamma.
    scaled = x / gamma
    shift = float(np.max(scaled))
    return gamma * (shift + math.log(float(np.dot(space.probs, np.exp(scaled - shift)))))


def gibbs_density(space: ProbSpace, gamma: float, x) -> Density:
    """exp(x / gamma) / E_P[exp(x / gamma)]: the entropic dual optimizer."""
    x = space.rv(x)
    scaled = x / gamma
    shift = float(np.max(scaled))
    w = np.exp(scaled - shift)
    return space.density(w / float(np.dot(space.probs, w)))


def _es_sorting_rule(space, alpha, x) -> tuple[float, np.ndarray]:
    """Average of the worst alpha probability mass, with the boundary state
    carrying fractional density weight.

    States are ranked by loss descending, ties broken by state index, so the
    returned optimizer is a deterministic extreme point of {0 <= q <= 1/alpha,
    E_P[q] = 1}.
    """
    p = space.probs
    n = p.size
    order = np.lexsort((np.arange(n), -x))
    cum = np.cumsum(p[order])
    k = int(np.searchsorted(cum, alpha - 1e-12))
    if k >= n:
        k = n - 1
    before = float(cum[k - 1]) if k > 0 else 0.0
    q = np.zeros(n)
    q[order[:k]] = 1.0 / alpha
    q[order[k]] = (alpha - before) / (alpha * p[order[k]])
    return float(np.dot(p, q * x)), q


def _scenario_max(space, spec: ScenarioSet, x) -> tuple[float, Density]:
    best_value = -math.inf
    best = None
    for d in spec.densities:
        if d.q.size != space.n_states:
            raise ValidationError("scenario density dimension does not match space")
        v = float(np.dot(space.probs, d.q * x))
        if v > best_value:
            best_value, best = v, d
    return best_value, best


def _inflated_constraints(space, spec: Inflation) -> opt_kernel.DensityConstraints:
    if isinstance(spec.base, ExpectedShortfall):
        cap = spec.gamma / spec.base.alpha
        return opt_kernel.DensityConstraints(upper=np.full(space.n_states, cap))
    return opt_kernel.DensityConstraints(
        dominating_hulls=((spec.gamma, spec.base.matrix()),)
    )


def _inflation_lp(space, spec: Inflation, x) -> tuple[float, Density]:
    q, value = opt_kernel.maximize_over_densities(
        space,
        opt_kernel.DensityObjective(payoff=x),
        _inflated_constraints(space, spec),
    )
    return value, q


# ---------------------------------------------------------------------------
# Conjugates
# ---------------------------------------------------------------------------

def conjugate(spec: RiskSpec, space: ProbSpace, q: Density) -> Penalty:
    """Convex conjugate (penalty) of the spec at a density."""
    if q.q.size != space.n_states:
        raise ValidationError("density dimension does not match space")
    if isinstance(spec, Entropic):
        return Penalty(spec.gamma * kl_divergence(space, q))
    if isinstance(spec, ExpectedShortfall):
        if float(np.max(q.q)) <= 1.0 / spec.alpha + MEMBERSHIP_TOL:
            return ZERO_PENALTY
        return INFINITE_PENALTY
    if isinstance(spec, ScenarioSet):
        if hull_tv_distance(space, spec.matrix(), q) <= MEMBERSHIP_TOL:
            return ZERO_PENALTY
        return INFINITE_PENALTY
    if isinstance(spec, Dilation):
        return conjugate(spec.base, space, q).scaled(spec.gamma)
    if isinstance(spec, Inflation):
        if _inflation_feasible(space, spec, q):
            return ZERO_PENALTY
        return INFINITE_PENALTY
    raise ValidationError(f"unknown risk spec {type(spec).__name__}")


def hull_tv_distance(space: ProbSpace, scenario_matrix: np.ndarray, q: Density) -> float:
    """Total-variation distance from q to the convex hull of scenario rows.

    Solved as a small LP over hull weights and per-state slacks:
    minimize sum_i p_i s_i / 2 with |D^T lam - q| <= s.
    """
    dmat = np.atleast_2d(np.asarray(scenario_matrix, dtype=float))
    n = space.n_states
    j = dmat.shape[0]
    n_total = j + n  # hull weights then slacks
    c = np.zeros(n_total)
    c[j:] = -space.probs / 2.0  # maximize the negative TV mass

    a_eq = np.zeros((1, n_total))
    a_eq[0, :j] = 1.0
    b_eq = np.ones(1)

    a_ub = np.zeros((2 * n, n_total))
    b_ub = np.zeros(2 * n)
    a_ub[:n, :j] = dmat.T
    a_ub[:n, j:] = -np.eye(n)
    b_ub[:n] = q.q
    a_ub[n:, :j] = -dmat.T
    a_ub[n:, j:] = -np.eye(n)
    b_ub[n:] = -q.q

    sol = opt_kernel.lp_solve(opt_kernel.LpProblem(c, a_ub, b_ub, a_eq, b_eq))
    if sol.status != "optimal":
        raise ValidationError(f"hull distance LP ended with status {sol.status}")
    return -float(sol.value)


def _inflation_feasible(space, spec: Inflation, q: Density) -> bool:
    if isinstance(spec.base, ExpectedShortfall):
        return float(np.max(q.q)) <= spec.gamma / spec.base.alpha + MEMBERSHIP_TOL
    # Minimize the worst violation of q <= gamma * D^T lam over hull weights.
    dmat = spec.base.matrix()
    n = space.n_states
    j = dmat.shape[0]
    n_total = j + 1  # hull weights then the violation bound t
    c = np.zeros(n_total)
    c[-1] = -1.0

    a_eq = np.zeros((1, n_total))
    a_eq[0, :j] = 1.0
    b_eq = np.ones(1)

    a_ub = np.zeros((n, n_total))
    a_ub[:, :j] = -spec.gamma * dmat.T
    a_ub[:, -1] = -1.0
    b_ub = -q.q

    sol = opt_kernel.lp_solve(opt_kernel.LpProblem(c, a_ub, b_ub, a_eq, b_eq))
    if sol.status != "optimal":
        raise ValidationError(f"inflation feasibility LP ended with status {sol.status}")
    return -float(sol.value) <= MEMBERSHIP_TOL


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

def left_continuity_sweep(spec: RiskSpec, space: ProbSpace, x,
                          gammas) -> list[tuple[float, float]]:
    """Evaluate gamma -> rho(inflate(spec, gamma), x) on an ascending grid.

    Values are nondecreasing in gamma (constraint-set inclusion), and the
    map is left continuous on (1, inf), so shrinking the grid step shrinks
    the jump estimates at interior points.
    """
    grid = [float(g) for g in gammas]
    if not grid:
        raise ValidationError("gamma grid must be nonempty")
    if any(g < 1.0 for g in grid):
        raise ValidationError("gamma grid values must be >= 1")
    if any(b > a for a, b in zip(grid[1:], grid)):
        raise ValidationError("gamma grid must be ascending")
    x = space.rv(x)
    return [(g, rho(inflate(spec, g), space, x)) for g in grid]
