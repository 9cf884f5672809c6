"""Command-line front end: load market spec files, run the solvers, write
machine-readable result records.

Spec files are JSON with one canonical schema (see README and the fixture
markets under ``markets/``). Result files are deterministic: identical spec
files and seeds produce byte-identical output, so wall-clock timing goes to
stderr instead of into the record.

Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
4 ill-posed market (value -inf), 5 unsupported family for the operation.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .agent_space import (
    AgentSpace,
    Allocation,
    RiskFamily,
    agent_positions,
    aumann_agents,
    finite_agents,
    shapley_agents,
    total_risk,
)
from .errors import (
    ConvergenceError,
    IllPosedError,
    RiskShareError,
    UnsupportedFamilyError,
    ValidationError,
)
from .infimal_convolution import (
    DilationProfile,
    InflationProfile,
    Market,
    nonattainment_experiment,
    optimal_allocation_dilated,
    optimal_allocation_inflated,
    value,
)
from .pareto import pareto_check
from .prob_core import ProbSpace
from .risk_measures import (
    Dilation,
    Entropic,
    ExpectedShortfall,
    Inflation,
    RiskSpec,
    ScenarioSet,
    left_continuity_sweep,
)

EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_ILL_POSED = 4
EXIT_UNSUPPORTED = 5


# ---------------------------------------------------------------------------
# Spec file parsing
# ---------------------------------------------------------------------------

def _need(doc: dict, key: str, path: str):
    if key not in doc:
        raise ValidationError(f"{path}.{key}: missing required field")
    return doc[key]


def _as_num(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{path}: expected a number, got {v!r}")
    return float(v)


def _as_vector(v, path: str) -> list[float]:
    if not isinstance(v, list) or not v:
        raise ValidationError(f"{path}: expected a nonempty array of numbers")
    return [_as_num(e, f"{path}[{i}]") for i, e in enumerate(v)]


def parse_risk_spec(doc, space: ProbSpace, path: str) -> RiskSpec:
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected a risk descriptor object")
    kind = _need(doc, "type", path)
    try:
        if kind == "entropic":
            return Entropic(_as_num(_need(doc, "gamma", path), f"{path}.gamma"))
        if kind in ("expected_shortfall", "es"):
            return ExpectedShortfall(_as_num(_need(doc, "alpha", path), f"{path}.alpha"))
        if kind == "scenario_set":
            rows = _need(doc, "densities", path)
            if not isinstance(rows, list) or not rows:
                raise ValidationError(f"{path}.densities: expected an array of vectors")
            dens = tuple(
                space.density(_as_vector(r, f"{path}.densities[{i}]"))
                for i, r in enumerate(rows)
            )
            return ScenarioSet(dens)
        if kind == "dilation":
            base = parse_risk_spec(_need(doc, "base", path), space, f"{path}.base")
            return Dilation(base, _as_num(_need(doc, "gamma", path), f"{path}.gamma"))
        if kind == "inflation":
            base = parse_risk_spec(_need(doc, "base", path), space, f"{path}.base")
            return Inflation(base, _as_num(_need(doc, "gamma", path), f"{path}.gamma"))
    except ValidationError as exc:
        if str(exc).startswith(path):
            raise
        raise ValidationError(f"{path}: {exc}") from exc
    raise ValidationError(f"{path}.type: unknown risk type {kind!r}")


def _parse_agent_space(doc, path: str) -> AgentSpace:
    kind = _need(doc, "kind", path)
    n = _need(doc, "n", path)
    if not isinstance(n, int) or n < 1:
        raise ValidationError(f"{path}.n: expected a positive integer")
    if kind == "finite":
        return finite_agents(n)
    if kind == "aumann":
        return aumann_agents(n)
    if kind == "shapley":
        return shapley_agents(n)
    raise ValidationError(f"{path}.kind: unknown agent space kind {kind!r}")


def _parse_atom_list(entries, path: str, want_risks: bool,
                     space: ProbSpace) -> tuple[AgentSpace, list[RiskSpec] | None]:
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"{path}: expected a nonempty array of agents")
    labels, weights, risks = [], [], []
    for i, entry in enumerate(entries):
        where = f"{path}[{i}]"
        if not isinstance(entry, dict):
            raise ValidationError(f"{where}: expected an agent object")
        label = str(_need(entry, "label", where))
        where = f"{path}[{i}] (atom {label!r})"
        weight = _as_num(_need(entry, "weight", where), f"{where}.weight")
        if weight <= 0.0:
            raise ValidationError(f"{where}.weight: must be > 0")
        labels.append(label)
        weights.append(weight)
        if want_risks:
            risks.append(parse_risk_spec(_need(entry, "risk", where), space,
                                         f"{where}.risk"))
        elif "risk" in entry:
            raise ValidationError(
                f"{where}.risk: give per-agent risks or a profile, not both"
            )
    agents = AgentSpace(tuple(labels), np.array(weights))
    return agents, (risks if want_risks else None)


def _formula_fn(doc, path: str):
    kind = _need(doc, "kind", path)
    if kind != "affine":
        raise ValidationError(f"{path}.kind: unknown formula kind {kind!r}")
    intercept = _as_num(_need(doc, "intercept", path), f"{path}.intercept")
    slope = _as_num(_need(doc, "slope", path), f"{path}.slope")
    return (lambda t: intercept + slope * t), intercept, slope


def load_market(doc: dict) -> tuple[Market, np.ndarray]:
    """Build a Market plus the loss vector from a parsed spec document."""
    if not isinstance(doc, dict):
        raise ValidationError("spec: expected a JSON object at top level")
    space = ProbSpace(np.array(_as_vector(_need(doc, "probs", "spec"), "spec.probs")))
    x = space.rv(_as_vector(_need(doc, "loss", "spec"), "spec.loss"))

    profile = doc.get("profile")
    if profile is None:
        agents, risks = _parse_atom_list(_need(doc, "agents", "spec"), "spec.agents",
                                         True, space)
        market = Market.general(space, agents, RiskFamily(tuple(risks)))
        return market, x

    if not isinstance(profile, dict):
        raise ValidationError("spec.profile: expected an object")
    if "agents" in doc:
        agents, _ = _parse_atom_list(doc["agents"], "spec.agents", False, space)
    elif "agent_space" in doc:
        agents = _parse_agent_space(doc["agent_space"], "spec.agent_space")
    else:
        raise ValidationError("spec: profile markets need 'agents' or 'agent_space'")

    kind = _need(profile, "kind", "spec.profile")
    base = parse_risk_spec(_need(profile, "base", "spec.profile"), space,
                           "spec.profile.base")
    if "gammas" in profile:
        gammas = np.array(_as_vector(profile["gammas"], "spec.profile.gammas"))
        if gammas.size != agents.n_atoms:
            raise ValidationError(
                f"spec.profile.gammas: {gammas.size} values for "
                f"{agents.n_atoms} atoms"
            )
    elif "gamma_formula" in profile:
        fn, _, _ = _formula_fn(profile["gamma_formula"], "spec.profile.gamma_formula")
        gammas = np.array([fn(t) for t in agent_positions(agents)])
    else:
        raise ValidationError("spec.profile: needs 'gammas' or 'gamma_formula'")

    if kind == "dilation":
        return Market.dilation(space, agents, base, gammas), x
    if kind == "inflation":
        target = profile.get("target_gamma")
        if target is not None:
            target = _as_num(target, "spec.profile.target_gamma")
        return Market.inflation(space, agents, base, gammas, target), x
    raise ValidationError(f"spec.profile.kind: unknown profile kind {kind!r}")


def _load_json(path: str, what: str) -> tuple[dict, str]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ValidationError(f"{what}: cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{what}: {path} is not valid JSON: {exc}") from exc
    return doc, hashlib.sha256(raw).hexdigest()


def _load_allocation(path: str) -> tuple[Allocation, str]:
    doc, digest = _load_json(path, "alloc")
    body = doc.get("allocation", doc)
    if not isinstance(body, dict) or "shares" not in body:
        raise ValidationError("alloc: expected an object with a 'shares' matrix")
    shares = body["shares"]
    if not isinstance(shares, list) or not shares:
        raise ValidationError("alloc.shares: expected a nonempty matrix")
    rows = [_as_vector(r, f"alloc.shares[{i}]") for i, r in enumerate(shares)]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError("alloc.shares: rows must have equal length")
    return Allocation(np.array(rows)), digest


# ---------------------------------------------------------------------------
# Result records
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_record(out_path: str, record: dict):
    text = json.dumps(_jsonable(record), sort_keys=True, indent=2) + "\n"
    path = Path(out_path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_csv(out_path: str, rows: list[tuple]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["parameter", "value", "gap"])
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    Path(out_path).write_text(buf.getvalue(), encoding="utf-8")


def _alloc_payload(agents: AgentSpace, alloc: Allocation) -> dict:
    return {"labels": list(agents.labels), "shares": _jsonable(alloc.shares)}


def _guarded(fn):
    """Map package errors to the documented exit codes; log timing to stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        try:
            fn(*args, **kwargs)
        except ValidationError as exc:
            _fail(EXIT_VALIDATION, exc)
        except IllPosedError as exc:
            _fail(EXIT_ILL_POSED, exc)
        except UnsupportedFamilyError as exc:
            _fail(EXIT_UNSUPPORTED, exc)
        except ConvergenceError as exc:
            _fail(EXIT_NO_CONVERGENCE, exc)
        except RiskShareError as exc:
            _fail(EXIT_VALIDATION, exc)
        finally:
            elapsed = time.perf_counter() - start
            click.echo(f"timing_s={elapsed:.6f}", err=True)

    return wrapper


def _fail(code: int, exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _spec_option(fn):
    fn = click.option("--spec", "spec_path", required=True,
                      type=click.Path(), help="Market spec file (JSON).")(fn)
    fn = click.option("--out", "out_path", required=True,
                      type=click.Path(), help="Result file to write.")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True,
                      help="Seed recorded for reproducibility.")(fn)
    fn = click.option("--tol", type=float, default=None,
                      help="Override the command's default tolerance.")(fn)
    return fn


@click.group()
def main():
    """Risk-sharing solver: values, allocations, Pareto checks, experiments."""


@main.command("value")
@_spec_option
@_guarded
def cmd_value(spec_path, out_path, seed, tol):
    """Sharing value of the market's loss, with dual certificate."""
    doc, digest = _load_json(spec_path, "spec")
    market, x = load_market(doc)
    result = value(market, x)
    record = {
        "command": "value",
        "spec_sha256": digest,
        "seed": seed,
        "tol": tol,
        "value": result.value,
        "attained": result.attained.value,
        "duality_gap": result.duality_gap,
        "dual_optimizer": _jsonable(result.dual_optimizer.q)
        if result.dual_optimizer is not None else None,
        "allocation": _alloc_payload(market.agents, result.allocation)
        if result.allocation is not None else None,
    }
    _write_record(out_path, record)


@main.command("allocate")
@_spec_option
@_guarded
def cmd_allocate(spec_path, out_path, seed, tol):
    """Optimal allocation for dilation/inflation profile markets."""
    doc, digest = _load_json(spec_path, "spec")
    market, x = load_market(doc)
    if isinstance(market.kind, DilationProfile):
        alloc = optimal_allocation_dilated(market, x)
    elif isinstance(market.kind, InflationProfile):
        alloc = optimal_allocation_inflated(market, x)
    else:
        raise UnsupportedFamilyError(
            "no optimal-allocation formula for general families; only "
            "dilation and inflation profiles are supported"
        )
    result = value(market, x)
    risk = total_risk(market.agents, market.family, market.space, alloc)
    record = {
        "command": "allocate",
        "spec_sha256": digest,
        "seed": seed,
        "tol": tol,
        "value": result.value,
        "total_risk": risk,
        "gap": risk - result.value,
        "attained": result.attained.value,
        "allocation": _alloc_payload(market.agents, alloc),
    }
    _write_record(out_path, record)


@main.command("pareto")
@click.option("--alloc", "alloc_path", required=True, type=click.Path(),
              help="Allocation file (JSON with a 'shares' matrix).")
@_spec_option
@_guarded
def cmd_pareto(spec_path, alloc_path, out_path, seed, tol):
    """Pareto-efficiency verdict for an allocation of the market's loss."""
    doc, digest = _load_json(spec_path, "spec")
    market, x = load_market(doc)
    alloc, alloc_digest = _load_allocation(alloc_path)
    verdict = pareto_check(market, x, alloc, tol=tol if tol is not None else 1e-7)
    record = {
        "command": "pareto",
        "spec_sha256": digest,
        "alloc_sha256": alloc_digest,
        "seed": seed,
        "tol": tol,
        "efficient": verdict.efficient,
        "excess": verdict.excess,
        "witness": _alloc_payload(market.agents, verdict.witness)
        if verdict.witness is not None else None,
    }
    _write_record(out_path, record)


def _sweep_base(market: Market) -> RiskSpec:
    if isinstance(market.kind, InflationProfile):
        return market.kind.base
    specs = set(market.family.specs)
    if len(specs) == 1:
        only = next(iter(specs))
        if isinstance(only, (ScenarioSet, ExpectedShortfall)):
            return only
    raise ValidationError(
        "sweep needs an inflation profile or a single shared coherent spec"
    )


def _parse_float_list(raw: str, name: str) -> list[float]:
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"{name}: expected comma-separated numbers") from exc
    if not values:
        raise ValidationError(f"{name}: expected at least one value")
    return values


@main.command("sweep")
@click.option("--gamma-grid", "gamma_grid", required=True,
              help="Comma-separated ascending inflation parameters, all >= 1.")
@_spec_option
@_guarded
def cmd_sweep(spec_path, out_path, seed, tol, gamma_grid):
    """Inflation value along a parameter grid (CSV next to the record)."""
    doc, digest = _load_json(spec_path, "spec")
    market, x = load_market(doc)
    grid = _parse_float_list(gamma_grid, "--gamma-grid")
    base = _sweep_base(market)
    points = left_continuity_sweep(base, market.space, x, grid)
    rows = []
    previous = None
    for g, v in points:
        gap = 0.0 if previous is None else v - previous
        rows.append((g, v, gap))
        previous = v
    record = {
        "command": "sweep",
        "spec_sha256": digest,
        "seed": seed,
        "tol": tol,
        "rows": [{"parameter": g, "value": v, "gap": gap} for g, v, gap in rows],
    }
    _write_record(out_path, record)
    _write_csv(str(out_path) + ".csv", rows)


@main.command("nonattain")
@click.option("--refinements", required=True,
              help="Comma-separated atom counts, e.g. 10,100,1000.")
@_spec_option
@_guarded
def cmd_nonattain(spec_path, out_path, seed, tol, refinements):
    """Discretization-gap experiment for a formula inflation profile."""
    doc, digest = _load_json(spec_path, "spec")
    market, x = load_market(doc)
    if not isinstance(market.kind, InflationProfile):
        raise ValidationError("nonattain needs an inflation profile market")
    profile = doc["profile"]
    if "gamma_formula" not in profile:
        raise ValidationError(
            "spec.profile.gamma_formula: required for the nonattain experiment"
        )
    fn, intercept, slope = _formula_fn(profile["gamma_formula"],
                                       "spec.profile.gamma_formula")
    target = market.kind.target_gamma
    if target is None:
        if slope <= 0.0:
            raise ValidationError(
                "spec.profile.target_gamma: required unless the formula slope "
                "is positive (then the intercept is the unattained infimum)"
            )
        target = intercept
    counts = [int(v) for v in _parse_float_list(refinements, "--refinements")]
    results = nonattainment_experiment(market.kind.base, fn, target,
                                       market.space, x, counts)
    rows = [(n, v, gap) for n, v, gap in results]
    record = {
        "command": "nonattain",
        "spec_sha256": digest,
        "seed": seed,
        "tol": tol,
        "target_gamma": target,
        "rows": [{"parameter": n, "value": v, "gap": gap} for n, v, gap in rows],
    }
    _write_record(out_path, record)
    _write_csv(str(out_path) + ".csv", rows)


if __name__ == "__main__":
    main()
