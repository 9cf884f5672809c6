"""Shared random generators for the test suite. Everything is driven by an
explicit numpy Generator so runs are reproducible."""

import numpy as np

import riskshare as rs


def random_space(rng, max_states=10, min_states=2) -> rs.ProbSpace:
    n = int(rng.integers(min_states, max_states + 1))
    p = rng.uniform(0.05, 1.0, n)
    return rs.ProbSpace(p / p.sum())


def random_rv(rng, space, scale=2.0) -> np.ndarray:
    return space.rv(rng.uniform(-scale, scale, space.n_states))


def random_density(rng, space) -> rs.Density:
    q = rng.uniform(0.0, 2.0, space.n_states) + 1e-3
    q /= float(np.dot(space.probs, q))
    return space.density(q)


def random_scenario_set(rng, space, n_scenarios=3, include_reference=True):
    dens = []
    if include_reference:
        dens.append(space.uniform_density())
    while len(dens) < n_scenarios:
        dens.append(random_density(rng, space))
    return rs.ScenarioSet(tuple(dens))


def random_spec(rng, space, variant=None) -> rs.RiskSpec:
    """One random spec; variant in {entropic, es, scenario, dilation, inflation}."""
    if variant is None:
        variant = rng.choice(["entropic", "es", "scenario", "dilation", "inflation"])
    if variant == "entropic":
        return rs.Entropic(float(rng.uniform(0.3, 3.0)))
    if variant == "es":
        return rs.ExpectedShortfall(float(rng.uniform(0.1, 1.0)))
    if variant == "scenario":
        return random_scenario_set(rng, space, int(rng.integers(1, 4)))
    if variant == "dilation":
        base = random_spec(rng, space, str(rng.choice(["entropic", "es"])))
        return rs.dilate(base, float(rng.uniform(0.5, 4.0)))
    if variant == "inflation":
        if rng.uniform() < 0.5:
            base = rs.ExpectedShortfall(float(rng.uniform(0.3, 1.0)))
        else:
            base = random_scenario_set(rng, space, int(rng.integers(1, 4)))
        return rs.inflate(base, float(rng.uniform(1.0, 4.0)))
    raise ValueError(variant)


def random_agents(rng, max_atoms=5) -> rs.AgentSpace:
    n = int(rng.integers(1, max_atoms + 1))
    return rs.AgentSpace(
        tuple(f"a{i}" for i in range(n)),
        rng.uniform(0.3, 2.0, n),
    )


def random_general_market(rng, space=None, max_atoms=4,
                          variants=("entropic", "es")) -> rs.Market:
    """General-family market; default variants keep the dual solver on the
    cheap KL+caps path."""
    if space is None:
        space = random_space(rng)
    agents = random_agents(rng, max_atoms)
    specs = tuple(random_spec(rng, space, str(rng.choice(list(variants))))
                  for _ in range(agents.n_atoms))
    return rs.Market.general(space, agents, rs.RiskFamily(specs))


def random_dilation_market(rng, space=None, max_atoms=6, base=None) -> rs.Market:
    if space is None:
        space = random_space(rng)
    agents = random_agents(rng, max_atoms)
    if base is None:
        base = rs.Entropic(float(rng.uniform(0.5, 2.0)))
    gammas = rng.uniform(0.3, 3.0, agents.n_atoms)
    return rs.Market.dilation(space, agents, base, gammas)


def random_inflation_market(rng, space=None, max_atoms=6, base=None) -> rs.Market:
    if space is None:
        space = random_space(rng)
    agents = random_agents(rng, max_atoms)
    if base is None:
        base = rs.ExpectedShortfall(float(rng.uniform(0.4, 1.0)))
    gammas = rng.uniform(1.0, 4.0, agents.n_atoms)
    return rs.Market.inflation(space, agents, base, gammas)


def zero_integral_noise(rng, agents, n_states, scale=0.3) -> np.ndarray:
    """Perturbation matrix whose Gelfand integral is exactly zero."""
    noise = rng.normal(0.0, scale, (agents.n_atoms, n_states))
    mean = (agents.weights @ noise) / agents.total_mass
    return noise - np.tile(mean, (agents.n_atoms, 1))
