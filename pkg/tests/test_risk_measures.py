import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import riskshare as rs
from riskshare.errors import ValidationError
from riskshare.oracle import es_lp_oracle
from riskshare.risk_measures import INFINITE_PENALTY, hull_tv_distance

from support import (
    random_density,
    random_rv,
    random_scenario_set,
    random_space,
    random_spec,
)

ALL_VARIANTS = ("entropic", "es", "scenario", "dilation", "inflation")


class TestSpecValidation:
    def test_entropic_needs_positive_gamma(self):
        with pytest.raises(ValidationError):
            rs.Entropic(0.0)

    def test_es_quantile_range(self):
        with pytest.raises(ValidationError):
            rs.ExpectedShortfall(0.0)
        with pytest.raises(ValidationError):
            rs.ExpectedShortfall(1.5)

    def test_scenario_set_nonempty(self):
        with pytest.raises(ValidationError):
            rs.ScenarioSet(())

    def test_inflation_gamma_at_least_one(self):
        with pytest.raises(ValidationError):
            rs.Inflation(rs.ExpectedShortfall(0.5), 0.9)

    def test_inflation_rejects_entropic_base(self):
        with pytest.raises(ValidationError):
            rs.inflate(rs.Entropic(1.0), 2.0)
        with pytest.raises(ValidationError):
            rs.inflate(rs.dilate(rs.Entropic(1.0), 2.0), 2.0)

    def test_inflation_scenario_base_requires_reference(self):
        sp = rs.ProbSpace([0.5, 0.5])
        no_ref = rs.ScenarioSet((sp.density([0.0, 2.0]),))
        with pytest.raises(ValidationError):
            rs.inflate(no_ref, 2.0)

    def test_dilate_rejects_nonpositive_gamma(self):
        with pytest.raises(ValidationError):
            rs.dilate(rs.Entropic(1.0), -1.0)


class TestRhoExamples:
    def test_entropic_constant_is_cash(self):
        sp = rs.ProbSpace([0.25, 0.75])
        for gamma in (0.5, 1.0, 3.0):
            assert rs.rho(rs.Entropic(gamma), sp, [2.5, 2.5]) == pytest.approx(2.5, abs=1e-12)

    def test_es_alpha_one_is_expectation(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            sp = random_space(rng)
            x = random_rv(rng, sp)
            assert rs.rho(rs.ExpectedShortfall(1.0), sp, x) == pytest.approx(
                rs.expect(sp, x), abs=1e-12)

    def test_es_half_two_states(self):
        # LP oracle value for max E_Q[x] with 0 <= q <= 2 on p = (1/2, 1/2)
        sp = rs.ProbSpace([0.5, 0.5])
        x = sp.rv([0.0, 1.0])
        assert es_lp_oracle(sp, 0.5, x) == pytest.approx(1.0, abs=1e-12)
        assert rs.rho(rs.ExpectedShortfall(0.5), sp, x) == pytest.approx(1.0, abs=1e-12)

    def test_entropic_closed_form_against_direct_sum(self):
        sp = rs.ProbSpace([0.5, 0.5])
        x = sp.rv([0.0, 1.0])
        direct = math.log(math.fsum([0.5 * math.exp(0.0), 0.5 * math.exp(1.0)]))
        assert rs.rho(rs.Entropic(1.0), sp, x) == pytest.approx(direct, abs=1e-14)
        assert direct == pytest.approx(math.log((1.0 + math.e) / 2.0), abs=1e-14)

    def test_entropic_stable_for_tiny_gamma(self):
        sp = rs.ProbSpace([0.5, 0.5])
        x = sp.rv([0.0, 500.0])
        got = rs.rho(rs.Entropic(1e-3), sp, x)
        assert math.isfinite(got)
        # exact closed form: 500 - gamma * log 2 at this scale
        assert got == pytest.approx(500.0 - 1e-3 * math.log(2.0), abs=1e-9)

    def test_scenario_set_max_of_expectations(self):
        rng = np.random.default_rng(22)
        sp = random_space(rng)
        x = random_rv(rng, sp)
        spec = random_scenario_set(rng, sp, 3)
        want = max(rs.expect_under(sp, d, x) for d in spec.densities)
        assert rs.rho(spec, sp, x) == pytest.approx(want, abs=1e-12)


class TestConjugateExamples:
    def test_reference_density_costs_nothing_for_coherent_variants(self):
        rng = np.random.default_rng(23)
        sp = random_space(rng)
        ones = sp.uniform_density()
        specs = [
            rs.ExpectedShortfall(0.5),
            random_scenario_set(rng, sp, 3),
            rs.inflate(rs.ExpectedShortfall(0.8), 2.0),
            rs.inflate(random_scenario_set(rng, sp, 2), 1.5),
        ]
        for spec in specs:
            pen = rs.conjugate(spec, sp, ones)
            assert pen.finite and pen.value == 0.0

    def test_entropic_conjugate_is_scaled_kl(self):
        sp = rs.ProbSpace([0.5, 0.5])
        q = sp.density([0.0, 2.0])
        pen = rs.conjugate(rs.Entropic(2.0), sp, q)
        assert pen.value == pytest.approx(2.0 * math.log(2.0), abs=1e-12)

    def test_es_conjugate_infinite_beyond_cap(self):
        sp = rs.ProbSpace([0.5, 0.5])
        q = sp.density([1.9, 0.1])
        assert rs.conjugate(rs.ExpectedShortfall(0.5), sp, q).finite
        sp3 = rs.ProbSpace([0.2, 0.8])
        q3 = sp3.density([3.0, 0.5])  # max entry 3 > 1/alpha = 2
        assert not rs.conjugate(rs.ExpectedShortfall(0.5), sp3, q3).finite

    def test_scenario_hull_membership(self):
        rng = np.random.default_rng(24)
        sp = random_space(rng, max_states=5)
        spec = random_scenario_set(rng, sp, 3)
        # mixtures of scenarios are members; far-away densities are not
        lam = rng.dirichlet(np.ones(3))
        mix = sp.density(sum(l * d.q for l, d in zip(lam, spec.densities)))
        assert rs.conjugate(spec, sp, mix).value == 0.0
        outside = sp.density(np.full(sp.n_states, 0.0) + np.eye(sp.n_states)[0] / sp.probs[0])
        if hull_tv_distance(sp, spec.matrix(), outside) > 1e-6:
            assert not rs.conjugate(spec, sp, outside).finite

    def test_dilation_scales_conjugate(self):
        rng = np.random.default_rng(25)
        sp = random_space(rng)
        q = random_density(rng, sp)
        base = rs.Entropic(0.7)
        pen = rs.conjugate(rs.Dilation(base, 3.0), sp, q)
        assert pen.value == pytest.approx(3.0 * rs.conjugate(base, sp, q).value, abs=1e-12)

    def test_penalty_never_negative_for_normalized_specs(self):
        rng = np.random.default_rng(26)
        for _ in range(100):
            sp = random_space(rng)
            spec = random_spec(rng, sp)
            q = random_density(rng, sp)
            pen = rs.conjugate(spec, sp, q)
            if pen.finite:
                assert pen.value >= 0.0

    def test_infinite_penalty_is_marker_not_number(self):
        assert not INFINITE_PENALTY.finite
        assert INFINITE_PENALTY.scaled(2.0) is not None
        assert not INFINITE_PENALTY.scaled(2.0).finite


class TestDilate:
    def test_scenario_set_is_fixed_point(self):
        rng = np.random.default_rng(27)
        sp = random_space(rng)
        spec = random_scenario_set(rng, sp, 2)
        assert rs.dilate(spec, 5.0) is spec

    def test_dilated_unit_entropic_evaluates_as_entropic_gamma(self):
        rng = np.random.default_rng(28)
        for gamma in (0.5, 2.0, 7.0):
            sp = random_space(rng)
            x = random_rv(rng, sp)
            got = rs.rho(rs.dilate(rs.Entropic(1.0), gamma), sp, x)
            assert got == pytest.approx(rs.rho(rs.Entropic(gamma), sp, x), abs=1e-12)

    def test_unit_dilation_is_identity(self):
        rng = np.random.default_rng(29)
        sp = random_space(rng)
        x = random_rv(rng, sp)
        spec = rs.Entropic(1.3)
        assert rs.dilate(spec, 1.0) is spec
        assert rs.rho(rs.dilate(spec, 1.0), sp, x) == rs.rho(spec, sp, x)

    def test_dilating_es_keeps_value(self):
        # coherent measures are positively homogeneous
        rng = np.random.default_rng(30)
        sp = random_space(rng)
        x = random_rv(rng, sp)
        spec = rs.ExpectedShortfall(0.4)
        got = rs.rho(rs.dilate(spec, 3.0), sp, x)
        assert got == pytest.approx(rs.rho(spec, sp, x), abs=1e-9)


class TestInflate:
    def test_inflating_reference_scenario_gives_expected_shortfall(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            sp = random_space(rng)
            x = random_rv(rng, sp)
            gamma = float(rng.uniform(1.0, 5.0))
            only_ref = rs.ScenarioSet((sp.uniform_density(),))
            got = rs.rho(rs.inflate(only_ref, gamma), sp, x)
            want = rs.rho(rs.ExpectedShortfall(1.0 / gamma), sp, x)
            assert got == pytest.approx(want, abs=1e-9)

    def test_unit_inflation_is_identity_on_scenario_bases(self):
        rng = np.random.default_rng(32)
        sp = random_space(rng)
        x = random_rv(rng, sp)
        spec = random_scenario_set(rng, sp, 3)
        assert rs.inflate(spec, 1.0) is spec

    def test_monotone_in_gamma(self):
        rng = np.random.default_rng(33)
        for _ in range(10):
            sp = random_space(rng)
            x = random_rv(rng, sp)
            base = rs.ExpectedShortfall(float(rng.uniform(0.4, 1.0)))
            values = [rs.rho(rs.inflate(base, g), sp, x) for g in (1.0, 1.5, 2.5, 4.0)]
            for lo, hi in zip(values, values[1:]):
                assert hi >= lo - 1e-9

    def test_inflating_plain_expectation_gives_expected_shortfall(self):
        rng = np.random.default_rng(134)
        sp = random_space(rng)
        x = random_rv(rng, sp)
        for gamma in (1.0, 2.0, 3.5):
            got = rs.rho(rs.inflate(rs.ExpectedShortfall(1.0), gamma), sp, x)
            assert got == pytest.approx(
                rs.rho(rs.ExpectedShortfall(1.0 / gamma), sp, x), abs=1e-9)

    def test_inflated_es_equals_rescaled_quantile(self):
        rng = np.random.default_rng(34)
        for _ in range(10):
            sp = random_space(rng)
            x = random_rv(rng, sp)
            alpha = float(rng.uniform(0.3, 1.0))
            gamma = float(rng.uniform(1.0, 1.0 / alpha))
            got = rs.rho(rs.inflate(rs.ExpectedShortfall(alpha), gamma), sp, x)
            want = rs.rho(rs.ExpectedShortfall(alpha / gamma), sp, x)
            assert got == pytest.approx(want, abs=1e-9)


class TestLeftContinuitySweep:
    def test_constant_payoff_gives_constant_sweep(self):
        sp = rs.ProbSpace([0.25, 0.75])
        points = rs.left_continuity_sweep(rs.ExpectedShortfall(1.0), sp,
                                          [2.0, 2.0], [1.0, 1.5, 2.0, 5.0])
        for _, v in points:
            assert v == pytest.approx(2.0, abs=1e-9)

    def test_expectation_base_reproduces_quantile_curve(self):
        rng = np.random.default_rng(35)
        sp = random_space(rng)
        x = random_rv(rng, sp)
        grid = [1.0, 1.3, 2.0, 3.7, 6.0]
        points = rs.left_continuity_sweep(rs.ExpectedShortfall(1.0), sp, x, grid)
        for g, v in points:
            assert v == pytest.approx(
                rs.rho(rs.ExpectedShortfall(1.0 / g), sp, x), abs=1e-9)

    def test_values_nondecreasing_and_essup_sticky(self):
        rng = np.random.default_rng(36)
        sp = random_space(rng, max_states=4)
        x = random_rv(rng, sp)
        top = rs.essup(sp, x)
        grid = [1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0]
        points = rs.left_continuity_sweep(rs.ExpectedShortfall(1.0), sp, x, grid)
        values = [v for _, v in points]
        hit = False
        for lo, hi in zip(values, values[1:]):
            assert hi >= lo - 1e-9
        for v in values:
            if hit:
                assert v == pytest.approx(top, abs=1e-9)
            if abs(v - top) <= 1e-9:
                hit = True
        assert hit  # gamma = 256 forces all mass on the worst state

    def test_rejects_descending_grid(self):
        sp = rs.ProbSpace([0.5, 0.5])
        with pytest.raises(ValidationError):
            rs.left_continuity_sweep(rs.ExpectedShortfall(1.0), sp, [0.0, 1.0],
                                     [2.0, 1.0])


class TestAxioms:
    def test_axioms_across_variants(self):
        rng = np.random.default_rng(37)
        for variant in ALL_VARIANTS:
            for _ in range(25):
                sp = random_space(rng, max_states=6)
                spec = random_spec(rng, sp, variant)
                x = random_rv(rng, sp)
                y = random_rv(rng, sp)
                lam = float(rng.uniform(0.0, 1.0))
                c = float(rng.uniform(-2.0, 2.0))
                rx = rs.rho(spec, sp, x)
                # monotonicity
                assert rs.rho(spec, sp, np.maximum(x, y)) >= rs.rho(spec, sp, y) - 1e-9
                # cash additivity
                assert rs.rho(spec, sp, x + c) == pytest.approx(rx + c, abs=1e-9)
                # convexity
                mix = rs.rho(spec, sp, lam * x + (1.0 - lam) * y)
                assert mix <= lam * rx + (1.0 - lam) * rs.rho(spec, sp, y) + 1e-9

    def test_sup_norm_lipschitz(self):
        rng = np.random.default_rng(38)
        for variant in ALL_VARIANTS:
            sp = random_space(rng, max_states=5)
            spec = random_spec(rng, sp, variant)
            x = random_rv(rng, sp)
            y = random_rv(rng, sp)
            gap = abs(rs.rho(spec, sp, x) - rs.rho(spec, sp, y))
            assert gap <= float(np.max(np.abs(x - y))) + 1e-9


class TestDuality:
    def test_fenchel_young_weak_duality(self):
        rng = np.random.default_rng(39)
        for variant in ALL_VARIANTS:
            for _ in range(20):
                sp = random_space(rng, max_states=6)
                spec = random_spec(rng, sp, variant)
                x = random_rv(rng, sp)
                q = random_density(rng, sp)
                pen = rs.conjugate(spec, sp, q)
                if pen.finite:
                    slack = rs.rho(spec, sp, x) - (rs.expect_under(sp, q, x) - pen.value)
                    assert slack >= -1e-9

    def test_dual_attainment_for_every_variant(self):
        rng = np.random.default_rng(40)
        for variant in ALL_VARIANTS:
            for _ in range(15):
                sp = random_space(rng, max_states=6)
                spec = random_spec(rng, sp, variant)
                x = random_rv(rng, sp)
                val, q = rs.dual_solve(spec, sp, x)
                assert val == pytest.approx(rs.rho(spec, sp, x), abs=1e-9)
                pen = rs.conjugate(spec, sp, q)
                assert pen.finite
                gap = val - (rs.expect_under(sp, q, x) - pen.value)
                assert abs(gap) <= 1e-7

    def test_es_sorting_rule_matches_lp_oracle(self):
        rng = np.random.default_rng(41)
        for _ in range(100):
            sp = random_space(rng, max_states=12)
            x = random_rv(rng, sp)
            alpha = float(rng.uniform(0.05, 1.0))
            assert rs.rho(rs.ExpectedShortfall(alpha), sp, x) == pytest.approx(
                es_lp_oracle(sp, alpha, x), abs=1e-9)

    def test_es_optimizer_is_extreme_point(self):
        # sorted tie-breaking makes the optimizer deterministic and extreme
        sp = rs.ProbSpace([0.25, 0.25, 0.25, 0.25])
        x = sp.rv([1.0, 1.0, 0.0, 0.0])  # tie between states 0 and 1
        _, q = rs.dual_solve(rs.ExpectedShortfall(0.25), sp, x)
        assert np.array_equal(q.q, np.array([4.0, 0.0, 0.0, 0.0]))


class TestInflationPlateau:
    def test_equal_values_propagate_upward(self):
        rng = np.random.default_rng(42)
        found = 0
        for _ in range(200):
            sp = random_space(rng, max_states=4)
            x = random_rv(rng, sp)
            base = rs.ExpectedShortfall(1.0)
            gamma = float(rng.uniform(1.0, 3.0))
            gamma_next = gamma * float(rng.uniform(1.1, 1.5))
            v1 = rs.rho(rs.inflate(base, gamma), sp, x)
            v2 = rs.rho(rs.inflate(base, gamma_next), sp, x)
            if abs(v1 - v2) <= 1e-9:
                found += 1
                for mult in (1.7, 2.4, 5.0):
                    v3 = rs.rho(rs.inflate(base, gamma_next * mult), sp, x)
                    assert v3 == pytest.approx(v1, abs=1e-9)
        assert found > 0  # the plateau regime was actually exercised


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10.0, 10.0), min_size=4, max_size=4),
       st.floats(-5.0, 5.0))
def test_hypothesis_cash_additivity_entropic_and_es(values, c):
    sp = rs.ProbSpace([0.1, 0.2, 0.3, 0.4])
    x = sp.rv(values)
    for spec in (rs.Entropic(0.8), rs.ExpectedShortfall(0.35)):
        assert rs.rho(spec, sp, x + c) == pytest.approx(
            rs.rho(spec, sp, x) + c, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10.0, 10.0), min_size=4, max_size=4),
       st.lists(st.floats(-10.0, 10.0), min_size=4, max_size=4))
def test_hypothesis_monotonicity_entropic_and_es(xs, ys):
    sp = rs.ProbSpace([0.1, 0.2, 0.3, 0.4])
    hi = sp.rv(np.maximum(xs, ys))
    lo = sp.rv(np.minimum(xs, ys))
    for spec in (rs.Entropic(1.2), rs.ExpectedShortfall(0.6)):
        assert rs.rho(spec, sp, hi) >= rs.rho(spec, sp, lo) - 1e-9


class TestCompositions:
    def test_dilated_inflation_evaluates_by_homogeneity(self):
        # inflations are coherent, so dilating one cannot change its value
        rng = np.random.default_rng(43)
        sp = random_space(rng)
        x = random_rv(rng, sp)
        inner = rs.inflate(rs.ExpectedShortfall(0.5), 2.0)
        wrapped = rs.Dilation(inner, 3.0)
        assert rs.rho(wrapped, sp, x) == pytest.approx(rs.rho(inner, sp, x), abs=1e-9)
        q = random_density(rng, sp)
        assert rs.conjugate(wrapped, sp, q).finite == rs.conjugate(inner, sp, q).finite
        val, opt = rs.dual_solve(wrapped, sp, x)
        assert val == pytest.approx(rs.rho(wrapped, sp, x), abs=1e-9)
        assert rs.conjugate(wrapped, sp, opt).finite

    def test_nested_dilations_multiply(self):
        rng = np.random.default_rng(44)
        sp = random_space(rng)
        x = random_rv(rng, sp)
        nested = rs.Dilation(rs.Dilation(rs.Entropic(1.0), 2.0), 3.0)
        assert rs.rho(nested, sp, x) == pytest.approx(
            rs.rho(rs.Entropic(6.0), sp, x), abs=1e-9)
