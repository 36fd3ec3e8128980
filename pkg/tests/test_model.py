import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptdyn.errors import (
    AssumptionViolation,
    ContractError,
    DegenerateError,
    TraitDomainError,
)
from adaptdyn.model import (
    GaussianExample,
    TraitSpace,
    audit_assumptions,
    dimorphic_equilibrium,
    fitness1,
    fitness2,
    fitness_d,
    fitness_partials,
    model_from_config,
    monomorphic_equilibrium,
    tabulated_model,
)
from conftest import custom_model, gaussian

traits = st.floats(-1.95, 1.95, allow_nan=False)
sig_alpha = st.sampled_from([0.5, 0.7, 1.0, 1.5])


def test_trait_space_contract():
    sp = TraitSpace.interval(-2.0, 2.0)
    assert sp.contains(-2.0) and sp.contains(2.0) and not sp.contains(2.0001)
    assert list(sp.contains(np.array([-3.0, 0.0, 3.0]))) == [False, True, False]
    assert sp.diam == 4.0
    with pytest.raises(ContractError):
        TraitSpace.interval(1.0, 1.0)


def test_monomorphic_examples(g10, frozen):
    assert monomorphic_equilibrium(g10, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert monomorphic_equilibrium(g10, -1.0) == pytest.approx(frozen["nbar_minus1"], rel=1e-13)


def test_monomorphic_is_logistic_limit(g10):
    from scipy.integrate import solve_ivp

    for x in (-1.0, 0.3, 1.7):
        r, a = float(g10.growth(x)), float(g10.competition(x, x))
        sol = solve_ivp(lambda t, n: n * (r - a * n), (0, 1e3), [0.1], rtol=1e-12, atol=1e-14)
        assert abs(sol.y[0, -1] - monomorphic_equilibrium(g10, x)) < 1e-8


def test_domain_and_assumption_errors(g10):
    with pytest.raises(TraitDomainError):
        monomorphic_equilibrium(g10, 2.5)
    m = custom_model(lambda x: np.ones_like(np.asarray(x, float)),
                     lambda x, y: np.ones_like(np.asarray(x, float) - np.asarray(y, float)),
                     death=lambda x: 2.0 * np.ones_like(np.asarray(x, float)))
    with pytest.raises(AssumptionViolation):
        monomorphic_equilibrium(m, 0.0)


def test_fitness1_example(g10, frozen):
    expected = 1.0 - math.exp(-0.5) * math.exp(-1 / 1.62)
    assert fitness1(g10, 0.0, -1.0) == pytest.approx(expected, rel=1e-13)
    assert fitness1(g10, 0.0, -1.0) == pytest.approx(frozen["f1_0_minus1_sa1"], rel=1e-13)


def test_fitness1_branching_process_cross_check(g10):
    # growth rate of a rare mutant: lambda(y) - (mu(y) + alpha(y, x) nbar(x))
    y, x = 0.2, -0.6
    rate = g10.birth(y) - (g10.death(y) + g10.competition(y, x) * monomorphic_equilibrium(g10, x))
    assert fitness1(g10, y, x) == pytest.approx(float(rate), rel=1e-14)


@given(x=traits, sa=sig_alpha)
def test_fitness_zero_on_diagonal(x, sa):
    m = gaussian(sa)
    assert abs(fitness1(m, x, x)) <= 1e-12 * max(1.0, float(m.growth(x)))


@given(x=st.floats(-1.5, 1.5), sa=sig_alpha)
def test_first_order_identity(x, sa):
    p = fitness_partials(gaussian(sa), x, x)
    scale = max(1.0, abs(p["d1"]))
    assert abs(p["d1"] + p["d2"]) <= 1e-6 * scale


@given(x=st.floats(-1.5, 1.5), sa=sig_alpha)
def test_second_order_identity(x, sa):
    p = fitness_partials(gaussian(sa), x, x)
    assert abs(p["d11"] + 2 * p["d12"] + p["d22"]) <= 1e-5


@given(x=st.floats(-1.5, 1.5), y=st.floats(-1.5, 1.5), sa=sig_alpha)
def test_analytic_partials_match_finite_differences(x, y, sa):
    m = gaussian(sa)
    ana = m.analytic.fitness_partials(y, x)
    fd = fitness_partials(m, y, x)
    for k in ana:
        assert fd[k] == pytest.approx(ana[k], abs=1e-6)


def test_dimorphic_example_and_equilibrium(g07, frozen):
    n1, n2 = dimorphic_equilibrium(g07, -0.05, 0.05)
    assert [n1, n2] == pytest.approx(frozen["dimorphic_pair_closed"], rel=1e-12)
    assert [n1, n2] == pytest.approx(frozen["dimorphic_pair_ode"], abs=1e-6)


@given(x=traits, y=traits, sa=sig_alpha)
def test_dimorphic_zeroes_growth_and_is_symmetric(x, y, sa):
    m = gaussian(sa)
    if abs(x - y) < 1e-3:
        return
    fxy, fyx = fitness1(m, x, y), fitness1(m, y, x)
    if not (fxy > 1e-10 and fyx > 1e-10):
        with pytest.raises((TraitDomainError, DegenerateError)):
            if fxy * fyx <= 0:
                dimorphic_equilibrium(m, x, y)
            else:
                raise TraitDomainError("skip")
        return
    n1, n2 = dimorphic_equilibrium(m, x, y)
    assert n1 > 0 and n2 > 0
    G1 = m.growth(x) - m.competition(x, x) * n1 - m.competition(x, y) * n2
    G2 = m.growth(y) - m.competition(y, x) * n1 - m.competition(y, y) * n2
    assert abs(G1) < 1e-10 and abs(G2) < 1e-10
    m1, m2 = dimorphic_equilibrium(m, y, x)
    assert (m2, m1) == pytest.approx((n1, n2), rel=1e-12)


def test_dimorphic_degenerate_and_domain_errors(g07):
    with pytest.raises(DegenerateError):
        dimorphic_equilibrium(g07, 0.1, 0.1, require_sign=False)
    with pytest.raises(TraitDomainError):
        dimorphic_equilibrium(g07, -1.0, -0.5)  # substitution pair, f(x;y) < 0


@given(x=st.floats(-0.3, -0.01), y=st.floats(0.01, 0.3))
def test_fitness2_residents_zero(x, y):
    m = gaussian(0.7)
    if not (fitness1(m, x, y) > 0 and fitness1(m, y, x) > 0):
        return
    assert abs(fitness2(m, x, x, y)) < 1e-12
    assert abs(fitness2(m, y, x, y)) < 1e-12


def test_fitness2_between_positive_when_a_negative(g10):
    x, y = -0.05, 0.05
    for z in np.linspace(-0.04, 0.04, 9):
        assert fitness2(g10, z, x, y) > 0


def test_fitness2_limit_at_es(g07, frozen):
    ref = frozen["f2_limit"]
    assert fitness1(g07, 0.3, 0.0) == pytest.approx(ref["f1_z_xstar"], rel=1e-12)
    vals = [fitness2(g07, 0.3, -s, s) for s in (0.01, 0.001, 0.0001)]
    # the pair determinant is O(s^2), so double precision loses about 8 digits at s=1e-4
    assert vals == pytest.approx(ref["f2_shrinking"], abs=1e-8)
    errs = [abs(v - ref["f1_z_xstar"]) for v in vals]
    assert errs[0] > errs[1] > errs[2]


def test_fitness_d_reductions(g07):
    assert fitness_d(g07, 0.3, [-0.2], [monomorphic_equilibrium(g07, -0.2)]) == pytest.approx(
        fitness1(g07, 0.3, -0.2), rel=1e-14)
    n = dimorphic_equilibrium(g07, -0.1, 0.1)
    assert fitness_d(g07, 0.3, [-0.1, 0.1], n) == pytest.approx(fitness2(g07, 0.3, -0.1, 0.1), rel=1e-13)
    assert abs(fitness_d(g07, -0.1, [-0.1, 0.1], n)) < 1e-14
    with pytest.raises(ContractError):
        fitness_d(g07, 0.3, [-0.1, 0.1], [0.5])


@given(x=st.floats(-2.0, 2.0), seed=st.integers(0, 2 ** 32 - 1))
def test_kernel_sampler_stays_inside_and_is_dominated(x, seed):
    m = gaussian(0.7, sigma=0.8)
    rng = np.random.default_rng(seed)
    hs = np.array([m.mut_kernel.sampler(x, rng) for _ in range(20)])
    assert np.all(m.space.contains(x + hs))
    dens = m.mut_kernel.density(x, hs)
    assert np.all(dens <= m.mut_kernel.dominating_density(hs) * (1 + 1e-12))


def test_kernel_density_normalised():
    from scipy.integrate import quad

    m = gaussian(0.7, sigma=0.5)
    for x in (-2.0, -1.3, 0.0, 1.9):
        lo, hi = 2.0 - 4.0 - x, 2.0 - x
        mass = quad(lambda h: float(m.mut_kernel.density(x, h)), -2.0 - x, hi, points=[0.0])[0]
        assert mass == pytest.approx(1.0, abs=1e-8)


def test_audit_gaussian_is_clean(g07):
    assert audit_assumptions(g07, warn=False) == []


def test_audit_reports_violations():
    m = custom_model(lambda x: np.ones_like(np.asarray(x, float)),
                     lambda x, y: np.ones_like(np.asarray(x, float) - np.asarray(y, float)),
                     death=lambda x: 1.5 * (np.asarray(x, float) > 1.0))
    with pytest.warns(UserWarning):
        found = audit_assumptions(m)
    assert any("r(x)" in s for s in found)


def test_model_from_config_gaussian_and_errors():
    m = model_from_config({"family": "gaussian_example", "sigma_b": "0.9", "sigma_alpha": "0.7",
                           "sigma": "0.01", "p": "0.1", "K": "500", "u_K": "0.01"})
    assert m.K == 500 and m.u_K == 0.01 and m.params["sigma_alpha"] == 0.7
    with pytest.raises(ContractError):
        model_from_config({"family": "gaussian_example", "sigma_b": "0.9"})
    with pytest.raises(ContractError):
        model_from_config({"family": "other"})


def test_custom_tabulated_model_matches_gaussian(tmp_path):
    ex = GaussianExample(0.9, 0.7, 0.1, p=0.5)
    grid = np.linspace(-2, 2, 401)
    np.savez(tmp_path / "tab.npz", grid=grid, birth=ex.birth(grid), death=ex.death(grid),
             competition=ex.competition(grid[:, None], grid[None, :]))
    m = model_from_config({"family": "custom", "table": "tab.npz", "sigma": "0.1", "p": "0.5"},
                          base_dir=str(tmp_path))
    xs = np.linspace(-1.5, 1.5, 13)
    assert np.allclose(m.birth(xs), ex.birth(xs), atol=1e-7)
    assert np.allclose(fitness1(m, xs, 0.2), fitness1(ex.to_model(), xs, 0.2), atol=1e-6)


def test_model_spec_contract():
    with pytest.raises(ContractError):
        gaussian(0.7, epsilon=0.0)
    with pytest.raises(ContractError):
        gaussian(0.7, u_K=2.0)
    with pytest.raises(ContractError):
        GaussianExample(0.9, 0.7, 0.1, p=0.0)
