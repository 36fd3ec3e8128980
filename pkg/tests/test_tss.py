import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptdyn.errors import ContractError, DominatingBoundError
from adaptdyn.model import MutationKernel, fitness1, partials
from adaptdyn.tss import (
    canonical_drift,
    d1g_diag,
    drift_lipschitz,
    g_function,
    gamma_bound,
    jump_rate,
    simulate_tss,
    solve_canonical,
)
from conftest import gaussian, repulsive_model


def one_sided_kernel(space):
    lo, hi = space.bounds
    return MutationKernel(
        sampler=lambda x, rng: min(rng.exponential(0.1), hi - x),
        density=lambda x, h: np.where(np.asarray(h) > 0, 10.0 * np.exp(-10.0 * np.asarray(h)), 0.0),
        dominating_density=lambda h: np.where(np.asarray(h) > 0, 10.0 * np.exp(-10.0 * np.asarray(h)),
                                              0.0),
        dominating_mass=1.0,
        dominating_sampler=lambda rng, size: rng.exponential(0.1, size),
        support=lambda x: (0.0, min(hi - x, 4.0)),
        scale=0.1,
    )


@given(x=st.floats(-1.9, 1.9), y=st.floats(-2.0, 2.0))
def test_g_sign_and_diagonal(x, y):
    m = gaussian(0.7, p=0.1)
    assert g_function(m, x, x) == 0.0
    assert np.sign(g_function(m, y, x)) == np.sign(fitness1(m, y, x))


@pytest.mark.parametrize("x", [-1.2, -0.5, 0.3, 1.1])
def test_d1g_matches_finite_difference(x):
    m = gaussian(1.0, p=0.1)
    h = 1e-5
    fd = (g_function(m, x + h, x) - g_function(m, x - h, x)) / (2 * h)
    assert d1g_diag(m, x) == pytest.approx(float(fd), rel=1e-7)


def test_drift_interior_matches_closed_form(frozen):
    ref = frozen["drift_interior"]
    m = gaussian(1.0, sigma=ref["sigma"], p=ref["p"])
    got = canonical_drift(m, ref["x"])
    assert got == pytest.approx(ref["quad"], abs=1e-6 * abs(ref["quad"]) + 1e-12)
    assert abs(got - ref["closed"]) <= 1e-6
    assert got == pytest.approx(0.5 * ref["sigma"] ** 2 * d1g_diag(m, ref["x"]), rel=1e-8)


def test_drift_boundary(frozen):
    ref = frozen["drift_boundary"]
    m = gaussian(1.0, sigma=ref["sigma"], p=ref["p"])
    assert canonical_drift(m, ref["x"]) == pytest.approx(ref["quad"], rel=1e-8)


@pytest.mark.parametrize("sa", [0.7, 1.0])
def test_drift_vanishes_at_es(sa):
    assert canonical_drift(gaussian(sa, p=0.1), 0.0) == 0.0


def test_one_sided_kernel_kills_drift():
    base = gaussian(1.0, p=0.1)
    m = replace(base, mut_kernel=one_sided_kernel(base.space))
    assert d1g_diag(m, 0.5) < 0
    assert canonical_drift(m, 0.5) == 0.0
    assert canonical_drift(m, -0.5) > 0


def test_canonical_monotone_and_never_reaches_es():
    m = gaussian(1.0, p=0.1)
    sol = solve_canonical(m, -1.0, 200.0)
    assert np.all(np.diff(sol.values) > 0)
    assert np.all(sol.values < 0)
    assert sol.values[-1] > -0.05


def test_canonical_constant_at_es():
    sol = solve_canonical(gaussian(0.7, p=0.1), 0.0, 10.0)
    assert np.all(sol.values == 0.0)


def test_canonical_error_estimate_covers_refinement():
    m = gaussian(1.0, p=0.1)
    a = solve_canonical(m, -1.0, 54.0, tol=1e-6)
    b = solve_canonical(m, -1.0, 54.0, tol=5e-7)
    assert np.max(np.abs(a.values - b.values)) <= a.error_estimate
    assert a.error_estimate < 1e-3


def test_canonical_exponential_lower_bound():
    m = gaussian(1.0, p=0.1)
    sol = solve_canonical(m, -1.0, 100.0)
    c = drift_lipschitz(m, np.linspace(-1.0, 0.0, 101))
    bound = 1.0 * np.exp(-c * sol.times)
    assert np.all(np.abs(sol.values) >= bound * (1 - 1e-6))


def test_canonical_contract(g10):
    with pytest.raises(ContractError):
        solve_canonical(g10, 3.0, 1.0)


def test_no_mutation_gives_constant_path():
    base = gaussian(1.0)
    m = replace(base, mut_prob=lambda x: np.zeros_like(np.asarray(x, dtype=float)))
    path = simulate_tss(m, -1.0, 0.1, 100.0, np.random.default_rng(0), gamma=1.0)
    assert path.traits == [-1.0]


def test_jump_bound_and_monotone_before_es():
    m = gaussian(1.0, p=0.1)
    eps = 0.05
    path = simulate_tss(m, -1.0, eps, 40.0, np.random.default_rng(3))
    xs = np.array(path.traits)
    assert xs.size > 5
    assert np.max(np.abs(np.diff(xs))) <= eps * m.space.diam
    before = xs[: np.argmax(xs > -0.2)] if np.any(xs > -0.2) else xs
    assert np.all(np.diff(before) > 0)


def test_tss_contract(g10):
    with pytest.raises(ContractError):
        simulate_tss(g10, -1.0, 1.5, 1.0, np.random.default_rng(0))
    with pytest.raises(ContractError):
        simulate_tss(g10, 5.0, 0.1, 1.0, np.random.default_rng(0))


def test_small_gamma_is_detected():
    m = gaussian(1.0, p=0.1)
    with pytest.raises(DominatingBoundError):
        simulate_tss(m, -1.0, 0.5, 100.0, np.random.default_rng(0), gamma=1e-4)


def test_gamma_bound_dominates_g():
    m = gaussian(0.7, p=0.1)
    gam = gamma_bound(m)
    xs = np.linspace(-2, 2, 301)
    assert np.max(g_function(m, xs[None, :], xs[:, None])) <= gam


def test_jump_rate_matches_quadrature(frozen):
    ref = frozen["tss_jump_rate"]
    m = gaussian(1.0, sigma=ref["sigma"], p=ref["p"])
    rate = jump_rate(m, ref["x"], ref["eps"])
    assert rate == pytest.approx(ref["rate"], rel=1e-8)
    rng = np.random.default_rng(10)
    gam = gamma_bound(m)
    holds = []
    for _ in range(10_000):
        path = simulate_tss(m, ref["x"], ref["eps"], 200.0, rng, gamma=gam, batch=256, chunk=256,
                            max_jumps=1)
        if len(path.times) > 1:
            holds.append(path.times[1])
    holds = np.array(holds)
    assert holds.size > 9_900
    est = 1.0 / holds.mean()
    se = est / math.sqrt(holds.size)
    assert abs(est - rate) <= 3 * se


def test_repulsive_es_drift_signs():
    m = repulsive_model(sigma=0.1)
    p = partials(m, 0.0, 0.0, analytic=False)
    assert abs(p["d1"]) < 1e-8
    assert p["d11"] + p["d12"] > 0
    assert canonical_drift(m, -0.05) < 0 < canonical_drift(m, 0.05)
    left = solve_canonical(m, -0.05, 5.0)
    right = solve_canonical(m, 0.05, 5.0)
    assert left.values[-1] < -0.05 and right.values[-1] > 0.05


def test_path_on_grid():
    m = gaussian(1.0, p=0.1)
    path = simulate_tss(m, -1.0, 0.05, 20.0, np.random.default_rng(1))
    grid = np.linspace(0, 20, 41)
    vals = path.on_grid(grid)
    assert vals[0] == -1.0
    for t, v in zip(grid, vals):
        k = max(i for i, s in enumerate(path.times) if s <= t)
        assert v == path.traits[k]
