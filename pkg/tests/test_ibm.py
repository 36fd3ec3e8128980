import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from adaptdyn.errors import ContractError, NumericalError
from adaptdyn.ibm import (
    BIRTH_CLONAL,
    BIRTH_MUTANT,
    DEATH,
    PopulationState,
    Trajectory,
    _Engine,
    event_rates,
    first_mutation_time,
    gap_clusters,
    simulate,
    step,
)
from adaptdyn.lotka_volterra import build_lv, integrate
from adaptdyn.model import dimorphic_equilibrium, monomorphic_equilibrium
from conftest import gaussian


def test_single_individual_rates(g10):
    m = gaussian(1.0, u_K=0.0, K=100)
    xs, clonal, mutant, death = event_rates(m, PopulationState({-1.0: 1}, 100))
    assert clonal[0] == pytest.approx(float(m.birth(-1.0)))
    assert mutant[0] == 0.0
    assert death[0] == pytest.approx(float(m.death(-1.0)) + 1.0 / 100)


def test_two_class_death_rate():
    m = gaussian(0.7, K=50)
    a, b, x, y = 7, 4, -0.3, 0.5
    _, _, _, death = event_rates(m, PopulationState({x: a, y: b}, 50))
    want = a * (float(m.death(x)) + (a * float(m.competition(x, x))
                                     + b * float(m.competition(x, y))) / 50)
    assert death[0] == pytest.approx(want, rel=1e-14)


def test_population_state_drops_zero_atoms():
    s = PopulationState({0.1: 3, 0.2: 0}, 10)
    assert s.atoms == {0.1: 3}
    assert s.mass == pytest.approx(0.3)


def test_empty_population_is_absorbing(g10):
    wait, ev, new = step(g10, PopulationState({}, 1000), np.random.default_rng(0))
    assert wait == math.inf and ev is None and new.size == 0


def test_event_frequencies_match_rates():
    m = gaussian(0.7, p=0.5, K=20, u_K=0.3)
    state = PopulationState({-0.4: 12, 0.3: 9}, 20)
    xs, clonal, mutant, death = event_rates(m, state)
    rates = np.stack([clonal, mutant, death], axis=1).ravel()
    expected = rates / rates.sum()
    rng = np.random.default_rng(123)
    n = 100_000
    kinds = {BIRTH_CLONAL: 0, BIRTH_MUTANT: 1, DEATH: 2}
    counts = np.zeros(rates.size)
    for _ in range(n):
        _, ev, _ = step(m, state, rng)
        counts[3 * int(np.flatnonzero(xs == ev.trait)[0]) + kinds[ev.kind]] += 1
    _, pval = stats.chisquare(counts, expected * n)
    assert pval > 1e-3
    se = np.sqrt(expected * (1 - expected) / n)
    assert np.all(np.abs(counts / n - expected) <= 3.5 * se)


def test_engine_event_frequencies_match_rates():
    from adaptdyn import _kernels

    m = gaussian(0.7, p=0.5, K=20, u_K=0.3)
    state = PopulationState({-0.4: 12, 0.3: 9}, 20)
    xs, clonal, mutant, death = event_rates(m, state)
    rates = np.stack([clonal, mutant, death], axis=1).ravel()
    expected = rates / rates.sum()
    eng = _Engine(m, np.random.default_rng(0), log_capacity=1)
    for x in xs:
        eng.add_individuals(x, state.atoms[x])
    unif = np.random.default_rng(6).random(3 * 50_000)
    counts = np.zeros(rates.size)
    pos = 0
    for _ in range(50_000):
        c = eng.counts.copy()
        comp = eng.comp.copy()
        status, _, pos, _, slot, lp = _kernels.ibm_run(
            c, eng.birth, eng.death0, eng.mutp, comp, eng.alpha_t, eng.n, eng.K, 0.0, 1e9,
            unif, pos, 1, eng.log_t, eng.log_kind, eng.log_slot, 0)
        assert status in (_kernels.IBM_MUTATION, _kernels.IBM_MAXEVENTS)
        if status == _kernels.IBM_MUTATION:
            counts[3 * slot + 1] += 1
        else:
            counts[3 * int(eng.log_slot[0]) + int(eng.log_kind[0])] += 1
    n = counts.sum()
    _, pval = stats.chisquare(counts, expected * n)
    assert pval > 1e-3


def test_lln_monomorphic(frozen):
    m = gaussian(1.0, u_K=0.0, K=1000)
    res = simulate(m, PopulationState.monomorphic(-1.0, 1000, 1000), 100.0,
                   np.random.default_rng(1), n_snapshots=1001)
    t = np.array(res.trajectory.times)
    mass = np.array([s.mass for s in res.trajectory.states])
    avg = mass[(t >= 50) & (t <= 100)].mean()
    assert avg == pytest.approx(frozen["nbar_minus1"], rel=0.05)


def test_seed_determinism():
    m = gaussian(0.7, sigma=0.05, p=0.1, K=200, u_K=0.05)
    init = PopulationState.monomorphic(-0.5, 100, 200)
    a = simulate(m, init, 10.0, np.random.default_rng(9), log_events=True)
    b = simulate(m, init, 10.0, np.random.default_rng(9), log_events=True)
    assert list(a.event_log.records()) == list(b.event_log.records())
    assert np.all(np.diff(a.event_log.times) > 0)
    assert any(k == BIRTH_MUTANT for k in a.event_log.kinds)


def test_recorder_grid_and_counts():
    m = gaussian(0.7, sigma=0.05, p=0.1, K=100, u_K=0.1)
    seen = Trajectory()
    simulate(m, PopulationState.monomorphic(0.0, 50, 100), 5.0, np.random.default_rng(2),
             recorder=seen, n_snapshots=11)
    assert np.allclose(seen.times, np.linspace(0, 5, 11))
    for s in seen.states:
        assert all(isinstance(c, int) and c > 0 for c in s.atoms.values())


def test_simulate_contract(g10):
    with pytest.raises(ContractError):
        simulate(g10, PopulationState.monomorphic(0.0, 10, 1000), 0.0, np.random.default_rng(0))
    with pytest.raises(ContractError):
        simulate(g10, PopulationState.monomorphic(0.0, 10, 5), 1.0, np.random.default_rng(0))


def test_incremental_competition_drift_is_checked():
    m = gaussian(0.7, K=100)
    eng = _Engine(m, np.random.default_rng(0))
    eng.add_individuals(0.0, 10)
    eng.add_individuals(0.2, 5)
    assert np.allclose(eng.comp[:2], eng.exact_comp(), rtol=1e-12)
    eng.comp[0] *= 1 + 1e-6
    with pytest.raises(NumericalError):
        eng.check_and_rebuild()


def test_lv_limit_at_k2000():
    m = gaussian(0.7, u_K=0.0, K=2000)
    traits = [-0.3, 0.3]
    eq = np.array(dimorphic_equilibrium(m, *traits))
    n0 = np.array([0.8, 0.3])
    times, lv = integrate(build_lv(m, traits), n0, 20.0, n_out=81)
    rng = np.random.default_rng(2000)
    good = 0
    for _ in range(20):
        init = PopulationState({x: int(round(2000 * v)) for x, v in zip(traits, n0)}, 2000)
        res = simulate(m, init, 20.0, rng, n_snapshots=81)
        dens = np.array([[s.atoms.get(x, 0) / 2000 for x in traits] for s in res.trajectory.states])
        good += np.max(np.abs(dens - lv)) <= 0.1
    assert good >= 18
    assert np.allclose(lv[-1], eq, atol=0.05)


def test_first_mutation_mean(frozen):
    fm = frozen["first_mutation_mean"]
    K, u = 300, 1e-3
    m = gaussian(1.0, p=fm["p"], K=K, u_K=u)
    rng = np.random.default_rng(77)
    taus = []
    for _ in range(200):
        out = first_mutation_time(m, [fm["x"]], rng)
        assert out.parent == fm["x"]
        taus.append(K * u * out.tau)
    assert np.mean(taus) == pytest.approx(fm["mean"], rel=0.15)


def test_first_mutation_parent_frequencies():
    m = gaussian(0.7, p=0.1, K=300, u_K=1e-2)
    traits = [-0.4, 0.4]
    eq = dimorphic_equilibrium(m, *traits)
    w = np.array([float(m.mut_prob(x) * m.birth(x)) * n for x, n in zip(traits, eq)])
    expected = w[0] / w.sum()
    rng = np.random.default_rng(4)
    n = 300
    first = sum(first_mutation_time(m, traits, rng).parent == traits[0] for _ in range(n))
    assert abs(first / n - expected) <= 3 * math.sqrt(expected * (1 - expected) / n)


def test_first_mutation_extinction_outcome():
    m = gaussian(1.0, p=1e-9, K=1, u_K=1e-9)
    out = first_mutation_time(m, [1.9], np.random.default_rng(0), equilibrium=[1.0])
    assert out.extinct and out.tau == math.inf and out.parent is None


def test_gap_clusters():
    cl = gap_clusters([0.0, 0.05, 0.5, 0.52, 0.04], weights=[1, 1, 2, 2, 1])
    assert len(cl) == 2
    assert cl[0]["lo"] == 0.0 and cl[0]["hi"] == 0.05 and cl[0]["mass"] == 3
    assert cl[1]["mean"] == pytest.approx(0.51)
    assert gap_clusters([]) == []


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=40))
def test_gap_clusters_partition(xs):
    cl = gap_clusters(xs)
    assert sum(c["mass"] for c in cl) == len(xs)
    for a, b in zip(cl, cl[1:]):
        assert b["lo"] - a["hi"] > 0.1
