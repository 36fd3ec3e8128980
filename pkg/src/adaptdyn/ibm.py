"""Exact event-driven simulation of the individual-based model.

Each individual with trait ``x`` gives birth at rate ``lambda(x)``; a birth
is a mutant with probability ``u_K p(x)``, the mutant trait being ``x + h``
with ``h ~ m(x, .)``. It dies at rate ``mu(x) + (1/K) sum_y alpha(x, y)``
over all individuals ``y`` including itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ContractError, NumericalError
from .model import ModelSpec

BIRTH_CLONAL = "birth_clonal"
BIRTH_MUTANT = "birth_mutant"
DEATH = "death"
_KIND_NAMES = {0: BIRTH_CLONAL, 1: BIRTH_MUTANT, 2: DEATH}

CHECK_EVERY = 10_000
DRIFT_RTOL = 1e-9


@dataclass
class PopulationState:
    """Finite population as a map trait -> count; ``nu = (1/K) sum count delta``."""

    atoms: dict
    K: int

    def __post_init__(self):
        self.atoms = {float(x): int(c) for x, c in self.atoms.items() if int(c) > 0}
        if any(c < 0 for c in self.atoms.values()):
            raise ContractError("negative count")

    @classmethod
    def monomorphic(cls, x: float, count: int, K: int) -> "PopulationState":
        return cls({float(x): int(count)}, K)

    @property
    def size(self) -> int:
        return sum(self.atoms.values())

    @property
    def mass(self) -> float:
        """Total mass ``<nu, 1> = N / K``."""
        return self.size / self.K

    def traits(self) -> np.ndarray:
        return np.array(sorted(self.atoms))

    def densities(self) -> np.ndarray:
        return np.array([self.atoms[x] / self.K for x in sorted(self.atoms)])


@dataclass(frozen=True)
class Event:
    kind: str
    trait: float
    mutant_trait: Optional[float] = None


@dataclass
class EventLog:
    times: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    traits: list = field(default_factory=list)
    mutant_traits: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def append(self, t, kind, trait, mutant=None):
        self.times.append(float(t))
        self.kinds.append(kind)
        self.traits.append(float(trait))
        self.mutant_traits.append(None if mutant is None else float(mutant))

    def records(self):
        for t, k, x, y in zip(self.times, self.kinds, self.traits, self.mutant_traits):
            rec = {"t": t, "kind": k, "trait": x}
            if y is not None:
                rec["mutant_trait"] = y
            yield rec


@dataclass
class Trajectory:
    """Snapshots on a time grid: ``states[k]`` is the population at ``times[k]``."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def __call__(self, t: float, state: PopulationState) -> None:
        self.times.append(float(t))
        self.states.append(state)

    def long_format(self):
        """Rows ``(time, trait, density)``."""
        for t, st in zip(self.times, self.states):
            for x in sorted(st.atoms):
                yield t, x, st.atoms[x] / st.K


@dataclass
class SimulationResult:
    trajectory: Trajectory
    event_log: Optional[EventLog]
    final_state: PopulationState
    t: float
    n_events: int
    extinct: bool
    backend: str


def event_rates(model: ModelSpec, state: PopulationState):
    """Per-class rates computed from scratch.

    Returns ``(traits, clonal, mutant, death)`` arrays.
    """
    xs = np.array(sorted(state.atoms))
    k = np.array([state.atoms[x] for x in xs], dtype=float)
    if xs.size == 0:
        return xs, k, k, k
    lam = np.asarray(model.birth(xs), dtype=float)
    mu = np.asarray(model.death(xs), dtype=float)
    pm = model.u_K * np.asarray(model.mut_prob(xs), dtype=float)
    comp = np.asarray(model.competition(xs[:, None], xs[None, :]), dtype=float) @ k
    birth = k * lam
    return xs, birth * (1 - pm), birth * pm, k * (mu + comp / state.K)


def step(model: ModelSpec, state: PopulationState, rng: np.random.Generator):
    """One exact Gillespie step from scratch.

    Returns ``(waiting_time, event, new_state)``; an empty population is
    absorbing and returns ``(inf, None, state)``.
    """
    xs, clonal, mutant, death = event_rates(model, state)
    rates = np.stack([clonal, mutant, death], axis=1).ravel()
    total = float(rates.sum())
    if total <= 0:
        return math.inf, None, state
    wait = rng.exponential(1.0 / total)
    idx = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
    idx = min(idx, rates.size - 1)
    cls, kind = divmod(idx, 3)
    x = float(xs[cls])
    atoms = dict(state.atoms)
    if kind == 0:
        atoms[x] += 1
        ev = Event(BIRTH_CLONAL, x)
    elif kind == 1:
        y = x + model.mut_kernel.sampler(x, rng)
        atoms[y] = atoms.get(y, 0) + 1
        ev = Event(BIRTH_MUTANT, x, y)
    else:
        atoms[x] -= 1
        ev = Event(DEATH, x)
    return wait, ev, PopulationState(atoms, state.K)


class _Engine:
    """Per-class arrays driven by the compiled event kernel."""

    def __init__(self, model: ModelSpec, rng: np.random.Generator, backend=None,
                 buffer_size: int = 1 << 14, log_capacity: int = 0, mutations: bool = True):
        self.model = model
        self.rng = rng
        self.kern = _kernels if backend is None else _kernels.get_backend(backend)
        self.backend = _kernels.BACKEND if backend is None else backend
        self.K = float(model.K)
        self.mutations = mutations
        self.cap = 16
        self.n = 0
        self.traits: list = []
        self.slot_of: dict = {}
        self.counts = np.zeros(self.cap, dtype=np.int64)
        self.birth = np.zeros(self.cap)
        self.death0 = np.zeros(self.cap)
        self.mutp = np.zeros(self.cap)
        self.comp = np.zeros(self.cap)
        self.alpha_t = np.zeros((self.cap, self.cap))
        self.buffer_size = buffer_size
        self.unif = rng.random(buffer_size)
        self.pos = 0
        self.log_t = np.zeros(log_capacity)
        self.log_kind = np.zeros(log_capacity, dtype=np.int8)
        self.log_slot = np.zeros(log_capacity, dtype=np.int64)
        self.log_pos = 0
        self.t = 0.0
        self.n_events = 0
        self.since_check = 0

    def _grow(self):
        cap = 2 * self.cap
        for name in ("counts", "birth", "death0", "mutp", "comp"):
            old = getattr(self, name)
            new = np.zeros(cap, dtype=old.dtype)
            new[: self.cap] = old
            setattr(self, name, new)
        a = np.zeros((cap, cap))
        a[: self.cap, : self.cap] = self.alpha_t
        self.alpha_t = a
        self.cap = cap

    def add_individuals(self, x: float, count: int) -> int:
        """Add ``count`` individuals of trait ``x``, creating a class if needed."""
        x = float(x)
        s = self.slot_of.get(x)
        if s is None:
            if self.n == self.cap:
                self._grow()
            s = self.n
            n_old = self.n
            self.n += 1
            self.traits.append(x)
            self.slot_of[x] = s
            m = self.model
            self.birth[s] = float(m.birth(x))
            self.death0[s] = float(m.death(x))
            self.mutp[s] = m.u_K * float(m.mut_prob(x)) if self.mutations else 0.0
            others = np.array(self.traits)
            # alpha_t[s, j] = alpha(x_j, x); alpha_t[j, s] = alpha(x, x_j)
            self.alpha_t[s, : self.n] = m.competition(others, x)
            self.alpha_t[: self.n, s] = m.competition(x, others)
            self.comp[s] = float(self.alpha_t[:n_old, s] @ self.counts[:n_old])
        self.counts[s] += count
        self.comp[: self.n] += count * self.alpha_t[s, : self.n]
        return s

    def exact_comp(self) -> np.ndarray:
        return self.alpha_t[: self.n, : self.n].T @ self.counts[: self.n].astype(float)

    def check_and_rebuild(self):
        exact = self.exact_comp()
        drift = np.abs(self.comp[: self.n] - exact)
        scale = np.maximum(np.abs(exact), 1.0)
        if np.any(drift > DRIFT_RTOL * scale):
            raise NumericalError("incremental competition sums drifted", float(np.max(drift / scale)))
        self.comp[: self.n] = exact
        self.since_check = 0

    def compact(self):
        alive = self.counts[: self.n] > 0
        if alive.all():
            return
        keep = np.flatnonzero(alive)
        k = keep.size
        for name in ("counts", "birth", "death0", "mutp", "comp"):
            arr = getattr(self, name)
            arr[:k] = arr[keep]
            arr[k: self.n] = 0
        self.alpha_t[:k, :k] = self.alpha_t[np.ix_(keep, keep)]
        self.traits = [self.traits[i] for i in keep]
        self.slot_of = {x: i for i, x in enumerate(self.traits)}
        self.n = k

    def state(self) -> PopulationState:
        return PopulationState({x: int(self.counts[i]) for i, x in enumerate(self.traits)
                                if self.counts[i] > 0}, int(self.K))

    def flush_log(self, log: Optional[EventLog]):
        if log is not None and self.log_pos:
            for k in range(self.log_pos):
                log.append(self.log_t[k], _KIND_NAMES[int(self.log_kind[k])],
                           self.traits[int(self.log_slot[k])])
        self.log_pos = 0

    def run_until(self, t_stop: float, log: Optional[EventLog] = None,
                  stop_on_mutation: bool = False):
        """Advance to ``t_stop``. Returns ``"tstop"``, ``"extinct"`` or ``("mutation", parent)``."""
        while True:
            budget = CHECK_EVERY - self.since_check
            status, t, pos, nev, slot, lp = self.kern.ibm_run(
                self.counts, self.birth, self.death0, self.mutp, self.comp, self.alpha_t,
                self.n, self.K, self.t, t_stop, self.unif, self.pos, budget,
                self.log_t, self.log_kind, self.log_slot, self.log_pos)
            self.t, self.pos, self.log_pos = t, pos, lp
            self.n_events += nev
            self.since_check += nev
            if status == _kernels.IBM_MAXEVENTS:
                self.check_and_rebuild()
                if self.n > 64 and self.n > 2 * int(np.count_nonzero(self.counts[: self.n])):
                    self.flush_log(log)
                    self.compact()
                continue
            if status == _kernels.IBM_LOGFULL:
                self.flush_log(log)
                continue
            if status == _kernels.IBM_REFILL:
                self.unif = np.concatenate([self.unif[self.pos:], self.rng.random(self.buffer_size)])
                self.pos = 0
                continue
            self.flush_log(log)
            if status == _kernels.IBM_TSTOP:
                return "tstop"
            if status == _kernels.IBM_EXTINCT:
                return "extinct"
            # mutation: counts untouched, time at the event
            parent = self.traits[slot]
            if stop_on_mutation:
                return ("mutation", parent)
            y = parent + self.model.mut_kernel.sampler(parent, self.rng)
            self.add_individuals(y, 1)
            self.n_events += 1
            self.since_check += 1
            if log is not None:
                log.append(self.t, BIRTH_MUTANT, parent, y)


def simulate(model: ModelSpec, initial: PopulationState, t_end: float, rng: np.random.Generator,
             recorder: Optional[Callable[[float, PopulationState], None]] = None,
             n_snapshots: int = 500, log_events: bool = False, backend=None) -> SimulationResult:
    """Simulate on ``[0, t_end]`` recording ``n_snapshots`` evenly spaced states.

    ``recorder`` receives ``(time, PopulationState)`` at each grid time; a
    ``Trajectory`` recorder is used when none is given.
    """
    if t_end <= 0:
        raise ContractError("t_end must be positive")
    if initial.K != model.K:
        raise ContractError("initial state and model disagree on K")
    traj = recorder if recorder is not None else Trajectory()
    log = EventLog() if log_events else None
    eng = _Engine(model, rng, backend=backend, log_capacity=1 << 16 if log_events else 0)
    for x in sorted(initial.atoms):
        eng.add_individuals(x, initial.atoms[x])
    grid = np.linspace(0.0, t_end, max(n_snapshots, 2))
    extinct = False
    traj(0.0, eng.state())
    for tk in grid[1:]:
        if not extinct:
            extinct = eng.run_until(float(tk), log) == "extinct"
        traj(float(tk), eng.state())
    eng.check_and_rebuild()
    return SimulationResult(traj if isinstance(traj, Trajectory) else Trajectory(), log,
                            eng.state(), float(grid[-1]), eng.n_events, extinct, eng.backend)


@dataclass(frozen=True)
class FirstMutation:
    tau: float
    parent: Optional[float]
    extinct: bool = False


def first_mutation_time(model: ModelSpec, residents: Sequence[float], rng: np.random.Generator,
                        equilibrium: Optional[Sequence[float]] = None, t_max: float = math.inf,
                        backend=None) -> FirstMutation:
    """Time of the first mutant birth from the residents at equilibrium.

    The initial counts are ``round(K n_i)``. Extinction before any mutation
    returns ``FirstMutation(inf, None, extinct=True)``.
    """
    from .lotka_volterra import check_coexistence

    residents = [float(x) for x in residents]
    if equilibrium is None:
        ok, rep = check_coexistence(model, residents)
        if not ok:
            raise ContractError("residents do not coexist")
        equilibrium = rep.point
    eng = _Engine(model, rng, backend=backend)
    for x, n in zip(residents, equilibrium):
        eng.add_individuals(x, int(round(model.K * float(n))))
    out = eng.run_until(t_max, stop_on_mutation=True)
    if out == "extinct":
        return FirstMutation(math.inf, None, True)
    if out == "tstop":
        return FirstMutation(math.inf, None, False)
    return FirstMutation(eng.t, out[1])


def gap_clusters(traits, weights=None, gap: float = 0.1) -> list:
    """Split sorted traits at gaps larger than ``gap``.

    Returns a list of dicts with ``lo, hi, mean, mass`` (weighted mean).
    """
    xs = np.asarray(traits, dtype=float)
    w = np.ones_like(xs) if weights is None else np.asarray(weights, dtype=float)
    if xs.size == 0:
        return []
    order = np.argsort(xs)
    xs, w = xs[order], w[order]
    cuts = np.flatnonzero(np.diff(xs) > gap) + 1
    out = []
    for seg_x, seg_w in zip(np.split(xs, cuts), np.split(w, cuts)):
        out.append({"lo": float(seg_x[0]), "hi": float(seg_x[-1]),
                    "mean": float(np.average(seg_x, weights=seg_w)), "mass": float(seg_w.sum())})
    return out
