"""Polymorphic evolution sequence and its killed variants.

States are finite sets of coexisting traits at their Lotka-Volterra
equilibrium. Mutations are proposed by thinning: parents mutate at rate
``p(x_j) lambda(x_j) n_j``, the mutant ``y = x_j + eps h`` with
``h ~ m(x_j, .)`` is accepted with probability ``[f(y; x)]_+ / lambda(y)``
and the new state is the long-run limit of LV(d+1).

With jump scale ``eps`` time is rescaled so that one unit of returned time
is ``1 / eps^2`` units of mutation time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError
from .lotka_volterra import (
    LimitParams,
    NonConvergent,
    check_coexistence,
    invasion_outcome,
    zeeman_verdict,
)
from .model import ModelSpec, fitness1, fitness_d, monomorphic_equilibrium

FULL = "full"
KILLED1 = "killed1"
KILLED2 = "killed2"
VARIANTS = (FULL, KILLED1, KILLED2)

ALIVE = "none"
COEXIST_PAIR = "coexist_pair"
TRIPLE_C_COEX = "triple_C_coex"
LV_NONCONVERGENT = "lv_nonconvergent"


@dataclass(frozen=True)
class PESState:
    support: tuple
    densities: tuple
    killed: str = ALIVE

    @property
    def alive(self) -> bool:
        return self.killed == ALIVE

    @property
    def diameter(self) -> float:
        return max(self.support) - min(self.support) if self.support else 0.0

    @classmethod
    def monomorphic(cls, model: ModelSpec, x: float) -> "PESState":
        return cls((float(x),), (float(monomorphic_equilibrium(model, x)),))

    @classmethod
    def from_traits(cls, model: ModelSpec, traits: Sequence[float]) -> "PESState":
        ok, rep = check_coexistence(model, sorted(float(x) for x in traits))
        if not ok:
            raise ContractError("traits do not coexist")
        return cls(tuple(rep.traits), tuple(float(v) for v in rep.point))

    def killed_as(self, reason: str) -> "PESState":
        return PESState(self.support, self.densities, reason)


@dataclass
class JumpRecord:
    t: float
    state: PESState
    annotation: Optional[dict]


@dataclass
class JumpTrajectory:
    records: list = field(default_factory=list)
    epsilon: float = 1.0
    variant: str = FULL

    @property
    def final(self) -> PESState:
        return self.records[-1].state

    def states(self):
        return [(r.t, r.state) for r in self.records]


@dataclass(frozen=True)
class JumpRates:
    parents: tuple
    rates: np.ndarray
    total: float


def pes_jump_rates(model: ModelSpec, state: PESState) -> JumpRates:
    """Per-parent proposal rates ``p(x_j) lambda(x_j) n_j``."""
    xs = np.array(state.support)
    rates = (np.asarray(model.mut_prob(xs), dtype=float) * np.asarray(model.birth(xs), dtype=float)
             * np.array(state.densities))
    return JumpRates(state.support, rates, float(rates.sum()))


def acceptance_probability(model: ModelSpec, state: PESState, y: float) -> float:
    """``[f(y; x)]_+ / lambda(y)`` for the resident state."""
    f = fitness_d(model, y, state.support, state.densities)
    return max(f, 0.0) / float(model.birth(y))


def pes_step(model: ModelSpec, state: PESState, rng: np.random.Generator, variant: str = FULL,
             epsilon: Optional[float] = None, params: LimitParams = LimitParams()):
    """Propose one mutation; returns ``(waiting_time, new_state, annotation)``."""
    if not state.alive:
        raise ContractError("killed state is absorbing")
    if variant not in VARIANTS:
        raise ContractError(f"unknown variant {variant!r}")
    eps = model.epsilon if epsilon is None else float(epsilon)
    jr = pes_jump_rates(model, state)
    if jr.total <= 0:
        return math.inf, state, None
    wait = rng.exponential(1.0 / jr.total) * eps * eps
    j = int(np.searchsorted(np.cumsum(jr.rates), rng.random() * jr.total, side="right"))
    j = min(j, len(jr.parents) - 1)
    parent = jr.parents[j]
    y = parent + eps * model.mut_kernel.sampler(parent, rng)
    u = rng.random()
    ann = {"parent": parent, "mutant": y, "accepted": False, "killed_reason": None,
           "outcome_support": list(state.support)}
    d = len(state.support)
    if variant == KILLED1:
        if d != 1:
            raise ContractError("the first killed variant lives on monomorphic states")
        x = state.support[0]
        if fitness1(model, y, x) > 0 and fitness1(model, x, y) > 0:
            ann["killed_reason"] = COEXIST_PAIR
            ann["outcome_support"] = []
            return wait, state.killed_as(COEXIST_PAIR), ann
    if variant == KILLED2 and d == 2 and y not in state.support:
        if zeeman_verdict(model, state.support[0], state.support[1], y).in_C_coex:
            ann["killed_reason"] = TRIPLE_C_COEX
            ann["outcome_support"] = []
            return wait, state.killed_as(TRIPLE_C_COEX), ann
    if y in state.support or u >= acceptance_probability(model, state, y):
        return wait, state, ann
    ann["accepted"] = True
    rep = invasion_outcome(model, state.support, state.densities, y, params)
    if isinstance(rep, NonConvergent):
        ann["killed_reason"] = LV_NONCONVERGENT
        ann["outcome_support"] = []
        return wait, state.killed_as(LV_NONCONVERGENT), ann
    pairs = sorted((rep.traits[i], float(rep.point[i])) for i in rep.support)
    new = PESState(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))
    ann["outcome_support"] = list(new.support)
    if rep.audit_ok is False:
        ann["audit"] = rep.audit_notes
    return wait, new, ann


def simulate_pes(model: ModelSpec, initial: PESState, t_end: float, rng: np.random.Generator,
                 variant: str = FULL, epsilon: Optional[float] = None,
                 params: LimitParams = LimitParams(), log_rejected: bool = True,
                 max_proposals: int = 10 ** 7,
                 stop: Optional[Callable[[float, PESState], bool]] = None) -> JumpTrajectory:
    """Iterate ``pes_step`` until ``t_end``, killing, or ``stop(t, state)``."""
    eps = model.epsilon if epsilon is None else float(epsilon)
    traj = JumpTrajectory([JumpRecord(0.0, initial, None)], eps, variant)
    t = 0.0
    state = initial
    for _ in range(max_proposals):
        if not state.alive:
            break
        wait, new, ann = pes_step(model, state, rng, variant, eps, params)
        if t + wait > t_end:
            break
        t += wait
        changed = new != state
        state = new
        if changed or log_rejected:
            traj.records.append(JumpRecord(t, state, ann))
        if stop is not None and stop(t, state):
            break
    return traj


@dataclass(frozen=True)
class BranchingReport:
    eta: float
    occurred: bool
    t1: Optional[float]
    t2: Optional[float]
    max_support_diameter: float


def detect_branching(trajectory: JumpTrajectory, x_star: float, eta: float) -> BranchingReport:
    """Scan for an eta-branching event.

    A candidate starts at a monomorphic state inside ``[x* - eta, x* + eta]``;
    afterwards the support must stay in the window with at most two traits
    and strictly increasing diameter until the diameter exceeds ``eta / 2``.
    A new monomorphic state in the window restarts the candidate; any other
    violation discards it.
    """
    lo, hi = x_star - eta, x_star + eta
    t1 = None
    last_diam = 0.0
    prev = None
    max_diam = 0.0
    for rec in trajectory.records:
        st = rec.state
        if not st.alive:
            break
        sup = st.support
        diam = st.diameter
        max_diam = max(max_diam, diam)
        inside = all(lo <= s <= hi for s in sup)
        if sup == prev:
            continue
        prev = sup
        if len(sup) == 1:
            t1 = rec.t if inside else None
            last_diam = 0.0
            continue
        if t1 is None:
            continue
        if not inside or len(sup) > 2 or diam <= last_diam:
            t1 = None
            continue
        last_diam = diam
        if diam > eta / 2:
            return BranchingReport(eta, True, t1, rec.t, max(max_diam, _max_diam(trajectory)))
    return BranchingReport(eta, False, None, None, _max_diam(trajectory))


def _max_diam(trajectory: JumpTrajectory) -> float:
    return max((r.state.diameter for r in trajectory.records if r.state.alive), default=0.0)


def entry_time(trajectory: JumpTrajectory, x_star: float, eta: float) -> Optional[float]:
    """First time the whole support lies in ``(x* - eta, x* + eta)``."""
    for rec in trajectory.records:
        if rec.state.alive and all(abs(s - x_star) < eta for s in rec.state.support):
            return rec.t
    return None
