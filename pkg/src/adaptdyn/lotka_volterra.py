"""Competitive Lotka-Volterra systems LV(d, x).

``n_i' = n_i (r(x_i) - sum_j alpha(x_i, x_j) n_j)``. Integration runs in the
compiled Dormand-Prince kernel; long-run limits stop early once the state
enters a Lyapunov-certified basin of a stable equilibrium. Slow approaches
to a certified equilibrium finish on a stiff solver.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import BDF
from scipy.linalg import solve_continuous_lyapunov

from . import _kernels
from .errors import (
    AmbiguousSignError,
    ContractError,
    DegenerateError,
    TraitDomainError,
)
from .model import (
    ModelSpec,
    dimorphic_equilibrium,
    fitness1,
    fitness2,
    fitness_d,
    monomorphic_equilibrium,
)

STABLE = "strongly_stable"
UNSTABLE = "unstable"
NON_HYPERBOLIC = "non_hyperbolic"


@dataclass(frozen=True)
class LVSystem:
    traits: tuple
    growth: np.ndarray
    interaction: np.ndarray

    @property
    def d(self) -> int:
        return len(self.traits)

    def restrict(self, idx) -> "LVSystem":
        idx = list(idx)
        return LVSystem(tuple(self.traits[i] for i in idx), self.growth[idx],
                        self.interaction[np.ix_(idx, idx)])


@dataclass(frozen=True)
class LimitParams:
    """Numerical conventions for long-run limits (all overridable)."""

    eps_extinct: float = 1e-8
    eps_conv: float = 1e-9
    window: float = 10.0
    t_max: float = 1e5
    eps_init: float = 1e-4
    atol: float = 1e-10
    rtol: float = 1e-8
    cycle_after: float = 1e3
    cycle_windows: int = 10
    stab_tol: float = 1e-10
    cond_max: float = 1e12
    certificates: bool = True
    window_growth: float = 0.05
    horizon_factor: float = 50.0
    stiff_after: float = 1e5


@dataclass
class EquilibriumReport:
    point: np.ndarray
    support: tuple
    jacobian_eigen_real_parts: np.ndarray
    stability: str
    t: float = 0.0
    method: str = ""
    traits: tuple = ()
    audit_ok: Optional[bool] = None
    audit_notes: list = field(default_factory=list)


@dataclass
class NonConvergent:
    """Distinguished outcome: no equilibrium reached."""

    reason: str
    t: float
    state: np.ndarray


def build_lv(model: ModelSpec, traits: Sequence[float]) -> LVSystem:
    traits = tuple(float(x) for x in traits)
    if len(traits) == 0:
        raise ContractError("need at least one trait")
    if len(set(traits)) != len(traits):
        raise ContractError("traits must be pairwise distinct")
    xs = np.array(traits)
    if not np.all(model.space.contains(xs)):
        raise TraitDomainError("trait outside the trait space")
    r = np.asarray(model.growth(xs), dtype=float)
    A = np.asarray(model.competition(xs[:, None], xs[None, :]), dtype=float)
    return LVSystem(traits, r, np.ascontiguousarray(A))


def rhs(system: LVSystem, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return n * (system.growth - system.interaction @ n)


def jacobian(system: LVSystem, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    G = system.growth - system.interaction @ n
    return np.diag(G) - n[:, None] * system.interaction


def classify_stability(eig_real: np.ndarray, tol: float) -> str:
    if np.any(np.abs(eig_real) <= tol):
        return NON_HYPERBOLIC
    if np.all(eig_real < -tol):
        return STABLE
    return UNSTABLE


def _report(system: LVSystem, point: np.ndarray, tol: float, t: float = 0.0,
            method: str = "") -> EquilibriumReport:
    ev = np.linalg.eigvals(jacobian(system, point)).real
    support = tuple(int(i) for i in np.flatnonzero(point > 0))
    return EquilibriumReport(point=point, support=support, jacobian_eigen_real_parts=np.sort(ev),
                             stability=classify_stability(ev, tol), t=t, method=method,
                             traits=system.traits)


def solve_support(system: LVSystem, support, cond_max: float = 1e12) -> np.ndarray:
    """Equilibrium with the given support: solves ``A_II n_I = r_I``."""
    support = list(support)
    point = np.zeros(system.d)
    if not support:
        return point
    sub = system.interaction[np.ix_(support, support)]
    if np.linalg.cond(sub) > cond_max:
        raise DegenerateError(f"interaction submatrix on support {support} is ill-conditioned")
    point[support] = np.linalg.solve(sub, system.growth[support])
    return point


def feasible_equilibria(system: LVSystem, cond_max: float = 1e12, max_dim: int = 12) -> list:
    """All equilibria with strictly positive coordinates on their support."""
    if system.d > max_dim:
        raise ContractError("support enumeration limited to small systems")
    out = []
    for k in range(1, system.d + 1):
        for sup in itertools.combinations(range(system.d), k):
            sub = system.interaction[np.ix_(sup, sup)]
            if np.linalg.cond(sub) > cond_max:
                continue
            nI = np.linalg.solve(sub, system.growth[list(sup)])
            if np.all(nI > 0):
                point = np.zeros(system.d)
                point[list(sup)] = nI
                out.append(point)
    return out


def _certificates(system: LVSystem, tol: float):
    """Quadratic basin certificates around every strongly stable equilibrium.

    With ``J`` the Jacobian at ``n`` and ``P`` solving ``J^T P + P J = -I``,
    the remainder ``-e * (A e)`` is bounded by ``|A| |e|^2`` so ``V(e) = e^T P e``
    decreases on ``|e| < 1 / (2 |P| |A|)``. The sublevel set below
    ``lambda_min(P) rho^2`` lies in that ball and in the basin of ``n``.
    Also returns the slowest decay rate ``min |max Re eig J|`` over them.
    """
    centers, Ps, levels = [], [], []
    slowest = math.inf
    normA = np.linalg.norm(system.interaction, 2)
    for point in feasible_equilibria(system):
        J = jacobian(system, point)
        ev = np.linalg.eigvals(J).real
        if not np.all(ev < -tol):
            continue
        P = solve_continuous_lyapunov(J.T, -np.eye(system.d))
        P = 0.5 * (P + P.T)
        w = np.linalg.eigvalsh(P)
        if w[0] <= 0:
            continue
        rho = 1.0 / (2.0 * w[-1] * normA)
        slowest = min(slowest, float(-ev.max()))
        centers.append(point)
        Ps.append(P)
        levels.append(0.9 * w[0] * rho * rho)
    d = system.d
    if not centers:
        return np.zeros((0, d)), np.zeros((0, d, d)), np.zeros(0), slowest
    return (np.ascontiguousarray(centers), np.ascontiguousarray(Ps),
            np.ascontiguousarray(levels, dtype=float), slowest)


def integrate(system: LVSystem, n0, t_end: float, tol: float = 1e-8, atol: float = 1e-10,
              n_out: int = 201, backend=None):
    """Integrate from ``n0`` on ``[0, t_end]``; returns ``(times, states)``.

    ``tol`` is the relative and ``atol`` the absolute local error tolerance.
    Coordinates starting at zero stay exactly zero.
    """
    n = np.array(n0, dtype=float)
    if n.shape != (system.d,):
        raise ContractError("initial state has wrong length")
    if np.any(n < 0):
        raise TraitDomainError("initial densities must be nonnegative")
    kern = _kernels if backend is None else _kernels.get_backend(backend)
    times = np.linspace(0.0, t_end, n_out)
    states = np.empty((n_out, system.d))
    states[0] = n
    empty_c, empty_P, empty_l = np.zeros((0, system.d)), np.zeros((0, system.d, system.d)), np.zeros(0)
    mn, mx = n.copy(), n.copy()
    h = 1e-2
    t = 0.0
    for k in range(1, n_out):
        status, t, h, _, _ = kern.lv_advance(system.growth, system.interaction, n, t, times[k], h,
                                             atol, tol, empty_c, empty_P, empty_l, mn, mx, 10 ** 8)
        if status != 0:
            raise DegenerateError(f"integration failed at t={t} (status {status})")
        states[k] = n
    return times, states


def long_run_limit(system: LVSystem, n0, params: LimitParams = LimitParams(), backend=None):
    """Integrate to the long-run limit.

    Returns an ``EquilibriumReport`` or ``NonConvergent`` with reason
    ``"t_max"``, ``"cycle"`` or ``"integrator"``.
    """
    n0 = np.array(n0, dtype=float)
    if n0.shape != (system.d,):
        raise ContractError("initial state has wrong length")
    if np.any(n0 < 0):
        raise TraitDomainError("initial densities must be nonnegative")
    kern = _kernels if backend is None else _kernels.get_backend(backend)
    # exact zeros are invariant, so work on the face spanned by the start
    live = np.flatnonzero(n0 > 0)
    full = np.zeros(system.d)
    if live.size == 0:
        return _report(system, full, params.stab_tol, method="trivial")
    sub = system.restrict(live)
    n = np.ascontiguousarray(n0[live])
    d = sub.d
    if params.certificates:
        centers, Ps, levels, slowest = _certificates(sub, params.stab_tol)
        # approach along the slowest stable direction needs about log(1/eps_extinct) / rate
        if math.isfinite(slowest):
            horizon = params.horizon_factor * math.log(1.0 / params.eps_extinct) / slowest
            if horizon > params.t_max:
                params = replace(params, t_max=horizon)
    else:
        centers, Ps, levels = np.zeros((0, d)), np.zeros((0, d, d)), np.zeros(0)

    def embed(v):
        out = np.zeros(system.d)
        out[live] = v
        return out

    for q in range(levels.shape[0]):
        e = n - centers[q]
        if e @ Ps[q] @ e < levels[q]:
            return _report(system, embed(centers[q]), params.stab_tol, 0.0, "certificate")

    t = 0.0
    h = 1e-2
    ends = [n.copy()]
    while t < params.t_max:
        mn, mx = n.copy(), n.copy()
        t_next = min(t + max(params.window, params.window_growth * t), params.t_max)
        status, t, h, _, which = kern.lv_advance(sub.growth, sub.interaction, n, t, t_next, h,
                                                 params.atol, params.rtol, centers, Ps, levels,
                                                 mn, mx, 10 ** 8)
        if status == 1:
            return _report(system, embed(centers[which]), params.stab_tol, t, "certificate")
        if status != 0:
            return NonConvergent("integrator", t, embed(n))
        if np.all(mx - mn < params.eps_conv):
            rep = _settle(system, embed(n), params, t)
            # a saddle of the live face is a heteroclinic sojourn, not a limit
            if not _unstable_on_face(sub, rep.point[live], params.stab_tol):
                return rep
        ends.append(n.copy())
        if t > params.cycle_after and _sustained_oscillation(ends, params):
            return NonConvergent("cycle", t, embed(n))
        if t > params.stiff_after and levels.shape[0] and t < params.t_max:
            return _stiff_tail(system, sub, live, n, t, params, centers, Ps, levels)
    return NonConvergent("t_max", t, embed(n))


def _stiff_tail(system, sub, live, n, t, params, centers, Ps, levels):
    """Finish a slow approach with an implicit BDF solver.

    Only used when a certified equilibrium exists; the explicit kernel is
    step-limited by the fast eigenvalues long after they have relaxed.
    """
    r, A = sub.growth, sub.interaction

    def f(_, v):
        return v * (r - A @ v)

    def jac(_, v):
        return np.diag(r - A @ v) - v[:, None] * A

    def embed(v):
        out = np.zeros(system.d)
        out[live] = v
        return out

    solver = BDF(f, t, n, params.t_max, jac=jac, atol=params.atol, rtol=params.rtol)
    while solver.status == "running":
        solver.step()
        v, s = solver.y, solver.t
        e = v[None, :] - centers
        inside = np.einsum("qi,qij,qj->q", e, Ps, e) < levels
        if inside.any():
            return _report(system, embed(centers[int(np.argmax(inside))]), params.stab_tol, float(s),
                           "certificate")
        # same criterion as a window of the explicit loop with no movement above eps_conv
        if np.max(np.abs(f(s, v))) * max(params.window, params.window_growth * s) < params.eps_conv:
            rep = _settle(system, embed(v), params, float(s))
            if not _unstable_on_face(sub, rep.point[live], params.stab_tol):
                return rep
    if solver.status == "failed":
        return NonConvergent("integrator", float(solver.t), embed(solver.y))
    return NonConvergent("t_max", float(solver.t), embed(solver.y))


def _sustained_oscillation(ends: list, params: LimitParams) -> bool:
    """Oscillation test on window-end states.

    Some coordinate must reverse direction at least four times over the last
    ``2 w`` windows with a swing above ``10 eps_conv`` that has not decayed
    (recent half at least half of the earlier half).
    """
    w = params.cycle_windows
    if len(ends) < 2 * w + 1:
        return False
    seq = np.array(ends[-(2 * w + 1):])
    # swings at the integrator's own tolerance are noise, not oscillation
    noise = 100.0 * (params.atol + params.rtol * np.max(np.abs(seq)))
    floor = max(params.eps_conv, noise)
    inc = np.diff(seq, axis=0)
    inc = np.where(np.abs(inc) > floor, np.sign(inc), 0.0)
    for i in range(seq.shape[1]):
        s = inc[:, i][inc[:, i] != 0]
        flips = int(np.sum(s[1:] != s[:-1]))
        early = np.ptp(seq[: w + 1, i])
        late = np.ptp(seq[w:, i])
        if flips >= 4 and late > 10 * floor and late >= 0.5 * early:
            return True
    return False


def _unstable_on_face(sub: LVSystem, point: np.ndarray, tol: float) -> bool:
    return bool(np.max(np.linalg.eigvals(jacobian(sub, point)).real) > tol)


def _settle(system: LVSystem, state: np.ndarray, params: LimitParams, t: float) -> EquilibriumReport:
    proj = np.where(state < params.eps_extinct, 0.0, state)
    support = np.flatnonzero(proj > 0)
    refined = solve_support(system, support, params.cond_max)
    if np.all(refined[support] > 0):
        proj = refined
    return _report(system, proj, params.stab_tol, t, "settled")


def check_coexistence(model: ModelSpec, traits: Sequence[float], tol: float = 1e-10):
    """Decide whether ``traits`` coexist; returns ``(bool, report or None)``."""
    system = build_lv(model, traits)
    d = system.d
    if d == 1:
        point = np.array([float(monomorphic_equilibrium(model, traits[0]))])
        return True, _report(system, point, tol, method="closed_form")
    if d == 2:
        x, y = system.traits
        ok = bool(fitness1(model, x, y) > 0 and fitness1(model, y, x) > 0)
        if not ok:
            return False, None
        n1, n2 = dimorphic_equilibrium(model, x, y)
        return True, _report(system, np.array([float(n1), float(n2)]), tol, method="closed_form")
    if np.linalg.cond(system.interaction) > 1e12:
        raise DegenerateError("singular interaction matrix")
    point = np.linalg.solve(system.interaction, system.growth)
    if not np.all(point > 0):
        return False, None
    rep = _report(system, point, tol, method="linear_solve")
    return rep.stability == STABLE, rep


def invasion_outcome(model: ModelSpec, residents: Sequence[float], resident_eq, mutant: float,
                     params: LimitParams = LimitParams(), method: str = "auto", backend=None):
    """Long-run state after ``mutant`` enters at density ``eps_init``.

    For a single resident and ``method="auto"`` the exact two-trait case list
    is used (substitution, coexistence at the closed form, or mutant loss);
    otherwise LV(d+1) is integrated. Audits that the surviving support
    coexists and every dropped trait has negative fitness against it.
    """
    residents = [float(v) for v in residents]
    resident_eq = np.asarray(resident_eq, dtype=float)
    traits = residents + [float(mutant)]
    system = build_lv(model, traits)
    if len(residents) == 1 and method == "auto":
        x, y = residents[0], float(mutant)
        fyx = float(fitness1(model, y, x))
        fxy = float(fitness1(model, x, y))
        if fyx == 0.0 or fxy == 0.0:
            raise AmbiguousSignError("zero two-trait fitness")
        if fyx > 0 and fxy < 0:
            point = np.array([0.0, float(monomorphic_equilibrium(model, y))])
        elif fyx > 0 and fxy > 0:
            n1, n2 = dimorphic_equilibrium(model, x, y)
            point = np.array([float(n1), float(n2)])
        else:
            point = np.array([float(resident_eq[0]), 0.0])
        rep = _report(system, point, params.stab_tol, method="two_trait_rule")
    else:
        n0 = np.concatenate([resident_eq, [params.eps_init]])
        f = fitness_d(model, float(mutant), residents, resident_eq)
        if f > 0:
            # invasion from eps_init takes about log(1/eps_init) / f time units
            horizon = params.horizon_factor * math.log(1.0 / params.eps_init) / f
            if horizon > params.t_max:
                params = replace(params, t_max=horizon)
        rep = long_run_limit(system, n0, params, backend=backend)
        if isinstance(rep, NonConvergent):
            return rep
    _audit(model, system, rep)
    return rep


def _audit(model: ModelSpec, system: LVSystem, rep: EquilibriumReport) -> None:
    notes = []
    surv = [system.traits[i] for i in rep.support]
    G = system.growth - system.interaction @ rep.point
    for j in range(system.d):
        if j not in rep.support and not G[j] < 0:
            notes.append(f"dropped trait {system.traits[j]} has fitness {G[j]:.3g} >= 0")
    if rep.stability != STABLE:
        notes.append(f"limit is {rep.stability}")
    if len(surv) > 1:
        ok, _ = check_coexistence(model, surv)
        if not ok:
            notes.append("surviving traits do not coexist")
    rep.audit_ok = not notes
    rep.audit_notes = notes


@dataclass
class ZeemanVerdict:
    """Sign-based classification of a three-trait system.

    ``fitness_signs`` maps labels like ``"f(x;y)"`` or ``"f(z;x,y)"`` to
    +1/-1 (three-trait entries only when defined). ``in_C_coex`` uses the
    index sum of saturated boundary equilibria; ``p1``/``p2`` report the
    literal sign-agreement properties for the labelling ``(x, y | z)``.
    """

    fitness_signs: dict
    in_C_coex: bool
    class_hint: Optional[int]
    class_candidates: tuple
    pattern: bool
    p1: bool
    p2: bool
    boundary_index_sum: int


def _sgn(v: float, tol: float, label: str) -> int:
    if abs(v) <= tol:
        raise AmbiguousSignError(f"{label} = {v:.3g} is within {tol:g} of zero")
    return 1 if v > 0 else -1


def _edge_type(s_uv: int, s_vu: int) -> str:
    """Type of the edge between resident-side trait u and mutant v.

    ``s_uv`` is sign f(u; v), ``s_vu`` sign f(v; u).
    """
    if s_uv > 0 and s_vu > 0:
        return "C"
    if s_uv < 0 and s_vu < 0:
        return "B"
    return "Dz" if s_vu > 0 else "Du"


def zeeman_verdict(model: ModelSpec, x: float, y: float, z: float, tol: float = 1e-12) -> ZeemanVerdict:
    """Fitness signs, C_coex membership and class hint for LV(3, (x, y, z))."""
    traits = {"x": float(x), "y": float(y), "z": float(z)}
    s = {}
    for u, v in itertools.permutations("xyz", 2):
        s[(u, v)] = _sgn(float(fitness1(model, traits[u], traits[v])), tol, f"f({u};{v})")
    signs = {f"f({u};{v})": s[(u, v)] for (u, v) in s}
    s3 = {}
    for w in "xyz":
        u, v = [k for k in "xyz" if k != w]
        if s[(u, v)] * s[(v, u)] > 0:
            val = float(fitness2(model, traits[w], traits[u], traits[v]))
            s3[w] = _sgn(val, tol, f"f({w};{u},{v})")
            signs[f"f({w};{u},{v})"] = s3[w]

    # index sum over saturated boundary equilibria
    S = 0
    for w in "xyz":
        others = [k for k in "xyz" if k != w]
        if all(s[(k, w)] < 0 for k in others):
            S += 1
    for w in "xyz":
        u, v = [k for k in "xyz" if k != w]
        if w in s3 and s3[w] < 0:
            S += 1 if s[(u, v)] > 0 else -1
    pattern_of = [w for w in "xyz" if w in s3 and s3[w] > 0
                  and all(s[(u, v)] > 0 for u, v in itertools.permutations([k for k in "xyz" if k != w], 2))]
    pattern = bool(pattern_of)
    in_coex = pattern and S == 0

    def prop(resident, other):
        # literal (P1)/(P2): if f(resident; other, z) is defined, f(other;z), f(z;other)
        # and f(resident; other, z) share a sign
        if resident not in s3:
            return True
        return s[(other, "z")] == s[("z", other)] == s3[resident]

    p1 = prop("y", "x")
    p2 = prop("x", "y")

    candidates: tuple = ()
    if in_coex:
        candidates = (26, 29, 31, 33)
    elif pattern:
        w = pattern_of[0]
        u, v = [k for k in "xyz" if k != w]
        types = []
        for k in (u, v):
            t = _edge_type(s[(k, w)], s[(w, k)])
            if t in ("C", "B"):
                other = v if k == u else u
                t += "-" if s3[other] < 0 else "+"
            types.append(t)
        key = frozenset(types) if types[0] != types[1] else frozenset([types[0] + "2"])
        table = {
            frozenset(["Dz2"]): (7,),
            frozenset(["C-", "Dz"]): (9,),
            frozenset(["C-", "Du"]): (10, 11, 12),
            frozenset(["C-", "C+"]): (10, 11, 12),
            frozenset(["C-", "B+"]): (10, 11, 12),
        }
        candidates = table.get(key, ())
    hint = candidates[0] if len(candidates) == 1 else None
    return ZeemanVerdict(signs, in_coex, hint, candidates, pattern, p1, p2, S)

