"""Evolutionary singularities, branching classification and invasibility plots."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, UndeterminedError
from .model import (
    ModelSpec,
    dimorphic_equilibrium,
    fitness1,
    fitness2,
    fitness_partials,
    monomorphic_equilibrium,
    partials,
)

BRANCHING = "branching"
ATTRACTING_NO_BRANCHING = "attracting_no_branching"
REPULSIVE = "repulsive"
DEGENERATE = "degenerate"
DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class SingularityReport:
    x_star: float
    a: float
    c: float
    classification: str
    coexistence_nearby: Optional[bool]
    d12: float = float("nan")
    gradient: float = 0.0
    method: str = "finite_difference"

    def to_dict(self) -> dict:
        return asdict(self)


def classify(a: float, c: float, tol: float = DEGENERACY_TOL) -> str:
    if abs(a - c) < tol or abs(a) < tol or abs(a + c) < tol:
        return DEGENERATE
    if a > c:
        return REPULSIVE
    return BRANCHING if a > 0 else ATTRACTING_NO_BRANCHING


def _gradient(model: ModelSpec, x: float, analytic: bool) -> float:
    return partials(model, x, x, analytic=analytic)["d1"]


def _bisect(fun, lo: float, hi: float, flo: float, xtol: float = 1e-10) -> float:
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def analyze_point(model: ModelSpec, x_star: float, analytic: bool = True) -> SingularityReport:
    """Curvatures and classification at a known singularity."""
    use_analytic = analytic and model.analytic is not None
    p = partials(model, x_star, x_star, analytic=use_analytic)
    a, c = float(p["d11"]), float(p["d22"])
    cls = classify(a, c)
    coex = None if abs(a + c) < DEGENERACY_TOL else bool(a + c > 0)
    return SingularityReport(float(x_star), a, c, cls, coex, float(p["d12"]), float(p["d1"]),
                             "analytic" if use_analytic else "finite_difference")


def find_singularities(model: ModelSpec, bracket_grid: Optional[Sequence[float]] = None,
                       analytic: bool = True) -> list:
    """Roots of ``x -> d1 f(x; x)`` bracketed on a grid and refined by bisection."""
    if model.space.dim != 1:
        raise ContractError("singularity search needs one-dimensional traits")
    lo, hi = model.space.bounds
    if bracket_grid is None:
        pad = 1e-3 * (hi - lo)
        bracket_grid = np.linspace(lo + pad, hi - pad, 1001)
    xs = np.asarray(bracket_grid, dtype=float)

    def grad(x):
        return _gradient(model, x, analytic)

    vals = np.array([grad(x) for x in xs])
    roots = []
    for i in range(xs.size - 1):
        if vals[i] == 0.0:
            roots.append(float(xs[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(_bisect(grad, xs[i], xs[i + 1], vals[i]))
    if vals[-1] == 0.0:
        roots.append(float(xs[-1]))
    return [analyze_point(model, r, analytic) for r in roots]


def coexistence_near_es(report: SingularityReport) -> bool:
    """Whether coexisting pairs exist arbitrarily close to the singularity."""
    if abs(report.a + report.c) < DEGENERACY_TOL:
        raise UndeterminedError("a + c = 0: coexistence is undetermined at this order")
    return report.a + report.c > 0


@dataclass
class ExpansionDiagnostics:
    scales: list
    r2: list
    r3: list
    pair_sum: list
    nbar_star: float
    r2_decreasing: bool
    r3_decreasing: bool
    pair_sum_rel_error: float
    es_identity_residual: float


# offset patterns in units of the scale; chosen to avoid x = y and z in {x, y}
_PAIR_PATTERNS = [(-1.0, 0.6), (0.3, -0.9), (-0.5, -1.0), (1.0, 0.2), (-0.8, 0.9), (0.7, -0.4)]
_TRIPLE_PATTERNS = [(-1.0, 0.6, 0.1), (0.3, -0.9, -0.4), (-0.5, 0.8, 1.0), (1.0, 0.2, -0.7),
                    (-0.8, 0.9, 0.5), (0.7, -0.4, 0.95)]


def verify_expansions(model: ModelSpec, report: SingularityReport,
                      scales: Sequence[float] = (0.1, 0.05, 0.025, 0.0125)) -> ExpansionDiagnostics:
    """Normalised remainders of the second-order expansions near ``x*``.

    ``R2 = |f(y;x) - (x-y)(c(x-x*) - a(y-x*))/2| / (|x-y| (|x-x*| + |y-x*|))``
    and ``R3 = |f(z;x,y) - a (z-x)(z-y)/2| / (|z-x| |z-y|)``, maximised over
    fixed offset patterns scaled by each ``s``. Also tracks
    ``n1(x,y) + n2(x,y)`` against ``nbar(x*)`` and the identity
    ``r'(x*) = r(x*) d1 alpha(x*,x*) / alpha(x*,x*)``.
    """
    if abs(report.a + report.c) < DEGENERACY_TOL:
        raise UndeterminedError("expansions are not verified at a degenerate singularity")
    xs, a, c = report.x_star, report.a, report.c
    r2s, r3s, sums = [], [], []
    for s in scales:
        r2 = 0.0
        for u, v in _PAIR_PATTERNS:
            x, y = xs + s * u, xs + s * v
            f = float(fitness1(model, y, x))
            approx = 0.5 * (x - y) * (c * (x - xs) - a * (y - xs))
            r2 = max(r2, abs(f - approx) / (abs(x - y) * (abs(x - xs) + abs(y - xs))))
        r3 = 0.0
        psum = []
        for u, v, w in _TRIPLE_PATTERNS:
            x, y, z = xs + s * u, xs + s * v, xs + s * w
            f = float(fitness2(model, z, x, y, require_sign=False))
            approx = 0.5 * a * (z - x) * (z - y)
            r3 = max(r3, abs(f - approx) / (abs(z - x) * abs(z - y)))
            n1, n2 = dimorphic_equilibrium(model, x, y, require_sign=False)
            psum.append(float(n1 + n2))
        r2s.append(r2)
        r3s.append(r3)
        sums.append(psum)
    nstar = float(monomorphic_equilibrium(model, xs))
    rel = float(np.max(np.abs(np.array(sums[-1]) - nstar)) / nstar)
    h = 1e-5 * (1 + abs(xs))
    dr = float((model.growth(xs + h) - model.growth(xs - h)) / (2 * h))
    dalpha = float((model.competition(xs + h, xs) - model.competition(xs - h, xs)) / (2 * h))
    ident = dr - float(model.growth(xs)) * dalpha / float(model.competition(xs, xs))
    return ExpansionDiagnostics(
        scales=list(scales), r2=r2s, r3=r3s, pair_sum=sums, nbar_star=nstar,
        r2_decreasing=all(b < a_ for a_, b in zip(r2s, r2s[1:])),
        r3_decreasing=all(b < a_ for a_, b in zip(r3s, r3s[1:])),
        pair_sum_rel_error=rel, es_identity_residual=ident)


@dataclass
class PIPGrid:
    xs: np.ndarray
    ys: np.ndarray
    sign_fyx: np.ndarray
    sign_fxy: np.ndarray
    coexist: np.ndarray

    def rows(self):
        """``(x, y, sign f(y;x), sign f(x;y), coexist)`` rows, x-major."""
        for i, x in enumerate(self.xs):
            for j, y in enumerate(self.ys):
                yield (float(x), float(y), int(self.sign_fyx[i, j]), int(self.sign_fxy[i, j]),
                       int(self.coexist[i, j]))


def pip(model: ModelSpec, x_range: Optional[tuple] = None, resolution: int = 400,
        x_star: float = 0.0, zero_tol: float = 1e-14) -> PIPGrid:
    """Signs of ``f(y; x)`` and ``f(x; y)`` on a square grid.

    Entry ``[i, j]`` refers to resident ``xs[i]`` and mutant ``ys[j]``.
    """
    if model.space.dim != 1:
        raise ContractError("PIP needs one-dimensional traits")
    if x_range is None:
        lo, hi = model.space.bounds
        x_range = (max(lo, x_star - 0.5), min(hi, x_star + 0.5))
    g = np.linspace(x_range[0], x_range[1], resolution)
    X, Y = g[:, None], g[None, :]
    fyx = fitness1(model, Y, X)
    fxy = fitness1(model, X, Y)
    s_yx = np.where(np.abs(fyx) <= zero_tol, 0, np.sign(fyx)).astype(int)
    s_xy = np.where(np.abs(fxy) <= zero_tol, 0, np.sign(fxy)).astype(int)
    np.fill_diagonal(s_yx, 0)
    np.fill_diagonal(s_xy, 0)
    coex = (s_yx > 0) & (s_xy > 0)
    return PIPGrid(g, g.copy(), s_yx, s_xy, coex)


def zero_contour_slope(model: ModelSpec, x_star: float = 0.0, radius: float = 0.05,
                       n: int = 21, resolution: int = 400, half_width: float = 0.5) -> float:
    """Slope ``dy/dx`` of the non-diagonal zero contour of ``f(y; x)`` at ``x*``.

    For each resident column near ``x*`` the off-diagonal sign change of
    ``f(.; x)`` on a PIP-resolution grid is located by linear interpolation;
    a line through ``(x*, x*)`` is then fitted by least squares.
    """
    ys = np.linspace(x_star - half_width, x_star + half_width, resolution)
    pts_x, pts_y = [], []
    for x in np.linspace(x_star - radius, x_star + radius, n):
        if abs(x - x_star) < 1e-12:
            continue
        f = np.asarray(fitness1(model, ys, x), dtype=float)
        best = None
        for j in range(ys.size - 1):
            if f[j] * f[j + 1] < 0:
                yz = ys[j] - f[j] * (ys[j + 1] - ys[j]) / (f[j + 1] - f[j])
                if abs(yz - x) > 2 * (ys[1] - ys[0]):
                    if best is None or abs(yz - x_star) < abs(best - x_star):
                        best = yz
        if best is not None:
            pts_x.append(x - x_star)
            pts_y.append(best - x_star)
    if len(pts_x) < 2:
        raise ContractError("no off-diagonal zero contour found near x*")
    px, py = np.array(pts_x), np.array(pts_y)
    return float(px @ py / (px @ px))


def finite_difference_curvatures(model: ModelSpec, x_star: float) -> tuple:
    """``(a, c)`` by finite differences regardless of analytic availability."""
    p = fitness_partials(model, x_star, x_star)
    return p["d11"], p["d22"]
