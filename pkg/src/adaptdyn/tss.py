"""Trait substitution sequence and the canonical equation.

The rescaled TSS is built by Poisson thinning: proposals ``h`` arrive at
rate ``gamma * integral(mbar) / eps^2`` with ``h ~ mbar / integral(mbar)``
and are accepted with probability
``([g(x + eps h; x)]_+ / gamma) * m(x, h) / mbar(h)`` where
``g(y; x) = p(x) lambda(x) nbar(x) f(y; x) / lambda(y)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import AssumptionViolation, ContractError, DominatingBoundError, NumericalError
from .model import ModelSpec, fitness1, monomorphic_equilibrium, partials

GAMMA_SAFETY = 1.2


def g_function(model: ModelSpec, y, x):
    """``g(y; x) = p(x) lambda(x) nbar(x) f(y; x) / lambda(y)``; vectorised."""
    lam_y = np.asarray(model.birth(y), dtype=float)
    if np.any(lam_y <= 0):
        raise AssumptionViolation("lambda(y) <= 0")
    pref = (np.asarray(model.mut_prob(x), dtype=float) * np.asarray(model.birth(x), dtype=float)
            * monomorphic_equilibrium(model, x))
    return pref * fitness1(model, y, x) / lam_y


def gamma_bound(model: ModelSpec, n_grid: int = 200, safety: float = GAMMA_SAFETY) -> float:
    """Grid maximum of ``[g]_+`` over the space squared, times ``safety``."""
    xs = model.space.grid(n_grid)
    g = g_function(model, xs[None, :], xs[:, None])
    return safety * float(max(np.max(g), 0.0)) or safety * 1e-12


def d1g_diag(model: ModelSpec, x: float) -> float:
    """``d/dy g(y; x)`` at ``y = x``, equal to ``p(x) nbar(x) d1 f(x; x)``."""
    return float(model.mut_prob(x) * monomorphic_equilibrium(model, x)) * partials(model, x, x)["d1"]


@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def canonical_drift(model: ModelSpec, x: float, nodes: int = 256) -> float:
    """``integral of h [h d1g(x;x)]_+ m(x, h) dh`` by Gauss-Legendre quadrature.

    Only the half-line where ``h d1g > 0`` contributes, so the kink at zero
    is placed on an interval endpoint.
    """
    if model.space.dim != 1:
        raise ContractError("canonical drift is implemented for one-dimensional traits")
    x = float(x)
    s = d1g_diag(model, x)
    if s == 0.0:
        return 0.0
    lo, hi = model.mut_kernel.support(x)
    a, b = (max(lo, 0.0), hi) if s > 0 else (lo, min(hi, 0.0))
    if b <= a:
        return 0.0
    t, w = _gauss_legendre(nodes)
    h = 0.5 * (b - a) * t + 0.5 * (a + b)
    vals = h * h * s * np.asarray(model.mut_kernel.density(x, h), dtype=float)
    out = 0.5 * (b - a) * float(np.dot(w, vals))
    if not np.isfinite(out):
        raise NumericalError("canonical drift quadrature failed", {"x": x, "interval": (a, b)})
    return out


@dataclass
class CanonicalSolution:
    times: np.ndarray
    values: np.ndarray
    drift: Callable[[float], float]
    error_estimate: float

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


def _solve(model, x0, t_end, tol, times, nodes):
    lo, hi = model.space.bounds

    def f(_t, y):
        return [canonical_drift(model, min(max(y[0], lo), hi), nodes)]

    sol = solve_ivp(f, (0.0, t_end), [float(x0)], method="RK45", t_eval=times,
                    rtol=tol, atol=tol * 1e-2)
    if not sol.success:
        raise NumericalError("canonical equation integration failed", sol.message)
    return sol.y[0]


def solve_canonical(model: ModelSpec, x0: float, t_end: float, tol: float = 1e-8,
                    n_out: int = 401, nodes: int = 256) -> CanonicalSolution:
    """Integrate ``x' = canonical_drift(x)`` on ``[0, t_end]``.

    The error estimate is twice the largest difference from a solve at
    tolerance ``tol / 16``.
    """
    if not model.space.contains(x0):
        raise ContractError("x0 outside the trait space")
    times = np.linspace(0.0, t_end, n_out)
    coarse = _solve(model, x0, t_end, tol, times, nodes)
    fine = _solve(model, x0, t_end, tol / 16, times, nodes)
    err = 2.0 * float(np.max(np.abs(coarse - fine)))
    return CanonicalSolution(times, coarse, lambda x: canonical_drift(model, x, nodes), err)


def drift_lipschitz(model: ModelSpec, xs, h: float = 1e-4) -> float:
    """Finite-difference estimate of the drift's Lipschitz constant over ``xs``."""
    lo, hi = model.space.bounds
    best = 0.0
    for x in np.atleast_1d(xs):
        a, b = max(x - h, lo), min(x + h, hi)
        best = max(best, abs(canonical_drift(model, b) - canonical_drift(model, a)) / (b - a))
    return best


@dataclass
class TSSPath:
    times: list = field(default_factory=list)
    traits: list = field(default_factory=list)
    epsilon: float = 1.0
    n_proposals: int = 0

    def on_grid(self, grid) -> np.ndarray:
        """Piecewise-constant (right-continuous) trait at each grid time."""
        idx = np.searchsorted(np.asarray(self.times), np.asarray(grid), side="right") - 1
        return np.asarray(self.traits)[np.clip(idx, 0, None)]


def simulate_tss(model: ModelSpec, x0: float, epsilon: Optional[float], t_end: float,
                 rng: np.random.Generator, gamma: Optional[float] = None,
                 batch: int = 512, chunk: int = 64, max_jumps: Optional[int] = None) -> TSSPath:
    """Rescaled TSS by Poisson thinning on ``[0, t_end]``.

    Stops early after ``max_jumps`` accepted jumps when given.

    Proposals are drawn in batches; after an accepted jump the remaining
    proposals of the batch are re-tested against the new state, which is
    exact because the proposal points do not depend on the state.
    """
    eps = model.epsilon if epsilon is None else float(epsilon)
    if not 0.0 < eps <= 1.0:
        raise ContractError("epsilon must lie in (0, 1]")
    if not model.space.contains(x0):
        raise ContractError("x0 outside the trait space")
    gamma = gamma_bound(model) if gamma is None else float(gamma)
    kern = model.mut_kernel
    rate = gamma * kern.dominating_mass / (eps * eps)
    path = TSSPath([0.0], [float(x0)], eps)
    x = float(x0)
    t = 0.0
    while True:
        gaps = rng.exponential(1.0 / rate, size=batch)
        hs = kern.dominating_sampler(rng, batch)
        us = rng.random(batch)
        times = t + np.cumsum(gaps)
        path.n_proposals += batch
        i = 0
        while i < batch:
            j = min(i + chunk, batch)
            ratio = _acceptance(model, x, hs[i:j], eps, gamma)
            hit = np.flatnonzero(us[i:j] < ratio)
            if hit.size == 0:
                if times[j - 1] > t_end:
                    return path
                i = j
                continue
            k = i + int(hit[0])
            if times[k] > t_end:
                return path
            x = x + eps * float(hs[k])
            path.times.append(float(times[k]))
            path.traits.append(x)
            if max_jumps is not None and len(path.traits) > max_jumps:
                return path
            i = k + 1
        t = float(times[-1])
        if t > t_end:
            return path


def _acceptance(model: ModelSpec, x: float, hs: np.ndarray, eps: float, gamma: float) -> np.ndarray:
    kern = model.mut_kernel
    m = np.asarray(kern.density(x, hs), dtype=float)
    mbar = np.asarray(kern.dominating_density(hs), dtype=float)
    out = np.zeros_like(hs)
    ok = m > 0
    if np.any(ok):
        y = x + eps * hs[ok]
        g = np.maximum(g_function(model, y, x), 0.0)
        out[ok] = (g / gamma) * (m[ok] / mbar[ok])
    if np.any(out > 1.0):
        raise DominatingBoundError(f"thinning ratio {float(out.max()):.6g} > 1 at x={x}")
    return out


def jump_rate(model: ModelSpec, x: float, epsilon: float, nodes: int = 256) -> float:
    """``(1/eps^2) integral [g(x + eps h; x)]_+ m(x, h) dh`` by quadrature."""
    lo, hi = model.mut_kernel.support(x)
    t, w = _gauss_legendre(nodes)
    total = 0.0
    for a, b in ((lo, 0.0), (0.0, hi)):
        if b <= a:
            continue
        h = 0.5 * (b - a) * t + 0.5 * (a + b)
        g = np.maximum(g_function(model, x + epsilon * h, x), 0.0)
        total += 0.5 * (b - a) * float(np.dot(w, g * model.mut_kernel.density(x, h)))
    return total / (epsilon * epsilon)
