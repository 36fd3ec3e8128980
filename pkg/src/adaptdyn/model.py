"""Trait spaces, model parameters and invasion fitness.

A model is a birth rate ``lambda(x)``, a natural death rate ``mu(x)``, a
competition kernel ``alpha(x, y)``, a mutation probability ``p(x)`` and a
mutation law ``m(x, h) dh`` on a compact box of traits. All parameter
functions must accept numpy arrays and broadcast.

Derivative conventions: for ``f(y; x)`` the first argument is the mutant
``y`` and the second the resident ``x``; ``d1`` differentiates in ``y`` and
``d2`` in ``x``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np
from scipy.special import ndtr

from .errors import (
    AssumptionViolation,
    ContractError,
    DegenerateError,
    SamplingError,
    TraitDomainError,
)

MAX_REJECTION_TRIES = 10_000
DEGENERATE_DENOM_RTOL = 1e-12


@dataclass(frozen=True)
class TraitSpace:
    """Compact box ``[lower, upper]`` in ``R^l``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ContractError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ContractError("need lower < upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def interval(cls, lower: float, upper: float) -> "TraitSpace":
        return cls(np.array([lower]), np.array([upper]))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def bounds(self) -> tuple[float, float]:
        """Scalar bounds of a one-dimensional space."""
        if self.dim != 1:
            raise ContractError("bounds is only defined for l = 1")
        return float(self.lower[0]), float(self.upper[0])

    def contains(self, x) -> Any:
        """Membership test; vectorised over leading axes for l = 1."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return (x >= self.lower[0]) & (x <= self.upper[0])
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def grid(self, n: int) -> np.ndarray:
        lo, hi = self.bounds
        return np.linspace(lo, hi, n)


@dataclass(frozen=True)
class MutationKernel:
    """Law ``m(x, h) dh`` of the jump ``h = y - x`` from a parent at ``x``.

    Attributes
    ----------
    sampler : callable
        ``sampler(x, rng) -> h`` with ``x + h`` in the space.
    density : callable
        ``density(x, h) -> m(x, h)``, vectorised.
    dominating_density : callable
        ``h -> mbar(h)`` with ``m(x, h) <= mbar(h)``.
    dominating_mass : float
        ``integral of mbar``.
    dominating_sampler : callable
        ``(rng, size) -> h`` drawn from ``mbar / dominating_mass``.
    support : callable
        ``x -> (lo, hi)``, an interval carrying all but a negligible part of
        ``m(x, .)``; used for quadrature.
    scale : float
        Characteristic jump size (standard deviation for Gaussian laws).
    """

    sampler: Callable[[float, np.random.Generator], float]
    density: Callable[[Any, Any], Any]
    dominating_density: Callable[[Any], Any]
    dominating_mass: float
    dominating_sampler: Callable[[np.random.Generator, int], np.ndarray]
    support: Callable[[float], tuple[float, float]]
    scale: float


def conditioned_gaussian_kernel(space: TraitSpace, sigma: float,
                                max_tries: int = MAX_REJECTION_TRIES) -> MutationKernel:
    """Normal ``N(0, sigma^2)`` jump conditioned on landing in ``space``.

    The dominating density is ``phi_sigma(h) / Zmin`` where ``Zmin`` is the
    smallest landing probability over the space (attained at an endpoint).
    """
    if sigma <= 0:
        raise ContractError("sigma must be positive")
    lo, hi = space.bounds
    sigma = float(sigma)
    z_min = float(ndtr((hi - lo) / sigma) - 0.5)
    norm_c = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def landing_prob(x):
        return ndtr((hi - x) / sigma) - ndtr((lo - x) / sigma)

    def sampler(x, rng):
        for _ in range(max_tries):
            h = rng.normal(0.0, sigma)
            if lo <= x + h <= hi:
                return h
        raise SamplingError(f"no admissible mutant after {max_tries} draws from x={x}")

    def phi(h):
        h = np.asarray(h, dtype=float)
        return norm_c * np.exp(-0.5 * (h / sigma) ** 2)

    def density(x, h):
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        y = x + h
        inside = (y >= lo) & (y <= hi)
        return np.where(inside, phi(h) / landing_prob(x), 0.0)

    def dominating_density(h):
        return phi(h) / z_min

    def dominating_sampler(rng, size):
        return rng.normal(0.0, sigma, size=size)

    def support(x):
        return max(lo - x, -8.0 * sigma), min(hi - x, 8.0 * sigma)

    return MutationKernel(
        sampler=sampler,
        density=density,
        dominating_density=dominating_density,
        dominating_mass=1.0 / z_min,
        dominating_sampler=dominating_sampler,
        support=support,
        scale=sigma,
    )


@dataclass(frozen=True)
class ModelSpec:
    """Complete parameter set of the individual-based model.

    ``K`` is the carrying scale, ``u_K`` the mutation-rate scale and
    ``epsilon`` the jump scale of the rescaled limit processes.
    """

    space: TraitSpace
    birth: Callable
    death: Callable
    competition: Callable
    mut_prob: Callable
    mut_kernel: MutationKernel
    K: int = 1000
    u_K: float = 1.0
    epsilon: float = 1.0
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    analytic: Optional[Any] = None

    def __post_init__(self):
        if int(self.K) <= 0:
            raise ContractError("K must be a positive integer")
        if not 0.0 <= self.u_K <= 1.0:
            raise ContractError("u_K must lie in [0, 1]")
        if not 0.0 < self.epsilon <= 1.0:
            raise ContractError("epsilon must lie in (0, 1]")

    def growth(self, x):
        """``r(x) = lambda(x) - mu(x)``."""
        return self.birth(x) - self.death(x)

    def replace(self, **changes) -> "ModelSpec":
        import dataclasses
        return dataclasses.replace(self, **changes)


def _check_in_space(model: ModelSpec, *traits) -> None:
    for x in traits:
        if not np.all(model.space.contains(x)):
            raise TraitDomainError(f"trait {x!r} outside the trait space")


def monomorphic_equilibrium(model: ModelSpec, x):
    """Logistic equilibrium ``nbar(x) = r(x) / alpha(x, x)``."""
    _check_in_space(model, x)
    r = model.growth(x)
    if np.any(np.asarray(r) <= 0):
        raise AssumptionViolation(f"r(x) <= 0 at x={x!r}")
    return r / model.competition(x, x)


def fitness1(model: ModelSpec, y, x):
    """Invasion fitness ``f(y; x) = r(y) - alpha(y, x) nbar(x)``."""
    _check_in_space(model, y)
    return model.growth(y) - model.competition(y, x) * monomorphic_equilibrium(model, x)


def dimorphic_equilibrium(model: ModelSpec, x, y, require_sign: bool = True):
    """Closed-form equilibrium ``(n1, n2)`` of the two-trait LV system.

    With ``require_sign`` the extension condition ``f(x;y) f(y;x) > 0`` is
    enforced; without it only a nonzero determinant is required (used for
    local expansions where the formulas extend smoothly).
    """
    _check_in_space(model, x, y)
    rx, ry = model.growth(x), model.growth(y)
    axx, ayy = model.competition(x, x), model.competition(y, y)
    axy, ayx = model.competition(x, y), model.competition(y, x)
    if require_sign:
        fxy = fitness1(model, x, y)
        fyx = fitness1(model, y, x)
        if np.any(np.asarray(fxy * fyx) <= 0):
            raise TraitDomainError("dimorphic equilibrium needs f(x;y) f(y;x) > 0")
    D = axx * ayy - axy * ayx
    if np.any(np.abs(D) < DEGENERATE_DENOM_RTOL * np.abs(axx * ayy)):
        raise DegenerateError(f"singular two-trait interaction matrix at x={x!r}, y={y!r}")
    n1 = (rx * ayy - ry * axy) / D
    n2 = (ry * axx - rx * ayx) / D
    return n1, n2


def fitness2(model: ModelSpec, z, x, y, require_sign: bool = True):
    """Fitness of ``z`` against the dimorphic resident pair ``(x, y)``."""
    n1, n2 = dimorphic_equilibrium(model, x, y, require_sign=require_sign)
    _check_in_space(model, z)
    return model.growth(z) - model.competition(z, x) * n1 - model.competition(z, y) * n2


def fitness_d(model: ModelSpec, y, residents, equilibrium) -> float:
    """Fitness ``r(y) - sum_j alpha(y, x_j) n_j`` against arbitrary residents."""
    residents = np.atleast_1d(np.asarray(residents, dtype=float))
    equilibrium = np.atleast_1d(np.asarray(equilibrium, dtype=float))
    if residents.shape != equilibrium.shape:
        raise ContractError("residents and equilibrium lengths differ")
    _check_in_space(model, y, residents)
    return float(model.growth(y) - np.sum(model.competition(y, residents) * equilibrium))


def default_step(x) -> float:
    return 1e-5 * (1.0 + abs(float(x)))


def fitness_partials(model: ModelSpec, y: float, x: float, h: Optional[float] = None,
                     h2: Optional[float] = None) -> dict:
    """Finite-difference partial derivatives of ``f(y; x)``.

    First derivatives use central differences with step ``h`` (default
    ``1e-5 (1 + |x|)``). Second derivatives use step ``h2`` (default
    ``1e-3 (1 + |x|)``) with one Richardson extrapolation, since a 1e-5 step
    would leave roundoff of order 1e-6 in a second difference.

    Returns a dict with keys ``d1, d2, d11, d12, d22``.
    """
    y = float(y)
    x = float(x)
    if h is None:
        h = default_step(x)
    if h2 is None:
        h2 = 1e-3 * (1.0 + abs(x))

    def f(a, b):
        return float(fitness1(model, a, b))

    d1 = (f(y + h, x) - f(y - h, x)) / (2 * h)
    d2 = (f(y, x + h) - f(y, x - h)) / (2 * h)

    def second(k):
        f0 = f(y, x)
        d11 = (f(y + k, x) - 2 * f0 + f(y - k, x)) / (k * k)
        d22 = (f(y, x + k) - 2 * f0 + f(y, x - k)) / (k * k)
        d12 = (f(y + k, x + k) - f(y + k, x - k) - f(y - k, x + k) + f(y - k, x - k)) / (4 * k * k)
        return np.array([d11, d12, d22])

    coarse = second(h2)
    fine = second(h2 / 2)
    d11, d12, d22 = (4 * fine - coarse) / 3
    return {"d1": d1, "d2": d2, "d11": d11, "d12": d12, "d22": d22}


@dataclass(frozen=True)
class GaussianExample:
    """Gaussian birth and competition on ``[-2, 2]`` with no natural death.

    ``lambda(x) = exp(-x^2 / 2 sigma_b^2)``,
    ``alpha(x, y) = exp(-(x - y)^2 / 2 sigma_alpha^2)`` and normal mutation
    jumps of standard deviation ``sigma`` conditioned to stay in the space.
    """

    sigma_b: float
    sigma_alpha: float
    sigma: float
    p: float = 1.0

    def __post_init__(self):
        if min(self.sigma_b, self.sigma_alpha, self.sigma) <= 0:
            raise ContractError("standard deviations must be positive")
        if not 0.0 < self.p <= 1.0:
            raise ContractError("p must lie in (0, 1]")

    x_star = 0.0

    def birth(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-x * x / (2.0 * self.sigma_b ** 2))

    def death(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def competition(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.exp(-d * d / (2.0 * self.sigma_alpha ** 2))

    def mut_prob(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.p)

    def to_model(self, K: int = 1000, u_K: float = 1.0, epsilon: float = 1.0) -> ModelSpec:
        space = TraitSpace.interval(-2.0, 2.0)
        return ModelSpec(
            space=space,
            birth=self.birth,
            death=self.death,
            competition=self.competition,
            mut_prob=self.mut_prob,
            mut_kernel=conditioned_gaussian_kernel(space, self.sigma),
            K=int(K),
            u_K=float(u_K),
            epsilon=float(epsilon),
            name="gaussian_example",
            params={"sigma_b": self.sigma_b, "sigma_alpha": self.sigma_alpha,
                    "sigma": self.sigma, "p": self.p},
            analytic=self,
        )

    # closed-form curvatures at the singularity x* = 0
    @property
    def a(self) -> float:
        return 1.0 / self.sigma_alpha ** 2 - 1.0 / self.sigma_b ** 2

    @property
    def c(self) -> float:
        return 1.0 / self.sigma_alpha ** 2 + 1.0 / self.sigma_b ** 2

    def fitness_partials(self, y: float, x: float) -> dict:
        """Analytic partials of ``f(y; x) = L(y) - A(y - x) L(x)``."""
        sb2 = self.sigma_b ** 2
        sa2 = self.sigma_alpha ** 2

        def L(u):
            return math.exp(-u * u / (2 * sb2))

        Ly, Lx = L(y), L(x)
        L1y, L1x = -y / sb2 * Ly, -x / sb2 * Lx
        L2y, L2x = (y * y / sb2 ** 2 - 1 / sb2) * Ly, (x * x / sb2 ** 2 - 1 / sb2) * Lx
        dd = y - x
        A0 = math.exp(-dd * dd / (2 * sa2))
        A1 = -dd / sa2 * A0
        A2 = (dd * dd / sa2 ** 2 - 1 / sa2) * A0
        return {
            "d1": L1y - A1 * Lx,
            "d2": A1 * Lx - A0 * L1x,
            "d11": L2y - A2 * Lx,
            "d12": A2 * Lx - A1 * L1x,
            "d22": -A2 * Lx + 2 * A1 * L1x - A0 * L2x,
        }


def partials(model: ModelSpec, y: float, x: float, analytic: bool = True) -> dict:
    """Fitness partials, analytic when the model provides them."""
    if analytic and model.analytic is not None and hasattr(model.analytic, "fitness_partials"):
        return model.analytic.fitness_partials(float(y), float(x))
    return fitness_partials(model, y, x)


def tabulated_model(space: TraitSpace, grid, birth_values, death_values,
                    competition_values, p: float, sigma: float, K: int = 1000,
                    u_K: float = 1.0, epsilon: float = 1.0) -> ModelSpec:
    """Model from tabulated parameters with cubic interpolation.

    ``competition_values[i, j]`` is ``alpha(grid[i], grid[j])``.
    """
    from scipy.interpolate import CubicSpline, RectBivariateSpline

    grid = np.asarray(grid, dtype=float)
    lam = CubicSpline(grid, np.asarray(birth_values, dtype=float))
    mu = CubicSpline(grid, np.asarray(death_values, dtype=float))
    alp = RectBivariateSpline(grid, grid, np.asarray(competition_values, dtype=float), kx=3, ky=3)

    def birth(x):
        return lam(np.asarray(x, dtype=float))

    def death(x):
        return mu(np.asarray(x, dtype=float))

    def competition(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return alp.ev(x.ravel(), y.ravel()).reshape(x.shape)

    def mut_prob(x):
        return np.full_like(np.asarray(x, dtype=float), p)

    return ModelSpec(space=space, birth=birth, death=death, competition=competition,
                     mut_prob=mut_prob, mut_kernel=conditioned_gaussian_kernel(space, sigma),
                     K=int(K), u_K=float(u_K), epsilon=float(epsilon), name="custom",
                     params={"p": p, "sigma": sigma})


def audit_assumptions(model: ModelSpec, n_grid: int = 1000, n_draws: int = 1000,
                      rng: Optional[np.random.Generator] = None, warn: bool = True) -> list[str]:
    """Grid and sample checks of the standing assumptions.

    Returns a list of human-readable findings (empty when all checks pass);
    each finding is also issued as a ``UserWarning`` when ``warn`` is set.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    findings = []
    xs = model.space.grid(n_grid)
    lam = np.asarray(model.birth(xs), dtype=float)
    mu = np.asarray(model.death(xs), dtype=float)
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(mu))):
        findings.append("birth or death rate not finite on the grid")
    if np.any(lam < 0) or np.any(mu < 0):
        findings.append("negative birth or death rate on the grid")
    if np.any(lam - mu <= 0):
        findings.append("r(x) = lambda(x) - mu(x) is not positive on the whole grid")
    coarse = xs[:: max(1, n_grid // 200)]
    al = np.asarray(model.competition(coarse[:, None], coarse[None, :]), dtype=float)
    if not np.all(np.isfinite(al)) or np.min(al) <= 0:
        findings.append("competition kernel not bounded below by a positive constant")
    p = np.asarray(model.mut_prob(xs), dtype=float)
    if np.any(p <= 0) or np.any(p > 1):
        findings.append("mutation probability outside (0, 1]")
    kern = model.mut_kernel
    parents = rng.choice(xs, size=n_draws)
    hs = np.array([kern.sampler(float(x0), rng) for x0 in parents])
    if not np.all(model.space.contains(parents + hs)):
        findings.append("mutation sampler left the trait space")
    dens = np.asarray(kern.density(parents, hs), dtype=float)
    dom = np.asarray(kern.dominating_density(hs), dtype=float)
    if np.any(dens > dom * (1 + 1e-12)):
        findings.append("mutation density exceeds its dominating density")
    lo, hi = model.space.bounds
    for x0 in xs[1:-1:max(1, n_grid // 20)]:
        a, b = kern.support(float(x0))
        neg = np.linspace(max(a, -kern.scale), 0.0, 9)[:-1]
        pos = np.linspace(0.0, min(b, kern.scale), 9)[1:]
        if np.sum(kern.density(x0, neg)) <= 0 or np.sum(kern.density(x0, pos)) <= 0:
            findings.append(f"mutation law cannot move in both directions from x={x0:.4g}")
            break
    if warn:
        for msg in findings:
            warnings.warn(msg, stacklevel=2)
    return findings


GAUSSIAN_KEYS = ("sigma_b", "sigma_alpha", "sigma", "p")


def model_from_config(section: Mapping[str, str], base_dir: Optional[str] = None) -> ModelSpec:
    """Build a model from a flat key-value mapping.

    ``family = gaussian_example`` needs ``sigma_b, sigma_alpha, sigma, p`` and
    accepts ``K, u_K, epsilon``. ``family = custom`` needs ``table`` (an
    ``.npz`` file with arrays ``grid, birth, death, competition``) plus
    ``sigma`` and ``p``.
    """
    import os

    family = str(section.get("family", "")).strip().strip('"')
    K = int(float(section.get("K", section.get("k", 1000))))
    u_K = float(section.get("u_K", section.get("u_k", 1.0)))
    eps = float(section.get("epsilon", 1.0))
    if family == "gaussian_example":
        missing = [k for k in GAUSSIAN_KEYS if k not in section]
        if missing:
            raise ContractError(f"missing model keys: {', '.join(missing)}")
        ex = GaussianExample(**{k: float(section[k]) for k in GAUSSIAN_KEYS})
        return ex.to_model(K=K, u_K=u_K, epsilon=eps)
    if family == "custom":
        for k in ("table", "sigma", "p"):
            if k not in section:
                raise ContractError(f"missing model key: {k}")
        path = str(section["table"]).strip('"')
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        data = np.load(path)
        grid = data["grid"]
        space = TraitSpace.interval(float(grid[0]), float(grid[-1]))
        return tabulated_model(space, grid, data["birth"], data["death"], data["competition"],
                               p=float(section["p"]), sigma=float(section["sigma"]),
                               K=K, u_K=u_K, epsilon=eps)
    raise ContractError(f"unknown model family {family!r}")
