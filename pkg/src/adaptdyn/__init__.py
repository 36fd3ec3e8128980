"""Adaptive dynamics toolkit.

Individual-based simulation, polymorphic evolution sequences, trait
substitution sequences, the canonical equation and evolutionary-branching
analysis for competitive Lotka-Volterra birth/death models.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AdaptdynError,
    AmbiguousSignError,
    AssumptionViolation,
    ContractError,
    DegenerateError,
    DominatingBoundError,
    NumericalError,
    SamplingError,
    TraitDomainError,
    UndeterminedError,
)
from .model import (  # noqa: F401
    GaussianExample,
    ModelSpec,
    MutationKernel,
    TraitSpace,
    dimorphic_equilibrium,
    fitness1,
    fitness2,
    fitness_d,
    monomorphic_equilibrium,
)
