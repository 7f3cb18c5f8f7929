"""Gap eigenvalues of two- and three-dimensional Dirac operators with Coulomb-type potentials.

Two independent minimax solvers (a configuration-space Schur-complement
route and a momentum-space free-projection route), the Hardy-Dirac
functional, momentum-space Coulomb forms and the accompanying certificates.
"""

from .channels import Channel, enumerate_channels
from .errors import (
    ConvergenceFailure,
    DiracGapError,
    NegativeBlockNotDefinite,
    NoEigenvalueInGap,
    PropertyViolation,
)
from .kernel import MomentumMesh, kato_constant
from .minimax import esteban_sere_eigenvalue, talman_eigenvalue
from .radial import PotentialSpec, RadialMesh, ground_state_energy

__all__ = [
    "Channel",
    "ConvergenceFailure",
    "DiracGapError",
    "MomentumMesh",
    "NegativeBlockNotDefinite",
    "NoEigenvalueInGap",
    "PotentialSpec",
    "PropertyViolation",
    "RadialMesh",
    "enumerate_channels",
    "esteban_sere_eigenvalue",
    "ground_state_energy",
    "kato_constant",
    "talman_eigenvalue",
]

__version__ = "0.1.0"
