"""torusma: complex Monge-Ampere equations on flat complex tori.

Spectral discretization of potentials and Hermitian (1,1)-forms, a Newton
continuation solver for nondegenerate and epsilon-regularized degenerate
equations, Monge-Ampere capacities, and Orlicz-norm machinery, with a CLI
for scenario runs and CSV reports.
"""

from .fields import (
    ComplexField,
    HermitianFormField,
    ScalarField,
    TorusGrid,
    constant_form,
    flat_form,
    integrate,
    oscillation,
)
from .spectral import ma_density, regularized_log_hessian, spectral_dd_bar

__all__ = [
    "TorusGrid",
    "ScalarField",
    "ComplexField",
    "HermitianFormField",
    "constant_form",
    "flat_form",
    "integrate",
    "oscillation",
    "spectral_dd_bar",
    "ma_density",
    "regularized_log_hessian",
]

__version__ = "0.1.0"
