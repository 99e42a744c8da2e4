"""Spectra of high-dimensional Kendall rank correlation matrices.

The package computes Kendall's tau matrix fast, splits it into its
Hoeffding pieces, solves the fixed-point equations for the limiting
spectral distribution under dependent Gaussian populations, and checks
the underlying sign-moment identities by simulation.
"""

__version__ = "0.1.0"

from .models import (  # noqa: E402
    CorrelationModel,
    SigmaTriple,
    build_sigma,
    sigma_triple,
)
from .estimators import (  # noqa: E402
    HoeffdingDecomposition,
    KendallCorrelation,
    PearsonCorrelation,
    SpearmanCorrelation,
    kendall_matrix_fast,
    kendall_matrix_naive,
)
from .sampling import sample_mvn  # noqa: E402
from .spectra import DensityCurve, EmpiricalSpectrum, ks_distance  # noqa: E402
from .stieltjes import (  # noqa: E402
    Band2Solver,
    FinitePSolver,
    MA1Solver,
    SpectralGrid,
    ToeplitzSolver,
    density_from_stieltjes,
)

__all__ = [
    "Band2Solver",
    "CorrelationModel",
    "DensityCurve",
    "EmpiricalSpectrum",
    "FinitePSolver",
    "HoeffdingDecomposition",
    "KendallCorrelation",
    "MA1Solver",
    "PearsonCorrelation",
    "SigmaTriple",
    "SpearmanCorrelation",
    "SpectralGrid",
    "ToeplitzSolver",
    "build_sigma",
    "density_from_stieltjes",
    "kendall_matrix_fast",
    "kendall_matrix_naive",
    "ks_distance",
    "sample_mvn",
    "sigma_triple",
]
