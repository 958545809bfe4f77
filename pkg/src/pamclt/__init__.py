"""pamclt: parabolic Anderson model simulation and CLT-scaling verification.

Simulates the multiplicative stochastic heat equation with delta initial
data driven by spatially homogeneous Gaussian noise, evaluates the
limiting covariances of rescaled spatial averages for every kernel
regime, and verifies the predicted variance-scaling exponents and
Gaussianity by Monte Carlo.
"""

__version__ = "0.1.0"

from .kernels import (  # noqa: F401
    CovarianceModel,
    ModelError,
    RegimeClassification,
    UnsupportedRegimeError,
    classify_regime,
    r_quantity,
    riesz_fourier_constant,
    spectral_density,
    total_mass,
    upsilon,
)
from .limits import (  # noqa: F401
    LimitCovariance,
    TauParams,
    TentTransform,
    d1_finite_limit,
    g_limit,
    limit_matrix,
    riesz_limit,
    tau_params,
)
from .simulate import (  # noqa: F401
    BlowUpError,
    FieldState,
    NoiseSlice,
    SimulationGrid,
    heat_kernel,
    run_solution,
    sample_noise_slice,
    spatial_average,
    step,
)
from .harness import (  # noqa: F401
    FieldEnsemble,
    GridFamily,
    McReport,
    compare_to_limit,
    empirical_covariance,
    normality_stats,
    rate_regression,
    run_ensemble,
)
