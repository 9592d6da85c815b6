"""Recursive estimation of an MA(1) coefficient under misspecification.

Spectral functionals, their zero sets, simulated data, the beta-indexed
recursion (PLR at beta = 0, RML2 at beta = 1) and a Robbins-Monro oracle.
"""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    Arma,
    Bloomfield,
    DomainError,
    ModelError,
    QuadratureError,
    QuadratureSpec,
    SpectralModel,
    WhiteNoise,
    autocovariance,
    density,
    f_value,
    loss,
    loss_derivative,
    phi_second_moment,
    z_phi_cross_moment,
)
from .residues import enumerate_poles, f_residue  # noqa: E402
from .zerosets import find_minimizers, find_zero_set  # noqa: E402
from .simulate import InnovationSpec, prediction_errors, simulate, stationary_filters  # noqa: E402
from .estimator import (  # noqa: E402
    MonitorConfig,
    RecursionState,
    Trajectory,
    approximating_sequence,
    kernel_coefficients,
    regression_form,
    rm_decomposition,
    run,
    step,
)
from .robbins_monro import RmSchedule, rm_iterate  # noqa: E402
