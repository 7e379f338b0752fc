"""Achievable rates of Gaussian-input channels with transceiver distortion.

Generalized mutual information under nearest-neighbour decoding, with the
linear (Bussgang) and conditional-mean (canonical) output front ends, a
block-memory extension for linear-Gaussian channels, and a random-coding
link simulator.
"""

__version__ = "0.1.0"

from .channels import (
    AWGN,
    DeterministicNonlinearity,
    HardClip,
    InputSpec,
    ProcessSpec,
    SignQuantizer,
    UniformQuantizer,
    bussgang_stationarity_check,
    make_channel,
)
from .estimators import (
    Identity,
    MomentReport,
    PosteriorMean,
    Scale,
    bussgang_residual_check,
    compute_moments,
    posterior_mean_front_end,
)
from .gmi import (
    GmiReport,
    ThetaObjective,
    delta_for_front_end,
    effective_snr_canonical,
    effective_snr_linear,
    gmi_from_delta,
    gmi_via_theta_sup,
    mutual_information_finite,
    optimal_scaling,
)
from .blockmem import BlockLinearChannel, block_gmi, spectral_mmse_limit, toeplitz_mmse
from .linksim import ErrorRateEstimate, TrialPlan, run_trials, threshold_sweep
