"""Randomize-then-optimize MCMC with prior transformations for l1-type priors.

Total-variation and Haar-Besov priors ``exp(-lam ||D theta||_1)`` are mapped
to a standard Gaussian reference, where RTO proposals corrected by an
independence Metropolis step give exact posterior samples.
"""
from .diagnostics import chain_summary, ess_iact, ks_statistic
from .errors import (
    AssumptionViolation,
    ConfigError,
    ConvergenceError,
    L1RtoError,
    NonFiniteError,
    RankDeficientError,
    SingularMatrixError,
)
from .lsq import LsqOptions, LsqProblem, LsqReport, LsqStatus, solve_lsq
from .models import ConvolutionModel, LinearModel, build_convolution, generate_data, make_truth
from .numkit import RngStream, log_abs_det_qr, smallest_singular_value, thin_qr
from .priors import L1Prior, besov_pointwise_variance, build_besov_1d, build_besov_2d, build_tv_operator
from .sampler import (
    Chain,
    LinearL1Target,
    build_context,
    compute_reference_basis,
    find_mode,
    metropolize,
    run_rto_mh,
    rto_log_weight,
    rto_propose,
    rwm_baseline,
    verify_assumptions,
)
from .transforms import (
    IdentityTransform,
    L1PriorTransform,
    ScaledReferenceMap,
    g1d_derivative,
    g1d_forward,
    g1d_inverse,
)

__version__ = "0.1.0"
