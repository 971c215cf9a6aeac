"""Learning sparse convolutional regulariser filters by quotient minimisation.

The package learns small convolution kernels whose one-norm response is
small on wanted signals and large on unwanted ones, by minimising the
ratio of the two responses over unit-norm, zero-mean filter banks with a
generalised inverse power iteration.  Learned banks are applied through
constrained L1 reconstruction.
"""

from ._kernels import active_backend, available_backends, set_backend
from .core import (
    ConvOperator,
    as_bank,
    as_kernel,
    as_signal,
    bank_constraint_errors,
    convolve,
    joint_norm,
    operator_norm,
)
from .errors import (
    ConfigError,
    DegenerateDenominatorError,
    DegenerateProblemError,
    DimensionError,
    FormatError,
    ParameterError,
    QregError,
)
from .functionals import (
    HuberParams,
    QuotientProblem,
    QuotientValue,
    denominator_gradient,
    denominator_value,
    huber_value,
    j_value,
    numerator_subgradient,
    numerator_value,
    quotient,
)
from .learning import (
    CertificationReport,
    HuberPolicy,
    LearnConfig,
    LearnResult,
    Trajectory,
    canonicalize_bank,
    certify_sufficient_decrease,
    certify_subgradient_bound,
    learn,
    learn_infimal,
    normalize_bank,
    power_iterate,
    random_init,
)
from .solvers import (
    BallConstraint,
    PDConfig,
    project_l2_ball,
    project_zero_mean,
    soft_threshold,
    solve_half_step,
    solve_reconstruction,
)
from .synth import NoiseSpec, add_noise, make_1d, make_2d

__version__ = "0.1.0"
