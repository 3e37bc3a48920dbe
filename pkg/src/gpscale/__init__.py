"""Scale-parameter estimation for GP interpolation with the Brownian
motion kernel: estimators, exact process samplers, expectation oracles
and the experiment harness behind the gpscale CLI.
"""

from .analysis import (
    CalibrationReport,
    CalibrationSeries,
    ExpectationReport,
    RateFit,
    RateSweepResult,
    calibration_sweep,
    expectation_report,
    expected_pointwise_ratio,
    expected_sigma_cv_analytic,
    expected_sigma_icv_analytic,
    expected_sigma_ml_analytic,
    quadratic_variation,
    quadratic_variation_parity,
    rate_fit,
    rate_sweep,
)
from .config import (
    ExperimentConfig,
    config_hash,
    kernel_from_spec,
    load_config,
    partition_for,
    process_for,
)
from .errors import InvalidArgumentError, NumericallySingularError
from .estimators import (
    CVDecomposition,
    ScaleEstimate,
    sigma_cv_bm,
    sigma_cv_generic,
    sigma_icv_bm,
    sigma_lpo,
    sigma_ml_bm,
    sigma_ml_generic,
    verify_ml_lpo_identity,
)
from .gp import (
    Posterior,
    bm_posterior,
    generic_posterior,
    loo_mean_var,
    posterior_mean,
    posterior_variance,
)
from .kernels import (
    FBM,
    BrownianMotion,
    GramMatrix,
    IntegratedFBM,
    Matern,
    OrnsteinUhlenbeck,
    Scaled,
    TridiagonalMatrix,
    bm_gram_inverse_tridiagonal,
    gram,
)
from .partitions import (
    Partition,
    equispaced,
    quasi_uniform_random,
    quasi_uniformity_ratio,
    read_partition_csv,
    sub_partition_stride2,
    write_partition_csv,
)
from .rng import stream_rng
from .sampling import (
    GPProcess,
    IIFBMProcess,
    MaternMixProcess,
    PathSample,
    SineStepProcess,
    process_from_spec,
    sample_fbm_circulant,
    sample_gp,
    sample_iifbm,
    sample_sine_step,
)

__version__ = "0.1.0"
