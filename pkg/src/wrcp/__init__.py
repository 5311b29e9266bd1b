"""Wasserstein-regularized conformal prediction for regression under joint
distribution shift: score-distribution distances, importance-weighted
calibration, regularized training, coverage-gap bounds, and a reproducible
experiment harness."""

from .conformal import (
    BoundInputs,
    CalibrationResult,
    PredictionInterval,
    alpha_d,
    avg_set_size,
    conformal_scores,
    coverage,
    coverage_gap,
    empirical_gap_bound,
    estimate_density_bound,
    estimate_eta,
    estimate_kappa,
    gap_bound_shift,
    gap_bound_wasserstein,
    prediction_set,
    split_cp_threshold,
    weighted_threshold,
    worst_case_threshold,
)
from .datagen import (
    CsvSchema,
    DatasetBundle,
    SyntheticTask,
    default_task,
    gen_synthetic,
    load_bundle,
    load_csv,
    make_mixture_test,
    save_bundle,
)
from .density import (
    BandwidthGrid,
    FeatureScaler,
    KdeModel,
    default_bandwidth_grid,
    kde_density,
    kde_fit,
    likelihood_ratio_weights,
    select_bandwidth,
)
from .distributions import (
    EmpiricalDist,
    HistogramPair,
    PiecewiseUniformDist,
    brute_force_ot,
    cdf_at,
    expectation_difference,
    kl_divergence,
    kolmogorov,
    mixture,
    quantile,
    spearman,
    tv_distance,
    wasserstein1,
)
from .mlp import (
    GradBuffer,
    MlpModel,
    OptimizerState,
    backward,
    load_checkpoint,
    mlp_forward,
    mlp_init,
    mse_loss,
    optimizer_init,
    optimizer_step,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    WassersteinGradResult,
    build_weighted_cal_dist,
    train,
    wasserstein1_grad,
    wrcp_train,
    wrcp_uw_train,
)

__version__ = "0.1.0"
