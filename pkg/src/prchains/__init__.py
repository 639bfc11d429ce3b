"""Probabilistic regressor chains for multi-output regression.

Greedy chains, Monte Carlo chains, and a sequential Monte Carlo
(particle-filter) chain with ESS-triggered resampling and optional
Metropolis-Hastings rejuvenation, together with the base learners,
datasets, metrics, and cross-validation harness needed to run
multi-target regression benchmarks.
"""

__version__ = "0.1.0"

from .chains import (
    ChainConfigError,
    ChainDivergenceError,
    ChainModel,
    DegenerateCloudError,
    IndependentRegressors,
    ParticleCloud,
    PFConfig,
    Prediction,
    ResampleEvent,
    estimate_map,
    estimate_mmse,
    fit_chain,
    fit_independent,
    predict_greedy,
    predict_independent,
    predict_mc,
    predict_pf,
)
from .data import (
    ArffResult,
    Dataset,
    EmptyDatasetError,
    FoldPlan,
    ParseError,
    Scaler,
    UnsupportedAttributeError,
    generate_synth,
    kfold,
    parse_arff,
    parse_csv,
    scale_dataset,
    standardize_dataset,
)
from .evaluation import (
    MetricReport,
    avg_rank,
    cross_validate,
    mae,
    mse,
    zero_one_approx,
)
from .learners import (
    BayesLinearRegression,
    Binner,
    ConditionalKDE,
    DiscretizedDensity,
    KernelRidge,
    KernelRidgeCV,
    LearnerConfigError,
    RandomForestPmf,
    SoftmaxPmf,
    fit_pmf_classifier,
    make_learner,
    silverman_bandwidth,
)
from .methods import MethodConfig, MethodKey, fit_method, parse_method_key
from .smc import (
    DegenerateWeightsError,
    MHConfig,
    ess_inverse_max,
    ess_inverse_sum,
    mh_rejuvenate,
    normalize_log_weights,
    resample_multinomial,
)
