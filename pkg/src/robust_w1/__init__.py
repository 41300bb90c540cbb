"""Robust Median-of-Means / Median-of-U-statistics estimators of the 1-Wasserstein distance."""

from .blocking import (
    BlockAssignment,
    BlockScheme,
    SchemeKind,
    assign_blocks,
    combined_tau_tilde,
    median_index,
    median_value,
    recommended_k,
)
from .critic import CriticGradient, CriticNet, clip_weights, forward, grad_params, init_critic, lipschitz_bound
from .data import (
    AggregateCauchyShift,
    ContaminationSpec,
    Gaussian,
    InlierSpec,
    IsolatedUniform,
    Sample,
    ValidationError,
    generate_sample,
    toy_dataset,
    true_w1_reference,
)
from .estimators import Estimator, EstimatorSpec, PairScheme, dual_objective, mom_estimate, mou_estimate
from .exact import exact_w1, exact_w1_dual_check
from .optim import (
    NumericalDivergence,
    RmsPropState,
    RunReport,
    TrainConfig,
    rmsprop_step,
    train_w_mom,
    train_w_mou,
    train_w_mou_diag,
)

__version__ = "0.1.0"
