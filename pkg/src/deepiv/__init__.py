"""Deep IV: a ReLU network first stage with an efficient OLS-style second stage.

Typical use::

    from deepiv import fit_deep_iv, gen_dgp, DgpSpec

    data, truth = gen_dgp(DgpSpec("dgp1", n=2000), rng=0)
    est, model = fit_deep_iv(data, "dnn")
    est.beta, est.confidence_interval(0.05)
"""

__version__ = "0.1.0"

from .data import Dataset, read_csv, write_csv
from .errors import (BasisTooLarge, DeepIVError, DomainError, MissingExogenous, NonConvergence,
                     NonPositiveInner, ShapeMismatch, SingularMatrix)
from .first_stage import (DnnModel, FirstStageModel, LinearModel, OracleModel, SplineModel, SplineSpec,
                          default_truncation, fit_dnn, fit_first_stage, fit_linear, fit_spline_lasso,
                          truncate_model)
from .inference import (BetaEstimate, ConfidenceInterval, deep_iv, estimate_beta, estimate_vcov,
                        estimate_with_exogenous, fit_deep_iv, second_stage)
from .lasso import cv_lasso, lasso_coordinate_descent, lasso_path
from .mlp import MlpNetwork, TrainConfig, TrainReport, forward, gradient, init_network, loss, train
from .numerics import RngStream, chi2_quantile, normal_quantile, solve_linear
from .simlab import DgpSpec, McConfig, McResult, gen_dgp, gen_hausman_design, run_monte_carlo
from .split_sample import SplitEstimate, fit_split_estimator, split
from .spec_test import SpecTestResult, hausman_test, j_statistic
from .theory import CompositionalSpec, IntrinsicSummary, intrinsic_summary, rate
