"""Triple difference-in-differences estimation with covariate reweighting.

The package estimates the average treatment effect on group A's treated
units in a two-group, two-eligibility, two-period panel. The headline
estimator subtracts a reweighted counterfactual contrast built from
group B, restoring identification when covariate distributions differ
across groups; the conventional difference of the two groups' own
contrasts is provided alongside for comparison, together with
regression-based benchmarks, a simulation harness with closed-form
truths, and a command line driver.
"""

from .data import (AssignmentMechanism, CELL_ORDER, Cell, CellTable,
                   Eligibility, Group, MissingPolicy, PanelDataset, PanelUnit,
                   REFERENCE_CELL, Schema, ValidationReport, cell_index,
                   cell_name, cell_table, delta_y, load_csv, save_csv,
                   validate)
from .dgp import (DgpSpec, EffectCase, MonteCarloResult, OracleValues,
                  closed_form_oracle, export_histogram, run_monte_carlo,
                  simulate_replicate, simulate_sample)
from .estimators import (BootstrapConfig, EstimandLabel,
                         EstimateResult, Method, ResamplingScheme, SeKind,
                         bias_diagnostic, bootstrap_replicates, bootstrap_se,
                         estimate_naive_difference,
                         estimate_reweighted_difference, influence_variance,
                         ols_did, ols_tdid, or_did, or_differences, or_table,
                         or_wdid_b, refit_estimator)
from .exceptions import (ConvergenceError, EstimationError, FittingError,
                         IngestionError, InsufficientDataError,
                         MissingNuisanceError, ParseError,
                         PanelValidationError, ResamplingError, SchemaError,
                         SeparationError, SingularDesignError, TridiffError,
                         TrimmingError, UnsupportedMechanismError)
from .nuisance import (LinearModel, NuisanceMode, NuisanceSet, PropensityKind,
                       PropensityModel, fit_linear, fit_logistic_multinomial,
                       fit_nuisances, fit_ols, fit_separate_binary,
                       predict_propensity)
from .scores import (ScoreKind, ScoreVector, dump_scores, score, score_mean,
                     score_vector, weight_c, weight_c_values, weight_t,
                     weight_t_values)

__version__ = "0.1.0"

__all__ = [
    "AssignmentMechanism", "BootstrapConfig", "CELL_ORDER", "Cell",
    "CellTable", "ConvergenceError", "DgpSpec", "EffectCase", "Eligibility",
    "EstimandLabel", "EstimateResult", "EstimationError", "FittingError",
    "Group", "IngestionError", "InsufficientDataError", "LinearModel",
    "Method", "MissingNuisanceError", "MissingPolicy", "MonteCarloResult",
    "NuisanceMode", "NuisanceSet", "OracleValues", "PanelDataset",
    "PanelUnit", "PanelValidationError", "ParseError", "PropensityKind",
    "PropensityModel", "REFERENCE_CELL", "ResamplingError",
    "ResamplingScheme", "Schema", "SchemaError", "ScoreKind", "ScoreVector",
    "SeKind", "SeparationError", "SingularDesignError", "TridiffError",
    "TrimmingError", "UnsupportedMechanismError", "ValidationReport",
    "bias_diagnostic", "bootstrap_replicates", "bootstrap_se", "cell_index",
    "cell_name", "cell_table", "closed_form_oracle", "delta_y",
    "dump_scores", "estimate_naive_difference",
    "estimate_reweighted_difference", "export_histogram", "fit_linear",
    "fit_logistic_multinomial", "fit_nuisances", "fit_ols",
    "fit_separate_binary", "influence_variance", "load_csv", "ols_did",
    "ols_tdid", "or_did", "or_differences", "or_table", "or_wdid_b",
    "predict_propensity", "refit_estimator", "run_monte_carlo", "save_csv",
    "score", "score_mean", "score_vector", "simulate_replicate",
    "simulate_sample", "validate", "weight_c", "weight_c_values", "weight_t",
    "weight_t_values",
]
