"""Estimators assembled from the score functions.

The centerpiece is the reweighted doubly robust difference (group A's
DR change contrast minus group B's contrast reweighted to group A's
covariate distribution), with influence-function and bootstrap
inference. The conventional estimators the framework argues against
are implemented alongside for contrast: the naive DR difference, the
two-way and three-way interaction regressions, and the eight-model
regression-adjustment workflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .data import (AssignmentMechanism, Cell, CellTable, Eligibility, Group,
                   PanelDataset, cell_name, cell_table)
from .exceptions import (EstimationError, MissingNuisanceError,
                         ResamplingError, UnsupportedMechanismError)
from .nuisance import (LinearModel, NuisanceMode, NuisanceSet, fit_nuisances,
                       fit_ols)
from .scores import A2, B2, ScoreKind, score_vector, weight_t_values

DEFAULT_BOOTSTRAP_REPS = 999


class EstimandLabel(enum.Enum):
    """What the number means, resolved from the assignment mechanism."""

    ATT_A = "att_a"
    ATT_A_MINUS_ATT_B = "att_a_minus_att_b"
    AVG_CATT_DIFF_ON_A = "avg_catt_diff_on_a"
    DESCRIPTIVE = "descriptive"


class Method(enum.Enum):
    DR_REWEIGHTED = "dr_reweighted"
    DR_NAIVE_DIFFERENCE = "dr_naive_difference"
    OLS_TDID = "ols_tdid"
    OLS_DID_A = "ols_did_a"
    OLS_DID_B = "ols_did_b"
    OR_DID_A = "or_did_a"
    OR_DID_B = "or_did_b"
    OR_WDID_B = "or_wdid_b"
    OR_DIFFERENCE = "or_difference"
    OR_REWEIGHTED_DIFFERENCE = "or_reweighted_difference"


class SeKind(enum.Enum):
    ROBUST = "hc1"          # heteroskedasticity-robust sandwich, HC1
    CLASSICAL = "classical"
    CLUSTER = "cluster"     # clustered by unit over the two stacked rows


@dataclass(frozen=True)
class EstimateResult:
    """One estimator's output. se is None when no variance method was
    requested (regression-adjustment estimators without a bootstrap)."""

    estimate: float
    se: Optional[float]
    n: int
    estimand_label: EstimandLabel
    method: Method
    influence_values: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "estimate": float(self.estimate),
            "se": None if self.se is None or math.isnan(self.se) else float(self.se),
            "n": int(self.n),
            "estimand": self.estimand_label.value,
            "method": self.method.value,
        }


def _reweighted_label(mechanism: AssignmentMechanism) -> EstimandLabel:
    if mechanism is AssignmentMechanism.ONLY_GROUP_A:
        return EstimandLabel.ATT_A
    return EstimandLabel.AVG_CATT_DIFF_ON_A


# ---------------------------------------------------------------------------
# Doubly robust estimators and influence-function inference
# ---------------------------------------------------------------------------

def influence_variance(score_differences, treat_weights, tau_hat):
    """Variance of a mean-of-scores estimator from its influence values.

    eta_i = diff_i - w_i * tau; V = mean(eta^2); se = sqrt(V / n).
    Returns (v_hat, se, eta).
    """
    diff = np.asarray(score_differences, dtype=float)
    w = np.asarray(treat_weights, dtype=float)
    eta = diff - w * tau_hat
    v_hat = float(np.mean(eta * eta))
    se = math.sqrt(v_hat / len(eta))
    return v_hat, se, eta


def estimate_reweighted_difference(dataset: PanelDataset,
                                   nuisances: NuisanceSet,
                                   normalize: bool = False,
                                   trim_epsilon: Optional[float] = None
                                   ) -> EstimateResult:
    """Mean of (DR score for group A minus weighted DR score), the
    identification-correct contrast. Interpreted as ATT(A) when only
    group A's eligible units are treated, and as the average difference
    in conditional ATTs over group A's covariate distribution when both
    groups' eligible units are treated."""
    cells = cell_table(dataset)
    psi_a = score_vector(ScoreKind.DR_A, dataset, cells, nuisances,
                         normalize, trim_epsilon).values
    psi_w = score_vector(ScoreKind.WDR, dataset, cells, nuisances,
                         normalize, trim_epsilon).values
    diff = psi_a - psi_w
    tau_hat = float(np.mean(diff))
    w_treat = weight_t_values(dataset, A2, cells)
    _, se, eta = influence_variance(diff, w_treat, tau_hat)
    return EstimateResult(estimate=tau_hat, se=se, n=dataset.n,
                          estimand_label=_reweighted_label(dataset.mechanism),
                          method=Method.DR_REWEIGHTED, influence_values=eta)


def estimate_naive_difference(dataset: PanelDataset,
                              nuisances: NuisanceSet,
                              normalize: bool = False,
                              trim_epsilon: Optional[float] = None
                              ) -> EstimateResult:
    """Mean DR score of group A minus mean DR score of group B: the
    conventional contrast. Descriptive only; it subtracts contrasts
    evaluated under two different covariate distributions."""
    cells = cell_table(dataset)
    psi_a = score_vector(ScoreKind.DR_A, dataset, cells, nuisances,
                         normalize, trim_epsilon).values
    psi_b = score_vector(ScoreKind.DR_B, dataset, cells, nuisances,
                         normalize, trim_epsilon).values
    mean_a = float(np.mean(psi_a))
    mean_b = float(np.mean(psi_b))
    w_a = weight_t_values(dataset, A2, cells)
    w_b = weight_t_values(dataset, B2, cells)
    # each component's mean is recentred by its own treatment weight
    eta = (psi_a - w_a * mean_a) - (psi_b - w_b * mean_b)
    v_hat = float(np.mean(eta * eta))
    se = math.sqrt(v_hat / dataset.n)
    return EstimateResult(estimate=mean_a - mean_b, se=se, n=dataset.n,
                          estimand_label=EstimandLabel.DESCRIPTIVE,
                          method=Method.DR_NAIVE_DIFFERENCE,
                          influence_values=eta)


def bias_diagnostic(dataset: PanelDataset, nuisances: NuisanceSet,
                    normalize: bool = False,
                    trim_epsilon: Optional[float] = None):
    """Estimated gap between group B's change contrast under group A's
    covariate distribution and under its own: the bias the naive
    difference absorbs. Meaningful only when treatment is restricted to
    group A, where group B's contrast is exactly the parallel-trends gap.

    Returns (bias_hat, se).
    """
    if dataset.mechanism is not AssignmentMechanism.ONLY_GROUP_A:
        raise UnsupportedMechanismError(
            "bias diagnostic requires treatment restricted to group A; "
            "when both groups are treated, group B's contrast mixes its "
            "treatment effect with the trend gap")
    cells = cell_table(dataset)
    psi_w = score_vector(ScoreKind.WDR, dataset, cells, nuisances,
                         normalize, trim_epsilon).values
    psi_b = score_vector(ScoreKind.DR_B, dataset, cells, nuisances,
                         normalize, trim_epsilon).values
    mean_w = float(np.mean(psi_w))
    mean_b = float(np.mean(psi_b))
    w_a = weight_t_values(dataset, A2, cells)
    w_b = weight_t_values(dataset, B2, cells)
    eta = (psi_w - w_a * mean_w) - (psi_b - w_b * mean_b)
    se = math.sqrt(float(np.mean(eta * eta)) / dataset.n)
    return mean_w - mean_b, se


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

class ResamplingScheme(enum.Enum):
    PAIRS_NONPARAMETRIC = "pairs"  # units resampled with both periods


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = DEFAULT_BOOTSTRAP_REPS
    seed: int = 0
    scheme: ResamplingScheme = ResamplingScheme.PAIRS_NONPARAMETRIC

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be ≥ 1")


def _all_cells_present(dataset: PanelDataset) -> bool:
    a, e = dataset.group_is_a, dataset.eligible
    return bool((a & e).any() and (a & ~e).any()
                and (~a & e).any() and (~a & ~e).any())


def _resamples(dataset: PanelDataset, config: BootstrapConfig):
    """Yield valid pairs resamples. Each draw uses its own
    counter-derived stream, so the sequence is reproducible and
    independent of how redraws interleave. A resample with an empty
    (group, eligibility) cell is redrawn; after 10 * replications total
    draws the run aborts."""
    n = dataset.n
    cap = 10 * config.replications
    done = 0
    draws = 0
    while done < config.replications:
        if draws >= cap:
            raise ResamplingError(
                f"exceeded {cap} resampling attempts with only {done} "
                f"usable replicates; cells are too sparse to bootstrap")
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(config.seed, spawn_key=(draws,))))
        idx = rng.integers(0, n, size=n)
        draws += 1
        resample = dataset.subset(idx)
        if not _all_cells_present(resample):
            continue
        done += 1
        yield resample


def bootstrap_replicates(dataset: PanelDataset,
                         estimator: Callable[[PanelDataset], float],
                         config: BootstrapConfig) -> np.ndarray:
    """Estimator values over unit-level resamples with replacement."""
    return np.array([estimator(resample)
                     for resample in _resamples(dataset, config)])


def bootstrap_se(dataset: PanelDataset,
                 estimator: Callable[[PanelDataset], float],
                 config: BootstrapConfig) -> float:
    """Standard deviation of the estimator over pairs resamples."""
    values = bootstrap_replicates(dataset, estimator, config)
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def refit_estimator(fit_options: Optional[dict] = None,
                    normalize: bool = False,
                    trim_epsilon: Optional[float] = None,
                    naive: bool = False) -> Callable[[PanelDataset], float]:
    """Estimator callable for bootstrap_se that refits nuisances on each
    resample with the given fit_nuisances keyword arguments."""
    options = dict(fit_options or {})

    def run(ds: PanelDataset) -> float:
        nuis = fit_nuisances(ds, NuisanceMode.SCORE_SET, **options)
        fn = estimate_naive_difference if naive else estimate_reweighted_difference
        return fn(ds, nuis, normalize=normalize,
                  trim_epsilon=trim_epsilon).estimate

    return run


# ---------------------------------------------------------------------------
# Interaction regressions on the stacked two-period layout
# ---------------------------------------------------------------------------

def _stacked(dataset: PanelDataset, mask: np.ndarray):
    """Long form: one row per unit-period, all period-1 rows first.
    Returns (y, eligible, group_a, x, unit_index)."""
    m = int(np.count_nonzero(mask))
    y = np.concatenate([dataset.y1[mask], dataset.y2[mask]])
    e = np.tile(dataset.eligible[mask].astype(float), 2)
    g = np.tile(dataset.group_is_a[mask].astype(float), 2)
    x = np.vstack([dataset.x[mask], dataset.x[mask]])
    t = np.concatenate([np.zeros(m), np.ones(m)])
    unit = np.tile(np.arange(m), 2)
    return y, e, g, x, t, unit


def _regression_se(model: LinearModel, design: np.ndarray, y: np.ndarray,
                   unit_index: np.ndarray, kind: SeKind) -> np.ndarray:
    """Coefficient standard errors for a fitted stacked regression."""
    if kind is SeKind.CLASSICAL:
        return model.coef_se
    resid = y - design @ model.coefficients
    n_rows, p = design.shape
    gram_inv = model.gram_inverse
    if kind is SeKind.ROBUST:
        meat = design.T @ (design * (resid * resid)[:, None])
        factor = n_rows / (n_rows - p) if n_rows > p else 1.0
        cov = factor * gram_inv @ meat @ gram_inv
    else:  # CLUSTER by unit
        scores = design * resid[:, None]
        n_clusters = int(unit_index.max()) + 1 if len(unit_index) else 0
        sums = np.zeros((n_clusters, p))
        np.add.at(sums, unit_index, scores)
        meat = sums.T @ sums
        if n_clusters > 1 and n_rows > p:
            factor = (n_clusters / (n_clusters - 1)) * ((n_rows - 1) / (n_rows - p))
        else:
            factor = 1.0
        cov = factor * gram_inv @ meat @ gram_inv
    return np.sqrt(np.maximum(np.diag(cov), 0.0))


def ols_did(dataset: PanelDataset, group: Group, with_controls: bool,
            se_kind: SeKind = SeKind.ROBUST) -> EstimateResult:
    """Two-way interaction regression on one group's stacked rows; the
    eligible-by-period-2 coefficient is the group's DID."""
    mask = dataset.group_is_a if group is Group.A else ~dataset.group_is_a
    for elig in (True, False):
        if not np.any(mask & (dataset.eligible == elig)):
            raise EstimationError(
                f"group {group.name} lacks {'eligible' if elig else 'never-eligible'} "
                "units; DID regression undefined")
    y, e, _, x, t, unit = _stacked(dataset, mask)
    columns = [np.ones_like(y), e, t, e * t]
    names = ["intercept", "eligible", "period2", "eligible_x_period2"]
    if with_controls:
        columns.extend(x.T)
        names.extend(dataset.covariate_names)
    design = np.column_stack(columns)
    model = fit_ols(design, y, names,
                    fitted_on=f"stacked DID, group {group.name}")
    se = _regression_se(model, design, y, unit, se_kind)
    return EstimateResult(
        estimate=float(model.coefficients[3]), se=float(se[3]),
        n=int(np.count_nonzero(mask)),
        estimand_label=EstimandLabel.DESCRIPTIVE,
        method=Method.OLS_DID_A if group is Group.A else Method.OLS_DID_B)


def ols_tdid(dataset: PanelDataset, with_controls: bool,
             se_kind: SeKind = SeKind.ROBUST) -> EstimateResult:
    """Three-way interaction regression on all stacked rows; the
    eligible-by-period-2-by-group-A coefficient is the triple
    difference."""
    y, e, g, x, t, unit = _stacked(dataset, np.ones(dataset.n, dtype=bool))
    columns = [np.ones_like(y), e, t, g, e * t, e * g, t * g, e * t * g]
    names = ["intercept", "eligible", "period2", "group_a",
             "eligible_x_period2", "eligible_x_group_a",
             "period2_x_group_a", "eligible_x_period2_x_group_a"]
    if with_controls:
        columns.extend(x.T)
        names.extend(dataset.covariate_names)
    design = np.column_stack(columns)
    model = fit_ols(design, y, names, fitted_on="stacked TDID")
    se = _regression_se(model, design, y, unit, se_kind)
    return EstimateResult(
        estimate=float(model.coefficients[7]), se=float(se[7]), n=dataset.n,
        estimand_label=EstimandLabel.DESCRIPTIVE, method=Method.OLS_TDID)


# ---------------------------------------------------------------------------
# Eight-model regression adjustment
# ---------------------------------------------------------------------------

def _require_eight(nuisances: NuisanceSet):
    if nuisances.eight_model_or is None:
        raise MissingNuisanceError(
            "estimator needs the eight level-outcome models; fit with "
            "mode=EIGHT_MODEL_OR")


def _model_did_on(nuisances: NuisanceSet, model_group: Group,
                  x: np.ndarray) -> np.ndarray:
    """Unit-level DID contrast from one group's four level models,
    evaluated at covariate rows x."""
    elig: Cell = (model_group, Eligibility.ELIGIBLE)
    never: Cell = (model_group, Eligibility.NEVER)
    return ((nuisances.level_mean(elig, 2, x) - nuisances.level_mean(elig, 1, x))
            - (nuisances.level_mean(never, 2, x) - nuisances.level_mean(never, 1, x)))


def _or_did_value(dataset: PanelDataset, nuisances: NuisanceSet,
                  group: Group) -> float:
    mask = dataset.cell_mask((group, Eligibility.ELIGIBLE))
    if not np.any(mask):
        raise EstimationError(
            f"no units in cell {cell_name((group, Eligibility.ELIGIBLE))}")
    return float(np.mean(_model_did_on(nuisances, group, dataset.x[mask])))


def _or_wdid_value(dataset: PanelDataset, nuisances: NuisanceSet) -> float:
    mask = dataset.cell_mask(A2)
    if not np.any(mask):
        raise EstimationError(f"no units in cell {cell_name(A2)}")
    return float(np.mean(_model_did_on(nuisances, Group.B, dataset.x[mask])))


def _or_bootstrap(dataset: PanelDataset, nuisances: NuisanceSet,
                  value: Callable[[PanelDataset, NuisanceSet], float],
                  config: Optional[BootstrapConfig]) -> Optional[float]:
    if config is None:
        return None
    options = dict(nuisances.fit_options)

    def est(ds: PanelDataset) -> float:
        refit = fit_nuisances(ds, NuisanceMode.EIGHT_MODEL_OR, **options)
        return value(ds, refit)

    return bootstrap_se(dataset, est, config)


def or_did(dataset: PanelDataset, nuisances: NuisanceSet, group: Group,
           bootstrap: Optional[BootstrapConfig] = None) -> EstimateResult:
    """Average unit-level DID contrast for the group's eligible units,
    predicted from the group's own four level models."""
    _require_eight(nuisances)
    point = _or_did_value(dataset, nuisances, group)
    se = _or_bootstrap(dataset, nuisances,
                       lambda ds, nu: _or_did_value(ds, nu, group), bootstrap)
    return EstimateResult(
        estimate=point, se=se, n=dataset.n,
        estimand_label=EstimandLabel.DESCRIPTIVE,
        method=Method.OR_DID_A if group is Group.A else Method.OR_DID_B)


def or_wdid_b(dataset: PanelDataset, nuisances: NuisanceSet,
              bootstrap: Optional[BootstrapConfig] = None) -> EstimateResult:
    """Group B's level models evaluated on group A's eligible units:
    the covariate-reweighted counterpart of group B's DID."""
    _require_eight(nuisances)
    point = _or_wdid_value(dataset, nuisances)
    se = _or_bootstrap(dataset, nuisances, _or_wdid_value, bootstrap)
    return EstimateResult(estimate=point, se=se, n=dataset.n,
                          estimand_label=EstimandLabel.DESCRIPTIVE,
                          method=Method.OR_WDID_B)


def or_differences(dataset: PanelDataset, nuisances: NuisanceSet,
                   bootstrap: Optional[BootstrapConfig] = None):
    """(A minus B, A minus weighted-B) from the eight-model components.

    The first difference compares contrasts under two covariate
    distributions and is descriptive; the second is the regression-
    adjustment analog of the reweighted estimator.
    """
    _require_eight(nuisances)
    a = _or_did_value(dataset, nuisances, Group.A)
    b = _or_did_value(dataset, nuisances, Group.B)
    wb = _or_wdid_value(dataset, nuisances)

    se_ab = se_awb = None
    if bootstrap is not None:
        options = dict(nuisances.fit_options)

        def est_pair(ds: PanelDataset):
            refit = fit_nuisances(ds, NuisanceMode.EIGHT_MODEL_OR, **options)
            return (_or_did_value(ds, refit, Group.A)
                    - _or_did_value(ds, refit, Group.B),
                    _or_did_value(ds, refit, Group.A)
                    - _or_wdid_value(ds, refit))

        pairs = np.array([est_pair(ds) for ds in _resamples(dataset, bootstrap)])
        se_ab = float(np.std(pairs[:, 0], ddof=1)) if len(pairs) > 1 else 0.0
        se_awb = float(np.std(pairs[:, 1], ddof=1)) if len(pairs) > 1 else 0.0

    diff_ab = EstimateResult(estimate=a - b, se=se_ab, n=dataset.n,
                             estimand_label=EstimandLabel.DESCRIPTIVE,
                             method=Method.OR_DIFFERENCE)
    diff_awb = EstimateResult(estimate=a - wb, se=se_awb, n=dataset.n,
                              estimand_label=_reweighted_label(dataset.mechanism),
                              method=Method.OR_REWEIGHTED_DIFFERENCE)
    return diff_ab, diff_awb


def or_table(dataset: PanelDataset, nuisances: NuisanceSet,
             bootstrap: Optional[BootstrapConfig] = None) -> dict:
    """All five eight-model quantities (DID A, DID B, weighted DID B and
    the two differences) with standard errors from one shared resample
    stream, so the difference rows inherit the component correlations."""
    _require_eight(nuisances)

    def block(ds: PanelDataset, nu: NuisanceSet) -> np.ndarray:
        a = _or_did_value(ds, nu, Group.A)
        b = _or_did_value(ds, nu, Group.B)
        wb = _or_wdid_value(ds, nu)
        return np.array([a, b, wb, a - b, a - wb])

    points = block(dataset, nuisances)
    ses = [None] * 5
    if bootstrap is not None:
        options = dict(nuisances.fit_options)
        draws = np.array([
            block(ds, fit_nuisances(ds, NuisanceMode.EIGHT_MODEL_OR, **options))
            for ds in _resamples(dataset, bootstrap)])
        if len(draws) > 1:
            ses = [float(s) for s in np.std(draws, axis=0, ddof=1)]
        else:
            ses = [0.0] * 5

    label = _reweighted_label(dataset.mechanism)
    spec = [
        ("did_a", Method.OR_DID_A, EstimandLabel.DESCRIPTIVE),
        ("did_b", Method.OR_DID_B, EstimandLabel.DESCRIPTIVE),
        ("wdid_b", Method.OR_WDID_B, EstimandLabel.DESCRIPTIVE),
        ("diff_ab", Method.OR_DIFFERENCE, EstimandLabel.DESCRIPTIVE),
        ("diff_awb", Method.OR_REWEIGHTED_DIFFERENCE, label),
    ]
    return {key: EstimateResult(estimate=float(points[k]), se=ses[k],
                                n=dataset.n, estimand_label=lab, method=meth)
            for k, (key, meth, lab) in enumerate(spec)}
