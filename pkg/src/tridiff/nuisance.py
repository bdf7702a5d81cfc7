"""Nuisance model fitting: least-squares outcome regressions and
maximum-likelihood logit propensity models, implemented in-house.

The estimation engine consumes a NuisanceSet holding a four-cell
propensity model p(g,e,x) and outcome-change regressions m(g,e,x).
The eight level-outcome models used by the regression-adjustment
workflow live in the same container under `eight_model_or`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .data import (CELL_ORDER, Cell, Eligibility, Group, PanelDataset,
                   cell_index, cell_name)
from .exceptions import (ConvergenceError, InsufficientDataError,
                         MissingNuisanceError, SeparationError,
                         SingularDesignError)

DEFAULT_TRIM_EPSILON = 0.01
DEFAULT_MAX_ITER = 100
DEFAULT_LL_TOL = 1e-10
GRADIENT_TOL = 1e-8
SEPARATION_COEF_NORM = 1e4
MIN_STEP = 2.0 ** -30


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearModel:
    """Least-squares fit with intercept-first coefficients.

    `coefficients` has length p (the design width); for covariate-style
    models p = d+1 with the intercept first, and predict() expects the
    raw d-column covariate matrix. `gram_inverse` is (X'X)^{-1} of the
    design actually fitted (after back-transform), so the classical
    coefficient covariance is residual_variance * gram_inverse.
    """

    coefficients: np.ndarray
    column_names: tuple
    residual_variance: float
    n_obs: int
    gram_inverse: np.ndarray
    fitted_on: object = None

    @property
    def coef_cov(self) -> np.ndarray:
        return self.residual_variance * self.gram_inverse

    @property
    def coef_se(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.coef_cov), 0.0))

    def predict(self, x) -> np.ndarray:
        """Evaluate intercept + slopes . x on a raw (n, d) matrix."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.shape[1] != len(self.coefficients) - 1:
            raise ValueError(
                f"expected {len(self.coefficients) - 1} covariate columns, "
                f"got {x.shape[1]}")
        return self.coefficients[0] + x @ self.coefficients[1:]

    def predict_design(self, design) -> np.ndarray:
        """Evaluate on a full design matrix (no intercept prepended)."""
        return np.asarray(design, dtype=float) @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "column_names": list(self.column_names),
            "residual_variance": float(self.residual_variance),
            "n_obs": int(self.n_obs),
            "fitted_on": str(self.fitted_on) if self.fitted_on is not None else None,
        }


def fit_ols(design, response, column_names: Optional[Sequence[str]] = None,
            fitted_on=None) -> LinearModel:
    """Least squares via column-pivoted orthogonal factorization.

    Rank deficiency raises SingularDesignError naming the columns that
    the pivoting identifies as dependent; n < p raises
    InsufficientDataError. Columns are rescaled to unit norm internally
    for pivoting; coefficients are reported on the original scale.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if design.ndim != 2:
        raise ValueError("design must be a 2-d matrix")
    n, p = design.shape
    if column_names is None:
        column_names = tuple(f"c{j}" for j in range(p))
    else:
        column_names = tuple(column_names)
    if len(y) != n:
        raise ValueError(f"response length {len(y)} != design rows {n}")
    if n < p:
        raise InsufficientDataError(
            f"{n} observations for {p} coefficients"
            + (f" ({fitted_on})" if fitted_on is not None else ""))

    norms = np.sqrt(np.sum(design * design, axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    scaled = design / safe

    q, r, piv = scipy.linalg.qr(scaled, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    lead = diag[0] if diag.size else 0.0
    tol = lead * max(n, p) * np.finfo(float).eps
    rank = int(np.count_nonzero(diag > tol))
    if rank < p:
        dep = tuple(column_names[j] for j in sorted(piv[rank:]))
        raise SingularDesignError(
            f"design is rank deficient (rank {rank} of {p}); dependent "
            f"column(s): {', '.join(dep)}", dependent_columns=dep)

    qty = q.T @ y
    coef_piv = scipy.linalg.solve_triangular(r, qty)
    coef_scaled = np.empty(p)
    coef_scaled[piv] = coef_piv
    coef = coef_scaled / safe

    residuals = y - design @ coef
    dof = n - p
    rss = float(residuals @ residuals)
    residual_variance = rss / dof if dof > 0 else 0.0

    r_inv = scipy.linalg.solve_triangular(r, np.eye(p))
    gram_piv = r_inv @ r_inv.T                     # (A'A)^{-1} in pivot order
    gram_scaled = np.empty((p, p))
    gram_scaled[np.ix_(piv, piv)] = gram_piv
    gram = gram_scaled / np.outer(safe, safe)

    return LinearModel(coefficients=coef, column_names=column_names,
                       residual_variance=residual_variance, n_obs=n,
                       gram_inverse=gram, fitted_on=fitted_on)


def fit_linear(x, y, covariate_names: Optional[Sequence[str]] = None,
               fitted_on=None) -> LinearModel:
    """Regression of y on an intercept and raw covariates.

    Covariates are centered and scaled internally; coefficients and the
    gram inverse are back-transformed to the raw parameterization, so
    callers never see the standardized space.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n, d = x.shape
    if covariate_names is None:
        covariate_names = tuple(f"x{j}" for j in range(d))
    names = ("intercept", *covariate_names)

    if d == 0:
        return fit_ols(np.ones((n, 1)), y, names, fitted_on=fitted_on)

    center = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    z = (x - center) / scale
    design = np.hstack([np.ones((n, 1)), z])
    std_model = fit_ols(design, y, names, fitted_on=fitted_on)

    # back-transform: beta_raw = T beta_std with T undoing (x-c)/s
    t = np.eye(d + 1)
    t[0, 1:] = -center / scale
    t[1:, 1:] = np.diag(1.0 / scale)
    coef = t @ std_model.coefficients
    gram = t @ std_model.gram_inverse @ t.T

    return LinearModel(coefficients=coef, column_names=names,
                       residual_variance=std_model.residual_variance,
                       n_obs=n, gram_inverse=gram, fitted_on=fitted_on)


# ---------------------------------------------------------------------------
# Logit propensity models
# ---------------------------------------------------------------------------

class PropensityKind(enum.Enum):
    MULTINOMIAL4 = "multinomial4"
    SEPARATE_BINARY = "separate-binary"


@dataclass(frozen=True)
class PropensityModel:
    """Fitted cell-probability model over the four (group, eligibility)
    cells, in CELL_ORDER with (B, Never) the reference.

    coefficients: (3, d+1) for MULTINOMIAL4 (cells 0..2 against the
    reference), or (4, d+1) one-vs-rest logits for SEPARATE_BINARY
    (renormalized at prediction time). Raw covariate scale, intercept
    first. coef_cov covers the stacked multinomial parameters only.
    """

    kind: PropensityKind
    coefficients: np.ndarray
    covariate_names: tuple
    trim_epsilon: float
    n_obs: int
    converged: bool
    n_iter: int
    loglik_trace: tuple
    coef_cov: Optional[np.ndarray] = None

    def predict(self, x) -> np.ndarray:
        """Probabilities, shape (n, 4), rows summing to one."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        n = x.shape[0]
        z = np.hstack([np.ones((n, 1)), x])
        eta = z @ self.coefficients.T
        if self.kind is PropensityKind.MULTINOMIAL4:
            full = np.hstack([eta, np.zeros((n, 1))])
            full -= full.max(axis=1, keepdims=True)
            ex = np.exp(full)
            return ex / ex.sum(axis=1, keepdims=True)
        # one-vs-rest sigmoids, renormalized to sum to one
        raw = 1.0 / (1.0 + np.exp(-eta))
        return raw / raw.sum(axis=1, keepdims=True)

    def coef_se(self) -> np.ndarray:
        if self.coef_cov is None:
            raise MissingNuisanceError("no coefficient covariance stored")
        se = np.sqrt(np.maximum(np.diag(self.coef_cov), 0.0))
        return se.reshape(self.coefficients.shape)

    def outside_interior(self, probabilities) -> np.ndarray:
        """Flag rows with any probability outside
        [trim_epsilon, 1 - trim_epsilon]. Values are never altered;
        consumers decide what to do."""
        p = np.atleast_2d(np.asarray(probabilities, dtype=float))
        bad = (p < self.trim_epsilon) | (p > 1.0 - self.trim_epsilon)
        return bad.any(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "coefficients": [[float(v) for v in row] for row in self.coefficients],
            "covariate_names": list(self.covariate_names),
            "reference_cell": cell_name(CELL_ORDER[3]),
            "trim_epsilon": float(self.trim_epsilon),
            "n_obs": int(self.n_obs),
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
            "final_loglik": float(self.loglik_trace[-1]) if self.loglik_trace else None,
        }


def predict_propensity(model: PropensityModel, x) -> np.ndarray:
    """Four cell probabilities for a single covariate vector."""
    return model.predict(np.asarray(x, dtype=float).reshape(1, -1))[0]


def _softmax_loglik(z, labels_onehot, beta):
    """Log-likelihood, probabilities for coefficient matrix beta (K-1, p)."""
    eta = z @ beta.T
    full = np.hstack([eta, np.zeros((len(z), 1))])
    shift = full.max(axis=1, keepdims=True)
    ex = np.exp(full - shift)
    denom = ex.sum(axis=1, keepdims=True)
    probs = ex / denom
    ll = float(np.sum(full[labels_onehot] - (shift[:, 0] + np.log(denom[:, 0]))))
    return ll, probs


def _newton_multinomial(z, labels, n_categories, max_iter, tol,
                        raw_transform, column_names):
    """Damped Newton ascent for a softmax model with the last category as
    reference. Returns (beta, cov, trace, n_iter). z includes the
    intercept column and is already standardized; raw_transform maps a
    standardized coefficient matrix to the raw scale (used only for the
    separation check, which the spec of the method keys to the raw norm).
    """
    n, p = z.shape
    k1 = n_categories - 1
    onehot = np.zeros((n, n_categories), dtype=bool)
    onehot[np.arange(n), labels] = True

    beta = np.zeros((k1, p))
    ll, probs = _softmax_loglik(z, onehot, beta)
    trace = [ll]

    for it in range(1, max_iter + 1):
        grad = np.empty(k1 * p)
        for k in range(k1):
            grad[k * p:(k + 1) * p] = z.T @ (onehot[:, k] - probs[:, k])
        if np.max(np.abs(grad)) < GRADIENT_TOL:
            return beta, _observed_info_inverse(z, probs, k1, column_names), \
                tuple(trace), it - 1, True

        hess = np.empty((k1 * p, k1 * p))
        for k in range(k1):
            for l in range(k, k1):
                w = probs[:, k] * ((1.0 if k == l else 0.0) - probs[:, l])
                block = z.T @ (z * w[:, None])
                hess[k * p:(k + 1) * p, l * p:(l + 1) * p] = block
                hess[l * p:(l + 1) * p, k * p:(k + 1) * p] = block.T
        try:
            step = scipy.linalg.solve(hess, grad, assume_a="sym")
        except scipy.linalg.LinAlgError:
            raise SingularDesignError(
                "singular information matrix in logit fit; columns: "
                + ", ".join(column_names),
                dependent_columns=tuple(column_names)) from None

        # step-halving: accept the first damped step that does not
        # decrease the likelihood (up to 1e-12 slack); a zero-gain step
        # simply falls through to the convergence test below
        scale = 1.0
        accepted = False
        while scale >= MIN_STEP:
            trial = beta + scale * step.reshape(k1, p)
            ll_trial, probs_trial = _softmax_loglik(z, onehot, trial)
            if ll_trial >= ll - 1e-12:
                accepted = True
                gain = ll_trial - ll
                beta, ll, probs = trial, ll_trial, probs_trial
                break
            scale *= 0.5
        if not accepted:
            raise ConvergenceError(
                f"no ascent step found at iteration {it}", trace=tuple(trace))
        trace.append(ll)

        raw_norm = float(np.linalg.norm(raw_transform(beta)))
        if raw_norm > SEPARATION_COEF_NORM:
            raise SeparationError(
                f"coefficient norm {raw_norm:.3g} exceeds {SEPARATION_COEF_NORM:g} "
                "with rising likelihood: data are (near-)separated; trim the "
                "sample or drop covariates")
        if gain < tol:
            return beta, _observed_info_inverse(z, probs, k1, column_names), \
                tuple(trace), it, True

    raise ConvergenceError(
        f"logit fit did not converge in {max_iter} iterations",
        trace=tuple(trace))


def _observed_info_inverse(z, probs, k1, column_names):
    n, p = z.shape
    hess = np.empty((k1 * p, k1 * p))
    for k in range(k1):
        for l in range(k, k1):
            w = probs[:, k] * ((1.0 if k == l else 0.0) - probs[:, l])
            block = z.T @ (z * w[:, None])
            hess[k * p:(k + 1) * p, l * p:(l + 1) * p] = block
            hess[l * p:(l + 1) * p, k * p:(k + 1) * p] = block.T
    try:
        return scipy.linalg.inv(hess)
    except scipy.linalg.LinAlgError:
        return None


def _standardize(x):
    """Center/scale columns; returns (z, center, scale). Zero-variance
    columns keep scale 1 and surface later as rank problems."""
    center = x.mean(axis=0) if x.size else np.zeros(x.shape[1])
    scale = x.std(axis=0) if x.size else np.ones(x.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    return (x - center) / scale, center, scale


def _raw_coef_transform(center, scale):
    """Map standardized-space (K-1, d+1) coefficients to raw scale."""
    def convert(beta_std):
        raw = beta_std.copy()
        if raw.shape[1] > 1:
            raw[:, 0] = beta_std[:, 0] - beta_std[:, 1:] @ (center / scale)
            raw[:, 1:] = beta_std[:, 1:] / scale
        return raw
    return convert


def _check_design_rank(z, column_names):
    _, r, piv = scipy.linalg.qr(z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    lead = diag[0] if diag.size else 0.0
    tol = lead * max(z.shape) * np.finfo(float).eps
    rank = int(np.count_nonzero(diag > tol))
    if rank < z.shape[1]:
        dep = tuple(column_names[j] for j in sorted(piv[rank:]))
        raise SingularDesignError(
            f"logit design is rank deficient; dependent column(s): "
            f"{', '.join(dep)}", dependent_columns=dep)


def fit_logistic_multinomial(covariates, cell_labels,
                             max_iter: int = DEFAULT_MAX_ITER,
                             tol: float = DEFAULT_LL_TOL,
                             trim_epsilon: float = DEFAULT_TRIM_EPSILON,
                             covariate_names: Optional[Sequence[str]] = None
                             ) -> PropensityModel:
    """Four-cell softmax model by damped Newton, reference cell (B, Never).

    cell_labels are integer codes following CELL_ORDER. Converges when
    the likelihood gain drops below tol or the gradient max-norm below
    1e-8. Diverging coefficients with rising likelihood raise
    SeparationError; exhausting max_iter raises ConvergenceError with
    the likelihood trace attached.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    labels = np.asarray(cell_labels, dtype=int)
    n, d = x.shape
    if covariate_names is None:
        covariate_names = tuple(f"x{j}" for j in range(d))
    else:
        covariate_names = tuple(covariate_names)

    counts = np.bincount(labels, minlength=4)
    for k, cell in enumerate(CELL_ORDER):
        if counts[k] < d + 1:
            raise InsufficientDataError(
                f"cell {cell_name(cell)} has {counts[k]} units, needs ≥ {d + 1}")

    zx, center, scale = _standardize(x)
    z = np.hstack([np.ones((n, 1)), zx])
    names = ("intercept", *covariate_names)
    _check_design_rank(z, names)
    convert = _raw_coef_transform(center, scale)

    beta_std, cov_std, trace, n_iter, converged = _newton_multinomial(
        z, labels, 4, max_iter, tol, convert, names)

    coef = convert(beta_std)
    cov = None
    if cov_std is not None:
        p = d + 1
        t_block = np.eye(p)
        if d:
            t_block[0, 1:] = -center / scale
            t_block[1:, 1:] = np.diag(1.0 / scale)
        t_full = scipy.linalg.block_diag(*([t_block] * 3))
        cov = t_full @ cov_std @ t_full.T

    return PropensityModel(kind=PropensityKind.MULTINOMIAL4, coefficients=coef,
                           covariate_names=covariate_names,
                           trim_epsilon=trim_epsilon, n_obs=n,
                           converged=converged, n_iter=n_iter,
                           loglik_trace=trace, coef_cov=cov)


def fit_separate_binary(covariates, cell_labels,
                        max_iter: int = DEFAULT_MAX_ITER,
                        tol: float = DEFAULT_LL_TOL,
                        trim_epsilon: float = DEFAULT_TRIM_EPSILON,
                        covariate_names: Optional[Sequence[str]] = None
                        ) -> PropensityModel:
    """One-vs-rest binary logit per cell; predictions renormalized to sum
    to one. Offered for parity with common practice; the softmax model is
    the default."""
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    labels = np.asarray(cell_labels, dtype=int)
    n, d = x.shape
    if covariate_names is None:
        covariate_names = tuple(f"x{j}" for j in range(d))
    else:
        covariate_names = tuple(covariate_names)

    counts = np.bincount(labels, minlength=4)
    for k, cell in enumerate(CELL_ORDER):
        if counts[k] < d + 1:
            raise InsufficientDataError(
                f"cell {cell_name(cell)} has {counts[k]} units, needs ≥ {d + 1}")

    zx, center, scale = _standardize(x)
    z = np.hstack([np.ones((n, 1)), zx])
    names = ("intercept", *covariate_names)
    _check_design_rank(z, names)
    convert = _raw_coef_transform(center, scale)

    rows = []
    traces = []
    iters = 0
    for k in range(4):
        binary = np.where(labels == k, 0, 1)
        beta_std, _, trace, n_iter, _ = _newton_multinomial(
            z, binary, 2, max_iter, tol, convert, names)
        rows.append(convert(beta_std)[0])
        traces.append(trace[-1])
        iters = max(iters, n_iter)

    return PropensityModel(kind=PropensityKind.SEPARATE_BINARY,
                           coefficients=np.array(rows),
                           covariate_names=covariate_names,
                           trim_epsilon=trim_epsilon, n_obs=n,
                           converged=True, n_iter=iters,
                           loglik_trace=tuple(traces), coef_cov=None)


# ---------------------------------------------------------------------------
# NuisanceSet
# ---------------------------------------------------------------------------

class NuisanceMode(enum.Enum):
    SCORE_SET = "score-set"          # propensity + change regressions
    EIGHT_MODEL_OR = "eight-model-or"  # level regressions per (g, e, t)


# change regressions the score functions consume; (a,2) never enters any
# score with a nonzero multiplier, so it is optional
SCORE_SET_CELLS: tuple[Cell, ...] = (
    (Group.A, Eligibility.NEVER),
    (Group.B, Eligibility.ELIGIBLE),
    (Group.B, Eligibility.NEVER),
)


@dataclass(frozen=True)
class NuisanceSet:
    """Container for fitted nuisance models plus the feature pipeline
    (transform and column subsets) they were trained with, so that
    prediction always reuses the training features."""

    mode: NuisanceMode
    covariate_names: tuple
    propensity: Optional[PropensityModel] = None
    outcome_models: dict = field(default_factory=dict)
    eight_model_or: Optional[dict] = None
    transform: Optional[Callable] = None
    propensity_columns: Optional[tuple] = None
    outcome_columns: Optional[tuple] = None
    # keyword arguments that reproduce this fit on another dataset
    # (bootstrap replicates refit with exactly these)
    fit_options: dict = field(default_factory=dict)

    def _features(self, x_raw) -> np.ndarray:
        x = np.asarray(x_raw, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if self.transform is not None:
            x, _ = self.transform(x, self.covariate_names)
            x = np.asarray(x, dtype=float)
        return x

    def _select(self, features, columns):
        if columns is None:
            return features
        return features[:, list(columns)]

    def propensities(self, x_raw) -> np.ndarray:
        if self.propensity is None:
            raise MissingNuisanceError("no propensity model fitted")
        return self.propensity.predict(
            self._select(self._features(x_raw), self.propensity_columns))

    def has_outcome(self, cell: Cell) -> bool:
        return cell in self.outcome_models

    def outcome_mean(self, cell: Cell, x_raw) -> np.ndarray:
        if cell not in self.outcome_models:
            raise MissingNuisanceError(
                f"no outcome-change model for cell {cell_name(cell)}")
        return self.outcome_models[cell].predict(
            self._select(self._features(x_raw), self.outcome_columns))

    def level_mean(self, cell: Cell, period: int, x_raw) -> np.ndarray:
        if self.eight_model_or is None or (cell, period) not in self.eight_model_or:
            raise MissingNuisanceError(
                f"no level-outcome model for {cell_name(cell)}, period {period}")
        return self.eight_model_or[(cell, period)].predict(
            self._select(self._features(x_raw), self.outcome_columns))

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode.value,
            "covariate_names": list(self.covariate_names),
            "propensity": self.propensity.to_dict() if self.propensity else None,
            "outcome_models": {
                cell_name(cell): model.to_dict()
                for cell, model in sorted(self.outcome_models.items(),
                                          key=lambda kv: cell_index(kv[0]))
            },
        }
        if self.eight_model_or is not None:
            doc["eight_model_or"] = {
                f"{cell_name(cell)} t={t}": model.to_dict()
                for (cell, t), model in sorted(
                    self.eight_model_or.items(),
                    key=lambda kv: (cell_index(kv[0][0]), kv[0][1]))
            }
        return doc

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _reraise_for_cell(exc, label):
    message = f"{label}: {exc.args[0] if exc.args else exc}"
    if isinstance(exc, SingularDesignError):
        return SingularDesignError(message,
                                   dependent_columns=exc.dependent_columns)
    if isinstance(exc, ConvergenceError):
        return ConvergenceError(message, trace=exc.trace)
    return type(exc)(message)


def _column_subset(names, requested):
    if requested is None:
        return None
    idx = []
    for name in requested:
        if name not in names:
            raise MissingNuisanceError(
                f"covariate {name!r} not in {list(names)}")
        idx.append(names.index(name))
    return tuple(idx)


def fit_nuisances(dataset: PanelDataset,
                  mode: NuisanceMode = NuisanceMode.SCORE_SET,
                  *,
                  propensity_kind: PropensityKind = PropensityKind.MULTINOMIAL4,
                  trim_epsilon: float = DEFAULT_TRIM_EPSILON,
                  include_a2: bool = False,
                  propensity_covariates: Optional[Sequence[str]] = None,
                  outcome_covariates: Optional[Sequence[str]] = None,
                  transform: Optional[Callable] = None,
                  max_iter: int = DEFAULT_MAX_ITER,
                  tol: float = DEFAULT_LL_TOL) -> NuisanceSet:
    """Fit the nuisance models an estimator needs.

    SCORE_SET fits the four-cell propensity model on all units plus the
    outcome-change regressions per required cell. EIGHT_MODEL_OR fits
    level regressions of Y_t on X for every (group, eligibility, period),
    each on its own cell only; no propensity model is fitted in that
    mode.

    `transform` is an optional basis-expansion hook: callable
    (x, names) -> (x_expanded, names_expanded), applied before the
    per-family column subsets are taken. Covariate subsets name columns
    of the (possibly transformed) feature matrix; default is all
    columns for both families.
    """
    fit_options = dict(propensity_kind=propensity_kind,
                       trim_epsilon=trim_epsilon, include_a2=include_a2,
                       propensity_covariates=propensity_covariates,
                       outcome_covariates=outcome_covariates,
                       transform=transform, max_iter=max_iter, tol=tol)

    features = np.asarray(dataset.x, dtype=float)
    names = dataset.covariate_names
    if transform is not None:
        features, names = transform(features, names)
        features = np.asarray(features, dtype=float)
        names = tuple(names)

    prop_cols = _column_subset(names, propensity_covariates)
    out_cols = _column_subset(names, outcome_covariates)
    prop_x = features if prop_cols is None else features[:, list(prop_cols)]
    out_x = features if out_cols is None else features[:, list(out_cols)]
    prop_names = names if prop_cols is None else tuple(names[j] for j in prop_cols)
    out_names = names if out_cols is None else tuple(names[j] for j in out_cols)

    if mode is NuisanceMode.EIGHT_MODEL_OR:
        eight = {}
        for cell in CELL_ORDER:
            mask = dataset.cell_mask(cell)
            for period, values in ((1, dataset.y1), (2, dataset.y2)):
                label = f"{cell_name(cell)} t={period}"
                try:
                    eight[(cell, period)] = fit_linear(
                        out_x[mask], values[mask], out_names, fitted_on=label)
                except Exception as exc:
                    raise _reraise_for_cell(exc, label) from exc
        return NuisanceSet(mode=mode, covariate_names=dataset.covariate_names,
                           eight_model_or=eight, transform=transform,
                           propensity_columns=prop_cols, outcome_columns=out_cols,
                           fit_options=fit_options)

    fitter = (fit_logistic_multinomial
              if propensity_kind is PropensityKind.MULTINOMIAL4
              else fit_separate_binary)
    try:
        propensity = fitter(prop_x, dataset.cell_codes(), max_iter=max_iter,
                            tol=tol, trim_epsilon=trim_epsilon,
                            covariate_names=prop_names)
    except Exception as exc:
        raise _reraise_for_cell(exc, "propensity model") from exc

    cells = SCORE_SET_CELLS + (((Group.A, Eligibility.ELIGIBLE),)
                               if include_a2 else ())
    outcome_models = {}
    delta = dataset.delta_y()
    for cell in cells:
        mask = dataset.cell_mask(cell)
        try:
            outcome_models[cell] = fit_linear(
                out_x[mask], delta[mask], out_names,
                fitted_on=cell_name(cell))
        except Exception as exc:
            raise _reraise_for_cell(exc, cell_name(cell)) from exc

    return NuisanceSet(mode=mode, covariate_names=dataset.covariate_names,
                       propensity=propensity, outcome_models=outcome_models,
                       transform=transform, propensity_columns=prop_cols,
                       outcome_columns=out_cols, fit_options=fit_options)
