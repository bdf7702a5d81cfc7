"""Per-unit weights and score functions for the reweighted estimators.

Everything here is a pure function of (unit, cell table, fitted
nuisances). The treatment weight targets one cell; the control weight
carries a propensity ratio that moves a source cell's units to the
covariate distribution of a numerator cell. Scores combine the two with
outcome-change regressions into OR, IPW and doubly robust forms, plus
the reweighted (W-prefixed) forms that evaluate group-B models under
group A's covariate distribution.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import (CELL_ORDER, Cell, CellTable, Eligibility, Group,
                   PanelDataset, PanelUnit, cell_index, cell_name)
from .exceptions import EstimationError, MissingNuisanceError, TrimmingError
from .nuisance import NuisanceSet, PropensityModel

A2: Cell = (Group.A, Eligibility.ELIGIBLE)
A_NEVER: Cell = (Group.A, Eligibility.NEVER)
B2: Cell = (Group.B, Eligibility.ELIGIBLE)
B_NEVER: Cell = (Group.B, Eligibility.NEVER)


class ScoreKind(enum.Enum):
    """The nine score functions. OR/IPW/DR come per group; the weighted
    forms (W prefix) pull group-B quantities to group A's covariates."""

    OR_A = "or_a"
    OR_B = "or_b"
    IPW_A = "ipw_a"
    IPW_B = "ipw_b"
    DR_A = "dr_a"
    DR_B = "dr_b"
    WOR = "weighted_or"
    WIPW = "weighted_ipw"
    WDR = "weighted_dr"

    @property
    def group(self) -> Optional[Group]:
        if self.name.endswith("_A"):
            return Group.A
        if self.name.endswith("_B"):
            return Group.B
        return None


@dataclass(frozen=True)
class ScoreVector:
    """Per-unit score values for one kind, aligned with dataset rows."""

    values: np.ndarray
    kind: ScoreKind

    def mean(self) -> float:
        return float(np.mean(self.values))

    def __len__(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

def weight_t_values(dataset: PanelDataset, target_cell: Cell,
                    cells: CellTable) -> np.ndarray:
    """Treatment weights 1{unit in cell} / share(cell) for all units."""
    share = cells.share(target_cell)
    if share == 0:
        raise EstimationError(
            f"cell {cell_name(target_cell)} is empty; treatment weight undefined")
    out = np.zeros(dataset.n)
    out[dataset.cell_mask(target_cell)] = 1.0 / share
    return out


def weight_t(unit: PanelUnit, target_cell: Cell, cells: CellTable) -> float:
    share = cells.share(target_cell)
    if share == 0:
        raise EstimationError(
            f"cell {cell_name(target_cell)} is empty; treatment weight undefined")
    return 1.0 / share if unit.cell == target_cell else 0.0


def _propensity_matrix(ps, x) -> np.ndarray:
    # accept either a bare PropensityModel or a full NuisanceSet
    if isinstance(ps, NuisanceSet):
        return ps.propensities(x)
    return ps.predict(x)


def _trim_epsilon_of(ps, override: Optional[float]) -> float:
    if override is not None:
        return override
    if isinstance(ps, NuisanceSet):
        if ps.propensity is None:
            raise MissingNuisanceError("no propensity model fitted")
        return ps.propensity.trim_epsilon
    return ps.trim_epsilon


def weight_c_values(dataset: PanelDataset, numerator_cell: Cell,
                    source_cell: Cell, cells: CellTable, ps,
                    trim_epsilon: Optional[float] = None) -> np.ndarray:
    """Control weights: [1{unit in source} / share(numerator)] times the
    propensity ratio p(numerator, x) / p(source, x).

    Source-cell units whose source-cell propensity falls below the trim
    threshold raise TrimmingError listing the unit ids. When numerator
    and source coincide the ratio is exactly one and the weight equals
    the treatment weight bit-for-bit.
    """
    share = cells.share(numerator_cell)
    if share == 0:
        raise EstimationError(
            f"cell {cell_name(numerator_cell)} is empty; control weight undefined")
    mask = dataset.cell_mask(source_cell)
    out = np.zeros(dataset.n)
    if not np.any(mask):
        return out

    probs = _propensity_matrix(ps, dataset.x)
    p_num = probs[:, cell_index(numerator_cell)]
    p_src = probs[:, cell_index(source_cell)]
    eps = _trim_epsilon_of(ps, trim_epsilon)
    low = mask & (p_src < eps)
    if np.any(low):
        ids = tuple(dataset.ids[low])
        raise TrimmingError(
            f"{len(ids)} unit(s) in {cell_name(source_cell)} have "
            f"p{cell_name(source_cell)} below trim threshold {eps:g}: "
            f"{', '.join(repr(i) for i in ids[:10])}"
            + ("…" if len(ids) > 10 else ""),
            unit_ids=ids)
    out[mask] = (1.0 / share) * (p_num[mask] / p_src[mask])
    return out


def weight_c(unit: PanelUnit, numerator_cell: Cell, source_cell: Cell,
             cells: CellTable, ps,
             trim_epsilon: Optional[float] = None) -> float:
    share = cells.share(numerator_cell)
    if share == 0:
        raise EstimationError(
            f"cell {cell_name(numerator_cell)} is empty; control weight undefined")
    if unit.cell != source_cell:
        return 0.0
    probs = _propensity_matrix(ps, np.asarray(unit.covariates).reshape(1, -1))[0]
    p_num = probs[cell_index(numerator_cell)]
    p_src = probs[cell_index(source_cell)]
    eps = _trim_epsilon_of(ps, trim_epsilon)
    if p_src < eps:
        raise TrimmingError(
            f"unit {unit.id!r} in {cell_name(source_cell)} has propensity "
            f"{p_src:.3g} below trim threshold {eps:g}", unit_ids=(unit.id,))
    return (1.0 / share) * (p_num / p_src)


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------

def _outcome(nuisances: NuisanceSet, cell: Cell, x) -> np.ndarray:
    return np.asarray(nuisances.outcome_mean(cell, x), dtype=float)


def _augmentation(multiplier: np.ndarray, nuisances: NuisanceSet,
                  cell: Cell, x, structurally_zero: bool) -> np.ndarray:
    """(w_T - w_C) * m(cell, x). With unnormalized weights the same-cell
    control weight repeats the treatment weight's arithmetic operation
    for operation, so this multiplier is identically zero and the
    regression for `cell` need not be fitted. Normalizing breaks the
    identity, making the model mandatory."""
    if structurally_zero:
        assert not np.any(multiplier)
        return np.zeros(len(multiplier))
    if not nuisances.has_outcome(cell):
        raise MissingNuisanceError(
            f"score needs outcome model m{cell_name(cell)} because "
            "normalized weights give it a nonzero multiplier")
    return multiplier * _outcome(nuisances, cell, x)


def score_vector(kind: ScoreKind, dataset: PanelDataset, cells: CellTable,
                 nuisances: NuisanceSet, normalize: bool = False,
                 trim_epsilon: Optional[float] = None) -> ScoreVector:
    """All units' values of one score function.

    normalize=True rescales each control weight by its full-sample mean
    (the treatment weight already averages to one by construction). The
    default leaves the weights exactly as defined.
    """
    x = dataset.x
    delta = dataset.delta_y()

    def wt(cell):
        return weight_t_values(dataset, cell, cells)

    def wc(numerator, source):
        w = weight_c_values(dataset, numerator, source, cells, nuisances,
                            trim_epsilon)
        if normalize:
            mean = float(np.mean(w))
            if mean <= 0:
                raise EstimationError(
                    f"control weight for source {cell_name(source)} has "
                    f"non-positive mean {mean:g}; cannot normalize")
            w = w / mean
        return w

    if kind in (ScoreKind.OR_A, ScoreKind.OR_B):
        g = Group.A if kind is ScoreKind.OR_A else Group.B
        w = wt((g, Eligibility.ELIGIBLE))
        values = w * (delta - _outcome(nuisances, (g, Eligibility.NEVER), x))
    elif kind in (ScoreKind.IPW_A, ScoreKind.IPW_B):
        g = Group.A if kind is ScoreKind.IPW_A else Group.B
        eligible = (g, Eligibility.ELIGIBLE)
        never = (g, Eligibility.NEVER)
        values = (wc(eligible, eligible) - wc(eligible, never)) * delta
    elif kind in (ScoreKind.DR_A, ScoreKind.DR_B):
        g = Group.A if kind is ScoreKind.DR_A else Group.B
        eligible = (g, Eligibility.ELIGIBLE)
        never = (g, Eligibility.NEVER)
        w_treat = wt(eligible)
        w_same = wc(eligible, eligible)
        w_cross = wc(eligible, never)
        values = (w_same - w_cross) * delta
        values = values + _augmentation(w_treat - w_same, nuisances, eligible,
                                        x, structurally_zero=not normalize)
        values = values - (w_treat - w_cross) * _outcome(nuisances, never, x)
    elif kind is ScoreKind.WOR:
        w = wt(A2)
        values = w * (_outcome(nuisances, B2, x) - _outcome(nuisances, B_NEVER, x))
    elif kind is ScoreKind.WIPW:
        values = (wc(A2, B2) - wc(A2, B_NEVER)) * delta
    elif kind is ScoreKind.WDR:
        w_treat = wt(A2)
        w_b2 = wc(A2, B2)
        w_bnever = wc(A2, B_NEVER)
        values = (w_b2 - w_bnever) * delta
        values = values + (w_treat - w_b2) * _outcome(nuisances, B2, x)
        values = values - (w_treat - w_bnever) * _outcome(nuisances, B_NEVER, x)
    else:
        raise ValueError(f"unknown score kind {kind!r}")

    if not np.all(np.isfinite(values)):
        raise EstimationError(
            f"non-finite {kind.value} score values; check overlap and "
            "nuisance fits")
    return ScoreVector(values=values, kind=kind)


def score(kind: ScoreKind, unit: PanelUnit, cells: CellTable,
          nuisances: NuisanceSet, normalize: bool = False,
          trim_epsilon: Optional[float] = None) -> float:
    """Score value for a single unit, sharing the vector implementation
    through a one-row dataset (shares still come from `cells`).

    normalize is only meaningful on a full dataset; pointwise evaluation
    with normalize=True is rejected.
    """
    if normalize:
        raise ValueError("normalized weights are sample-level; "
                         "use score_vector on the full dataset")
    from .data import AssignmentMechanism
    # scores never consult the mechanism; any tag will do for the wrapper
    singleton = PanelDataset.from_units(
        [unit], [f"x{j}" for j in range(len(unit.covariates))],
        mechanism=AssignmentMechanism.BOTH_GROUPS)
    vec = score_vector(kind, singleton, cells, nuisances,
                       trim_epsilon=trim_epsilon)
    return float(vec.values[0])


def score_mean(kind: ScoreKind, dataset: PanelDataset, cells: CellTable,
               nuisances: NuisanceSet, normalize: bool = False,
               trim_epsilon: Optional[float] = None) -> float:
    return score_vector(kind, dataset, cells, nuisances, normalize,
                        trim_epsilon).mean()


def dump_scores(dataset: PanelDataset, cells: CellTable,
                nuisances: NuisanceSet, kinds: Sequence[ScoreKind],
                path, normalize: bool = False) -> None:
    """Write per-unit score values (one column per kind) for audit."""
    columns = {kind: score_vector(kind, dataset, cells, nuisances, normalize)
               for kind in kinds}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", *(f"score_{k.value}" for k in kinds)])
        for i in range(dataset.n):
            writer.writerow([dataset.ids[i],
                             *(repr(float(columns[k].values[i])) for k in kinds)])
