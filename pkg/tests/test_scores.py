"""Score construction against a fully hand-computed four-unit fixture.

One unit per cell, intercept-only nuisances, equal shares of 1/4: every
weight and every score value below was worked out by hand, so the
assertions are exact arithmetic, not regression snapshots.

Fixture: units (id, group, eligibility, change in y, x) =
    u1 (A, Eligible, 3.0, 1), u2 (A, Never, 1.0, 2),
    u3 (B, Eligible, 4.0, 3), u4 (B, Never, 0.5, 4).
Intercept-only fits give m(A,Never)=1, m(B,Eligible)=4, m(B,Never)=0.5
and flat cell probabilities 0.25; all shares are 0.25, so every
treatment weight is 4 on its own cell.
"""

import dataclasses

import numpy as np
import pytest

from tridiff.data import (AssignmentMechanism, Eligibility, Group,
                          PanelDataset, cell_table)
from tridiff.exceptions import (EstimationError, MissingNuisanceError,
                                TrimmingError)
from tridiff.nuisance import LinearModel, NuisanceMode, fit_nuisances
from tridiff.scores import (A2, A_NEVER, B2, B_NEVER, ScoreKind, dump_scores,
                            score, score_mean, score_vector, weight_c,
                            weight_c_values, weight_t, weight_t_values)


@pytest.fixture(scope="module")
def fixture():
    ds = PanelDataset(
        ids=["u1", "u2", "u3", "u4"],
        y1=[0.0, 0.0, 0.0, 0.0],
        y2=[3.0, 1.0, 4.0, 0.5],
        group_is_a=[True, True, False, False],
        eligible=[True, False, True, False],
        x=np.array([[1.0], [2.0], [3.0], [4.0]]),
        covariate_names=("x",),
        mechanism=AssignmentMechanism.BOTH_GROUPS)
    cells = cell_table(ds)
    nuis = fit_nuisances(ds, NuisanceMode.SCORE_SET,
                         propensity_covariates=[], outcome_covariates=[])
    return ds, cells, nuis


HAND_VALUES = {
    ScoreKind.OR_A: ([8.0, 0.0, 0.0, 0.0], 2.0),
    ScoreKind.IPW_A: ([12.0, -4.0, 0.0, 0.0], 2.0),
    ScoreKind.DR_A: ([8.0, 0.0, 0.0, 0.0], 2.0),
    ScoreKind.OR_B: ([0.0, 0.0, 14.0, 0.0], 3.5),
    ScoreKind.IPW_B: ([0.0, 0.0, 16.0, -2.0], 3.5),
    ScoreKind.DR_B: ([0.0, 0.0, 14.0, 0.0], 3.5),
    ScoreKind.WOR: ([14.0, 0.0, 0.0, 0.0], 3.5),
    ScoreKind.WIPW: ([0.0, 0.0, 16.0, -2.0], 3.5),
    ScoreKind.WDR: ([14.0, 0.0, 0.0, 0.0], 3.5),
}


def test_fixture_nuisances_are_as_stated(fixture):
    ds, cells, nuis = fixture
    probs = nuis.propensities(ds.x)
    np.testing.assert_allclose(probs, 0.25, atol=1e-8)
    assert nuis.outcome_mean(A_NEVER, ds.x)[0] == pytest.approx(1.0)
    assert nuis.outcome_mean(B2, ds.x)[0] == pytest.approx(4.0)
    assert nuis.outcome_mean(B_NEVER, ds.x)[0] == pytest.approx(0.5)
    for cell in (A2, A_NEVER, B2, B_NEVER):
        assert cells.share(cell) == 0.25


def test_weight_t_values(fixture):
    ds, cells, _ = fixture
    w = weight_t_values(ds, A2, cells)
    np.testing.assert_array_equal(w, [4.0, 0.0, 0.0, 0.0])
    assert abs(np.mean(w) - 1.0) <= 1e-12
    w_b = weight_t_values(ds, B2, cells)
    np.testing.assert_array_equal(w_b, [0.0, 0.0, 4.0, 0.0])
    assert abs(np.mean(w_b) - 1.0) <= 1e-12


def test_weight_t_pointwise_matches_vector(fixture):
    ds, cells, _ = fixture
    w = weight_t_values(ds, A2, cells)
    for i, unit in enumerate(ds.units):
        assert weight_t(unit, A2, cells) == w[i]


def test_same_cell_control_weight_equals_treatment_weight(fixture):
    # identical floating-point operations: p/p is exactly 1, the share
    # division is the same division
    ds, cells, nuis = fixture
    wt = weight_t_values(ds, A2, cells)
    wc = weight_c_values(ds, A2, A2, cells, nuis)
    np.testing.assert_array_equal(wc, wt)


def test_cross_cell_control_weights(fixture):
    ds, cells, nuis = fixture
    wc = weight_c_values(ds, A2, A_NEVER, cells, nuis)
    np.testing.assert_allclose(wc, [0.0, 4.0, 0.0, 0.0], atol=1e-8)
    wcb = weight_c_values(ds, A2, B_NEVER, cells, nuis)
    np.testing.assert_allclose(wcb, [0.0, 0.0, 0.0, 4.0], atol=1e-8)
    for i, unit in enumerate(ds.units):
        assert weight_c(unit, A2, A_NEVER, cells, nuis) == pytest.approx(
            wc[i], abs=1e-12)


@pytest.mark.parametrize("kind", list(ScoreKind))
def test_score_vectors_match_hand_computation(fixture, kind):
    ds, cells, nuis = fixture
    expected_values, expected_mean = HAND_VALUES[kind]
    vec = score_vector(kind, ds, cells, nuis)
    np.testing.assert_allclose(vec.values, expected_values, atol=1e-8)
    assert vec.mean() == pytest.approx(expected_mean, abs=1e-8)
    assert score_mean(kind, ds, cells, nuis) == pytest.approx(expected_mean,
                                                             abs=1e-8)
    assert vec.kind is kind
    assert len(vec) == 4


def test_reweighting_changes_only_the_counterfactual_term(fixture):
    # headline contrast: mean DR(a) - mean WDR = 2 - 3.5
    ds, cells, nuis = fixture
    tau = score_mean(ScoreKind.DR_A, ds, cells, nuis) - score_mean(
        ScoreKind.WDR, ds, cells, nuis)
    assert tau == pytest.approx(-1.5, abs=1e-8)


def test_pointwise_score_matches_vector(fixture):
    ds, cells, nuis = fixture
    for kind in (ScoreKind.DR_A, ScoreKind.WDR, ScoreKind.IPW_B):
        vec = score_vector(kind, ds, cells, nuis)
        for i, unit in enumerate(ds.units):
            assert score(kind, unit, cells, nuis) == pytest.approx(
                vec.values[i], abs=1e-10)


def test_pointwise_score_rejects_normalization(fixture):
    ds, cells, nuis = fixture
    with pytest.raises(ValueError):
        score(ScoreKind.DR_A, ds.unit(0), cells, nuis, normalize=True)


def test_or_scores_vanish_outside_their_cells(fixture):
    ds, cells, nuis = fixture
    or_a = score_vector(ScoreKind.OR_A, ds, cells, nuis).values
    assert np.all(or_a[1:] == 0.0)
    ipw_a = score_vector(ScoreKind.IPW_A, ds, cells, nuis).values
    assert np.all(ipw_a[2:] == 0.0)  # group B never contributes
    wor = score_vector(ScoreKind.WOR, ds, cells, nuis).values
    assert np.all(wor[1:] == 0.0)  # evaluated on (A, Eligible) units only


def test_zeroed_outcome_models_collapse_dr_to_ipw(fixture):
    ds, cells, nuis = fixture
    zero = LinearModel(coefficients=np.zeros(1), column_names=("intercept",),
                       residual_variance=0.0, n_obs=1,
                       gram_inverse=np.eye(1))
    zeroed = dataclasses.replace(
        nuis, outcome_models={cell: zero for cell in nuis.outcome_models})
    for dr, ipw in ((ScoreKind.DR_A, ScoreKind.IPW_A),
                    (ScoreKind.DR_B, ScoreKind.IPW_B),
                    (ScoreKind.WDR, ScoreKind.WIPW)):
        np.testing.assert_array_equal(
            score_vector(dr, ds, cells, zeroed).values,
            score_vector(ipw, ds, cells, zeroed).values)


def test_trimming_error_names_offending_units(fixture):
    ds, cells, nuis = fixture
    with pytest.raises(TrimmingError) as err:
        score_vector(ScoreKind.IPW_A, ds, cells, nuis, trim_epsilon=0.3)
    assert "u1" in str(err.value) or "u2" in str(err.value)
    assert err.value.unit_ids


def test_trimming_only_inspects_source_cell_units(fixture):
    # OR scores use no propensity ratio, so even an absurd threshold passes
    ds, cells, nuis = fixture
    vec = score_vector(ScoreKind.OR_A, ds, cells, nuis, trim_epsilon=0.3)
    np.testing.assert_allclose(vec.values, HAND_VALUES[ScoreKind.OR_A][0],
                               atol=1e-8)


# ---------------------------------------------------------------------------
# Normalized weights need a fixture whose weight means are not 1
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sloped_fixture():
    r = np.random.default_rng(31)
    n = 400
    group = r.random(n) < 0.5
    elig = r.random(n) < 0.5
    x = r.normal(size=(n, 1)) + np.where(group, 0.6, -0.6)[:, None]
    y1 = x[:, 0] + r.normal(size=n)
    y2 = y1 + 0.5 * x[:, 0] * elig + r.normal(size=n)
    ds = PanelDataset(ids=np.arange(n), y1=y1, y2=y2, group_is_a=group,
                      eligible=elig, x=x, covariate_names=("x",),
                      mechanism=AssignmentMechanism.BOTH_GROUPS)
    return ds, cell_table(ds)


def test_normalization_requires_treated_cell_outcome_model(sloped_fixture):
    ds, cells = sloped_fixture
    nuis = fit_nuisances(ds, NuisanceMode.SCORE_SET)
    with pytest.raises(MissingNuisanceError, match=r"\(A, Eligible\)"):
        score_vector(ScoreKind.DR_A, ds, cells, nuis, normalize=True)


def test_normalized_scores_finite_and_close_to_unnormalized(sloped_fixture):
    ds, cells = sloped_fixture
    nuis = fit_nuisances(ds, NuisanceMode.SCORE_SET, include_a2=True)
    plain = score_vector(ScoreKind.WDR, ds, cells, nuis)
    hajek = score_vector(ScoreKind.WDR, ds, cells, nuis, normalize=True)
    assert np.all(np.isfinite(hajek.values))
    assert hajek.mean() != plain.mean()
    assert hajek.mean() == pytest.approx(plain.mean(), abs=0.5)


def test_unnormalized_dr_needs_no_treated_cell_model(sloped_fixture):
    # identical same-cell weights null the treated-cell augmentation, so
    # the plain estimator runs on three outcome regressions
    ds, cells = sloped_fixture
    nuis = fit_nuisances(ds, NuisanceMode.SCORE_SET)
    assert not nuis.has_outcome(A2)
    vec = score_vector(ScoreKind.DR_A, ds, cells, nuis)
    assert np.all(np.isfinite(vec.values))


def test_dump_scores_round_trips_exact_floats(fixture, tmp_path):
    ds, cells, nuis = fixture
    path = tmp_path / "scores.csv"
    dump_scores(ds, cells, nuis, [ScoreKind.DR_A, ScoreKind.WDR], path)
    import csv
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [row["unit_id"] for row in rows] == ["u1", "u2", "u3", "u4"]
    dr = score_vector(ScoreKind.DR_A, ds, cells, nuis).values
    got = np.array([float(row["score_dr_a"]) for row in rows])
    np.testing.assert_array_equal(got, dr)


def test_score_vector_rejects_missing_donor_model(fixture):
    ds, cells, nuis = fixture
    stripped = dataclasses.replace(nuis, outcome_models={})
    with pytest.raises(MissingNuisanceError):
        score_vector(ScoreKind.OR_A, ds, cells, stripped)
