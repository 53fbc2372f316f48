import itertools

import pytest
from hypothesis import given, strategies as st

from ice_localizer.corpus import PacingClass, ViewLabel
from ice_localizer.evaluate import (
    EvaluateError,
    SamplePrediction,
    accuracy,
    aggregate_means,
    clip_vote,
    cross_view_vote,
    fold_report,
    round2,
)
from clinical_fixtures import (
    CLINICAL_TEST_MEANS,
    CLINICAL_TEST_TABLE,
    CLINICAL_VAL_MEANS,
    CLINICAL_VAL_TABLE,
)
from helpers import VIEW_COLS, brute_force_mode, reports_from_table


def sp(pred, true=0, clip="c1", patient="p1", view=ViewLabel.TV):
    return SamplePrediction(
        patient_id=patient,
        clip_id=clip,
        view=view,
        true_pacing=PacingClass(true),
        predicted_pacing=PacingClass(pred),
    )


# ---------------------------------------------------------------- accuracy


def test_accuracy_values():
    assert accuracy([0] * 8 + [1] * 4, [0] * 12) == pytest.approx(66.67, abs=0.01)
    assert accuracy([1, 2], [1, 2]) == 100.0
    assert accuracy([0] * 6 + [1] * 5, [0] * 11) == pytest.approx(54.54, abs=0.01)


def test_accuracy_rejects_empty_and_mismatched():
    with pytest.raises(EvaluateError):
        accuracy([], [])
    with pytest.raises(EvaluateError):
        accuracy([0], [0, 1])


def test_rounding_is_half_up():
    assert round2(54.725) == 54.73
    assert round2(65.045) == 65.05
    assert round2(83.333333) == 83.33


# ---------------------------------------------------------------- voting


def test_clip_vote_examples():
    assert clip_vote([sp(v) for v in (1, 1, 2, 1, 0)]) == PacingClass.DIST
    assert clip_vote([sp(v) for v in (0, 0, 1, 1)]) == PacingClass.NSR
    assert clip_vote([sp(2)]) == PacingClass.PROX


def test_clip_vote_rejects_mixed_clips():
    with pytest.raises(EvaluateError):
        clip_vote([sp(1, clip="a"), sp(1, clip="b")])
    with pytest.raises(EvaluateError):
        clip_vote([])


def test_cross_view_vote_examples():
    v = ViewLabel
    assert cross_view_vote({v.TV: 2, v.MV: 2, v.LPV: 1, v.CT: 0}) == PacingClass.PROX
    assert cross_view_vote({v.TV: 0, v.MV: 1}) == PacingClass.NSR
    assert cross_view_vote({v.MV: 1}) == PacingClass.DIST
    with pytest.raises(EvaluateError):
        cross_view_vote({})


def test_vote_oracle_equivalence_exhaustive():
    # all vote vectors of length 1..6 over 3 classes against plain counting
    for k in range(1, 7):
        for votes in itertools.product(range(3), repeat=k):
            expected = brute_force_mode(votes)
            assert clip_vote([sp(v) for v in votes]) == expected
    # all view subsets with all class assignments
    for r in range(1, 5):
        for views in itertools.combinations(list(ViewLabel), r):
            for assignment in itertools.product(range(3), repeat=r):
                got = cross_view_vote(
                    {v: PacingClass(c) for v, c in zip(views, assignment)}
                )
                assert got == brute_force_mode(assignment)


@given(st.lists(st.integers(0, 2), min_size=1, max_size=12), st.randoms())
def test_vote_permutation_invariance(votes, rnd):
    shuffled = list(votes)
    rnd.shuffle(shuffled)
    a = clip_vote([sp(v) for v in votes])
    b = clip_vote([sp(v) for v in shuffled])
    assert a == b == brute_force_mode(votes)


# ---------------------------------------------------------------- fold report


def _fold_predictions(decisions):
    """decisions: {(patient, pacing, view): [per-beat predicted ids]}"""
    preds = []
    for (patient, pacing, view), beat_preds in decisions.items():
        clip = f"{patient}_{view.name}_{PacingClass(pacing).name}"
        for p in beat_preds:
            preds.append(sp(p, true=pacing, clip=clip, patient=patient, view=view))
    return preds


def test_fold_report_all_correct():
    decisions = {
        (f"p{i}", pac, view): [pac] * 3
        for i in range(4)
        for pac in range(3)
        for view in ViewLabel
    }
    rep = fold_report(0, _fold_predictions(decisions))
    assert rep.cross_view == 100.0
    assert all(rep.per_view[v.name] == 100.0 for v in ViewLabel)
    assert rep.counts["CROSS_VIEW"] == 12


def test_fold_report_partial_and_counts():
    # 12 fused units, 10 correct: wrong units get 3 of 4 views wrong
    decisions = {}
    for i in range(4):
        for pac in range(3):
            unit_wrong = (i, pac) in {(0, 0), (1, 1)}
            for view in ViewLabel:
                hit = pac if (not unit_wrong or view == ViewLabel.CT) else (pac + 1) % 3
                decisions[(f"p{i}", pac, view)] = [hit] * 3
    rep = fold_report(0, _fold_predictions(decisions))
    assert round2(rep.cross_view) == 83.33


def test_fold_report_missing_view_drops_from_denominator():
    decisions = {
        (f"p{i}", pac, view): [pac] * 2
        for i in range(2)
        for pac in range(3)
        for view in ViewLabel
    }
    # patient p0 has no CT clips at all
    decisions = {k: v for k, v in decisions.items() if not (k[0] == "p0" and k[2] == ViewLabel.CT)}
    rep = fold_report(0, _fold_predictions(decisions))
    assert rep.counts["CT"] == 3
    assert rep.counts["TV"] == 6
    assert rep.cross_view == 100.0
    assert rep.counts["CROSS_VIEW"] == 6


def test_fusion_preserves_unit_set():
    decisions = {
        (f"p{i}", pac, view): [(pac + i) % 3] * 2
        for i in range(3)
        for pac in range(3)
        for view in list(ViewLabel)[: 1 + i]
    }
    rep = fold_report(0, _fold_predictions(decisions))
    clip_units = {(p, pac) for (p, pac, _v) in decisions}
    assert rep.counts["CROSS_VIEW"] == len(clip_units)


# ---------------------------------------------------------------- aggregation


def test_aggregate_means_reproduces_reference_tables():
    val = aggregate_means(reports_from_table(CLINICAL_VAL_TABLE))
    assert tuple(val[c] for c in VIEW_COLS) == CLINICAL_VAL_MEANS
    test = aggregate_means(reports_from_table(CLINICAL_TEST_TABLE))
    assert tuple(test[c] for c in VIEW_COLS) == CLINICAL_TEST_MEANS


def test_aggregate_means_single_report_is_itself():
    rep = reports_from_table([(50.0, 60.0, 70.0, 80.0, 90.0)])
    means = aggregate_means(rep)
    assert tuple(means[c] for c in VIEW_COLS) == (50.0, 60.0, 70.0, 80.0, 90.0)


def test_aggregate_means_skips_missing_columns():
    reports = reports_from_table([(50.0, 60.0, 70.0, 80.0, 90.0)])
    reports[0].per_view["CT"] = None
    means = aggregate_means(reports)
    assert means["CT"] is None
    assert means["TV"] == 50.0
