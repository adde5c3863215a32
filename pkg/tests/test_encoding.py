import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptivenet.encoding import (
    MED_SLOTS,
    PATIENT_SLOTS,
    SCALED_FEATURES,
    VISIT_SLOTS,
    W_MED,
    W_PATIENT,
    W_VISIT,
    FeatureScaler,
    encode_med,
    encode_patient,
    encode_visit,
    write_matrix_csv,
)
from adaptivenet.records import VISIT_NUMERIC, MedicationEvent, PatientStatic, VisitEvent

from conftest import START, med, record, visit

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def scaler():
    recs = [
        record(
            [
                visit(0, 2.0, number_swollen_joints=0.0, crp=1.0, bsr=5.0),
                visit(400, 6.0, number_swollen_joints=10.0, crp=21.0, bsr=45.0),
            ],
            [med(200)],
            age=30.0,
            disease_duration=0.0,
        ),
        record([visit(0, 3.0)], pid="B", age=70.0, disease_duration=20.0),
    ]
    return FeatureScaler().fit(recs)


def test_widths():
    assert W_VISIT == 33 and W_MED == 18 and W_PATIENT == 8


def test_layout_matches_golden_fixture():
    golden = json.loads((FIXTURES / "layout.json").read_text())
    assert golden == {"visit": list(VISIT_SLOTS), "med": list(MED_SLOTS), "patient": list(PATIENT_SLOTS)}


def test_fully_missing_visit(scaler):
    x = encode_visit(VisitEvent(time=START), 1.0, scaler)
    assert x.shape == (W_VISIT,)
    numeric = x[: 2 * len(VISIT_NUMERIC)]
    np.testing.assert_array_equal(numeric[0::2], 0.0)
    np.testing.assert_array_equal(numeric[1::2], 1.0)
    np.testing.assert_array_equal(x[22:32], 0.0)
    assert x[-1] == scaler.scale("delta_t", 1.0)


def test_fitted_max_encodes_one(scaler):
    x = encode_visit(VisitEvent(time=START, number_swollen_joints=10.0), 0.0, scaler)
    k = VISIT_SLOTS.index("number_swollen_joints")
    assert x[k] == 1.0 and x[k + 1] == 0.0


def test_hand_computed_visit(scaler):
    v = VisitEvent(
        time=START, das28bsr_score=4.0, crp=11.0, bsr=25.0, morning_stiffness="0.5-1h", smoker="former"
    )
    x = encode_visit(v, 0.5, scaler)
    expected = np.zeros(W_VISIT)
    for name in VISIT_NUMERIC:
        expected[VISIT_SLOTS.index(name) + 1] = 1.0
    expected[VISIT_SLOTS.index("das28bsr_score")] = 0.5  # (4 - 2) / (6 - 2)
    expected[VISIT_SLOTS.index("das28bsr_score__missing")] = 0.0
    expected[VISIT_SLOTS.index("crp")] = 0.5  # (11 - 1) / 20
    expected[VISIT_SLOTS.index("crp__missing")] = 0.0
    expected[VISIT_SLOTS.index("bsr")] = 0.5
    expected[VISIT_SLOTS.index("bsr__missing")] = 0.0
    expected[VISIT_SLOTS.index("morning_stiffness=0.5-1h")] = 1.0
    expected[VISIT_SLOTS.index("smoker=former")] = 1.0
    # delta_t range is [0, span + max_horizon] = [0, 400 / 365.25 + 1]
    expected[-1] = 0.5 / (400 / 365.25 + 1.0)
    np.testing.assert_allclose(x, expected, rtol=0, atol=1e-15)


def test_hand_computed_med(scaler):
    x = encode_med(MedicationEvent(START, "prednison", "prednison", "no"), 0.0, scaler)
    expected = np.zeros(W_MED)
    expected[1] = 1.0  # drug=prednison
    expected[9] = 1.0  # med_type=prednison
    expected[13] = 1.0  # dose=no
    np.testing.assert_array_equal(x, expected)


def test_dose_change_is_local(scaler):
    a = encode_med(MedicationEvent(START, "dmard_mtx", "dmard", "<10mg"), 0.3, scaler)
    b = encode_med(MedicationEvent(START, "dmard_mtx", "dmard", ">15mg"), 0.3, scaler)
    diff = np.flatnonzero(a != b)
    assert set(diff) <= set(range(13, 17)) and len(diff) == 2


def test_patient_encoding(scaler):
    p = PatientStatic(age=50.0, gender="male", disease_duration=5.0, rheumatoid_factor="yes", anti_ccp=None)
    x = encode_patient(p, scaler)
    np.testing.assert_allclose(x, [0.5, 0.25, 1, 0, 1, 0, 0, 0])
    y = encode_patient(PatientStatic(age=50.0, gender="female", disease_duration=5.0, rheumatoid_factor="yes"), scaler)
    assert list(np.flatnonzero(x != y)) == [2, 3]


def test_out_of_range_is_clipped(scaler):
    assert scaler.scale("crp", 1000.0) == 1.0
    assert scaler.scale("crp", -5.0) == 0.0


def test_degenerate_feature_maps_to_zero():
    s = FeatureScaler().fit([record([visit(0, 3.0, crp=2.0)])])
    assert s.scale("crp", 2.0) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(SCALED_FEATURES), st.floats(0, 1))
def test_scale_round_trip(scaler_name, frac):
    s = FeatureScaler().fit(
        [record([visit(0, 0.0, **{n: 0.0 for n in VISIT_NUMERIC if n != "das28bsr_score"}),
                 visit(800, 10.0, **{n: 50.0 for n in VISIT_NUMERIC if n != "das28bsr_score"})],
                age=20.0, disease_duration=1.0),
         record([], pid="B", age=80.0, disease_duration=30.0)]
    )
    k = list(SCALED_FEATURES).index(scaler_name)
    x = s.min_[k] + frac * (s.max_[k] - s.min_[k])
    assert abs(s.unscale(scaler_name, s.scale(scaler_name, x)) - x) <= 1e-12 * max(1.0, abs(x))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(VISIT_NUMERIC), unique=True))
def test_missing_indicator_soundness(missing):
    fields = {n: (None if n in missing else 1.0) for n in VISIT_NUMERIC}
    x = encode_visit(VisitEvent(time=START, **fields), 0.0, FeatureScaler().fit([]))
    for n in VISIT_NUMERIC:
        assert x[VISIT_SLOTS.index(f"{n}__missing")] == (1.0 if n in missing else 0.0)


def test_transform_matches_scale(scaler):
    X = np.array([[scaler.min_[k] + 0.3 * (scaler.max_[k] - scaler.min_[k]) for k in range(len(SCALED_FEATURES))]])
    T = scaler.transform(X)
    for k, name in enumerate(SCALED_FEATURES):
        assert T[0, k] == pytest.approx(scaler.scale(name, X[0, k]), abs=1e-15)


def test_scaler_serialization(scaler):
    back = FeatureScaler.from_dict(json.loads(json.dumps(scaler.to_dict())))
    np.testing.assert_array_equal(back.min_, scaler.min_)
    np.testing.assert_array_equal(back.max_, scaler.max_)


def test_matrix_csv_header(tmp_path, scaler):
    path = tmp_path / "m.csv"
    write_matrix_csv(path, list(MED_SLOTS), [encode_med(MedicationEvent(START, "other", "other", None), 0.0, scaler)])
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(MED_SLOTS)
    assert len(lines[1].split(",")) == W_MED
