from collections import Counter
from dataclasses import replace
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptivenet.autodiff import ContractError
from adaptivenet.encoding import W_MED, W_PATIENT, W_VISIT, FeatureScaler
from adaptivenet.records import DAYS_PER_YEAR, DEFAULT_EPOCH, day_number
from adaptivenet.sampling import (
    SamplingConfig,
    flat_width,
    flatten,
    flatten_features,
    generate_samples,
    truncate_history,
)

from conftest import med, month, record, small_records, visit
from oracles import enumerate_samples


def _keys(samples):
    return [(s.anchor_day, s.target_day, s.label) for s in samples]


def test_three_visits_no_meds(three_visit_record):
    r = three_visit_record
    out = generate_samples([r], SamplingConfig(), FeatureScaler().fit([r]))
    d = [day_number(v.time) for v in r.visits]
    assert _keys(out) == [(d[0], d[1], -1.0), (d[0], d[2], -1.5), (d[1], d[2], -0.5)]


def test_medication_cutoff(three_visit_record):
    r = replace(three_visit_record, meds=(med(month(9)),))
    out = generate_samples([r], SamplingConfig(), FeatureScaler().fit([r]))
    d = [day_number(v.time) for v in r.visits]
    assert _keys(out) == [(d[0], d[1], -1.0)]


def test_medication_on_anchor_day_blocks():
    r = record([visit(0, 4.0), visit(120, 3.0), visit(240, 2.0)], [med(120)])
    out = generate_samples([r], SamplingConfig(), FeatureScaler().fit([r]))
    # [0, 120] and [120, 240] both contain day 120 (inclusive bounds); [0, 240] too
    assert out == []


def test_two_visits_yield_nothing():
    r = record([visit(0, 4.0), visit(200, 3.0)])
    assert generate_samples([r], SamplingConfig(), FeatureScaler().fit([r])) == []


def test_scoreless_visits_stay_in_history():
    r = record([visit(0, 4.0), visit(60, None, crp=5.0), visit(200, 3.0), visit(330, 2.0)])
    out = generate_samples([r], SamplingConfig(), FeatureScaler().fit([r]))
    anchored_at_200 = [s for s in out if s.anchor_day == day_number(r.visits[2].time)]
    assert anchored_at_200 and anchored_at_200[0].n_visits == 3


def test_invalid_record_raises():
    r = record([visit(10, 3.0), visit(5, 2.0)])
    with pytest.raises(ContractError, match="not time-ordered"):
        generate_samples([r], SamplingConfig(), FeatureScaler().fit([]))


def test_delta_t_features(three_visit_record):
    r = three_visit_record
    scaler = FeatureScaler(delta_t_max=10.0).fit([r])
    s = generate_samples([r], SamplingConfig(), scaler)[1]
    expected = (s.target_day - s.visit_times) / DAYS_PER_YEAR / 10.0
    np.testing.assert_allclose(s.visit_features[:, -1], expected, rtol=1e-15)
    assert np.all(s.visit_features[:, -1] > 0)
    assert s.delta_t == pytest.approx((s.target_day - s.anchor_day) / DAYS_PER_YEAR)


def test_output_sorted_by_patient_then_times():
    a = record([visit(0, 1.0), visit(100, 2.0), visit(200, 3.0)], pid="b")
    b = record([visit(0, 1.0), visit(100, 2.0), visit(200, 3.0)], pid="a")
    out = generate_samples([a, b], SamplingConfig(), FeatureScaler().fit([a, b]))
    keys = [(s.patient_id, s.anchor_day, s.target_day) for s in out]
    assert keys == sorted(keys) and keys[0][0] == "a"


def _as_oracle_tuples(samples):
    def iso(d):
        return (DEFAULT_EPOCH + timedelta(days=int(d))).isoformat()

    return Counter(
        (
            iso(s.anchor_day),
            iso(s.target_day),
            s.label,
            tuple(sorted(iso(t) for t in s.visit_times)),
            tuple(sorted(iso(t) for t in s.med_times)),
        )
        for s in samples
    )


@settings(max_examples=150, deadline=None)
@given(small_records(), st.sampled_from([0.3, 1.0, 5.0]))
def test_matches_brute_force(r, history):
    cfg = SamplingConfig(max_history=history)
    out = generate_samples([r], cfg, FeatureScaler().fit([r]))
    assert _as_oracle_tuples(out) == enumerate_samples(r, history, 0.25, 1.0, 3)


@settings(max_examples=60, deadline=None)
@given(small_records())
def test_history_monotone(r):
    scaler = FeatureScaler().fit([r])
    short = generate_samples([r], SamplingConfig(max_history=0.5), scaler)
    long = generate_samples([r], SamplingConfig(max_history=3.0), scaler)
    assert len(short) == len(long)
    for s, lg in zip(short, long):
        assert s.n_visits <= lg.n_visits and s.n_meds <= lg.n_meds


@settings(max_examples=60, deadline=None)
@given(small_records(), st.floats(-5, 5))
def test_no_label_leakage(r, bump):
    """Changing anything dated after an anchor leaves that anchor's inputs unchanged."""
    scaler = FeatureScaler(delta_t_max=3.0).fit([r])
    base = generate_samples([r], SamplingConfig(), scaler)
    for s in base:
        later = tuple(
            replace(v, crp=5.0, bsr=abs(bump)) if day_number(v.time) > s.anchor_day else v for v in r.visits
        )
        s2 = next(
            x
            for x in generate_samples([replace(r, visits=later)], SamplingConfig(), scaler)
            if (x.anchor_day, x.target_day) == (s.anchor_day, s.target_day)
        )
        np.testing.assert_array_equal(s.visit_features, s2.visit_features)
        np.testing.assert_array_equal(s.med_features, s2.med_features)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3000), max_size=12), st.integers(0, 3000), st.floats(0.1, 10))
def test_truncate_history_filter(days, t, hist):
    days = sorted(days)
    kept = truncate_history(days, t, hist)
    assert kept == [d for d in days if 0 <= (t - d) / 365.25 < hist]


def test_truncate_history_infinite_is_identity():
    assert truncate_history([1, 2, 3], 3, float("inf")) == [1, 2, 3]


def test_truncate_history_all_old():
    assert truncate_history([1, 2, 3], 5000, 1.0) == []


def test_flatten_padding_and_order():
    r = record([visit(0, 4.0, crp=1.0), visit(100, 3.0, crp=2.0), visit(200, 2.0, crp=3.0)])
    samples = generate_samples([r], SamplingConfig(), FeatureScaler().fit([r]))
    s = samples[-1]  # anchored at day 100: visits 0 and 100
    X = flatten_features([s], n_max=3, m_max=2)
    assert X.shape == (1, flat_width(3, 2)) == (1, W_PATIENT + 3 * W_VISIT + 2 * W_MED)
    np.testing.assert_array_equal(X[0, :W_PATIENT], s.patient_vec)
    np.testing.assert_array_equal(X[0, W_PATIENT : W_PATIENT + W_VISIT], s.visit_features[1])
    np.testing.assert_array_equal(X[0, W_PATIENT + W_VISIT : W_PATIENT + 2 * W_VISIT], s.visit_features[0])
    assert np.all(X[0, W_PATIENT + 2 * W_VISIT :] == -1.0)
    (flat,) = flatten([s], 3, 2)
    assert flat.label == s.label


def test_flatten_overflow():
    r = record([visit(0, 4.0), visit(100, 3.0), visit(200, 2.0)])
    s = generate_samples([r], SamplingConfig(), FeatureScaler().fit([r]))[-1]
    with pytest.raises(ContractError):
        flatten_features([s], n_max=1, m_max=0)
    X = flatten_features([s], n_max=1, m_max=0, truncate=True)
    np.testing.assert_array_equal(X[0, W_PATIENT:], s.visit_features[-1])


def test_flat_width_formula():
    assert flat_width(35, 10) == 8 + 35 * W_VISIT + 10 * W_MED == 1343


def test_determinism(three_visit_record):
    cfg = SamplingConfig()
    sc = FeatureScaler().fit([three_visit_record])
    a = generate_samples([three_visit_record], cfg, sc)
    b = generate_samples([three_visit_record], cfg, sc)
    assert _keys(a) == _keys(b)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.visit_features, y.visit_features)
