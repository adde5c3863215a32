from datetime import date, timedelta

import pytest
from hypothesis import strategies as st

from adaptivenet.encoding import FeatureScaler
from adaptivenet.records import DOSES, DRUGS, MED_TYPES, MedicationEvent, PatientRecord, PatientStatic, VisitEvent

START = date(2010, 1, 1)


def visit(day, score=None, **fields):
    return VisitEvent(time=START + timedelta(days=day), das28bsr_score=score, **fields)


def med(day, drug="prednison", med_type="prednison", dose="no"):
    return MedicationEvent(START + timedelta(days=day), drug, med_type, dose)


def record(visits, meds=(), pid="A", age=50.0, gender="female", **static):
    return PatientRecord(pid, PatientStatic(age=age, gender=gender, **static), tuple(visits), tuple(meds))


def month(k):
    return round(k * 365.25 / 12)


@st.composite
def small_records(draw, pid="R", max_visits=8, max_meds=4):
    """Random valid records on a coarse day grid so that same-day events and
    boundary horizons occur often."""
    n_v = draw(st.integers(0, max_visits))
    n_m = draw(st.integers(0, max_meds))
    grid = st.integers(0, 24).map(lambda k: k * 46)
    vdays = sorted(draw(st.lists(grid, min_size=n_v, max_size=n_v)))
    mdays = sorted(draw(st.lists(grid, min_size=n_m, max_size=n_m)))
    scores = st.one_of(st.none(), st.floats(0, 10, allow_nan=False).map(lambda x: round(x, 2)))
    visits = [visit(d, draw(scores), crp=draw(st.one_of(st.none(), st.floats(0, 50)))) for d in vdays]
    meds = [
        med(d, draw(st.sampled_from(DRUGS)), draw(st.sampled_from(MED_TYPES)), draw(st.sampled_from(DOSES)))
        for d in mdays
    ]
    return record(visits, meds, pid=pid, age=draw(st.floats(18, 90)))


@pytest.fixture
def three_visit_record():
    return record([visit(0, 4.0), visit(month(6), 3.0), visit(month(12), 2.5)])


def fitted_scaler(records):
    return FeatureScaler().fit(records)
