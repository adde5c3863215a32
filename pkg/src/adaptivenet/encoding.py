"""Fixed-width event encodings and the (0, 1) feature scaler.

Visit layout (``W_VISIT = 33`` slots)::

    for each of the 11 numeric fields: <field>, <field>__missing
    morning_stiffness one-hot (7), smoker one-hot (3), delta_t

A missing numeric field encodes as ``0`` with its indicator set to ``1``;
a missing categorical leaves its one-hot block all zero.

Medication layout (``W_MED = 18``)::

    drug one-hot (9), med_type one-hot (4), dose one-hot (4), delta_t

Patient layout (``W_PATIENT = 8``)::

    age, disease_duration, gender (male, female),
    rheumatoid_factor (yes, no), anti_ccp (yes, no)
"""

from __future__ import annotations

import csv
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .records import (
    DOSES,
    DRUGS,
    GENDERS,
    MED_TYPES,
    MORNING_STIFFNESS,
    SMOKER,
    TRISTATE,
    VISIT_NUMERIC,
    MedicationEvent,
    PatientRecord,
    PatientStatic,
    VisitEvent,
    years_between,
)

LAYOUT_VERSION = 1

VISIT_SLOTS = tuple(
    [s for name in VISIT_NUMERIC for s in (name, f"{name}__missing")]
    + [f"morning_stiffness={c}" for c in MORNING_STIFFNESS]
    + [f"smoker={c}" for c in SMOKER]
    + ["delta_t"]
)
MED_SLOTS = tuple(
    [f"drug={c}" for c in DRUGS]
    + [f"med_type={c}" for c in MED_TYPES]
    + [f"dose={c}" for c in DOSES]
    + ["delta_t"]
)
PATIENT_SLOTS = (
    "age",
    "disease_duration",
    "gender=male",
    "gender=female",
    "rheumatoid_factor=yes",
    "rheumatoid_factor=no",
    "anti_ccp=yes",
    "anti_ccp=no",
)
W_VISIT = len(VISIT_SLOTS)
W_MED = len(MED_SLOTS)
W_PATIENT = len(PATIENT_SLOTS)

SCALED_FEATURES = VISIT_NUMERIC + ("age", "disease_duration", "delta_t")


def _finite(values):
    return [float(v) for v in values if v is not None and math.isfinite(v)]


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Per-feature min/max scaling into ``[0, 1]`` with clipping.

    ``fit`` takes a list of :class:`PatientRecord`.  The ``delta_t`` range is
    ``[0, delta_t_max]``; when ``delta_t_max`` is None it is learned as the
    longest record span in years plus ``max_horizon``.

    ``transform``/``inverse_transform`` act on arrays whose columns follow
    :data:`SCALED_FEATURES`; NaN marks a missing value and is passed through.
    """

    def __init__(self, delta_t_max=None, max_horizon=1.0):
        self.delta_t_max = delta_t_max
        self.max_horizon = max_horizon

    def fit(self, records, y=None):
        columns: dict[str, list[float]] = {name: [] for name in SCALED_FEATURES}
        span = 0.0
        for r in records:
            for v in r.visits:
                for name in VISIT_NUMERIC:
                    columns[name].append(getattr(v, name))
            columns["age"].append(r.static.age)
            columns["disease_duration"].append(r.static.disease_duration)
            times = [e.time for e in r.visits] + [e.time for e in r.meds]
            if times:
                span = max(span, years_between(min(times), max(times)))
        dt_max = self.delta_t_max if self.delta_t_max is not None else span + self.max_horizon
        columns["delta_t"] = [0.0, dt_max]
        self.min_ = np.zeros(len(SCALED_FEATURES))
        self.max_ = np.zeros(len(SCALED_FEATURES))
        for k, name in enumerate(SCALED_FEATURES):
            vals = _finite(columns[name])
            if vals:
                self.min_[k], self.max_[k] = min(vals), max(vals)
        self.feature_names_in_ = np.array(SCALED_FEATURES, dtype=object)
        self._index = {name: k for k, name in enumerate(SCALED_FEATURES)}
        return self

    def _check(self):
        if not hasattr(self, "min_"):
            raise NotFittedError("FeatureScaler is not fitted")

    def scale(self, name: str, value: float) -> float:
        self._check()
        k = self._index[name]
        lo, hi = self.min_[k], self.max_[k]
        if hi <= lo:
            return 0.0
        return float(min(max((value - lo) / (hi - lo), 0.0), 1.0))

    def scale_array(self, name: str, values) -> np.ndarray:
        """Vectorized :meth:`scale`; same arithmetic, elementwise."""
        self._check()
        k = self._index[name]
        lo, hi = self.min_[k], self.max_[k]
        values = np.asarray(values, dtype=np.float64)
        if hi <= lo:
            return np.zeros_like(values)
        return np.minimum(np.maximum((values - lo) / (hi - lo), 0.0), 1.0)

    def unscale(self, name: str, value: float) -> float:
        self._check()
        k = self._index[name]
        return float(self.min_[k] + value * (self.max_[k] - self.min_[k]))

    def transform(self, X):
        self._check()
        X = np.asarray(X, dtype=np.float64)
        width = np.where(self.max_ > self.min_, self.max_ - self.min_, 1.0)
        out = np.clip((X - self.min_) / width, 0.0, 1.0)
        out[:, self.max_ <= self.min_] = 0.0
        out[np.isnan(X)] = np.nan
        return out

    def inverse_transform(self, X):
        self._check()
        X = np.asarray(X, dtype=np.float64)
        return self.min_ + X * (self.max_ - self.min_)

    def to_dict(self):
        self._check()
        return {
            "features": list(SCALED_FEATURES),
            "min": self.min_.tolist(),
            "max": self.max_.tolist(),
            "delta_t_max": self.delta_t_max,
            "max_horizon": self.max_horizon,
        }

    @classmethod
    def from_dict(cls, d):
        if list(d["features"]) != list(SCALED_FEATURES):
            raise ValueError("scaler feature list does not match this encoding layout")
        scaler = cls(delta_t_max=d.get("delta_t_max"), max_horizon=d.get("max_horizon", 1.0))
        scaler.min_ = np.array(d["min"], dtype=np.float64)
        scaler.max_ = np.array(d["max"], dtype=np.float64)
        scaler.feature_names_in_ = np.array(SCALED_FEATURES, dtype=object)
        scaler._index = {name: k for k, name in enumerate(SCALED_FEATURES)}
        return scaler


def _one_hot(value, choices):
    block = [0.0] * len(choices)
    if value is not None and value in choices:
        block[choices.index(value)] = 1.0
    return block


def encode_visit(v: VisitEvent, delta_t: float, scaler: FeatureScaler) -> np.ndarray:
    out = []
    for name in VISIT_NUMERIC:
        value = getattr(v, name)
        if value is None:
            out += [0.0, 1.0]
        else:
            out += [scaler.scale(name, value), 0.0]
    out += _one_hot(v.morning_stiffness, MORNING_STIFFNESS)
    out += _one_hot(v.smoker, SMOKER)
    out.append(scaler.scale("delta_t", delta_t))
    return np.array(out)


def encode_med(m: MedicationEvent, delta_t: float, scaler: FeatureScaler) -> np.ndarray:
    out = _one_hot(m.drug, DRUGS) + _one_hot(m.med_type, MED_TYPES) + _one_hot(m.dose, DOSES)
    out.append(scaler.scale("delta_t", delta_t))
    return np.array(out)


def encode_patient(p: PatientStatic, scaler: FeatureScaler) -> np.ndarray:
    out = [
        scaler.scale("age", p.age) if p.age is not None else 0.0,
        scaler.scale("disease_duration", p.disease_duration)
        if p.disease_duration is not None
        else 0.0,
    ]
    out += _one_hot(p.gender, GENDERS)
    out += _one_hot(p.rheumatoid_factor, TRISTATE)
    out += _one_hot(p.anti_ccp, TRISTATE)
    return np.array(out)


def write_matrix_csv(path, header, rows) -> None:
    """Write encoded rows with a header naming each slot; floats use ``repr``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def encode_record_events(record: PatientRecord, reference: int, scaler: FeatureScaler):
    """Encode every event of ``record`` with delta_t measured to day ``reference``."""
    visits = np.array(
        [encode_visit(v, years_between(v.time, reference), scaler) for v in record.visits]
    ).reshape(-1, W_VISIT)
    meds = np.array(
        [encode_med(m, years_between(m.time, reference), scaler) for m in record.meds]
    ).reshape(-1, W_MED)
    return visits, meds
