"""Turning patient records into supervised samples, and padding them for fixed-input models.

A sample is anchored at a visit ``t`` with a present score and targets a
later visit ``t'`` with a present score, provided no medication adjustment
happened in ``[t, t']`` (both ends inclusive) and the horizon ``t' - t``
lies within the configured bounds.  Its inputs are the events dated in
``(t - max_history, t]``, each carrying ``delta_t = t' - t_event``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from .autodiff import ContractError
from .encoding import (
    W_MED,
    W_PATIENT,
    W_VISIT,
    FeatureScaler,
    encode_med,
    encode_patient,
    encode_visit,
    MED_SLOTS,
    PATIENT_SLOTS,
    VISIT_SLOTS,
)
from .records import DAYS_PER_YEAR, DEFAULT_EPOCH, PatientRecord, day_number, validate_record


@dataclass(frozen=True)
class SamplingConfig:
    max_history: float = 5.0
    min_horizon: float = 0.25
    max_horizon: float = 1.0
    min_visits: int = 3

    def __post_init__(self):
        if not 0 < self.min_horizon <= self.max_horizon:
            raise ValueError("need 0 < min_horizon <= max_horizon")
        if not self.max_history > 0:
            raise ValueError("max_history must be positive")
        if self.min_visits < 0:
            raise ValueError("min_visits must be >= 0")


@dataclass
class StructuredSample:
    """One (inputs, delta_t, label) instance.

    Event times are day numbers; event feature rows already carry their
    scaled ``delta_t`` in the last column.  ``anchor_day``/``target_day`` are
    the day numbers of ``t`` and ``t'``.
    """

    patient_id: str
    anchor_day: int
    target_day: int
    patient_vec: np.ndarray
    visit_times: np.ndarray
    visit_features: np.ndarray
    med_times: np.ndarray
    med_features: np.ndarray
    delta_t: float
    label: float
    current_score: float
    meta: dict = field(default_factory=dict)

    @property
    def n_visits(self):
        return len(self.visit_times)

    @property
    def n_meds(self):
        return len(self.med_times)


@dataclass
class FlatSample:
    features: np.ndarray
    label: float


def truncate_history(events, t, max_history, time_of=None):
    """Keep events with time in ``(t - max_history, t]`` (years), in order.

    ``time_of`` maps an event to its day number; the default accepts objects
    with a ``time`` date attribute or plain day numbers.
    """
    if time_of is None:
        def time_of(e):
            return day_number(e.time) if hasattr(e, "time") else e
    kept = []
    for e in events:
        age = (t - time_of(e)) / DAYS_PER_YEAR
        if 0 <= age < max_history:
            kept.append(e)
    return kept


def _history_mask(times: np.ndarray, t: int, max_history: float) -> np.ndarray:
    age = (t - times) / DAYS_PER_YEAR
    return (age >= 0) & (age < max_history)


@dataclass
class _EncodedRecord:
    patient_vec: np.ndarray
    visit_days: np.ndarray
    visit_base: np.ndarray
    med_days: np.ndarray
    med_base: np.ndarray


def _encode_record(record: PatientRecord, scaler: FeatureScaler) -> _EncodedRecord:
    # delta_t column is filled per sample
    visit_base = np.array([encode_visit(v, 0.0, scaler) for v in record.visits]).reshape(-1, W_VISIT)
    med_base = np.array([encode_med(m, 0.0, scaler) for m in record.meds]).reshape(-1, W_MED)
    return _EncodedRecord(
        encode_patient(record.static, scaler),
        np.array([day_number(v.time) for v in record.visits], dtype=np.int64),
        visit_base,
        np.array([day_number(m.time) for m in record.meds], dtype=np.int64),
        med_base,
    )


def sample_pairs(record: PatientRecord, cfg: SamplingConfig) -> list[tuple[int, int]]:
    """Return ``(anchor_visit_index, target_visit_index)`` pairs ordered by ``t`` then ``t'``.

    Visits are time-ordered, so the nested loops already emit that order.
    """
    scored = [k for k, v in enumerate(record.visits) if v.score is not None]
    if len(scored) < cfg.min_visits:
        return []
    med_days = np.array([day_number(m.time) for m in record.meds], dtype=np.int64)
    days = [day_number(record.visits[k].time) for k in scored]
    pairs = []
    for a, t in zip(scored, days):
        for b, t2 in zip(scored, days):
            if t2 <= t:
                continue
            if np.any((med_days >= t) & (med_days <= t2)):
                continue
            horizon = (t2 - t) / DAYS_PER_YEAR
            if cfg.min_horizon <= horizon <= cfg.max_horizon:
                pairs.append((a, b))
    return pairs


def generate_samples(
    records: list[PatientRecord], cfg: SamplingConfig, scaler: FeatureScaler
) -> list[StructuredSample]:
    """Enumerate every anchored sample of every record; ordered by id, ``t``, ``t'``."""
    samples = []
    for record in sorted(records, key=lambda r: r.id):
        problems = validate_record(record)
        if problems:
            raise ContractError(f"record {record.id!r} is invalid: {'; '.join(problems)}")
        pairs = sample_pairs(record, cfg)
        if not pairs:
            continue
        enc = _encode_record(record, scaler)
        for a, b in pairs:
            t, t2 = int(enc.visit_days[a]), int(enc.visit_days[b])
            vmask = _history_mask(enc.visit_days, t, cfg.max_history)
            mmask = _history_mask(enc.med_days, t, cfg.max_history)
            vt, mt = enc.visit_days[vmask], enc.med_days[mmask]
            vf, mf = enc.visit_base[vmask].copy(), enc.med_base[mmask].copy()
            vf[:, -1] = scaler.scale_array("delta_t", (t2 - vt) / DAYS_PER_YEAR)
            mf[:, -1] = scaler.scale_array("delta_t", (t2 - mt) / DAYS_PER_YEAR)
            s0, s1 = record.visits[a].score, record.visits[b].score
            samples.append(
                StructuredSample(
                    patient_id=record.id,
                    anchor_day=t,
                    target_day=t2,
                    patient_vec=enc.patient_vec.copy(),
                    visit_times=vt,
                    visit_features=vf,
                    med_times=mt,
                    med_features=mf,
                    delta_t=(t2 - t) / DAYS_PER_YEAR,
                    label=float(s1 - s0),
                    current_score=float(s0),
                )
            )
    return samples


def max_event_counts(samples) -> tuple[int, int]:
    n = max((s.n_visits for s in samples), default=0)
    m = max((s.n_meds for s in samples), default=0)
    return n, m


def flat_width(n_max: int, m_max: int) -> int:
    return W_PATIENT + n_max * W_VISIT + m_max * W_MED


def flat_header(n_max: int, m_max: int) -> list[str]:
    header = [f"patient.{s}" for s in PATIENT_SLOTS]
    header += [f"visit{k}.{s}" for k in range(n_max) for s in VISIT_SLOTS]
    header += [f"med{k}.{s}" for k in range(m_max) for s in MED_SLOTS]
    return header


def flatten_features(samples, n_max: int, m_max: int, truncate: bool = False) -> np.ndarray:
    """Padded matrix, one row per sample; events most-recent-first, absent slots ``-1``.

    With ``truncate=True`` the oldest events beyond ``n_max``/``m_max`` are
    dropped instead of raising.
    """
    X = np.full((len(samples), flat_width(n_max, m_max)), -1.0)
    v0 = W_PATIENT
    m0 = W_PATIENT + n_max * W_VISIT
    for row, s in enumerate(samples):
        if not truncate and (s.n_visits > n_max or s.n_meds > m_max):
            raise ContractError(
                f"sample of {s.patient_id!r} has {s.n_visits} visits / {s.n_meds} meds, "
                f"exceeding n_max={n_max} / m_max={m_max}"
            )
        X[row, :W_PATIENT] = s.patient_vec
        # stable sort keeps input order among same-day events before reversing
        vis = np.argsort(s.visit_times, kind="stable")[::-1][:n_max]
        med = np.argsort(s.med_times, kind="stable")[::-1][:m_max]
        if len(vis):
            X[row, v0 : v0 + len(vis) * W_VISIT] = s.visit_features[vis].reshape(-1)
        if len(med):
            X[row, m0 : m0 + len(med) * W_MED] = s.med_features[med].reshape(-1)
    return X


def flatten(samples, n_max: int, m_max: int, truncate: bool = False) -> list[FlatSample]:
    X = flatten_features(samples, n_max, m_max, truncate)
    return [FlatSample(x, s.label) for x, s in zip(X, samples)]


def _iso(day: int) -> str:
    return (DEFAULT_EPOCH + timedelta(days=int(day))).isoformat()


def sample_to_dict(s: StructuredSample) -> dict:
    """JSON-ready form; event rows carry the encoded features, delta_t last."""
    return {
        "patient_id": s.patient_id,
        "anchor_date": _iso(s.anchor_day),
        "target_date": _iso(s.target_day),
        "delta_t": s.delta_t,
        "label": s.label,
        "current_score": s.current_score,
        "patient": [float(x) for x in s.patient_vec],
        "visits": [
            {"date": _iso(t), "x": [float(x) for x in row]} for t, row in zip(s.visit_times, s.visit_features)
        ],
        "medications": [
            {"date": _iso(t), "x": [float(x) for x in row]} for t, row in zip(s.med_times, s.med_features)
        ],
    }


def dumps_samples(samples) -> str:
    return "".join(json.dumps(sample_to_dict(s), sort_keys=True, separators=(",", ":")) + "\n" for s in samples)
