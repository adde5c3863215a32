"""Patient, visit and medication records, their line-delimited JSON format, and validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable

DAYS_PER_YEAR = 365.25
DEFAULT_EPOCH = date(1900, 1, 1)

VISIT_NUMERIC = (
    "minimal_disease_activity",
    "number_swollen_joints",
    "number_painful_joints",
    "bsr",
    "das28bsr_score",
    "pain_level",
    "disease_activity_index",
    "haq_score",
    "weight_kg",
    "height_cm",
    "crp",
)
MORNING_STIFFNESS = ("all_day", "<0.5h", "0.5-1h", ">4h", "12h", "24h", "no")
SMOKER = ("current", "former", "never")

DRUGS = (
    "dmard_mtx",
    "prednison",
    "adalimumab",
    "etanercept",
    "tocilizumab",
    "abatacept",
    "rituximab",
    "golimumab",
    "other",
)
MED_TYPES = ("prednison", "dmard", "biologic", "other")
DOSES = ("no", "<10mg", "10-15mg", ">15mg")

GENDERS = ("male", "female")
TRISTATE = ("yes", "no")


class RecordFormatError(ValueError):
    """A record line could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class PatientStatic:
    age: float
    gender: str
    disease_duration: float | None = None
    rheumatoid_factor: str | None = None
    anti_ccp: str | None = None


@dataclass(frozen=True)
class VisitEvent:
    time: date
    minimal_disease_activity: float | None = None
    number_swollen_joints: float | None = None
    number_painful_joints: float | None = None
    bsr: float | None = None
    das28bsr_score: float | None = None
    pain_level: float | None = None
    disease_activity_index: float | None = None
    haq_score: float | None = None
    weight_kg: float | None = None
    height_cm: float | None = None
    crp: float | None = None
    morning_stiffness: str | None = None
    smoker: str | None = None

    @property
    def score(self):
        return self.das28bsr_score


@dataclass(frozen=True)
class MedicationEvent:
    time: date
    drug: str
    med_type: str
    dose: str | None = None


@dataclass(frozen=True)
class PatientRecord:
    id: str
    static: PatientStatic
    visits: tuple[VisitEvent, ...] = field(default_factory=tuple)
    meds: tuple[MedicationEvent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(self.visits))
        object.__setattr__(self, "meds", tuple(self.meds))


def day_number(d: date) -> int:
    """Days since :data:`DEFAULT_EPOCH`; the internal time axis."""
    return (d - DEFAULT_EPOCH).days


def years_between(earlier: date | int, later: date | int) -> float:
    if isinstance(earlier, date):
        earlier = day_number(earlier)
    if isinstance(later, date):
        later = day_number(later)
    return (later - earlier) / DAYS_PER_YEAR


def _check_number(value, name, violations, minimum=0.0):
    if value is None:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        violations.append(f"{name}: not a finite number ({value!r})")
    elif value < minimum:
        violations.append(f"{name}: must be >= {minimum:g}, got {value!r}")


def _check_choice(value, name, choices, violations, optional=True):
    if value is None and optional:
        return
    if value not in choices:
        violations.append(f"{name}: {value!r} not one of {list(choices)}")


def validate_record(record: PatientRecord, epoch: date = DEFAULT_EPOCH) -> list[str]:
    """Return every invariant violation of ``record``; empty means valid."""
    violations: list[str] = []
    s = record.static
    if not isinstance(record.id, str) or not record.id:
        violations.append("id: must be a non-empty string")
    _check_number(s.age, "patient.age", violations)
    if s.age is None:
        violations.append("patient.age: required")
    _check_number(s.disease_duration, "patient.disease_duration", violations)
    _check_choice(s.gender, "patient.gender", GENDERS, violations, optional=False)
    _check_choice(s.rheumatoid_factor, "patient.rheumatoid_factor", TRISTATE, violations)
    _check_choice(s.anti_ccp, "patient.anti_ccp", TRISTATE, violations)

    for kind, events in (("visits", record.visits), ("meds", record.meds)):
        times = [e.time for e in events]
        for k, t in enumerate(times):
            if not isinstance(t, date):
                violations.append(f"{kind}[{k}].time: not a date ({t!r})")
            elif t < epoch:
                violations.append(f"{kind}[{k}].time: {t.isoformat()} before epoch {epoch}")
        if all(isinstance(t, date) for t in times) and any(
            b < a for a, b in zip(times, times[1:])
        ):
            violations.append(f"{kind}: not time-ordered")

    for k, v in enumerate(record.visits):
        for name in VISIT_NUMERIC:
            _check_number(getattr(v, name), f"visits[{k}].{name}", violations)
        _check_choice(v.morning_stiffness, f"visits[{k}].morning_stiffness", MORNING_STIFFNESS, violations)
        _check_choice(v.smoker, f"visits[{k}].smoker", SMOKER, violations)
    for k, m in enumerate(record.meds):
        _check_choice(m.drug, f"meds[{k}].drug", DRUGS, violations, optional=False)
        _check_choice(m.med_type, f"meds[{k}].med_type", MED_TYPES, violations, optional=False)
        _check_choice(m.dose, f"meds[{k}].dose", DOSES, violations)
    return violations


# --- line-delimited JSON ---------------------------------------------------

_STATIC_KEYS = {"age", "disease_duration", "gender", "rheumatoid_factor", "anti_ccp"}
_VISIT_KEYS = {"date", *VISIT_NUMERIC, "morning_stiffness", "smoker"}
_MED_KEYS = {"date", "drug", "med_type", "dose"}
_RECORD_KEYS = {"id", "patient", "visits", "medications"}


def _parse_date(value, where):
    try:
        return date.fromisoformat(value)
    except (TypeError, ValueError):
        raise RecordFormatError(f"{where}: invalid ISO-8601 date {value!r}") from None


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise RecordFormatError(f"{where}: expected an object")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise RecordFormatError(f"{where}: unknown field(s) {extra}")


def record_from_dict(obj: dict) -> PatientRecord:
    _reject_unknown(obj, _RECORD_KEYS, "record")
    if "id" not in obj or "patient" not in obj:
        raise RecordFormatError("record: 'id' and 'patient' are required")
    p = obj["patient"]
    _reject_unknown(p, _STATIC_KEYS, "patient")
    static = PatientStatic(
        age=p.get("age"),
        gender=p.get("gender"),
        disease_duration=p.get("disease_duration"),
        rheumatoid_factor=p.get("rheumatoid_factor"),
        anti_ccp=p.get("anti_ccp"),
    )
    visits = []
    for k, v in enumerate(obj.get("visits") or []):
        _reject_unknown(v, _VISIT_KEYS, f"visits[{k}]")
        fields = {name: v.get(name) for name in _VISIT_KEYS if name != "date"}
        visits.append(VisitEvent(time=_parse_date(v.get("date"), f"visits[{k}].date"), **fields))
    meds = []
    for k, m in enumerate(obj.get("medications") or []):
        _reject_unknown(m, _MED_KEYS, f"medications[{k}]")
        meds.append(
            MedicationEvent(
                time=_parse_date(m.get("date"), f"medications[{k}].date"),
                drug=m.get("drug"),
                med_type=m.get("med_type"),
                dose=m.get("dose"),
            )
        )
    return PatientRecord(str(obj["id"]), static, tuple(visits), tuple(meds))


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None}


def record_to_dict(record: PatientRecord) -> dict:
    s = record.static
    visits = []
    for v in record.visits:
        row = {"date": v.time.isoformat()}
        row.update({name: getattr(v, name) for name in VISIT_NUMERIC})
        row["morning_stiffness"] = v.morning_stiffness
        row["smoker"] = v.smoker
        visits.append(_drop_none(row))
    meds = [
        _drop_none({"date": m.time.isoformat(), "drug": m.drug, "med_type": m.med_type, "dose": m.dose})
        for m in record.meds
    ]
    return {
        "id": record.id,
        "patient": _drop_none(
            {
                "age": s.age,
                "disease_duration": s.disease_duration,
                "gender": s.gender,
                "rheumatoid_factor": s.rheumatoid_factor,
                "anti_ccp": s.anti_ccp,
            }
        ),
        "visits": visits,
        "medications": meds,
    }


def parse_records(lines: Iterable[str]) -> list[PatientRecord]:
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"malformed JSON ({exc.msg})", lineno) from None
        try:
            records.append(record_from_dict(obj))
        except RecordFormatError as exc:
            raise RecordFormatError(str(exc), lineno) from None
    return records


def read_records(path) -> list[PatientRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_records(fh)


def dumps_records(records: Iterable[PatientRecord]) -> str:
    return "".join(json.dumps(record_to_dict(r), sort_keys=True) + "\n" for r in records)


def write_records(records: Iterable[PatientRecord], path) -> None:
    Path(path).write_text(dumps_records(records), encoding="utf-8")
