"""Synthetic cohorts with a closed-form disease-progression law.

Each patient has a latent activity curve (time ``u`` in years since the
first visit)::

    mu(u) = mu0 + drift * u + sum_{meds m, u_m <= u} E_m * (1 - exp(-(u - u_m) / D))

with ``D = 2`` years, ``E_m = TYPE_EFFECT[med_type] * DOSE_FACTOR[dose]`` and
``drift = 0.1 + 0.3 [rf=yes] + 0.2 [anti_ccp=yes] - 0.01 (age - 58.8)``.
A visit at ``u`` records ``disease_activity_index = clip(mu(u), 0, 10)`` and
``das28bsr_score = clip(mu(u) + noise, 0, 10)`` with Gaussian noise of
standard deviation ``noise_sigma``.  The expected score change from an
anchor visit ``t`` to a follow-up ``t'`` is therefore::

    law(t, t') = clip(mu(t'), 0, 10) - das28bsr_score(t)

which the history reveals: the anchor's activity index gives ``mu(t)``,
the static features give the drift, and medication events give the
remaining (slowly decaying) treatment effect.  Medications older than a
year still matter, so longer histories carry signal.  When the target score
is not clipped, ``label - law`` is exactly the target visit's noise, so the
irreducible MSE is ``noise_sigma ** 2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta

import numpy as np

from .records import (
    DAYS_PER_YEAR,
    MORNING_STIFFNESS,
    MedicationEvent,
    PatientRecord,
    PatientStatic,
    VisitEvent,
    day_number,
)

DECAY_YEARS = 2.0
TYPE_EFFECT = {"prednison": -1.6, "dmard": -2.4, "biologic": -3.2, "other": -0.8}
DOSE_FACTOR = {"no": -0.5, "<10mg": 0.6, "10-15mg": 1.0, ">15mg": 1.3}
ESCALATION_THRESHOLD = 3.2
BIOLOGICS = ("adalimumab", "etanercept", "tocilizumab", "abatacept", "rituximab", "golimumab")

# Missing fractions per visit field in the reference registry.
REGISTRY_MISSING_RATES = {
    "minimal_disease_activity": 0.016,
    "number_swollen_joints": 0.066,
    "number_painful_joints": 0.069,
    "bsr": 0.146,
    "das28bsr_score": 0.164,
    "pain_level": 0.224,
    "disease_activity_index": 0.227,
    "haq_score": 0.278,
    "weight_kg": 0.365,
    "height_cm": 0.408,
    "crp": 0.454,
    "morning_stiffness": 0.227,
    "smoker": 0.602,
    "disease_duration": 0.027,
    "rheumatoid_factor": 0.091,
    "anti_ccp": 0.316,
}

_PATIENT_MISSABLE = ("disease_duration", "rheumatoid_factor", "anti_ccp")


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 1000
    visits_per_year: float = 2.0
    med_adjust_rate: float = 0.5
    noise_sigma: float = 0.5
    seed: int = 0
    horizon_years: float = 6.0
    missing_rates: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValueError("n_patients must be >= 1")
        if not (self.visits_per_year > 0 and self.med_adjust_rate > 0):
            raise ValueError("event rates must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.horizon_years > 0:
            raise ValueError("horizon_years must be positive")
        for name, rate in self.missing_rates.items():
            if name not in REGISTRY_MISSING_RATES:
                raise ValueError(f"unknown missing-rate field {name!r}")
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"missing rate for {name} must lie in [0, 1]")

    @classmethod
    def registry_scale(cls, **overrides):
        """Event rates giving about 6.3 visits and 2.5 adjustments per 5 years,
        with the registry's missingness.  The first visit is always present,
        so the Poisson rate covers the remaining 5.3."""
        base = dict(
            visits_per_year=5.3 / 5.0,
            med_adjust_rate=2.5 / 5.0,
            horizon_years=5.0,
            missing_rates=dict(REGISTRY_MISSING_RATES),
        )
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class PatientLatent:
    initial_activity: float
    drift: float
    start_day: int


@dataclass
class GroundTruth:
    noise_sigma: float
    patients: dict[str, PatientLatent]

    def activity(self, record: PatientRecord, day: int) -> float:
        """Unclipped latent activity ``mu`` at ``day``."""
        lat = self.patients[record.id]
        u = (day - lat.start_day) / DAYS_PER_YEAR
        mu = lat.initial_activity + lat.drift * u
        for m in record.meds:
            um = (day_number(m.time) - lat.start_day) / DAYS_PER_YEAR
            if um <= u:
                mu += medication_effect(m.med_type, m.dose) * (1.0 - math.exp(-(u - um) / DECAY_YEARS))
        return mu

    def expected_change(self, record: PatientRecord, anchor_day: int, target_day: int) -> float:
        anchor = next(v for v in record.visits if day_number(v.time) == anchor_day and v.score is not None)
        return min(max(self.activity(record, target_day), 0.0), 10.0) - anchor.score

    def to_dict(self):
        return {
            "law": {
                "decay_years": DECAY_YEARS,
                "type_effect": TYPE_EFFECT,
                "dose_factor": DOSE_FACTOR,
                "drift": "0.1 + 0.3*[rf=yes] + 0.2*[anti_ccp=yes] - 0.01*(age - 58.8)",
            },
            "noise_sigma": self.noise_sigma,
            "patients": {pid: asdict(lat) for pid, lat in sorted(self.patients.items())},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["noise_sigma"], {pid: PatientLatent(**v) for pid, v in d["patients"].items()})

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def medication_effect(med_type: str, dose: str | None) -> float:
    return TYPE_EFFECT[med_type] * DOSE_FACTOR.get(dose, 1.0)


def _drift(age, rf, accp):
    return 0.1 + 0.3 * (rf == "yes") + 0.2 * (accp == "yes") - 0.01 * (age - 58.8)


def _poisson_days(rng, rate, horizon_years):
    days, u = [], 0.0
    while True:
        u += rng.exponential(1.0 / rate)
        if u > horizon_years:
            return days
        days.append(int(round(u * DAYS_PER_YEAR)))


def _choose(rng, options, probs):
    return options[int(rng.choice(len(options), p=probs))]


def _generate_patient(k: int, cfg: SynthConfig, rng: np.random.Generator):
    miss = cfg.missing_rates

    def missing(name):
        rate = miss.get(name, 0.0)
        return rate > 0 and rng.random() < rate

    age = round(float(np.clip(rng.normal(58.8, 13.0), 18.0, 95.0)), 1)
    gender = "female" if rng.random() < 0.74 else "male"
    duration = round(float(np.clip(rng.normal(12.2, 9.5), 0.0, 60.0)), 1)
    rf = "yes" if rng.random() < 0.69 else "no"
    accp = "yes" if rng.random() < 0.62 else "no"
    smoker = _choose(rng, ("current", "former", "never"), (0.234, 0.309, 0.457))
    weight = float(np.clip(rng.normal(70.7, 15.6), 35.0, 180.0))
    height = float(np.clip(rng.normal(165.3, 12.2), 130.0, 210.0))
    start = date(2005, 1, 1) + timedelta(days=int(rng.integers(0, 3650)))
    start_day = day_number(start)

    latent = PatientLatent(
        initial_activity=float(rng.uniform(2.5, 6.0)),
        drift=_drift(age, rf, accp),
        start_day=start_day,
    )

    visit_days = sorted(set([0] + _poisson_days(rng, cfg.visits_per_year, cfg.horizon_years)))
    med_days = sorted(set(_poisson_days(rng, cfg.med_adjust_rate, cfg.horizon_years)))

    def mu_at(day, meds):
        u = day / DAYS_PER_YEAR
        mu = latent.initial_activity + latent.drift * u
        for mday, effect in meds:
            if mday <= day:
                mu += effect * (1.0 - math.exp(-(day - mday) / DAYS_PER_YEAR / DECAY_YEARS))
        return mu

    meds, effects = [], []
    for mday in med_days:
        if mu_at(mday, effects) >= ESCALATION_THRESHOLD:
            med_type = _choose(rng, ("prednison", "dmard", "biologic", "other"), (0.25, 0.3, 0.35, 0.1))
            dose = _choose(rng, ("<10mg", "10-15mg", ">15mg"), (0.2, 0.3, 0.5))
        else:
            med_type = _choose(rng, ("prednison", "dmard", "biologic", "other"), (0.3, 0.3, 0.3, 0.1))
            dose = "no" if rng.random() < 0.8 else "<10mg"
        drug = {
            "prednison": "prednison",
            "dmard": "dmard_mtx",
            "other": "other",
        }.get(med_type) or BIOLOGICS[int(rng.integers(len(BIOLOGICS)))]
        effects.append((mday, medication_effect(med_type, dose)))
        meds.append(MedicationEvent(start + timedelta(days=mday), drug, med_type, dose))

    visits = []
    for vday in visit_days:
        mu = mu_at(vday, effects)
        active = max(mu, 0.0)
        fields = {
            "minimal_disease_activity": float(np.clip(round(active / 2.5 + rng.normal(0, 0.5)), 0, 4)),
            "number_swollen_joints": float(rng.poisson(1.2 * max(mu - 2.0, 0.0))),
            "number_painful_joints": float(rng.poisson(1.4 * max(mu - 1.8, 0.0))),
            "bsr": float(np.exp(rng.normal(2.2 + 0.2 * active, 0.4))),
            "das28bsr_score": float(np.clip(mu + rng.normal(0.0, cfg.noise_sigma), 0.0, 10.0))
            if cfg.noise_sigma > 0
            else float(np.clip(mu, 0.0, 10.0)),
            "pain_level": float(np.clip(active + rng.normal(0.0, 1.0), 0.0, 10.0)),
            "disease_activity_index": float(np.clip(mu, 0.0, 10.0)),
            "haq_score": float(np.clip(0.2 * active + rng.normal(0.0, 0.3), 0.0, 3.0)),
            "weight_kg": round(weight + float(rng.normal(0.0, 1.0)), 1),
            "height_cm": round(height, 1),
            "crp": float(np.exp(rng.normal(0.8 + 0.25 * active, 0.8))),
            "morning_stiffness": _stiffness(rng, mu),
            "smoker": smoker,
        }
        for name in fields:
            if missing(name):
                fields[name] = None
        visits.append(VisitEvent(time=start + timedelta(days=vday), **fields))

    static = {"disease_duration": duration, "rheumatoid_factor": rf, "anti_ccp": accp}
    for name in _PATIENT_MISSABLE:
        if missing(name):
            static[name] = None
    record = PatientRecord(
        id=f"P{k:06d}",
        static=PatientStatic(age=age, gender=gender, **static),
        visits=tuple(visits),
        meds=tuple(meds),
    )
    return record, latent


def _stiffness(rng, mu):
    # more activity shifts mass toward longer stiffness
    if mu < 2.6:
        return "no" if rng.random() < 0.7 else "<0.5h"
    idx = min(int(rng.poisson(max(mu - 2.0, 0.1))), len(MORNING_STIFFNESS) - 2)
    order = ("<0.5h", "0.5-1h", ">4h", "12h", "24h", "all_day")
    return order[min(idx, len(order) - 1)]


def generate_cohort(cfg: SynthConfig) -> tuple[list[PatientRecord], GroundTruth]:
    """Generate ``cfg.n_patients`` records; each patient draws from its own child seed."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_patients)
    records, latents = [], {}
    for k, ss in enumerate(seeds):
        record, latent = _generate_patient(k, cfg, np.random.default_rng(ss))
        records.append(record)
        latents[record.id] = latent
    return records, GroundTruth(cfg.noise_sigma, latents)


@dataclass
class BayesReport:
    noise_variance: float
    ground_truth_mse: float
    n_samples: int


def bayes_mse(cohort, ground_truth: GroundTruth, samples) -> BayesReport:
    """Irreducible error ``noise_sigma**2`` and the ground-truth predictor's MSE on ``samples``."""
    by_id = {r.id: r for r in cohort}
    if not samples:
        return BayesReport(ground_truth.noise_sigma**2, 0.0, 0)
    errs = [
        (s.label - ground_truth.expected_change(by_id[s.patient_id], s.anchor_day, s.target_day)) ** 2
        for s in samples
    ]
    return BayesReport(ground_truth.noise_sigma**2, float(np.mean(errs)), len(errs))


def cohort_summary(records: list[PatientRecord], window_years: float = 5.0) -> dict:
    """Mean visit and medication counts within the first ``window_years`` of each record."""
    nv, nm = [], []
    for r in records:
        if not r.visits:
            continue
        start = day_number(r.visits[0].time)
        limit = start + window_years * DAYS_PER_YEAR
        nv.append(sum(1 for v in r.visits if day_number(v.time) <= limit))
        nm.append(sum(1 for m in r.meds if day_number(m.time) <= limit))
    return {
        "n_patients": len(records),
        "window_years": window_years,
        "mean_visits": float(np.mean(nv)) if nv else 0.0,
        "std_visits": float(np.std(nv)) if nv else 0.0,
        "mean_meds": float(np.mean(nm)) if nm else 0.0,
        "std_meds": float(np.std(nm)) if nm else 0.0,
    }
