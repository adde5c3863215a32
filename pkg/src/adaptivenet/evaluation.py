"""Metrics, patient-level cross-validation, history sweeps and latent-space export."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import ContractError
from .encoding import FeatureScaler
from .records import PatientRecord
from .sampling import SamplingConfig, generate_samples

log = logging.getLogger(__name__)

REMISSION_THRESHOLD = 2.6
METRICS_HEADER = ("history_years", "fold", "n_samples", "mse", "accuracy", "auc")


def mse(predictions, labels) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("mse of an empty set is undefined")
    return float(np.mean((p - y) ** 2))


def in_remission(score) -> np.ndarray:
    """Remission iff strictly below 2.6; a score of exactly 2.6 counts as active disease."""
    return np.asarray(score, dtype=np.float64) < REMISSION_THRESHOLD


def roc_auc(scores, positive) -> float | None:
    """Probability that a random positive outranks a random negative, ties counting one half.

    ``None`` when only one class is present.
    """
    positive = np.asarray(positive, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != positive.shape:
        raise ValueError(f"shape mismatch: {scores.shape} vs {positive.shape}")
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    # Mann-Whitney U from mid-ranks.  Every term is a half-integer, so the
    # numerator is exact and the one division rounds like a pair count would.
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    below = np.cumsum(counts) - counts
    midrank = below + (counts + 1) / 2.0
    u = midrank[inverse][positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classify_and_score(predicted_change, current_scores, labels) -> tuple[float, float | None]:
    """Remission accuracy and AUC of ``f_abs = current + predicted change``.

    The true class comes from the true future score ``current + label``.
    AUC ranks active disease (the class predicted by high ``f_abs``).
    """
    current = np.asarray(current_scores, dtype=np.float64)
    f_abs = current + np.asarray(predicted_change, dtype=np.float64)
    truth = in_remission(current + np.asarray(labels, dtype=np.float64))
    if f_abs.shape != truth.shape or f_abs.size == 0:
        raise ValueError("need equally sized, non-empty prediction and label arrays")
    accuracy = float(np.mean(in_remission(f_abs) == truth))
    return accuracy, roc_auc(f_abs, ~truth)


@dataclass(frozen=True)
class EvalReport:
    history_years: float
    fold: str
    n_samples: int
    mse: float
    accuracy: float
    auc: float | None

    def row(self):
        auc = "" if self.auc is None else repr(self.auc)
        return [repr(self.history_years), self.fold, str(self.n_samples), repr(self.mse), repr(self.accuracy), auc]


def score_predictions(history_years, fold, predictions, samples) -> EvalReport:
    labels = np.array([s.label for s in samples])
    current = np.array([s.current_score for s in samples])
    acc, auc = classify_and_score(predictions, current, labels)
    return EvalReport(float(history_years), str(fold), len(samples), mse(predictions, labels), acc, auc)


def write_metrics_csv(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in reports:
            w.writerow(r.row())


def read_metrics_csv(path) -> list[EvalReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EvalReport(
            float(r["history_years"]),
            r["fold"],
            int(r["n_samples"]),
            float(r["mse"]),
            float(r["accuracy"]),
            float(r["auc"]) if r["auc"] else None,
        )
        for r in rows
    ]


def write_loss_trace(trace: Sequence[float], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "train_loss"))
        for step, loss in enumerate(trace):
            w.writerow((step, repr(float(loss))))


def patient_folds(patient_ids: Sequence[str], k: int = 5, seed: int = 0) -> list[list[str]]:
    """Shuffle unique ids with ``seed`` and deal them round-robin into ``k`` disjoint folds."""
    ids = sorted(set(patient_ids))
    if k < 2:
        raise ValueError("need at least 2 folds")
    if len(ids) < k:
        raise ValueError(f"{len(ids)} patients cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(len(ids))
    folds = [[] for _ in range(k)]
    for pos, i in enumerate(perm):
        folds[pos % k].append(ids[i])
    return [sorted(f) for f in folds]


@dataclass
class FoldResult:
    report: EvalReport
    train_ids: list[str]
    val_ids: list[str]
    predictions: np.ndarray
    labels: np.ndarray
    current_scores: np.ndarray
    loss_trace: list[float]


def _run_fold(records, train_ids, val_ids, factory, cfg, fold_name, max_horizon):
    train_set = set(train_ids)
    train_recs = [r for r in records if r.id in train_set]
    val_recs = [r for r in records if r.id not in train_set]
    scaler = FeatureScaler(max_horizon=max_horizon).fit(train_recs)
    train_samples = generate_samples(train_recs, cfg, scaler)
    val_samples = generate_samples(val_recs, cfg, scaler)
    if not val_samples:
        raise ContractError(f"fold {fold_name} has no validation samples")
    if not train_samples:
        raise ContractError(f"fold {fold_name} has no training samples")
    est = factory()
    est.fit(train_samples)
    pred = np.asarray(est.predict(val_samples), dtype=np.float64)
    report = score_predictions(cfg.max_history, fold_name, pred, val_samples)
    return FoldResult(
        report,
        sorted(train_set),
        sorted(val_ids),
        pred,
        np.array([s.label for s in val_samples]),
        np.array([s.current_score for s in val_samples]),
        list(getattr(est, "loss_trace_", [])),
    )


def aggregate(results: Sequence[FoldResult], history_years: float) -> EvalReport:
    """Pooled report over all folds; its MSE is the sample-weighted mean of fold MSEs."""
    pred = np.concatenate([r.predictions for r in results])
    labels = np.concatenate([r.labels for r in results])
    current = np.concatenate([r.current_scores for r in results])
    acc, auc = classify_and_score(pred, current, labels)
    return EvalReport(float(history_years), "mean", len(labels), mse(pred, labels), acc, auc)


def crossvalidate(
    records: Sequence[PatientRecord],
    model_factory: Callable[[], object],
    cfg: SamplingConfig,
    k: int = 5,
    seed: int = 0,
) -> tuple[list[EvalReport], list[FoldResult]]:
    """Patient-level k-fold cross-validation.

    Each fold fits the scaler and generates samples from its own training
    patients only, trains a fresh estimator from ``model_factory`` and scores
    the held-out patients.  Returns the ``k`` fold reports followed by the
    pooled ``"mean"`` report, plus the raw per-fold results.
    """
    folds = patient_folds([r.id for r in records], k, seed)
    results = []
    for i, val_ids in enumerate(folds):
        held = set(val_ids)
        train_ids = [r.id for r in records if r.id not in held]
        results.append(_run_fold(records, train_ids, val_ids, model_factory, cfg, str(i), cfg.max_horizon))
        log.info("fold %d: mse %.4f on %d samples", i, results[-1].report.mse, results[-1].report.n_samples)
    reports = [r.report for r in results]
    return reports + [aggregate(results, cfg.max_history)], results


def history_sweep(
    records: Sequence[PatientRecord],
    model_factory: Callable[[], object],
    cfg: SamplingConfig,
    history_lengths: Sequence[float],
    k: int = 5,
    seed: int = 0,
) -> list[EvalReport]:
    """Cross-validate once per history length with identical folds and seeds."""
    from dataclasses import replace

    reports = []
    for h in history_lengths:
        rep, _ = crossvalidate(records, model_factory, replace(cfg, max_history=float(h)), k, seed)
        reports.extend(rep)
    return reports


def _latent_rows(model, samples):
    tags, blocks = [], []
    for s in samples:
        if s.n_visits:
            zv, _ = model.encode(np.asarray(s.visit_features), np.zeros((0, model.med_dim)))
            blocks.append(zv.value)
            tags += ["visit"] * s.n_visits
        if s.n_meds:
            _, zm = model.encode(np.zeros((0, model.visit_dim)), np.asarray(s.med_features))
            blocks.append(zm.value)
            tags += ["med"] * s.n_meds
    F = model.latent_dim
    return tags, (np.vstack(blocks) if blocks else np.zeros((0, F)))


def export_latents(model, samples, path=None) -> tuple[list[str], np.ndarray]:
    """Encoder outputs of every event of every sample, tagged ``visit`` or ``med``.

    Writes a CSV with columns ``type, z0 .. z{F-1}`` when ``path`` is given.
    """
    tags, Z = _latent_rows(model, samples)
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["type"] + [f"z{j}" for j in range(Z.shape[1])])
            for tag, z in zip(tags, Z):
                w.writerow([tag] + [repr(float(v)) for v in z])
    return tags, Z


def latent_separability(tags, latents, holdout: float = 0.3, seed: int = 0) -> float:
    """Held-out accuracy of a least-squares linear classifier for visit vs med latents."""
    Z = np.asarray(latents, dtype=np.float64)
    y = np.where(np.asarray(tags) == "visit", 1.0, -1.0)
    if len(y) != len(Z) or len(y) < 4:
        raise ValueError("need at least 4 tagged latent vectors")
    if np.all(y == y[0]):
        raise ValueError("separability needs both visit and med latents")
    perm = np.random.default_rng(seed).permutation(len(y))
    n_test = max(1, int(round(holdout * len(y))))
    test, train = perm[:n_test], perm[n_test:]
    A = np.hstack([Z, np.ones((len(Z), 1))])
    w, *_ = np.linalg.lstsq(A[train], y[train], rcond=None)
    return float(np.mean(np.sign(A[test] @ w) == y[test]))
