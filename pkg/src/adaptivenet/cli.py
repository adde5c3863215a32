"""Command-line entry point: ``adaptivenet <command> ...``.

Data goes to files or standard output; diagnostics go to standard error.
Any error exits with status 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict

from . import checkpoint as ckpt_io
from .autodiff import ContractError
from .config import MODEL_KINDS, ConfigError, RunConfig, load
from .encoding import LAYOUT_VERSION, FeatureScaler
from .estimators import AdaptiveNetRegressor, FCNRegressor, NaiveRegressor
from .evaluation import (
    export_latents,
    history_sweep,
    latent_separability,
    patient_folds,
    score_predictions,
    write_loss_trace,
    write_metrics_csv,
)
from .records import RecordFormatError, read_records, validate_record, write_records
from .sampling import dumps_samples, flat_header, flat_width, flatten_features, generate_samples, max_event_counts
from .synthetic import cohort_summary, generate_cohort

log = logging.getLogger("adaptivenet")


class CliError(Exception):
    pass


def make_estimator(cfg: RunConfig, kind: str):
    t = cfg.train
    common = dict(
        batch_size=t.batch_size, steps=t.steps, learning_rate=t.learning_rate, l1_coeff=t.l1_coeff, random_state=t.seed
    )
    if kind == "adaptivenet":
        m = cfg.model
        return AdaptiveNetRegressor(
            encoder_dim=m.encoder_dim,
            encoder_layers=m.encoder_layers,
            share_encoder=m.share_encoder,
            lstm_hidden=m.lstm_hidden,
            rho_dim=m.rho_dim,
            rho_layers=m.rho_layers,
            dropout=m.dropout,
            **common,
        )
    if kind == "fcn":
        return FCNRegressor(hidden_dim=cfg.fcn.hidden_dim, n_hidden=cfg.fcn.n_hidden, dropout=cfg.fcn.dropout, **common)
    if kind == "naive":
        return NaiveRegressor()
    raise CliError(f"unknown model {kind!r}")


def _records(path):
    if not path:
        raise CliError("no record file given (argument or ADAPTIVENET_RECORDS)")
    try:
        records = read_records(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    bad = [(r.id, v) for r in records for v in validate_record(r)]
    if bad:
        lines = "\n".join(f"  {rid}: {v}" for rid, v in bad)
        raise CliError(f"{path}: {len(bad)} validation violation(s):\n{lines}")
    return records


def _config(args) -> RunConfig:
    cfg = load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.override("train", seed=args.seed)
    if getattr(args, "steps", None) is not None:
        cfg = cfg.override("train", steps=args.steps)
    if getattr(args, "max_history", None) is not None:
        cfg = cfg.override("sampling", max_history=args.max_history)
    if getattr(args, "model", None):
        cfg = cfg.override("model", kind=args.model)
    if getattr(args, "share_encoder", False):
        cfg = cfg.override("model", share_encoder=True)
    if getattr(args, "out_dir", None):
        cfg = cfg.override("paths", out_dir=args.out_dir)
    if getattr(args, "records", None):
        cfg = cfg.override("paths", records=args.records)
    return cfg.validate()


def _run_dir(cfg: RunConfig, kind: str) -> str:
    path = os.path.join(cfg.paths.out_dir, f"{kind}-{cfg.run_dir_name()}")
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_synth(args):
    cfg = load(args.config)
    cfg = cfg.override("synth", n_patients=args.n_patients, seed=args.seed).validate()
    records, truth = generate_cohort(cfg.synth.build())
    out = args.out
    try:
        write_records(records, out)
        truth.write(_sidecar(out))
    except OSError as exc:
        raise CliError(f"cannot write {exc.filename}: {exc.strerror}") from None
    summary = cohort_summary(records)
    summary["config_hash"] = cfg.hash
    print(json.dumps(summary, sort_keys=True))


def _sidecar(records_path):
    base = records_path[: -len(".jsonl")] if records_path.endswith(".jsonl") else records_path
    return base + ".truth.json"


def cmd_samples(args):
    cfg = _config(args)
    records = _records(cfg.paths.records)
    sampling = cfg.sampling.build()
    scaler = FeatureScaler(max_horizon=sampling.max_horizon).fit(records)
    samples = generate_samples(records, sampling, scaler) if records else []
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        if samples and args.flat:
            n_max, m_max = max_event_counts(samples)
            X = flatten_features(samples, n_max, m_max)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(flat_header(n_max, m_max) + ["label"])
            for row, s in zip(X, samples):
                w.writerow([repr(float(x)) for x in row] + [repr(s.label)])
            print(f"width {flat_width(n_max, m_max)} = 8 + {n_max}*33 + {m_max}*18")
        elif samples:
            fh.write(dumps_samples(samples))
    print(f"{len(samples)} samples", file=sys.stderr)


def _split(records, cfg):
    folds = patient_folds([r.id for r in records], cfg.eval.folds, cfg.eval.fold_seed)
    val = set(folds[0])
    return [r for r in records if r.id not in val], [r for r in records if r.id in val]


def cmd_train(args):
    cfg = _config(args)
    kind = cfg.model.kind
    records = _records(cfg.paths.records)
    train_recs, val_recs = _split(records, cfg)
    sampling = cfg.sampling.build()
    scaler = FeatureScaler(max_horizon=sampling.max_horizon).fit(train_recs)
    train_samples = generate_samples(train_recs, sampling, scaler)
    val_samples = generate_samples(val_recs, sampling, scaler)
    if not train_samples or not val_samples:
        raise CliError("the split leaves no training or no validation samples")
    est = make_estimator(cfg, kind)
    est.fit(train_samples)
    report = score_predictions(sampling.max_history, "val", est.predict(val_samples), val_samples)
    out = _run_dir(cfg, "train")
    state = ckpt_io.Checkpoint(est, scaler, cfg.hash, asdict(cfg.sampling), [r.id for r in train_recs])
    ckpt_io.save(state, os.path.join(out, "checkpoint.json"))
    write_loss_trace(est.loss_trace_, os.path.join(out, "loss_trace.csv"))
    write_metrics_csv([report], os.path.join(out, "metrics.csv"))
    _write_json(os.path.join(out, "config.json"), {"config_hash": cfg.hash, **cfg.hashed_dict()})
    print(out)
    print(f"validation mse {report.mse:.6f} accuracy {report.accuracy:.4f} on {report.n_samples} samples", file=sys.stderr)


def _load_checkpoint(path):
    try:
        return ckpt_io.load(path, LAYOUT_VERSION)
    except ckpt_io.LayoutVersionError as exc:
        raise CliError(f"refusing checkpoint: layout version {exc.found} != data layout version {exc.expected}") from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _checkpoint_samples(state, records):
    from .sampling import SamplingConfig

    sampling = SamplingConfig(**state.sampling) if state.sampling else SamplingConfig()
    return sampling, generate_samples(records, sampling, state.scaler)


def cmd_eval(args):
    state = _load_checkpoint(args.checkpoint)
    records = _records(args.records)
    seen = set(state.train_patient_ids) & {r.id for r in records}
    if seen:
        print(
            f"warning: {len(seen)} of {len(records)} patients were used to train this checkpoint; "
            "the metrics are optimistic",
            file=sys.stderr,
        )
    sampling, samples = _checkpoint_samples(state, records)
    if not samples:
        raise CliError("records yield no samples")
    report = score_predictions(sampling.max_history, "eval", state.estimator.predict(samples), samples)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, f"eval-{state.config_hash[:12]}.csv")
    write_metrics_csv([report], path)
    print(path)


def cmd_sweep(args):
    cfg = _config(args)
    records = _records(cfg.paths.records)
    histories = [float(h) for h in args.histories.split(",")]
    reports = history_sweep(
        records,
        lambda: make_estimator(cfg, cfg.model.kind),
        cfg.sampling.build(),
        histories,
        cfg.eval.folds,
        cfg.eval.fold_seed,
    )
    out = _run_dir(cfg, "sweep")
    path = os.path.join(out, "sweep_metrics.csv")
    write_metrics_csv(reports, path)
    print(path)


def cmd_export_latents(args):
    state = _load_checkpoint(args.checkpoint)
    if not isinstance(state.estimator, AdaptiveNetRegressor):
        raise CliError("latent export needs an adaptivenet checkpoint")
    _, samples = _checkpoint_samples(state, _records(args.records))
    tags, Z = export_latents(state.estimator.net_, samples, args.out)
    n_visit = sum(t == "visit" for t in tags)
    print(f"{len(tags)} rows ({n_visit} visit, {len(tags) - n_visit} med), {Z.shape[1]} latent columns")
    if args.separability and 0 < n_visit < len(tags):
        print(f"separability {latent_separability(tags, Z):.4f}")


def cmd_check_gradients(args):
    from .gradcheck import check_model_gradients

    worst = 0.0
    for seed in range(args.seeds):
        report = check_model_gradients(seed, share_encoder=not args.no_share, tolerance=args.tolerance)
        worst = max(worst, report.max_rel_error)
        status = "ok" if report.passed else "FAIL"
        print(f"seed {seed}: max rel error {report.max_rel_error:.3e} over {report.n_checked} coords ({report.worst}) {status}")
    if worst >= args.tolerance:
        raise CliError(f"gradient check failed: max relative error {worst:.3e} >= {args.tolerance}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptivenet", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, bit-reproducible)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="TOML run configuration")
        return sp

    s = with_config(sub.add_parser("synth", help="generate a synthetic cohort"))
    s.add_argument("--out", required=True, help="record file (JSONL); ground truth goes beside it")
    s.add_argument("--n-patients", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = with_config(sub.add_parser("samples", help="generate samples from records"))
    s.add_argument("records", nargs="?")
    s.add_argument("--out", required=True)
    s.add_argument("--flat", action="store_true", help="padded CSV for fixed-input models")
    s.add_argument("--max-history", type=float)
    s.set_defaults(func=cmd_samples)

    s = with_config(sub.add_parser("train", help="train one model on a patient split"))
    s.add_argument("records", nargs="?")
    s.add_argument("--out-dir")
    s.add_argument("--model", choices=MODEL_KINDS)
    s.add_argument("--share-encoder", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--max-history", type=float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a checkpoint on records")
    s.add_argument("checkpoint")
    s.add_argument("records")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_eval)

    s = with_config(sub.add_parser("sweep", help="cross-validate over history lengths"))
    s.add_argument("records", nargs="?")
    s.add_argument("--out-dir")
    s.add_argument("--histories", default="0.5,1,2,3,4,5")
    s.add_argument("--model", choices=MODEL_KINDS)
    s.add_argument("--share-encoder", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("export-latents", help="write encoder outputs of every event")
    s.add_argument("checkpoint")
    s.add_argument("records")
    s.add_argument("--out", required=True)
    s.add_argument("--separability", action="store_true")
    s.set_defaults(func=cmd_export_latents)

    s = sub.add_parser("check-gradients", help="finite-difference check of the full model")
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--no-share", action="store_true", help="check without the shared encoder layer")
    s.set_defaults(func=cmd_check_gradients)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=max(1, args.threads)):
            args.func(args)
    except (CliError, ConfigError, RecordFormatError, ContractError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
