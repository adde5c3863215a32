"""Self-describing JSON checkpoints, written atomically.

Floats are stored via ``repr`` (what :mod:`json` emits), so values
round-trip exactly and identical models give byte-identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .encoding import LAYOUT_VERSION, FeatureScaler
from .estimators import ESTIMATORS

FORMAT = "adaptivenet-checkpoint"
FORMAT_VERSION = 1


class LayoutVersionError(ValueError):
    def __init__(self, found, expected):
        self.found, self.expected = found, expected
        super().__init__(
            f"checkpoint was written for encoding layout version {found}, "
            f"but this data uses layout version {expected}"
        )


@dataclass
class Checkpoint:
    estimator: object
    scaler: FeatureScaler
    config_hash: str = ""
    sampling: dict = field(default_factory=dict)
    train_patient_ids: list = field(default_factory=list)
    layout_version: int = LAYOUT_VERSION


def _kind(estimator):
    for name, cls in ESTIMATORS.items():
        if type(estimator) is cls:
            return name
    raise TypeError(f"cannot checkpoint {type(estimator).__name__}")


def to_dict(ckpt: Checkpoint) -> dict:
    est = ckpt.estimator
    net = getattr(est, "net_", None)
    blocks = []
    if net is not None:
        for p in net.params():
            blocks.append({"name": p.name, "shape": list(p.value.shape), "values": p.value.ravel().tolist()})
    fitted = {k: int(getattr(est, k)) for k in ("n_max_", "m_max_") if hasattr(est, k)}
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "layout_version": ckpt.layout_version,
        "config_hash": ckpt.config_hash,
        "model": _kind(est),
        "hyperparameters": est.get_params(),
        "fitted": fitted,
        "parameters": blocks,
        "scaler": ckpt.scaler.to_dict(),
        "sampling": ckpt.sampling,
        "train_patient_ids": sorted(ckpt.train_patient_ids),
    }


def dumps(ckpt: Checkpoint) -> str:
    return json.dumps(to_dict(ckpt), sort_keys=True, separators=(",", ":")) + "\n"


def save(ckpt: Checkpoint, path) -> None:
    """Write to a temporary file beside ``path`` and rename it into place."""
    text = dumps(ckpt)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def from_dict(d: dict, expected_layout: int = LAYOUT_VERSION) -> Checkpoint:
    if d.get("format") != FORMAT:
        raise ValueError("not an adaptivenet checkpoint")
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {d.get('format_version')!r}")
    if d.get("layout_version") != expected_layout:
        raise LayoutVersionError(d.get("layout_version"), expected_layout)
    est = ESTIMATORS[d["model"]](**d["hyperparameters"])
    fitted = d.get("fitted", {})
    for k, v in fitted.items():
        setattr(est, k, v)
    if d["model"] == "naive":
        est.fitted_ = True
    else:
        if d["model"] == "adaptivenet":
            net = est.build()
        else:
            from .sampling import flat_width

            net = est.build(flat_width(fitted["n_max_"], fitted["m_max_"]))
        params = net.params()
        blocks = d["parameters"]
        if [b["name"] for b in blocks] != [p.name for p in params]:
            raise ValueError("checkpoint parameter blocks do not match the model architecture")
        for p, b in zip(params, blocks):
            if list(p.value.shape) != b["shape"]:
                raise ValueError(f"{p.name}: shape {b['shape']} does not match model {list(p.value.shape)}")
            p.value[...] = np.array(b["values"], dtype=np.float64).reshape(b["shape"])
        est.net_ = net
    est.loss_trace_ = []
    return Checkpoint(
        est,
        FeatureScaler.from_dict(d["scaler"]),
        d.get("config_hash", ""),
        d.get("sampling", {}),
        list(d.get("train_patient_ids", [])),
        d["layout_version"],
    )


def load(path, expected_layout: int = LAYOUT_VERSION) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        return from_dict(json.load(fh), expected_layout)
