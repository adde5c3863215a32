"""AdaptiveNet and the fully-connected baseline, built from the layers module.

AdaptiveNet encodes every visit with ``phi_visit`` and every medication
with ``phi_med`` into vectors of the same width, merges them into one
stream sorted by event time, pools the stream with an LSTM, concatenates
the patient vector and maps the result through ``rho`` to a scalar score
change.  With ``share_encoder=True`` both encoders end in the same
100 -> 100 layer (one parameter block used by both paths).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError, GradientTape, Node, concat, gather_rows
from .encoding import W_MED, W_PATIENT, W_VISIT
from .layers import DenseLayer, LstmCell, dense, dropout, lstm_sequence

VISIT, MED = 0, 1


@dataclass
class EventBatch:
    """Ragged samples packed for one forward pass.

    ``index[b, k]`` selects row ``k`` of sample ``b``'s time-sorted stream
    from the stacked encoder outputs ``[visit latents; med latents]``;
    ``-1`` marks padding past ``lengths[b]``.
    """

    visit_x: np.ndarray
    med_x: np.ndarray
    index: np.ndarray
    lengths: np.ndarray
    patient: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.lengths)


def event_order(visit_times, med_times, visit_features=None, med_features=None) -> list[tuple[int, int]]:
    """Merged ascending time order as ``(kind, position)`` pairs.

    Ties put visits before medications; events of one kind on the same day
    are ordered by their feature vectors (lexicographically), then by input
    position.  The resulting sequence of vectors therefore does not depend
    on the order of the input lists.
    """

    def row(features, k):
        return () if features is None else tuple(features[k])

    keys = [(t, VISIT, row(visit_features, k), k) for k, t in enumerate(visit_times)]
    keys += [(t, MED, row(med_features, k), k) for k, t in enumerate(med_times)]
    keys.sort()
    return [(kind, k) for _, kind, _, k in keys]


def make_batch(samples, visit_dim=W_VISIT, med_dim=W_MED, patient_dim=W_PATIENT) -> EventBatch:
    B = len(samples)
    lengths = np.array([s.n_visits + s.n_meds for s in samples], dtype=np.int64)
    T = int(lengths.max()) if B else 0
    n_vis = sum(s.n_visits for s in samples)
    index = np.full((B, T), -1, dtype=np.int64)
    vrows, mrows = [], []
    v_off, m_off = 0, n_vis
    for b, s in enumerate(samples):
        if (s.n_visits and np.shape(s.visit_features)[-1] != visit_dim) or (
            s.n_meds and np.shape(s.med_features)[-1] != med_dim
        ):
            raise ContractError("event feature width does not match the model")
        vf = np.asarray(s.visit_features, dtype=np.float64).reshape(-1, visit_dim)
        mf = np.asarray(s.med_features, dtype=np.float64).reshape(-1, med_dim)
        if np.shape(s.patient_vec) != (patient_dim,):
            raise ContractError(f"patient vector must have length {patient_dim}")
        for pos, (kind, k) in enumerate(event_order(s.visit_times, s.med_times, vf, mf)):
            index[b, pos] = v_off + k if kind == VISIT else m_off + k
        vrows.append(vf)
        mrows.append(mf)
        v_off += s.n_visits
        m_off += s.n_meds
    return EventBatch(
        visit_x=np.vstack(vrows) if vrows else np.zeros((0, visit_dim)),
        med_x=np.vstack(mrows) if mrows else np.zeros((0, med_dim)),
        index=index,
        lengths=lengths,
        patient=np.array([s.patient_vec for s in samples], dtype=np.float64).reshape(B, patient_dim),
        labels=np.array([s.label for s in samples], dtype=np.float64),
    )


class AdaptiveNet:
    """Multi-encoder recurrent network; defaults follow the best reported configuration."""

    def __init__(
        self,
        visit_dim=W_VISIT,
        med_dim=W_MED,
        patient_dim=W_PATIENT,
        encoder_dim=100,
        encoder_layers=1,
        share_encoder=False,
        lstm_hidden=100,
        rho_dim=100,
        rho_layers=2,
        dropout=0.0,
        seed=0,
    ):
        rng = np.random.default_rng(seed)
        self.visit_dim, self.med_dim, self.patient_dim = visit_dim, med_dim, patient_dim
        self.encoder_dim = encoder_dim
        self.dropout = dropout

        def stack(in_dim, prefix):
            layers, d = [], in_dim
            for k in range(encoder_layers):
                layers.append(DenseLayer(d, encoder_dim, "relu", rng, f"{prefix}.{k}"))
                d = encoder_dim
            return layers

        self.phi_visit = stack(visit_dim, "phi_visit")
        self.phi_med = stack(med_dim, "phi_med")
        self.shared = (
            DenseLayer(encoder_dim, encoder_dim, "relu", rng, "phi_shared") if share_encoder else None
        )
        self.lstm = LstmCell(encoder_dim, lstm_hidden, rng, "lstm")
        self.rho = []
        d = lstm_hidden + patient_dim
        for k in range(rho_layers):
            self.rho.append(DenseLayer(d, rho_dim, "relu", rng, f"rho.{k}"))
            d = rho_dim
        self.out = DenseLayer(d, 1, "identity", rng, "rho.out")

    @property
    def latent_dim(self):
        return self.encoder_dim

    @property
    def hidden_dim(self):
        return self.lstm.hidden_dim

    def layers(self):
        extra = [self.shared] if self.shared is not None else []
        return [*self.phi_visit, *self.phi_med, *extra, self.lstm, *self.rho, self.out]

    def params(self):
        return [p for layer in self.layers() for p in layer.params()]

    def _encode(self, x: Node, stack, tape, training, rng):
        for layer in stack:
            x = dropout(dense(layer, x, tape), self.dropout, training, rng, tape)
        if self.shared is not None:
            x = dropout(dense(self.shared, x, tape), self.dropout, training, rng, tape)
        return x

    def encode(self, visit_x, med_x, tape=None, training=False, rng=None):
        """Latent vectors for stacked visit rows and med rows."""
        zv = self._encode(Node(visit_x), self.phi_visit, tape, training, rng)
        zm = self._encode(Node(med_x), self.phi_med, tape, training, rng)
        return zv, zm

    def pool(self, batch: EventBatch, tape=None, training=False, rng=None) -> Node:
        B, T = batch.index.shape
        if T == 0:
            return Node(np.zeros((B, self.hidden_dim)))
        zv, zm = self.encode(batch.visit_x, batch.med_x, tape, training, rng)
        stream = gather_rows(concat([zv, zm], axis=0, tape=tape), batch.index, tape)
        return lstm_sequence(self.lstm, stream, batch.lengths, tape)

    def forward(self, batch: EventBatch, tape: GradientTape | None = None, training=False, rng=None) -> Node:
        if batch.visit_x.shape[1] != self.visit_dim or batch.med_x.shape[1] != self.med_dim:
            raise ContractError("event feature width does not match the model")
        pooled = self.pool(batch, tape, training, rng)
        x = concat([pooled, Node(batch.patient)], axis=1, tape=tape)
        for layer in self.rho:
            x = dropout(dense(layer, x, tape), self.dropout, training, rng, tape)
        y = dense(self.out, x, tape)
        return y

    def make_batch(self, samples):
        return make_batch(samples, self.visit_dim, self.med_dim, self.patient_dim)


class FCN:
    """Fully-connected regressor on padded flat inputs."""

    def __init__(self, input_dim, hidden_dim=32, n_hidden=3, dropout=0.1, seed=0):
        rng = np.random.default_rng(seed)
        self.input_dim = input_dim
        self.dropout = dropout
        self.hidden = []
        d = input_dim
        for k in range(n_hidden):
            self.hidden.append(DenseLayer(d, hidden_dim, "relu", rng, f"fcn.{k}"))
            d = hidden_dim
        self.out = DenseLayer(d, 1, "identity", rng, "fcn.out")

    def layers(self):
        return [*self.hidden, self.out]

    def params(self):
        return [p for layer in self.layers() for p in layer.params()]

    def forward(self, batch, tape=None, training=False, rng=None) -> Node:
        X = batch[0] if isinstance(batch, tuple) else batch
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ContractError(f"expected flat input width {self.input_dim}, got {X.shape}")
        x = Node(X)
        for layer in self.hidden:
            x = dropout(dense(layer, x, tape), self.dropout, training, rng, tape)
        return dense(self.out, x, tape)


def psi_pool(model: AdaptiveNet, visit_events, med_events) -> np.ndarray:
    """LSTM summary of ``(time, feature_vector)`` event lists; zero vector when empty."""
    from .sampling import StructuredSample

    for _, v in visit_events:
        if np.shape(v) != (model.visit_dim,):
            raise ContractError(f"visit vector must have length {model.visit_dim}")
    for _, m in med_events:
        if np.shape(m) != (model.med_dim,):
            raise ContractError(f"med vector must have length {model.med_dim}")
    s = StructuredSample(
        patient_id="",
        anchor_day=0,
        target_day=0,
        patient_vec=np.zeros(model.patient_dim),
        visit_times=np.array([t for t, _ in visit_events]),
        visit_features=np.array([v for _, v in visit_events]).reshape(-1, model.visit_dim),
        med_times=np.array([t for t, _ in med_events]),
        med_features=np.array([m for _, m in med_events]).reshape(-1, model.med_dim),
        delta_t=0.0,
        label=0.0,
        current_score=0.0,
    )
    return model.pool(model.make_batch([s])).value[0]


def predict(model: AdaptiveNet, sample) -> float:
    return float(model.forward(model.make_batch([sample])).value[0, 0])


def predict_absolute(model: AdaptiveNet, sample, current_score: float) -> float:
    return current_score + predict(model, sample)


def naive_predict(sample) -> float:
    return 0.0


def fcn_predict(baseline: FCN, flat) -> float:
    x = flat.features if hasattr(flat, "features") else flat
    return float(baseline.forward(np.asarray(x, dtype=np.float64)[None, :]).value[0, 0])
