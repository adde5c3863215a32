"""scikit-learn style wrappers: ``fit(samples)`` / ``predict(samples)``.

``X`` is a sequence of :class:`~adaptivenet.sampling.StructuredSample`;
``y`` defaults to the samples' own labels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .autodiff import ContractError
from .models import FCN, AdaptiveNet
from .sampling import StructuredSample, flatten_features, max_event_counts
from .training import TrainConfig, train

PREDICT_CHUNK = 2048


def _sample_list(X, allow_empty):
    if isinstance(X, StructuredSample):
        raise ContractError("expected a sequence of samples, got a single sample")
    samples = list(X)
    if not samples and not allow_empty:
        raise ContractError("no samples")
    for k, s in enumerate(samples):
        if not isinstance(s, StructuredSample):
            raise ContractError(f"item {k} is {type(s).__name__}, not StructuredSample")
    return samples


def check_samples(X, y=None):
    """Validate a non-empty sample list and return ``(list, labels)``."""
    samples = _sample_list(X, allow_empty=False)
    if y is None:
        labels = np.array([s.label for s in samples], dtype=np.float64)
    else:
        labels = check_array(np.asarray(y, dtype=np.float64).reshape(-1, 1), ensure_all_finite=True).ravel()
        if len(labels) != len(samples):
            raise ContractError(f"{len(samples)} samples but {len(labels)} labels")
    if not np.all(np.isfinite(labels)):
        raise ContractError("labels must be finite")
    return samples, labels


class AdaptiveNetRegressor(RegressorMixin, BaseEstimator):
    """Score-change regressor over event streams.

    Defaults are the best configuration: one 100-wide encoder layer per
    event type, no dropout, a 100-unit LSTM and a 100-100-1 head, trained
    with Adam (lr 1e-4) for 7000 minibatches of 256.
    """

    def __init__(
        self,
        encoder_dim=100,
        encoder_layers=1,
        share_encoder=False,
        lstm_hidden=100,
        rho_dim=100,
        rho_layers=2,
        dropout=0.0,
        batch_size=256,
        steps=7000,
        learning_rate=1e-4,
        l1_coeff=1e-5,
        random_state=0,
    ):
        self.encoder_dim = encoder_dim
        self.encoder_layers = encoder_layers
        self.share_encoder = share_encoder
        self.lstm_hidden = lstm_hidden
        self.rho_dim = rho_dim
        self.rho_layers = rho_layers
        self.dropout = dropout
        self.batch_size = batch_size
        self.steps = steps
        self.learning_rate = learning_rate
        self.l1_coeff = l1_coeff
        self.random_state = random_state

    def build(self) -> AdaptiveNet:
        return AdaptiveNet(
            encoder_dim=self.encoder_dim,
            encoder_layers=self.encoder_layers,
            share_encoder=self.share_encoder,
            lstm_hidden=self.lstm_hidden,
            rho_dim=self.rho_dim,
            rho_layers=self.rho_layers,
            dropout=self.dropout,
            seed=self.random_state,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.steps, self.learning_rate, self.l1_coeff, self.random_state)

    def fit(self, X, y=None, callback=None):
        samples, labels = check_samples(X, y)
        net = self.build()

        def get_batch(idx):
            return net.make_batch([samples[i] for i in idx]), labels[idx]

        self.loss_trace_ = train(net, len(samples), get_batch, self.train_config(), callback)
        self.net_ = net
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        samples = _sample_list(X, allow_empty=True)
        out = np.empty(len(samples))
        for lo in range(0, len(samples), PREDICT_CHUNK):
            chunk = samples[lo : lo + PREDICT_CHUNK]
            out[lo : lo + len(chunk)] = self.net_.forward(self.net_.make_batch(chunk)).value[:, 0]
        return out


class FCNRegressor(RegressorMixin, BaseEstimator):
    """Fully-connected baseline on most-recent-first padded inputs.

    The slot counts ``n_max_``/``m_max_`` come from the training samples; at
    prediction time the oldest surplus events are dropped.
    """

    def __init__(
        self,
        hidden_dim=32,
        n_hidden=3,
        dropout=0.1,
        batch_size=256,
        steps=7000,
        learning_rate=1e-4,
        l1_coeff=1e-5,
        random_state=0,
    ):
        self.hidden_dim = hidden_dim
        self.n_hidden = n_hidden
        self.dropout = dropout
        self.batch_size = batch_size
        self.steps = steps
        self.learning_rate = learning_rate
        self.l1_coeff = l1_coeff
        self.random_state = random_state

    def build(self, input_dim) -> FCN:
        return FCN(input_dim, self.hidden_dim, self.n_hidden, self.dropout, self.random_state)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.steps, self.learning_rate, self.l1_coeff, self.random_state)

    def fit(self, X, y=None, callback=None):
        samples, labels = check_samples(X, y)
        self.n_max_, self.m_max_ = max_event_counts(samples)
        flat = flatten_features(samples, self.n_max_, self.m_max_)
        net = self.build(flat.shape[1])
        self.loss_trace_ = train(net, len(samples), lambda idx: (flat[idx], labels[idx]), self.train_config(), callback)
        self.net_ = net
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        samples = _sample_list(X, allow_empty=True)
        if not samples:
            return np.zeros(0)
        flat = flatten_features(samples, self.n_max_, self.m_max_, truncate=True)
        return self.net_.forward(flat).value[:, 0]


class NaiveRegressor(RegressorMixin, BaseEstimator):
    """Predicts no change, whatever the input."""

    def fit(self, X, y=None):
        check_samples(X, y)
        self.loss_trace_ = []
        self.fitted_ = True
        return self

    def predict(self, X):
        check_is_fitted(self, "fitted_")
        return np.zeros(len(_sample_list(X, allow_empty=True)))


ESTIMATORS = {"adaptivenet": AdaptiveNetRegressor, "fcn": FCNRegressor, "naive": NaiveRegressor}
