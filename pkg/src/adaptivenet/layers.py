"""Dense layer, LSTM cell and dropout with exact reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .autodiff import ContractError, GradientTape, Node, Param, _record

ACTIVATIONS = ("relu", "identity")


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def sigmoid(x):
    # tanh form is overflow-free and a single ufunc pass
    return 0.5 * np.tanh(0.5 * x) + 0.5


class DenseLayer:
    """Fully-connected layer ``activation(W x + b)``."""

    def __init__(self, in_dim, out_dim, activation="relu", rng=None, name="dense"):
        if in_dim < 1 or out_dim < 1:
            raise ContractError(f"{name}: dimensions must be >= 1, got {in_dim}->{out_dim}")
        if activation not in ACTIVATIONS:
            raise ContractError(f"{name}: unknown activation {activation!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.activation = activation
        self.weight = Param(glorot_uniform(rng, out_dim, in_dim), f"{name}.weight")
        self.bias = Param(np.zeros(out_dim), f"{name}.bias", regularize=False)

    @property
    def in_dim(self):
        return self.weight.value.shape[1]

    @property
    def out_dim(self):
        return self.weight.value.shape[0]

    def params(self):
        return [self.weight, self.bias]

    def __call__(self, x: Node, tape: GradientTape | None = None) -> Node:
        return dense(self, x, tape)


def dense(layer: DenseLayer, x: Node, tape: GradientTape | None = None) -> Node:
    """Batched forward of ``layer`` on rows of ``x`` (shape ``(n, in_dim)``)."""
    if x.value.ndim != 2 or x.value.shape[1] != layer.in_dim:
        raise ContractError(
            f"{layer.weight.name}: expected input (n, {layer.in_dim}), got {x.value.shape}"
        )
    W, b = layer.weight, layer.bias
    pre = x.value @ W.value.T + b.value
    relu = layer.activation == "relu"
    out = Node(np.maximum(pre, 0.0) if relu else pre)

    def backward():
        if out.grad is None:
            return
        g = out.grad * (pre > 0) if relu else out.grad
        W.accumulate(g.T @ x.value)
        b.accumulate(g.sum(axis=0))
        x.accumulate(g @ W.value)

    _record(tape, "dense", backward)
    return out


def dense_forward(layer: DenseLayer, vector, tape=None):
    """Single-vector convenience wrapper around :func:`dense`."""
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != layer.in_dim:
        raise ContractError(f"expected vector of length {layer.in_dim}, got shape {v.shape}")
    return dense(layer, Node(v[None, :]), tape).value[0]


class LstmCell:
    """Standard LSTM cell; gate blocks stacked in order input, forget, output, candidate.

    ``weight`` has shape ``(4H, I + H)``: the first ``I`` columns act on the
    input, the last ``H`` on the previous hidden state.
    """

    def __init__(self, input_dim, hidden_dim, rng=None, name="lstm", forget_bias=1.0):
        if input_dim < 1 or hidden_dim < 1:
            raise ContractError(f"{name}: dimensions must be >= 1")
        rng = np.random.default_rng(0) if rng is None else rng
        blocks = [glorot_uniform(rng, hidden_dim, input_dim + hidden_dim) for _ in range(4)]
        self.weight = Param(np.vstack(blocks), f"{name}.weight")
        bias = np.zeros(4 * hidden_dim)
        bias[hidden_dim : 2 * hidden_dim] = forget_bias
        self.bias = Param(bias, f"{name}.bias", regularize=False)

    @property
    def input_dim(self):
        return self.weight.value.shape[1] - self.hidden_dim

    @property
    def hidden_dim(self):
        return self.weight.value.shape[0] // 4

    def params(self):
        return [self.weight, self.bias]

    def __call__(self, seq, lengths, tape=None):
        return lstm_sequence(self, seq, lengths, tape)


def lstm_sequence(cell: LstmCell, seq: Node, lengths, tape: GradientTape | None = None) -> Node:
    """Run ``cell`` over right-padded sequences and return each final hidden state.

    ``seq`` has shape ``(B, T, I)``; row ``b`` is valid for its first
    ``lengths[b]`` steps and padding is never read.  Initial hidden and cell
    states are zero, so an empty row returns zeros.

    Rows are processed longest-first so that step ``t`` only touches the
    prefix of rows still running (a packed sequence).
    """
    x = seq.value
    if x.ndim != 3 or x.shape[2] != cell.input_dim:
        raise ContractError(f"expected sequence (B, T, {cell.input_dim}), got {x.shape}")
    B, T, I = x.shape
    H = cell.hidden_dim
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (B,) or np.any(lengths < 0) or np.any(lengths > T):
        raise ContractError("lengths must be a (B,) array within [0, T]")

    order = np.argsort(-lengths, kind="stable")
    sorted_len = lengths[order]
    T = int(sorted_len[0]) if B else 0
    active = [int(np.count_nonzero(sorted_len > t)) for t in range(T)]
    offsets = np.concatenate([[0], np.cumsum(active)]).astype(np.int64)
    xs = x[order]
    packed_x = np.concatenate([xs[: active[t], t] for t in range(T)]) if T else np.zeros((0, I))

    W = cell.weight.value
    Wx_T = np.ascontiguousarray(W[:, :I].T)
    Wh_T = np.ascontiguousarray(W[:, I:].T)
    xz = packed_x @ Wx_T + cell.bias.value
    gates = np.empty((len(packed_x), 4 * H))  # i, f, o activated; g
    cells = np.empty((len(packed_x), H))
    prev_h = np.empty((len(packed_x), H))
    prev_c = np.empty((len(packed_x), H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        n, lo, hi = active[t], offsets[t], offsets[t + 1]
        prev_h[lo:hi] = h[:n]
        prev_c[lo:hi] = c[:n]
        z = xz[lo:hi] + h[:n] @ Wh_T
        a = gates[lo:hi]
        a[:, : 3 * H] = sigmoid(z[:, : 3 * H])
        a[:, 3 * H :] = np.tanh(z[:, 3 * H :])
        c[:n] = a[:, H : 2 * H] * c[:n] + a[:, :H] * a[:, 3 * H :]
        cells[lo:hi] = c[:n]
        h[:n] = a[:, 2 * H : 3 * H] * np.tanh(c[:n])
    result = np.empty((B, H))
    result[order] = h
    out = Node(result)

    def backward():
        if out.grad is None:
            return
        dz_packed = np.empty_like(gates)
        dh = out.grad[order].copy()
        dc = np.zeros((B, H))
        Wh = W[:, I:]
        for t in reversed(range(T)):
            n, lo, hi = active[t], offsets[t], offsets[t + 1]
            a = gates[lo:hi]
            i, f, o, g = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
            tc = np.tanh(cells[lo:hi])
            dcn = dc[:n] + dh[:n] * o * (1.0 - tc * tc)
            dz = dz_packed[lo:hi]
            dz[:, :H] = dcn * g * i * (1.0 - i)
            dz[:, H : 2 * H] = dcn * prev_c[lo:hi] * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dh[:n] * tc * o * (1.0 - o)
            dz[:, 3 * H :] = dcn * i * (1.0 - g * g)
            dh[:n] = dz @ Wh
            dc[:n] = dcn * f
        dW = np.empty_like(W)
        dW[:, :I] = dz_packed.T @ packed_x
        dW[:, I:] = dz_packed.T @ prev_h
        cell.weight.accumulate(dW)
        cell.bias.accumulate(dz_packed.sum(axis=0))
        dx_packed = dz_packed @ W[:, :I]
        dxs = np.zeros_like(x)
        for t in range(T):
            dxs[: active[t], t] = dx_packed[offsets[t] : offsets[t + 1]]
        dx = np.empty_like(x)
        dx[order] = dxs
        seq.accumulate(dx)

    _record(tape, "lstm", backward)
    return out


def lstm_forward(cell: LstmCell, sequence, tape=None):
    """Final hidden state after feeding ``sequence`` (list of vectors) in order."""
    items = [np.asarray(v, dtype=np.float64) for v in sequence]
    for k, v in enumerate(items):
        if v.shape != (cell.input_dim,):
            raise ContractError(
                f"element {k}: expected length {cell.input_dim}, got shape {v.shape}"
            )
    if not items:
        return np.zeros(cell.hidden_dim)
    seq = Node(np.stack(items)[None])
    return lstm_sequence(cell, seq, [len(items)], tape).value[0]


def dropout(x: Node, rate: float, training: bool, rng=None, tape=None) -> Node:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode dropout needs an rng")
    mask = (rng.random(x.value.shape) >= rate) / (1.0 - rate)
    out = Node(x.value * mask)

    def backward():
        if out.grad is not None:
            x.accumulate(out.grad * mask)

    _record(tape, "dropout", backward)
    return out


def dropout_forward(vector, rate, training, rng=None):
    return dropout(Node(vector), rate, training, rng).value
