"""Reusable neural layers: embeddings, GRU/BiGRU, conv bank, attention, scorer.

The headline and body sides of every model share layer instances, so the
encoders are weight-tied by construction.
"""

from __future__ import annotations

import numpy as np

from .autograd import (
    Parameter,
    Tensor,
    concat,
    gather_rows,
    masked_softmax,
    matmul,
    max_over_time,
    pad_rows,
    permute_rows,
    row,
    sigmoid,
    sliding_windows,
    stack_rows,
    tanh,
)
from .errors import DimensionError, EmptySequenceError, VocabularyError

PAD_ID = 0
UNK_ID = 1


# -- initializers -------------------------------------------------------------


def init_gaussian(shape, rng, std=0.1):
    """Gaussian init, mean 0, std 0.1 by default."""
    return rng.normal(0.0, std, size=shape)


def init_xavier(shape, rng):
    """Gaussian init with variance 2/(fan_in+fan_out)."""
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)


def init_orthogonal(shape, rng):
    """Orthogonal init via QR; non-square shapes QR the larger dim and truncate."""
    if len(shape) != 2:
        raise DimensionError(f"orthogonal init needs a 2-D shape, got {shape}")
    n = max(shape)
    a = rng.normal(0.0, 1.0, size=(n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix signs so the result is deterministic
    return q[: shape[0], : shape[1]].copy()


def dropout(x, rate, rng, train):
    """Inverted dropout: scales kept units by 1/(1-rate); identity at inference."""
    if not train or rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return x * Tensor(mask)


# -- embedding ----------------------------------------------------------------


class EmbeddingTable:
    """Token-id -> dense vector table; row PAD_ID stays zero and untrained."""

    def __init__(self, vocab_size, dim, rng, name="embedding"):
        table = init_gaussian((vocab_size, dim), rng)
        table[PAD_ID] = 0.0
        self.table = Parameter(table, f"{name}.table")
        self.vocab_size = vocab_size
        self.dim = dim


def embed(tokens, table):
    """Embed a token-id sequence into a [t x dim] tensor.

    Raises VocabularyError naming the offending id/position when an id is out
    of range. Pad positions embed to zero and contribute no gradient.
    """
    ids = np.asarray(tokens, dtype=np.int64)
    for pos, tok in enumerate(ids):
        if tok < 0 or tok >= table.vocab_size:
            raise VocabularyError(f"token id {tok} at position {pos} outside vocabulary of {table.vocab_size}")
    return gather_rows(table.table, ids, grad_row_mask=ids != PAD_ID)


# -- GRU ----------------------------------------------------------------------


class GruCell:
    """Single GRU cell with update/reset/candidate gates.

    Convention: h' = (1-z) * h + z * h_tilde.
    Input weights are Xavier, recurrent weights orthogonal, biases zero.
    """

    def __init__(self, input_dim, hidden_dim, rng, name="gru"):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim

        def w(gate):
            return Parameter(init_xavier((input_dim, hidden_dim), rng), f"{name}.W{gate}")

        def u(gate):
            return Parameter(init_orthogonal((hidden_dim, hidden_dim), rng), f"{name}.U{gate}")

        def b(gate):
            return Parameter(np.zeros(hidden_dim), f"{name}.b{gate}")

        self.Wz, self.Uz, self.bz = w("z"), u("z"), b("z")
        self.Wr, self.Ur, self.br = w("r"), u("r"), b("r")
        self.Wh, self.Uh, self.bh = w("h"), u("h"), b("h")

    def parameters(self):
        return [self.Wz, self.Uz, self.bz, self.Wr, self.Ur, self.br, self.Wh, self.Uh, self.bh]


def gru_step(cell, x, h):
    """One GRU transition from state h given input x (both 1-D tensors)."""
    if x.data.shape != (cell.input_dim,) or h.data.shape != (cell.hidden_dim,):
        raise DimensionError(
            f"gru_step: x {x.data.shape} / h {h.data.shape} vs cell ({cell.input_dim}, {cell.hidden_dim})"
        )
    z = sigmoid(matmul(x, cell.Wz) + matmul(h, cell.Uz) + cell.bz)
    r = sigmoid(matmul(x, cell.Wr) + matmul(h, cell.Ur) + cell.br)
    h_tilde = tanh(matmul(x, cell.Wh) + matmul(r * h, cell.Uh) + cell.bh)
    return (1.0 - z) * h + z * h_tilde


def gru_sequence(cell, xs, mask):
    """Run a GRU over [t x in] rows; masked steps carry the state forward.

    Returns (states [t x hidden], last_valid [hidden]). last_valid is the
    state at the final unmasked position, so trailing padding cannot change it.
    """
    mask = np.asarray(mask, dtype=bool)
    t = xs.data.shape[0]
    if mask.shape != (t,):
        raise DimensionError(f"mask shape {mask.shape} does not match sequence length {t}")
    if not mask.any():
        raise EmptySequenceError("gru_sequence: all positions masked")
    h = Tensor(np.zeros(cell.hidden_dim))
    states = []
    last_valid = None
    for i in range(t):
        if mask[i]:
            h = gru_step(cell, row(xs, i), h)
            last_valid = h
        states.append(h)
    return stack_rows(states), last_valid


def bigru_sequence(fwd, bwd, xs, mask):
    """Bidirectional GRU: per-position concat of forward and reversed passes.

    Returns (states [t x 2*hidden], final [2*hidden]) where final is the
    concatenation of each direction's last valid state.
    """
    mask = np.asarray(mask, dtype=bool)
    f_states, f_last = gru_sequence(fwd, xs, mask)
    rev = np.arange(xs.data.shape[0])[::-1].copy()
    b_states_rev, b_last = gru_sequence(bwd, permute_rows(xs, rev), mask[::-1])
    b_states = permute_rows(b_states_rev, rev)
    return concat([f_states, b_states], axis=1), concat([f_last, b_last], axis=0)


# -- convolutional text encoder -------------------------------------------------


class ConvBank:
    """Filter bank over word windows: widths x filters-per-width, plus biases."""

    def __init__(self, embed_dim, widths, filters_per_width, rng, name="conv"):
        self.widths = tuple(widths)
        self.filters_per_width = filters_per_width
        self.embed_dim = embed_dim
        self.filters = {}
        self.biases = {}
        for w in self.widths:
            self.filters[w] = Parameter(init_xavier((w * embed_dim, filters_per_width), rng), f"{name}.w{w}.filters")
            self.biases[w] = Parameter(np.zeros(filters_per_width), f"{name}.w{w}.bias")

    @property
    def total_filters(self):
        return len(self.widths) * self.filters_per_width

    def parameters(self):
        out = []
        for w in self.widths:
            out.extend([self.filters[w], self.biases[w]])
        return out


def conv_encode(bank, seq):
    """Encode a [t x d] sequence into a [total_filters] vector.

    For each width: valid convolution over word windows (sequence zero-padded
    up to the width if too short), bias, then max-over-time pooling; the
    per-width outputs are concatenated.
    """
    if seq.data.ndim != 2 or seq.data.shape[1] != bank.embed_dim:
        raise DimensionError(f"conv_encode: sequence {seq.data.shape} vs embed dim {bank.embed_dim}")
    pooled = []
    for w in bank.widths:
        padded = pad_rows(seq, w)
        windows = sliding_windows(padded, w)
        responses = matmul(windows, bank.filters[w]) + bank.biases[w]
        pooled.append(max_over_time(responses))
    return concat(pooled, axis=0)


# -- attention ------------------------------------------------------------------


class AttentionParams:
    """Additive attention over paragraph states, conditioned on the headline."""

    def __init__(self, state_dim, attention_dim, rng, name="attention"):
        self.W_u_B = Parameter(init_xavier((state_dim, attention_dim), rng), f"{name}.W_u_B")
        self.W_u_H = Parameter(init_xavier((state_dim, attention_dim), rng), f"{name}.W_u_H")
        self.v = Parameter(init_gaussian((attention_dim,), rng), f"{name}.v")

    def parameters(self):
        return [self.W_u_B, self.W_u_H, self.v]


def attend(params, u_B, u_H, mask):
    """Pool body states [p x d] against headline state [d].

    Logits s_p = v . tanh(u_p W_B + u_H W_H); masked positions are excluded
    from the softmax and get weight exactly 0. Returns (pooled [d], weights [p]).
    """
    mask = np.asarray(mask, dtype=bool)
    if u_B.data.ndim != 2:
        raise DimensionError(f"attend expects [p x d] body states, got {u_B.data.shape}")
    if not mask.any():
        raise EmptySequenceError("attend: every paragraph is masked")
    scores = matmul(tanh(matmul(u_B, params.W_u_B) + matmul(u_H, params.W_u_H)), params.v)
    weights = masked_softmax(scores, mask)
    pooled = matmul(weights, u_B)
    return pooled, weights


# -- bilinear scorer -------------------------------------------------------------


class BilinearScorer:
    """sigma(a^T M c + b) over two encoder outputs of equal dimension."""

    def __init__(self, dim, rng, name="scorer"):
        self.M = Parameter(init_xavier((dim, dim), rng), f"{name}.M")
        self.b = Parameter(np.zeros(()), f"{name}.b")
        self.dim = dim

    def parameters(self):
        return [self.M, self.b]


def bilinear_score(scorer, a, c):
    if a.data.shape != (scorer.dim,) or c.data.shape != (scorer.dim,):
        raise DimensionError(f"bilinear_score: {a.data.shape} / {c.data.shape} vs dim {scorer.dim}")
    return sigmoid(matmul(matmul(a, scorer.M), c) + scorer.b)
