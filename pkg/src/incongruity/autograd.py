"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array and remembers how it was produced; calling
``backward`` on a scalar loss walks the graph once in reverse topological
order and accumulates gradients into every reachable tensor. Gradients keep
accumulating across backward calls until ``zero_grads`` is invoked.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, EmptySequenceError, SerializationError

PARAM_FILE_MAGIC = b"INCG1"


class Tensor:
    """Node in the computation graph: value, gradient, and backward rule."""

    __slots__ = ("data", "grad", "_parents", "_backward_fn")

    def __init__(self, data, _parents=(), _backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        out = Tensor(self.data + other.data, (self, other))

        def back(g):
            _accumulate(self, _unbroadcast(g, self.data.shape))
            _accumulate(other, _unbroadcast(g, other.data.shape))

        out._backward_fn = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))
        out._backward_fn = lambda g: _accumulate(self, -g)
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out = Tensor(self.data * other.data, (self, other))

        def back(g):
            _accumulate(self, _unbroadcast(g * other.data, self.data.shape))
            _accumulate(other, _unbroadcast(g * self.data, other.data.shape))

        out._backward_fn = back
        return out

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        out = Tensor(self.data.sum(), (self,))
        out._backward_fn = lambda g: _accumulate(self, np.full_like(self.data, float(g)))
        return out

    def reshape(self, *shape):
        old = self.data.shape
        out = Tensor(self.data.reshape(*shape), (self,))
        out._backward_fn = lambda g: _accumulate(self, g.reshape(old))
        return out

    # -- backward pass ------------------------------------------------------

    def backward(self):
        """Seed d(self)/d(self)=1 and accumulate gradients through the graph.

        Raises ContractError unless this tensor is a scalar (size 1).
        """
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.data.shape}")
        order = _topological_order(self)
        self._ensure_grad()
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


class Parameter(Tensor):
    """Named trainable tensor; always carries an allocated gradient."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name, trainable=True):
        super().__init__(data)
        self.name = name
        self.trainable = trainable
        if trainable:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t, g):
    t._ensure_grad()
    t.grad += g


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _topological_order(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def zero_grads(params):
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        else:
            p.grad[...] = 0.0


# -- operations --------------------------------------------------------------


def matmul(a, b):
    """Matrix product with numpy 1-D/2-D semantics and grads to both inputs."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim > 2 or b.data.ndim > 2 or a.data.ndim == 0 or b.data.ndim == 0:
        raise DimensionError(f"matmul supports 1-D/2-D operands, got {a.data.shape} x {b.data.shape}")
    if a.data.shape[-1] != (b.data.shape[0] if b.data.ndim > 0 else -1):
        raise DimensionError(f"matmul inner dimensions differ: {a.data.shape} x {b.data.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def back(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            _accumulate(a, g @ bd.T)
            _accumulate(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            _accumulate(a, bd @ g)
            _accumulate(b, np.outer(ad, g))
        elif ad.ndim == 2 and bd.ndim == 1:
            _accumulate(a, np.outer(g, bd))
            _accumulate(b, ad.T @ g)
        else:  # 1-D @ 1-D -> scalar
            _accumulate(a, g * bd)
            _accumulate(b, g * ad)

    out._backward_fn = back
    return out


def sigmoid(x):
    """Elementwise logistic function, computed without overflow on either tail."""
    x = _as_tensor(x)
    pos = x.data >= 0
    y = np.empty_like(x.data)
    y[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y, (x,))
    out._backward_fn = lambda g: _accumulate(x, g * y * (1.0 - y))
    return out


def tanh(x):
    x = _as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y, (x,))
    out._backward_fn = lambda g: _accumulate(x, g * (1.0 - y * y))
    return out


def log(x):
    x = _as_tensor(x)
    out = Tensor(np.log(x.data), (x,))
    out._backward_fn = lambda g: _accumulate(x, g / x.data)
    return out


def clamp(x, lo, hi):
    """Clip values to [lo, hi]; gradient passes only where unclipped."""
    x = _as_tensor(x)
    out = Tensor(np.clip(x.data, lo, hi), (x,))
    inside = (x.data > lo) & (x.data < hi)
    out._backward_fn = lambda g: _accumulate(x, g * inside)
    return out


def softmax_over_axis(x, axis):
    x = _as_tensor(x)
    if x.data.shape[axis] < 1:
        raise DimensionError(f"softmax over empty axis {axis} of shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, (x,))

    def back(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        _accumulate(x, s * (g - dot))

    out._backward_fn = back
    return out


def masked_softmax(x, mask):
    """Softmax of a 1-D logit vector restricted to unmasked positions.

    Masked positions get weight exactly 0 and receive no gradient.
    """
    x = _as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.data.shape:
        raise DimensionError(f"mask shape {mask.shape} != logits shape {x.data.shape}")
    if not mask.any():
        raise EmptySequenceError("masked_softmax: every position is masked")
    idx = np.flatnonzero(mask)
    z = x.data[idx]
    e = np.exp(z - z.max())
    a = e / e.sum()
    full = np.zeros_like(x.data)
    full[idx] = a
    out = Tensor(full, (x,))

    def back(g):
        gi = g[idx]
        dx = np.zeros_like(x.data)
        dx[idx] = a * (gi - float(gi @ a))
        _accumulate(x, dx)

    out._backward_fn = back
    return out


def mean_over_axis(x, axis):
    x = _as_tensor(x)
    n = x.data.shape[axis]
    if n < 1:
        raise DimensionError(f"mean over empty axis {axis} of shape {x.data.shape}")
    out = Tensor(x.data.mean(axis=axis), (x,))

    def back(g):
        _accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape) / n)

    out._backward_fn = back
    return out


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def back(g):
        offset = 0
        for t, n in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + n)
            _accumulate(t, g[tuple(sl)])
            offset += n

    out._backward_fn = back
    return out


def stack_rows(vectors):
    """Stack 1-D tensors into a [n x d] matrix."""
    vectors = [_as_tensor(v) for v in vectors]
    out = Tensor(np.stack([v.data for v in vectors], axis=0), tuple(vectors))

    def back(g):
        for i, v in enumerate(vectors):
            _accumulate(v, g[i])

    out._backward_fn = back
    return out


def row(x, i):
    """Select row i of a 2-D tensor as a 1-D tensor."""
    x = _as_tensor(x)
    out = Tensor(x.data[i], (x,))

    def back(g):
        gx = np.zeros_like(x.data)
        gx[i] = g
        _accumulate(x, gx)

    out._backward_fn = back
    return out


def permute_rows(x, idx):
    """Reorder the rows of a 2-D tensor by an index permutation."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx], (x,))

    def back(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        _accumulate(x, gx)

    out._backward_fn = back
    return out


def max_over_time(x):
    """Per-column maximum of a [time x filters] tensor.

    Gradient is routed only to the maximizing time step, first occurrence
    winning on ties.
    """
    x = _as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[0] < 1:
        raise DimensionError(f"max_over_time needs a nonempty [time x filters] tensor, got {x.data.shape}")
    argmax = x.data.argmax(axis=0)
    out = Tensor(x.data.max(axis=0), (x,))

    def back(g):
        gx = np.zeros_like(x.data)
        gx[argmax, np.arange(x.data.shape[1])] = g
        _accumulate(x, gx)

    out._backward_fn = back
    return out


def pad_rows(x, total_rows):
    """Right-pad a [t x d] tensor with zero rows up to total_rows."""
    x = _as_tensor(x)
    t = x.data.shape[0]
    if total_rows <= t:
        return x
    out = Tensor(np.vstack([x.data, np.zeros((total_rows - t, x.data.shape[1]))]), (x,))
    out._backward_fn = lambda g: _accumulate(x, g[:t])
    return out


def sliding_windows(x, width):
    """Unfold a [t x d] tensor into [(t-width+1) x width*d] word windows."""
    x = _as_tensor(x)
    t, d = x.data.shape
    if width > t:
        raise DimensionError(f"window width {width} exceeds sequence length {t}")
    n = t - width + 1
    view = np.lib.stride_tricks.sliding_window_view(x.data, (width, d))
    out = Tensor(view.reshape(n, width * d).copy(), (x,))
    rows = np.arange(n)[:, None] + np.arange(width)[None, :]

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, rows, g.reshape(n, width, d))
        _accumulate(x, gx)

    out._backward_fn = back
    return out


def conv1d_text(seq, filt):
    """Valid 1-D convolution of a [t x d] sequence with one [w x d] filter.

    Sequences shorter than the filter are right-padded with zero vectors, so
    the output always has at least one position.
    """
    seq, filt = _as_tensor(seq), _as_tensor(filt)
    if seq.data.ndim != 2 or filt.data.ndim != 2 or seq.data.shape[1] != filt.data.shape[1]:
        raise DimensionError(f"conv1d_text: sequence {seq.data.shape} vs filter {filt.data.shape}")
    w = filt.data.shape[0]
    seq = pad_rows(seq, w)
    windows = sliding_windows(seq, w)
    return matmul(windows, filt.reshape(-1, 1))


def gather_rows(table, ids, grad_row_mask=None):
    """Look up rows of a 2-D table; backward scatter-adds into those rows.

    grad_row_mask (bool per output row) can suppress gradient flow into
    selected rows, e.g. the padding row of an embedding table.
    """
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids], (table,))

    def back(g):
        gt = np.zeros_like(table.data)
        if grad_row_mask is None:
            np.add.at(gt, ids, g)
        else:
            keep = np.asarray(grad_row_mask, dtype=bool)
            np.add.at(gt, ids[keep], g[keep])
        _accumulate(table, gt)

    out._backward_fn = back
    return out


# -- gradient checking --------------------------------------------------------


@dataclass
class FiniteDifferenceReport:
    """Per-parameter max relative error between analytic and numeric grads."""

    eps: float
    tol: float
    per_param: dict = field(default_factory=dict)

    @property
    def max_error(self):
        return max(self.per_param.values(), default=0.0)

    @property
    def ok(self):
        return self.max_error < self.tol


def finite_difference_check(build_loss, params, eps=1e-5, tol=1e-4):
    """Compare backward() gradients against central finite differences.

    build_loss rebuilds the forward graph from the current parameter values
    and returns the scalar loss tensor, so the numeric side never touches the
    backward implementation it is checking.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    zero_grads(params)
    build_loss().backward()
    analytic = {p.name: p.grad.copy() for p in params}

    report = FiniteDifferenceReport(eps=eps, tol=tol)
    for p in params:
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(build_loss().data)
            flat[i] = orig - eps
            f_minus = float(build_loss().data)
            flat[i] = orig
            nflat[i] = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[p.name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-4)
        report.per_param[p.name] = float(np.max(np.abs(a - numeric) / denom))
    return report


# -- parameter serialization --------------------------------------------------


def save_parameters(path, params):
    """Write (name, shape, values) records in the versioned INCG1 format."""
    with open(path, "wb") as fh:
        fh.write(PARAM_FILE_MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", p.data.ndim))
            for dim in p.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_parameters(path):
    """Read an INCG1 file back into an ordered {name: array} mapping."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(PARAM_FILE_MAGIC):
        raise SerializationError(f"{path}: missing {PARAM_FILE_MAGIC!r} header")
    off = len(PARAM_FILE_MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise SerializationError(f"{path}: truncated record at byte {off}")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (count,) = take("<I")
    records = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = take("<B")
        shape = tuple(take("<I")[0] for _ in range(ndim))
        n = int(np.prod(shape)) if shape else 1
        size = 8 * n
        if off + size > len(blob):
            raise SerializationError(f"{path}: truncated values for {name!r}")
        records[name] = np.frombuffer(blob[off : off + size], dtype="<f8").reshape(shape).astype(np.float64)
        off += size
    return records


def load_parameters_into(path, params):
    """Load an INCG1 file into existing parameters, matched by name."""
    records = load_parameters(path)
    for p in params:
        if p.name not in records:
            raise SerializationError(f"{path}: no record for parameter {p.name!r}")
        if records[p.name].shape != p.data.shape:
            raise SerializationError(
                f"{path}: shape {records[p.name].shape} for {p.name!r} does not match {p.data.shape}"
            )
        p.data[...] = records[p.name]
