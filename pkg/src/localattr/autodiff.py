"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Supports exactly the primitives needed for small MLP/CNN classifiers:
matmul + bias for dense layers, stride-1 2-D convolution (valid or same
padding), ReLU, 2x2 max pooling, flatten, and a numerically stable softmax
cross-entropy. Inputs carry an explicit leading batch axis.
"""

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError


class Tensor:
    """A node in the computation graph: float64 data plus a gradient slot.

    Leaf tensors wrap inputs or parameters; interior tensors additionally
    hold the closures that recompute their value (for tape replay) and
    push gradients to their parents.
    """

    __slots__ = ("data", "grad", "op", "parents", "requires_grad",
                 "_forward", "_backward")

    def __init__(self, data, op="leaf", parents=(), requires_grad=True):
        data = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to 1-d
        self.data = data if data.ndim == 0 else np.ascontiguousarray(data)
        self.grad = None
        self.op = op
        self.parents = tuple(parents)
        self.requires_grad = requires_grad
        self._forward = None
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of graph nodes; execution order is topological order."""

    def __init__(self):
        self.nodes = []

    def leaf(self, data, op="leaf", requires_grad=True):
        t = Tensor(data, op=op, requires_grad=requires_grad)
        self.nodes.append(t)
        return t

    def record(self, data, op, parents, forward_fn, backward_fn):
        t = Tensor(data, op=op, parents=parents)
        t._forward = forward_fn
        t._backward = backward_fn
        self.nodes.append(t)
        return t

    def backward(self, root):
        """Accumulates d(root)/d(node) into .grad for every node on the path.

        root must be a scalar node recorded on this tape.
        """
        if root.data.ndim != 0:
            raise ShapeError("backward root must be a scalar")
        for n in self.nodes:
            n.grad = None
        root.grad = np.ones((), dtype=np.float64)
        for n in reversed(self.nodes):
            if n.grad is not None and n._backward is not None:
                n._backward(n.grad)

    def replay(self):
        """Re-executes every recorded op; True iff all outputs match bitwise."""
        for n in self.nodes:
            if n._forward is None:
                continue
            fresh = n._forward()
            if not np.array_equal(fresh, n.data, equal_nan=True):
                return False
        return True


def _accumulate(node, grad):
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(grad, dtype=np.float64)
    else:
        node.grad += grad


# ---------------------------------------------------------------------------
# primitive ops


def matmul(tape, x, w):
    """(B, n) @ (n, m) -> (B, m)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"matmul shapes {x.data.shape} @ {w.data.shape}")
    out = tape.record(x.data @ w.data, "matmul", (x, w),
                      lambda: x.data @ w.data, None)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g @ w.data.T)
        if w.requires_grad:
            _accumulate(w, x.data.T @ g)

    out._backward = backward
    return out


def add_row(tape, x, b):
    """(B, m) + (m,) broadcast over rows."""
    if x.data.shape[-1] != b.data.shape[0] or b.data.ndim != 1:
        raise ShapeError(f"bias shape {b.data.shape} vs {x.data.shape}")
    out = tape.record(x.data + b.data, "add_row", (x, b),
                      lambda: x.data + b.data, None)

    def backward(g):
        _accumulate(x, g)
        if b.requires_grad:
            _accumulate(b, g.sum(axis=0))

    out._backward = backward
    return out


def relu(tape, x):
    out = tape.record(np.maximum(x.data, 0.0), "relu", (x,),
                      lambda: np.maximum(x.data, 0.0), None)

    def backward(g):
        _accumulate(x, g * (x.data > 0.0))

    out._backward = backward
    return out


def conv2d(tape, x, w, b, padding="valid"):
    """Stride-1 2-D convolution. x: (B,C,H,W), w: (O,C,kh,kw), b: (O,)."""
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"conv2d shapes x={x.data.shape} w={w.data.shape}")
    kh, kw = w.data.shape[2], w.data.shape[3]
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("same padding requires odd kernel sizes")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ShapeError(f"unknown padding {padding!r}")
    if x.data.shape[2] + 2 * ph < kh or x.data.shape[3] + 2 * pw < kw:
        raise ShapeError("input smaller than kernel")

    def run():
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
        return kernels.conv2d_forward(xp, w.data) + b.data[None, :, None, None]

    out = tape.record(run(), "conv2d", (x, w, b), run, None)

    def backward(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            xp_h = x.data.shape[2] + 2 * ph
            xp_w = x.data.shape[3] + 2 * pw
            dxp = kernels.conv2d_backward_input(g, w.data, xp_h, xp_w)
            if ph or pw:
                dxp = np.ascontiguousarray(dxp[:, :, ph:xp_h - ph, pw:xp_w - pw])
            _accumulate(x, dxp)
        if w.requires_grad:
            xp = (np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
                  if ph or pw else x.data)
            _accumulate(w, kernels.conv2d_backward_weight(xp, g, kh, kw))
        if b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 2, 3)))

    out._backward = backward
    return out


def maxpool2(tape, x):
    """2x2 max pooling with stride 2; H and W must be even."""
    if x.data.ndim != 4 or x.data.shape[2] % 2 or x.data.shape[3] % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {x.data.shape}")
    pooled, idx = kernels.maxpool2_forward(x.data)
    out = tape.record(pooled, "maxpool2", (x,),
                      lambda: kernels.maxpool2_forward(x.data)[0], None)

    def backward(g):
        g = np.ascontiguousarray(g)
        _accumulate(x, kernels.maxpool2_backward(g, idx, x.data.shape[2], x.data.shape[3]))

    out._backward = backward
    return out


def flatten(tape, x):
    """(B, ...) -> (B, n)."""
    batch = x.data.shape[0]
    out = tape.record(x.data.reshape(batch, -1), "flatten", (x,),
                      lambda: x.data.reshape(batch, -1), None)

    def backward(g):
        _accumulate(x, g.reshape(x.data.shape))

    out._backward = backward
    return out


def add(tape, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes {a.data.shape} vs {b.data.shape}")
    out = tape.record(a.data + b.data, "add", (a, b), lambda: a.data + b.data, None)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    out._backward = backward
    return out


def scale(tape, x, c):
    c = float(c)
    out = tape.record(x.data * c, "scale", (x,), lambda: x.data * c, None)

    def backward(g):
        _accumulate(x, g * c)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# softmax / cross-entropy


def softmax(z):
    """Row-wise stable softmax of a plain array; last axis is the class axis."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_and_probs(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    total = e.sum(axis=-1, keepdims=True)
    return shifted - np.log(total), e / total


def softmax_cross_entropy(logits, label):
    """Loss and logit gradient for one logits vector.

    Returns (-log p_label, softmax(logits) - onehot(label)); both computed
    with max-shifted exponentials so saturated logits stay finite.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ShapeError("softmax_cross_entropy expects a 1-D logits vector")
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite logits")
    label = int(label)
    if label < 0 or label >= z.shape[0]:
        raise IndexError(f"label {label} out of range for {z.shape[0]} classes")
    log_p, probs = log_softmax_and_probs(z)
    grad = probs.copy()
    grad[label] -= 1.0
    return float(-log_p[label]), grad


def cross_entropy_sum(tape, logits, labels):
    """Scalar node: sum over rows of -log softmax(z)[label].

    Sum (not mean) reduction keeps each row's input gradient unscaled, so a
    batched backward yields exactly the per-sample gradients.
    """
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data
    if labels.ndim != 1 or labels.shape[0] != z.shape[0]:
        raise ShapeError("labels must match the batch dimension")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise IndexError("label out of range")
    rows = np.arange(z.shape[0])

    def run():
        log_p, _ = log_softmax_and_probs(logits.data)
        return np.float64(-log_p[rows, labels].sum())

    log_p, probs = log_softmax_and_probs(z)
    out = tape.record(np.float64(-log_p[rows, labels].sum()),
                      "cross_entropy", (logits,), run, None)

    def backward(g):
        d = probs.copy()
        d[rows, labels] -= 1.0
        _accumulate(logits, d * g)

    out._backward = backward
    return out


def pick_logits_sum(tape, logits, indices):
    """Scalar node: sum over rows of z[row, index]. Affine in the input."""
    indices = np.asarray(indices, dtype=np.int64)
    z = logits.data
    if indices.ndim != 1 or indices.shape[0] != z.shape[0]:
        raise ShapeError("indices must match the batch dimension")
    if indices.min() < 0 or indices.max() >= z.shape[1]:
        raise IndexError("class index out of range")
    rows = np.arange(z.shape[0])
    out = tape.record(np.float64(logits.data[rows, indices].sum()),
                      "pick_logits", (logits,),
                      lambda: np.float64(logits.data[rows, indices].sum()), None)

    def backward(g):
        d = np.zeros_like(z)
        d[rows, indices] = g
        _accumulate(logits, d)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# scalar-loss selectors


class CrossEntropy:
    """Selects softmax cross-entropy against a fixed label (or per-row labels)."""

    kind = "cross_entropy"

    def __init__(self, label):
        self.label = label

    def _row_labels(self, batch):
        labels = np.asarray(self.label, dtype=np.int64)
        if labels.ndim == 0:
            labels = np.full(batch, int(labels), dtype=np.int64)
        return labels

    def node(self, tape, logits):
        return cross_entropy_sum(tape, logits, self._row_labels(logits.data.shape[0]))

    def values(self, logits_data):
        """Per-row loss values from plain logits, no tape."""
        labels = self._row_labels(logits_data.shape[0])
        log_p, _ = log_softmax_and_probs(logits_data)
        return -log_p[np.arange(logits_data.shape[0]), labels]


class LogitValue:
    """Selects a raw logit; the scalar is affine in the network output."""

    kind = "logit"

    def __init__(self, index):
        self.index = index

    def _row_indices(self, batch):
        idx = np.asarray(self.index, dtype=np.int64)
        if idx.ndim == 0:
            idx = np.full(batch, int(idx), dtype=np.int64)
        return idx

    def node(self, tape, logits):
        return pick_logits_sum(tape, logits, self._row_indices(logits.data.shape[0]))

    def values(self, logits_data):
        idx = self._row_indices(logits_data.shape[0])
        return logits_data[np.arange(logits_data.shape[0]), idx].astype(np.float64)
