"""Model construction, evaluation, training, and weight serialization.

A ModelGraph is an immutable stack of layer specs plus parameter arrays.
Every forward pass builds a fresh autodiff tape, so gradients with respect
to the input (for attribution) or the parameters (for SGD) come from the
same machinery.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DomainError, FormatError, ShapeError


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Conv2d:
    in_channels: int
    out_channels: int
    kh: int
    kw: int
    padding: str = "same"  # "same" or "valid"


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


def _out_shape(layer, shape):
    """Shape of one layer's output given its input shape (no batch axis)."""
    if isinstance(layer, Dense):
        if shape != (layer.in_dim,):
            raise ShapeError(f"dense expects ({layer.in_dim},), got {shape}")
        return (layer.out_dim,)
    if isinstance(layer, Conv2d):
        if len(shape) != 3 or shape[0] != layer.in_channels:
            raise ShapeError(f"conv expects ({layer.in_channels},H,W), got {shape}")
        c, h, w = shape
        if layer.padding == "same":
            if layer.kh % 2 == 0 or layer.kw % 2 == 0:
                raise ShapeError("same padding requires odd kernels")
            return (layer.out_channels, h, w)
        if layer.padding == "valid":
            if h < layer.kh or w < layer.kw:
                raise ShapeError("input smaller than kernel")
            return (layer.out_channels, h - layer.kh + 1, w - layer.kw + 1)
        raise ShapeError(f"unknown padding {layer.padding!r}")
    if isinstance(layer, MaxPool2):
        if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
            raise ShapeError(f"maxpool2 needs (C, even, even), got {shape}")
        return (shape[0], shape[1] // 2, shape[2] // 2)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, ReLU):
        return shape
    raise ShapeError(f"unknown layer {layer!r}")


def _init_params(layer, rng):
    """Uniform(-k, k) with k = 1/sqrt(fan_in); weights drawn before biases."""
    if isinstance(layer, Dense):
        k = 1.0 / np.sqrt(layer.in_dim)
        w = rng.uniform(-k, k, size=(layer.in_dim, layer.out_dim))
        b = rng.uniform(-k, k, size=(layer.out_dim,))
        return (w, b)
    if isinstance(layer, Conv2d):
        fan_in = layer.in_channels * layer.kh * layer.kw
        k = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-k, k, size=(layer.out_channels, layer.in_channels, layer.kh, layer.kw))
        b = rng.uniform(-k, k, size=(layer.out_channels,))
        return (w, b)
    return ()


class Forward:
    """One recorded forward pass: the tape plus handles for backward."""

    def __init__(self, tape, input_node, logits_node, param_nodes):
        self.tape = tape
        self.input = input_node
        self.logits = logits_node
        self.param_nodes = param_nodes

    def backward(self, selector):
        """Backpropagates the selector's scalar; returns the input gradient."""
        root = selector.node(self.tape, self.logits)
        self.tape.backward(root)
        return self.input.grad


class ModelGraph:
    """Immutable feed-forward classifier: layer specs plus parameters."""

    def __init__(self, input_shape, layers, params):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.layers = tuple(layers)
        frozen = []
        for group in params:
            # copy so freezing never mutates caller-owned arrays
            arrs = tuple(np.array(a, dtype=np.float64, order="C") for a in group)
            for a in arrs:
                a.flags.writeable = False
            frozen.append(arrs)
        self.params = tuple(frozen)
        if len(self.params) != len(self.layers):
            raise ShapeError("one parameter group per layer required")
        shape = self.input_shape
        for layer in self.layers:
            shape = _out_shape(layer, shape)
        if len(shape) != 1 or shape[0] < 2:
            raise ShapeError(f"final layer must emit >=2 class logits, got {shape}")
        self.n_classes = shape[0]

    @property
    def parameter_count(self):
        return sum(a.size for group in self.params for a in group)

    def with_params(self, params):
        return ModelGraph(self.input_shape, self.layers, params)

    def _check_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} != model {self.input_shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite input")
        return x

    def forward(self, x, param_grads=True):
        """Records a tape for a batch (or a single sample) and returns it.

        param_grads=False skips parameter-gradient work in backward; input
        gradients are unaffected.
        """
        x = self._check_batch(x)
        tape = ad.Tape()
        node = tape.leaf(x, op="input")
        input_node = node
        param_nodes = []
        for layer, group in zip(self.layers, self.params):
            if isinstance(layer, Dense):
                w = tape.leaf(group[0], op="param", requires_grad=param_grads)
                b = tape.leaf(group[1], op="param", requires_grad=param_grads)
                param_nodes += [w, b]
                node = ad.add_row(tape, ad.matmul(tape, node, w), b)
            elif isinstance(layer, Conv2d):
                w = tape.leaf(group[0], op="param", requires_grad=param_grads)
                b = tape.leaf(group[1], op="param", requires_grad=param_grads)
                param_nodes += [w, b]
                node = ad.conv2d(tape, node, w, b, padding=layer.padding)
            elif isinstance(layer, ReLU):
                node = ad.relu(tape, node)
            elif isinstance(layer, MaxPool2):
                node = ad.maxpool2(tape, node)
            elif isinstance(layer, Flatten):
                node = ad.flatten(tape, node)
        return Forward(tape, input_node, node, param_nodes)

    def logits(self, x):
        """Batch logits as a plain array."""
        return self.forward(x).logits.data

    def probabilities(self, x):
        return ad.softmax(self.logits(x))

    def predict(self, x):
        return np.argmax(self.logits(x), axis=1)

    def input_gradients(self, x, selector):
        """Per-row input gradients of the selector's scalar, shape like x."""
        fwd = self.forward(x, param_grads=False)
        return fwd.backward(selector)


# ---------------------------------------------------------------------------
# spec-level operations


def build_model(input_shape, layers, seed=0):
    """Builds a ModelGraph with seeded uniform(+-1/sqrt(fan_in)) parameters."""
    rng = np.random.default_rng(seed)
    shape = tuple(input_shape)
    for layer in layers:  # validate the chain before allocating anything
        shape = _out_shape(layer, shape)
    params = [_init_params(layer, rng) for layer in layers]
    return ModelGraph(input_shape, layers, params)


def forward_eval(model, x):
    """Logits for one sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.input_shape:
        raise ShapeError(f"input shape {x.shape} != model {model.input_shape}")
    return model.logits(x)[0]


def grad_input(model, x, loss):
    """Exact input gradient of a scalar loss selector for one sample.

    `loss` is a selector (CrossEntropy / LogitValue); an int is shorthand
    for CrossEntropy(label). Parameters are left untouched.
    """
    if isinstance(loss, (int, np.integer)):
        loss = ad.CrossEntropy(int(loss))
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.input_shape:
        raise ShapeError(f"input shape {x.shape} != model {model.input_shape}")
    return model.input_gradients(x, loss)[0]


def finite_diff_gradient(model, x, loss, h=1e-4):
    """Central-difference input gradient, the independent oracle for grad_input."""
    if isinstance(loss, (int, np.integer)):
        loss = ad.CrossEntropy(int(loss))
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = np.vstack([flat, flat])
        bumped[0, i] += h
        bumped[1, i] -= h
        vals = loss.values(model.logits(bumped.reshape((2,) + x.shape)))
        grad[i] = (vals[0] - vals[1]) / (2.0 * h)
    return grad.reshape(x.shape)


softmax_cross_entropy = ad.softmax_cross_entropy


# ---------------------------------------------------------------------------
# weight serialization: magic "LAW1", little-endian throughout

_MAGIC = b"LAW1"
_VERSION = 1
_LAYER_CODES = {"dense": 1, "conv": 2, "relu": 3, "pool2": 4, "flatten": 5}
_PADDING_CODES = {"valid": 0, "same": 1}


def _layer_record(layer):
    if isinstance(layer, Dense):
        return (_LAYER_CODES["dense"], layer.in_dim, layer.out_dim, 0, 0, 0)
    if isinstance(layer, Conv2d):
        return (_LAYER_CODES["conv"], layer.in_channels, layer.out_channels,
                layer.kh, layer.kw, _PADDING_CODES[layer.padding])
    if isinstance(layer, ReLU):
        return (_LAYER_CODES["relu"], 0, 0, 0, 0, 0)
    if isinstance(layer, MaxPool2):
        return (_LAYER_CODES["pool2"], 0, 0, 0, 0, 0)
    if isinstance(layer, Flatten):
        return (_LAYER_CODES["flatten"], 0, 0, 0, 0, 0)
    raise ShapeError(f"unknown layer {layer!r}")


def _layer_from_record(rec):
    code = rec[0]
    if code == _LAYER_CODES["dense"]:
        return Dense(rec[1], rec[2])
    if code == _LAYER_CODES["conv"]:
        padding = {v: k for k, v in _PADDING_CODES.items()}.get(rec[5])
        if padding is None:
            raise FormatError(f"bad padding code {rec[5]}")
        return Conv2d(rec[1], rec[2], rec[3], rec[4], padding)
    if code == _LAYER_CODES["relu"]:
        return ReLU()
    if code == _LAYER_CODES["pool2"]:
        return MaxPool2()
    if code == _LAYER_CODES["flatten"]:
        return Flatten()
    raise FormatError(f"unknown layer code {code}")


def save_weights(model, path):
    """Writes the documented LAW1 binary: header, layer table, raw float64."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<I", len(model.input_shape)))
        f.write(struct.pack(f"<{len(model.input_shape)}I", *model.input_shape))
        f.write(struct.pack("<I", len(model.layers)))
        for layer in model.layers:
            f.write(struct.pack("<6I", *_layer_record(layer)))
        payload = np.concatenate([a.ravel() for group in model.params for a in group]
                                 or [np.empty(0)])
        f.write(struct.pack("<Q", payload.size))
        f.write(payload.astype("<f8").tobytes())


def load_weights(path):
    """Reads a LAW1 file back into a ModelGraph; rejects malformed files."""
    with open(path, "rb") as f:
        blob = f.read()

    def take(fmt, offset):
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise FormatError("truncated weight file")
        return struct.unpack_from(fmt, blob, offset), offset + size

    if blob[:4] != _MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}")
    (version,), off = take("<I", 4)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}")
    (ndim,), off = take("<I", off)
    input_shape, off = take(f"<{ndim}I", off)
    (n_layers,), off = take("<I", off)
    layers = []
    for _ in range(n_layers):
        rec, off = take("<6I", off)
        layers.append(_layer_from_record(rec))
    (count,), off = take("<Q", off)
    if off + 8 * count > len(blob):
        raise FormatError("truncated parameter payload")
    payload = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
    params = []
    pos = 0
    for layer in layers:
        group = []
        for shape in _param_shapes(layer):
            n = int(np.prod(shape))
            if pos + n > payload.size:
                raise FormatError("parameter payload shorter than layer table")
            group.append(payload[pos:pos + n].reshape(shape).copy())
            pos += n
        params.append(tuple(group))
    if pos != payload.size:
        raise FormatError("parameter payload longer than layer table")
    return ModelGraph(input_shape, layers, params)


def _param_shapes(layer):
    if isinstance(layer, Dense):
        return ((layer.in_dim, layer.out_dim), (layer.out_dim,))
    if isinstance(layer, Conv2d):
        return ((layer.out_channels, layer.in_channels, layer.kh, layer.kw),
                (layer.out_channels,))
    return ()


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass(frozen=True)
class TrainResult:
    model: "ModelGraph"
    train_accuracy: float


def accuracy(model, inputs, labels, chunk=256):
    hits = 0
    for start in range(0, len(inputs), chunk):
        pred = model.predict(inputs[start:start + chunk])
        hits += int((pred == labels[start:start + chunk]).sum())
    return hits / len(inputs)


def train_sgd(model, dataset, cfg):
    """Plain mini-batch SGD on mean cross-entropy; the input model is untouched."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if dataset.input_shape != model.input_shape:
        raise ShapeError(f"dataset shape {dataset.input_shape} != model {model.input_shape}")
    if dataset.n_classes > model.n_classes:
        raise ShapeError("dataset has more classes than the model emits")
    params = [[a.copy() for a in group] for group in model.params]
    rng = np.random.default_rng(cfg.seed)
    x_all, y_all = dataset.inputs, dataset.labels
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x_all))
        for start in range(0, len(order), cfg.batch_size):
            take = order[start:start + cfg.batch_size]
            current = model.with_params(params)
            fwd = current.forward(x_all[take])
            loss = ad.cross_entropy_sum(fwd.tape, fwd.logits, y_all[take])
            loss = ad.scale(fwd.tape, loss, 1.0 / len(take))
            fwd.tape.backward(loss)
            step = cfg.learning_rate
            flat = [a for group in params for a in group]
            for arr, node in zip(flat, fwd.param_nodes):
                arr -= step * node.grad
    trained = model.with_params(params)
    return TrainResult(trained, accuracy(trained, x_all, y_all))


# ---------------------------------------------------------------------------
# functionally equivalent twins (used by the invariance diagnostics)


def permute_hidden_units(model, dense_index, permutation):
    """Permutes one dense layer's output units and the next layer's inputs.

    The twin computes the same function as the original model.
    """
    perm = np.asarray(permutation, dtype=np.int64)
    dense_positions = [i for i, l in enumerate(model.layers) if isinstance(l, Dense)]
    pos = dense_positions[dense_index]
    nxt = dense_positions[dense_index + 1]
    params = [list(group) for group in model.params]
    w, b = params[pos]
    params[pos] = [w[:, perm], b[perm]]
    w2, b2 = params[nxt]
    params[nxt] = [w2[perm, :], b2]
    return model.with_params([tuple(g) for g in params])


def insert_identity_layer(model, position):
    """Inserts a dense identity (W=I, b=0) at `position`; input must be flat there."""
    shape = model.input_shape
    for layer in model.layers[:position]:
        shape = _out_shape(layer, shape)
    if len(shape) != 1:
        raise ShapeError("identity layer needs a flat activation at that position")
    n = shape[0]
    layers = list(model.layers)
    params = [tuple(group) for group in model.params]
    layers.insert(position, Dense(n, n))
    params.insert(position, (np.eye(n), np.zeros(n)))
    return ModelGraph(model.input_shape, layers, params)
