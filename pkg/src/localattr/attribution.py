"""Local-space exploration attribution.

Importance scores come from sign-step exploration confined to a per-sample
box: an untargeted phase climbs the loss of the explained class while
targeted phases descend the loss of the next most probable classes, which
reaches parts of the box the untargeted gradient never points at. Every
explored state is scored with the explained label's loss gradient there,
contributing (state_change * gradient) per dimension, so summed attribution
equals the first-order loss change accumulated along the exploration.
Iterates restart from the original sample each step, which pins all visited
states inside the box (half radius for iterates, full radius for explored
states).
"""

import struct
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DomainError, FormatError, ShapeError


def epsilon_vector(x, s_range, mode="linear", eps_min=1e-3):
    """Per-dimension exploration radius.

    linear:   eps_i = max(|x_i| / s_range, eps_min)
    constant: eps_i = 1 / s_range  (the unit input range divided by s)
    """
    if s_range <= 0:
        raise ValueError("s_range must be positive")
    if eps_min < 0:
        raise ValueError("eps_min must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if mode == "linear":
        return np.maximum(np.abs(x) / s_range, eps_min)
    if mode == "constant":
        return np.full_like(x, 1.0 / s_range)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class LocalSpace:
    """Axis-aligned exploration box around one sample."""

    center: np.ndarray
    radius: np.ndarray
    mode: str
    s_range: float
    eps_min: float

    def contains(self, state, scale=1.0):
        return bool(np.all(np.abs(state - self.center) <= scale * self.radius))


def make_local_space(x, s_range=20.0, mode="linear", eps_min=1e-3):
    x = np.asarray(x, dtype=np.float64)
    return LocalSpace(x, epsilon_vector(x, s_range, mode, eps_min), mode,
                      float(s_range), float(eps_min))


def untargeted_step(x, grad, eps):
    """x + (eps/2) * sign(grad), clamped to [0,1]; sign(0) is 0."""
    x, grad, eps = (np.asarray(a, dtype=np.float64) for a in (x, grad, eps))
    if not (x.shape == grad.shape == eps.shape):
        raise ShapeError(f"shape mismatch {x.shape}/{grad.shape}/{eps.shape}")
    return np.clip(x + 0.5 * eps * np.sign(grad), 0.0, 1.0)


def targeted_step(x, grad_target, eps):
    """x - (eps/2) * sign(grad_target), clamped to [0,1]."""
    x, grad_target, eps = (np.asarray(a, dtype=np.float64) for a in (x, grad_target, eps))
    if not (x.shape == grad_target.shape == eps.shape):
        raise ShapeError(f"shape mismatch {x.shape}/{grad_target.shape}/{eps.shape}")
    return np.clip(x - 0.5 * eps * np.sign(grad_target), 0.0, 1.0)


def select_targets(probs, k):
    """The k most probable classes excluding the prediction itself.

    Ties resolve toward the lower class index; k is clamped to c-1.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ValueError("probs must be a vector")
    if abs(float(probs.sum()) - 1.0) > 1e-6:
        raise ValueError(f"probs sum to {probs.sum()}, not 1")
    if k < 0:
        raise ValueError("k must be >= 0")
    top = int(np.argmax(probs))
    order = [int(i) for i in np.argsort(-probs, kind="stable") if i != top]
    return order[:min(k, probs.shape[0] - 1)]


@dataclass(frozen=True)
class TraceStep:
    kind: str            # "untargeted" | "targeted"
    label: int           # explained label; grad and the scored loss use it
    steer_label: int     # label whose gradient sign aimed this step
    x_before: np.ndarray
    x_after: np.ndarray
    grad: np.ndarray          # d loss(x_before; label) / d x_before
    increment: np.ndarray     # (x_after - x_before) * grad
    raw_delta: np.ndarray     # +-(eps/2)*sign(steering grad), pre-clamp step
    origin_delta: np.ndarray  # pre-clamp offset of x_before from the origin

    def deviations_exact(self, eps):
        """True iff pre-clamp deviations are exact multiples of eps/2 within
        the box: |origin_delta|, |raw_delta| in {0, eps/2} elementwise and
        |origin_delta + raw_delta| <= eps."""
        half = 0.5 * eps
        for delta in (np.abs(self.origin_delta), np.abs(self.raw_delta)):
            if not np.all((delta == 0.0) | (delta == half)):
                return False
        return bool(np.all(np.abs(self.origin_delta + self.raw_delta) <= eps))


@dataclass
class ExplorationTrace:
    space: LocalSpace
    origin: np.ndarray
    label: int
    loss_kind: str
    steps: list = field(default_factory=list)
    # one estimator gradient per explored state: (n_phases) * n_iter in total
    gradient_evaluations: int = 0
    # extra backward passes that only aimed targeted steps
    steering_gradient_evaluations: int = 0


@dataclass(frozen=True)
class AttributionMap:
    values: np.ndarray
    method: str
    config: dict
    sample: np.ndarray = None  # the attributed input, when the method had one

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise DomainError("attribution values must be finite")
        if self.sample is not None and self.sample.shape != self.values.shape:
            raise ShapeError("attribution shape must match the attributed sample")


def _selector(loss_kind, labels):
    if loss_kind == "cross_entropy":
        return ad.CrossEntropy(labels)
    if loss_kind == "logit":
        return ad.LogitValue(labels)
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def explore(model, x, label, space, n_iter, targets=(), attack="both",
            loss_kind="cross_entropy"):
    """Runs the exploration phases and returns the full trace.

    The untargeted phase steers by the explained label's own gradient;
    each targeted phase steers by a target class gradient (with the
    opposite step sign) but is still scored with the explained label's
    gradient at the states it visits. Phases are independent given the
    starting sample, so each iteration evaluates all of them in one
    batched backward pass; that is arithmetic-for-arithmetic the
    per-phase loop.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    if attack not in ("both", "untargeted", "targeted"):
        raise ValueError(f"unknown attack kind {attack!r}")
    x = np.asarray(x, dtype=np.float64)
    label = int(label)
    eps = space.radius
    phases = []
    if attack in ("both", "untargeted"):
        phases.append(("untargeted", label))
    if attack in ("both", "targeted"):
        phases.extend(("targeted", int(t)) for t in targets)
    trace = ExplorationTrace(space, x, label, loss_kind)
    if not phases:
        return trace
    half = 0.5 * eps
    n_phases = len(phases)
    targeted_idx = [p for p, (kind, _) in enumerate(phases) if kind == "targeted"]
    signs = np.array([1.0 if kind == "untargeted" else -1.0 for kind, _ in phases])
    # one backward per iteration: steering rows for every phase, then scoring
    # rows (explained label) for the targeted phases
    row_labels = np.array([lab for _, lab in phases]
                          + [label] * len(targeted_idx), dtype=np.int64)
    iterates = np.repeat(x[None], n_phases, axis=0)
    origin_deltas = [np.zeros_like(x) for _ in phases]
    per_phase = [[] for _ in phases]
    for _ in range(n_iter):
        states = np.concatenate([iterates, iterates[targeted_idx]], axis=0)
        grads = model.input_gradients(states, _selector(loss_kind, row_labels))
        trace.gradient_evaluations += n_phases
        trace.steering_gradient_evaluations += len(targeted_idx)
        scoring = {p: grads[n_phases + j] for j, p in enumerate(targeted_idx)}
        for p, (kind, steer_label) in enumerate(phases):
            steer = grads[p]
            g = scoring.get(p, steer)  # untargeted: steering == scoring gradient
            delta = signs[p] * half * np.sign(steer)
            x_before = iterates[p].copy()  # iterates is overwritten below
            x_after = np.clip(x_before + delta, 0.0, 1.0)
            per_phase[p].append(TraceStep(kind, label, steer_label, x_before,
                                          x_after, g, (x_after - x_before) * g,
                                          delta, origin_deltas[p]))
            iterates[p] = np.clip(x + delta, 0.0, 1.0)  # restart from the original
            origin_deltas[p] = delta
    for steps in per_phase:
        trace.steps.extend(steps)
    return trace


def local_attribution(model, x, y, n_iter=20, space=None, k_targets=None,
                      attack="both"):
    """Attribution map for one sample plus the trace that produced it.

    The untargeted phase runs n_iter sign-ascent steps on the loss of y;
    each targeted phase runs n_iter sign-descent steps toward one of the
    k_targets next most probable classes. Every explored state is scored
    with the loss gradient of y, one estimator gradient per state:
    (k_targets + 1) * n_iter in total.
    """
    x = np.asarray(x, dtype=np.float64)
    if space is None:
        space = make_local_space(x)
    if k_targets is None:
        k_targets = min(model.n_classes - 1, 20)
    probs = ad.softmax(model.logits(x)[0])
    targets = select_targets(probs, k_targets)
    trace = explore(model, x, y, space, n_iter, targets, attack=attack)
    values = np.zeros_like(x)
    for step in trace.steps:
        values += step.increment
    amap = AttributionMap(values, "la", {
        "n_iter": int(n_iter),
        "s_range": space.s_range,
        "k_targets": int(k_targets),
        "mode": space.mode,
        "eps_min": space.eps_min,
        "attack": attack,
        "label": int(y),
        "targets": [int(t) for t in targets],
        "seed": None,
    }, sample=x)
    return amap, trace


CompletenessResidual = namedtuple(
    "CompletenessResidual", ["attr_total", "first_order_total", "loss_delta_total"])


def completeness_residual(trace, model):
    """First-order totals along the trace versus the realized loss change.

    attr_total and first_order_total are the same sum by construction; the
    gap |first_order_total - loss_delta_total| is the Taylor remainder and
    shrinks quadratically with the box radius on smooth models.
    """
    if not trace.steps:
        raise ValueError("empty trace")
    attr_total = 0.0
    first_order_total = 0.0
    for step in trace.steps:
        attr_total += float(step.increment.sum())
        first_order_total += float(((step.x_after - step.x_before) * step.grad).sum())
    labels = np.array([s.label for s in trace.steps], dtype=np.int64)
    selector = _selector(trace.loss_kind, labels)
    before = np.stack([s.x_before for s in trace.steps])
    after = np.stack([s.x_after for s in trace.steps])
    loss_before = selector.values(model.logits(before))
    loss_after = selector.values(model.logits(after))
    return CompletenessResidual(attr_total, first_order_total,
                                float((loss_after - loss_before).sum()))


def decision_preservation(trace, model):
    """Fraction of explored states that keep the original argmax decision."""
    if not trace.steps:
        raise ValueError("empty trace")
    original = int(model.predict(trace.origin)[0])
    states = np.stack([s.x_after for s in trace.steps])
    preds = model.predict(states)
    return float((preds == original).mean())


# ---------------------------------------------------------------------------
# attribution export: flat float64 binary with a shape header, plus CSV

_MAP_MAGIC = b"LAA1"


def save_attribution(amap, path):
    values = np.asarray(amap.values, dtype=np.float64)
    with open(path, "wb") as f:
        f.write(_MAP_MAGIC)
        f.write(struct.pack("<I", values.ndim))
        f.write(struct.pack(f"<{values.ndim}I", *values.shape))
        f.write(values.astype("<f8").tobytes())


def load_attribution(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAP_MAGIC:
        raise FormatError(f"bad attribution magic {blob[:4]!r}")
    (ndim,) = struct.unpack_from("<I", blob, 4)
    shape = struct.unpack_from(f"<{ndim}I", blob, 8)
    offset = 8 + 4 * ndim
    count = int(np.prod(shape))
    if len(blob) != offset + 8 * count:
        raise FormatError("attribution payload size mismatch")
    return np.frombuffer(blob, dtype="<f8", offset=offset).reshape(shape).copy()


def save_attribution_csv(amap, path):
    values = np.asarray(amap.values, dtype=np.float64).ravel()
    with open(path, "w") as f:
        f.write("index,value\n")
        for i, v in enumerate(values):
            f.write(f"{i},{float(v)!r}\n")
