"""Reference attribution methods: saliency, integrated gradients, smoothgrad,
and a seeded random control."""

import numpy as np

from . import autodiff as ad
from .attribution import AttributionMap
from .errors import ShapeError


def _grad(model, x, y, loss_kind):
    selector = ad.CrossEntropy(y) if loss_kind == "cross_entropy" else ad.LogitValue(y)
    return model.input_gradients(np.asarray(x, dtype=np.float64), selector)


def saliency(model, x, y, signed=False, loss_kind="cross_entropy"):
    """Gradient magnitude of the loss at x (signed variant behind a flag)."""
    g = _grad(model, x, y, loss_kind)[0]
    values = g if signed else np.abs(g)
    return AttributionMap(values, "sm", {"label": int(y), "signed": bool(signed),
                                         "seed": None}, sample=np.asarray(x, dtype=np.float64))


def integrated_gradients(model, x, y, baseline=None, steps=50,
                         loss_kind="cross_entropy", chunk=64):
    """Midpoint-rule path integral of gradients from baseline to x."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if baseline is None:
        baseline = np.zeros_like(x)
    baseline = np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ShapeError(f"baseline shape {baseline.shape} != input {x.shape}")
    alphas = (np.arange(steps) + 0.5) / steps
    states = baseline[None] + alphas.reshape((-1,) + (1,) * x.ndim) * (x - baseline)[None]
    total = np.zeros_like(x)
    for start in range(0, steps, chunk):
        total += _grad(model, states[start:start + chunk], y, loss_kind).sum(axis=0)
    values = (x - baseline) * (total / steps)
    return AttributionMap(values, "ig", {"label": int(y), "steps": int(steps),
                                         "seed": None}, sample=x)


def smoothgrad(model, x, y, sigma=0.15, n_samples=50, seed=0,
               loss_kind="cross_entropy", chunk=64):
    """Mean absolute gradient over n_samples Gaussian-perturbed copies of x."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    config = {"label": int(y), "sigma": float(sigma), "n_samples": int(n_samples),
              "seed": int(seed)}
    if sigma == 0.0:
        # degenerate noise: every sample is x itself, the mean is one gradient
        return AttributionMap(np.abs(_grad(model, x, y, loss_kind)[0]), "sg", config,
                              sample=x)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=(n_samples,) + x.shape)
    total = np.zeros_like(x)
    for start in range(0, n_samples, chunk):
        states = x[None] + noise[start:start + chunk]
        total += np.abs(_grad(model, states, y, loss_kind)).sum(axis=0)
    return AttributionMap(total / n_samples, "sg", config, sample=x)


def random_attribution(shape, seed=0):
    """I.i.d. uniform [0,1) scores; the control ranking for the metrics."""
    rng = np.random.default_rng(seed)
    return AttributionMap(rng.random(size=shape), "random", {"seed": int(seed)})
