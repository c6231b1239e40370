"""Insertion/Deletion evaluation.

Every scalar input dimension is ranked and flipped independently (channels
are not grouped), the tracked probability is the model's own predicted
class at the untouched sample, and curve areas use the trapezoidal rule.
Curve states are evaluated one at a time so endpoint probabilities are
bit-identical to standalone model evaluations.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

# renamed from trapz in numpy 2.0
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def rank_dimensions(values):
    """Dimension indices sorted by attribution, descending; ties keep index order."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    if np.isnan(flat).any():
        raise ValueError("NaN in attribution values")
    return np.argsort(-flat, kind="stable")


def _check_ranking(ranking, n):
    ranking = np.asarray(ranking, dtype=np.int64)
    if ranking.shape != (n,) or not np.array_equal(np.sort(ranking), np.arange(n)):
        raise ValueError("ranking must be a permutation of all input dimensions")
    return ranking


@dataclass(frozen=True)
class MetricCurve:
    fractions: np.ndarray
    probabilities: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fractions.tolist(), self.probabilities.tolist()))


def auc(points):
    """Trapezoidal area under (fraction, probability) points spanning [0,1]."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least two (fraction, value) points")
    f, y = pts[:, 0], pts[:, 1]
    if np.any(np.diff(f) <= 0):
        raise ValueError("fractions must be strictly increasing")
    if f[0] != 0.0 or f[-1] != 1.0:
        raise ValueError("fractions must span [0, 1]")
    return float(_trapezoid(y, f))


def _fractions_and_counts(n_dims, n_points):
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    fractions = np.arange(n_points) / (n_points - 1)
    counts = np.floor(fractions * n_dims + 0.5).astype(np.int64)
    return fractions, counts


def _curve_states(x, ranking, baseline, n_points, kind):
    """Yields (fraction, state); states share memory, callers must not keep them."""
    flat_x = x.ravel()
    flat_b = baseline.ravel()
    fractions, counts = _fractions_and_counts(flat_x.size, n_points)
    state = (flat_b if kind == "insertion" else flat_x).copy()
    source = flat_x if kind == "insertion" else flat_b
    prev = 0
    for frac, k in zip(fractions, counts):
        take = ranking[prev:k]
        state[take] = source[take]
        prev = k
        yield frac, state.reshape(x.shape)


def _probability_curve(model, x, ranking, baseline, n_points, kind):
    x = np.asarray(x, dtype=np.float64)
    ranking = _check_ranking(ranking, x.size)
    if baseline is None:
        baseline = np.zeros_like(x)
    baseline = np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ValueError(f"baseline shape {baseline.shape} != input {x.shape}")
    target = int(np.argmax(model.logits(x)[0]))
    fractions, probs = [], []
    for frac, state in _curve_states(x, ranking, baseline, n_points, kind):
        p = ad.softmax(model.logits(state)[0])[target]
        fractions.append(frac)
        probs.append(float(p))
    fractions = np.array(fractions)
    probs = np.array(probs)
    return MetricCurve(fractions, probs, auc(np.column_stack([fractions, probs])))


def insertion_curve(model, x, ranking, baseline=None, n_points=101):
    """Probability of the predicted class as ranked dimensions are restored
    from the baseline; first point is pure baseline, last is the original x."""
    return _probability_curve(model, x, ranking, baseline, n_points, "insertion")


def deletion_curve(model, x, ranking, baseline=None, n_points=101):
    """Mirror of insertion: top-ranked dimensions are replaced by baseline
    values first; the first point is the untouched x."""
    return _probability_curve(model, x, ranking, baseline, n_points, "deletion")


def linear_model_oracle(weights, bias, x, ranking, baseline=None, n_points=101,
                        kind="insertion"):
    """Closed-form insertion/deletion curve for affine logits.

    Same contract as the engine-backed curves but computed directly from
    weights @ state + bias, so it is an independent check on them.
    """
    if kind not in ("insertion", "deletion"):
        raise ValueError(f"unknown curve kind {kind!r}")
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    ranking = _check_ranking(ranking, x.size)
    if baseline is None:
        baseline = np.zeros_like(x)
    baseline = np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ValueError(f"baseline shape {baseline.shape} != input {x.shape}")

    def prob(state, cls):
        z = weights @ state.ravel() + bias
        shifted = z - z.max()
        e = np.exp(shifted)
        return float(e[cls] / e.sum())

    target = int(np.argmax(weights @ x.ravel() + bias))
    fractions, probs = [], []
    for frac, state in _curve_states(x, ranking, baseline, n_points, kind):
        fractions.append(frac)
        probs.append(prob(state, target))
    fractions = np.array(fractions)
    probs = np.array(probs)
    return MetricCurve(fractions, probs, auc(np.column_stack([fractions, probs])))


def save_curve_csv(curve, path):
    with open(path, "w") as f:
        f.write("fraction,probability\n")
        for frac, p in zip(curve.fractions, curve.probabilities):
            f.write(f"{float(frac)!r},{float(p)!r}\n")
