import numpy as np
import pytest

import localattr as la

DIGITS_TRAIN_CFG = la.TrainConfig(learning_rate=0.2, epochs=30, batch_size=32, seed=0)
CNN_LAYERS = [
    la.Conv2d(1, 8, 3, 3, "same"), la.ReLU(), la.MaxPool2(),
    la.Conv2d(8, 16, 3, 3, "same"), la.ReLU(), la.MaxPool2(),
    la.Flatten(), la.Dense(64, 10),
]


def digits_arrays():
    """8x8 digit images scaled to [0,1], deterministic 3:1 train/test split."""
    from sklearn.datasets import load_digits

    digits = load_digits()
    x = (digits.images / 16.0)[:, None, :, :]
    y = digits.target.astype(np.int64)
    test_mask = np.arange(len(x)) % 4 == 0
    return (x[~test_mask], y[~test_mask]), (x[test_mask], y[test_mask])


@pytest.fixture(scope="session")
def digits_split():
    return digits_arrays()


@pytest.fixture(scope="session")
def digits_cnn(digits_split):
    """CNN trained once per session; shared by attribution and acceptance tests."""
    (xtr, ytr), _ = digits_split
    model = la.build_model((1, 8, 8), CNN_LAYERS, seed=0)
    return la.train_sgd(model, la.make_dataset(xtr, ytr, 10), DIGITS_TRAIN_CFG).model


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_mlp(seed, in_dim=6, hidden=12, classes=4):
    layers = [la.Dense(in_dim, hidden), la.ReLU(), la.Dense(hidden, classes)]
    return la.build_model((in_dim,), layers, seed=seed)


def random_cnn(seed, side=6, classes=3):
    layers = [la.Conv2d(1, 3, 3, 3, "same"), la.ReLU(), la.MaxPool2(),
              la.Flatten(), la.Dense(3 * (side // 2) ** 2, classes)]
    return la.build_model((1, side, side), layers, seed=seed)
