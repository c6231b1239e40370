import numpy as np
import pytest

import localattr as la
from localattr.errors import FormatError, ShapeError

from conftest import random_cnn, random_mlp


class TestBuildModel:
    def test_parameter_count(self):
        model = la.build_model((2,), [la.Dense(2, 3), la.ReLU(), la.Dense(3, 2)])
        assert model.parameter_count == 2 * 3 + 3 + 3 * 2 + 2

    def test_seed_determinism(self):
        layers = [la.Dense(2, 3), la.ReLU(), la.Dense(3, 2)]
        a = la.build_model((2,), layers, seed=42)
        b = la.build_model((2,), layers, seed=42)
        for ga, gb in zip(a.params, b.params):
            for pa, pb in zip(ga, gb):
                assert np.array_equal(pa, pb)

    def test_broken_shape_chain(self):
        with pytest.raises(ShapeError):
            la.build_model((2,), [la.Dense(2, 3), la.Dense(4, 2)])

    def test_init_bounds(self):
        model = la.build_model((16,), [la.Dense(16, 8), la.ReLU(), la.Dense(8, 4)], seed=3)
        k = 1.0 / np.sqrt(16)
        w = model.params[0][0]
        assert np.abs(w).max() <= k

    def test_parameters_immutable(self):
        model = random_mlp(0)
        with pytest.raises(ValueError):
            model.params[0][0][0, 0] = 1.0

    def test_needs_two_classes(self):
        with pytest.raises(ShapeError):
            la.build_model((2,), [la.Dense(2, 1)])


class TestWeightRoundtrip:
    def test_logits_bitwise_equal(self, tmp_path, rng):
        for seed, model in ((0, random_mlp(0)), (1, random_cnn(1))):
            path = tmp_path / f"m{seed}.law"
            la.save_weights(model, path)
            loaded = la.load_weights(path)
            for _ in range(10):
                x = rng.random((1,) + model.input_shape)
                assert np.array_equal(model.logits(x), loaded.logits(x))

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.law"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError):
            la.load_weights(path)

    def test_truncated_payload(self, tmp_path):
        model = random_mlp(2)
        path = tmp_path / "m.law"
        la.save_weights(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 9])
        with pytest.raises(FormatError):
            la.load_weights(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.law"
        path.write_bytes(b"LAW1\x01\x00")
        with pytest.raises(FormatError):
            la.load_weights(path)

    def test_bad_version(self, tmp_path):
        model = random_mlp(2)
        path = tmp_path / "m.law"
        la.save_weights(model, path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            la.load_weights(path)


def xor_dataset():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    return la.make_dataset(x, np.array([0, 1, 1, 0]), 2)


class TestTrainSgd:
    def test_xor_reaches_full_accuracy(self):
        model = la.build_model((2,), [la.Dense(2, 8), la.ReLU(), la.Dense(8, 2)], seed=0)
        result = la.train_sgd(model, xor_dataset(),
                              la.TrainConfig(learning_rate=0.5, epochs=2000,
                                             batch_size=4, seed=0))
        assert result.train_accuracy == 1.0

    def test_zero_learning_rate_keeps_parameters(self):
        model = random_mlp(4, in_dim=2, hidden=4, classes=2)
        result = la.train_sgd(model, xor_dataset(),
                              la.TrainConfig(learning_rate=0.0, epochs=3,
                                             batch_size=2, seed=1))
        for ga, gb in zip(model.params, result.model.params):
            for pa, pb in zip(ga, gb):
                assert np.array_equal(pa, pb)

    def test_empty_dataset_rejected(self):
        model = random_mlp(0, in_dim=2, hidden=4, classes=2)
        empty = la.make_dataset(np.zeros((0, 2)), np.zeros(0, dtype=np.int64), 2)
        with pytest.raises(ValueError):
            la.train_sgd(model, empty, la.TrainConfig())

    def test_training_is_seed_deterministic(self):
        cfg = la.TrainConfig(learning_rate=0.3, epochs=50, batch_size=2, seed=9)
        runs = []
        for _ in range(2):
            model = la.build_model((2,), [la.Dense(2, 4), la.ReLU(), la.Dense(4, 2)], seed=9)
            runs.append(la.train_sgd(model, xor_dataset(), cfg).model)
        for ga, gb in zip(runs[0].params, runs[1].params):
            for pa, pb in zip(ga, gb):
                assert np.array_equal(pa, pb)

    def test_digits_cnn_accuracy_gate(self, digits_cnn, digits_split):
        _, (xte, yte) = digits_split
        assert la.models.accuracy(digits_cnn, xte, yte) >= 0.95


class TestTwins:
    def test_permuted_twin_same_function(self, rng):
        model = random_mlp(6)
        twin = la.permute_hidden_units(model, 0, rng.permutation(12))
        x = rng.random((5, 6))
        assert np.abs(model.logits(x) - twin.logits(x)).max() < 1e-12

    def test_identity_twin_same_function(self, rng):
        model = random_mlp(6)
        twin = la.insert_identity_layer(model, 2)
        assert len(twin.layers) == len(model.layers) + 1
        x = rng.random((5, 6))
        assert np.abs(model.logits(x) - twin.logits(x)).max() < 1e-12
