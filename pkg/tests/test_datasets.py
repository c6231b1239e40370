import numpy as np
import pytest

import localattr as la
from localattr.datasets import read_ppm, write_idx
from localattr.errors import FormatError
from localattr.heatmap import write_ppm


def idx_bytes(array):
    array = np.asarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim])
    header += b"".join(int(d).to_bytes(4, "big") for d in array.shape)
    return header + array.tobytes()


class TestIdx:
    def test_image_file_magic_and_dims(self, tmp_path, rng):
        images = (rng.random((10, 28, 28)) * 255).astype(np.uint8)
        labels = rng.integers(0, 10, size=10).astype(np.uint8)
        (tmp_path / "images.idx").write_bytes(idx_bytes(images))
        (tmp_path / "labels.idx").write_bytes(idx_bytes(labels))
        blob = (tmp_path / "images.idx").read_bytes()
        assert int.from_bytes(blob[:4], "big") == 0x00000803
        data = la.load_dataset(tmp_path, "idx")
        assert len(data) == 10
        assert data.input_shape == (1, 28, 28)
        assert np.array_equal(data.inputs[0, 0], images[0] / 255.0)
        assert 0.0 <= data.inputs.min() and data.inputs.max() <= 1.0

    def test_label_count_mismatch(self, tmp_path, rng):
        write_idx(tmp_path / "images.idx", (rng.random((4, 5, 5)) * 255).astype(np.uint8))
        write_idx(tmp_path / "labels.idx", np.array([0, 1, 0], dtype=np.uint8))
        with pytest.raises(FormatError):
            la.load_dataset(tmp_path, "idx")

    def test_vector_data(self, tmp_path):
        write_idx(tmp_path / "x.idx", np.array([[0, 0], [0, 255], [255, 0], [255, 255]],
                                               dtype=np.uint8))
        write_idx(tmp_path / "y.idx", np.array([0, 1, 1, 0], dtype=np.uint8))
        data = la.load_dataset(tmp_path, "idx")
        assert data.input_shape == (2,)
        assert data.inputs.max() == 1.0

    def test_bad_magic(self, tmp_path):
        (tmp_path / "images.idx").write_bytes(b"\x01\x02\x03\x04" + b"\x00" * 8)
        (tmp_path / "labels.idx").write_bytes(idx_bytes(np.zeros(2, dtype=np.uint8)))
        with pytest.raises(FormatError):
            la.load_dataset(tmp_path, "idx")

    def test_truncated_payload(self, tmp_path):
        blob = idx_bytes(np.zeros((3, 4, 4), dtype=np.uint8))
        (tmp_path / "images.idx").write_bytes(blob[:-5])
        (tmp_path / "labels.idx").write_bytes(idx_bytes(np.zeros(3, dtype=np.uint8)))
        with pytest.raises(FormatError):
            la.load_dataset(tmp_path, "idx")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(FormatError):
            la.load_dataset(tmp_path, "csv")


class TestImageDir:
    def _write_class_images(self, root, rng):
        for label, cls in enumerate(["cat", "dog"]):
            sub = root / cls
            sub.mkdir(parents=True)
            for i in range(3):
                rgb = (rng.random((4, 4, 3)) * 255).astype(np.uint8)
                write_ppm(sub / f"img_{i}.ppm", rgb)

    def test_two_classes_three_files(self, tmp_path, rng):
        self._write_class_images(tmp_path, rng)
        data = la.load_dataset(tmp_path, "image-dir")
        assert len(data) == 6
        assert data.n_classes == 2
        assert data.labels.tolist() == [0, 0, 0, 1, 1, 1]
        assert data.input_shape == (3, 4, 4)

    def test_roundtrip_values(self, tmp_path):
        rgb = np.arange(48, dtype=np.uint8).reshape(4, 4, 3)
        write_ppm(tmp_path / "x.ppm", rgb)
        assert np.array_equal(read_ppm(tmp_path / "x.ppm"), rgb)

    def test_inconsistent_shapes(self, tmp_path, rng):
        self._write_class_images(tmp_path, rng)
        write_ppm(tmp_path / "dog" / "odd.ppm",
                  (rng.random((5, 5, 3)) * 255).astype(np.uint8))
        with pytest.raises(FormatError):
            la.load_dataset(tmp_path, "image-dir")

    def test_png_when_pillow_present(self, tmp_path, rng):
        pytest.importorskip("PIL")
        from PIL import Image

        for label, cls in enumerate(["a", "b"]):
            sub = tmp_path / cls
            sub.mkdir()
            arr = (rng.random((4, 4, 3)) * 255).astype(np.uint8)
            Image.fromarray(arr).save(sub / "x.png")
        data = la.load_dataset(tmp_path, "image-dir")
        assert len(data) == 2 and data.input_shape == (3, 4, 4)


class TestDatasetInvariants:
    def test_values_outside_unit_interval_rejected(self):
        with pytest.raises(FormatError):
            la.make_dataset(np.array([[1.5]]), np.array([0]), 2)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(FormatError):
            la.make_dataset(np.array([[0.5]]), np.array([3]), 2)

    def test_deterministic_order(self, tmp_path, rng):
        write_idx(tmp_path / "images.idx", (rng.random((6, 3, 3)) * 255).astype(np.uint8))
        write_idx(tmp_path / "labels.idx", np.arange(6, dtype=np.uint8))
        a = la.load_dataset(tmp_path, "idx")
        b = la.load_dataset(tmp_path, "idx")
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, b.labels)
