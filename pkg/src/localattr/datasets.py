"""Dataset ingestion: IDX files and per-class image directories.

All loaders scale pixel values to [0,1] and produce a deterministic sample
order. IDX headers are big-endian per the published format; PPM (P6) is
parsed natively and PNG via Pillow when installed.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import FormatError


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (n, *input_shape) float64 in [0,1]
    labels: np.ndarray  # (n,) int64
    n_classes: int

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise FormatError("label count != sample count")
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise FormatError("inputs must lie in [0,1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise FormatError("label out of range")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def input_shape(self):
        return self.inputs.shape[1:]


def make_dataset(inputs, labels, n_classes=None):
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(inputs, labels, int(n_classes))


# ---------------------------------------------------------------------------
# IDX

_IDX_UBYTE = 0x08


def _read_idx(path):
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4 or blob[0] != 0 or blob[1] != 0:
        raise FormatError(f"{path}: not an IDX file")
    dtype_code, ndim = blob[2], blob[3]
    if dtype_code != _IDX_UBYTE:
        raise FormatError(f"{path}: unsupported IDX dtype 0x{dtype_code:02x}")
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise FormatError(f"{path}: truncated IDX header")
    dims = [int.from_bytes(blob[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    count = int(np.prod(dims)) if dims else 0
    if len(blob) != header + count:
        raise FormatError(f"{path}: IDX payload size mismatch")
    data = np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(dims)
    return data


def write_idx(path, array):
    """Writes a uint8 array as IDX (used to stage datasets for the CLI)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(bytes([0, 0, _IDX_UBYTE, array.ndim]))
        for d in array.shape:
            f.write(int(d).to_bytes(4, "big"))
        f.write(array.tobytes())


def _load_idx_dir(path):
    images = labels = None
    for name in sorted(os.listdir(path)):
        full = os.path.join(path, name)
        if not os.path.isfile(full):
            continue
        try:
            arr = _read_idx(full)
        except FormatError:
            continue
        if arr.ndim == 1:
            if labels is not None:
                raise FormatError(f"{path}: multiple IDX label files")
            labels = arr
        elif arr.ndim in (2, 3):
            if images is not None:
                raise FormatError(f"{path}: multiple IDX data files")
            images = arr
    if images is None or labels is None:
        raise FormatError(f"{path}: need one IDX data file and one IDX label file")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{path}: {labels.shape[0]} labels for {images.shape[0]} samples")
    if images.ndim == 3:  # (n,H,W) -> single-channel images
        inputs = images[:, None, :, :] / 255.0
    else:  # (n,d) vector data
        inputs = images / 255.0
    return make_dataset(inputs, labels.astype(np.int64))


# ---------------------------------------------------------------------------
# image directories

def read_ppm(path):
    """Reads a binary P6 PPM into a uint8 (H,W,3) array."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] != b"P6":
        raise FormatError(f"{path}: not a P6 PPM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos] in b" \t\r\n":
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and blob[pos] not in b" \t\r\n":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(v) for v in fields)
    except ValueError as exc:
        raise FormatError(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported")
    expected = width * height * 3
    if len(blob) - pos != expected:
        raise FormatError(f"{path}: PPM payload size mismatch")
    return np.frombuffer(blob, dtype=np.uint8, offset=pos).reshape(height, width, 3)


def _read_image(path):
    if path.lower().endswith(".ppm"):
        return read_ppm(path)
    if path.lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:
            raise FormatError("PNG support requires Pillow") from exc
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB") if img.mode not in ("L", "RGB") else img)
        return arr
    raise FormatError(f"{path}: unsupported image type")


def _load_image_dir(path):
    classes = sorted(d for d in os.listdir(path) if os.path.isdir(os.path.join(path, d)))
    if len(classes) < 2:
        raise FormatError(f"{path}: need at least two class subdirectories")
    inputs, labels = [], []
    for label, cls in enumerate(classes):
        cls_dir = os.path.join(path, cls)
        files = sorted(f for f in os.listdir(cls_dir)
                       if f.lower().endswith((".ppm", ".png")))
        for name in files:
            arr = _read_image(os.path.join(cls_dir, name))
            if arr.ndim == 2:
                arr = arr[:, :, None]
            inputs.append(arr.transpose(2, 0, 1) / 255.0)  # (C,H,W)
            labels.append(label)
    if not inputs:
        raise FormatError(f"{path}: no images found")
    shapes = {a.shape for a in inputs}
    if len(shapes) != 1:
        raise FormatError(f"{path}: inconsistent image shapes {sorted(shapes)}")
    return make_dataset(np.stack(inputs), np.array(labels), n_classes=len(classes))


def load_dataset(path, fmt="idx"):
    """Loads a dataset directory. fmt is 'idx' or 'image-dir'."""
    if not os.path.exists(path):
        raise FormatError(f"{path}: no such path")
    if fmt == "idx":
        return _load_idx_dir(path)
    if fmt == "image-dir":
        return _load_image_dir(path)
    raise FormatError(f"unknown dataset format {fmt!r}")
