"""Binary file formats, all little-endian with 4-byte magics:

* ``LDLD`` -- dataset: spec header, then images (float32) and labels
  (uint32) for the train / val / test splits.
* ``LDLM`` -- model: JSON header (architecture descriptor + metadata),
  then parameters as float32 in layer order.
* ``LDLZ`` -- label matrix: row count, class count, float32 rows. Used as
  the offline label cache (keyed by dataset + teacher-bank hashes in the
  file name) and for stored logits.

Round-trips are bit-exact; malformed input is rejected with the byte offset
of the first problem.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .data import Dataset, DatasetSpec, GuardedSplit, Split
from .errors import FormatError
from .nn import Network
from .nn.layers import build_layer

DATASET_MAGIC = b"LDLD"
MODEL_MAGIC = b"LDLM"
LABELS_MAGIC = b"LDLZ"
VERSION = 1


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_hash(obj) -> str:
    """Hash of a JSON-serializable object, independent of key order."""
    return sha256_bytes(json.dumps(obj, sort_keys=True).encode("utf-8"))[:16]


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if len(self.data) - self.offset < n:
            raise FormatError(
                f"truncated {what}: expected {n} bytes, got {len(self.data) - self.offset}",
                offset=self.offset,
            )
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def magic(self, expected: bytes) -> None:
        got = self.take(4, "magic")
        if got != expected:
            raise FormatError(f"bad magic {got!r}, expected {expected!r}", offset=0)

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self.take(8, what))[0]

    def f32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(count * 4, what)
        return np.frombuffer(raw, dtype="<f4", count=count).copy()

    def u32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(count * 4, what)
        return np.frombuffer(raw, dtype="<u4", count=count).copy()

    def done(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.offset} unexpected trailing bytes", offset=self.offset
            )


# -- dataset (LDLD) ---------------------------------------------------------


def serialize_dataset(ds: Dataset) -> bytes:
    spec = ds.spec
    parts = [
        DATASET_MAGIC,
        struct.pack("<I", VERSION),
        struct.pack(
            "<IIIIII", spec.grid, spec.channels, spec.classes, spec.n_train, spec.n_val, spec.n_test
        ),
        struct.pack("<d", spec.noise_sigma),
        struct.pack("<Q", spec.seed),
        struct.pack("<I", spec.jitter),
    ]
    for split in (ds.train, ds.val, ds.test._split if isinstance(ds.test, GuardedSplit) else ds.test):
        parts.append(split.images.astype("<f4").tobytes())
        parts.append(split.labels.astype("<u4").tobytes())
    return b"".join(parts)


def parse_dataset(data: bytes) -> Dataset:
    r = _Reader(data)
    r.magic(DATASET_MAGIC)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}", offset=4)
    grid, channels, classes, n_train, n_val, n_test = struct.unpack(
        "<IIIIII", r.take(24, "dataset header")
    )
    noise_sigma = r.f64("noise_sigma")
    seed = r.u64("seed")
    jitter = r.u32("jitter")
    spec = DatasetSpec(
        classes=classes,
        n_train=n_train,
        n_val=n_val,
        n_test=n_test,
        noise_sigma=noise_sigma,
        seed=seed,
        grid=grid,
        channels=channels,
        jitter=jitter,
    )
    splits = []
    for name, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        count = n * channels * grid * grid
        images = r.f32_array(count, f"{name} images").reshape(n, channels, grid, grid)
        labels = r.u32_array(n, f"{name} labels").astype(np.int64)
        splits.append(Split(images=images, labels=labels))
    r.done()
    return Dataset(spec=spec, train=splits[0], val=splits[1], test=GuardedSplit(splits[2]))


def save_dataset(ds: Dataset, path: str | Path) -> str:
    """Writes the dataset and returns its content hash."""
    data = serialize_dataset(ds)
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def load_dataset(path: str | Path) -> tuple[Dataset, str]:
    data = Path(path).read_bytes()
    return parse_dataset(data), sha256_bytes(data)


def dataset_hash(ds: Dataset) -> str:
    return sha256_bytes(serialize_dataset(ds))


# -- model (LDLM) ------------------------------------------------------------


def serialize_model(net: Network, meta: dict | None = None) -> bytes:
    header = json.dumps(
        {"arch": net.descriptor(), "meta": meta or {}}, sort_keys=True
    ).encode("utf-8")
    parts = [
        MODEL_MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<I", len(header)),
        header,
    ]
    for p in net.parameters():
        parts.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return b"".join(parts)


def parse_model(data: bytes) -> tuple[Network, dict]:
    r = _Reader(data)
    r.magic(MODEL_MAGIC)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported model version {version}", offset=4)
    header_len = r.u32("header length")
    header_offset = r.offset
    try:
        header = json.loads(r.take(header_len, "header").decode("utf-8"))
        arch = header["arch"]
        meta = header.get("meta", {})
        layers = [build_layer(d, i) for i, d in enumerate(arch["layers"])]
        net = Network(tuple(arch["input"]), layers, dtype=np.float32)
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad model header: {exc}", offset=header_offset) from exc
    arrays = []
    for shape in net.param_shapes():
        count = int(np.prod(shape))
        arrays.append(r.f32_array(count, f"parameter block {shape}").reshape(shape))
    r.done()
    net.set_parameters(arrays)
    return net, meta


def save_model(net: Network, path: str | Path, meta: dict | None = None) -> str:
    data = serialize_model(net, meta)
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def load_model(path: str | Path) -> tuple[Network, dict]:
    return parse_model(Path(path).read_bytes())


def model_file_hash(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


# -- label / logit matrix (LDLZ) ---------------------------------------------


def serialize_labels(rows: np.ndarray) -> bytes:
    rows = np.asarray(rows)
    if rows.ndim != 2:
        raise FormatError(f"label matrix must be 2-D, got shape {rows.shape}")
    return b"".join(
        [
            LABELS_MAGIC,
            struct.pack("<I", VERSION),
            struct.pack("<II", rows.shape[0], rows.shape[1]),
            rows.astype("<f4").tobytes(),
        ]
    )


def parse_labels(data: bytes) -> np.ndarray:
    r = _Reader(data)
    r.magic(LABELS_MAGIC)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported label-matrix version {version}", offset=4)
    n = r.u32("row count")
    k = r.u32("class count")
    rows = r.f32_array(n * k, "label rows").reshape(n, k)
    r.done()
    return rows


def save_labels(rows: np.ndarray, path: str | Path) -> str:
    data = serialize_labels(rows)
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def load_labels(path: str | Path) -> np.ndarray:
    return parse_labels(Path(path).read_bytes())
