"""LATC binary containers and dataset manifests.

File layout (all integers little-endian):

    offset  size  field
    0       4     magic  b"LATC"
    4       1     format version (currently 1)
    5       1     dtype code (1 = f32, 2 = i32)
    6       2     reserved, written as zeros
    8       8     rows (u64)
    16      8     cols (u64)
    24      ...   payload, row-major, rows*cols elements

f32 payloads must be finite; this is checked both when writing and when
reading. A manifest is a JSON document binding the classifier feature matrix,
one matrix per foundation model, logits and labels for a single split.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    InvalidShape,
    LabelOutOfRange,
    ManifestError,
    MissingFile,
    NonFiniteElement,
    RowCountMismatch,
    TruncatedPayload,
    UnsupportedDtype,
    UnsupportedVersion,
)

MAGIC = b"LATC"
VERSION = 1
HEADER = struct.Struct("<4sBBHQQ")

_DTYPE_CODE = {np.dtype("float32"): 1, np.dtype("int32"): 2}
_CODE_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<i4")}

SPLITS = ("pool", "validation", "test")


def write_container(matrix: np.ndarray, path: str | Path) -> None:
    """Write a 2-D f32 or i32 matrix to ``path`` in LATC format."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise InvalidShape(f"expected non-empty 2-D matrix, got shape {matrix.shape}")
    if matrix.dtype not in _DTYPE_CODE:
        if np.issubdtype(matrix.dtype, np.floating):
            matrix = matrix.astype(np.float32)
        elif np.issubdtype(matrix.dtype, np.integer):
            matrix = matrix.astype(np.int32)
        else:
            raise UnsupportedDtype(f"cannot store dtype {matrix.dtype}")
    if matrix.dtype == np.float32 and not np.all(np.isfinite(matrix)):
        raise NonFiniteElement("matrix contains NaN or Inf")
    rows, cols = matrix.shape
    header = HEADER.pack(MAGIC, VERSION, _DTYPE_CODE[matrix.dtype], 0, rows, cols)
    payload = np.ascontiguousarray(matrix, dtype=matrix.dtype.newbyteorder("<")).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_container(path: str | Path) -> np.ndarray:
    """Read an LATC file back into a matrix, validating every header field."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise TruncatedPayload(f"{path}: file shorter than header")
    magic, version, dtype_code, _reserved, rows, cols = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"{path}: magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}")
    if dtype_code not in _CODE_DTYPE:
        raise UnsupportedDtype(f"{path}: dtype code {dtype_code}")
    if rows < 1 or cols < 1:
        raise InvalidShape(f"{path}: header declares shape {rows}x{cols}")
    dtype = _CODE_DTYPE[dtype_code]
    expected = rows * cols * dtype.itemsize
    payload = raw[HEADER.size:]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    matrix = np.frombuffer(payload, dtype=dtype).reshape(rows, cols)
    if matrix.dtype == np.float32 and not np.all(np.isfinite(matrix)):
        raise NonFiniteElement(f"{path}: payload contains NaN or Inf")
    return matrix.copy()


@dataclass(frozen=True)
class Bundle:
    """All arrays of one manifest, loaded and cross-validated.

    ``labels`` is a flat int32 vector; arrays are immutable after loading and
    safe to share across threads.
    """

    classifier_features: np.ndarray
    foundation_features: list[tuple[str, np.ndarray]]
    logits: np.ndarray
    labels: np.ndarray
    split: str
    seed: int
    path: Path | None = None

    @property
    def n(self) -> int:
        return self.classifier_features.shape[0]

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]

    @property
    def model_ids(self) -> list[str]:
        return [mid for mid, _ in self.foundation_features]

    def correctness(self) -> np.ndarray:
        """1 where argmax(logits) equals the label, computed here and nowhere else."""
        return (np.argmax(self.logits, axis=1) == self.labels).astype(np.int8)


def load_manifest(path: str | Path) -> Bundle:
    """Load a manifest JSON plus every array it references.

    Relative paths resolve against the manifest's own directory. All arrays
    must share a row count and labels must lie in [0, C).
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: not valid JSON ({e})") from e
    for field in ("classifier_features", "foundation_features", "logits", "labels", "split", "seed"):
        if field not in doc:
            raise ManifestError(f"{path}: missing field {field!r}")
    if doc["split"] not in SPLITS:
        raise ManifestError(f"{path}: split must be one of {SPLITS}, got {doc['split']!r}")

    base = path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    classifier = read_container(resolve(doc["classifier_features"]))
    foundations = []
    for entry in doc["foundation_features"]:
        if not isinstance(entry, dict) or "model_id" not in entry or "path" not in entry:
            raise ManifestError(f"{path}: foundation entries need model_id and path")
        foundations.append((entry["model_id"], read_container(resolve(entry["path"]))))
    logits = read_container(resolve(doc["logits"]))
    labels_mat = read_container(resolve(doc["labels"]))
    labels = np.asarray(labels_mat).reshape(-1).astype(np.int64)

    n = classifier.shape[0]
    for name, arr in [("logits", logits), ("labels", labels)] + [
        (f"foundation_features[{mid}]", a) for mid, a in foundations
    ]:
        if arr.shape[0] != n:
            raise RowCountMismatch(
                f"{path}: {name} has {arr.shape[0]} rows, classifier_features has {n}"
            )
    c = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        bad = labels[(labels < 0) | (labels >= c)][0]
        raise LabelOutOfRange(f"{path}: label {bad} outside [0, {c})")
    return Bundle(
        classifier_features=classifier,
        foundation_features=foundations,
        logits=logits,
        labels=labels,
        split=doc["split"],
        seed=int(doc["seed"]),
        path=path,
    )


def save_bundle(
    out_dir: str | Path,
    classifier_features: np.ndarray,
    foundation_features: list[tuple[str, np.ndarray]],
    logits: np.ndarray,
    labels: np.ndarray,
    split: str,
    seed: int,
    manifest_name: str = "manifest.json",
) -> Path:
    """Write a bundle's arrays as LATC files plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_container(np.asarray(classifier_features, dtype=np.float32), out_dir / "classifier.latc")
    entries = []
    for mid, feats in foundation_features:
        fname = f"foundation_{mid}.latc"
        write_container(np.asarray(feats, dtype=np.float32), out_dir / fname)
        entries.append({"model_id": mid, "path": fname})
    write_container(np.asarray(logits, dtype=np.float32), out_dir / "logits.latc")
    write_container(np.asarray(labels, dtype=np.int32).reshape(-1, 1), out_dir / "labels.latc")
    manifest = {
        "classifier_features": "classifier.latc",
        "foundation_features": entries,
        "logits": "logits.latc",
        "labels": "labels.latc",
        "split": split,
        "seed": int(seed),
    }
    manifest_path = out_dir / manifest_name
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path
