"""Embedding matrices keyed by concept tuples, the on-disk dump format,
PCA whitening, and probe-span projection.

The dump format is a directory holding a UTF-8 key=value manifest plus raw
little-endian payloads: float32 row-major embeddings and uint16 row-major
labels (k per row).  Payload bytes round-trip bit-exactly; anything that can
write two flat binary files and a text file can produce a dump.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .concept_space import ConceptSpace, make_space

MAGIC = "CGLAB1"
MANIFEST_NAME = "manifest.txt"
EMBEDDINGS_NAME = "embeddings.bin"
LABELS_NAME = "labels.bin"


class DumpFormatError(ValueError):
    """Malformed manifest or payload/manifest size disagreement."""


@dataclass
class EmbeddingSet:
    """Rows of d-dimensional embeddings, one concept tuple per row.

    `data` is float64 in memory (all downstream numerics run in f64); dumps
    store float32, so values written to disk must be f32-representable if a
    bit-exact round trip is required.  Multiple rows may share a tuple.
    """

    space: ConceptSpace
    data: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("data must be a 2-d array")
        if data.shape[0] == 0:
            raise ValueError("embedding set needs at least one row")
        if data.shape[1] < 1:
            raise ValueError("embedding dimension must be >= 1")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (data.shape[0], self.space.k):
            raise ValueError(
                f"labels shape {labels.shape} does not match "
                f"(rows={data.shape[0]}, k={self.space.k})")
        cards = np.asarray(self.space.cardinalities, dtype=np.int64)
        if (labels < 0).any() or (labels >= cards[None, :]).any():
            raise ValueError("label value out of range for its concept")
        self.data = data
        self.labels = labels
        self.meta = {str(k): str(v) for k, v in self.meta.items()}

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def rows_for(self, t: Sequence[int]) -> np.ndarray:
        """Row indices whose label equals tuple `t`."""
        t = self.space.validate_tuple(t)
        return np.nonzero((self.labels == np.asarray(t)).all(axis=1))[0]


# --- manifest helpers (shared by the factor/probe serializers) --------------


def write_manifest(path: Path, entries: dict) -> None:
    lines = []
    for key, value in entries.items():
        key, value = str(key), str(value)
        if any(c in key for c in "=\n") or "\n" in value:
            raise DumpFormatError(f"illegal character in manifest entry {key!r}")
        lines.append(f"{key}={value}")
    (path / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


def update_manifest(path: Path, entries: dict) -> None:
    """Merge `entries` into an existing manifest (so embeddings, factors,
    and probes can share one dump directory); shared geometry keys must
    agree with what is already recorded."""
    path = Path(path)
    merged = {}
    if (path / MANIFEST_NAME).is_file():
        merged = read_manifest(path)
        for key in ("magic", "k", "cardinalities", "d", "dtype"):
            if key in merged and str(entries.get(key, merged[key])) != merged[key]:
                raise DumpFormatError(
                    f"manifest key {key!r} conflicts with existing dump: "
                    f"{entries[key]!r} vs {merged[key]!r}")
    merged.update({str(k): str(v) for k, v in entries.items()})
    write_manifest(path, merged)


def read_manifest(path: Path) -> dict:
    mpath = Path(path) / MANIFEST_NAME
    if not mpath.is_file():
        raise DumpFormatError(f"missing manifest at {mpath}")
    entries = {}
    for lineno, line in enumerate(mpath.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise DumpFormatError(f"malformed manifest line {lineno}: {line!r}")
        key, value = line.split("=", 1)
        entries[key] = value
    if entries.get("magic") != MAGIC:
        raise DumpFormatError(f"bad magic {entries.get('magic')!r}, want {MAGIC!r}")
    return entries


def write_matrix_f32(path: Path, matrix: np.ndarray) -> None:
    np.ascontiguousarray(matrix, dtype="<f4").tofile(path)


def read_matrix_f32(path: Path, rows: int, cols: int) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != rows * cols:
        raise DumpFormatError(
            f"{path.name}: expected {rows}x{cols} f32 values, found {raw.size}")
    return raw.reshape(rows, cols).astype(np.float64)


def parse_cardinalities(manifest: dict) -> ConceptSpace:
    try:
        k = int(manifest["k"])
        cards = [int(x) for x in manifest["cardinalities"].split(",")]
        dim = int(manifest["d"])
    except (KeyError, ValueError) as exc:
        raise DumpFormatError(f"manifest missing or malformed field: {exc}") from exc
    if len(cards) != k:
        raise DumpFormatError(f"manifest k={k} but {len(cards)} cardinalities")
    if dim < 1:
        raise DumpFormatError(f"manifest d={dim} invalid")
    return make_space(cards)


def base_manifest(space: ConceptSpace, d: int) -> dict:
    return {
        "magic": MAGIC,
        "k": space.k,
        "cardinalities": ",".join(str(n) for n in space.cardinalities),
        "d": d,
        "dtype": "f32le",
    }


# --- embedding dumps ---------------------------------------------------------


def write_dump(eset: EmbeddingSet, path) -> None:
    """Write `eset` as a dump directory (f32le payloads, u16le labels)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if any(n > 65536 for n in eset.space.cardinalities):
        raise DumpFormatError("cardinality exceeds u16 label range")
    entries = base_manifest(eset.space, eset.d)
    entries["rows"] = eset.rows
    entries["label_dtype"] = "u16le"
    entries["embeddings"] = EMBEDDINGS_NAME
    entries["labels"] = LABELS_NAME
    for key, value in sorted(eset.meta.items()):
        entries[f"meta.{key}"] = value
    update_manifest(path, entries)
    write_matrix_f32(path / EMBEDDINGS_NAME, eset.data)
    np.ascontiguousarray(eset.labels, dtype="<u2").tofile(path / LABELS_NAME)


def read_dump(path) -> EmbeddingSet:
    """Read a dump directory back into an EmbeddingSet."""
    path = Path(path)
    manifest = read_manifest(path)
    space = parse_cardinalities(manifest)
    try:
        rows = int(manifest["rows"])
    except (KeyError, ValueError) as exc:
        raise DumpFormatError(f"manifest missing row count: {exc}") from exc
    d = int(manifest["d"])
    data = read_matrix_f32(path / manifest.get("embeddings", EMBEDDINGS_NAME),
                           rows, d)
    raw_labels = np.fromfile(path / manifest.get("labels", LABELS_NAME),
                             dtype="<u2")
    if raw_labels.size != rows * space.k:
        raise DumpFormatError(
            f"labels payload holds {raw_labels.size} values, "
            f"expected {rows * space.k}")
    labels = raw_labels.reshape(rows, space.k).astype(np.int64)
    meta = {key[len("meta."):]: value for key, value in manifest.items()
            if key.startswith("meta.")}
    try:
        return EmbeddingSet(space, data, labels, meta)
    except ValueError as exc:
        raise DumpFormatError(str(exc)) from exc


# --- whitening ---------------------------------------------------------------


@dataclass(frozen=True)
class WhitenTransform:
    """PCA-whitening map fitted to a data matrix.

    basis columns are the retained principal directions; inv_scales are the
    reciprocals of the per-direction standard deviations, so the transform
    maps the fitting data to zero mean and unit variance per component.
    """

    mean: np.ndarray
    basis: np.ndarray        # d x r, orthonormal columns
    inv_scales: np.ndarray   # r positive floats
    rel_tol: float


def whiten_fit(matrix: np.ndarray, rel_tol: float = 1e-8) -> WhitenTransform:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValueError("whitening needs a 2-d matrix with >= 2 rows")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    # Singular values of centered/sqrt(rows-1) are per-direction std devs.
    _, svals, vt = np.linalg.svd(centered / np.sqrt(matrix.shape[0] - 1),
                                 full_matrices=False)
    if svals.size == 0 or svals[0] <= 0.0:
        raise ValueError("matrix has no retainable component (all rows equal)")
    keep = svals > rel_tol * svals[0]
    return WhitenTransform(mean=mean, basis=vt[keep].T.copy(),
                           inv_scales=1.0 / svals[keep], rel_tol=rel_tol)


def whiten_apply(transform: WhitenTransform, matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    return (matrix - transform.mean) @ transform.basis * transform.inv_scales


# --- probe-span projection ---------------------------------------------------


@dataclass(frozen=True)
class SpanProjector:
    """Orthogonal projector onto the row space of a stacked probe matrix."""

    basis: np.ndarray  # d x r, orthonormal columns

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def matrix(self) -> np.ndarray:
        return self.basis @ self.basis.T


def fit_span_projector(probe_weights: np.ndarray,
                       rel_tol: float = 1e-10) -> SpanProjector:
    weights = np.asarray(probe_weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] < 1:
        raise ValueError("need a non-empty 2-d probe matrix")
    _, svals, vt = np.linalg.svd(weights, full_matrices=False)
    if svals.size == 0 or svals[0] <= 0.0:
        raise ValueError("zero probe matrix has no span")
    keep = svals > rel_tol * svals[0]
    return SpanProjector(basis=vt[keep].T.copy())


def project(projector: SpanProjector, matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    return (matrix @ projector.basis) @ projector.basis.T
