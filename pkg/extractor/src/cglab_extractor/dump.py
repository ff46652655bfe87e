"""Standalone writer for the cglab dump directory format.

A dump is a directory with a UTF-8 key=value manifest plus two raw
little-endian payloads: float32 row-major embeddings and uint16 row-major
labels (one value per concept per row).  This module deliberately has no
dependency on the analysis package; the directory layout is the contract.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = "CGLAB1"
MANIFEST_NAME = "manifest.txt"
EMBEDDINGS_NAME = "embeddings.bin"
LABELS_NAME = "labels.bin"


def write_dump(path, embeddings: np.ndarray, labels: np.ndarray,
               cardinalities, meta: dict) -> Path:
    """Write one dump directory; returns the directory path.

    embeddings: (rows x d) float array, stored f32 little-endian.
    labels: (rows x k) integer array, each column i in [0, cardinalities[i]).
    meta: string map recorded as meta.<key> manifest entries.
    """
    path = Path(path)
    embeddings = np.asarray(embeddings)
    labels = np.asarray(labels)
    cards = [int(n) for n in cardinalities]
    if embeddings.ndim != 2 or embeddings.shape[0] == 0:
        raise ValueError("embeddings must be a non-empty (rows x d) matrix")
    if labels.shape != (embeddings.shape[0], len(cards)):
        raise ValueError(
            f"labels shape {labels.shape} does not match "
            f"(rows={embeddings.shape[0]}, k={len(cards)})")
    for i, n in enumerate(cards):
        if n < 2 or n > 65536:
            raise ValueError(f"cardinality {n} of concept {i} not in [2, 65536]")
        column = labels[:, i]
        if column.min() < 0 or column.max() >= n:
            raise ValueError(f"label out of range for concept {i}")
    path.mkdir(parents=True, exist_ok=True)
    lines = [
        f"magic={MAGIC}",
        f"k={len(cards)}",
        "cardinalities=" + ",".join(str(n) for n in cards),
        f"d={embeddings.shape[1]}",
        "dtype=f32le",
        f"rows={embeddings.shape[0]}",
        "label_dtype=u16le",
        f"embeddings={EMBEDDINGS_NAME}",
        f"labels={LABELS_NAME}",
    ]
    for key in sorted(meta):
        value = str(meta[key])
        if "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"illegal character in meta entry {key!r}")
        lines.append(f"meta.{key}={value}")
    (path / MANIFEST_NAME).write_text("\n".join(lines) + "\n",
                                      encoding="utf-8")
    np.ascontiguousarray(embeddings, dtype="<f4").tofile(
        path / EMBEDDINGS_NAME)
    np.ascontiguousarray(labels, dtype="<u2").tofile(path / LABELS_NAME)
    return path
