"""Additive per-concept factor recovery and reconstruction.

Embeddings over a concept grid may decompose as a shared offset plus one
vector per (concept, value).  Factor families producing the same sums only
differ by per-concept shifts, so the canonical representation used here
keeps each concept's factors summing to zero and carries the offset
explicitly.  Recovery is by conditional-mean averaging on balanced data or
by minimum-norm least squares on sparse/unbalanced data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .concept_space import ConceptSpace
from .embedding_store import (
    EmbeddingSet,
    base_manifest,
    parse_cardinalities,
    read_manifest,
    read_matrix_f32,
    update_manifest,
    write_matrix_f32,
)

FACTORS_NAME = "factors.bin"


class RankDeficientError(ValueError):
    """Observed tuples do not pin the factors down (up to shifts)."""

    def __init__(self, rank: int, required: int):
        self.rank = rank
        self.required = required
        super().__init__(
            f"design matrix rank {rank} < required {required} "
            f"(deficiency {required - rank})")


@dataclass
class FactorSet:
    """Per-concept factor vectors in canonical (zero-sum) form.

    factors[i] is an (n_i x d) matrix; mean is the shared d-vector offset.
    Each concept block sums to ~0, which is the unique gauge surviving the
    per-concept shift ambiguity.
    """

    space: ConceptSpace
    factors: list
    mean: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        if self.mean.ndim != 1:
            raise ValueError("mean must be a vector")
        d = self.mean.shape[0]
        if len(self.factors) != self.space.k:
            raise ValueError("need one factor block per concept")
        scale = max(1.0, max(float(np.abs(np.asarray(f)).max(initial=0.0))
                             for f in self.factors))
        blocks = []
        for i, block in enumerate(self.factors):
            block = np.asarray(block, dtype=np.float64)
            if block.shape != (self.space.cardinalities[i], d):
                raise ValueError(
                    f"factor block {i} has shape {block.shape}, expected "
                    f"({self.space.cardinalities[i]}, {d})")
            if np.abs(block.sum(axis=0)).max() > 1e-8 * scale:
                raise ValueError(f"factor block {i} is not zero-sum")
            blocks.append(block)
        self.factors = blocks

    @property
    def d(self) -> int:
        return self.mean.shape[0]


def canonicalize(space: ConceptSpace, raw_factors: Sequence[np.ndarray],
                 offset=None) -> FactorSet:
    """Re-center arbitrary factor blocks, folding block means into the offset.

    Reconstruction sums are preserved exactly: the per-concept means removed
    from the blocks are added onto the shared offset.
    """
    raw_factors = [np.asarray(f, dtype=np.float64) for f in raw_factors]
    d = raw_factors[0].shape[1]
    mean = np.zeros(d) if offset is None else np.asarray(offset, np.float64).copy()
    blocks = []
    for block in raw_factors:
        block_mean = block.mean(axis=0)
        centered = block - block_mean
        # kill residual rounding so the canonical invariant holds exactly
        centered -= centered.mean(axis=0)
        blocks.append(centered)
        mean = mean + block_mean
    return FactorSet(space, blocks, mean)


def reconstruct(factors: FactorSet, t: Sequence[int]) -> np.ndarray:
    """mean + sum of the tuple's per-concept factors."""
    t = factors.space.validate_tuple(t)
    out = factors.mean.copy()
    for i, v in enumerate(t):
        out += factors.factors[i][v]
    return out


def reconstruct_rows(factors: FactorSet, labels: np.ndarray) -> np.ndarray:
    """Vectorized `reconstruct` for an (rows x k) label matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.tile(factors.mean, (labels.shape[0], 1))
    for i in range(factors.space.k):
        out += factors.factors[i][labels[:, i]]
    return out


def recover_by_averaging(eset: EmbeddingSet) -> FactorSet:
    """Conditional-mean factors: average rows sharing each concept value.

    Rows are weighted equally (not tuples), so duplicated tuples count once
    per sample.  Every (concept, value) needs at least one row.
    """
    grand_mean = eset.data.mean(axis=0)
    raw = []
    for i, n in enumerate(eset.space.cardinalities):
        block = np.empty((n, eset.d))
        for j in range(n):
            mask = eset.labels[:, i] == j
            if not mask.any():
                raise ValueError(f"no sample with concept {i} = {j}")
            block[j] = eset.data[mask].mean(axis=0) - grand_mean
        raw.append(block)
    return canonicalize(eset.space, raw, offset=grand_mean)


@dataclass(frozen=True)
class DesignMatrix:
    """One-hot design over observed tuples: one column block per concept."""

    matrix: np.ndarray        # rows x sum(n_i), entries in {0, 1}
    block_starts: tuple       # column offset of each concept block

    @property
    def full_rank(self) -> int:
        """Largest achievable rank: 1 + sum_i (n_i - 1)."""
        widths = np.diff(np.append(self.block_starts, self.matrix.shape[1]))
        return int(1 + (widths - 1).sum())

    def rank(self, rel_tol: float = 1e-10) -> int:
        svals = np.linalg.svd(self.matrix, compute_uv=False)
        if svals.size == 0 or svals[0] == 0.0:
            return 0
        return int((svals > rel_tol * svals[0]).sum())


def build_design_matrix(space: ConceptSpace, labels: np.ndarray) -> DesignMatrix:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 2 or labels.shape[1] != space.k:
        raise ValueError("labels must be (rows x k)")
    starts, offset = [], 0
    for n in space.cardinalities:
        starts.append(offset)
        offset += n
    matrix = np.zeros((labels.shape[0], offset))
    rows = np.arange(labels.shape[0])
    for i, start in enumerate(starts):
        matrix[rows, start + labels[:, i]] = 1.0
    return DesignMatrix(matrix=matrix, block_starts=tuple(starts))


def recover_by_least_squares(eset: EmbeddingSet) -> FactorSet:
    """Minimum-norm least-squares factors from possibly sparse observations.

    Requires the design matrix over the observed labels to reach its maximal
    rank 1 + sum_i (n_i - 1); otherwise some factor differences are
    undetermined and a RankDeficientError reports the gap.
    """
    design = build_design_matrix(eset.space, eset.labels)
    rank = design.rank()
    if rank < design.full_rank:
        raise RankDeficientError(rank, design.full_rank)
    grand_mean = eset.data.mean(axis=0)
    centered = eset.data - grand_mean
    solution = np.linalg.pinv(design.matrix, rcond=1e-10) @ centered
    raw, offset = [], 0
    for n in eset.space.cardinalities:
        raw.append(solution[offset:offset + n])
        offset += n
    return canonicalize(eset.space, raw, offset=grand_mean)


# --- serialization in the dump layout ---------------------------------------


def write_factors(factors: FactorSet, path) -> None:
    """Store a factor set as a dump directory.

    The payload stacks the shared offset row followed by each concept block,
    f32 little-endian; the manifest records the per-concept block sizes.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = base_manifest(factors.space, factors.d)
    entries["kind"] = "factors"
    entries["factor_blocks"] = ",".join(
        str(n) for n in factors.space.cardinalities)
    entries["factors"] = FACTORS_NAME
    stacked = np.vstack([factors.mean[None, :]] + factors.factors)
    update_manifest(path, entries)
    write_matrix_f32(path / FACTORS_NAME, stacked)


def read_factors(path) -> FactorSet:
    path = Path(path)
    manifest = read_manifest(path)
    space = parse_cardinalities(manifest)
    d = int(manifest["d"])
    total = 1 + sum(space.cardinalities)
    stacked = read_matrix_f32(path / manifest.get("factors", FACTORS_NAME),
                              total, d)
    blocks, offset = [], 1
    for n in space.cardinalities:
        blocks.append(stacked[offset:offset + n])
        offset += n
    # f32 rounding can nudge the stored blocks off the zero-sum gauge
    return canonicalize(space, blocks, offset=stacked[0])
