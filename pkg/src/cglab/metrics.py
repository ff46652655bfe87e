"""Measurement stack: whitened projected R^2, factor orthogonality,
effective rank of factor blocks, and held-out compositional accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .concept_space import TrainingSupport
from .embedding_store import (
    EmbeddingSet,
    SpanProjector,
    fit_span_projector,
    project,
    whiten_apply,
    whiten_fit,
)
from .factor_model import FactorSet, reconstruct_rows
from .probe_trainer import ProbeBank, score_rows


@dataclass(frozen=True)
class R2Result:
    """1 - residual/total after the recorded projection/whitening pipeline."""

    r2: float
    numerator_ss: float
    denominator_ss: float
    pipeline: dict


def projected_whitened_r2(eset: EmbeddingSet, factors: FactorSet,
                          probes: Optional[ProbeBank] = None,
                          whiten: bool = True,
                          whiten_rel_tol: float = 1e-8,
                          whiten_before_projection: bool = False) -> R2Result:
    """Fraction of (processed) embedding variance explained by the factors.

    Pipeline: optionally project data and reconstructions onto the probe
    span, fit whitening on the processed data, apply the same transform to
    both, then score 1 - sum||z - z_hat||^2 / sum||z - z_bar||^2.  A score
    of 1 means the embeddings are exactly additive in the factors.
    """
    if factors.space != eset.space:
        raise ValueError("factor set and embedding set use different spaces")
    if factors.d != eset.d:
        raise ValueError("factor dimension does not match embeddings")
    data = eset.data
    recon = reconstruct_rows(factors, eset.labels)
    pipeline = {"projected": False, "whitened": False,
                "order": ("whiten_then_project" if whiten_before_projection
                          else "project_then_whiten")}

    def do_project(data, recon):
        projector = fit_span_projector(probes.stacked_weights())
        pipeline["projected"] = True
        pipeline["probe_span_rank"] = projector.rank
        return project(projector, data), project(projector, recon)

    def do_whiten(data, recon):
        transform = whiten_fit(data, rel_tol=whiten_rel_tol)
        pipeline["whitened"] = True
        pipeline["whiten_components"] = int(transform.basis.shape[1])
        return whiten_apply(transform, data), whiten_apply(transform, recon)

    if whiten and whiten_before_projection:
        data, recon = do_whiten(data, recon)
    if probes is not None:
        data, recon = do_project(data, recon)
    if whiten and not whiten_before_projection:
        data, recon = do_whiten(data, recon)

    residual = float(((data - recon) ** 2).sum())
    total = float(((data - data.mean(axis=0)) ** 2).sum())
    if total <= 0.0:
        raise ValueError("zero total variance after processing")
    return R2Result(r2=1.0 - residual / total, numerator_ss=residual,
                    denominator_ss=total, pipeline=pipeline)


@dataclass(frozen=True)
class OrthReport:
    """Mean |cos| between normalized factor directions.

    within[i] averages over distinct value pairs of one concept; across[i,j]
    averages over all value pairs of two concepts (diagonal = within).
    """

    within: np.ndarray        # (k,)
    across: np.ndarray        # (k, k), symmetric
    excluded_zero_directions: int = 0


def orthogonality(factors: FactorSet,
                  projector: Optional[SpanProjector] = None) -> OrthReport:
    """Within/across-concept direction similarity of the centered factors.

    Zero-norm directions cannot be normalized and are dropped from the
    means (their count is reported) rather than scored as 0.
    """
    k = factors.space.k
    if any(n < 2 for n in factors.space.cardinalities):
        raise ValueError("every concept needs >= 2 values")
    blocks = factors.factors
    if projector is not None:
        blocks = [project(projector, b) for b in blocks]
    scale = max(float(np.linalg.norm(b, axis=1).max()) for b in blocks)
    if scale <= 0.0:
        raise ValueError("all factor directions are zero")
    directions, excluded = [], 0
    for block in blocks:
        norms = np.linalg.norm(block, axis=1)
        keep = norms > 1e-12 * scale
        excluded += int((~keep).sum())
        if not keep.any():
            raise ValueError("a concept has only zero-norm directions")
        directions.append(block[keep] / norms[keep, None])
    across = np.zeros((k, k))
    within = np.zeros(k)
    for i in range(k):
        gram_ii = np.abs(directions[i] @ directions[i].T)
        off_diag = gram_ii[~np.eye(gram_ii.shape[0], dtype=bool)]
        if off_diag.size == 0:
            raise ValueError(
                f"concept {i} has < 2 usable directions for the within mean")
        within[i] = off_diag.mean()
        across[i, i] = within[i]
        for j in range(i + 1, k):
            value = float(np.abs(directions[i] @ directions[j].T).mean())
            across[i, j] = across[j, i] = value
    return OrthReport(within=within, across=across,
                      excluded_zero_directions=excluded)


def effective_rank(factors: FactorSet, i: int, threshold: float = 0.95):
    """Principal components needed to reach `threshold` explained variance.

    PCA runs on the row-centered (n_i x d) factor block of concept i.
    Returns (rank, cumulative_explained_variance_curve); an all-zero block
    has rank 0 and an empty curve.
    """
    if not 0 <= i < factors.space.k:
        raise ValueError(f"concept index {i} out of range")
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    block = factors.factors[i]
    centered = block - block.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    power = svals**2
    total = power.sum()
    if total <= 0.0:
        return 0, np.zeros(0)
    curve = np.cumsum(power) / total
    rank = int(np.searchsorted(curve, threshold - 1e-12) + 1)
    return rank, curve


def compositional_accuracy(probes: ProbeBank, eset: EmbeddingSet,
                           heldout: TrainingSupport):
    """Per-concept argmax accuracy on rows whose tuple is in `heldout`.

    Returns (per_concept_accuracies, mean).  Ties break toward the lowest
    value index (argmax convention), so results are deterministic.
    """
    if len(heldout) == 0:
        raise ValueError("held-out support is empty")
    wanted = set(heldout.tuples)
    mask = np.fromiter((tuple(row) in wanted for row in eset.labels),
                       dtype=bool, count=eset.rows)
    if not mask.any():
        raise ValueError("no rows match the held-out tuples")
    Z = eset.data[mask]
    labels = eset.labels[mask]
    per_concept = np.empty(eset.space.k)
    for i, logits in enumerate(score_rows(probes, Z)):
        per_concept[i] = float((logits.argmax(axis=1) == labels[:, i]).mean())
    return per_concept, float(per_concept.mean())
