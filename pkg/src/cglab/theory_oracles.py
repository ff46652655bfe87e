"""Numerical oracles for the geometric claims the library is built around:
hard-margin SVM geometry, necessity/sufficiency of additive orthogonal
structure, on-off score-pattern rank and reconstruction, the d=k packing
construction, and hyperplane-arrangement region counts.

Oracles check; they do not prove.  Each verifier reports residuals so a
failure localizes to a clause.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .concept_space import (
    BinaryMajority,
    TrainingSupport,
    cross_dataset,
    enumerate_tuples,
    intervene,
    make_space,
    sample_support,
)
from .embedding_store import EmbeddingSet
from .factor_model import FactorSet, reconstruct_rows
from .probe_trainer import ProbeBank, score_rows


class NotSeparableError(ValueError):
    """The two point classes' convex hulls meet (within tolerance)."""


# --- hard-margin SVM via closest point between convex hulls -------------------


@dataclass(frozen=True)
class SvmSolution:
    """Canonically scaled separator: w.z + b = +/-1 on support points.

    w is parallel to the shortest segment between the class hulls;
    positive_coeffs/negative_coeffs are the convex weights of the closest
    pair, margin = 1/||w|| = half the hull distance.
    """

    w: np.ndarray
    b: float
    margin: float
    positive_coeffs: np.ndarray
    negative_coeffs: np.ndarray


def _pairwise_step(points, coeffs, w_tilde):
    """One pairwise move of hull mass along the steepest descent pair.

    Greedily shifts weight from the worst in-support vertex to the best
    vertex of `points` under the linearization of ||w_tilde||^2 (w_tilde
    must be oriented so this hull enters it positively).  Returns the
    resulting change to the hull point, or None when no move helps.
    """
    scores = points @ w_tilde
    s = int(scores.argmin())
    support = np.nonzero(coeffs > 0)[0]
    v = int(support[scores[support].argmax()])
    if s == v:
        return None
    dvec = points[s] - points[v]
    denom = float(dvec @ dvec)
    if denom <= 0.0:
        return None
    delta = -float(w_tilde @ dvec) / denom
    delta = min(max(delta, 0.0), float(coeffs[v]))
    if delta <= 0.0:
        return None
    coeffs[s] += delta
    coeffs[v] -= delta
    return delta * dvec


def _polish_on_active_face(pos, neg, lam, gam):
    """Exact minimizer of ||P'lam - N'gam||^2 on the active face.

    Solves the equality-constrained least-squares system restricted to the
    currently positive coefficients; vertices whose face-optimal weight
    turns negative are dropped and the solve repeats (an active-set sweep),
    which removes the spurious near-zero vertices the iterative phase can
    leave behind.
    """
    act_p = list(np.nonzero(lam > 1e-12)[0])
    act_n = list(np.nonzero(gam > 1e-12)[0])
    best = (lam, gam)
    for _ in range(len(act_p) + len(act_n)):
        n_p, n_n = len(act_p), len(act_n)
        A = np.hstack([pos[act_p].T, -neg[act_n].T])
        C = np.zeros((2, n_p + n_n))
        C[0, :n_p] = 1.0
        C[1, n_p:] = 1.0
        kkt = np.zeros((n_p + n_n + 2, n_p + n_n + 2))
        kkt[: n_p + n_n, : n_p + n_n] = 2.0 * (A.T @ A)
        kkt[: n_p + n_n, n_p + n_n:] = C.T
        kkt[n_p + n_n:, : n_p + n_n] = C
        rhs = np.zeros(n_p + n_n + 2)
        rhs[-2:] = 1.0
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        x = sol[: n_p + n_n]
        if x.min() >= -1e-9:
            x = np.maximum(x, 0.0)
            lam2 = np.zeros_like(lam)
            gam2 = np.zeros_like(gam)
            lam2[act_p] = x[:n_p] / x[:n_p].sum()
            gam2[act_n] = x[n_p:] / x[n_p:].sum()
            return lam2, gam2
        worst = int(np.argmin(x))
        if worst < n_p:
            if n_p == 1:
                break
            act_p.pop(worst)
        else:
            if n_n == 1:
                break
            act_n.pop(worst - n_p)
    return best


def hard_margin_svm(positives, negatives, gap_tol: float = 1e-10,
                    max_iters: int = 1_000_000,
                    separation_tol: float = 1e-8) -> SvmSolution:
    """Maximum-margin separator of two separable point sets.

    Runs pairwise convex-coefficient descent on both hulls until the duality
    gap of the closest-pair problem drops below `gap_tol` (relative above
    unit scale), then re-solves exactly on the active face.  Raises
    NotSeparableError when the hull distance vanishes at the data scale.
    """
    pos = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if pos.shape[0] == 0 or neg.shape[0] == 0:
        raise ValueError("both classes need at least one point")
    if pos.shape[1] != neg.shape[1]:
        raise ValueError("class dimensions differ")
    scale = max(1.0, float(np.linalg.norm(pos, axis=1).max()),
                float(np.linalg.norm(neg, axis=1).max()))
    lam = np.zeros(pos.shape[0])
    gam = np.zeros(neg.shape[0])
    lam[0] = 1.0
    gam[0] = 1.0
    for _ in range(max_iters):
        p = pos.T @ lam
        q = neg.T @ gam
        w_tilde = p - q
        dist_sq = float(w_tilde @ w_tilde)
        if dist_sq <= (separation_tol * scale) ** 2:
            raise NotSeparableError(
                f"hull distance {math.sqrt(max(dist_sq, 0.0)):.3g} is zero "
                f"within tolerance")
        # Frank-Wolfe gap of min ||p - q||^2 over both simplices
        gap = 2.0 * (float(w_tilde @ p) - float((pos @ w_tilde).min())
                     + float((neg @ w_tilde).max()) - float(w_tilde @ q))
        if gap <= gap_tol * max(1.0, dist_sq):
            break
        moved = _pairwise_step(pos, lam, w_tilde)
        if moved is not None:
            w_tilde = w_tilde + moved
        moved = _pairwise_step(neg, gam, -w_tilde)
        if moved is not None:
            w_tilde = w_tilde - moved
    lam, gam = _polish_on_active_face(pos, neg, lam, gam)
    p = pos.T @ lam
    q = neg.T @ gam
    delta = p - q
    dist = float(np.linalg.norm(delta))
    if dist <= separation_tol * scale:
        raise NotSeparableError(
            f"hull distance {dist:.3g} is zero within tolerance")
    w = 2.0 * delta / (dist * dist)
    b = 1.0 - float(w @ p)
    return SvmSolution(w=w, b=b, margin=dist / 2.0,
                       positive_coeffs=lam, negative_coeffs=gam)


# --- necessity: additive + orthogonal structure from stable SVM readouts ------


@dataclass
class NecessityReport:
    """Residuals of the three structural clauses on a binary grid.

    support_vector_residual: mass the majority-hull optimum places off the
    counterfactual center.  linearity_residual: spread of one-concept
    difference vectors (relative).  orthogonality_residual: max |cos|
    between mean difference directions of distinct concepts.
    """

    tol: float
    support_vector_residual: float
    linearity_residual: float
    orthogonality_residual: float
    skipped_non_separable: list = field(default_factory=list)

    @property
    def support_vector_ok(self) -> bool:
        return self.support_vector_residual <= self.tol

    @property
    def linearity_ok(self) -> bool:
        return self.linearity_residual <= self.tol

    @property
    def orthogonality_ok(self) -> bool:
        return self.orthogonality_residual <= self.tol

    @property
    def passed(self) -> bool:
        return (self.support_vector_ok and self.linearity_ok
                and self.orthogonality_ok)


def _grid_matrix(eset: EmbeddingSet) -> np.ndarray:
    """(grid_size x d) matrix indexed by tuple index; one row per tuple."""
    space = eset.space
    if eset.rows != space.grid_size():
        raise ValueError("need exactly one row per grid tuple")
    out = np.empty((eset.rows, eset.d))
    seen = np.zeros(eset.rows, dtype=bool)
    for row, label in enumerate(eset.labels):
        idx = space.tuple_index(tuple(label))
        if seen[idx]:
            raise ValueError(f"tuple {tuple(label)} appears more than once")
        seen[idx] = True
        out[idx] = eset.data[row]
    return out


def verify_necessity(eset: EmbeddingSet, tol: float = 1e-6) -> NecessityReport:
    """Check the structure forced by stable max-margin readouts.

    For every concept and counterfactual pair of cross datasets: (a) the
    majority-hull closest point must collapse onto the pair's center,
    (b) one-concept flips must shift the embedding by a constant vector,
    (c) those shift directions must be orthogonal across concepts.
    """
    space = eset.space
    if any(n != 2 for n in space.cardinalities):
        raise ValueError("necessity check runs on all-binary grids")
    z = _grid_matrix(eset)
    k = space.k
    sv_residual = 0.0
    lin_residual = 0.0
    skipped = []
    mean_diffs = np.empty((k, eset.d))
    for i in range(k):
        diffs = []
        for base in enumerate_tuples(space):
            if base[i] != 0:
                continue
            flipped = intervene(space, base, i, 1)
            diffs.append(z[space.tuple_index(flipped)]
                         - z[space.tuple_index(base)])
            for center, other in ((base, flipped), (flipped, base)):
                majority = [z[space.tuple_index(center)]]
                for j in range(k):
                    if j != i:
                        majority.append(
                            z[space.tuple_index(intervene(space, center, j,
                                                          1 - center[j]))])
                minority = z[space.tuple_index(other)][None, :]
                try:
                    if center[i] == 1:
                        sol = hard_margin_svm(majority, minority)
                        coeffs = sol.positive_coeffs
                    else:
                        sol = hard_margin_svm(minority, majority)
                        coeffs = sol.negative_coeffs
                except NotSeparableError:
                    skipped.append((i, center))
                    continue
                # index 0 of the majority list is the center itself
                sv_residual = max(sv_residual, float(1.0 - coeffs[0]))
        diffs = np.asarray(diffs)
        mean_diffs[i] = diffs.mean(axis=0)
        spread = np.linalg.norm(diffs - mean_diffs[i], axis=1).max()
        lin_residual = max(lin_residual,
                           spread / max(1.0, np.linalg.norm(mean_diffs[i])))
    orth_residual = 0.0
    norms = np.linalg.norm(mean_diffs, axis=1)
    for i in range(k):
        for j in range(i + 1, k):
            denom = max(norms[i] * norms[j], 1e-300)
            orth_residual = max(
                orth_residual, abs(float(mean_diffs[i] @ mean_diffs[j])) / denom)
    return NecessityReport(tol=tol, support_vector_residual=sv_residual,
                           linearity_residual=lin_residual,
                           orthogonality_residual=orth_residual,
                           skipped_non_separable=skipped)


# --- sufficiency: additive orthogonal factors force stable transfer -----------


@dataclass
class SufficiencyReport:
    """Transfer and stability of per-concept SVMs across valid supports."""

    rule: str
    n_supports: int
    full_grid_accuracy_ok: bool
    min_weight_cosine: float
    max_posterior_tv: float
    counterfactual_pairs_ok: bool
    cosine_tol: float
    tv_tol: float

    @property
    def passed(self) -> bool:
        return (self.full_grid_accuracy_ok
                and self.min_weight_cosine > 1.0 - self.cosine_tol
                and self.max_posterior_tv <= self.tv_tol
                and self.counterfactual_pairs_ok)


def _has_counterfactual_pairs(support: TrainingSupport) -> bool:
    space = support.space
    members = set(support.tuples)
    for i in range(space.k):
        if not any(t[i] == 0 and intervene(space, t, i, 1) in members
                   for t in members):
            return False
    return True


def verify_sufficiency(factors: FactorSet, rule: str = "majority",
                       n_supports: int = 10, seed: int = 0,
                       cosine_tol: float = 1e-6,
                       tv_tol: float = 1e-9) -> SufficiencyReport:
    """Train per-concept SVMs on sampled valid supports of a binary grid
    built from `factors` and check full-grid transfer plus stability.

    rule: "majority" draws `n_supports` random half-plus-one supports;
    "cross" uses the cross dataset at every grid center.
    """
    space = factors.space
    if any(n != 2 for n in space.cardinalities):
        raise ValueError("sufficiency check runs on all-binary grids")
    deltas = np.stack([block[1] - block[0] for block in factors.factors])
    norms = np.linalg.norm(deltas, axis=1)
    if norms.min() <= 0.0:
        raise ValueError("a concept has identical factors for its two values")
    gram = np.abs(deltas @ deltas.T) / np.outer(norms, norms)
    np.fill_diagonal(gram, 0.0)
    if space.k > 1 and gram.max() > 1e-8:
        raise ValueError(
            f"cross-concept differences are not orthogonal (max |cos| "
            f"{gram.max():.3g})")
    grid = list(enumerate_tuples(space))
    labels = np.asarray(grid, dtype=np.int64)
    z = reconstruct_rows(factors, labels)
    if rule == "majority":
        supports = [sample_support(space, BinaryMajority(), seed + t)
                    for t in range(n_supports)]
    elif rule == "cross":
        supports = [cross_dataset(space, center) for center in grid]
    else:
        raise ValueError("rule must be 'majority' or 'cross'")
    accuracy_ok = True
    min_cos = 1.0
    pairs_ok = all(_has_counterfactual_pairs(s) for s in supports)
    # per support, per concept: (w, b)
    separators = np.empty((len(supports), space.k, factors.d + 1))
    for s_idx, support in enumerate(supports):
        rows = np.asarray([space.tuple_index(t) for t in support.tuples])
        for i in range(space.k):
            split = labels[rows, i] == 1
            sol = hard_margin_svm(z[rows][split], z[rows][~split])
            separators[s_idx, i, :-1] = sol.w
            separators[s_idx, i, -1] = sol.b
            margins = (2.0 * labels[:, i] - 1.0) * (z @ sol.w + sol.b)
            if margins.min() <= 0.0:
                accuracy_ok = False
            cos = float(sol.w @ deltas[i]
                        / (np.linalg.norm(sol.w) * norms[i]))
            min_cos = min(min_cos, cos)
    logits = np.einsum("gd,sid->sig", z, separators[:, :, :-1]) \
        + separators[:, :, -1][:, :, None]
    posteriors = 1.0 / (1.0 + np.exp(-logits))
    max_tv = 0.0
    for a in range(len(supports)):
        for b_idx in range(a + 1, len(supports)):
            max_tv = max(max_tv, float(
                np.abs(posteriors[a] - posteriors[b_idx]).max()))
    return SufficiencyReport(rule=rule, n_supports=len(supports),
                             full_grid_accuracy_ok=accuracy_ok,
                             min_weight_cosine=min_cos,
                             max_posterior_tv=max_tv,
                             counterfactual_pairs_ok=pairs_ok,
                             cosine_tol=cosine_tol, tv_tol=tv_tol)


# --- on-off score pattern ------------------------------------------------------

_GRID_CAP = 100_000


@dataclass(frozen=True)
class OnOffSpec:
    """Two-level score pattern: alpha on the matching value, beta elsewhere."""

    k: int
    n: int
    alpha: float
    beta: float

    def __post_init__(self):
        if self.k < 1 or self.n < 2:
            raise ValueError("need k >= 1 and n >= 2")
        if not self.alpha > self.beta:
            raise ValueError("alpha must exceed beta")
        if self.alpha == -self.beta * (self.n - 1):
            raise ValueError(
                "alpha = -beta(n-1) collapses the constant direction")

    @property
    def delta(self) -> float:
        """Score of any probe against the grid-average representation."""
        return (self.alpha + (self.n - 1) * self.beta) / self.n


def onoff_matrix(spec: OnOffSpec) -> np.ndarray:
    """(k n x n^k) score table y[(i,j), c] = alpha if c_i == j else beta."""
    if spec.n**spec.k > _GRID_CAP:
        raise ValueError(f"grid size {spec.n**spec.k} exceeds {_GRID_CAP}")
    space = make_space([spec.n] * spec.k)
    labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    out = np.empty((spec.k * spec.n, labels.shape[0]))
    for i in range(spec.k):
        for j in range(spec.n):
            out[i * spec.n + j] = np.where(labels[:, i] == j,
                                           spec.alpha, spec.beta)
    return out


def onoff_rank(spec: OnOffSpec, rel_tol: float = 1e-9) -> int:
    svals = np.linalg.svd(onoff_matrix(spec), compute_uv=False)
    return int((svals > rel_tol * svals[0]).sum())


def make_onoff_construction(spec: OnOffSpec):
    """Explicit realization of the pattern in d = 1 + k(n-1) dimensions.

    Embeddings: a constant leading coordinate plus, per concept, the reduced
    one-hot code of its value (last value encoded as all-zero).  Probes read
    one block each, so scores hit the pattern exactly.  Returns
    (EmbeddingSet, ProbeBank).
    """
    if spec.n**spec.k > _GRID_CAP:
        raise ValueError(f"grid size {spec.n**spec.k} exceeds {_GRID_CAP}")
    space = make_space([spec.n] * spec.k)
    labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    d = 1 + spec.k * (spec.n - 1)
    z = np.zeros((labels.shape[0], d))
    z[:, 0] = 1.0
    for i in range(spec.k):
        start = 1 + i * (spec.n - 1)
        for v in range(spec.n - 1):
            z[labels[:, i] == v, start + v] = 1.0
    weights, biases = [], []
    for i in range(spec.k):
        w = np.zeros((spec.n, d))
        start = 1 + i * (spec.n - 1)
        for j in range(spec.n - 1):
            w[j, 0] = spec.beta
            w[j, start + j] = spec.alpha - spec.beta
        w[spec.n - 1, 0] = spec.alpha
        w[spec.n - 1, start:start + spec.n - 1] = spec.beta - spec.alpha
        weights.append(w)
        biases.append(np.zeros(spec.n))
    eset = EmbeddingSet(space, z, labels,
                        meta={"generator": "onoff_construction"})
    bank = ProbeBank(space, weights, biases)
    return eset, bank


def onoff_additive_reconstruction(probes: ProbeBank, eset: EmbeddingSet,
                                  tol: float = 1e-6) -> FactorSet:
    """Factor the embeddings by conditional means and prove the probes
    cannot tell the reconstruction from the original.

    Requires one row per grid tuple and probe scores matching a two-level
    pattern within `tol`.  Verifies the reconstructed scores match within
    10*tol and that every probe scores the grid mean at
    (alpha + (n-1) beta)/n; raises on any violation.
    """
    space = eset.space
    n = space.cardinalities[0]
    if any(card != n for card in space.cardinalities):
        raise ValueError("on-off reconstruction expects equal cardinalities")
    z = _grid_matrix(eset)
    labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    scores = score_rows(probes, z)
    match_vals, other_vals = [], []
    for i, block in enumerate(scores):
        onehot = labels[:, i][:, None] == np.arange(n)[None, :]
        match_vals.append(block[onehot])
        other_vals.append(block[~onehot])
    alpha = float(np.concatenate(match_vals).mean())
    beta = float(np.concatenate(other_vals).mean())
    deviation = max(float(np.abs(np.concatenate(match_vals) - alpha).max()),
                    float(np.abs(np.concatenate(other_vals) - beta).max()))
    if deviation > tol:
        raise ValueError(
            f"scores deviate from a two-level pattern by {deviation:.3g} "
            f"(tol {tol:.3g})")
    if not alpha > beta:
        raise ValueError("matching scores do not exceed non-matching scores")
    mean = z.mean(axis=0)
    blocks = []
    for i in range(space.k):
        cond = np.stack([z[labels[:, i] == j].mean(axis=0) for j in range(n)])
        blocks.append(cond - mean)
    from .factor_model import canonicalize

    factors = canonicalize(space, blocks, offset=mean)
    recon = reconstruct_rows(factors, labels)
    recon_scores = score_rows(probes, recon)
    worst = 0.0
    for i, block in enumerate(recon_scores):
        pattern = np.where(labels[:, i][:, None] == np.arange(n)[None, :],
                           alpha, beta)
        worst = max(worst, float(np.abs(block - pattern).max()))
    if worst > 10 * tol:
        raise ValueError(
            f"reconstructed scores deviate from the pattern by {worst:.3g}")
    delta = (alpha + (n - 1) * beta) / n
    mean_scores = score_rows(probes, mean[None, :])
    delta_err = max(float(np.abs(block - delta).max())
                    for block in mean_scores)
    if delta_err > 10 * tol:
        raise ValueError(
            f"grid-mean scores deviate from (alpha+(n-1)beta)/n by "
            f"{delta_err:.3g}")
    return factors


# --- minimal-dimension packing construction -----------------------------------


def min_dim_construction(k: int, n: int):
    """Grid embeddings in d = k classified exactly by quadratic-gap probes.

    z_c places value c_i on axis i; probe (i, j) scores 2 j z_i - j^2, which
    equals c_i^2 - (j - c_i)^2 and is uniquely maximized at j = c_i.
    Returns (EmbeddingSet, ProbeBank) with exact 1.0 grid accuracy.
    """
    if k < 1 or n < 2:
        raise ValueError("need k >= 1 and n >= 2")
    if n**k > _GRID_CAP:
        raise ValueError(f"grid size {n**k} exceeds {_GRID_CAP}")
    space = make_space([n] * k)
    labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    z = labels.astype(np.float64)
    weights, biases = [], []
    for i in range(k):
        w = np.zeros((n, k))
        w[:, i] = 2.0 * np.arange(n)
        weights.append(w)
        biases.append(-np.arange(n, dtype=np.float64) ** 2)
    eset = EmbeddingSet(space, z, labels,
                        meta={"generator": "axis_grid_construction"})
    return eset, ProbeBank(space, weights, biases)


# --- hyperplane-arrangement region counts --------------------------------------


def region_count_affine(m: int, d: int) -> int:
    """Regions cut from R^d by m affine hyperplanes in general position."""
    if m < 0 or d < 0:
        raise ValueError("m and d must be non-negative")
    return sum(math.comb(m, r) for r in range(min(m, d) + 1))


def region_count_central(m: int, d: int) -> int:
    """Regions for m central hyperplanes (all through the origin)."""
    if m < 0 or d < 0:
        raise ValueError("m and d must be non-negative")
    if m == 0:
        return 1
    if d == 0:
        return 1
    return 2 * sum(math.comb(m - 1, r) for r in range(min(m - 1, d - 1) + 1))


def brute_force_region_count(hyperplanes, samples: int = 200_000,
                             seed: int = 0) -> int:
    """Distinct sign vectors of sampled points: a lower bound on the number
    of regions of the arrangement.

    Rows of `hyperplanes` are (w_1..w_d, b).  Samples a box 10x the largest
    normalized offset, plus small balls around every vertex (regions of a
    general-position arrangement with m >= d all touch a vertex).
    """
    planes = np.atleast_2d(np.asarray(hyperplanes, dtype=np.float64))
    m, cols = planes.shape
    d = cols - 1
    if m > 12 or d > 4 or d < 1:
        raise ValueError("sampling oracle is limited to m <= 12, d <= 4")
    normals = planes[:, :d]
    offsets = planes[:, d]
    norms = np.linalg.norm(normals, axis=1)
    if norms.min() <= 0.0:
        raise ValueError("a hyperplane has a zero normal")
    normals = normals / norms[:, None]
    offsets = offsets / norms
    rng = np.random.default_rng(seed)
    limit = 10.0 * max(1.0, float(np.abs(offsets).max()))
    points = [rng.uniform(-limit, limit, size=(samples, d))]
    for subset in combinations(range(m), d):
        sub = normals[list(subset)]
        if abs(np.linalg.det(sub)) < 1e-9:
            continue  # not in general position; skip the joint
        vertex = np.linalg.solve(sub, -offsets[list(subset)])
        if np.abs(vertex).max() > 1e6 * limit:
            continue
        dirs = rng.standard_normal((400, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for radius in (1e-4, 1e-3, 1e-2):
            points.append(vertex + radius * (1.0 + np.abs(vertex).max()) * dirs)
    cloud = np.vstack(points)
    values = cloud @ normals.T + offsets
    on_plane = np.abs(values) < 1e-12 * max(1.0, limit)
    signs = (values > 0)[~on_plane.any(axis=1)]
    return int(np.unique(signs, axis=0).shape[0])


def random_affine_arrangement(m: int, d: int, seed: int = 0,
                              max_tries: int = 1000) -> np.ndarray:
    """Random m x (d+1) arrangement kept safely in general position.

    Rejects draws whose normal d-subsets are ill-conditioned or whose
    vertices fall near a non-defining hyperplane, so the sampling oracle's
    region count is trustworthy.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        normals = rng.standard_normal((m, d))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        offsets = rng.uniform(-1.0, 1.0, size=m)
        ok = True
        for subset in combinations(range(m), min(d, m)):
            sub = normals[list(subset)]
            svals = np.linalg.svd(sub, compute_uv=False)
            if svals[-1] < 0.15:
                ok = False
                break
            if len(subset) == d:
                vertex = np.linalg.solve(sub, -offsets[list(subset)])
                others = [i for i in range(m) if i not in subset]
                if others:
                    gaps = np.abs(normals[others] @ vertex + offsets[others])
                    if gaps.min() < 1e-3:
                        ok = False
                        break
        if ok:
            return np.hstack([normals, offsets[:, None]])
    raise RuntimeError(f"no general-position arrangement found in "
                       f"{max_tries} tries")
