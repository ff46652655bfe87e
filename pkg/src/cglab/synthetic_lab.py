"""From-scratch experiments over concept grids: free embeddings optimized
jointly with their probes, minimal-dimension scans, generators for
factorized / counterexample data, and support-stability experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .concept_space import (
    BinaryMajority,
    ConceptSpace,
    cross_dataset,
    enumerate_tuples,
    make_space,
    sample_support,
)
from .embedding_store import EmbeddingSet
from .factor_model import canonicalize
from .probe_trainer import (
    SPHERICAL,
    AdamState,
    ProbeBank,
    TrainConfig,
    _loss_and_grads,
    _unit_rows,
    cosine_lr,
    init_params,
    predictions,
    train_probes,
)
from .theory_oracles import hard_margin_svm

GRID_CAP = 100_000


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts])
               .generate_state(1)[0])


@dataclass
class LabRun:
    """One joint embedding+probe optimization and its end-state metrics."""

    space: ConceptSpace
    d: int
    loss: str
    geometry: str
    config: TrainConfig
    embeddings: EmbeddingSet
    probes: ProbeBank
    history: np.ndarray
    per_concept_accuracy: np.ndarray
    sampled_grid: bool = False

    @property
    def mean_accuracy(self) -> float:
        return float(self.per_concept_accuracy.mean())


def train_free_embeddings(space: ConceptSpace, d: int, loss: str,
                          geometry: str, config: TrainConfig,
                          allow_sampling: bool = False,
                          grid_cap: int = GRID_CAP) -> LabRun:
    """Optimize one embedding per tuple jointly with the probes.

    Embeddings start from a standard normal draw; probes and embeddings
    share the full-batch adaptive-moment protocol with cosine decay.
    Grids beyond `grid_cap` tuples need `allow_sampling` and are trained on
    a uniform tuple sample (flagged in the result).
    """
    grid = space.grid_size()
    rng = np.random.default_rng(config.seed)
    sampled = grid > grid_cap
    if sampled and not allow_sampling:
        raise ValueError(
            f"grid size {grid} exceeds cap {grid_cap}; pass allow_sampling")
    if sampled:
        idx = rng.choice(grid, size=grid_cap, replace=False)
        labels = np.asarray([space.index_tuple(int(i)) for i in sorted(idx)],
                            dtype=np.int64)
    else:
        labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    Z = rng.standard_normal((labels.shape[0], d))
    if geometry == SPHERICAL:
        Z = _unit_rows(Z)
    weights, biases = init_params(space, d, geometry, rng)
    log_tau = np.zeros(())
    params = [Z] + weights + biases \
        + ([log_tau] if geometry == SPHERICAL else [])
    adam = AdamState(params)
    history = np.empty(config.epochs)
    for epoch in range(config.epochs):
        value, gw, gb, gtau, gz = _loss_and_grads(
            weights, biases, float(log_tau), Z, labels, loss, geometry,
            want_z_grad=True)
        history[epoch] = value
        if not np.isfinite(value):
            raise RuntimeError(f"loss diverged to {value} at epoch {epoch}")
        grads = [gz] + gw + gb \
            + ([np.asarray(gtau)] if geometry == SPHERICAL else [])
        adam.step(params, grads, cosine_lr(config.lr, epoch, config.epochs))
        if geometry == SPHERICAL:
            Z[:] = _unit_rows(Z)
            for w in weights:
                w[:] = _unit_rows(w)
    bank = ProbeBank(space, weights, biases, geometry=geometry,
                     log_temperature=float(log_tau))
    eset = EmbeddingSet(space, Z, labels, meta={
        "generator": "free_embeddings", "loss": loss, "geometry": geometry,
        "seed": config.seed})
    predicted = predictions(bank, Z)
    accuracy = (predicted == labels).mean(axis=0)
    return LabRun(space=space, d=d, loss=loss, geometry=geometry,
                  config=config, embeddings=eset, probes=bank,
                  history=history, per_concept_accuracy=accuracy,
                  sampled_grid=sampled)


@dataclass
class MinDimTable:
    """Smallest workable embedding dimension per (k, n) cell.

    found[(k, n)] is the first dimension whose best restart reached the
    success criterion, or None if none did up to d_max; history keeps every
    (d, restart, mean accuracy) triple, including the infeasible region.
    """

    loss: str
    geometry: str
    restarts: int
    criterion: float
    d_max: int
    found: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)
    approximate_cells: list = field(default_factory=list)


def min_dim_scan(k_list: Sequence[int], n_list: Sequence[int], loss: str,
                 geometry: str, config: TrainConfig, restarts: int = 3,
                 d_max: int = 32, success: float = 0.99,
                 grid_cap: int = GRID_CAP) -> MinDimTable:
    """Scan d = 1, 2, ... upward per (k, n) until training succeeds.

    A dimension succeeds when any restart's mean per-concept accuracy
    reaches `success`.  Results always satisfy found >= k; anything else
    would contradict the affine-readout region bound and aborts the scan.
    """
    if not k_list or not n_list:
        raise ValueError("k_list and n_list must be non-empty")
    table = MinDimTable(loss=loss, geometry=geometry, restarts=restarts,
                        criterion=success, d_max=d_max)
    for k in k_list:
        for n in n_list:
            space = make_space([n] * k)
            sampled = space.grid_size() > grid_cap
            if sampled:
                table.approximate_cells.append((k, n))
            cell_history = []
            found = None
            for d in range(1, d_max + 1):
                best = 0.0
                for restart in range(restarts):
                    run = train_free_embeddings(
                        space, d, loss, geometry,
                        TrainConfig(loss=loss, epochs=config.epochs,
                                    lr=config.lr,
                                    seed=_derived_seed(config.seed, k, n, d,
                                                       restart)),
                        allow_sampling=True, grid_cap=grid_cap)
                    best = max(best, run.mean_accuracy)
                    cell_history.append(
                        {"d": d, "restart": restart,
                         "mean_accuracy": run.mean_accuracy})
                    if best >= success:
                        break
                if best >= success:
                    found = d
                    break
            if found is not None and found < k:
                raise RuntimeError(
                    f"scan reported d={found} < k={k}: accuracy evaluation "
                    f"is inconsistent with the affine region bound")
            table.found[(k, n)] = found
            table.history[(k, n)] = cell_history
    return table


# --- generators ----------------------------------------------------------------


def generate_factorized(space: ConceptSpace, d: int, orthogonal: bool,
                        scale: float = 1.0, seed: int = 0):
    """Exactly additive grid embeddings plus their ground-truth factors.

    With `orthogonal`, each concept's factors live in a private orthonormal
    block (needs d >= sum_i (n_i - 1)), so cross-concept difference vectors
    are orthogonal to machine precision.  Returns (EmbeddingSet, FactorSet).
    """
    rng = np.random.default_rng(seed)
    raw = []
    if orthogonal:
        needed = sum(n - 1 for n in space.cardinalities)
        if d < needed:
            raise ValueError(
                f"orthogonal blocks need d >= {needed}, got {d}")
        basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
        offset = 0
        for n in space.cardinalities:
            block_basis = basis[:, offset:offset + n - 1]
            coords = scale * rng.standard_normal((n, n - 1))
            raw.append(coords @ block_basis.T)
            offset += n - 1
    else:
        raw = [scale * rng.standard_normal((n, d))
               for n in space.cardinalities]
    factors = canonicalize(space, raw)
    labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    z = np.zeros((labels.shape[0], d))
    for i in range(space.k):
        z += raw[i][labels[:, i]]
    eset = EmbeddingSet(space, z, labels, meta={
        "generator": "factorized", "orthogonal": orthogonal, "seed": seed})
    return eset, factors


def generate_lrh_grid(k: int, n: int, d: int,
                      coefficients: Optional[Sequence[Sequence[float]]] = None,
                      seed: int = 0, directions: Optional[np.ndarray] = None):
    """Grid embeddings along one direction per concept, plus the
    nearest-prototype readout built from conditional means.

    Prototypes are the per-value conditional means; probes score
    2 prototype . z - ||prototype||^2, the power-diagram form whose argmax
    is the nearest prototype.  With orthogonal directions and distinct
    coefficients the readout is exact on the grid.
    """
    if k < 1 or n < 2:
        raise ValueError("need k >= 1 and n >= 2")
    if n**k > GRID_CAP:
        raise ValueError(f"grid size {n**k} exceeds {GRID_CAP}")
    if coefficients is None:
        coefficients = [list(range(n))] * k
    coeffs = np.asarray(coefficients, dtype=np.float64)
    if coeffs.shape != (k, n):
        raise ValueError(f"coefficients must be (k x n), got {coeffs.shape}")
    for i in range(k):
        if np.unique(coeffs[i]).size != n:
            raise ValueError(f"coefficients of concept {i} are not distinct")
    if directions is None:
        if d < k:
            raise ValueError("orthogonal directions need d >= k")
        rng = np.random.default_rng(seed)
        directions, _ = np.linalg.qr(rng.standard_normal((d, k)))
        directions = directions.T  # (k x d)
    else:
        directions = np.asarray(directions, dtype=np.float64)
        if directions.shape != (k, d):
            raise ValueError("directions must be (k x d)")
    space = make_space([n] * k)
    labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    z = np.zeros((labels.shape[0], d))
    for i in range(k):
        z += coeffs[i][labels[:, i], None] * directions[i]
    mean_coeff = coeffs.mean(axis=1)
    weights, biases = [], []
    for i in range(k):
        rest = sum(mean_coeff[l] * directions[l] for l in range(k) if l != i)
        prototypes = coeffs[i][:, None] * directions[i] + rest
        weights.append(2.0 * prototypes)
        biases.append(-(prototypes**2).sum(axis=1))
    eset = EmbeddingSet(space, z, labels,
                        meta={"generator": "lrh_grid", "seed": seed})
    return eset, ProbeBank(space, weights, biases)


def generate_separable_nonfactorized(n: int, seed: int = 0,
                                     perturbed: bool = True):
    """Two concepts in 2-d: perfectly separable by construction, yet far
    from additive when perturbed.

    Points live in the cells of two non-parallel boundary families at unit
    spacing.  In-cell jitter breaks additivity mildly; rows/columns at the
    outer value are pushed far into their (unbounded) cells, which wrecks
    the additive fit while every point stays on the correct side of every
    boundary.  Returns (EmbeddingSet, witness ProbeBank); the unperturbed
    variant is exactly additive.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    rng = np.random.default_rng(seed)
    theta = np.deg2rad(65.0)
    family_normals = np.array([[1.0, 0.0], [np.cos(theta), np.sin(theta)]])
    # dual basis: moving along axes[i] changes only coordinate i
    axes = np.linalg.inv(family_normals).T
    space = make_space([n, n])
    labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    coords = labels.astype(np.float64)
    if perturbed:
        coords = coords + rng.uniform(-0.45, 0.45, size=coords.shape)
        for axis in (0, 1):
            outer = labels[:, axis] == n - 1
            coords[outer, axis] = (n - 1) + rng.uniform(
                n, 30.0 * n, size=int(outer.sum()))
    z = coords[:, 0, None] * axes[0] + coords[:, 1, None] * axes[1]
    weights, biases = [], []
    for i in range(2):
        w = 2.0 * np.arange(n)[:, None] * family_normals[i]
        weights.append(w)
        biases.append(-np.arange(n, dtype=np.float64) ** 2)
    eset = EmbeddingSet(space, z, labels, meta={
        "generator": "separable_nonfactorized", "perturbed": perturbed,
        "seed": seed})
    return eset, ProbeBank(space, weights, biases)


# --- stability across supports ---------------------------------------------------


@dataclass
class StabilityReport:
    """Worst-case posterior disagreement across retrainings.

    max_posterior_tv is the largest total-variation distance between the
    per-concept posteriors of two supports at any grid point;
    direction_dispersion[i] is the largest 1 - cos between concept i's
    weight directions across supports.
    """

    rule: str
    readout: str
    trials: int
    max_posterior_tv: float
    direction_dispersion: np.ndarray
    support_tags: list


def stability_experiment(eset: EmbeddingSet, rule: str, trials: int,
                         config: Optional[TrainConfig] = None,
                         readout: str = "svm", seed: int = 0) -> StabilityReport:
    """Retrain per-concept readouts on `trials` valid supports of a binary
    grid and measure how much the posteriors and directions move.

    readout "svm" uses the exact max-margin oracle; "gd" trains probe banks
    with `config`.  rule "majority" samples half-plus-one supports, "cross"
    samples cross datasets at random centers.
    """
    space = eset.space
    if any(n != 2 for n in space.cardinalities):
        raise ValueError("stability experiment runs on all-binary grids")
    if trials < 2:
        raise ValueError("need at least 2 trials to compare supports")
    if readout not in ("svm", "gd"):
        raise ValueError("readout must be 'svm' or 'gd'")
    if readout == "gd" and config is None:
        raise ValueError("gd readout needs a TrainConfig")
    rng = np.random.default_rng(seed)
    supports = []
    for t in range(trials):
        if rule == "majority":
            supports.append(sample_support(space, BinaryMajority(),
                                           _derived_seed(seed, t)))
        elif rule == "cross":
            center = space.index_tuple(int(rng.integers(space.grid_size())))
            supports.append(cross_dataset(space, center))
        else:
            raise ValueError("rule must be 'majority' or 'cross'")
    k = space.k
    Z = eset.data
    # probability of value 1, per (support, concept, row)
    posteriors = np.empty((trials, k, eset.rows))
    dirs = np.empty((trials, k, eset.d))
    for t, support in enumerate(supports):
        if readout == "svm":
            member = np.fromiter(
                (tuple(row) in set(support.tuples) for row in eset.labels),
                dtype=bool, count=eset.rows)
            for i in range(k):
                pos = Z[member & (eset.labels[:, i] == 1)]
                neg = Z[member & (eset.labels[:, i] == 0)]
                sol = hard_margin_svm(pos, neg)
                logits = Z @ sol.w + sol.b
                posteriors[t, i] = 1.0 / (1.0 + np.exp(-logits))
                dirs[t, i] = sol.w / np.linalg.norm(sol.w)
        else:
            bank, _ = train_probes(eset, support, TrainConfig(
                loss=config.loss, epochs=config.epochs, lr=config.lr,
                seed=_derived_seed(config.seed, t),
                convergence=config.convergence))
            for i in range(k):
                logits = Z @ (bank.weights[i][1] - bank.weights[i][0]) \
                    + (bank.biases[i][1] - bank.biases[i][0])
                posteriors[t, i] = 1.0 / (1.0 + np.exp(-logits))
                diff = bank.weights[i][1] - bank.weights[i][0]
                dirs[t, i] = diff / max(np.linalg.norm(diff), 1e-300)
    max_tv = 0.0
    dispersion = np.zeros(k)
    for a in range(trials):
        for b in range(a + 1, trials):
            max_tv = max(max_tv,
                         float(np.abs(posteriors[a] - posteriors[b]).max()))
            cos = np.abs((dirs[a] * dirs[b]).sum(axis=1))
            dispersion = np.maximum(dispersion, 1.0 - cos)
    return StabilityReport(rule=rule, readout=readout, trials=trials,
                           max_posterior_tv=max_tv,
                           direction_dispersion=dispersion,
                           support_tags=[s.rule_tag for s in supports])
