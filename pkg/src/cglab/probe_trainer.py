"""Affine per-concept readouts over fixed embeddings.

One probe per (concept, value); logits are dot products (Euclidean) or
temperature-scaled cosines (spherical, inputs and weights normalized
internally).  Training is full-batch adaptive-moment descent with a cosine
learning-rate decay to zero, deterministic under the config seed.  Losses:
per-concept softmax cross-entropy, or one-vs-rest sigmoid cross-entropy
averaged over the concept's values.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .concept_space import ConceptSpace, TrainingSupport
from .embedding_store import (
    EmbeddingSet,
    base_manifest,
    parse_cardinalities,
    read_manifest,
    read_matrix_f32,
    update_manifest,
    write_matrix_f32,
)

EUCLIDEAN = "euclidean"
SPHERICAL = "spherical"

WEIGHTS_NAME = "probe_weights.bin"
BIASES_NAME = "probe_biases.bin"

_NORM_FLOOR = 1e-300  # guards 0/0 when normalizing exact-zero rows


@dataclass
class ProbeBank:
    """Affine readouts w_{i,j}, b_{i,j} for every concept value.

    Spherical banks store unit-norm weight rows and score by
    exp(log_temperature) * cosine(z, w) + b; Euclidean banks score by raw
    dot products (any temperature is absorbed into the weights).
    """

    space: ConceptSpace
    weights: list           # per concept: (n_i x d)
    biases: list            # per concept: (n_i,)
    geometry: str = EUCLIDEAN
    log_temperature: float = 0.0

    def __post_init__(self):
        if self.geometry not in (EUCLIDEAN, SPHERICAL):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if len(self.weights) != self.space.k or len(self.biases) != self.space.k:
            raise ValueError("need one weight/bias block per concept")
        d = np.asarray(self.weights[0]).shape[1]
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            n = self.space.cardinalities[i]
            if w.shape != (n, d) or b.shape != (n,):
                raise ValueError(f"probe block {i} has wrong shape")
            if self.geometry == SPHERICAL:
                norms = np.linalg.norm(w, axis=1)
                if np.abs(norms - 1.0).max() > 1e-8:
                    raise ValueError("spherical probe rows must be unit norm")
            ws.append(w)
            bs.append(b)
        self.weights = ws
        self.biases = bs
        self.log_temperature = float(self.log_temperature)

    @property
    def d(self) -> int:
        return self.weights[0].shape[1]

    def stacked_weights(self) -> np.ndarray:
        return np.vstack(self.weights)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.maximum(np.linalg.norm(matrix, axis=1, keepdims=True), _NORM_FLOOR)
    return matrix / norms


def score_rows(bank: ProbeBank, Z: np.ndarray) -> list:
    """Per-concept logit matrices (rows x n_i) for a batch of embeddings."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[1] != bank.d:
        raise ValueError(f"embedding dim {Z.shape[1]} != probe dim {bank.d}")
    if bank.geometry == SPHERICAL:
        Z = _unit_rows(Z)
        tau = np.exp(bank.log_temperature)
        return [tau * (Z @ _unit_rows(w).T) + b
                for w, b in zip(bank.weights, bank.biases)]
    return [Z @ w.T + b for w, b in zip(bank.weights, bank.biases)]


def score(bank: ProbeBank, z: np.ndarray) -> list:
    """Logits for one embedding: a list of k arrays, entry i of length n_i."""
    return [row[0] for row in score_rows(bank, np.asarray(z)[None, :])]


def posterior(bank: ProbeBank, z: np.ndarray, i: int) -> np.ndarray:
    """Softmax over concept i's logits at z."""
    logits = score(bank, z)[i]
    shifted = logits - logits.max()
    expd = np.exp(shifted)
    return expd / expd.sum()


def predictions(bank: ProbeBank, Z: np.ndarray) -> np.ndarray:
    """(rows x k) argmax values; ties break toward the lowest value index."""
    return np.column_stack([s.argmax(axis=1) for s in score_rows(bank, Z)])


# --- losses and gradients -----------------------------------------------------
#
# The training core works on raw parameter arrays rather than ProbeBank so
# finite-difference checks can perturb freely (spherical banks re-normalize
# inside the loss, and the bank invariant would reject off-sphere rows).


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))),
                    x - np.log1p(np.exp(-np.abs(x))))


def _loss_and_grads(weights, biases, log_tau, Z, labels, loss: str,
                    geometry: str, want_z_grad: bool = False):
    """Mean per-sample loss and gradients w.r.t. all parameters.

    Returns (loss, grad_weights, grad_biases, grad_log_tau, grad_Z).
    """
    m = Z.shape[0]
    if geometry == SPHERICAL:
        z_norms = np.maximum(np.linalg.norm(Z, axis=1, keepdims=True), _NORM_FLOOR)
        Zh = Z / z_norms
        tau = float(np.exp(log_tau))
    else:
        Zh = Z
        tau = 1.0
    total = 0.0
    grad_w, grad_b = [], []
    grad_tau = 0.0
    grad_Zh = np.zeros_like(Zh) if (want_z_grad or geometry == SPHERICAL) else None
    for i, (w, b) in enumerate(zip(weights, biases)):
        n = w.shape[0]
        if geometry == SPHERICAL:
            w_norms = np.maximum(np.linalg.norm(w, axis=1, keepdims=True),
                                 _NORM_FLOOR)
            wh = w / w_norms
        else:
            wh = w
        cos = Zh @ wh.T
        logits = tau * cos + b
        y = labels[:, i]
        onehot = np.zeros((m, n))
        onehot[np.arange(m), y] = 1.0
        if loss == "ce":
            shifted = logits - logits.max(axis=1, keepdims=True)
            logz = np.log(np.exp(shifted).sum(axis=1))
            total += float((logz - shifted[np.arange(m), y]).sum())
            g = (_softmax(logits) - onehot) / m
        elif loss == "bce":
            signs = 2.0 * onehot - 1.0
            total += float(-(_log_sigmoid(signs * logits)).sum() / n)
            g = (_sigmoid(logits) - onehot) / (n * m)
        else:
            raise ValueError(f"unknown loss {loss!r}")
        grad_b.append(g.sum(axis=0))
        gw_hat = tau * (g.T @ Zh)
        if geometry == SPHERICAL:
            # through row normalization: (I - wh wh^T) / ||w||
            gw = (gw_hat - (gw_hat * wh).sum(axis=1, keepdims=True) * wh) / w_norms
            grad_tau += tau * float((g * cos).sum())
            grad_Zh += tau * (g @ wh)
        else:
            gw = gw_hat
            if grad_Zh is not None:
                grad_Zh += g @ wh
        grad_w.append(gw)
    grad_Z = None
    if want_z_grad:
        if geometry == SPHERICAL:
            grad_Z = (grad_Zh
                      - (grad_Zh * Zh).sum(axis=1, keepdims=True) * Zh) / z_norms
        else:
            grad_Z = grad_Zh
    return total / m, grad_w, grad_b, grad_tau, grad_Z


@dataclass
class TrainConfig:
    """Optimization protocol: full batch, cosine decay of the step to zero."""

    loss: str = "ce"                 # "ce" or "bce"
    epochs: int = 5000
    lr: float = 0.1
    seed: int = 0
    convergence: Optional[float] = None  # stop when weight directions settle

    def __post_init__(self):
        if self.loss not in ("ce", "bce"):
            raise ValueError(f"loss must be 'ce' or 'bce', got {self.loss!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


class AdamState:
    """Adaptive-moment state over a flat list of parameter arrays."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * epoch / total_epochs))


def _support_rows(eset: EmbeddingSet, support: TrainingSupport) -> np.ndarray:
    if len(support) == 0:
        raise ValueError("support is empty")
    wanted = set(support.tuples)
    mask = np.fromiter((tuple(row) in wanted for row in eset.labels),
                       dtype=bool, count=eset.rows)
    covered = {tuple(row) for row in eset.labels[mask]}
    missing = wanted - covered
    if missing:
        raise ValueError(f"support tuples without samples: {sorted(missing)[:5]}")
    return np.nonzero(mask)[0]


def loss_value(bank: ProbeBank, eset: EmbeddingSet,
               support: TrainingSupport, loss: str = "ce") -> float:
    """Mean per-sample loss of `bank` on the support rows of `eset`."""
    rows = _support_rows(eset, support)
    value, *_ = _loss_and_grads(
        bank.weights, bank.biases, bank.log_temperature,
        eset.data[rows], eset.labels[rows], loss, bank.geometry)
    return value


def init_params(space: ConceptSpace, d: int, geometry: str,
                rng: np.random.Generator, scale: float = 0.01):
    weights = [scale * rng.standard_normal((n, d))
               for n in space.cardinalities]
    if geometry == SPHERICAL:
        weights = [_unit_rows(w) for w in weights]
    biases = [np.zeros(n) for n in space.cardinalities]
    return weights, biases


def train_probes(eset: EmbeddingSet, support: TrainingSupport,
                 config: TrainConfig, geometry: str = EUCLIDEAN):
    """Fit a probe bank on the support rows; returns (bank, loss_history).

    Embeddings are inputs only and are never modified.  Raises on a
    non-finite loss with the epoch and last step size in the message.
    """
    rows = _support_rows(eset, support)
    Z = eset.data[rows].copy()
    labels = eset.labels[rows]
    rng = np.random.default_rng(config.seed)
    weights, biases = init_params(eset.space, eset.d, geometry, rng)
    log_tau = np.zeros(())
    params = weights + biases + ([log_tau] if geometry == SPHERICAL else [])
    adam = AdamState(params)
    history = np.empty(config.epochs)
    prev_dirs = None
    epochs_run = config.epochs
    for epoch in range(config.epochs):
        value, gw, gb, gtau, _ = _loss_and_grads(
            weights, biases, float(log_tau), Z, labels, config.loss, geometry)
        history[epoch] = value
        if not np.isfinite(value):
            raise RuntimeError(
                f"loss diverged to {value} at epoch {epoch} "
                f"(lr {cosine_lr(config.lr, epoch, config.epochs):.3g})")
        grads = gw + gb + ([np.asarray(gtau)] if geometry == SPHERICAL else [])
        adam.step(params, grads, cosine_lr(config.lr, epoch, config.epochs))
        if geometry == SPHERICAL:
            for w in weights:
                w[:] = _unit_rows(w)
        if config.convergence is not None:
            dirs = [_unit_rows(w) for w in weights]
            if prev_dirs is not None:
                change = max(1.0 - float((dn * dp).sum(axis=1).min())
                             for dn, dp in zip(dirs, prev_dirs))
                if change < config.convergence:
                    epochs_run = epoch + 1
                    break
            prev_dirs = dirs
    bank = ProbeBank(eset.space, weights, biases, geometry=geometry,
                     log_temperature=float(log_tau))
    return bank, history[:epochs_run]


def gradient_check(bank: ProbeBank, eset: EmbeddingSet,
                   support: TrainingSupport, loss: str = "ce",
                   step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Covers every weight, bias, and (spherical) temperature parameter;
    intended for small instances (<= ~1e3 parameters).
    """
    rows = _support_rows(eset, support)
    Z = eset.data[rows]
    labels = eset.labels[rows]
    weights = [w.copy() for w in bank.weights]
    biases = [b.copy() for b in bank.biases]
    log_tau = bank.log_temperature

    def evaluate():
        value, *_ = _loss_and_grads(weights, biases, log_tau, Z, labels,
                                    loss, bank.geometry)
        return value

    _, gw, gb, gtau, _ = _loss_and_grads(weights, biases, log_tau, Z, labels,
                                         loss, bank.geometry)
    worst = 0.0

    def compare(analytic, probe_fn):
        nonlocal worst
        plus = probe_fn(step)
        minus = probe_fn(-step)
        numeric = (plus - minus) / (2 * step)
        err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
        worst = max(worst, err)

    for blk, grad_blk in ((weights, gw), (biases, gb)):
        for arr, grad in zip(blk, grad_blk):
            flat, gflat = arr.reshape(-1), grad.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]

                def probe(h, idx=idx, orig=orig, flat=flat):
                    flat[idx] = orig + h
                    value = evaluate()
                    flat[idx] = orig
                    return value

                compare(gflat[idx], probe)
    if bank.geometry == SPHERICAL:

        def probe_tau(h):
            nonlocal log_tau
            orig = log_tau
            log_tau = orig + h
            value = evaluate()
            log_tau = orig
            return value

        compare(gtau, probe_tau)
    return worst


# --- serialization in the dump layout ---------------------------------------


def write_probes(bank: ProbeBank, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = base_manifest(bank.space, bank.d)
    entries["kind"] = "probes"
    entries["probes_geometry"] = bank.geometry
    entries["probes_log_temperature"] = repr(bank.log_temperature)
    entries["probes_weights"] = WEIGHTS_NAME
    entries["probes_biases"] = BIASES_NAME
    update_manifest(path, entries)
    write_matrix_f32(path / WEIGHTS_NAME, bank.stacked_weights())
    write_matrix_f32(path / BIASES_NAME,
                     np.concatenate(bank.biases)[None, :])


def read_probes(path) -> ProbeBank:
    path = Path(path)
    manifest = read_manifest(path)
    space = parse_cardinalities(manifest)
    d = int(manifest["d"])
    total = sum(space.cardinalities)
    stacked = read_matrix_f32(path / manifest.get("probes_weights", WEIGHTS_NAME),
                              total, d)
    flat_biases = read_matrix_f32(
        path / manifest.get("probes_biases", BIASES_NAME), 1, total)[0]
    geometry = manifest.get("probes_geometry", EUCLIDEAN)
    weights, biases, offset = [], [], 0
    for n in space.cardinalities:
        w = stacked[offset:offset + n]
        if geometry == SPHERICAL:
            w = _unit_rows(w)  # f32 rounding may drift off the sphere
        weights.append(w)
        biases.append(flat_biases[offset:offset + n])
        offset += n
    return ProbeBank(space, weights, biases, geometry=geometry,
                     log_temperature=float(
                         manifest.get("probes_log_temperature", "0.0")))
