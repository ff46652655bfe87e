"""Command-line surface: experiment configuration, pipeline execution,
report emission (JSON + CSV slices), and the built-in verification suites.

Config precedence is flags > JSON config file > built-in defaults; the
CGLAB_SEED environment variable supplies the default seed.  Exit codes:
0 pass, 1 usage error, 2 verification failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .concept_space import (
    TrainingSupport,
    cross_dataset,
    enumerate_tuples,
    make_space,
)
from .embedding_store import DumpFormatError, EmbeddingSet, read_dump, write_dump
from .factor_model import (
    recover_by_averaging,
    recover_by_least_squares,
    write_factors,
)
from .metrics import (
    compositional_accuracy,
    effective_rank,
    orthogonality,
    projected_whitened_r2,
)
from .probe_trainer import (
    ProbeBank,
    TrainConfig,
    gradient_check,
    predictions,
    train_probes,
    write_probes,
)
from .synthetic_lab import (
    generate_factorized,
    generate_separable_nonfactorized,
    min_dim_scan,
    stability_experiment,
    train_free_embeddings,
)
from .theory_oracles import (
    OnOffSpec,
    brute_force_region_count,
    make_onoff_construction,
    min_dim_construction,
    onoff_additive_reconstruction,
    onoff_matrix,
    onoff_rank,
    random_affine_arrangement,
    region_count_affine,
    verify_necessity,
    verify_sufficiency,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAILED = 2
EXIT_IO = 3


def _plain(value):
    """Recursively convert numpy containers/scalars into JSON-safe types."""
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def file_digest(path: Path) -> str:
    """64-bit content hash of one file, hex encoded."""
    h = hashlib.blake2b(digest_size=8)
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def dir_digests(path) -> dict:
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.is_file())
    return {p.name: file_digest(p) for p in files}


def write_report(out_dir: Path, command: str, config: dict, seed: int,
                 results: dict, provenance: dict, timings: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "config": _plain(config),
        "seed": int(seed),
        "results": _plain(results),
        "provenance": _plain(provenance),
        "timings": _plain(timings),
    }
    path = out_dir / "report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")
    return path


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def flatten_results(results: dict, prefix: str = ""):
    """Dotted-key scalar rows for the CSV slice of a report."""
    rows = []
    for key in sorted(results):
        value = results[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(flatten_results(value, prefix=f"{name}."))
        elif isinstance(value, list):
            rows.append((name, json.dumps(value)))
        else:
            rows.append((name, value))
    return rows


# --- verification suites -------------------------------------------------------
#
# Each suite returns (passed, details).  These power `cglab verify` and are
# exercised end to end by the acceptance tests.


def suite_regions(seed: int = 0):
    """Sampled region counts match the general-position closed form."""
    rng = np.random.default_rng(seed)
    checks = []
    ok = True
    for trial in range(20):
        m = int(rng.integers(1, 7))
        d = int(rng.integers(1, 4))
        arrangement = random_affine_arrangement(m, d, seed=seed + 1000 + trial)
        counted = brute_force_region_count(arrangement, seed=seed + trial)
        expected = region_count_affine(m, d)
        ok &= counted == expected
        checks.append({"m": m, "d": d, "counted": counted,
                       "expected": expected})
    fixed = brute_force_region_count(random_affine_arrangement(3, 2, seed=seed),
                                     seed=seed)
    ok &= fixed == 7 and region_count_affine(3, 2) == 7
    return ok, {"trials": checks, "three_lines_in_plane": fixed}


def suite_onoff_rank():
    """rank of the two-level score table is 1 + k(n-1) for k,n in 2..5."""
    ok = True
    cells = {}
    for k in range(2, 6):
        for n in range(2, 6):
            rank = onoff_rank(OnOffSpec(k=k, n=n, alpha=1.0, beta=0.2))
            cells[f"k{k}n{n}"] = rank
            ok &= rank == 1 + k * (n - 1)
    example = onoff_matrix(OnOffSpec(k=2, n=3, alpha=1.0, beta=0.2))
    svals = np.linalg.svd(example, compute_uv=False)
    example_rank = int((svals > 1e-9 * svals[0]).sum())
    ok &= example.shape == (6, 9) and example_rank == 5
    return ok, {"ranks": cells, "example_6x9_rank": example_rank}


def suite_packing():
    """Axis-grid construction classifies every tuple exactly in d=k."""
    ok = True
    details = {}
    for k, n in ((2, 20), (3, 12), (4, 6)):
        eset, bank = min_dim_construction(k, n)
        accuracy = float((predictions(bank, eset.data) == eset.labels).mean())
        details[f"k{k}n{n}"] = accuracy
        ok &= accuracy == 1.0
    return ok, details


def unstable_binary_witness():
    """Binary 2x2 grid, separable per concept, with a non-constant flip."""
    space = make_space([2, 2])
    z = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.6, 1.9]])
    labels = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
    return EmbeddingSet(space, z, labels, meta={"generator": "unstable_witness"})


def suite_necessity(seed: int = 0, tol: float = 1e-6):
    """Orthogonal additive grids pass all three clauses; the non-additive
    witness trips the constant-difference clause."""
    ok = True
    residuals = {}
    for k in (2, 3, 4, 5):
        eset, _ = generate_factorized(make_space([2] * k), d=k + 2,
                                      orthogonal=True, seed=seed + k)
        report = verify_necessity(eset, tol=tol)
        residuals[f"k{k}"] = {
            "support_vector": report.support_vector_residual,
            "linearity": report.linearity_residual,
            "orthogonality": report.orthogonality_residual,
        }
        ok &= report.passed
    witness_report = verify_necessity(unstable_binary_witness(), tol=tol)
    ok &= not witness_report.linearity_ok
    return ok, {"residuals": residuals, "tol": tol,
                "witness_linearity_residual":
                    witness_report.linearity_residual}


def suite_sufficiency(seed: int = 0):
    """k=4 orthogonal factors transfer and stay stable over valid supports."""
    _, factors = generate_factorized(make_space([2] * 4), d=6,
                                     orthogonal=True, seed=seed)
    majority = verify_sufficiency(factors, rule="majority", n_supports=10,
                                  seed=seed)
    cross = verify_sufficiency(factors, rule="cross", seed=seed)
    ok = majority.passed and cross.passed
    return ok, {
        "majority": {"min_weight_cosine": majority.min_weight_cosine,
                     "max_posterior_tv": majority.max_posterior_tv},
        "cross": {"min_weight_cosine": cross.min_weight_cosine,
                  "max_posterior_tv": cross.max_posterior_tv,
                  "n_supports": cross.n_supports},
    }


def suite_factor_recovery(seed: int = 0):
    """Averaging and least squares agree on full grids; a single cross
    support already pins the centered factors exactly."""
    ok = True
    details = {}
    for cards in ([2, 2, 2], [3, 3], [2, 3, 4]):
        space = make_space(cards)
        eset, truth = generate_factorized(space, d=9, orthogonal=False,
                                          seed=seed)
        avg = recover_by_averaging(eset)
        lsq = recover_by_least_squares(eset)
        agree = max(float(np.abs(a - l).max())
                    for a, l in zip(avg.factors, lsq.factors))
        center = space.index_tuple(0)
        support = cross_dataset(space, center)
        rows = [space.tuple_index(t) for t in support.tuples]
        sub = EmbeddingSet(space, eset.data[rows], eset.labels[rows])
        from_cross = recover_by_least_squares(sub)
        cross_err = max(float(np.abs(f - t).max())
                        for f, t in zip(from_cross.factors, truth.factors))
        details[str(tuple(cards))] = {"avg_vs_lstsq": agree,
                                      "cross_support_error": cross_err}
        ok &= agree <= 1e-8 and cross_err <= 1e-8
    return ok, details


def dominant_noise_embeddings(seed: int = 0):
    """Additive signal on one big axis plus concept-free noise on a small
    axis: raw R^2 looks fine, whitening exposes the noise."""
    rng = np.random.default_rng(seed)
    space = make_space([6, 6])
    labels = np.asarray(list(enumerate_tuples(space)), dtype=np.int64)
    z = np.zeros((labels.shape[0], 2))
    z[:, 0] = 10.0 * labels[:, 0]
    z[:, 1] = 0.3 * labels[:, 1] + rng.standard_normal(labels.shape[0])
    return EmbeddingSet(space, z, labels,
                        meta={"generator": "dominant_noise"})


def suite_metrics_sanity(seed: int = 0):
    ok = True
    eset, factors = generate_factorized(make_space([3, 3, 3]), d=8,
                                        orthogonal=True, seed=seed)
    r2_exact = projected_whitened_r2(eset, factors).r2
    ok &= abs(r2_exact - 1.0) <= 1e-9
    counter, witness = generate_separable_nonfactorized(8, seed=seed)
    witness_acc = float(
        (predictions(witness, counter.data) == counter.labels).mean())
    counter_r2 = projected_whitened_r2(
        counter, recover_by_averaging(counter), probes=witness).r2
    ok &= witness_acc == 1.0 and counter_r2 < 0.9
    noisy = dominant_noise_embeddings(seed=seed)
    noisy_factors = recover_by_averaging(noisy)
    r2_white = projected_whitened_r2(noisy, noisy_factors).r2
    r2_raw = projected_whitened_r2(noisy, noisy_factors, whiten=False).r2
    ok &= r2_white < r2_raw
    return ok, {"factorized_r2": r2_exact, "witness_accuracy": witness_acc,
                "counterexample_r2": counter_r2,
                "dominant_noise": {"whitened": r2_white, "raw": r2_raw}}


def suite_gradients(seed: int = 0, tol: float = 1e-4):
    """Analytic gradients vs central differences on random small instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(20):
        k = int(rng.integers(1, 3))
        cards = [int(rng.integers(2, 4)) for _ in range(k)]
        space = make_space(cards)
        d = int(rng.integers(2, 5))
        rows = int(rng.integers(4, 9))
        labels = np.column_stack([rng.integers(0, n, size=rows)
                                  for n in cards])
        eset = EmbeddingSet(space, rng.standard_normal((rows, d)), labels)
        support = TrainingSupport(
            space, tuple(sorted({tuple(r) for r in labels.tolist()})))
        mode = trial % 3
        if mode < 2:
            bank = ProbeBank(space,
                             [0.5 * rng.standard_normal((n, d)) for n in cards],
                             [0.1 * rng.standard_normal(n) for n in cards])
            loss = "ce" if mode == 0 else "bce"
        else:
            weights = [rng.standard_normal((n, d)) for n in cards]
            weights = [w / np.linalg.norm(w, axis=1, keepdims=True)
                       for w in weights]
            bank = ProbeBank(space, weights,
                             [0.1 * rng.standard_normal(n) for n in cards],
                             geometry="spherical",
                             log_temperature=float(rng.uniform(-0.5, 0.5)))
            loss = "ce"
        worst = max(worst, gradient_check(bank, eset, support, loss))
    return worst <= tol, {"max_relative_error": worst, "tol": tol}


def suite_onoff_reconstruction(tol: float = 1e-9):
    """Conditional-mean reconstruction preserves the two-level scores."""
    ok = True
    details = {}
    for k in (2, 3, 4):
        for n in (2, 3, 4):
            spec = OnOffSpec(k=k, n=n, alpha=1.0, beta=0.2)
            eset, bank = make_onoff_construction(spec)
            try:
                onoff_additive_reconstruction(bank, eset, tol=tol / 10)
                details[f"k{k}n{n}"] = "ok"
            except ValueError as exc:
                details[f"k{k}n{n}"] = str(exc)
                ok = False
    return ok, details


VERIFY_SUITES = {
    "regions": suite_regions,
    "onoff-rank": lambda seed=0: suite_onoff_rank(),
    "packing": lambda seed=0: suite_packing(),
    "necessity": suite_necessity,
    "sufficiency": suite_sufficiency,
    "factor-recovery": suite_factor_recovery,
    "metrics-sanity": suite_metrics_sanity,
    "gradients": suite_gradients,
    "onoff-reconstruction": lambda seed=0: suite_onoff_reconstruction(),
}


# --- CLI plumbing ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class UsageError(Exception):
    pass


def _default_seed() -> int:
    return int(os.environ.get("CGLAB_SEED", "0"))


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults (flags parse to None when absent)."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IOError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(loaded)
    for key in defaults:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            resolved[key] = value
    return resolved


def _int_list(text: str):
    return [int(x) for x in text.split(",")]


def _add_common(sub, *, seeded=True):
    sub.add_argument("--config", help="JSON config file (flags override it)")
    sub.add_argument("--out", help="output directory for report files")
    if seeded:
        sub.add_argument("--seed", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="cglab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth-train",
                        help="optimize free embeddings jointly with probes")
    _add_common(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--loss", choices=["ce", "bce"], default=None)
    p.add_argument("--geometry", choices=["euclidean", "spherical"],
                   default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)

    p = subs.add_parser("min-dim-scan",
                        help="smallest workable dimension per (k, n) cell")
    _add_common(p)
    p.add_argument("--k", type=_int_list, default=None,
                   help="comma-separated concept counts")
    p.add_argument("--n", type=_int_list, default=None,
                   help="comma-separated values per concept")
    p.add_argument("--loss", choices=["ce", "bce"], default=None)
    p.add_argument("--geometry", choices=["euclidean", "spherical"],
                   default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--d-max", type=int, default=None)

    p = subs.add_parser("recover-factors",
                        help="fit additive factors to a dump")
    _add_common(p)
    p.add_argument("--dump", required=True)
    p.add_argument("--method", choices=["averaging", "lstsq"], default=None)

    p = subs.add_parser("metrics",
                        help="R^2, orthogonality, ranks, held-out accuracy")
    _add_common(p)
    p.add_argument("--dump", required=True)
    p.add_argument("--heldout-fraction", type=float, default=None)
    p.add_argument("--loss", choices=["ce", "bce"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)

    p = subs.add_parser("verify", help="run the built-in verification suites")
    _add_common(p)
    p.add_argument("--suite", default=None,
                   help="'all' or comma-separated suite names "
                        f"({', '.join(VERIFY_SUITES)})")
    p.add_argument("--jobs", type=int, default=None)

    p = subs.add_parser("probe-train", help="train a probe bank on a dump")
    _add_common(p)
    p.add_argument("--dump", required=True)
    p.add_argument("--loss", choices=["ce", "bce"], default=None)
    p.add_argument("--geometry", choices=["euclidean", "spherical"],
                   default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--fraction", type=float, default=None,
                   help="train on this fraction of tuples (1.0 = all)")

    p = subs.add_parser("stability",
                        help="posterior agreement across retrained supports")
    _add_common(p)
    p.add_argument("--dump", required=True)
    p.add_argument("--rule", choices=["majority", "cross"], default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--readout", choices=["svm", "gd"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--loss", choices=["ce", "bce"], default=None)

    p = subs.add_parser("report",
                        help="flatten one or more report JSONs into CSV")
    p.add_argument("--report", required=True, nargs="+")
    p.add_argument("--out", default=None)
    return parser


def _observed_tuple_support(eset: EmbeddingSet) -> TrainingSupport:
    observed = sorted({tuple(r) for r in eset.labels.tolist()})
    return TrainingSupport(eset.space, tuple(observed),
                           rule_tag="observed_tuples")


def _split_support(eset: EmbeddingSet, heldout_fraction: float, seed: int):
    """Uniform tuple-level split of the observed tuples."""
    observed = sorted({tuple(r) for r in eset.labels.tolist()})
    n_held = int(heldout_fraction * len(observed))
    if n_held < 1 or n_held >= len(observed):
        raise UsageError(
            f"held-out fraction {heldout_fraction} leaves no usable split "
            f"over {len(observed)} observed tuples")
    rng = np.random.default_rng(seed)
    held_idx = set(rng.choice(len(observed), size=n_held, replace=False)
                   .tolist())
    held = tuple(t for i, t in enumerate(observed) if i in held_idx)
    train = tuple(t for i, t in enumerate(observed) if i not in held_idx)
    return (TrainingSupport(eset.space, train, rule_tag="split_train"),
            TrainingSupport(eset.space, held, rule_tag="split_heldout"))


# --- subcommand handlers ----------------------------------------------------------


def cmd_synth_train(args) -> int:
    cfg = _merge_config(args, {
        "k": 2, "n": 2, "d": 2, "loss": "ce", "geometry": "euclidean",
        "epochs": 5000, "lr": 0.1, "seed": _default_seed(),
        "out": "cglab_synth",
    })
    t0 = time.perf_counter()
    run = train_free_embeddings(
        make_space([cfg["n"]] * cfg["k"]), cfg["d"], cfg["loss"],
        cfg["geometry"],
        TrainConfig(loss=cfg["loss"], epochs=cfg["epochs"], lr=cfg["lr"],
                    seed=cfg["seed"]))
    out = Path(cfg["out"])
    write_dump(run.embeddings, out / "dump")
    write_probes(run.probes, out / "dump")
    results = {
        "per_concept_accuracy": run.per_concept_accuracy,
        "mean_accuracy": run.mean_accuracy,
        "final_loss": float(run.history[-1]),
        "sampled_grid": run.sampled_grid,
    }
    write_report(out, "synth-train", cfg, cfg["seed"], results,
                 {"dump": dir_digests(out / "dump")},
                 {"train_s": time.perf_counter() - t0})
    print(f"synth-train: mean accuracy {run.mean_accuracy:.4f} -> {out}")
    return EXIT_OK


def cmd_min_dim_scan(args) -> int:
    cfg = _merge_config(args, {
        "k": [2, 3], "n": [2], "loss": "ce", "geometry": "euclidean",
        "epochs": 5000, "lr": 0.1, "restarts": 3, "d-max": 32,
        "seed": _default_seed(), "out": "cglab_scan",
    })
    t0 = time.perf_counter()
    table = min_dim_scan(cfg["k"], cfg["n"], cfg["loss"], cfg["geometry"],
                         TrainConfig(loss=cfg["loss"], epochs=cfg["epochs"],
                                     lr=cfg["lr"], seed=cfg["seed"]),
                         restarts=cfg["restarts"], d_max=cfg["d-max"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    found_rows = [(k, n, "" if d is None else d)
                  for (k, n), d in sorted(table.found.items())]
    write_csv(out / "min_dim.csv", ["k", "n", "min_d"], found_rows)
    history_rows = [(k, n, h["d"], h["restart"], f"{h['mean_accuracy']:.6f}")
                    for (k, n), hist in sorted(table.history.items())
                    for h in hist]
    write_csv(out / "scan_history.csv",
              ["k", "n", "d", "restart", "mean_accuracy"], history_rows)
    results = {
        "found": {f"k{k}n{n}": d for (k, n), d in sorted(table.found.items())},
        "approximate_cells": table.approximate_cells,
        "criterion": table.criterion,
        "restarts": table.restarts,
    }
    write_report(out, "min-dim-scan", cfg, cfg["seed"], results, {},
                 {"scan_s": time.perf_counter() - t0})
    for k, n, d in found_rows:
        label = d if d != "" else "not found <= {}".format(cfg["d-max"])
        print(f"min-dim-scan: k={k} n={n} -> {label}")
    return EXIT_OK


def cmd_recover_factors(args) -> int:
    cfg = _merge_config(args, {
        "dump": None, "method": "averaging", "seed": _default_seed(),
        "out": "cglab_factors",
    })
    eset = read_dump(cfg["dump"])
    t0 = time.perf_counter()
    if cfg["method"] == "averaging":
        factors = recover_by_averaging(eset)
    else:
        factors = recover_by_least_squares(eset)
    out = Path(cfg["out"])
    write_factors(factors, out / "factors")
    r2 = projected_whitened_r2(eset, factors)
    results = {"method": cfg["method"], "whitened_r2": r2.r2,
               "residual_ss": r2.numerator_ss, "total_ss": r2.denominator_ss}
    write_report(out, "recover-factors", cfg, cfg["seed"], results,
                 {"input_dump": dir_digests(cfg["dump"]),
                  "factors": dir_digests(out / "factors")},
                 {"recover_s": time.perf_counter() - t0})
    print(f"recover-factors: whitened R^2 {r2.r2:.4f} -> {out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    cfg = _merge_config(args, {
        "dump": None, "heldout-fraction": 0.1, "loss": "ce", "epochs": 1000,
        "lr": 0.01, "seed": _default_seed(), "out": "cglab_metrics",
    })
    eset = read_dump(cfg["dump"])
    t0 = time.perf_counter()
    train_support, heldout = _split_support(eset, cfg["heldout-fraction"],
                                            cfg["seed"])
    bank, _ = train_probes(eset, train_support,
                           TrainConfig(loss=cfg["loss"], epochs=cfg["epochs"],
                                       lr=cfg["lr"], seed=cfg["seed"]))
    factors = recover_by_averaging(eset)
    r2 = projected_whitened_r2(eset, factors, probes=bank)
    orth = orthogonality(factors)
    ranks = {}
    for i in range(eset.space.k):
        rank, _curve = effective_rank(factors, i)
        ranks[f"concept_{i}"] = rank
    per_concept, mean_acc = compositional_accuracy(bank, eset, heldout)
    results = {
        "projected_whitened_r2": r2.r2,
        "r2_pipeline": r2.pipeline,
        "orthogonality_within": orth.within,
        "orthogonality_across": orth.across,
        "effective_rank_95": ranks,
        "compositional_accuracy": {"per_concept": per_concept,
                                   "mean": mean_acc},
        "split": {"train_tuples": len(train_support),
                  "heldout_tuples": len(heldout)},
    }
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "metrics.csv", ["metric", "value"],
              flatten_results(_plain(results)))
    write_report(out, "metrics", cfg, cfg["seed"], results,
                 {"input_dump": dir_digests(cfg["dump"])},
                 {"metrics_s": time.perf_counter() - t0})
    print(f"metrics: R^2 {r2.r2:.4f}, mean held-out accuracy "
          f"{mean_acc:.4f} -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _merge_config(args, {
        "suite": "all", "jobs": 1, "seed": _default_seed(),
        "out": "cglab_verify",
    })
    names = (list(VERIFY_SUITES) if cfg["suite"] == "all"
             else [s.strip() for s in str(cfg["suite"]).split(",")])
    unknown = [s for s in names if s not in VERIFY_SUITES]
    if unknown:
        raise UsageError(f"unknown suites: {unknown}")
    t0 = time.perf_counter()
    timings = {}

    def run_one(name):
        start = time.perf_counter()
        passed, details = VERIFY_SUITES[name](seed=cfg["seed"])
        return name, passed, details, time.perf_counter() - start

    if cfg["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["jobs"]) as pool:
            outcomes = list(pool.map(run_one, names))
    else:
        outcomes = [run_one(name) for name in names]
    outcomes.sort(key=lambda item: names.index(item[0]))
    results = {}
    all_ok = True
    for name, passed, details, elapsed in outcomes:
        results[name] = {"passed": passed, "details": details}
        timings[name] = elapsed
        all_ok &= passed
        print(f"verify {name}: {'PASS' if passed else 'FAIL'}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "verify.csv", ["suite", "passed"],
              [(name, results[name]["passed"]) for name in names])
    timings["total_s"] = time.perf_counter() - t0
    write_report(out, "verify", cfg, cfg["seed"], results, {}, timings)
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


def cmd_probe_train(args) -> int:
    cfg = _merge_config(args, {
        "dump": None, "loss": "ce", "geometry": "euclidean", "epochs": 1000,
        "lr": 0.01, "fraction": 1.0, "seed": _default_seed(),
        "out": "cglab_probes",
    })
    eset = read_dump(cfg["dump"])
    t0 = time.perf_counter()
    if cfg["fraction"] >= 1.0:
        support = _observed_tuple_support(eset)
    else:
        support, _ = _split_support(eset, 1.0 - cfg["fraction"], cfg["seed"])
    bank, history = train_probes(
        eset, support,
        TrainConfig(loss=cfg["loss"], epochs=cfg["epochs"], lr=cfg["lr"],
                    seed=cfg["seed"]),
        geometry=cfg["geometry"])
    out = Path(cfg["out"])
    write_probes(bank, out / "probes")
    train_acc = float((predictions(bank, eset.data) == eset.labels)
                      .mean())
    results = {"final_loss": float(history[-1]),
               "epochs_run": int(history.shape[0]),
               "all_rows_accuracy": train_acc,
               "support_tuples": len(support)}
    write_report(out, "probe-train", cfg, cfg["seed"], results,
                 {"input_dump": dir_digests(cfg["dump"]),
                  "probes": dir_digests(out / "probes")},
                 {"train_s": time.perf_counter() - t0})
    print(f"probe-train: final loss {history[-1]:.6f} -> {out}")
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = _merge_config(args, {
        "dump": None, "rule": "majority", "trials": 5, "readout": "svm",
        "loss": "ce", "epochs": 2000, "lr": 0.05, "seed": _default_seed(),
        "out": "cglab_stability",
    })
    eset = read_dump(cfg["dump"])
    t0 = time.perf_counter()
    report = stability_experiment(
        eset, cfg["rule"], cfg["trials"],
        config=TrainConfig(loss=cfg["loss"], epochs=cfg["epochs"],
                           lr=cfg["lr"], seed=cfg["seed"]),
        readout=cfg["readout"], seed=cfg["seed"])
    results = {"max_posterior_tv": report.max_posterior_tv,
               "direction_dispersion": report.direction_dispersion,
               "support_tags": report.support_tags}
    out = Path(cfg["out"])
    write_report(out, "stability", cfg, cfg["seed"], results,
                 {"input_dump": dir_digests(cfg["dump"])},
                 {"stability_s": time.perf_counter() - t0})
    print(f"stability: max posterior TV {report.max_posterior_tv:.3g} "
          f"-> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    """Flatten reports to CSV; several reports merge into one table with a
    source column, handy for cross-run comparisons (e.g. R^2 vs accuracy
    per model)."""
    paths = [Path(p) for p in args.report]
    rows = []
    for path in paths:
        try:
            report = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise IOError(f"cannot read report: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise IOError(f"report is not valid JSON: {exc}") from exc
        flat = flatten_results(report.get("results", {}))
        if len(paths) == 1:
            rows.extend(flat)
        else:
            rows.extend((str(path), key, value) for key, value in flat)
    out = Path(args.out) if args.out else paths[0].with_suffix(".csv")
    header = ["metric", "value"] if len(paths) == 1 else \
        ["report", "metric", "value"]
    write_csv(out, header, rows)
    print(f"report: {len(rows)} rows -> {out}")
    return EXIT_OK


HANDLERS = {
    "synth-train": cmd_synth_train,
    "min-dim-scan": cmd_min_dim_scan,
    "recover-factors": cmd_recover_factors,
    "metrics": cmd_metrics,
    "verify": cmd_verify,
    "probe-train": cmd_probe_train,
    "stability": cmd_stability,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"cglab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DumpFormatError, OSError) as exc:
        print(f"cglab: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        print(f"cglab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
