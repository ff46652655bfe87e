"""Batched embedding extraction into the shared dump format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .dump import write_dump
from .encoders import build_encoder, preprocess
from .sprites import load_dataset


@dataclass
class ExtractionJob:
    model_id: str
    dataset_id: str
    output_path: str
    batch_size: int = 32
    device: str = "cpu"
    pretrained: bool = False
    l2_normalize: bool = False
    limit: int = 0           # truncate the dataset (0 = everything)
    seed: int = 0
    mapping_path: str = ""   # optional dataset->space mapping JSON


def default_mapping(dataset) -> dict:
    return {"concepts": [{"name": name, "cardinality": card}
                         for name, card in zip(dataset.concept_names(),
                                               dataset.cardinalities())]}


def load_mapping(job: ExtractionJob, dataset) -> dict:
    """Resolve the dataset->space mapping and check it fits the dataset."""
    if job.mapping_path:
        mapping = json.loads(Path(job.mapping_path).read_text(
            encoding="utf-8"))
    else:
        mapping = default_mapping(dataset)
    concepts = mapping.get("concepts", [])
    declared = tuple(int(c["cardinality"]) for c in concepts)
    if declared != tuple(dataset.cardinalities()):
        raise ValueError(
            f"label mapping mismatch: mapping declares {declared}, "
            f"dataset provides {tuple(dataset.cardinalities())}")
    return mapping


def extract(job: ExtractionJob) -> Path:
    """Run the encoder over the dataset and write one dump directory.

    One row per image, labels in the dataset's canonical tuple order,
    float32 payloads; the manifest records the model, dataset,
    preprocessing, and normalization choices.
    """
    dataset = load_dataset(job.dataset_id, limit=job.limit)
    mapping = load_mapping(job, dataset)
    model, input_size, preprocessing = build_encoder(
        job.model_id, pretrained=job.pretrained, seed=job.seed)
    device = torch.device(job.device)
    model.to(device)
    rows = len(dataset)
    chunks = []
    labels = np.empty((rows, len(dataset.cardinalities())), dtype=np.int64)
    with torch.no_grad():
        for start in range(0, rows, job.batch_size):
            stop = min(start + job.batch_size, rows)
            images = np.stack([dataset.image_at(r)
                               for r in range(start, stop)])
            for offset, r in enumerate(range(start, stop)):
                labels[r] = dataset.label_at(r)
            batch = preprocess(torch.from_numpy(images), input_size)
            features = model(batch.to(device)).cpu()
            if job.l2_normalize:
                features = torch.nn.functional.normalize(features, dim=1)
            chunks.append(features.numpy().astype(np.float32))
    embeddings = np.concatenate(chunks, axis=0)
    meta = {
        "model_id": job.model_id,
        "dataset_id": job.dataset_id,
        "preprocessing": preprocessing,
        "l2_normalized": str(job.l2_normalize).lower(),
        "random_baseline": str(not job.pretrained).lower(),
        "seed": job.seed,
        "concept_names": ",".join(c["name"] for c in mapping["concepts"]),
    }
    return write_dump(job.output_path, embeddings, labels,
                      dataset.cardinalities(), meta)
