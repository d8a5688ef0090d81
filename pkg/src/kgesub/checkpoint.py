"""Checkpoint layout: a JSON manifest plus raw little-endian float64 matrices.

A checkpoint directory holds ``manifest.json``, ``entity.f64`` and
``relation.f64`` (row-major, shapes recorded in the manifest), and, for
resumable training state, optimizer sidecar files. Nothing in a
checkpoint depends on wall-clock time, so identical runs produce
byte-identical checkpoints.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset
from .models import EmbeddingStore, KGEModel, model_from_store

FORMAT_VERSION = 1


class CheckpointMismatchError(Exception):
    """Checkpoint and dataset (or config) disagree on identity fields."""


def write_array(path: Path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def read_array(path: Path, dtype: str, shape: tuple[int, ...]) -> np.ndarray:
    data = np.fromfile(path, dtype=np.dtype(dtype))
    expected = int(np.prod(shape)) if shape else data.size
    if data.size != expected:
        raise CheckpointMismatchError(f"{path}: expected {expected} values, found {data.size}")
    return data.reshape(shape).astype(data.dtype.newbyteorder("="))


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def save_model(
    out_dir: str | Path,
    model: KGEModel,
    dataset: Dataset | None = None,
    config_echo: dict | None = None,
    seed: int | None = None,
) -> Path:
    """Write the manifest and embedding matrices; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "library_version": __version__,
        "model": {
            "kind": model.kind,
            "constants": model.constants(),
            "init_range": model.store.init_range,
            "entity_shape": list(model.store.entity.shape),
            "relation_shape": list(model.store.relation.shape),
        },
        "vocab": {
            "n_entities": model.n_entities,
            "n_relations": model.n_relations,
            "entity_digest": dataset.entities.digest() if dataset else None,
            "relation_digest": dataset.relations.digest() if dataset else None,
        },
        "config": config_echo or {},
        "seed": seed,
    }
    _write_json(out / "manifest.json", manifest)
    write_array(out / "entity.f64", model.store.entity.astype("<f8"))
    write_array(out / "relation.f64", model.store.relation.astype("<f8"))
    return out


def read_manifest(ckpt_dir: str | Path) -> dict:
    path = Path(ckpt_dir) / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no manifest.json under {ckpt_dir}")
    with open(path, encoding="utf-8") as f:
        manifest = json.load(f)
    for key in ("format_version", "model", "vocab"):
        if key not in manifest:
            raise CheckpointMismatchError(f"{path}: corrupt manifest, missing {key!r}")
    return manifest


def load_model(ckpt_dir: str | Path) -> tuple[KGEModel, dict]:
    ckpt = Path(ckpt_dir)
    manifest = read_manifest(ckpt)
    spec = manifest["model"]
    entity = read_array(ckpt / "entity.f64", "<f8", tuple(spec["entity_shape"]))
    relation = read_array(ckpt / "relation.f64", "<f8", tuple(spec["relation_shape"]))
    store = EmbeddingStore(entity, relation, spec["init_range"])
    model = model_from_store(spec["kind"], store, **spec.get("constants", {}))
    return model, manifest


def verify_vocab(manifest: dict, dataset: Dataset) -> None:
    """Raise CheckpointMismatchError unless the checkpoint was built on this vocabulary."""
    vocab = manifest["vocab"]
    pairs = (
        ("entity_digest", dataset.entities.digest()),
        ("relation_digest", dataset.relations.digest()),
    )
    for key, actual in pairs:
        expected = vocab.get(key)
        if expected is not None and expected != actual:
            raise CheckpointMismatchError(
                f"checkpoint {key} {expected[:12]}... does not match the dataset ({actual[:12]}...)"
            )


def export_tsv(model: KGEModel, dataset: Dataset, out_dir: str | Path) -> None:
    """Dump embeddings as name<TAB>v0<TAB>v1... text files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = (
        ("entity.tsv", dataset.entities.names, model.store.entity),
        ("relation.tsv", dataset.relations.names, model.store.relation),
    )
    for fname, names, matrix in jobs:
        with open(out / fname, "w", encoding="utf-8") as f:
            for name, row in zip(names, matrix):
                f.write(name + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
