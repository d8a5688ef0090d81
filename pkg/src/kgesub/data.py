"""Triple file ingestion, entity/relation vocabularies, and frequency statistics.

Triple files are UTF-8, tab-separated, one ``head<TAB>relation<TAB>tail``
per line, no header. Ids are assigned by first appearance (train, then
valid, then test) so ingestion is single-pass and deterministic.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Direction(IntEnum):
    """Which side of a triple is being predicted."""

    TAIL = 0  # query (anchor, relation, ?)
    HEAD = 1  # query (?, relation, anchor)


class Query(NamedTuple):
    """One side of a triple: the fixed (anchor, relation) pair plus direction."""

    direction: Direction
    anchor: int
    relation: int


class TrainingExample(NamedTuple):
    """A directed training example: predict ``answer`` for ``query``.

    ``index`` is the example's position in the canonical directed stream
    (triple i expands to examples 2i (tail query) and 2i+1 (head query)).
    """

    index: int
    direction: Direction
    anchor: int
    relation: int
    answer: int

    @property
    def query(self) -> Query:
        return Query(self.direction, self.anchor, self.relation)

    def as_triple(self) -> Triple:
        if self.direction == Direction.TAIL:
            return Triple(self.anchor, self.relation, self.answer)
        return Triple(self.answer, self.relation, self.anchor)


class Vocab:
    """Bijective name <-> contiguous id mapping, insertion-ordered."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self.index.get(name)
        if idx is None:
            idx = len(self.names)
            self.index[name] = idx
            self.names.append(name)
        return idx

    def id_of(self, name: str) -> int:
        return self.index[name]

    def name_of(self, idx: int) -> str:
        return self.names[idx]

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.names == other.names

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in self.names:
            h.update(name.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


@dataclass
class Dataset:
    """Integer-encoded triples for the three splits plus their vocabularies.

    Immutable after construction; safe for concurrent reads.
    """

    train: np.ndarray  # (n, 3) int64 rows of (head, relation, tail)
    valid: np.ndarray
    test: np.ndarray
    entities: Vocab
    relations: Vocab
    _answer_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}, expected one of {SPLITS}")
        return getattr(self, name)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.train, other.train)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.test, other.test)
            and self.entities == other.entities
            and self.relations == other.relations
        )

    def known_answers(self, splits: tuple[str, ...] = SPLITS) -> dict[tuple[int, int, int], np.ndarray]:
        """Map (direction, anchor, relation) -> array of entities completing a known triple.

        Built lazily and cached per split combination; used for filtered
        ranking and for false-negative filtering during sampling.
        """
        key = tuple(splits)
        cached = self._answer_cache.get(key)
        if cached is not None:
            return cached
        answers: dict[tuple[int, int, int], list[int]] = {}
        for split in splits:
            for h, r, t in self.split(split):
                answers.setdefault((Direction.TAIL, h, r), []).append(t)
                answers.setdefault((Direction.HEAD, t, r), []).append(h)
        packed = {k: np.unique(np.asarray(v, dtype=np.int64)) for k, v in answers.items()}
        self._answer_cache[key] = packed
        return packed


def directed_examples(dataset: Dataset, split: str = "train") -> list[TrainingExample]:
    """Expand each triple into its two directed examples, interleaved.

    Triple i yields example 2i (answer the tail) and 2i+1 (answer the head).
    """
    out = []
    for i, (h, r, t) in enumerate(dataset.split(split)):
        out.append(TrainingExample(2 * i, Direction.TAIL, int(h), int(r), int(t)))
        out.append(TrainingExample(2 * i + 1, Direction.HEAD, int(t), int(r), int(h)))
    return out


@dataclass
class FrequencyTable:
    """Occurrence counts of (head, relation) and (relation, tail) pairs in train.

    Immutable after construction. Present keys always have count >= 1, and
    each side's counts sum to the number of train triples.
    """

    head_rel: dict[tuple[int, int], int]
    rel_tail: dict[tuple[int, int], int]


def count_frequencies(dataset: Dataset) -> FrequencyTable:
    """Count (head, relation) and (relation, tail) pairs over the train split only."""
    if len(dataset.train) == 0:
        raise ValueError("empty training split")
    head_rel: dict[tuple[int, int], int] = {}
    rel_tail: dict[tuple[int, int], int] = {}
    for h, r, t in dataset.train:
        head_rel[(int(h), int(r))] = head_rel.get((int(h), int(r)), 0) + 1
        rel_tail[(int(r), int(t))] = rel_tail.get((int(r), int(t)), 0) + 1
    return FrequencyTable(head_rel, rel_tail)


def triple_freq(table: FrequencyTable, triple: Triple) -> int:
    """Approximate frequency of a whole triple as #(head, rel) + #(rel, tail)."""
    hr = table.head_rel.get((triple.head, triple.relation))
    rt = table.rel_tail.get((triple.relation, triple.tail))
    if hr is None or rt is None:
        raise KeyError(f"triple {tuple(triple)} has keys outside the training distribution")
    return hr + rt


def query_freq(table: FrequencyTable, query: Query) -> int:
    """Occurrence count of a query's (anchor, relation) side in the train split."""
    if query.direction == Direction.TAIL:
        count = table.head_rel.get((query.anchor, query.relation))
    else:
        count = table.rel_tail.get((query.relation, query.anchor))
    if count is None:
        raise KeyError(f"query {tuple(query)} not present in the training distribution")
    return count


def _read_dict_file(path: Path) -> Vocab:
    """Read an ``id<TAB>name`` dictionary file; ids must be contiguous from 0."""
    entries = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(parts)}")
            idx_str, name = parts
            try:
                idx = int(idx_str)
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: id {idx_str!r} is not an integer") from e
            if idx in entries:
                raise ValueError(f"{path}:{lineno}: duplicate id {idx}")
            entries[idx] = name
    if sorted(entries) != list(range(len(entries))):
        raise ValueError(f"{path}: ids are not contiguous from 0")
    vocab = Vocab(entries[i] for i in range(len(entries)))
    if len(vocab) != len(entries):
        raise ValueError(f"{path}: duplicate names, mapping is not a bijection")
    return vocab


def _read_triple_file(path: Path) -> list[tuple[str, str, str]]:
    triples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            triples.append((parts[0], parts[1], parts[2]))
    return triples


def load_dataset(
    train_path: str | Path,
    valid_path: str | Path | None = None,
    test_path: str | Path | None = None,
    entity_dict: str | Path | None = None,
    relation_dict: str | Path | None = None,
    dedupe_train: bool = False,
) -> Dataset:
    """Load a dataset from tab-separated triple files.

    Vocabularies cover the union of all provided splits. If dictionary
    files are given, their id assignment is used (and every surface name
    must be covered); otherwise ids follow first appearance. Duplicate
    train triples are an error unless ``dedupe_train`` is set, in which
    case they are dropped with a warning.
    """
    paths = {"train": Path(train_path)}
    if valid_path is not None:
        paths["valid"] = Path(valid_path)
    if test_path is not None:
        paths["test"] = Path(test_path)
    for name, path in paths.items():
        if not path.is_file():
            raise FileNotFoundError(f"{name} split file not found: {path}")

    entities = _read_dict_file(Path(entity_dict)) if entity_dict else Vocab()
    relations = _read_dict_file(Path(relation_dict)) if relation_dict else Vocab()
    frozen_entities = entity_dict is not None
    frozen_relations = relation_dict is not None

    def encode(name: str, vocab: Vocab, frozen: bool, path: Path, lineno_hint: str) -> int:
        if frozen:
            idx = vocab.index.get(name)
            if idx is None:
                raise ValueError(f"{path}: {lineno_hint} name {name!r} missing from dictionary file")
            return idx
        return vocab.add(name)

    encoded: dict[str, np.ndarray] = {}
    for split in SPLITS:
        path = paths.get(split)
        if path is None:
            encoded[split] = np.empty((0, 3), dtype=np.int64)
            continue
        raw = _read_triple_file(path)
        rows = np.empty((len(raw), 3), dtype=np.int64)
        for i, (h, r, t) in enumerate(raw):
            rows[i, 0] = encode(h, entities, frozen_entities, path, "head")
            rows[i, 1] = encode(r, relations, frozen_relations, path, "relation")
            rows[i, 2] = encode(t, entities, frozen_entities, path, "tail")
        encoded[split] = rows

    if len(encoded["train"]) == 0:
        raise ValueError(f"empty training split: {paths['train']}")

    train = encoded["train"]
    seen = set(map(tuple, train.tolist()))
    if len(seen) != len(train):
        if not dedupe_train:
            raise ValueError(
                f"train split {paths['train']} contains duplicate triples "
                "(pass dedupe_train=True to drop them)"
            )
        n_before = len(train)
        _, first_idx = np.unique(train, axis=0, return_index=True)
        train = train[np.sort(first_idx)]
        log.warning("dropped %d duplicate train triples", n_before - len(train))

    return Dataset(train, encoded["valid"], encoded["test"], entities, relations)


def save_dataset(dataset: Dataset, out_dir: str | Path) -> None:
    """Write the splits and dictionary files so load_dataset round-trips."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        with open(out / f"{split}.txt", "w", encoding="utf-8") as f:
            for h, r, t in dataset.split(split):
                f.write(
                    f"{dataset.entities.name_of(int(h))}\t"
                    f"{dataset.relations.name_of(int(r))}\t"
                    f"{dataset.entities.name_of(int(t))}\n"
                )
    for fname, vocab in (("entities.dict", dataset.entities), ("relations.dict", dataset.relations)):
        with open(out / fname, "w", encoding="utf-8") as f:
            for i, name in enumerate(vocab.names):
                f.write(f"{i}\t{name}\n")


def load_saved_dataset(data_dir: str | Path, dedupe_train: bool = False) -> Dataset:
    """Load a directory written by save_dataset (or laid out the same way)."""
    d = Path(data_dir)
    ent = d / "entities.dict"
    rel = d / "relations.dict"
    return load_dataset(
        d / "train.txt",
        d / "valid.txt" if (d / "valid.txt").is_file() else None,
        d / "test.txt" if (d / "test.txt").is_file() else None,
        entity_dict=ent if ent.is_file() else None,
        relation_dict=rel if rel.is_file() else None,
        dedupe_train=dedupe_train,
    )


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
