import numpy as np
import pytest

from kgesub.data import Dataset, Vocab


def make_dataset(train, valid=(), test=(), n_entities=None, n_relations=None) -> Dataset:
    """Build a Dataset straight from integer triples (no files involved)."""

    def pack(triples):
        arr = np.asarray(list(triples), dtype=np.int64)
        return arr.reshape(-1, 3)

    tr, va, te = pack(train), pack(valid), pack(test)
    everything = np.concatenate([tr, va, te]) if len(va) or len(te) else tr
    if n_entities is None:
        n_entities = int(max(everything[:, 0].max(), everything[:, 2].max())) + 1
    if n_relations is None:
        n_relations = int(everything[:, 1].max()) + 1
    return Dataset(
        tr,
        va,
        te,
        Vocab(f"e{i}" for i in range(n_entities)),
        Vocab(f"r{i}" for i in range(n_relations)),
    )


def random_dataset(rng, n_entities=12, n_relations=3, n_train=40, n_valid=0, n_test=0) -> Dataset:
    """Random duplicate-free train split (valid/test may repeat train facts)."""
    seen = set()
    train = []
    while len(train) < n_train:
        h, r, t = (
            int(rng.integers(n_entities)),
            int(rng.integers(n_relations)),
            int(rng.integers(n_entities)),
        )
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            train.append((h, r, t))
    def extra(n):
        return [
            (int(rng.integers(n_entities)), int(rng.integers(n_relations)), int(rng.integers(n_entities)))
            for _ in range(n)
        ]
    return make_dataset(train, extra(n_valid), extra(n_test), n_entities, n_relations)


@pytest.fixture
def tiny_dataset():
    # the 3-triple worked example: two triples share (e1, r1), two share (r1, e3)
    return make_dataset([(0, 0, 1), (0, 0, 2), (1, 0, 2)], n_entities=3, n_relations=1)
