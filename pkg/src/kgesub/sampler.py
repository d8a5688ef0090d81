"""Negative sampling: uniform corruption draws and self-adversarial weighting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Query


@dataclass(frozen=True)
class NoiseConfig:
    """How negatives are drawn and weighted.

    ``num_negatives`` candidates are sampled i.i.d. uniform over all
    entities per positive example. ``sans_alpha`` is the self-adversarial
    temperature: 0 keeps the plain uniform 1/nu averaging. When
    ``filter_false_negatives`` is on, candidates completing a known train
    triple for the query are resampled (off by default; filtering is done
    at evaluation instead).
    """

    num_negatives: int = 16
    sans_alpha: float = 0.0
    filter_false_negatives: bool = False

    def __post_init__(self):
        if self.num_negatives < 1:
            raise ValueError(f"need at least one negative sample, got {self.num_negatives}")
        if self.sans_alpha < 0:
            raise ValueError(f"self-adversarial temperature must be >= 0, got {self.sans_alpha}")


@dataclass
class NegativeBatch:
    """Drawn candidate entities plus (once scored) their inner-sum weights."""

    candidates: np.ndarray  # (nu,) int64
    weights: np.ndarray | None = None  # (nu,) summing to 1, or None before scoring


def draw_negatives(
    rng: np.random.Generator,
    config: NoiseConfig,
    query: Query,
    dataset: Dataset,
) -> NegativeBatch:
    """Sample ``num_negatives`` candidate entities for one query.

    Weights are left unset; they are filled in from candidate scores by
    the loss (softmax weighting) once scores exist.
    """
    n_entities = dataset.n_entities
    if n_entities < 2:
        raise ValueError("negative sampling needs at least 2 entities")
    ids = rng.integers(0, n_entities, size=config.num_negatives, dtype=np.int64)
    if config.filter_false_negatives:
        known = dataset.known_answers(("train",)).get((query.direction, query.anchor, query.relation))
        if known is not None and len(known) > 0:
            if len(known) >= n_entities:
                raise ValueError(
                    f"cannot filter false negatives: query {tuple(query)} is answered by every entity"
                )
            bad = np.isin(ids, known)
            while bad.any():
                ids[bad] = rng.integers(0, n_entities, size=int(bad.sum()), dtype=np.int64)
                bad = np.isin(ids, known)
    return NegativeBatch(ids)


def sans_weights(scores: np.ndarray, alpha: float) -> np.ndarray:
    """Softmax(alpha * scores) over the drawn negatives.

    Treated as constants of the batch: no gradient flows through them.
    With alpha = 0 this is exactly the uniform 1/nu weighting.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 1:
        raise ValueError("need at least one score")
    z = alpha * scores
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()
