"""Inverse-frequency weights for the training loss.

Four schemes: ``none`` (all weights 1), ``base`` (word2vec-style, one
weight per triple used on both the positive and negative terms), ``freq``
(positive weight from the triple frequency, negative weight from the query
frequency), and ``uniq`` (both weights from the query frequency). Raw
weights are ``count ** -exponent``, normalized so their mean over the
directed training stream is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FrequencyTable, count_frequencies, directed_examples, query_freq, triple_freq

SCHEMES = ("none", "base", "freq", "uniq")


@dataclass(frozen=True)
class SubsamplingConfig:
    kind: str = "none"
    exponent: float = 0.5

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown subsampling kind {self.kind!r}, expected one of {SCHEMES}")
        if not 0.0 < self.exponent <= 1.0:
            raise ValueError(f"exponent must be in (0, 1], got {self.exponent}")


@dataclass
class SubsamplingWeights:
    """Per-example loss weights, indexed by directed example id.

    ``positive`` multiplies the observed-triple term, ``negative`` the
    sampled-corruption term. Both average to 1 over the training stream.
    """

    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        for name, w in (("positive", self.positive), ("negative", self.negative)):
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError(f"{name} weights must be finite and > 0")


@dataclass
class WeightSummary:
    scheme: str
    count: int
    positive_min: float
    positive_max: float
    positive_mean: float
    positive_std: float
    negative_min: float
    negative_max: float
    negative_mean: float
    negative_std: float


def normalized_inverse_power(counts: np.ndarray, exponent: float) -> np.ndarray:
    """Mean-1 normalized ``counts ** -exponent``.

    Each weight is raw / mean(raw), so the normalizer runs over the
    multiset of examples, one term per example.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("cannot normalize an empty weight vector")
    if np.any(counts <= 0):
        raise ValueError("counts must be positive")
    raw = counts**-exponent
    return raw * (raw.size / raw.sum())


def compute_weights(
    config: SubsamplingConfig,
    dataset: Dataset,
    table: FrequencyTable | None = None,
) -> SubsamplingWeights:
    """Precompute the loss weights for every directed train example.

    Frequencies are static, so weights are computed once up front; the
    normalization runs over the full training stream, which a per-batch
    computation could not reproduce.
    """
    if len(dataset.train) == 0:
        raise ValueError("empty dataset")
    if table is None:
        table = count_frequencies(dataset)
    examples = directed_examples(dataset, "train")
    n = len(examples)

    if config.kind == "none":
        ones = np.ones(n, dtype=np.float64)
        return SubsamplingWeights(ones, ones.copy())

    if config.kind in ("base", "freq"):
        tf = np.array([triple_freq(table, ex.as_triple()) for ex in examples], dtype=np.float64)
    if config.kind in ("freq", "uniq"):
        qf = np.array([query_freq(table, ex.query) for ex in examples], dtype=np.float64)

    if config.kind == "base":
        w = normalized_inverse_power(tf, config.exponent)
        return SubsamplingWeights(w, w.copy())
    if config.kind == "freq":
        return SubsamplingWeights(
            normalized_inverse_power(tf, config.exponent),
            normalized_inverse_power(qf, config.exponent),
        )
    # uniq: both terms discounted by the query frequency
    w = normalized_inverse_power(qf, config.exponent)
    return SubsamplingWeights(w, w.copy())


def weight_summary(weights: SubsamplingWeights, scheme: str = "") -> WeightSummary:
    a, b = weights.positive, weights.negative
    return WeightSummary(
        scheme=scheme,
        count=a.size,
        positive_min=float(a.min()),
        positive_max=float(a.max()),
        positive_mean=float(a.mean()),
        positive_std=float(a.std()),
        negative_min=float(b.min()),
        negative_max=float(b.max()),
        negative_mean=float(b.mean()),
        negative_std=float(b.std()),
    )
