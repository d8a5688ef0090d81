"""Weighted negative-sampling loss and its gradients.

Per directed example the loss is

    A * -log sigmoid(s_pos + gamma)  +  B * sum_i w_i * -log sigmoid(-s_i - gamma)

where ``s_pos`` scores the observed triple, ``s_i`` the sampled
corruptions, ``w_i`` are the inner softmax weights (uniform 1/nu when the
self-adversarial temperature is 0), and A/B are the per-example
subsampling weights (exactly 1 with scheme ``none``, which makes this the
plain unweighted loss bit for bit). Evaluated through softplus, so
nothing overflows for |score + gamma| well beyond 1e4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Direction, TrainingExample
from .models import KGEModel
from .sampler import NegativeBatch, NoiseConfig, draw_negatives, sans_weights
from .subsampling import SubsamplingConfig, SubsamplingWeights

# gradient maps: ("entity" | "relation", row id) -> accumulated partial
GradientMap = dict[tuple[str, int], np.ndarray]


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 0.0
    subsampling: SubsamplingConfig = field(default_factory=SubsamplingConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise ValueError(f"margin must be finite, got {self.gamma}")


def softplus(z):
    """log(1 + exp(z)), stable for large |z|."""
    return np.logaddexp(0.0, z)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def positive_term(score: float, gamma: float) -> float:
    """Loss contribution of an observed triple: -log sigmoid(score + gamma) >= 0."""
    return float(softplus(-(score + gamma)))


def negative_term(scores: np.ndarray, gamma: float, inner_weights: np.ndarray) -> float:
    """Weighted loss contribution of the corruptions: sum_i w_i * softplus(score_i + gamma)."""
    scores = np.asarray(scores, dtype=np.float64)
    inner_weights = np.asarray(inner_weights, dtype=np.float64)
    if scores.shape != inner_weights.shape:
        raise ValueError("scores and inner weights must align")
    if abs(inner_weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"inner weights must sum to 1, got {inner_weights.sum()!r}")
    return float(inner_weights @ softplus(scores + gamma))


def _negative_triples(example: TrainingExample, candidates: np.ndarray):
    nu = len(candidates)
    anchors = np.full(nu, example.anchor, dtype=np.int64)
    rels = np.full(nu, example.relation, dtype=np.int64)
    if example.direction == Direction.TAIL:
        return anchors, rels, candidates
    return candidates, rels, anchors


def _add(grads: GradientMap, key: tuple[str, int], vec: np.ndarray) -> None:
    cur = grads.get(key)
    if cur is None:
        grads[key] = vec
    else:
        cur += vec


def example_loss(
    model: KGEModel,
    example: TrainingExample,
    pos_weight: float,
    neg_weight: float,
    config: LossConfig,
    negatives: NegativeBatch,
) -> tuple[float, GradientMap]:
    """Loss value and embedding-row gradients for one directed example.

    If the negative batch has no weights yet they are computed here as
    softmax(alpha * scores) over the drawn candidates; the weights are
    constants of the batch (no gradient flows through them).
    """
    gamma = config.gamma
    triple = example.as_triple()
    s_pos = float(model.score_triples([triple.head], [triple.relation], [triple.tail])[0])

    heads, rels, tails = _negative_triples(example, negatives.candidates)
    s_neg = model.score_triples(heads, rels, tails)
    w = negatives.weights
    if w is None:
        w = sans_weights(s_neg, config.noise.sans_alpha)

    value = pos_weight * positive_term(s_pos, gamma) + neg_weight * negative_term(s_neg, gamma, w)

    grads: GradientMap = {}
    # d/ds of the positive term is -sigmoid(-(s + gamma))
    pos_coeff = -pos_weight * float(sigmoid(-(s_pos + gamma)))
    g = model.grad_triples([triple.head], [triple.relation], [triple.tail])
    _add(grads, ("entity", triple.head), pos_coeff * g.head[0])
    _add(grads, ("relation", triple.relation), pos_coeff * g.relation[0])
    _add(grads, ("entity", triple.tail), pos_coeff * g.tail[0])

    neg_coeff = neg_weight * w * sigmoid(s_neg + gamma)  # (nu,)
    gn = model.grad_triples(heads, rels, tails)
    if example.direction == Direction.TAIL:
        _add(grads, ("entity", example.anchor), neg_coeff @ gn.head)
        _add(grads, ("relation", example.relation), neg_coeff @ gn.relation)
        varying = gn.tail
    else:
        _add(grads, ("entity", example.anchor), neg_coeff @ gn.tail)
        _add(grads, ("relation", example.relation), neg_coeff @ gn.relation)
        varying = gn.head
    for i, cand in enumerate(negatives.candidates):
        _add(grads, ("entity", int(cand)), neg_coeff[i] * varying[i])
    return value, grads


def eq1_example_loss(
    model: KGEModel,
    example: TrainingExample,
    config: LossConfig,
    negatives: NegativeBatch,
) -> float:
    """Unweighted per-example loss, written without any weight lookups.

    Reference path for checking that scheme ``none`` collapses the
    weighted loss exactly.
    """
    gamma = config.gamma
    triple = example.as_triple()
    s_pos = float(model.score_triples([triple.head], [triple.relation], [triple.tail])[0])
    heads, rels, tails = _negative_triples(example, negatives.candidates)
    s_neg = model.score_triples(heads, rels, tails)
    w = negatives.weights
    if w is None:
        w = sans_weights(s_neg, config.noise.sans_alpha)
    return positive_term(s_pos, gamma) + negative_term(s_neg, gamma, w)


def _noise_rng(noise_key, example_index: int) -> np.random.Generator:
    if isinstance(noise_key, (int, np.integer)):
        noise_key = (int(noise_key),)
    return np.random.default_rng((*noise_key, example_index))


def batch_loss(
    model: KGEModel,
    batch: list[TrainingExample],
    weights: SubsamplingWeights | None,
    config: LossConfig,
    dataset: Dataset,
    noise_key,
) -> tuple[float, GradientMap]:
    """Mean example loss over a batch plus 1/|batch|-scaled gradients.

    Negatives for example i are drawn from a stream keyed on
    (noise_key, example index), and reduction runs in example-index
    order, so the result does not depend on batch ordering.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    total = 0.0
    grads: GradientMap = {}
    for ex in sorted(batch, key=lambda e: e.index):
        rng = _noise_rng(noise_key, ex.index)
        negatives = draw_negatives(rng, config.noise, ex.query, dataset)
        if weights is None:
            a = b = 1.0
        else:
            a = float(weights.positive[ex.index])
            b = float(weights.negative[ex.index])
        value, ex_grads = example_loss(model, ex, a, b, config, negatives)
        total += value
        for key, vec in ex_grads.items():
            _add(grads, key, vec)
    scale = 1.0 / len(batch)
    for vec in grads.values():
        vec *= scale
    return total * scale, grads


def eq1_batch_loss(
    model: KGEModel,
    batch: list[TrainingExample],
    config: LossConfig,
    dataset: Dataset,
    noise_key,
) -> float:
    """Mean unweighted loss over a batch, same streams as batch_loss."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    total = 0.0
    for ex in sorted(batch, key=lambda e: e.index):
        rng = _noise_rng(noise_key, ex.index)
        negatives = draw_negatives(rng, config.noise, ex.query, dataset)
        total += eq1_example_loss(model, ex, config, negatives)
    return total / len(batch)
