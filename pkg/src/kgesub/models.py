"""Scoring models: TransE, DistMult, ComplEx, and RotatE.

Each model stores float64 embedding matrices and provides the triple
score, its analytic gradient with respect to the involved embedding rows,
and a vectorized scorer over candidate entities. Higher score = more
plausible. Complex-valued models store the real half in the first
``dim // 2`` columns and the imaginary half in the rest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Direction, Query, Triple

INIT_MARGIN_OFFSET = 2.0  # additive constant in the default init range (gamma + offset) / dim


def default_init_range(gamma: float, dim: int) -> float:
    return (gamma + INIT_MARGIN_OFFSET) / dim


@dataclass
class EmbeddingStore:
    """Entity and relation embedding matrices plus the init range used to draw them."""

    entity: np.ndarray  # (n_entities, entity_dim) float64
    relation: np.ndarray  # (n_relations, relation_dim) float64
    init_range: float

    def copy(self) -> "EmbeddingStore":
        return EmbeddingStore(self.entity.copy(), self.relation.copy(), self.init_range)


class ScoreGradient(NamedTuple):
    """Partials of the score w.r.t. the head, relation, and tail embedding rows."""

    head: np.ndarray
    relation: np.ndarray
    tail: np.ndarray


def _as_ids(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64)


class KGEModel:
    """Base class: id-level convenience wrappers over the vectorized forms."""

    kind: str = ""

    def __init__(self, store: EmbeddingStore):
        self.store = store

    @property
    def n_entities(self) -> int:
        return self.store.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.store.relation.shape[0]

    @property
    def dim(self) -> int:
        return self.store.entity.shape[1]

    @staticmethod
    def entity_dim(dim: int) -> int:
        return dim

    @staticmethod
    def relation_dim(dim: int) -> int:
        return dim

    @classmethod
    def check_dim(cls, dim: int) -> None:
        if dim <= 0:
            raise ValueError(f"dimension must be positive, got {dim}")

    def constants(self) -> dict:
        """Model-specific constants echoed into checkpoint manifests."""
        return {}

    # vectorized forms implemented per model
    def score_triples(self, heads, rels, tails) -> np.ndarray:
        raise NotImplementedError

    def grad_triples(self, heads, rels, tails) -> ScoreGradient:
        raise NotImplementedError

    def score_candidates(self, query: Query, candidates: np.ndarray | None = None) -> np.ndarray:
        raise NotImplementedError

    # scalar wrappers
    def score(self, triple: Triple) -> float:
        return float(self.score_triples([triple.head], [triple.relation], [triple.tail])[0])

    def score_gradient(self, triple: Triple) -> ScoreGradient:
        g = self.grad_triples([triple.head], [triple.relation], [triple.tail])
        return ScoreGradient(g.head[0], g.relation[0], g.tail[0])

    def _gather(self, heads, rels, tails):
        return (
            self.store.entity[_as_ids(heads)],
            self.store.relation[_as_ids(rels)],
            self.store.entity[_as_ids(tails)],
        )

    def _candidate_matrix(self, candidates) -> np.ndarray:
        if candidates is None:
            return self.store.entity
        return self.store.entity[_as_ids(candidates)]


class TransE(KGEModel):
    """Translation model: score = -||h + r - t|| (L1 or L2)."""

    kind = "transe"

    def __init__(self, store: EmbeddingStore, norm: int = 2):
        super().__init__(store)
        if norm not in (1, 2):
            raise ValueError(f"norm order must be 1 or 2, got {norm}")
        self.norm = norm

    def constants(self) -> dict:
        return {"norm": self.norm}

    def score_triples(self, heads, rels, tails) -> np.ndarray:
        h, r, t = self._gather(heads, rels, tails)
        d = h + r - t
        if self.norm == 1:
            return -np.abs(d).sum(axis=1)
        return -np.sqrt((d * d).sum(axis=1))

    def grad_triples(self, heads, rels, tails) -> ScoreGradient:
        h, r, t = self._gather(heads, rels, tails)
        d = h + r - t
        if self.norm == 1:
            # subgradient 0 at exactly-zero coordinates
            g = -np.sign(d)
        else:
            n = np.sqrt((d * d).sum(axis=1, keepdims=True))
            with np.errstate(invalid="ignore", divide="ignore"):
                g = np.where(n > 0, -d / n, 0.0)
        return ScoreGradient(g, g.copy(), -g)

    def score_candidates(self, query: Query, candidates: np.ndarray | None = None) -> np.ndarray:
        e = self._candidate_matrix(candidates)
        r = self.store.relation[query.relation]
        a = self.store.entity[query.anchor]
        if query.direction == Direction.TAIL:
            d = (a + r)[None, :] - e
        else:
            d = e + (r - a)[None, :]
        if self.norm == 1:
            return -np.abs(d).sum(axis=1)
        return -np.sqrt((d * d).sum(axis=1))


class DistMult(KGEModel):
    """Bilinear-diagonal model: score = sum(h * r * t)."""

    kind = "distmult"

    def score_triples(self, heads, rels, tails) -> np.ndarray:
        h, r, t = self._gather(heads, rels, tails)
        return (h * r * t).sum(axis=1)

    def grad_triples(self, heads, rels, tails) -> ScoreGradient:
        h, r, t = self._gather(heads, rels, tails)
        return ScoreGradient(r * t, h * t, h * r)

    def score_candidates(self, query: Query, candidates: np.ndarray | None = None) -> np.ndarray:
        e = self._candidate_matrix(candidates)
        r = self.store.relation[query.relation]
        a = self.store.entity[query.anchor]
        # symmetric in head/tail, so both directions reduce to one matvec
        return e @ (a * r)


def _halves(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = m.shape[-1] // 2
    return m[..., :k], m[..., k:]


class ComplEx(KGEModel):
    """Complex bilinear model: score = Re(<h, r, conj(t)>)."""

    kind = "complex"

    @classmethod
    def check_dim(cls, dim: int) -> None:
        super().check_dim(dim)
        if dim % 2 != 0:
            raise ValueError(f"complex-valued storage needs an even dimension, got {dim}")

    def score_triples(self, heads, rels, tails) -> np.ndarray:
        h, r, t = self._gather(heads, rels, tails)
        hre, him = _halves(h)
        rre, rim = _halves(r)
        tre, tim = _halves(t)
        return (
            hre * rre * tre + him * rre * tim + hre * rim * tim - him * rim * tre
        ).sum(axis=1)

    def grad_triples(self, heads, rels, tails) -> ScoreGradient:
        h, r, t = self._gather(heads, rels, tails)
        hre, him = _halves(h)
        rre, rim = _halves(r)
        tre, tim = _halves(t)
        gh = np.concatenate([rre * tre + rim * tim, rre * tim - rim * tre], axis=1)
        gr = np.concatenate([hre * tre + him * tim, hre * tim - him * tre], axis=1)
        gt = np.concatenate([hre * rre - him * rim, him * rre + hre * rim], axis=1)
        return ScoreGradient(gh, gr, gt)

    def score_candidates(self, query: Query, candidates: np.ndarray | None = None) -> np.ndarray:
        e = self._candidate_matrix(candidates)
        ere, eim = _halves(e)
        a = self.store.entity[query.anchor]
        r = self.store.relation[query.relation]
        are, aim = _halves(a)
        rre, rim = _halves(r)
        if query.direction == Direction.TAIL:
            # score(c) = Re((a . r) conj(c))
            wre = are * rre - aim * rim
            wim = are * rim + aim * rre
            return ere @ wre + eim @ wim
        # score(c) = Re(c . (r conj(a)))
        zre = rre * are + rim * aim
        zim = rim * are - rre * aim
        return ere @ zre - eim @ zim


class RotatE(KGEModel):
    """Rotation model: score = -sum_j |h_j * e^{i theta_j} - t_j|.

    Relation parameters are raw phases; the effective rotation is always
    unit-modulus because only cos/sin of ``raw / phase_scale`` enter the
    score. ``phase_scale`` defaults to init_range / pi so freshly drawn
    parameters span (-pi, pi].
    """

    kind = "rotate"

    def __init__(self, store: EmbeddingStore, phase_scale: float | None = None):
        super().__init__(store)
        if phase_scale is None:
            phase_scale = store.init_range / np.pi
        if phase_scale <= 0:
            raise ValueError(f"phase scale must be positive, got {phase_scale}")
        self.phase_scale = phase_scale

    def constants(self) -> dict:
        return {"phase_scale": self.phase_scale}

    @classmethod
    def check_dim(cls, dim: int) -> None:
        super().check_dim(dim)
        if dim % 2 != 0:
            raise ValueError(f"complex-valued storage needs an even dimension, got {dim}")

    @staticmethod
    def relation_dim(dim: int) -> int:
        return dim // 2

    def _rotation(self, rels) -> tuple[np.ndarray, np.ndarray]:
        phase = self.store.relation[_as_ids(rels)] / self.phase_scale
        return np.cos(phase), np.sin(phase)

    def score_triples(self, heads, rels, tails) -> np.ndarray:
        h = self.store.entity[_as_ids(heads)]
        t = self.store.entity[_as_ids(tails)]
        hre, him = _halves(h)
        tre, tim = _halves(t)
        c, s = self._rotation(rels)
        dre = hre * c - him * s - tre
        dim_ = hre * s + him * c - tim
        return -np.hypot(dre, dim_).sum(axis=1)

    def grad_triples(self, heads, rels, tails) -> ScoreGradient:
        h = self.store.entity[_as_ids(heads)]
        t = self.store.entity[_as_ids(tails)]
        hre, him = _halves(h)
        tre, tim = _halves(t)
        c, s = self._rotation(rels)
        ure = hre * c - him * s  # h rotated
        uim = hre * s + him * c
        dre = ure - tre
        dim_ = uim - tim
        m = np.hypot(dre, dim_)
        with np.errstate(invalid="ignore", divide="ignore"):
            vre = np.where(m > 0, dre / m, 0.0)  # unit vector of the residual
            vim = np.where(m > 0, dim_ / m, 0.0)
        gh = np.concatenate([-(vre * c + vim * s), vre * s - vim * c], axis=1)
        gt = np.concatenate([vre, vim], axis=1)
        # d(residual)/d(theta) = i * rotated head
        gphase = vre * uim - vim * ure
        gr = gphase / self.phase_scale
        return ScoreGradient(gh, gr, gt)

    def score_candidates(self, query: Query, candidates: np.ndarray | None = None) -> np.ndarray:
        e = self._candidate_matrix(candidates)
        ere, eim = _halves(e)
        a = self.store.entity[query.anchor]
        are, aim = _halves(a)
        c, s = self._rotation(query.relation)
        if query.direction == Direction.TAIL:
            qre = are * c - aim * s
            qim = are * s + aim * c
        else:
            # |c_head * r - a| = |c_head - a * conj(r)| since |r| = 1
            qre = are * c + aim * s
            qim = aim * c - are * s
        return -np.hypot(ere - qre[None, :], eim - qim[None, :]).sum(axis=1)


MODEL_KINDS: dict[str, type[KGEModel]] = {
    TransE.kind: TransE,
    DistMult.kind: DistMult,
    ComplEx.kind: ComplEx,
    RotatE.kind: RotatE,
}


def build_model(
    kind: str,
    n_entities: int,
    n_relations: int,
    dim: int,
    seed: int = 0,
    init_range: float | None = None,
    gamma: float = 0.0,
    **constants,
) -> KGEModel:
    """Create a model with uniform(-init_range, +init_range) embeddings.

    Deterministic given the seed. When ``init_range`` is omitted it
    defaults to (gamma + 2) / dim.
    """
    cls = MODEL_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown model kind {kind!r}, expected one of {sorted(MODEL_KINDS)}")
    cls.check_dim(dim)
    if n_entities < 1 or n_relations < 1:
        raise ValueError("need at least one entity and one relation")
    if init_range is None:
        init_range = default_init_range(gamma, dim)
    if init_range <= 0:
        raise ValueError(f"init range must be positive, got {init_range}")
    rng = np.random.default_rng(seed)
    entity = rng.uniform(-init_range, init_range, size=(n_entities, cls.entity_dim(dim)))
    relation = rng.uniform(-init_range, init_range, size=(n_relations, cls.relation_dim(dim)))
    store = EmbeddingStore(entity, relation, init_range)
    return cls(store, **constants)


def model_from_store(kind: str, store: EmbeddingStore, **constants) -> KGEModel:
    cls = MODEL_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown model kind {kind!r}, expected one of {sorted(MODEL_KINDS)}")
    return cls(store, **constants)


@dataclass(frozen=True)
class ModelConfig:
    """What to build: the scoring form, its dimension, and its constants."""

    kind: str = "transe"
    dim: int = 100
    norm: int = 2  # TransE only
    init_range: float | None = None  # None -> (gamma + 2) / dim
    phase_scale: float | None = None  # RotatE only; None -> init_range / pi

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}, expected one of {sorted(MODEL_KINDS)}")
        MODEL_KINDS[self.kind].check_dim(self.dim)

    def build(self, n_entities: int, n_relations: int, seed, gamma: float = 0.0) -> KGEModel:
        constants = {}
        if self.kind == "transe":
            constants["norm"] = self.norm
        elif self.kind == "rotate" and self.phase_scale is not None:
            constants["phase_scale"] = self.phase_scale
        return build_model(
            self.kind,
            n_entities,
            n_relations,
            self.dim,
            seed=seed,
            init_range=self.init_range,
            gamma=gamma,
            **constants,
        )
