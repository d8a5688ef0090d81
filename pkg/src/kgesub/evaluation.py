"""Filtered link-prediction ranking: MRR and Hits@k over both query directions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SPLITS, Dataset, Direction, Query
from .models import KGEModel

HITS_AT = (1, 3, 10)

_DIRECTION_NAMES = {Direction.TAIL: "tail", Direction.HEAD: "head"}


@dataclass
class RankingReport:
    """Aggregated ranking metrics; hits keys are the k cutoffs."""

    mrr: float
    hits: dict[int, float]
    queries: int
    by_direction: dict[str, "RankingReport"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in self.hits.items()},
            "queries": self.queries,
        }
        for name, sub in self.by_direction.items():
            out[name] = sub.to_dict()
        return out


def filtered_rank(
    model: KGEModel,
    query: Query,
    true_answer: int,
    known_answers: np.ndarray | None = None,
) -> float:
    """Rank of the true answer among non-filtered candidates, mean rank under ties.

    ``known_answers`` lists every entity completing a known triple for this
    query; all of them except the true answer are removed from the
    candidate pool before ranking.
    """
    scores = model.score_candidates(query)
    s_true = float(scores[true_answer])
    if known_answers is not None and len(known_answers) > 0:
        scores = scores.copy()
        scores[known_answers] = -np.inf
        scores[true_answer] = s_true
    better = int((scores > s_true).sum())
    ties = int((scores == s_true).sum())  # includes the true answer itself
    return better + (ties + 1) / 2


def evaluate(
    model: KGEModel,
    dataset: Dataset,
    split: str = "test",
    hits_at: tuple[int, ...] = HITS_AT,
    filter_splits: tuple[str, ...] = SPLITS,
) -> RankingReport:
    """Filtered MRR and Hits@k over both query directions of a split.

    Pure: repeated calls on the same model and dataset are identical.
    """
    triples = dataset.split(split)
    if len(triples) == 0:
        raise ValueError(f"cannot evaluate an empty {split!r} split")
    known = dataset.known_answers(filter_splits)

    ranks = {Direction.TAIL: [], Direction.HEAD: []}
    for h, r, t in triples:
        h, r, t = int(h), int(r), int(t)
        for direction, anchor, answer in (
            (Direction.TAIL, h, t),
            (Direction.HEAD, t, h),
        ):
            query = Query(direction, anchor, r)
            rank = filtered_rank(model, query, answer, known.get((direction, anchor, r)))
            ranks[direction].append(rank)

    def summarize(rank_list: list[float]) -> RankingReport:
        arr = np.asarray(rank_list)
        return RankingReport(
            mrr=float((1.0 / arr).mean()),
            hits={k: float((arr <= k).mean()) for k in hits_at},
            queries=arr.size,
        )

    report = summarize(ranks[Direction.TAIL] + ranks[Direction.HEAD])
    for direction, rank_list in ranks.items():
        report.by_direction[_DIRECTION_NAMES[direction]] = summarize(rank_list)
    return report


def format_report_table(report: RankingReport, label: str = "all") -> str:
    """Aligned text table; metric columns are MRR, Hits@1, Hits@3, Hits@10 (x100)."""
    ks = sorted(report.hits)
    header = ["", "MRR"] + [f"Hits@{k}" for k in ks]
    rows = [(label, report)] + sorted(report.by_direction.items())
    body = [[name, f"{100 * r.mrr:.1f}"] + [f"{100 * r.hits[k]:.1f}" for k in ks] for name, r in rows]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    fmt = "  ".join(f"{{:>{w}}}" for w in widths)
    return "\n".join(fmt.format(*line) for line in [header] + body)
