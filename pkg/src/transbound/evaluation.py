"""Filtered link-prediction ranking: MR, MRR and Hits@k over head and tail queries."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Triple, TripleStore

TIE_MODES = ("mid", "optimistic", "pessimistic")
PROTOCOLS = ("filtered", "raw")


def rank_from_scores(scores: np.ndarray, gold: int, mask: np.ndarray | None = None, ties: str = "mid") -> int:
    """Rank of ``gold`` among candidates (lower score is better).

    ``mask`` marks the candidate entities; the gold entity always counts.
    Mid-rank ties add half (rounded down) of the equal-scoring non-gold
    candidates.
    """
    g = scores[gold]
    cand = np.ones(len(scores), dtype=bool) if mask is None else mask.copy()
    cand[gold] = False
    less = int(np.count_nonzero(scores[cand] < g))
    equal = int(np.count_nonzero(scores[cand] == g))
    if ties == "mid":
        return 1 + less + equal // 2
    if ties == "optimistic":
        return 1 + less
    if ties == "pessimistic":
        return 1 + less + equal
    raise ValueError(f"ties must be one of {TIE_MODES}, got {ties!r}")


def _candidate_mask(store: TripleStore, query: Triple, side: str) -> np.ndarray:
    h, r, t = query
    mask = np.ones(store.n_entities, dtype=bool)
    known = store.known_tails(h, r) if side == "tail" else store.known_heads(r, t)
    if known:
        mask[list(known)] = False
    mask[t if side == "tail" else h] = True
    return mask


def rank_one(model, store: TripleStore, query, side: str, protocol: str = "filtered", ties: str = "mid") -> int:
    query = Triple(*query)
    h, r, t = query
    if side == "tail":
        scores, gold = model.tail_scores(h, r), t
    elif side == "head":
        scores, gold = model.head_scores(r, t), h
    else:
        raise ValueError(f"side must be 'head' or 'tail', got {side!r}")
    if protocol == "filtered":
        mask = _candidate_mask(store, query, side)
    elif protocol == "raw":
        mask = None
    else:
        raise ValueError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    return rank_from_scores(scores, gold, mask, ties)


@dataclass
class RankingReport:
    mr: float
    mrr: float
    hits: dict
    per_triple_ranks: list = field(default_factory=list)
    protocol: str = "filtered"

    @classmethod
    def from_ranks(cls, per_triple_ranks, ks=(1, 3, 10), protocol: str = "filtered") -> "RankingReport":
        ranks = np.array([r for _, _, r in per_triple_ranks], dtype=np.float64)
        if ranks.size == 0:
            raise ValueError("no ranks to aggregate")
        return cls(
            mr=float(ranks.mean()),
            mrr=float((1.0 / ranks).mean()),
            hits={k: float((ranks <= k).mean()) for k in ks},
            per_triple_ranks=list(per_triple_ranks),
            protocol=protocol,
        )

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "MR": self.mr,
            "MRR": self.mrr,
            "MRR_x100": 100 * self.mrr,
            "hits": {str(k): v for k, v in self.hits.items()},
            "hits_x100": {str(k): 100 * v for k, v in self.hits.items()},
            "per_triple_ranks": [[list(map(int, t)), s, int(r)] for t, s, r in self.per_triple_ranks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankingReport":
        ranks = [(Triple(*t), s, r) for t, s, r in d["per_triple_ranks"]]
        return cls(d["MR"], d["MRR"], {int(k): v for k, v in d["hits"].items()}, ranks, d.get("protocol", "filtered"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def summary_line(self) -> str:
        return f"MR {self.mr:.1f} MRR {self.mrr:.3f} Hits@10 {self.hits.get(10, float('nan')):.3f}"

    def table(self, name: str = "model") -> str:
        """Plain-text table with MR, MRR and Hits@10 (the latter two also as percentages)."""
        h10 = self.hits.get(10, float("nan"))
        w = max(len(name), 5)
        lines = [
            f"{'':<{w}}  {'MR':>8}  {'MRR':>6}  {'Hits@10':>7}",
            f"{name:<{w}}  {self.mr:>8.1f}  {100 * self.mrr:>6.1f}  {100 * h10:>7.1f}",
        ]
        return "\n".join(lines)


def evaluate(
    model, store: TripleStore, split: str = "test", protocol: str = "filtered", ties: str = "mid", ks=(1, 3, 10)
) -> RankingReport:
    """Rank every triple of ``split`` on both sides and aggregate."""
    triples = store.split(split)
    if not triples:
        raise ValueError(f"split {split!r} is empty")
    ranks = []
    for q in triples:
        for side in ("head", "tail"):
            ranks.append((q, side, rank_one(model, store, q, side, protocol, ties)))
    return RankingReport.from_ranks(ranks, ks, protocol)
