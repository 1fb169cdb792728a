"""TransE and TransComplEx scores with analytic gradients.

TransE scores ``||h + r - t||`` on real coordinates; TransComplEx scores
``||h + r - conj(t)||``, so the imaginary residual is ``Im h + Im r + Im t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import EmbeddingTable, norm, norm_grad

KINDS = ("TransE", "TransComplEx")
MODE_FOR_KIND = {"TransE": "real", "TransComplEx": "complex"}


def translation_residual(h, r, t, kind: str) -> np.ndarray:
    """Residual for row-aligned arrays ``h, r, t`` (complex, shape (..., d))."""
    if kind == "TransE":
        return (np.real(h) + np.real(r) - np.real(t)).astype(np.complex128)
    if kind == "TransComplEx":
        return h + r - np.conj(t)
    raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def tail_gradient(g: np.ndarray, kind: str) -> np.ndarray:
    """Map d(score)/d(residual) to d(score)/d(tail); the conjugate flips the imaginary sign."""
    if kind == "TransE":
        return -g
    return -np.conj(g)


@dataclass
class ScoreModel:
    kind: str
    norm: str
    table: EmbeddingTable

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.norm not in ("L1", "L2"):
            raise ValueError(f"norm must be 'L1' or 'L2', got {self.norm!r}")
        want = MODE_FOR_KIND[self.kind]
        if self.table.mode != want:
            raise ValueError(f"{self.kind} requires a {want}-mode table, got {self.table.mode}")

    def _rows(self, h, r, t):
        E, R = self.table.entities, self.table.relations
        for i, n in ((h, len(E)), (t, len(E))):
            if np.any(np.asarray(i) < 0) or np.any(np.asarray(i) >= n):
                raise IndexError(f"entity id out of range [0, {n})")
        if np.any(np.asarray(r) < 0) or np.any(np.asarray(r) >= len(R)):
            raise IndexError(f"relation id out of range [0, {len(R)})")
        return E[h], R[r], E[t]

    def residual(self, triple) -> np.ndarray:
        h, r, t = triple
        return translation_residual(*self._rows(h, r, t), self.kind)

    def score(self, triple) -> float:
        return float(norm(self.residual(triple), self.norm))

    def score_gradients(self, triple) -> dict:
        """Gradients of the score w.r.t. the head, relation and tail rows (complex-packed)."""
        g = norm_grad(self.residual(triple), self.norm)
        return {"head": g, "relation": g.copy(), "tail": tail_gradient(g, self.kind)}

    # batched paths

    def residuals(self, h, r, t) -> np.ndarray:
        return translation_residual(*self._rows(np.asarray(h), np.asarray(r), np.asarray(t)), self.kind)

    def scores(self, h, r, t) -> np.ndarray:
        return norm(self.residuals(h, r, t), self.norm)

    def tail_scores(self, head: int, relation: int) -> np.ndarray:
        """Score of ``(head, relation, e)`` for every entity ``e``."""
        E, R = self.table.entities, self.table.relations
        return norm(translation_residual(E[head][None, :], R[relation][None, :], E, self.kind), self.norm)

    def head_scores(self, relation: int, tail: int) -> np.ndarray:
        E, R = self.table.entities, self.table.relations
        return norm(translation_residual(E, R[relation][None, :], E[tail][None, :], self.kind), self.norm)


def scores_from_rows(h, r, t, kind: str, p: str) -> np.ndarray:
    return norm(translation_residual(h, r, t, kind), p)


def score_and_grad_from_rows(h, r, t, kind: str, p: str):
    """Scores plus gradients w.r.t. the head/relation/tail rows for aligned row arrays."""
    eps = translation_residual(h, r, t, kind)
    g = norm_grad(eps, p)
    return norm(eps, p), g, g, tail_gradient(g, kind)
