"""Boundary-condition losses, the slack soft-margin variant and relation-pattern regularizers.

Each loss is written for one positive score against one or more negative
scores. With several negatives the negative hinge terms are averaged, so
``gamma2``/``lambda2`` keep their scale when the negative count changes.
All hinge derivatives use ``d max(x, 0)/dx = 0`` at ``x = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import EmbeddingTable, norm, norm_grad
from .data import GroundedPattern, RuleKind, Triple
from .scoring import score_and_grad_from_rows

CONDITIONS = ("a", "b", "c", "d")


class LossSpecError(ValueError):
    pass


class ContractError(ValueError):
    """Inputs violate a loss precondition (negative score, missing slack, ...)."""


@dataclass(frozen=True)
class LossSpec:
    condition: str = "c"
    gamma1: float = 0.4
    gamma2: float = 0.5
    lambda0: float = 0.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    margin: float = 1.0
    use_slack: bool = False

    def __post_init__(self):
        c = self.condition
        if c not in CONDITIONS:
            raise LossSpecError(f"condition must be one of {CONDITIONS}, got {c!r}")
        for name in ("lambda0", "lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise LossSpecError(f"{name} must be >= 0")
        if c == "a":
            if self.gamma1 != 0:
                raise LossSpecError("condition a requires gamma1 = 0")
            if not self.gamma2 > 0:
                raise LossSpecError("condition a requires gamma2 > 0")
        elif c in ("b", "c"):
            if not self.gamma2 > self.gamma1 > 0:
                raise LossSpecError(
                    f"condition {c} requires gamma2 > gamma1 > 0 (got gamma1={self.gamma1}, gamma2={self.gamma2})"
                )
        else:
            if not self.margin > 0:
                raise LossSpecError("condition d requires margin > 0")
            if self.use_slack:
                raise LossSpecError("slack variables apply to conditions a-c only")


def _hinge(x):
    return np.maximum(x, 0.0)


def _step(x):
    # derivative of max(x, 0), zero at the kink
    return (np.asarray(x) > 0).astype(np.float64)


def _check_scores(f_pos, f_neg):
    if np.any(np.asarray(f_pos) < 0) or np.any(np.asarray(f_neg) < 0):
        raise ContractError("scores must be non-negative")


def _slack_value(spec: LossSpec, xi):
    if not spec.use_slack:
        return 0.0
    if xi is None:
        raise ContractError("use_slack is set but no slack value was given")
    if np.any(np.asarray(xi) < 0):
        raise ContractError("slack must be >= 0")
    return xi


def loss_ab(f_pos, f_neg, spec: LossSpec, xi=None) -> float:
    """``lambda1 |f_pos - gamma1| + lambda2 max(gamma2 - f_neg - xi, 0)`` (+ ``lambda0 xi^2`` with slack)."""
    if spec.condition not in ("a", "b"):
        raise ContractError(f"loss_ab needs condition a or b, got {spec.condition}")
    return float(pair_loss(spec, f_pos, f_neg, xi)[0])


def loss_c(f_pos, f_neg, spec: LossSpec, xi=None) -> float:
    """``lambda1 max(f_pos - gamma1, 0) + lambda2 max(gamma2 - f_neg - xi, 0)`` (+ ``lambda0 xi^2`` with slack)."""
    if spec.condition != "c":
        raise ContractError(f"loss_c needs condition c, got {spec.condition}")
    return float(pair_loss(spec, f_pos, f_neg, xi)[0])


def loss_margin(f_pos, f_neg, spec: LossSpec) -> float:
    if spec.condition != "d":
        raise ContractError(f"loss_margin needs condition d, got {spec.condition}")
    return float(pair_loss(spec, f_pos, f_neg)[0])


def pair_loss(spec: LossSpec, f_pos, f_neg, xi=None):
    """Loss for positives against their negatives, with derivatives.

    ``f_pos`` has shape (B,) (or scalar), ``f_neg`` shape (B, k) (or (k,) /
    scalar), ``xi`` shape (B,). Returns ``(loss, d_pos, d_neg, d_xi)`` with
    per-positive loss of shape (B,).
    """
    f_pos = np.asarray(f_pos, dtype=np.float64)
    scalar = f_pos.ndim == 0
    f_pos = np.atleast_1d(f_pos)
    f_neg = np.asarray(f_neg, dtype=np.float64).reshape(len(f_pos), -1)
    _check_scores(f_pos, f_neg)
    k = f_neg.shape[1]

    if spec.condition == "d":
        gap = f_pos[:, None] + spec.margin - f_neg
        loss = _hinge(gap).mean(axis=1)
        s = _step(gap) / k
        out = loss, s.sum(axis=1), -s, np.zeros_like(f_pos)
    else:
        xi_val = _slack_value(spec, xi)
        xi_arr = np.broadcast_to(np.asarray(xi_val, dtype=np.float64), f_pos.shape)
        if spec.condition in ("a", "b"):
            dev = f_pos - spec.gamma1
            pos_term = spec.lambda1 * np.abs(dev)
            d_pos = spec.lambda1 * np.sign(dev)
        else:
            dev = f_pos - spec.gamma1
            pos_term = spec.lambda1 * _hinge(dev)
            d_pos = spec.lambda1 * _step(dev)
        gap = spec.gamma2 - f_neg - xi_arr[:, None]
        neg_term = spec.lambda2 * _hinge(gap).mean(axis=1)
        s = spec.lambda2 * _step(gap) / k
        loss = pos_term + neg_term
        d_xi = -s.sum(axis=1)
        if spec.use_slack:
            loss = loss + spec.lambda0 * xi_arr**2
            d_xi = d_xi + 2 * spec.lambda0 * xi_arr
        else:
            d_xi = np.zeros_like(f_pos)
        out = loss, d_pos, -s, d_xi
    if scalar:
        return tuple(np.squeeze(o) if i != 2 else o[0] for i, o in enumerate(out))
    return out


def optimal_slack(f_neg, spec: LossSpec) -> float:
    """Exact minimizer over ``xi >= 0`` of the slack-dependent part of the loss.

    Minimizes ``lambda0 xi^2 + lambda2 mean_j max(m_j - xi, 0)`` with
    ``m_j = gamma2 - f_neg_j``. The objective is convex and piecewise
    quadratic, so the minimum sits at zero, a kink ``m_j`` or a stationary
    point ``lambda2 n / (2 lambda0 k)`` of one of the pieces.
    """
    m = np.atleast_1d(np.asarray(spec.gamma2 - np.asarray(f_neg, dtype=np.float64)))
    k = m.size

    def phi(x):
        return spec.lambda0 * x * x + spec.lambda2 * _hinge(m - x).mean()

    cands = [0.0] + [max(v, 0.0) for v in m]
    if spec.lambda0 > 0:
        cands += [spec.lambda2 * n / (2 * spec.lambda0 * k) for n in range(1, k + 1)]
    vals = [phi(c) for c in cands]
    return float(cands[int(np.argmin(vals))])


# relation-pattern regularizers


@dataclass(frozen=True)
class RegularizerSpec:
    grounded: GroundedPattern
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise LossSpecError("regularizer weight must be >= 0")


def reg_symmetric(instance, table: EmbeddingTable, p: str = "L2") -> float:
    """``||Re(h) - Re(t)||``; defined on the complex score only."""
    if table.mode != "complex":
        raise LossSpecError("symmetric regularizer is defined for complex-mode tables only")
    h, t = instance
    return float(norm(table.entities[h].real - table.entities[t].real, p))


def reg_equivalence(p_rel: int, q_rel: int, table: EmbeddingTable, p: str = "L2") -> float:
    """``||p - q||`` over concatenated real and imaginary parts."""
    return float(norm(table.relations[p_rel] - table.relations[q_rel], p))


def reg_implication(p_rel: int, q_rel: int, triple, model) -> float:
    """``max(f_p(h, t) - f_q(h, t), 0)`` for the premise ``p`` and conclusion ``q``."""
    h, _, t = triple
    return max(model.score(Triple(h, p_rel, t)) - model.score(Triple(h, q_rel, t)), 0.0)


def reg_inverse(r_rel: int, r_inv: int, table: EmbeddingTable, p: str = "L2") -> float:
    """``||r - r_inv||``, literally as the formula is stated (same shape as equivalence)."""
    return float(norm(table.relations[r_rel] - table.relations[r_inv], p))


def objective(batch_losses, regs=()) -> float:
    """Sum of losses plus ``sum(weight * value)`` over ``(RegularizerSpec, value)`` pairs."""
    total = float(np.sum(batch_losses))
    for spec, value in regs:
        total += spec.weight * value
    return total


def regularizer_value_and_grad(reg: RegularizerSpec, model, triples, ent_grad, rel_grad) -> float:
    """Unweighted value of one grounded rule on a batch; adds ``weight * grad`` into the buffers.

    ``triples`` is an int array (n, 3) of the batch positives: symmetric
    instances are the grounded pairs whose triples appear in the batch,
    implication acts on batch positives carrying the premise relation.
    Equivalence/inverse act on relation rows once per batch.
    """
    rule = reg.grounded.rule
    w = reg.weight
    table = model.table
    E, R = table.entities, table.relations
    kind = rule.kind
    if kind in (RuleKind.EQUIVALENCE, RuleKind.INVERSE):
        a, b = rule.relations
        diff = R[a] - R[b]
        g = norm_grad(diff, model.norm)
        rel_grad[a] += w * g
        rel_grad[b] -= w * g
        return float(norm(diff, model.norm))
    if kind is RuleKind.SYMMETRIC:
        if table.mode != "complex":
            raise LossSpecError("symmetric regularizer is defined for complex-mode tables only")
        (r,) = rule.relations
        sel = triples[triples[:, 1] == r]
        if len(sel) == 0:
            return 0.0
        diff = E[sel[:, 0]].real - E[sel[:, 2]].real
        g = norm_grad(diff.astype(np.complex128), model.norm).real
        np.add.at(ent_grad, sel[:, 0], w * g)
        np.add.at(ent_grad, sel[:, 2], -w * g)
        return float(norm(diff, model.norm).sum())
    if kind is RuleKind.IMPLICATION:
        p_rel, q_rel = rule.relations
        sel = triples[triples[:, 1] == p_rel]
        if len(sel) == 0:
            return 0.0
        h, t = E[sel[:, 0]], E[sel[:, 2]]
        fp, gph, gpr, gpt = score_and_grad_from_rows(h, R[[p_rel]], t, model.kind, model.norm)
        fq, gqh, gqr, gqt = score_and_grad_from_rows(h, R[[q_rel]], t, model.kind, model.norm)
        act = (fp - fq > 0).astype(np.float64)[:, None] * w
        np.add.at(ent_grad, sel[:, 0], act * (gph - gqh))
        np.add.at(ent_grad, sel[:, 2], act * (gpt - gqt))
        rel_grad[p_rel] += (act * gpr).sum(axis=0)
        rel_grad[q_rel] -= (act * gqr).sum(axis=0)
        return float(np.maximum(fp - fq, 0.0).sum())
    raise LossSpecError(f"no regularizer for {kind.value} rules")
