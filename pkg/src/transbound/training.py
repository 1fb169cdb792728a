"""Negative sampling, Adagrad, the mini-batch epoch loop and early-stopped fitting."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .algebra import EmbeddingTable, init_table
from .data import Triple, TripleStore
from .losses import LossSpec, RegularizerSpec, pair_loss, regularizer_value_and_grad
from .scoring import MODE_FOR_KIND, ScoreModel, score_and_grad_from_rows

log = logging.getLogger(__name__)


class SamplingError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class ConfigError(ValueError):
    pass


class NegativeSample(NamedTuple):
    origin: Triple
    corrupted: Triple
    side: str


def _replacement(original, n_entities, rng, size=None):
    # uniform over the n_entities - 1 entities different from `original`
    draw = rng.integers(0, n_entities - 1, size=np.shape(original) if size is None else size)
    return draw + (draw >= original)


def sample_negatives(positive: Triple, store: TripleStore, n_neg: int, rng, filtered: bool = False) -> list:
    """Corrupt head or tail (fair coin) with a uniform different entity, ``n_neg`` times.

    Accidental positives are kept unless ``filtered`` is set.
    """
    n = store.n_entities
    if n < 2:
        raise SamplingError("need at least 2 entities to corrupt a triple")
    positive = Triple(*positive)
    out = []
    while len(out) < n_neg:
        if rng.random() < 0.5:
            cand = Triple(int(_replacement(positive.head, n, rng)), positive.relation, positive.tail)
            side = "head"
        else:
            cand = Triple(positive.head, positive.relation, int(_replacement(positive.tail, n, rng)))
            side = "tail"
        if filtered and cand in store.known:
            continue
        out.append(NegativeSample(positive, cand, side))
    return out


def corrupt_batch(pos: np.ndarray, n_entities: int, n_neg: int, rng, known=None) -> np.ndarray:
    """Vectorised corruption: (B, 3) positives -> (B, n_neg, 3) negatives."""
    if n_entities < 2:
        raise SamplingError("need at least 2 entities to corrupt a triple")
    neg = np.repeat(pos[:, None, :], n_neg, axis=1)
    head_side = rng.random(neg.shape[:2]) < 0.5
    col = np.where(head_side, 0, 2)
    orig = np.take_along_axis(neg, col[..., None], axis=2)[..., 0]
    repl = _replacement(orig, n_entities, rng)
    np.put_along_axis(neg, col[..., None], repl[..., None], axis=2)
    if known:
        # bounded resampling of accidental positives, ablation only
        for _ in range(20):
            bad = np.array([[tuple(x) in known for x in row] for row in neg])
            if not bad.any():
                break
            orig_b = np.take_along_axis(pos[:, None, :].repeat(n_neg, 1), col[..., None], axis=2)[..., 0]
            repl = _replacement(orig_b, n_entities, rng)
            fresh = neg.copy()
            np.put_along_axis(fresh, col[..., None], repl[..., None], axis=2)
            neg = np.where(bad[..., None], fresh, neg)
    return neg


@dataclass
class OptimizerState:
    accumulator: np.ndarray
    eps: float = 1e-8


def adagrad_step(param: np.ndarray, grad: np.ndarray, state: OptimizerState, learning_rate: float) -> np.ndarray:
    """In-place Adagrad update of ``param`` (real or complex); returns ``param``."""
    p = param.view(np.float64) if np.iscomplexobj(param) else param
    g = grad.view(np.float64) if np.iscomplexobj(grad) else np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient")
    state.accumulator += g * g
    p -= learning_rate * g / (np.sqrt(state.accumulator) + state.eps)
    return param


class Adagrad:
    """Adagrad with one accumulator per parameter group (entities, relations, slack)."""

    def __init__(self, table: EmbeddingTable, n_slack: int = 0, learning_rate: float = 0.01, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.states = {
            "entities": OptimizerState(np.zeros(table.entities.view(np.float64).shape), eps),
            "relations": OptimizerState(np.zeros(table.relations.view(np.float64).shape), eps),
            "slack": OptimizerState(np.zeros(n_slack), eps),
        }

    def step(self, name: str, param: np.ndarray, grad: np.ndarray) -> None:
        adagrad_step(param, grad, self.states[name], self.learning_rate)


@dataclass
class TrainConfig:
    dim: int = 50
    neg_per_pos: int = 10
    learning_rate: float = 0.01
    batches_per_epoch: int = 100
    max_epochs: int = 100
    eval_every: int = 10
    patience: int = 5
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    reg_weights: dict = field(default_factory=dict)
    filter_negatives: bool = False
    unit_entity_norm: bool = False
    adagrad_eps: float = 1e-8

    def __post_init__(self):
        if self.neg_per_pos < 1:
            raise ConfigError("neg_per_pos must be >= 1")
        if self.batches_per_epoch < 1:
            raise ConfigError("batches_per_epoch must be >= 1")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        for k, w in self.reg_weights.items():
            if w < 0:
                raise ConfigError(f"regularizer weight for {k} must be >= 0")


def init_model(kind: str, norm: str, store: TripleStore, config: TrainConfig) -> ScoreModel:
    table = init_table(store.n_entities, store.n_relations, config.dim, MODE_FOR_KIND[kind], config.seed)
    return ScoreModel(kind, norm, table)


@dataclass
class EpochSummary:
    epoch: int
    mean_loss: float
    mean_objective: float
    reg_total: float
    grad_norm: float


def _scatter(target: np.ndarray, rows: np.ndarray, values: np.ndarray) -> None:
    """``target[rows] += values`` with repeated rows summed in a fixed (stable-sorted) order."""
    order = np.argsort(rows, kind="stable")
    uniq, starts = np.unique(rows[order], return_index=True)
    target[uniq] += np.add.reduceat(values[order], starts, axis=0)


class Trainer:
    """Holds the mutable training state for one model: optimizer and slack variables."""

    def __init__(self, model: ScoreModel, store: TripleStore, config: TrainConfig, regs=()):
        if not store.train:
            raise ConfigError("empty training set")
        self.model = model
        self.store = store
        self.config = config
        self.regs = list(regs)
        self.train = np.asarray(store.train, dtype=np.int64).reshape(-1, 3)
        self.slack = np.zeros(len(self.train)) if config.loss.use_slack else None
        self.optimizer = Adagrad(
            model.table, len(self.train) if self.slack is not None else 0, config.learning_rate, config.adagrad_eps
        )
        self.epoch = 0

    def batch_terms(self, pos: np.ndarray, neg: np.ndarray, idx: np.ndarray):
        """Loss, regularizer values and gradient buffers for one batch at the current parameters."""
        m, spec = self.model, self.config.loss
        E, R = m.table.entities, m.table.relations
        B, k = neg.shape[:2]
        f_pos, gph, gpr, gpt = score_and_grad_from_rows(E[pos[:, 0]], R[pos[:, 1]], E[pos[:, 2]], m.kind, m.norm)
        flat = neg.reshape(-1, 3)
        f_neg, gnh, gnr, gnt = score_and_grad_from_rows(E[flat[:, 0]], R[flat[:, 1]], E[flat[:, 2]], m.kind, m.norm)
        xi = self.slack[idx] if self.slack is not None else None
        loss, d_pos, d_neg, d_xi = pair_loss(spec, f_pos, f_neg.reshape(B, k), xi)

        ent_grad = np.zeros_like(E)
        rel_grad = np.zeros_like(R)
        dp = d_pos[:, None]
        dn = d_neg.reshape(-1, 1)
        _scatter(
            ent_grad,
            np.concatenate([pos[:, 0], pos[:, 2], flat[:, 0], flat[:, 2]]),
            np.concatenate([dp * gph, dp * gpt, dn * gnh, dn * gnt]),
        )
        _scatter(rel_grad, np.concatenate([pos[:, 1], flat[:, 1]]), np.concatenate([dp * gpr, dn * gnr]))

        reg_values = []
        for reg in self.regs:
            reg_values.append(regularizer_value_and_grad(reg, m, pos, ent_grad, rel_grad))
        return loss, reg_values, ent_grad, rel_grad, d_xi

    def batches(self, epoch: int, stream: int | None = None):
        # training draws come from (seed, epoch); side computations use a separate stream
        key = [self.config.seed, epoch] if stream is None else [self.config.seed, epoch, stream]
        rng = np.random.default_rng(key)
        perm = rng.permutation(len(self.train))
        for idx in np.array_split(perm, self.config.batches_per_epoch):
            if len(idx) == 0:
                continue
            pos = self.train[idx]
            known = self.store.known if self.config.filter_negatives else None
            neg = corrupt_batch(pos, self.store.n_entities, self.config.neg_per_pos, rng, known)
            yield idx, pos, neg

    def train_epoch(self) -> EpochSummary:
        self.epoch += 1
        table = self.model.table
        tot_loss = tot_reg = 0.0
        grad_sq = 0.0
        for b, (idx, pos, neg) in enumerate(self.batches(self.epoch)):
            loss, reg_values, ent_grad, rel_grad, d_xi = self.batch_terms(pos, neg, idx)
            for name, g in (("entities", ent_grad), ("relations", rel_grad), ("slack", d_xi)):
                if not np.all(np.isfinite(g)):
                    raise NumericError(f"non-finite {name} gradient at epoch {self.epoch}, batch {b}")
            tot_loss += float(loss.sum())
            tot_reg += sum(r.weight * v for r, v in zip(self.regs, reg_values))
            grad_sq += float(np.sum(np.abs(ent_grad) ** 2) + np.sum(np.abs(rel_grad) ** 2))
            self.optimizer.step("entities", table.entities, ent_grad)
            self.optimizer.step("relations", table.relations, rel_grad)
            if self.slack is not None:
                sg = np.zeros_like(self.slack)
                np.add.at(sg, idx, d_xi)
                self.optimizer.step("slack", self.slack, sg)
                np.maximum(self.slack, 0.0, out=self.slack)
            if table.mode == "real":
                table.zero_imaginary()
            if self.config.unit_entity_norm:
                table.project_entities_unit()
            table.step += 1
        if not table.is_finite():
            raise NumericError(f"non-finite parameters after epoch {self.epoch}")
        n = len(self.train)
        return EpochSummary(self.epoch, tot_loss / n, (tot_loss + tot_reg) / n, tot_reg, float(np.sqrt(grad_sq)))

    def evaluate_loss(self, epoch_seed: int = 0) -> float:
        """Mean per-positive loss at the current parameters with a fixed negative draw."""
        total = 0.0
        for idx, pos, neg in self.batches(epoch_seed, stream=1):
            total += float(self.batch_terms(pos, neg, idx)[0].sum())
        return total / len(self.train)


def train_epoch(trainer: Trainer) -> EpochSummary:
    return trainer.train_epoch()


@dataclass
class FitResult:
    best: EmbeddingTable
    log: list
    best_epoch: int
    epochs_run: int


def _default_validate(model, store):
    from .evaluation import evaluate

    return evaluate(model, store, "valid")


def fit(
    model: ScoreModel,
    store: TripleStore,
    config: TrainConfig,
    regs=(),
    validate: Callable | None = None,
    log_stream=None,
) -> FitResult:
    """Train with early stopping on validation MRR.

    Evaluates every ``eval_every`` epochs (and at the last epoch), keeps a
    copy of the best-MRR table and stops after ``patience`` evaluations
    without improvement. ``validate(model, store)`` must return an object
    with ``mr``, ``mrr`` and ``hits`` attributes.
    """
    if validate is None:
        if not store.valid:
            raise ConfigError("validation split is empty")
        validate = _default_validate
    trainer = Trainer(model, store, config, regs)
    best = model.table.copy()
    best_mrr, best_epoch, bad = -np.inf, 0, 0
    entries = []
    t0 = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        summary = trainer.train_epoch()
        if epoch % config.eval_every and epoch != config.max_epochs:
            continue
        report = validate(model, store)
        entry = {
            "epoch": epoch,
            "mean_loss": summary.mean_loss,
            "MR": report.mr,
            "MRR": report.mrr,
            "hits10": report.hits.get(10, float("nan")),
            "wall_ms": int(1000 * (time.perf_counter() - t0)),
        }
        entries.append(entry)
        if log_stream is not None:
            log_stream.write(json.dumps(entry) + "\n")
            log_stream.flush()
        log.info("epoch %d loss %.4f MRR %.4f", epoch, summary.mean_loss, report.mrr)
        if report.mrr > best_mrr:
            best_mrr, best_epoch, bad = report.mrr, epoch, 0
            best = model.table.copy()
        else:
            bad += 1
            if bad >= config.patience:
                break
    return FitResult(best, entries, best_epoch, trainer.epoch)
