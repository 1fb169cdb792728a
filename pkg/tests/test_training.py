import dataclasses
import io
import json

import numpy as np
import pytest

from transbound.algebra import checkpoint_bytes
from transbound.data import GroundedPattern, PatternRule, RuleKind, Triple, TripleStore
from transbound.evaluation import RankingReport
from transbound.lemmas import generate_pattern_kg
from transbound.losses import LossSpec, RegularizerSpec
from transbound.training import (
    ConfigError,
    NumericError,
    OptimizerState,
    SamplingError,
    TrainConfig,
    Trainer,
    adagrad_step,
    corrupt_batch,
    fit,
    init_model,
    sample_negatives,
)


def test_sample_two_entities():
    store = TripleStore([(0, 0, 1)], (), (), 2, 1)
    rng = np.random.default_rng(0)
    for s in sample_negatives(Triple(0, 0, 1), store, 20, rng):
        if s.side == "tail":
            assert s.corrupted == Triple(0, 0, 0)
        else:
            assert s.corrupted == Triple(1, 0, 1)


def test_sample_contract(toy_store):
    out = sample_negatives(Triple(0, 0, 1), toy_store, 10, np.random.default_rng(1))
    assert len(out) == 10
    for s in out:
        diff = [a != b for a, b in zip(s.origin, s.corrupted)]
        assert diff == ([True, False, False] if s.side == "head" else [False, False, True])


def test_sample_single_entity_errors():
    store = TripleStore([(0, 0, 0)], (), (), 1, 1)
    with pytest.raises(SamplingError):
        sample_negatives(Triple(0, 0, 0), store, 1, np.random.default_rng(0))
    with pytest.raises(SamplingError):
        corrupt_batch(np.array([[0, 0, 0]]), 1, 1, np.random.default_rng(0))


def test_replacement_frequencies_uniform():
    rng = np.random.default_rng(5)
    pos = np.array([[3, 0, 3]])
    neg = corrupt_batch(np.repeat(pos, 10000, axis=0), 10, 10, rng)
    changed = np.where(neg[..., 0] != 3, neg[..., 0], neg[..., 2]).ravel()
    counts = np.bincount(changed, minlength=10)
    assert counts[3] == 0
    expected = len(changed) / 9
    others = np.delete(counts, 3)
    assert np.all(np.abs(others - expected) / expected < 0.05)
    head_frac = np.mean(neg[..., 0] != 3)
    assert abs(head_frac - 0.5) < 0.01


def test_filtered_negatives_avoid_known(toy_store):
    rng = np.random.default_rng(0)
    out = sample_negatives(Triple(0, 0, 1), toy_store, 30, rng, filtered=True)
    assert all(s.corrupted not in toy_store.known for s in out)


def test_adagrad_examples():
    p = np.array([1.0])
    st = OptimizerState(np.zeros(1))
    adagrad_step(p, np.array([0.0]), st, 0.1)
    assert p[0] == 1.0 and st.accumulator[0] == 0.0
    adagrad_step(p, np.array([1.0]), st, 0.1)
    assert abs(p[0] - 0.9) < 1e-7
    before = p[0]
    adagrad_step(p, np.array([1.0]), st, 0.1)
    assert abs((p[0] - before) + 0.1 / np.sqrt(2)) < 1e-7
    with pytest.raises(NumericError):
        adagrad_step(p, np.array([np.nan]), st, 0.1)


def test_adagrad_complex_views():
    p = np.array([1 + 1j])
    st = OptimizerState(np.zeros(2))
    adagrad_step(p, np.array([1 - 1j]), st, 0.1)
    assert np.isclose(p[0], 0.9 + 1.1j)


def test_config_validation():
    for kw in (dict(neg_per_pos=0), dict(batches_per_epoch=0), dict(dim=0), dict(patience=0), dict(learning_rate=0)):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)
    with pytest.raises(ConfigError):
        Trainer(init_model("TransE", "L2", TripleStore([(0, 0, 1)], (), (), 2, 1), TrainConfig(dim=2)),
                TripleStore((), (), (), 2, 1), TrainConfig(dim=2))


def small_config(**kw):
    base = dict(dim=8, learning_rate=0.05, batches_per_epoch=2, max_epochs=5, eval_every=1, neg_per_pos=3,
                loss=LossSpec("c", 1.0, 2.0))
    base.update(kw)
    return TrainConfig(**base)


def run_epochs(kind, store, cfg, regs=(), n=3):
    m = init_model(kind, "L2", store, cfg)
    tr = Trainer(m, store, cfg, regs)
    summaries = [tr.train_epoch() for _ in range(n)]
    return m, tr, summaries


@pytest.mark.parametrize("kind", ["TransE", "TransComplEx"])
def test_determinism(kind, toy_store):
    cfg = small_config(loss=LossSpec("c", 1.0, 2.0, lambda0=1.0, use_slack=True))
    a, _, sa = run_epochs(kind, toy_store, cfg)
    b, _, sb = run_epochs(kind, toy_store, cfg)
    assert checkpoint_bytes(a.table) == checkpoint_bytes(b.table)
    assert sa == sb


def test_real_mode_stays_real(toy_store):
    m, _, _ = run_epochs("TransE", toy_store, small_config())
    assert np.all(m.table.entities.imag == 0) and np.all(m.table.relations.imag == 0)


def test_zero_weight_regs_same_trajectory(toy_store):
    cfg = small_config()
    sym = GroundedPattern(PatternRule(RuleKind.SYMMETRIC, (0,), 1.0), ((0, 1), (1, 2)))
    eq = GroundedPattern(PatternRule(RuleKind.EQUIVALENCE, (0, 1), 1.0))
    a, _, _ = run_epochs("TransComplEx", toy_store, cfg)
    b, _, _ = run_epochs("TransComplEx", toy_store, cfg, [RegularizerSpec(sym, 0.0), RegularizerSpec(eq, 0.0)])
    assert a.table.equals(b.table)


def test_one_epoch_reduces_loss(toy_store):
    cfg = small_config(batches_per_epoch=1)
    m = init_model("TransComplEx", "L2", toy_store, cfg)
    tr = Trainer(m, toy_store, cfg)
    before = tr.evaluate_loss()
    tr.train_epoch()
    assert tr.evaluate_loss() < before


def test_accumulators_monotone(toy_store):
    cfg = small_config(loss=LossSpec("c", 1.0, 2.0, lambda0=1.0, use_slack=True))
    m = init_model("TransE", "L2", toy_store, cfg)
    tr = Trainer(m, toy_store, cfg)
    prev = {k: s.accumulator.copy() for k, s in tr.optimizer.states.items()}
    for _ in range(5):
        tr.train_epoch()
        for k, s in tr.optimizer.states.items():
            assert np.all(s.accumulator >= prev[k])
            prev[k] = s.accumulator.copy()
        assert np.all(tr.slack >= 0)


def test_regularizer_contribution_linear(toy_store):
    cfg = small_config()
    m = init_model("TransComplEx", "L2", toy_store, cfg)
    rules = [
        GroundedPattern(PatternRule(RuleKind.SYMMETRIC, (0,), 1.0), ((0, 1),)),
        GroundedPattern(PatternRule(RuleKind.IMPLICATION, (0, 1), 1.0)),
        GroundedPattern(PatternRule(RuleKind.INVERSE, (0, 1), 1.0)),
    ]
    pos = np.array(toy_store.train)
    neg = corrupt_batch(pos, 4, 2, np.random.default_rng(0))
    idx = np.arange(len(pos))
    totals = []
    for scale in (1.0, 2.0):
        regs = [RegularizerSpec(g, scale * w) for g, w in zip(rules, (0.3, 0.7, 1.1))]
        loss, values, *_ = Trainer(m, toy_store, cfg, regs).batch_terms(pos, neg, idx)
        totals.append(sum(r.weight * v for r, v in zip(regs, values)))
    assert totals[1] == pytest.approx(2 * totals[0], rel=1e-12)


def test_regularizer_gradients_finite_difference(toy_store):
    cfg = small_config()
    m = init_model("TransComplEx", "L1", toy_store, cfg)
    rules = [
        RegularizerSpec(GroundedPattern(PatternRule(RuleKind.SYMMETRIC, (0,), 1.0), ((0, 1),)), 0.4),
        RegularizerSpec(GroundedPattern(PatternRule(RuleKind.IMPLICATION, (0, 1), 1.0)), 0.9),
        RegularizerSpec(GroundedPattern(PatternRule(RuleKind.EQUIVALENCE, (0, 1), 1.0)), 0.6),
    ]
    tr = Trainer(m, toy_store, dataclasses.replace(cfg, loss=LossSpec("c", 50.0, 51.0)), rules)
    pos = np.array(toy_store.train)
    # scores stay far below gamma1 and negatives far below gamma2: only regularizers move with the
    # positive side, the negative hinge is linear, so compare the whole objective
    neg = corrupt_batch(pos, 4, 1, np.random.default_rng(0))
    idx = np.arange(len(pos))

    def total():
        loss, values, *_ = tr.batch_terms(pos, neg, idx)
        return loss.sum() + sum(r.weight * v for r, v in zip(rules, values))

    _, _, eg, rg, _ = tr.batch_terms(pos, neg, idx)
    h = 1e-6
    for arr, grad in ((m.table.entities, eg), (m.table.relations, rg)):
        flat, gflat = arr.view(np.float64).reshape(-1), grad.view(np.float64).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = total()
            flat[i] = old - h
            dn = total()
            flat[i] = old
            assert (up - dn) / (2 * h) == pytest.approx(gflat[i], rel=1e-4, abs=1e-6)


def test_numeric_error_on_nan(toy_store):
    cfg = small_config()
    m = init_model("TransE", "L2", toy_store, cfg)
    m.table.entities[0, 0] = np.nan
    with pytest.raises(NumericError):
        Trainer(m, toy_store, cfg).train_epoch()


def test_fit_max_epochs_zero(toy_store):
    cfg = small_config(max_epochs=0)
    m = init_model("TransE", "L2", toy_store, cfg)
    init = m.table.copy()
    res = fit(m, toy_store, cfg)
    assert res.log == [] and res.best.equals(init)


def test_fit_patience_one_stops_at_second_eval(toy_store):
    mrrs = iter([0.9, 0.8, 0.7, 0.6, 0.5])

    def validate(model, store):
        v = next(mrrs)
        return RankingReport(1 / v, v, {10: 1.0})

    cfg = small_config(patience=1, max_epochs=5)
    res = fit(init_model("TransE", "L2", toy_store, cfg), toy_store, cfg, validate=validate)
    assert len(res.log) == 2 and res.best_epoch == 1


def test_fit_returns_argmax_checkpoint(toy_store):
    buf = io.StringIO()
    cfg = small_config(max_epochs=6, eval_every=1, patience=10)
    m = init_model("TransComplEx", "L2", toy_store, cfg)
    snapshots = {}
    from transbound.evaluation import evaluate

    def validate(model, store):
        snapshots[len(snapshots) + 1] = model.table.copy()
        return evaluate(model, store, "valid")

    res = fit(m, toy_store, cfg, validate=validate, log_stream=buf)
    lines = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert lines == res.log
    assert set(lines[0]) == {"epoch", "mean_loss", "MR", "MRR", "hits10", "wall_ms"}
    best = max(range(len(lines)), key=lambda i: (lines[i]["MRR"], -i))
    assert res.best_epoch == lines[best]["epoch"]
    assert res.best.equals(snapshots[best + 1])


def test_fit_requires_validation():
    store = TripleStore([(0, 0, 1)], (), (), 2, 1)
    with pytest.raises(ConfigError):
        fit(init_model("TransE", "L2", store, small_config()), store, small_config())


@pytest.mark.parametrize("kind", ["TransE", "TransComplEx"])
def test_toy_symmetric_fit(kind):
    kg = generate_pattern_kg("symmetric", 50, seed=0)
    store = kg.store()
    cfg = TrainConfig(dim=20, learning_rate=0.05, batches_per_epoch=10, max_epochs=200, eval_every=20, patience=5,
                      loss=LossSpec("c", 1.0, 2.0))
    res = fit(init_model(kind, "L2", store, cfg), store, cfg)
    assert max(e["MRR"] for e in res.log) > 0.5
