"""Acceptance criteria, one recorded pass/fail line each (see the summary section of the pytest run)."""
import time
from pathlib import Path

import numpy as np
import pytest

from transbound.algebra import EmbeddingTable, norm
from transbound.cli import cmd_train
from transbound.config import RunConfig
from transbound.data import TripleStore
from transbound.evaluation import evaluate
from transbound.lemmas import (
    LEMMAS,
    CLAIMED_ENCODABLE,
    construct_symmetric_transE,
    constructive_verdict,
    training_verdict,
)
from transbound.losses import LossSpec, pair_loss
from transbound.scoring import ScoreModel, score_and_grad_from_rows, translation_residual
from transbound.training import Trainer, TrainConfig, fit, init_model

from conftest import random_store

ROOT = Path(__file__).resolve().parents[1]
UMLS = ROOT / "data" / "umls"


def test_symmetric_geometry(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_norm, worst_dot, bad = 0.0, 0.0, []
    for alpha in (1.1, 1.5, 2.0, 5.0):
        for rn in (0.5, 1.0, 3.0):
            r = rng.normal(size=8)
            r *= rn / np.linalg.norm(r)
            sc = construct_symmetric_transE(r, alpha)
            target = alpha * rn
            worst_norm = max(worst_norm, abs(np.linalg.norm(sc.u + r) - target), abs(np.linalg.norm(sc.u - r) - target))
            worst_dot = max(worst_dot, abs(sc.u @ r))
            if sc.status != "witness":
                bad.append((alpha, rn, sc.status))
    infeasible = [construct_symmetric_transE(np.array([1.0, 0.0, 0.0]), a).status for a in (0.5, 0.9)]
    elapsed = time.perf_counter() - t0
    ok = worst_norm <= 1e-9 and worst_dot <= 1e-12 and not bad and infeasible == ["infeasible"] * 2 and elapsed < 1
    acceptance("lemma geometry", ok, f"max norm err {worst_norm:.1e}, max |<u,r>| {worst_dot:.1e}, "
                                     f"alpha<1 -> {infeasible}, {elapsed:.3f}s")
    assert ok


def test_constructive_matrix(acceptance):
    t0 = time.perf_counter()
    verdicts = [constructive_verdict(l, k, c) for l in LEMMAS for k in ("TransE", "TransComplEx") for c in "abcd"]
    elapsed = time.perf_counter() - t0
    cell = {(v.lemma, v.model, v.condition): v for v in verdicts}
    disagree = [k for k, v in cell.items() if CLAIMED_ENCODABLE[k] is not None and v.encodable != CLAIMED_ENCODABLE[k]]
    unverified = [k for k, v in cell.items() if v.outcome == "encodable_witness" and not v.verified]
    named = [cell[("L3", "TransE", "a")].outcome == "infeasible_certificate",
             cell[("L3", "TransE", "b")].outcome == "encodable_witness"]
    named += [cell[("L1", k, c)].outcome == "encodable_witness" for k in ("TransE", "TransComplEx") for c in "bcd"]
    for lemma in ("L4", "L5", "L6"):
        for k in ("TransE", "TransComplEx"):
            named.append(cell[(lemma, k, "a")].outcome == "infeasible_certificate")
            named += [cell[(lemma, k, c)].outcome == "encodable_witness" for c in "bcd"]
    ok = not disagree and not unverified and all(named) and elapsed < 10
    n_witness = sum(v.outcome == "encodable_witness" for v in verdicts)
    acceptance("constructive lemma matrix", ok,
               f"{len(verdicts)} cells, {len(disagree)} disagreements, {n_witness} witnesses "
               f"({len(unverified)} unverified), {elapsed:.2f}s")
    assert ok


@pytest.mark.slow
def test_symmetric_training(acceptance):
    t0 = time.perf_counter()
    c = training_verdict("L3", "TransE", "c", seed=0)
    a = training_verdict("L3", "TransE", "a", seed=0)
    elapsed = time.perf_counter() - t0
    ec, ea = c.evidence, a.evidence
    c_ok = ec["heldout_hits1"] >= 0.9
    a_limited = ea["heldout_hits1"] < 0.9 or ea["relation_norm"] < 1e-3
    ok = c_ok and a_limited and elapsed < 120
    acceptance("symmetric pattern training", ok,
               f"loss c Hits@1 {ec['heldout_hits1']:.3f} |r| {ec['relation_norm']:.2e}; "
               f"loss a Hits@1 {ea['heldout_hits1']:.3f} |r| {ea['relation_norm']:.2e}; {elapsed:.1f}s")
    assert ok


# gradient oracle

N_SPECS, PER_SPEC, DIM, K = 10, 120, 3, 2
KINK = 1e-3
FD_STEP = 1e-5
# central differences resolve about ulp(loss) / FD_STEP ~ 1e-10, so relative error uses this denominator floor
REL_FLOOR = 1e-4


def _random_spec(condition, slack, rng):
    if condition == "d":
        return LossSpec("d", margin=float(rng.uniform(0.5, 3)))
    g1 = 0.0 if condition == "a" else float(rng.uniform(0.5, 3))
    g2 = g1 + float(rng.uniform(0.2, 2))
    lam = dict(lambda1=float(rng.uniform(0.2, 2)), lambda2=float(rng.uniform(0.2, 2)))
    if slack:
        return LossSpec(condition, g1, g2, lambda0=float(rng.uniform(0.1, 2)), use_slack=True, **lam)
    return LossSpec(condition, g1, g2, **lam)


def _oracle_block(kind, p, spec, rng):
    """Check one loss spec on PER_SPEC disjoint configurations at once.

    Configuration i owns entities 4i..4i+3 and relation i: positive (4i, i, 4i+1) with negatives
    (4i+2, i, 4i+1) and (4i, i, 4i+3). Moving one coordinate in every block at once yields
    each configuration's finite difference from its own per-positive loss.
    """
    n = PER_SPEC
    mode = "real" if kind == "TransE" else "complex"
    ents = rng.uniform(-1.5, 1.5, size=(4 * n, DIM))
    rels = rng.uniform(-1.5, 1.5, size=(n, DIM))
    if mode == "complex":
        ents = ents + 1j * rng.uniform(-1.5, 1.5, size=(4 * n, DIM))
        rels = rels + 1j * rng.uniform(-1.5, 1.5, size=(n, DIM))
    i = np.arange(n)
    pos = np.stack([4 * i, i, 4 * i + 1], axis=1)
    neg = np.stack([np.stack([4 * i + 2, i, 4 * i + 1], 1), np.stack([4 * i, i, 4 * i + 3], 1)], axis=1)
    store = TripleStore([tuple(t) for t in pos.tolist()], (), (), 4 * n, n)
    model = ScoreModel(kind, p, EmbeddingTable(ents, rels, mode))
    trainer = Trainer(model, store, TrainConfig(dim=DIM, neg_per_pos=K, loss=spec))
    if spec.use_slack:
        trainer.slack[:] = rng.uniform(0.05, 1.0, size=n)

    E, R = model.table.entities, model.table.relations
    f_pos, *_ = score_and_grad_from_rows(E[pos[:, 0]], R[pos[:, 1]], E[pos[:, 2]], kind, p)
    flat = neg.reshape(-1, 3)
    f_neg, *_ = score_and_grad_from_rows(E[flat[:, 0]], R[flat[:, 1]], E[flat[:, 2]], kind, p)
    f_neg = f_neg.reshape(n, K)
    xi = trainer.slack if spec.use_slack else np.zeros(n)
    # distance of every configuration to the nearest non-differentiable point
    if spec.condition == "d":
        gaps = [f_pos[:, None] + spec.margin - f_neg]
    else:
        gaps = [(f_pos - spec.gamma1)[:, None], spec.gamma2 - f_neg - xi[:, None]]
    all_triples = np.concatenate([pos[:, None, :], neg], axis=1).reshape(-1, 3)
    eps = translation_residual(E[all_triples[:, 0]], R[all_triples[:, 1]], E[all_triples[:, 2]], kind).reshape(n, -1)
    dist = np.min(np.concatenate([np.abs(g) for g in gaps], axis=1), axis=1)
    if p == "L1":
        coords = np.abs(eps.real) if mode == "real" else np.minimum(np.abs(eps.real), np.abs(eps.imag))
        dist = np.minimum(dist, coords.min(axis=1))
    else:
        dist = np.minimum(dist, norm(eps.reshape(n, -1, DIM), "L2").min(axis=1))
    keep = dist > KINK

    idx = np.arange(n)
    _, _, ent_grad, rel_grad, d_xi = trainer.batch_terms(pos, neg, idx)

    def losses():
        return trainer.batch_terms(pos, neg, idx)[0]

    worst = 0.0
    parts = ["real", "imag"] if mode == "complex" else ["real"]
    targets = [(E, 4, ent_grad, j) for j in range(4)] + [(R, 1, rel_grad, 0)]
    for arr, stride, grad, offset in targets:
        rows_of = stride * idx + offset
        for part in parts:
            for c in range(DIM):
                view = arr.real if part == "real" else arr.imag
                if not np.iscomplexobj(arr):
                    view = arr
                base = view[rows_of, c].copy()
                view[rows_of, c] = base + FD_STEP
                up = losses()
                view[rows_of, c] = base - FD_STEP
                down = losses()
                view[rows_of, c] = base
                fd = (up - down) / (2 * FD_STEP)
                an = (grad.real if part == "real" else grad.imag)[rows_of, c]
                err = np.abs(fd - an) / np.maximum(np.maximum(np.abs(fd), np.abs(an)), REL_FLOOR)
                worst = max(worst, float(err[keep].max(initial=0.0)))
    if spec.use_slack:
        base = trainer.slack.copy()
        trainer.slack[:] = base + FD_STEP
        up = losses()
        trainer.slack[:] = base - FD_STEP
        down = losses()
        trainer.slack[:] = base
        fd = (up - down) / (2 * FD_STEP)
        err = np.abs(fd - d_xi) / np.maximum(np.maximum(np.abs(fd), np.abs(d_xi)), REL_FLOOR)
        worst = max(worst, float(err[keep].max(initial=0.0)))
    return worst, int(keep.sum())


LOSS_VARIANTS = [("a", False), ("b", False), ("c", False), ("c", True), ("b", True), ("d", False)]


def test_gradient_oracle(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    results = []
    for kind in ("TransE", "TransComplEx"):
        for p in ("L1", "L2"):
            for cond, slack in LOSS_VARIANTS:
                worst, checked = 0.0, 0
                for _ in range(N_SPECS):
                    w, c = _oracle_block(kind, p, _random_spec(cond, slack, rng), rng)
                    worst, checked = max(worst, w), checked + c
                results.append((kind, p, cond + ("+slack" if slack else ""), worst, checked))
    elapsed = time.perf_counter() - t0
    worst = max(r[3] for r in results)
    fewest = min(r[4] for r in results)
    ok = worst <= 1e-4 and fewest >= 1000 and elapsed < 30
    acceptance("gradient oracle", ok, f"{len(results)} combinations, >= {fewest} configs each, "
                                      f"max rel err {worst:.1e}, {elapsed:.1f}s")
    assert ok, [r for r in results if r[3] > 1e-4 or r[4] < 1000]


def _brute_rank(model, store, q, side, protocol):
    true = model.score(q)
    less = equal = 0
    for e in range(store.n_entities):
        cand = (e, q[1], q[2]) if side == "head" else (q[0], q[1], e)
        if cand == tuple(q):
            continue
        if protocol == "filtered" and cand in store.known:
            continue
        s = model.score(cand)
        less += s < true
        equal += s == true
    return 1 + less + equal // 2


def test_ranking_oracle(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    mismatches = checked = 0
    for trial in range(50):
        store = random_store(rng, 20, 3, 80, 16)
        kind = ("TransE", "TransComplEx")[trial % 2]
        mode = "real" if kind == "TransE" else "complex"
        ents = rng.normal(size=(20, 4))
        rels = rng.normal(size=(3, 4))
        if mode == "complex":
            ents, rels = ents + 1j * rng.normal(size=(20, 4)), rels + 1j * rng.normal(size=(3, 4))
        if trial % 5 == 0:
            # coarse grid coordinates force exact score ties
            ents, rels = np.round(ents), np.round(rels)
        model = ScoreModel(kind, ("L1", "L2")[trial % 3 == 0], EmbeddingTable(ents, rels, mode))
        for protocol in ("filtered", "raw"):
            rep = evaluate(model, store, "test", protocol)
            for q, side, rank in rep.per_triple_ranks:
                checked += 1
                mismatches += rank != _brute_rank(model, store, tuple(q), side, protocol)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    acceptance("ranking oracle", ok, f"{checked} ranks on 50 KGs, {mismatches} mismatches, {elapsed:.2f}s")
    assert ok


def test_real_special_case(acceptance):
    rng = np.random.default_rng(5)
    n, d = 10_000, 16
    h, r, t = (rng.normal(size=(n, d)) for _ in range(3))
    zero = np.zeros((n, d))
    mismatched = 0
    for p in ("L1", "L2"):
        fe, *_ = score_and_grad_from_rows(h, r, t, "TransE", p)
        fc, *_ = score_and_grad_from_rows(h + 1j * zero, r + 1j * zero, t + 1j * zero, "TransComplEx", p)
        mismatched += int(np.count_nonzero(fe != fc))
        for spec in (LossSpec("c", 1.0, 2.0), LossSpec("a", 0.0, 2.0), LossSpec("d", margin=1.0)):
            le = pair_loss(spec, fe[: n // 2], fe[n // 2:].reshape(-1, 1))[0]
            lc = pair_loss(spec, fc[: n // 2], fc[n // 2:].reshape(-1, 1))[0]
            mismatched += int(np.count_nonzero(le != lc))
    ok = mismatched == 0
    acceptance("zero-imaginary special case", ok, f"{n} triples x 2 norms x 3 losses, {mismatched} inexact values")
    assert ok


def test_determinism(acceptance, tmp_path):
    cfg = RunConfig(train=str(UMLS / "train.tsv"), valid=str(UMLS / "valid.tsv"), test=str(UMLS / "test.tsv"),
                    kind="TransComplEx", norm="L2")
    cfg = cfg.with_training(dim=10, max_epochs=4, eval_every=2, batches_per_epoch=10, seed=17)
    assert cmd_train(cfg, tmp_path / "a") == 0
    assert cmd_train(cfg, tmp_path / "b") == 0
    a = (tmp_path / "a" / "checkpoint.tbc").read_bytes()
    b = (tmp_path / "b" / "checkpoint.tbc").read_bytes()
    ok = a == b
    acceptance("determinism", ok, f"two training runs, checkpoints {'identical' if ok else 'differ'} ({len(a)} bytes)")
    assert ok


# small-scale comparison on UMLS (5216 training triples)

UMLS_BUDGET = dict(dim=50, neg_per_pos=10, learning_rate=0.05, max_epochs=200, eval_every=20, patience=3, seed=0)
# best setting of each loss from equal-size offline grids on the same budget (scripts/umls_directional.py)
LOSS_C = LossSpec("c", 3.0, 4.0, lambda0=1.0, use_slack=True)
LOSS_D = LossSpec("d", margin=2.0)


def _umls_mrr(store, kind, spec):
    cfg = TrainConfig(loss=spec, **UMLS_BUDGET)
    result = fit(init_model(kind, "L2", store, cfg), store, cfg)
    return max(e["MRR"] for e in result.log)


@pytest.mark.slow
def test_umls_directional(acceptance):
    t0 = time.perf_counter()
    store, _ = TripleStore.from_files(UMLS / "train.tsv", UMLS / "valid.tsv", UMLS / "test.tsv")
    tce_c = _umls_mrr(store, "TransComplEx", LOSS_C)
    te_c = _umls_mrr(store, "TransE", LOSS_C)
    tce_d = _umls_mrr(store, "TransComplEx", LOSS_D)
    elapsed = time.perf_counter() - t0
    first, second = tce_c >= te_c - 0.01, tce_c >= tce_d - 0.01
    ok = first and second and elapsed < 900
    acceptance("UMLS directional check", ok,
               f"valid MRR TransComplEx-c {tce_c:.4f}, TransE-c {te_c:.4f}, TransComplEx-d {tce_d:.4f}; "
               f"(i) {'ok' if first else 'fails'}, (ii) {'ok' if second else 'fails'}; {elapsed:.0f}s")
    assert ok
