"""Command-line entry points: train, evaluate, lemma-check, ground-rules, sweep.

Exit codes: 0 success, 1 a constructive witness failed re-verification,
2 configuration or input error, 3 numeric failure during training.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .algebra import atomic_write_bytes, load_checkpoint, save_checkpoint
from .config import (
    ConfigValidationError,
    RunConfig,
    leaderboard_order,
    load_config,
    match_preset,
    render_config,
    sweep_grid,
)
from .data import ParseError, TripleStore, UnsupportedRuleError, Vocabulary, VocabularyError, ground_rules, load_rules
from .evaluation import PROTOCOLS, evaluate
from .lemmas import LEMMAS, format_matrix, run_lemma_suite
from .losses import RegularizerSpec
from .scoring import KINDS, MODE_FOR_KIND, ScoreModel
from .training import NumericError, Trainer, fit, init_model

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT = "checkpoint.tbc"

log = logging.getLogger("transbound")


def _write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def load_store(cfg: RunConfig, vocab: Vocabulary | None = None) -> tuple[TripleStore, Vocabulary]:
    return TripleStore.from_files(cfg.train, cfg.valid or None, cfg.test or None, vocab)


def build_regularizers(cfg: RunConfig, store: TripleStore, vocab: Vocabulary) -> list:
    weights = cfg.training.reg_weights
    if not cfg.rules or not any(w > 0 for w in weights.values()):
        return []
    rules = load_rules(cfg.rules, vocab, cfg.min_confidence)
    return [RegularizerSpec(g, weights.get(g.rule.kind.value, 0.0)) for g in ground_rules(rules, store.train)
            if weights.get(g.rule.kind.value, 0.0) > 0]


def run_training(cfg: RunConfig, out: Path) -> dict:
    """Fit one configuration and write checkpoint, log, effective config and vocabulary into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    store, vocab = load_store(cfg)
    regs = build_regularizers(cfg, store, vocab)
    _write_text(out / "effective_config.ini", render_config(cfg))
    _write_json(out / "vocab.json", vocab.to_dict())
    model = init_model(cfg.kind, cfg.norm, store, cfg.training)
    with open(out / "train_log.jsonl", "w") as log_stream:
        if store.valid:
            result = fit(model, store, cfg.training, regs, log_stream=log_stream)
        else:
            # no validation split: train for max_epochs and keep the final table
            trainer = Trainer(model, store, cfg.training, regs)
            for _ in range(cfg.training.max_epochs):
                trainer.train_epoch()
            result = None
    table = result.best if result is not None else model.table
    table.meta = {"kind": cfg.kind, "norm": cfg.norm}
    save_checkpoint(out / CHECKPOINT, table)
    best = max(result.log, key=lambda e: e["MRR"]) if result is not None and result.log else {}
    summary = {
        "best_epoch": result.best_epoch if result is not None else cfg.training.max_epochs,
        "epochs_run": result.epochs_run if result is not None else cfg.training.max_epochs,
        "MRR": best.get("MRR"),
        "MR": best.get("MR"),
        "hits10": best.get("hits10"),
        "presets": match_preset(cfg),
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_train(config, out, preset=None, seed=None) -> int:
    try:
        cfg = config if isinstance(config, RunConfig) else load_config(config, preset, seed)
        summary = run_training(cfg, Path(out))
    except (ConfigValidationError, ParseError, VocabularyError, UnsupportedRuleError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except NumericError as exc:
        _err(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    if summary["MRR"] is not None:
        print(f"best epoch {summary['best_epoch']}: MR {summary['MR']:.1f} MRR {summary['MRR']:.3f} "
              f"Hits@10 {summary['hits10']:.3f}")
    return EXIT_OK


def cmd_evaluate(checkpoint, config, out, protocol=None, split="test", preset=None) -> int:
    try:
        cfg = config if isinstance(config, RunConfig) else load_config(config, preset)
        table = load_checkpoint(checkpoint)
        vocab_path = Path(checkpoint).with_name("vocab.json")
        vocab = Vocabulary.from_dict(json.loads(vocab_path.read_text())) if vocab_path.exists() else None
        store, vocab = load_store(cfg, vocab)
        kind = table.meta.get("kind", cfg.kind)
        nrm = table.meta.get("norm", cfg.norm)
        if table.mode != MODE_FOR_KIND[kind]:
            raise ConfigValidationError([f"checkpoint mode {table.mode} does not fit {kind}"])
        if table.n_entities != store.n_entities or table.n_relations != store.n_relations:
            raise ConfigValidationError([
                f"checkpoint holds {table.n_entities} entities / {table.n_relations} relations, "
                f"data has {store.n_entities} / {store.n_relations}"
            ])
        if cfg.training.dim != table.dim:
            log.warning("config dim %d differs from checkpoint dim %d; using the checkpoint", cfg.training.dim,
                        table.dim)
        protocol = protocol or cfg.protocol
        if protocol not in PROTOCOLS:
            raise ConfigValidationError([f"--protocol: must be one of {', '.join(PROTOCOLS)}"])
        report = evaluate(ScoreModel(kind, nrm, table), store, split, protocol, cfg.ties)
    except (ConfigValidationError, ParseError, VocabularyError, OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "report.json", report.to_json())
    name = f"{kind} ({protocol})" if protocol != "filtered" else kind
    _write_text(out / "report.txt", report.table(name) + "\n")
    if protocol != "filtered":
        print(f"[{protocol} protocol]")
    print(report.summary_line())
    return EXIT_OK


def _split_arg(values, allowed, what):
    if values is None:
        return list(allowed)
    items = [v for chunk in values for v in chunk.split(",") if v]
    bad = [v for v in items if v not in allowed]
    if bad:
        raise ConfigValidationError([f"--{what}: invalid value(s) {', '.join(bad)} (allowed: {', '.join(allowed)})"])
    return items


def cmd_lemma_check(out=None, lemmas=None, models=None, conditions=None, mode="constructive", seed=0) -> int:
    try:
        ls = _split_arg(lemmas, LEMMAS, "lemmas")
        ms = _split_arg(models, KINDS, "models")
        cs = _split_arg(conditions, tuple("abcd"), "conditions")
        if mode not in ("constructive", "training"):
            raise ConfigValidationError([f"--mode: must be constructive or training, got {mode!r}"])
    except ConfigValidationError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    verdicts = [run_lemma_suite(l, m, c, mode, seed=seed) for l in ls for m in ms for c in cs]
    text = format_matrix(verdicts)
    print(text)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "verdicts.json", [v.to_dict() for v in verdicts])
        _write_text(out / "verdicts.txt", text + "\n")
    failed = [v for v in verdicts if v.outcome == "encodable_witness" and not v.verified]
    for v in failed:
        _err(f"witness failed re-verification: {v.lemma} {v.model} {v.condition}: {v.evidence.get('problems')}")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_ground_rules(config, out=None, preset=None) -> int:
    try:
        cfg = config if isinstance(config, RunConfig) else load_config(config, preset)
        if not cfg.rules:
            raise ConfigValidationError(["[data] rules: a rules path is required"])
        store, vocab = load_store(cfg)
        rules = load_rules(cfg.rules, vocab, cfg.min_confidence)
        grounded = ground_rules(rules, store.train)
    except (ConfigValidationError, ParseError, VocabularyError, UnsupportedRuleError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    rows = []
    for g in grounded:
        names = [vocab.id_to_relation[r] for r in g.rule.relations]
        rows.append({"kind": g.rule.kind.value, "relations": names, "confidence": g.rule.confidence,
                     "instances": len(g.instances)})
    summary = {"kept": len(rules), "dropped": rules.dropped, "dropped_by_kind": rules.dropped_by_kind,
               "grounded": rows}
    for r in rows:
        print(f"{r['kind']:<12} {' '.join(r['relations'])}  conf {r['confidence']:.2f}  instances {r['instances']}")
    print(f"kept {len(rules)} rule(s), dropped {rules.dropped} below confidence {cfg.min_confidence}")
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        _write_json(Path(out) / "grounded_rules.json", summary)
    return EXIT_OK


def _sweep_worker(args):
    i, cfg, out = args
    row = {"run": i, "gamma1": cfg.loss.gamma1, "gamma2": cfg.loss.gamma2, "lambda0": cfg.loss.lambda0,
           "margin": cfg.loss.margin, "dim": cfg.training.dim, "neg_per_pos": cfg.training.neg_per_pos,
           "learning_rate": cfg.training.learning_rate, "dir": str(out)}
    try:
        s = run_training(cfg, Path(out))
        row.update(MRR=s["MRR"], MR=s["MR"], hits10=s["hits10"], best_epoch=s["best_epoch"], status="ok")
    except Exception as exc:  # noqa: BLE001 - a failed run is recorded, the sweep continues
        row.update(MRR=None, MR=None, status=f"failed: {type(exc).__name__}: {exc}")
    return row


def cmd_sweep(config, out, preset=None, seed=None, workers: int = 1) -> int:
    try:
        cfg = config if isinstance(config, RunConfig) else load_config(config, preset, seed)
        runs = sweep_grid(cfg)
    except ConfigValidationError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, run, out / f"run_{i:03d}") for i, run in enumerate(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]
    board = leaderboard_order(rows)
    _write_json(out / "leaderboard.json", board)
    lines = [f"{'run':>4} {'gamma1':>7} {'gamma2':>7} {'lambda0':>8} {'MR':>8} {'MRR':>6}  status"]
    for r in board:
        mr = f"{r['MR']:.1f}" if r["MR"] is not None else "-"
        mrr = f"{r['MRR']:.3f}" if r["MRR"] is not None else "-"
        lines.append(f"{r['run']:>4} {r['gamma1']:>7g} {r['gamma2']:>7g} {r['lambda0']:>8g} {mr:>8} {mrr:>6}  "
                     f"{r['status']}")
    _write_text(out / "leaderboard.txt", "\n".join(lines) + "\n")
    print("\n".join(lines[:11]))
    print(f"{len(rows)} run(s), {sum(r['status'] != 'ok' for r in rows)} failed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transbound", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="INI run config")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--preset", help="named preset applied beneath the config file")

    t = sub.add_parser("train", help="fit a model with early stopping")
    common(t)
    t.add_argument("--seed", type=int)
    e = sub.add_parser("evaluate", help="rank a split with a checkpoint")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--protocol", choices=PROTOCOLS)
    e.add_argument("--split", default="test", choices=("train", "valid", "test"))
    lc = sub.add_parser("lemma-check", help="verdict matrix over lemmas x models x conditions")
    lc.add_argument("--out")
    lc.add_argument("--lemmas", action="append")
    lc.add_argument("--models", action="append")
    lc.add_argument("--conditions", action="append")
    lc.add_argument("--mode", default="constructive")
    lc.add_argument("--seed", type=int, default=0)
    g = sub.add_parser("ground-rules", help="load, filter and ground pattern rules")
    common(g)
    s = sub.add_parser("sweep", help="grid search over the [sweep] section")
    common(s)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = args.out if getattr(args, "out", None) else "."
    if args.verb == "train":
        return cmd_train(args.config, out, args.preset, args.seed)
    if args.verb == "evaluate":
        return cmd_evaluate(args.checkpoint, args.config, out, args.protocol, args.split, args.preset)
    if args.verb == "lemma-check":
        return cmd_lemma_check(args.out, args.lemmas, args.models, args.conditions, args.mode, args.seed)
    if args.verb == "ground-rules":
        return cmd_ground_rules(args.config, args.out, args.preset)
    return cmd_sweep(args.config, out, args.preset, args.seed, args.workers)


if __name__ == "__main__":
    sys.exit(main())
