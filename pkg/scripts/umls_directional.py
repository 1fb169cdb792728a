"""Small-scale comparison on UMLS: TransComplEx vs TransE under loss c, and loss c vs loss d.

Every run uses d=50, 10 negatives per positive, Adagrad lr 0.05, at most 200 epochs with
validation MRR checked every 20 (patience 3). The grid flags widen the per-loss search.

    python scripts/umls_directional.py [--gammas 3:4 4:5] [--margins 2] [--models TransComplEx TransE]
"""
import argparse
import json
import time
from pathlib import Path

from transbound.data import TripleStore
from transbound.losses import LossSpec
from transbound.training import TrainConfig, fit, init_model

DATA = Path(__file__).resolve().parents[1] / "data" / "umls"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gammas", nargs="+", default=["3:4"], help="gamma1:gamma2 pairs for loss c")
    ap.add_argument("--margins", nargs="+", type=float, default=[2.0])
    ap.add_argument("--models", nargs="+", default=["TransComplEx", "TransE"])
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json")
    args = ap.parse_args()
    store, _ = TripleStore.from_files(DATA / "train.tsv", DATA / "valid.tsv", DATA / "test.tsv")
    specs = [LossSpec("c", *map(float, g.split(":"))) for g in args.gammas]
    specs += [LossSpec("d", margin=m) for m in args.margins]
    rows = []
    for kind in args.models:
        for spec in specs:
            cfg = TrainConfig(dim=50, neg_per_pos=10, learning_rate=0.05, max_epochs=args.epochs, eval_every=20,
                              patience=3, seed=args.seed, loss=spec)
            t0 = time.perf_counter()
            res = fit(init_model(kind, "L2", store, cfg), store, cfg)
            best = max(res.log, key=lambda e: e["MRR"])
            label = f"c {spec.gamma1:g}/{spec.gamma2:g}" if spec.condition == "c" else f"d m={spec.margin:g}"
            row = {"model": kind, "loss": label, "MRR": best["MRR"], "MR": best["MR"], "epoch": best["epoch"],
                   "seconds": round(time.perf_counter() - t0, 1)}
            rows.append(row)
            print(f"{kind:<13} {label:<12} MRR {row['MRR']:.4f} MR {row['MR']:.2f} epoch {row['epoch']:>4} "
                  f"{row['seconds']:>6.1f}s", flush=True)
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=1))


if __name__ == "__main__":
    main()
