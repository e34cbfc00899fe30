"""Accuracy, errors and column sparsity of IALAM and the SGD baselines on
MNIST, aggregated over seeds.

Desk scale (default): N=1000, hidden 100-50, seeds 0..2, every solver sharing
the same seed and data subset. ``--full`` switches to N=60000, N_test=10000
with one hidden layer of 500 units; that run needs the complete MNIST files
and many hours per seed.

    python scripts/mnist_table.py --mnist-dir data/mnist --outdir out/mnist
"""
import argparse
import csv
import json
import logging
from pathlib import Path

from ialam.cli import SOLVERS, aggregate, parse_config, run_one

COLUMNS = ("TrainErr", "TestErr", "Accuracy", "TestAcc")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mnist-dir", required=True)
    ap.add_argument("--outdir", default="out/mnist")
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--N-test", type=int)
    ap.add_argument("--hidden", type=int, nargs="+", default=[100, 50])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--solvers", nargs="+", choices=SOLVERS,
                    default=["ialam", "sgd", "adam", "adadelta", "proxsgd"])
    ap.add_argument("--ialam-budget-s", type=float, help="wall-time budget per IALAM run")
    ap.add_argument("--full", action="store_true", help="N=60000, N_test=10000, hidden 500")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    if args.full:
        args.N, args.N_test, args.hidden = 60000, 10000, [500]

    out = Path(args.outdir)
    rows = []
    for solver in args.solvers:
        raw = {"dataset": {"kind": "mnist", "N": args.N, "dir": args.mnist_dir},
               "hidden": args.hidden, "solver": solver}
        if args.N_test:
            raw["dataset"]["N_test"] = args.N_test
        if solver == "ialam" and args.ialam_budget_s:
            raw["ialam"] = {"max_wall_s": args.ialam_budget_s}
        cfg = parse_config(raw)
        runs = []
        for seed in args.seeds:
            s = run_one(cfg, seed, out / solver)
            logging.info("%s seed %d: Accuracy %.4f, %.0f s", solver, seed,
                         s["metrics"]["Accuracy"], s["wall_time_s"])
            runs.append(s)
        agg = aggregate(runs)
        sparsity = [r["metrics"]["sparsity"]["0.001"] for r in runs if r["status"] == "ok"]
        rows.append([solver] + [agg[c]["text"] if c in agg else "" for c in COLUMNS]
                    + [f"{sum(sparsity) / max(len(sparsity), 1):.3f}"])
        with open(out / solver / "runs.json", "w") as fh:
            json.dump(runs, fh, indent=2, default=float)

    header = ["solver", *COLUMNS, "sparsity@1e-3"]
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    for r in [header, *rows]:
        print("  ".join(str(x).ljust(n) for x, n in zip(r, widths)))


if __name__ == "__main__":
    main()
