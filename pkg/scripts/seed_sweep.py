"""Train one config over several seeds and tabulate best/final accuracies.

Usage:
    python scripts/seed_sweep.py scripts/configs/fc_mnist10.cfg --seeds 0 1 2
    python scripts/seed_sweep.py scripts/configs/det_mnist100.cfg --set det.window=-0.25,1

Each seed writes to ``<out-root>/seed_<n>``; extra ``--set`` overrides are
passed through to ``ising-ep train``.
"""

import argparse
import csv
import sys
from pathlib import Path

from ising_ep.cli import main as cli_main


def summarize(metrics_csv: Path) -> dict:
    with open(metrics_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    test = [float(r["test_acc"]) for r in rows]
    return {
        "epochs": len(rows),
        "final_train": float(rows[-1]["train_acc"]),
        "final_test": test[-1],
        "best_test": max(test),
        "best_epoch": int(rows[test.index(max(test))]["epoch"]),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out-root", type=Path, default=None, help="defaults to runs/sweep_<config stem>")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args(argv)
    root = args.out_root or Path("runs") / f"sweep_{args.config.stem}"
    results = {}
    for seed in args.seeds:
        out = root / f"seed_{seed}"
        cmd = ["train", "--config", str(args.config), "--seed", str(seed), "--out", str(out)]
        cmd += [a for kv in args.set for a in ("--set", kv)]
        if args.force:
            cmd.append("--force")
        code = cli_main(cmd)
        if code != 0:
            return code
        results[seed] = summarize(out / "metrics.csv")
    print(f"{'seed':>4} {'epochs':>6} {'train':>7} {'test':>7} {'best':>7} {'@epoch':>6}")
    for seed, r in results.items():
        print(f"{seed:>4} {r['epochs']:>6} {r['final_train']:>7.1f} {r['final_test']:>7.1f} "
              f"{r['best_test']:>7.1f} {r['best_epoch']:>6}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
