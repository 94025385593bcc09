#!/usr/bin/env python3
"""Sweep the prediction shift (0 = plain reconstruction) on one grid cell,
training frozen and fine-tuned classifiers from each pre-training."""

import argparse

from sparseseq.experiments import report, sweep_shift


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="shift_sweep.csv")
    parser.add_argument("--imbalance", default="1:20")
    parser.add_argument("--missing", type=float, default=0.3)
    parser.add_argument("--encoder", choices=["gru", "gru-d"], default="gru")
    parser.add_argument("--shifts", default="0,1,2,5")
    parser.add_argument("--runs", type=int, default=3)
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--preset", default="desk")
    parser.add_argument("--noise-std", type=float, default=1.0)
    args = parser.parse_args()

    table = sweep_shift(
        imbalance=args.imbalance, missing=args.missing, encoder=args.encoder,
        shifts=[int(s) for s in args.shifts.split(",")], runs=args.runs,
        master_seed=args.seed, preset=args.preset, workers=args.workers,
        out_path=args.out, noise_std=args.noise_std,
        log=lambda msg: print(msg, flush=True))
    print()
    print(report(table, "table"))
    return 1 if any(r["error"] for r in table.rows) else 0


if __name__ == "__main__":
    raise SystemExit(main())
