"""Empirical phase transition: minimal m for 80% exact recovery, then fit C."""
import argparse
import logging

from cskl.analysis import estimate_constant


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--model", choices=["gpca", "ica"], default="gpca")
    p.add_argument("--sizes", default=None, help="comma list; D for gpca, d for ica")
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--target-error", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else ([10, 15, 20] if args.model == "gpca" else [2, 3, 4])
    est = estimate_constant(args.model, sizes, args.target_error, args.trials, args.rank, args.seed)
    for row in est.rows():
        print(f"size={row['size']:3d}  x={row['x']:4d}  m_min={row['m_min']}")
    print(f"C = {est.C:.3f}  (R^2 = {est.r2:.3f})")


if __name__ == "__main__":
    main()
