"""GPCA phase diagram: where is the sketch smaller than the data?"""
import argparse

from cskl.analysis import gpca_phase_diagram, is_lower_set


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--N", type=int, default=10_000_000)
    p.add_argument("--C", type=float, default=6.0)
    p.add_argument("--rank-frac", type=float, default=0.05)
    p.add_argument("--nmax", type=int, default=12)
    p.add_argument("--dmax", type=int, default=20)
    p.add_argument("--out", default="fig5.csv")
    args = p.parse_args()
    rep = gpca_phase_diagram(range(1, args.nmax + 1), range(1, args.dmax + 1), args.N, args.C, args.rank_frac)
    rep.to_csv(args.out)
    grid = {(r["n"], r["d"]): r["compressed"] for r in rep.rows}
    print("n\\d " + "".join(f"{d:3d}" for d in range(1, args.dmax + 1)))
    for n in range(1, args.nmax + 1):
        print(f"{n:3d} " + "".join("  #" if grid[n, d] else "  ." for d in range(1, args.dmax + 1)))
    print(f"lower set: {is_lower_set(rep.rows)}; wrote {args.out}")


if __name__ == "__main__":
    main()
