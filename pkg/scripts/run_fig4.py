"""ICA compression-ratio curve m / d^4 with m = ceil(C d^2)."""
import argparse

from cskl.analysis import ica_compression_curve


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--dmax", type=int, default=20)
    p.add_argument("--out", default="fig4.csv")
    args = p.parse_args()
    rep = ica_compression_curve(range(2, args.dmax + 1), args.C)
    rep.to_csv(args.out)
    for r in rep.rows:
        print(f"d={r['d']:3d}  m={r['m']:5d}  ratio={r['ratio']:.3e}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
