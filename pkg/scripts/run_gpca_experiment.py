"""Compressive GPCA on a noisy union of subspaces."""
import argparse

import numpy as np

from cskl.decode import decode_low_rank
from cskl.models import clustering_error, gpca_cluster, gpca_polynomials
from cskl.sketch import MATRIX, make_operator, sketch_stream
from cskl.statistics import embedded_correlation, veronese_dim
from cskl.synth import GenSpec, gen_subspaces


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--dims", default="1,1")
    p.add_argument("--N", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--C", type=float, default=6.0)
    p.add_argument("--trials", type=int, default=5)
    args = p.parse_args()
    dims = [int(v) for v in args.dims.split(",")]
    n = len(dims)
    D = veronese_dim(n, args.d)
    for s in range(args.trials):
        X, labels, _ = gen_subspaces(GenSpec(seed=s, model="subspaces", d=args.d, N=args.N, n=n, dims=dims, noise=args.noise))
        ev = np.linalg.eigvalsh(embedded_correlation(X, n))
        R = int((ev > 1e-3 * ev.max()).sum())
        m = int(np.ceil(args.C * D * R))
        op = make_operator(MATRIX, 1000 + s, m, D)
        corr = decode_low_rank(op, sketch_stream(op, X, "gpca", degree=n)).matrix
        h = gpca_cluster(X, gpca_polynomials(corr, n, rank_tol=1e-3), n, dims)
        print(f"trial {s}: D={D} R={R} m={m}  clustering error={clustering_error(h.labels, labels):.4f}")


if __name__ == "__main__":
    main()
