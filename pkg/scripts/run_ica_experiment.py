"""Compressive ICA vs sketch size: Amari index over seeded trials."""
import argparse
import time

import numpy as np

from cskl.decode import DecodeOptions, decode_ica
from cskl.models import amari_index, ica_extract
from cskl.sketch import TENSOR, make_operator, sketch_stream
from cskl.statistics import fit_whitener
from cskl.synth import GenSpec, gen_ica


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--N", type=int, default=100_000)
    p.add_argument("--m", default="4,16,40,80,160", help="comma list of sketch sizes")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--sources", default="uniform")
    args = p.parse_args()
    for m in (int(v) for v in args.m.split(",")):
        scores = []
        t0 = time.perf_counter()
        for s in range(args.trials):
            X, q0, _ = gen_ica(GenSpec(seed=s, model="ica", d=args.d, N=args.N, sources=args.sources.split(",")))
            w = fit_whitener(X)
            op = make_operator(TENSOR, 100 + s, m, args.d)
            t = decode_ica(op, sketch_stream(op, X, "ica", whitener=w), DecodeOptions(seed=s)).tensor
            scores.append(amari_index(ica_extract(t, w).unmixing, q0))
        print(f"m={m:4d}  median Amari={np.median(scores):.4f}  max={np.max(scores):.4f}  "
              f"({(time.perf_counter() - t0) / args.trials:.2f}s/trial)")


if __name__ == "__main__":
    main()
