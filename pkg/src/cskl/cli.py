"""``cskl`` command line: gen -> sketch -> decode -> solve, plus analyze.

Option precedence: command-line flag > ``--config`` file (flat key=value) >
built-in default.  ``--threads`` falls back to ``$CSKL_THREADS``.

Exit codes: 0 success, 2 usage / invalid parameters, 3 decoder did not
converge (outputs are still written), 4 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .analysis import estimate_constant, gpca_phase_diagram, ica_compression_curve
from .decode import DecodeOptions, DiagonalizableTensor, decode_ica, decode_low_rank
from .errors import CsklError, FingerprintMismatch, FormatError, NoConvergence
from .models import direct_ica, gpca_cluster, gpca_polynomials, ica_extract, pca_extract
from .sketch import MATRIX, TENSOR, make_operator, merge_sketches, sketch_stream
from .statistics import fit_whitener_stream, veronese_dim
from .synth import GenSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("cskl")


class UsageError(Exception):
    pass


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def int_list(text: str) -> list:
    return [int(v) for v in str(text).split(",") if v.strip()]


def int_range(text: str) -> list:
    """``"2..20"`` (inclusive) or a comma list."""
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return int_list(text)


def _summary(cmd: str, model, m, residual, started: float) -> None:
    res = "nan" if residual is None else f"{residual:.6e}"
    print(f"cskl {cmd}: model={model} m={m} residual={res} time={time.perf_counter() - started:.3f}s")


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("CSKL_THREADS")
    return max(1, int(env)) if env else 1


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config") and v is not None}


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    started = time.perf_counter()
    for name in ("model", "d", "N", "out"):
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required")
    if args.model == "subspaces":
        dims = args.dims if args.dims is not None else [1] * args.n
        spec = GenSpec(args.seed, "subspaces", args.d, args.N, n=args.n, dims=dims, noise=args.noise)
    elif args.model == "ica":
        spec = GenSpec(args.seed, "ica", args.d, args.N, sources=args.sources.split(","))
    else:
        spec = GenSpec(args.seed, "gaussian", args.d, args.N)
    X, truth = generate(spec)
    out = Path(args.out)
    config = _echo(args)
    if args.format == "cskl":
        io.write_matrix(out, X)
    else:
        io.write_csv(out, X, config)
    io.write_json(str(out) + ".truth.json", {"config": config, **truth})
    _summary("gen", args.model, None, None, started)
    return EXIT_OK


def _stream(args):
    if args.chunk:
        with open(args.input, "rb") as fh:
            binary = fh.read(4) == io.MAGIC
        if not binary:
            return lambda: io.iter_csv(args.input, args.chunk, header=args.header)
        x = io.read_matrix(args.input)
        return lambda: (x[i : i + args.chunk] for i in range(0, x.shape[0], args.chunk))
    x = io.read_data(args.input, header=args.header)
    return lambda: iter([x])


def cmd_sketch(args) -> int:
    started = time.perf_counter()
    for name in ("model", "input", "m", "out"):
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('input', 'in')} is required")
    chunks = _stream(args)
    first = next(iter(chunks()))
    d = first.shape[1]
    whitener = None
    meta = {"d": d}
    if args.model == "ica":
        op = make_operator(TENSOR, args.seed, args.m, d)
        whitener = fit_whitener_stream(chunks())
        wpath = str(args.out) + ".whitener.cskl"
        io.write_whitener(wpath, whitener)
        meta["whitener"] = os.path.basename(wpath)
    elif args.model == "gpca":
        if args.degree is None:
            raise UsageError("--degree is required for gpca")
        op = make_operator(MATRIX, args.seed, args.m, veronese_dim(args.degree, d))
    else:
        op = make_operator(MATRIX, args.seed, args.m, d)
    degree = args.degree if args.model == "gpca" else None
    sk = None
    for chunk in chunks():
        part = sketch_stream(op, chunk, args.model, whitener=whitener, degree=degree)
        sk = part if sk is None else merge_sketches(sk, part)
    sk.meta = meta
    io.write_sketch(args.out, sk, _echo(args))
    _summary("sketch", args.model, args.m, None, started)
    return EXIT_OK


def _write_log(path, history) -> None:
    with open(path, "w") as fh:
        if history and len(history[0]) == 3:
            fh.write("iteration,objective,residual\n")
            for it, obj, res in history:
                fh.write(f"{it},{obj!r},{res!r}\n")
        else:
            fh.write("iteration,objective,residual\n")
            for it, obj in history:
                fh.write(f"{it},{obj!r},{math.sqrt(max(obj, 0.0))!r}\n")


def cmd_decode(args) -> int:
    started = time.perf_counter()
    for name in ("sketch", "out"):
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required")
    sk = io.read_sketch(args.sketch)
    kind, seed, m, ambient = sk.fingerprint
    if args.model is not None:
        expected = TENSOR if args.model == "ica" else MATRIX
        if kind != expected or (sk.model is not None and sk.model != args.model):
            raise FingerprintMismatch(f"sketch is {sk.model}/{kind}, decode requested {args.model}")
    op = make_operator(kind, seed, m, ambient)
    opts = DecodeOptions(
        max_iters=args.max_iters, tol=args.tol, restarts=args.restarts, seed=args.seed, threads=_threads(args)
    )
    side = {"config": _echo(args), "sketch": os.path.abspath(args.sketch), "model": sk.model,
            "degree": sk.degree, "n_samples": sk.n_samples, "meta": sk.meta}
    if kind == TENSOR:
        res = decode_ica(op, sk, opts)
        io.write_matrix(args.out, res.tensor.dense())
        side.update(Q=res.tensor.Q, kappa=res.tensor.kappa, stationary=res.stationary)
    else:
        res = decode_low_rank(op, sk, opts)
        io.write_matrix(args.out, res.matrix)
    side.update(residual=res.residual, relative_residual=res.relative_residual,
                iterations=res.iterations, converged=res.converged)
    io.write_json(str(args.out) + ".json", side)
    if args.log:
        _write_log(args.log, res.history)
    _summary("decode", sk.model, m, res.residual, started)
    if not res.converged:
        print(f"cskl decode: did not converge (relative residual {res.relative_residual:.3e})", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def _sidecar(path) -> dict:
    p = Path(str(path) + ".json")
    if not p.exists():
        return {}
    return json.loads(p.read_text())


def cmd_solve(args) -> int:
    started = time.perf_counter()
    for name in ("stat", "model", "out"):
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required")
    stat = io.read_matrix(args.stat)
    side = _sidecar(args.stat)
    doc = {"model": args.model, "config": _echo(args)}
    if args.model == "ica":
        if stat.ndim != 4:
            raise FormatError("ica solve needs a rank-4 statistic")
        if "Q" in side:
            t = DiagonalizableTensor(np.asarray(side["Q"]), np.asarray(side["kappa"]))
        else:
            t = direct_ica(stat)
        wname = side.get("meta", {}).get("whitener")
        if args.whitener:
            w = io.read_whitener(args.whitener)
        elif wname:
            w = io.read_whitener(Path(side["sketch"]).parent / wname)
        else:
            raise UsageError("ica solve needs --whitener (or a decode sidecar naming one)")
        h = ica_extract(t, w, side.get("n_samples") or None)
        doc.update(unmixing=h.unmixing, kappa=h.kappa, identifiable=h.identifiable, noise_floor=h.noise_floor)
    elif args.model == "gpca":
        if stat.ndim != 2:
            raise FormatError("gpca solve needs a rank-2 statistic")
        degree = args.n or side.get("degree")
        if degree is None:
            raise UsageError("--n is required for gpca")
        polys = gpca_polynomials(stat, degree, args.rank_tol)
        doc.update(degree=degree, polynomials=polys, n_polynomials=int(polys.shape[0]))
        if args.data:
            x = io.read_data(args.data, header=args.header)
            dims = args.dims if args.dims is not None else [1] * degree
            h = gpca_cluster(x, polys, degree, dims)
            doc.update(bases=h.bases, labels=h.labels)
    else:
        if args.k is None:
            raise UsageError("--k is required for pca")
        h = pca_extract(stat, args.k)
        doc.update(basis=h.basis, eigenvalues=h.eigenvalues, degenerate=h.degenerate)
    io.write_json(args.out, doc)
    _summary("solve", args.model, None, side.get("residual"), started)
    return EXIT_OK


def cmd_analyze(args) -> int:
    started = time.perf_counter()
    if args.out is None:
        raise UsageError("--out is required")
    provenance = "assumed"
    if str(args.C) == "estimate":
        model = "ica" if args.figure == "fig4" else "gpca"
        sizes = [2, 3, 4] if model == "ica" else [10, 15, 20]
        est = estimate_constant(model, sizes, target_error=args.target_error, trials=args.trials, seed=args.seed)
        C, provenance = est.C, "estimated"
        log.info("estimated C=%.4f (R^2=%.3f) from m_min=%s", est.C, est.r2, est.m_min)
    else:
        C = float(args.C)
    if args.figure == "fig4":
        report = ica_compression_curve(args.d or list(range(2, 21)), C, provenance)
    else:
        report = gpca_phase_diagram(
            args.n or list(range(1, 13)), args.d or list(range(1, 21)), args.N, C, args.rank_frac, provenance
        )
    report.to_csv(args.out)
    if args.gnuplot:
        Path(args.gnuplot).write_text(report.gnuplot_script(os.path.basename(args.out)))
    _summary("analyze", args.figure, None, None, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cskl", description="Compressive semi-parametric learning from sketches.")
    p.add_argument("--config", help="flat key=value file supplying option defaults")
    p.add_argument("--threads", type=positive_int, help="worker cap (default: $CSKL_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic data with ground truth")
    g.add_argument("--model", choices=["ica", "subspaces", "gaussian"])
    g.add_argument("--d", type=positive_int)
    g.add_argument("--n", type=positive_int, default=2, help="number of subspaces")
    g.add_argument("--N", type=positive_int)
    g.add_argument("--dims", type=int_list)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--sources", default="uniform", help="comma list of source kinds (ica)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--format", choices=["csv", "cskl"], default="csv")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("sketch", help="sketch a data file")
    s.add_argument("--model", choices=["ica", "gpca", "pca"])
    s.add_argument("--in", dest="input")
    s.add_argument("--m", type=positive_int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--degree", type=positive_int)
    s.add_argument("--chunk", type=positive_int, help="stream the file in blocks of this many rows")
    s.add_argument("--header", action="store_true", help="skip one header line in CSV input")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sketch)

    dcd = sub.add_parser("decode", help="decode a statistic from a sketch")
    dcd.add_argument("--sketch")
    dcd.add_argument("--model", choices=["ica", "gpca", "pca"], help="expected model; mismatch is an error")
    dcd.add_argument("--tol", type=float, default=1e-6)
    dcd.add_argument("--max-iters", type=positive_int, default=5000)
    dcd.add_argument("--restarts", type=positive_int, default=8)
    dcd.add_argument("--seed", type=int, default=0)
    dcd.add_argument("--log", help="write the convergence log as CSV")
    dcd.add_argument("--out")
    dcd.set_defaults(func=cmd_decode)

    sv = sub.add_parser("solve", help="extract a hypothesis from a statistic")
    sv.add_argument("--stat")
    sv.add_argument("--model", choices=["ica", "gpca", "pca"])
    sv.add_argument("--k", type=positive_int)
    sv.add_argument("--n", type=positive_int, help="number of subspaces (Veronese degree)")
    sv.add_argument("--dims", type=int_list)
    sv.add_argument("--data", help="data file to segment (gpca)")
    sv.add_argument("--header", action="store_true")
    sv.add_argument("--whitener", help="whitener file (ica); defaults to the one recorded by sketch")
    sv.add_argument("--rank-tol", type=float, default=1e-6)
    sv.add_argument("--out")
    sv.set_defaults(func=cmd_solve)

    a = sub.add_parser("analyze", help="compression-ratio figures as CSV")
    a.add_argument("figure", choices=["fig4", "fig5"])
    a.add_argument("--C", default="1", help="sketch-size constant, or 'estimate'")
    a.add_argument("--d", type=int_range)
    a.add_argument("--n", type=int_range)
    a.add_argument("--N", type=positive_int, default=10_000_000)
    a.add_argument("--rank-frac", type=float, default=0.05)
    a.add_argument("--trials", type=positive_int, default=10)
    a.add_argument("--target-error", type=float, default=1e-3)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--gnuplot", help="also write a gnuplot script")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)
    return p


def parse_args(argv=None):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = io.load_config(known.config)
        parser.set_defaults(**cfg)
        for action in parser._subparsers._group_actions:
            for subparser in action.choices.values():
                subparser.set_defaults(**cfg)
    return parser, parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        parser, args = parse_args(argv)
    except FormatError as exc:
        print(f"cskl: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"cskl: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cskl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoConvergence as exc:
        print(f"cskl {args.command}: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (FormatError, FingerprintMismatch, OSError) as exc:
        print(f"cskl {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CsklError, ValueError) as exc:
        print(f"cskl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
