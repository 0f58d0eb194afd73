"""Compression-ratio curves and empirical sketch-size constants.

Sketch sizes follow ``m = ceil(C * d^2)`` for ICA and ``m = ceil(C * D * R)``
for GPCA.  All threshold arithmetic is done with exact rationals so that the
compressed / not-compressed split is exactly ``m < denominator``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import special_ortho_group

from .decode import DecodeOptions, decode_ica, decode_low_rank
from .errors import NoTransition, VeroneseOverflow
from .sketch import MATRIX, TENSOR, apply, make_operator
from .statistics import cumulant_from_sources, veronese_dim

log = logging.getLogger(__name__)


def _exact(x) -> Fraction:
    # shortest decimal repr, so 0.05 means 1/20 rather than its binary neighbour
    return Fraction(repr(float(x))) if not isinstance(x, (int, Fraction)) else Fraction(x)


@dataclass
class CompressionReport:
    figure: str
    rows: list
    constants: dict
    provenance: dict
    columns: list = field(default_factory=list)

    def to_csv(self, path, config: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for k, v in {**self.constants, **{f"{k}_provenance": v for k, v in self.provenance.items()}, **(config or {})}.items():
                fh.write(f"# {k}={v}\n")
            writer = csv.DictWriter(fh, fieldnames=self.columns)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row[k] for k in self.columns})

    def gnuplot_script(self, csv_path: str) -> str:
        if self.figure == "fig4":
            return (
                "set datafile separator ','\nset logscale xy\nset xlabel 'd'\nset ylabel 'm / d^4'\n"
                f"plot '{csv_path}' using 1:4 skip 1 with linespoints title 'compression ratio'\n"
            )
        return (
            "set datafile separator ','\nset xlabel 'd'\nset ylabel 'n'\nset palette defined (0 'red', 1 'green')\n"
            f"plot '{csv_path}' using 2:1:8 skip 1 with image title 'compressed'\n"
        )


def ica_compression_curve(d_range, C: float = 1.0, provenance: str = "assumed") -> CompressionReport:
    """Ratio ``m / d^4`` with ``m = ceil(C d^2)`` for each ``d`` in ``d_range``."""
    if not C > 0:
        raise ValueError("C must be positive")
    c = _exact(C)
    rows = []
    for d in d_range:
        d = int(d)
        m = math.ceil(c * d * d)
        size = d**4
        rows.append({"d": d, "m": m, "statistic_size": size, "ratio": m / size, "compressed": m < size})
    return CompressionReport(
        "fig4", rows, {"C": float(C)}, {"C": provenance}, ["d", "m", "statistic_size", "ratio", "compressed"]
    )


def gpca_phase_diagram(
    n_range,
    d_range,
    N: int = 10_000_000,
    C: float = 6.0,
    rank_fraction: float = 0.05,
    provenance: str = "assumed",
) -> CompressionReport:
    """Ratio ``m / (N d)`` over an ``(n, d)`` grid, ``m = ceil(C D R)``.

    ``D = veronese_dim(n, d)`` and ``R = max(1, ceil(rank_fraction * D))``.
    A cell is compressed iff ``m < N d``.  Cells whose ``D`` overflows are
    reported as not compressible with empty size fields.
    """
    if not 0 < rank_fraction <= 1:
        raise ValueError("rank_fraction must lie in (0, 1]")
    if not C > 0:
        raise ValueError("C must be positive")
    c = _exact(C)
    rf = _exact(rank_fraction)
    rows = []
    for n in n_range:
        for d in d_range:
            n, d = int(n), int(d)
            data_size = N * d
            try:
                D = veronese_dim(n, d)
            except VeroneseOverflow:
                rows.append({"n": n, "d": d, "D": "", "R": "", "m": "", "data_size": data_size, "ratio": math.inf, "compressed": False, "overflow": True})
                continue
            R = max(1, math.ceil(rf * D))
            m = math.ceil(c * D * R)
            rows.append({
                "n": n, "d": d, "D": D, "R": R, "m": m, "data_size": data_size,
                "ratio": m / data_size, "compressed": m < data_size, "overflow": False,
            })
    return CompressionReport(
        "fig5",
        rows,
        {"C": float(C), "N": N, "rank_fraction": float(rank_fraction)},
        {"C": provenance},
        ["n", "d", "D", "R", "m", "data_size", "ratio", "compressed", "overflow"],
    )


def is_lower_set(rows) -> bool:
    """True when compressed cells are closed under decreasing ``n`` and ``d``."""
    ok = {(r["n"], r["d"]) for r in rows if r["compressed"]}
    cells = {(r["n"], r["d"]) for r in rows}
    for n, d in ok:
        for n2, d2 in cells:
            if n2 <= n and d2 <= d and (n2, d2) not in ok:
                return False
    return True


# ---------------------------------------------------------------------------
# phase-transition sweeps


@dataclass
class ConstantEstimate:
    model: str
    C: float
    r2: float
    sizes: list
    x: list
    m_min: list
    target_error: float
    trials: int

    def rows(self) -> list:
        return [{"size": s, "x": x, "m_min": m} for s, x, m in zip(self.sizes, self.x, self.m_min)]


def _random_psd(rs: np.random.Generator, D: int, R: int) -> np.ndarray:
    u = rs.standard_normal((D, R))
    return u @ u.T


def _random_diagonalizable(rs: np.random.Generator, d: int) -> np.ndarray:
    q = special_ortho_group.rvs(d, random_state=rs) if d > 1 else np.ones((1, 1))
    kappa = rs.choice([-1.0, 1.0], d) * rs.uniform(1.0, 3.0, d)
    return cumulant_from_sources(q, kappa)


def recovery_error(model: str, size, m: int, seed: int, opts: DecodeOptions | None = None) -> float:
    """Relative Frobenius error of decoding one random exact instance."""
    rs = np.random.default_rng([seed, m, 7])
    if model == "gpca":
        D, R = size
        truth = _random_psd(rs, D, R)
        op = make_operator(MATRIX, seed, m, D)
        est = decode_low_rank(op, apply(op, truth), opts).matrix
    else:
        d = size
        truth = _random_diagonalizable(rs, d)
        op = make_operator(TENSOR, seed, m, d)
        est = decode_ica(op, apply(op, truth), opts).tensor.dense()
    return float(np.linalg.norm(est - truth) / np.linalg.norm(truth))


def success_rate(model, size, m, trials, target_error, seed=0, opts=None) -> float:
    wins = sum(recovery_error(model, size, m, seed + 1000 * t, opts) <= target_error for t in range(trials))
    return wins / trials


def minimal_sketch_size(model, size, target_error, trials, seed=0, opts=None, threshold=0.8) -> int:
    """Smallest ``m`` with success rate at least ``threshold`` (binary search)."""
    full = size[0] * (size[0] + 1) // 2 if model == "gpca" else size**4
    if success_rate(model, size, full, trials, target_error, seed, opts) < threshold:
        raise NoTransition(f"{model} size {size}: decoding fails even at full dimension m={full}")
    lo, hi = 1, full
    while lo < hi:
        mid = (lo + hi) // 2
        if success_rate(model, size, mid, trials, target_error, seed, opts) >= threshold:
            hi = mid
        else:
            lo = mid + 1
    log.info("%s size %s: m_min=%d", model, size, lo)
    return lo


def fit_through_origin(x, y) -> tuple:
    """Least-squares slope of ``y = C x`` and its coefficient of determination."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    C = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - C * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return C, r2


def estimate_constant(
    model: str,
    sizes,
    target_error: float = 1e-3,
    trials: int = 10,
    rank: int = 1,
    seed: int = 0,
    opts: DecodeOptions | None = None,
) -> ConstantEstimate:
    """Fit the constant in ``m = C d^2`` (ica) or ``m = C D R`` (gpca).

    For every size the smallest ``m`` at which at least 80% of ``trials``
    exact random instances decode to relative error ``<= target_error`` is
    located by binary search, then ``C`` is the least-squares slope through
    the origin.
    """
    if model not in ("ica", "gpca"):
        raise ValueError(f"unknown model {model!r}")
    sizes = [int(s) for s in sizes]
    m_min, xs = [], []
    for s in sizes:
        size = (s, rank) if model == "gpca" else s
        m_min.append(minimal_sketch_size(model, size, target_error, trials, seed, opts))
        xs.append(s * rank if model == "gpca" else s * s)
    C, r2 = fit_through_origin(xs, m_min)
    return ConstantEstimate(model, C, r2, sizes, xs, m_min, target_error, trials)
