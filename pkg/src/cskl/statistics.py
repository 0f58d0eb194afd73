"""Identifiable statistics computed from sample streams.

Three statistics are supported, all as mergeable accumulators of raw moment
sums:

* ``cumulant4``: fourth-order cumulant tensor of whitened data (ICA),
* ``veronese-correlation``: correlation of degree-n Veronese embeddings (GPCA),
* ``covariance``: uncentered second moment (PCA on centered data).

A data batch is a plain ``(N, d)`` float array; :func:`as_batch` validates it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyAccumulator,
    KindMismatch,
    SingularCovariance,
    VeroneseOverflow,
)

KINDS = ("cumulant4", "veronese-correlation", "covariance")

_INT64_MAX = np.iinfo(np.int64).max


def as_batch(samples, d: int | None = None) -> np.ndarray:
    """Validate and return ``samples`` as a finite ``(N, d)`` float64 array."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty (N, d) array, got shape {x.shape}")
    if d is not None and x.shape[1] != d:
        raise DimensionMismatch(f"batch dimension {x.shape[1]} != expected {d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("batch contains non-finite entries")
    return x


# ---------------------------------------------------------------------------
# whitening


@dataclass(frozen=True)
class Whitener:
    """Affine map ``x -> W (x - mean)`` with ``W = C^{-1/2}`` symmetric."""

    mean: np.ndarray
    transform: np.ndarray

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def apply(self, samples) -> np.ndarray:
        x = as_batch(samples, self.d)
        return (x - self.mean) @ self.transform.T


def _whitener_from_moments(mean: np.ndarray, cov: np.ndarray, eig_tol: float) -> Whitener:
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 0 or evals[0] <= eig_tol * evals[-1]:
        raise SingularCovariance(
            f"covariance is rank deficient (eigenvalues {evals[0]:.3g} .. {evals[-1]:.3g})"
        )
    w = (evecs / np.sqrt(evals)) @ evecs.T
    return Whitener(mean=mean, transform=0.5 * (w + w.T))


def fit_whitener(samples, eig_tol: float = 1e-12) -> Whitener:
    """Fit the symmetric whitening transform of ``samples``.

    Parameters
    ----------
    samples : array_like, shape (N, d)
        Requires ``N >= d + 1``.
    eig_tol : float
        Covariance is declared singular when its smallest eigenvalue is below
        ``eig_tol`` times its largest.

    Returns
    -------
    Whitener
    """
    x = as_batch(samples)
    n, d = x.shape
    if n < d + 1:
        raise SingularCovariance(f"need at least d+1={d + 1} samples to whiten, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    return _whitener_from_moments(mean, xc.T @ xc / n, eig_tol)


def fit_whitener_stream(chunks, eig_tol: float = 1e-12) -> Whitener:
    """Whitener from a chunked stream, via first and second raw moment sums."""
    s1 = s2 = None
    n = 0
    for chunk in chunks:
        x = as_batch(chunk, None if s1 is None else s1.shape[0])
        if s1 is None:
            s1 = np.zeros(x.shape[1])
            s2 = np.zeros((x.shape[1], x.shape[1]))
        s1 += x.sum(axis=0)
        s2 += x.T @ x
        n += x.shape[0]
    if s1 is None:
        raise EmptyAccumulator("empty data stream")
    d = s1.shape[0]
    if n < d + 1:
        raise SingularCovariance(f"need at least d+1={d + 1} samples to whiten, got {n}")
    mean = s1 / n
    return _whitener_from_moments(mean, s2 / n - np.outer(mean, mean), eig_tol)


# ---------------------------------------------------------------------------
# Veronese embedding


def veronese_dim(n: int, d: int) -> int:
    """Number of degree-``n`` monomials in ``d`` variables, ``C(n+d-1, d-1)``."""
    if n < 1 or d < 1:
        raise ValueError("veronese_dim needs n >= 1 and d >= 1")
    D = math.comb(n + d - 1, d - 1)
    if D > _INT64_MAX:
        raise VeroneseOverflow(f"Veronese dimension for n={n}, d={d} exceeds int64")
    return D


@lru_cache(maxsize=64)
def veronese_indices(n: int, d: int) -> np.ndarray:
    """Variable-index tuples of the monomials, shape ``(D, n)``.

    Row ``r`` lists the (non-decreasing) coordinates multiplied together in
    monomial ``r``.  Rows are in lexicographic order of these tuples, which is
    graded lexicographic order of the exponent vectors: for n=2, d=3 this is
    x1^2, x1x2, x1x3, x2^2, x2x3, x3^2.
    """
    veronese_dim(n, d)
    idx = np.array(list(itertools.combinations_with_replacement(range(d), n)), dtype=np.intp)
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=64)
def veronese_exponents(n: int, d: int) -> np.ndarray:
    """Exponent vectors of the monomials, shape ``(D, d)``, same order."""
    idx = veronese_indices(n, d)
    exps = np.zeros((idx.shape[0], d), dtype=np.intp)
    for r, row in enumerate(idx):
        np.add.at(exps[r], row, 1)
    exps.setflags(write=False)
    return exps


def veronese_embed(x, n: int) -> np.ndarray:
    """Degree-``n`` Veronese embedding of one point (1-D) or a batch (2-D)."""
    arr = np.asarray(x, dtype=np.float64)
    if n < 1:
        raise ValueError("degree must be >= 1")
    if arr.ndim not in (1, 2) or arr.shape[-1] < 1:
        raise DimensionMismatch(f"cannot embed array of shape {arr.shape}")
    idx = veronese_indices(n, arr.shape[-1])
    return arr[..., idx].prod(axis=-1)


def veronese_gradient(x, n: int) -> np.ndarray:
    """Jacobian of the embedding at each point, shape ``(N, D, d)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    exps = veronese_exponents(n, x.shape[1])
    D, d = exps.shape
    jac = np.zeros((x.shape[0], D, d))
    for k in range(d):
        e = exps.copy()
        coef = e[:, k].astype(float)
        e[:, k] = np.maximum(e[:, k] - 1, 0)
        jac[:, :, k] = coef * np.prod(x[:, None, :] ** e[None, :, :], axis=2)
    return jac


# ---------------------------------------------------------------------------
# cumulant helpers


@lru_cache(maxsize=32)
def _canonical_positions(d: int) -> np.ndarray:
    # flat index of the sorted representative of every (i, j, k, l)
    grid = np.indices((d, d, d, d)).reshape(4, -1)
    srt = np.sort(grid, axis=0)
    flat = np.ravel_multi_index(tuple(srt), (d, d, d, d))
    flat.setflags(write=False)
    return flat


def symmetrize4(t: np.ndarray) -> np.ndarray:
    """Copy each sorted-index entry to all of its permutations (exact symmetry)."""
    d = t.shape[0]
    return t.reshape(-1)[_canonical_positions(d)].reshape(d, d, d, d)


def gaussian_fourth_moment(d: int) -> np.ndarray:
    """Fourth raw moment of a standard normal vector, ``δij δkl + δik δjl + δil δjk``."""
    eye = np.eye(d)
    return (
        np.einsum("ij,kl->ijkl", eye, eye)
        + np.einsum("ik,jl->ijkl", eye, eye)
        + np.einsum("il,jk->ijkl", eye, eye)
    )


def cumulant_from_sources(q: np.ndarray, kappa) -> np.ndarray:
    """Tensor ``sum_i kappa_i q_i⊗q_i⊗q_i⊗q_i`` for the columns ``q_i`` of ``q``."""
    q = np.asarray(q, dtype=np.float64)
    kappa = np.asarray(kappa, dtype=np.float64)
    return np.einsum("r,ir,jr,kr,lr->ijkl", kappa, q, q, q, q)


def multilinear_transform(t: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Apply ``m`` along all four modes: ``t ×1 m ×2 m ×3 m ×4 m``."""
    return np.einsum("ijkl,ai,bj,ck,dl->abcd", t, m, m, m, m, optimize=True)


# ---------------------------------------------------------------------------
# accumulators


@dataclass
class MomentAccumulator:
    """Running raw-moment sums for one statistic kind.

    ``params`` is ``(d,)`` for ``cumulant4``/``covariance`` and ``(n, d)`` for
    ``veronese-correlation``.  Accumulators are single-writer values:
    :meth:`update` and :meth:`merge` return new objects.
    """

    kind: str
    params: tuple
    sums: np.ndarray = field(repr=False)
    n_seen: int = 0

    @classmethod
    def empty(cls, kind: str, d: int, degree: int | None = None) -> "MomentAccumulator":
        if kind not in KINDS:
            raise KindMismatch(f"unknown statistic kind {kind!r}")
        if kind == "veronese-correlation":
            if degree is None:
                raise ValueError("veronese-correlation needs a degree")
            params = (int(degree), int(d))
            side = veronese_dim(degree, d)
        else:
            params = (int(d),)
            side = d * d if kind == "cumulant4" else d
        return cls(kind=kind, params=params, sums=np.zeros((side, side)), n_seen=0)

    @property
    def d(self) -> int:
        return self.params[-1]

    def _features(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "cumulant4":
            return np.einsum("ni,nj->nij", x, x).reshape(x.shape[0], -1)
        if self.kind == "veronese-correlation":
            return veronese_embed(x, self.params[0])
        return x

    def update(self, batch) -> "MomentAccumulator":
        x = as_batch(batch, self.d)
        f = self._features(x)
        return MomentAccumulator(self.kind, self.params, self.sums + f.T @ f, self.n_seen + x.shape[0])

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if self.kind != other.kind:
            raise KindMismatch(f"cannot merge {self.kind} with {other.kind}")
        if self.params != other.params:
            raise DimensionMismatch(f"cannot merge params {self.params} with {other.params}")
        return MomentAccumulator(self.kind, self.params, self.sums + other.sums, self.n_seen + other.n_seen)


def accumulate(acc: MomentAccumulator, batch) -> MomentAccumulator:
    return acc.update(batch)


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    return a.merge(b)


def finalize_cumulant(acc: MomentAccumulator) -> np.ndarray:
    """Fourth cumulant tensor ``M4 - G`` of the (whitened) accumulated data.

    ``G`` is the Gaussian fourth moment, so the full cross-cumulant correction
    is applied rather than a flat ``-3``; diagonal entries equal the excess
    kurtosis of each coordinate.  The result is exactly permutation symmetric.
    """
    if acc.kind != "cumulant4":
        raise KindMismatch(f"finalize_cumulant needs cumulant4, got {acc.kind}")
    if acc.n_seen < 1:
        raise EmptyAccumulator("no samples accumulated")
    d = acc.d
    m4 = symmetrize4((acc.sums / acc.n_seen).reshape(d, d, d, d))
    return m4 - gaussian_fourth_moment(d)


def finalize_correlation(acc: MomentAccumulator) -> np.ndarray:
    """``(1/N) sum_j f(x_j) f(x_j)^T`` with ``f`` the Veronese map or identity."""
    if acc.kind not in ("veronese-correlation", "covariance"):
        raise KindMismatch(f"finalize_correlation needs a matrix kind, got {acc.kind}")
    if acc.n_seen < 1:
        raise EmptyAccumulator("no samples accumulated")
    s = acc.sums / acc.n_seen
    return 0.5 * (s + s.T)


def finalize(acc: MomentAccumulator) -> np.ndarray:
    if acc.kind == "cumulant4":
        return finalize_cumulant(acc)
    return finalize_correlation(acc)


def empirical_cumulant(samples) -> np.ndarray:
    """One-shot cumulant tensor of already-whitened samples."""
    x = as_batch(samples)
    return finalize_cumulant(MomentAccumulator.empty("cumulant4", x.shape[1]).update(x))


def embedded_correlation(samples, n: int) -> np.ndarray:
    """One-shot Veronese correlation matrix of ``samples``."""
    x = as_batch(samples)
    acc = MomentAccumulator.empty("veronese-correlation", x.shape[1], degree=n)
    return finalize_correlation(acc.update(x))


def second_moment(samples) -> np.ndarray:
    x = as_batch(samples)
    return finalize_correlation(MomentAccumulator.empty("covariance", x.shape[1]).update(x))


def check_symmetric_psd(s: np.ndarray, sym_tol: float = 1e-12, psd_tol: float = 1e-10) -> bool:
    """True when ``s`` is symmetric and PSD up to roundoff."""
    s = np.asarray(s)
    scale = max(np.abs(s).max(), np.finfo(float).tiny)
    if np.abs(s - s.T).max() > sym_tol * scale:
        return False
    return bool(np.linalg.eigvalsh(s)[0] >= -psd_tol * max(np.trace(s), 0.0))
