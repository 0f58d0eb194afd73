"""Hypotheses extracted from (decoded) statistics, and their evaluation."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.linalg import subspace_angles
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .decode import DiagonalizableTensor, canonical_signs, contrast_off_diagonal
from .errors import (
    DegenerateSpectrum,
    DimensionMismatch,
    InsufficientPoints,
    InvalidDims,
    LengthMismatch,
    SingularProduct,
)
from .statistics import Whitener, as_batch, multilinear_transform, veronese_dim, veronese_gradient


# ---------------------------------------------------------------------------
# ICA


@dataclass
class IcaHypothesis:
    unmixing: np.ndarray
    kappa: np.ndarray
    identifiable: bool = True
    noise_floor: float | None = None


def cumulant_noise_floor(n_samples: int) -> float:
    """Standard deviation of a diagonal fourth-cumulant estimate on Gaussian data."""
    return math.sqrt(24.0 / n_samples)


def ica_extract(t: DiagonalizableTensor, w: Whitener, n_samples: int | None = None) -> IcaHypothesis:
    """Unmixing matrix ``Q^T W`` from a decoded tensor and the data whitener.

    When ``n_samples`` is given, the hypothesis is flagged non-identifiable if
    every decoded cumulant is below ten times the Gaussian noise floor.
    """
    if t.d != w.d:
        raise DimensionMismatch(f"tensor dimension {t.d} != whitener dimension {w.d}")
    unmixing = t.Q.T @ w.transform
    floor = None
    identifiable = True
    if n_samples:
        floor = cumulant_noise_floor(n_samples)
        identifiable = bool(np.max(np.abs(t.kappa)) >= 10.0 * floor)
    return IcaHypothesis(unmixing, np.asarray(t.kappa), identifiable, floor)


def direct_ica(sigma, sweeps: int = 50, tol: float = 1e-14) -> DiagonalizableTensor:
    """Classical (non-compressive) cumulant ICA by Jacobi rotations.

    Sweeps over coordinate pairs and picks each Givens angle by minimizing
    the off-diagonal cumulant energy of the full tensor.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    d = sigma.shape[0]
    Q = np.eye(d)
    t = sigma.copy()
    for _ in range(sweeps):
        moved = 0.0
        for p, q in itertools.combinations(range(d), 2):

            def rot(theta):
                g = np.eye(d)
                c, s = math.cos(theta), math.sin(theta)
                g[p, p] = g[q, q] = c
                g[p, q], g[q, p] = -s, s
                return g

            def cost(theta):
                return contrast_off_diagonal(rot(theta), t)

            grid = np.linspace(-math.pi / 4, math.pi / 4, 33)
            start = grid[int(np.argmin([cost(th) for th in grid]))]
            lo, hi = start - math.pi / 64, start + math.pi / 64
            best = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
            theta = best.x if best.fun < cost(0.0) else 0.0
            if abs(theta) > 0:
                g = rot(theta)
                t = multilinear_transform(t, g.T)
                Q = Q @ g
                moved = max(moved, abs(theta))
        if moved < tol:
            break
    kappa = multilinear_transform(sigma, Q.T)[(np.arange(d),) * 4]
    return DiagonalizableTensor(canonical_signs(Q), kappa)


def amari_index(W, A) -> float:
    """Amari error of ``P = W A``; zero iff ``P`` is a scaled signed permutation."""
    W = np.asarray(W, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if W.shape[1] != A.shape[0]:
        raise DimensionMismatch(f"cannot multiply {W.shape} by {A.shape}")
    P = np.abs(W @ A)
    d = P.shape[0]
    if P.shape != (d, d):
        raise DimensionMismatch("W A must be square")
    if np.linalg.matrix_rank(P if d else np.eye(1)) < d or P.max(axis=1).min() == 0 or P.max(axis=0).min() == 0:
        raise SingularProduct("W A is singular")
    if d == 1:
        return 0.0
    rows = np.sum(P.sum(axis=1) / P.max(axis=1) - 1.0)
    cols = np.sum(P.sum(axis=0) / P.max(axis=0) - 1.0)
    return float((rows + cols) / (2.0 * d * (d - 1)))


def signed_permutation_distance(Q_hat, Q0) -> float:
    """``min over matchings`` of ``max |(|Q_hat^T Q0| - I)|`` after aligning columns."""
    C = np.abs(np.asarray(Q_hat).T @ np.asarray(Q0))
    row, col = linear_sum_assignment(-C)
    return float(np.max(np.abs(C[row][:, col] - np.eye(C.shape[0]))))


# ---------------------------------------------------------------------------
# GPCA


@dataclass
class SubspaceHypothesis:
    polynomials: np.ndarray
    bases: list
    labels: np.ndarray


def gpca_polynomials(corr, n: int, rank_tol: float = 1e-6, d: int | None = None, tie_ratio: float = 10.0) -> np.ndarray:
    """Coefficient vectors of the polynomials vanishing on the data.

    These are the eigenvectors of the embedded correlation whose eigenvalue is
    at most ``rank_tol`` times the largest one, returned as rows of a
    ``(R_bar, D)`` array (possibly empty).  If the first eigenvalue above the
    threshold is within ``tie_ratio`` of the last one below it, a
    :class:`DegenerateSpectrum` warning is issued and it is included too.
    """
    corr = np.asarray(corr, dtype=np.float64)
    D = corr.shape[0]
    if corr.shape != (D, D):
        raise DimensionMismatch(f"correlation must be square, got {corr.shape}")
    if d is not None and veronese_dim(n, d) != D:
        raise DimensionMismatch(f"correlation side {D} != veronese_dim({n}, {d})")
    evals, evecs = np.linalg.eigh(0.5 * (corr + corr.T))
    top = max(evals[-1], 0.0)
    if top == 0:
        return evecs.T.copy()
    thresh = rank_tol * top
    k = int(np.searchsorted(evals, thresh, side="right"))
    floor = max(abs(evals[k - 1]), np.finfo(float).eps * top) if k > 0 else None
    while 0 < k < D and evals[k] <= tie_ratio * floor:
        warnings.warn(
            f"rank threshold splits near-tied eigenvalues {evals[k - 1]:.3g} / {evals[k]:.3g}; widening null space",
            DegenerateSpectrum,
            stacklevel=2,
        )
        floor = evals[k]
        k += 1
    return evecs[:, :k].T.copy()


def polynomial_gradients(data, polys, n: int) -> np.ndarray:
    """Gradients of each polynomial at each point, shape ``(N, R_bar, d)``."""
    x = as_batch(data)
    jac = veronese_gradient(x, n)
    return np.einsum("rk,nkd->nrd", np.asarray(polys, dtype=np.float64), jac)


def _normal_projectors(grads: np.ndarray, codims: np.ndarray) -> np.ndarray:
    N, _, d = grads.shape
    proj = np.zeros((N, d, d))
    for i in range(N):
        _, _, vt = np.linalg.svd(grads[i], full_matrices=False)
        b = vt[: codims[i]]
        proj[i] = b.T @ b
    return proj


def _fit_basis(x: np.ndarray, dim: int) -> np.ndarray:
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    return vt[:dim].T.copy()


def _assign(x: np.ndarray, bases: list) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    norms[norms == 0] = 1.0
    # sine of the angle between each point and each subspace
    sines = np.stack([np.linalg.norm(x - (x @ b) @ b.T, axis=1) / norms for b in bases], axis=1)
    return np.argmin(sines, axis=1)


def gpca_cluster(
    data,
    polys,
    n: int,
    dims,
    degree: int | None = None,
    max_cluster_points: int = 1000,
    refine: int = 2,
) -> SubspaceHypothesis:
    """Segment data into ``n`` subspaces of known dimensions ``dims``.

    The normal space of the subspace through a point is spanned by the
    gradients of the vanishing polynomials there.  Points are clustered by the
    Frobenius distance between normal-space projectors (equivalently by the
    principal angles between normal spaces) with Ward agglomeration.  Only
    the points with the largest gradients, at most ``max_cluster_points`` of
    them, take part because gradients shrink near the origin.  Each cluster's
    basis is the top-``d_i`` right singular space of its points.  Labels then
    go to the subspace at the smallest angle from each point, followed by
    ``refine`` rounds of refitting and reassignment.
    """
    x = as_batch(data)
    N, d = x.shape
    dims = [int(v) for v in dims]
    if n < 1 or len(dims) != n:
        raise InvalidDims(f"need {n} subspace dimensions, got {dims}")
    if any(v < 1 or v >= d for v in dims) and n > 1:
        raise InvalidDims(f"subspace dimensions must lie in [1, {d - 1}], got {dims}")
    polys = np.atleast_2d(np.asarray(polys, dtype=np.float64))
    if n == 1:
        basis = _fit_basis(x, dims[0])
        return SubspaceHypothesis(polys, [basis], np.zeros(N, dtype=int))
    if polys.size == 0:
        raise InvalidDims("clustering more than one subspace needs at least one polynomial")
    degree = degree or n

    grads = polynomial_gradients(x, polys, degree)
    strength = np.linalg.norm(grads.reshape(N, -1), axis=1)
    allowed = sorted({d - v for v in dims})
    sv = np.linalg.svd(grads, compute_uv=False)
    # per-point normal-space dimension, snapped to the admissible codimensions
    est = (sv > 1e-3 * np.maximum(sv[:, :1], np.finfo(float).tiny)).sum(axis=1)
    codims = np.array([min(allowed, key=lambda c: abs(c - e)) for e in est])

    n_use = min(N, max_cluster_points, max(n * max(dims) * 4, N // 2))
    use = np.argsort(-strength)[:n_use]
    proj = _normal_projectors(grads[use], codims[use]).reshape(n_use, -1)
    tree = linkage(proj, method="ward")
    groups = fcluster(tree, t=n, criterion="maxclust") - 1
    if np.unique(groups).size < n:
        raise InsufficientPoints("agglomeration produced fewer clusters than subspaces")

    # pair clusters with dimensions: larger normal spaces get smaller subspaces
    mean_codim = [codims[use][groups == g].mean() for g in range(n)]
    order = np.argsort(mean_codim)[::-1]
    cluster_dims = np.empty(n, dtype=int)
    cluster_dims[order] = sorted(dims)

    bases = []
    for g in range(n):
        pts = x[use][groups == g]
        if pts.shape[0] < cluster_dims[g]:
            raise InsufficientPoints(f"cluster {g} has {pts.shape[0]} points for a {cluster_dims[g]}-dim subspace")
        bases.append(_fit_basis(pts, cluster_dims[g]))
    labels = _assign(x, bases)
    for _ in range(refine):
        new_bases = []
        for g in range(n):
            pts = x[labels == g]
            if pts.shape[0] < cluster_dims[g]:
                raise InsufficientPoints(f"cluster {g} has {pts.shape[0]} points for a {cluster_dims[g]}-dim subspace")
            new_bases.append(_fit_basis(pts, cluster_dims[g]))
        bases = new_bases
        labels = _assign(x, bases)
    return SubspaceHypothesis(polys, bases, labels)


def clustering_error(labels, truth) -> float:
    """Smallest fraction of mismatches over relabelings of ``labels``."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape:
        raise LengthMismatch(f"{labels.shape} labels vs {truth.shape} ground truth")
    if labels.size == 0:
        return 0.0
    pred_ids, pred = np.unique(labels, return_inverse=True)
    true_ids, tru = np.unique(truth, return_inverse=True)
    k = max(pred_ids.size, true_ids.size)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (pred, tru), 1)
    if k <= 8:
        best = max(counts[np.arange(k), list(perm)].sum() for perm in itertools.permutations(range(k)))
    else:
        r, c = linear_sum_assignment(-counts)
        best = counts[r, c].sum()
    return float(1.0 - best / labels.size)


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaHypothesis:
    basis: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool = False


def pca_extract(cov, k: int, gap_tol: float = 1e-8) -> PcaHypothesis:
    """Top-``k`` eigenvectors of a covariance, as the columns of ``basis``.

    ``degenerate`` flags a tie between eigenvalues ``k`` and ``k+1``, in which
    case the returned subspace is one of many equally valid ones.
    """
    cov = np.asarray(cov, dtype=np.float64)
    d = cov.shape[0]
    if cov.shape != (d, d):
        raise DimensionMismatch(f"covariance must be square, got {cov.shape}")
    if not 1 <= k <= d:
        raise DimensionMismatch(f"k={k} must lie in [1, {d}]")
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    evals, evecs = evals[::-1], evecs[:, ::-1]
    degenerate = False
    if k < d:
        scale = max(abs(evals[0]), np.finfo(float).tiny)
        degenerate = bool(evals[k - 1] - evals[k] <= gap_tol * scale)
    return PcaHypothesis(evecs[:, :k].copy(), evals[:k].copy(), degenerate)


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians) between the column spans of ``A`` and ``B``."""
    return np.sort(subspace_angles(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64)))
