"""Decoders recovering structured statistics from sketches.

* :func:`decode_low_rank` -- PSD matrix of minimal nuclear norm consistent with
  rank-one measurements, by monotone accelerated proximal gradient with
  eigenvalue soft-thresholding and a decreasing regularization path.
* :func:`decode_ica` -- orthogonally diagonalizable fourth-order tensor
  ``sum_i kappa_i q_i⊗q_i⊗q_i⊗q_i`` fitted to a tensor sketch by alternating
  exact least squares in ``kappa`` with Cayley-transform descent on ``Q``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import special_ortho_group

from .errors import KindMismatch, LengthMismatch, NoConvergence, ShapeMismatch
from .sketch import MATRIX, TENSOR, SketchOperator, SketchVector, apply, apply_adjoint, check_fingerprint
from .statistics import cumulant_from_sources, multilinear_transform

log = logging.getLogger(__name__)


@dataclass
class DecodeOptions:
    max_iters: int = 5000
    tol: float = 1e-6
    step: float | None = None
    restarts: int = 8
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def _measurements(op: SketchOperator, y, kind: str) -> np.ndarray:
    if op.kind != kind:
        raise KindMismatch(f"decoder needs a {kind} operator, got {op.kind}")
    if isinstance(y, SketchVector):
        check_fingerprint(op, y)
        return y.values
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.m,):
        raise LengthMismatch(f"expected {op.m} measurements, got shape {y.shape}")
    return y


def _relative(res: float, ynorm: float) -> float:
    return res / ynorm if ynorm > 0 else res


# ---------------------------------------------------------------------------
# low-rank PSD recovery


@dataclass
class LowRankResult:
    matrix: np.ndarray
    residual: float
    relative_residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


def operator_norm_sq(op: SketchOperator) -> float:
    """Squared spectral norm of the operator (Lipschitz constant of the data term)."""
    return float(np.linalg.norm(op.matrix, 2) ** 2)


def _psd_shrink(z: np.ndarray, thresh: float) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (z + z.T))
    w = np.maximum(w - thresh, 0.0)
    keep = w > 0
    if not keep.any():
        return np.zeros_like(z)
    vk = v[:, keep]
    return (vk * w[keep]) @ vk.T


def decode_low_rank(
    op: SketchOperator,
    y,
    opts: DecodeOptions | None = None,
    strict: bool = False,
    lam_decay: float = 0.7,
    lam_floor: float = 1e-12,
) -> LowRankResult:
    """Minimal-nuclear-norm PSD matrix matching rank-one sketch ``y``.

    Minimizes ``0.5 ||A(S) - y||^2 + lam ||S||_*`` over PSD ``S`` for a
    geometric sequence of ``lam`` decreasing from ``0.1 ||A^*(y)||_2`` towards
    ``lam_floor`` times that value, warm starting each stage.  Within a
    stage the iteration is monotone FISTA, so the penalized objective never
    increases.  The regularization path is proportional to ``y``, which makes
    the decoder exactly scale equivariant.

    Returns
    -------
    LowRankResult
        ``converged`` is False when the relative residual is still above
        ``opts.tol`` after ``opts.max_iters`` iterations; the best iterate is
        returned regardless unless ``strict`` is set, in which case
        :class:`NoConvergence` is raised carrying the result.
    """
    opts = opts or DecodeOptions()
    yv = _measurements(op, y, MATRIX)
    D = op.ambient
    ynorm = float(np.linalg.norm(yv))
    if ynorm == 0:
        return LowRankResult(np.zeros((D, D)), 0.0, 0.0, 0, True, [(0, 0.0, 0.0)])

    lip = operator_norm_sq(op)
    step = opts.step if opts.step is not None else 1.0 / lip
    lam0 = 0.1 * float(np.linalg.norm(apply_adjoint(op, yv), 2))
    lam = lam0
    lam_min = lam_floor * lam0

    def objective(x, r, lam_):
        return 0.5 * float(r @ r) + lam_ * float(np.trace(x))

    x = np.zeros((D, D))
    r = -yv
    fx = objective(x, r, lam)
    history = []
    best = (math.inf, x)
    stage_tol = 1e-4
    it = 0
    while it < opts.max_iters:
        # one regularization stage of monotone FISTA
        x_prev = x
        z = x
        t = 1.0
        for _ in range(opts.max_iters - it):
            it += 1
            rz = apply(op, z) - yv
            u = _psd_shrink(z - step * apply_adjoint(op, rz), step * lam)
            ru = apply(op, u) - yv
            fu = objective(u, ru, lam)
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            if fu <= fx:
                x_new, r_new, f_new = u, ru, fu
            else:
                x_new, r_new, f_new = x, r, fx
            z = x_new + (t / t_next) * (u - x_new) + ((t - 1.0) / t_next) * (x_new - x)
            x_prev, x, r, fx, t = x, x_new, r_new, f_new, t_next
            res = float(np.linalg.norm(r))
            history.append((it, fx, res))
            if res < best[0]:
                best = (res, x)
            change = np.linalg.norm(x - x_prev) / max(1.0, np.linalg.norm(x))
            if lam <= lam_min and res <= opts.tol * ynorm:
                break
            if lam > lam_min and change < stage_tol and it > 1:
                break
        if lam <= lam_min and best[0] <= opts.tol * ynorm:
            break
        if lam > lam_min:
            lam = max(lam * lam_decay, lam_min)
            fx = objective(x, r, lam)
            stage_tol = max(stage_tol * lam_decay, 1e-12)
    res, xbest = best
    result = LowRankResult(
        matrix=0.5 * (xbest + xbest.T),
        residual=res,
        relative_residual=_relative(res, ynorm),
        iterations=it,
        converged=res <= opts.tol * ynorm,
        history=history,
    )
    if not result.converged:
        log.info("decode_low_rank: relative residual %.3g above tol %.3g", result.relative_residual, opts.tol)
        if strict:
            raise NoConvergence("low-rank decoder did not reach tolerance", result)
    return result


# ---------------------------------------------------------------------------
# diagonalizable tensors (ICA)


@dataclass(frozen=True)
class DiagonalizableTensor:
    """``sum_i kappa_i q_i⊗q_i⊗q_i⊗q_i`` for the orthonormal columns ``q_i`` of ``Q``."""

    Q: np.ndarray
    kappa: np.ndarray

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    def dense(self) -> np.ndarray:
        return cumulant_from_sources(self.Q, self.kappa)


@dataclass
class IcaDecodeResult:
    tensor: DiagonalizableTensor
    residual: float
    relative_residual: float
    iterations: int
    converged: bool
    stationary: bool
    history: list = field(default_factory=list, repr=False)


def contrast_off_diagonal(Q, sigma) -> float:
    """Energy of the cross cumulants of ``sigma`` rotated by ``Q^T``.

    Returns ``sum over (i,j,k,l) != (i,i,i,i)`` of ``T_ijkl**2`` where
    ``T = sigma ×1 Q^T ×2 Q^T ×3 Q^T ×4 Q^T``; zero iff ``T`` is diagonal.
    """
    Q = np.asarray(Q, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    d = Q.shape[0]
    if Q.shape != (d, d) or sigma.shape != (d,) * 4:
        raise ShapeMismatch(f"incompatible shapes Q {Q.shape}, sigma {sigma.shape}")
    t = multilinear_transform(sigma, Q.T)
    diag = t[(np.arange(d),) * 4]
    return float(max(np.sum(t * t) - np.sum(diag * diag), 0.0))


def canonical_signs(Q: np.ndarray) -> np.ndarray:
    """Flip columns so the first non-negligible entry of each is positive."""
    Q = np.array(Q, dtype=np.float64)
    for c in range(Q.shape[1]):
        col = Q[:, c]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            Q[:, c] = -col
    return Q


def _rank_one_columns(Q: np.ndarray) -> np.ndarray:
    # columns vec(q_r ⊗ q_r ⊗ q_r ⊗ q_r), shape (d**4, d)
    d = Q.shape[0]
    return np.einsum("ir,jr,kr,lr->ijklr", Q, Q, Q, Q).reshape(d**4, d)


class _IcaFit:
    """Variable-projection objective ``F(Q) = min_kappa ||A Phi(Q) kappa - y||^2``."""

    def __init__(self, a: np.ndarray, y: np.ndarray, d: int):
        self.a = a
        self.y = y
        self.d = d

    def evaluate(self, Q):
        b = self.a @ _rank_one_columns(Q)
        kappa, *_ = np.linalg.lstsq(b, self.y, rcond=None)
        r = b @ kappa - self.y
        return float(r @ r), kappa, r

    def gradient(self, Q, kappa, r):
        d = self.d
        t = (self.a.T @ r).reshape(d, d, d, d)
        t = (
            t
            + t.transpose(1, 0, 2, 3)
            + t.transpose(2, 1, 0, 3)
            + t.transpose(3, 1, 2, 0)
        )
        # t now sums the four slot positions of the contraction
        g = np.einsum("abcd,br,cr,dr->ar", t, Q, Q, Q, optimize=True)
        return 2.0 * g * kappa


def _cayley(Q, W, tau):
    d = Q.shape[0]
    eye = np.eye(d)
    return np.linalg.solve(eye + 0.5 * tau * W, (eye - 0.5 * tau * W) @ Q)


def _descend(fit: _IcaFit, Q, max_iters: int, ftol: float, gtol: float):
    f, kappa, r = fit.evaluate(Q)
    history = [(0, f)]
    tau = 1.0
    prev_w = prev_q = None
    stationary = False
    it = 0
    for it in range(1, max_iters + 1):
        g = fit.gradient(Q, kappa, r)
        W = g @ Q.T - Q @ g.T
        wnorm2 = 0.5 * float(np.sum(W * W))
        if wnorm2 <= gtol or f <= ftol:
            stationary = wnorm2 <= gtol
            break
        if prev_w is not None:
            # Barzilai-Borwein guess on the tangent direction -W Q
            s = Q - prev_q
            dy = W @ Q - prev_w @ prev_q
            sy = abs(float(np.sum(s * dy)))
            if sy > 0:
                tau = float(np.sum(s * s)) / sy
        tau = min(max(tau, 1e-10), 1e6)
        while True:
            Qn = _cayley(Q, W, tau)
            fn, kn, rn = fit.evaluate(Qn)
            if fn <= f - 1e-4 * tau * wnorm2 or tau < 1e-14:
                break
            tau *= 0.5
        prev_w, prev_q = W, Q
        if fn >= f:
            stationary = True
            break
        Q, f, kappa, r = Qn, fn, kn, rn
        history.append((it, f))
    # re-orthonormalize against drift from repeated solves
    u, _, vt = np.linalg.svd(Q)
    Q = u @ vt
    f, kappa, r = fit.evaluate(Q)
    return Q, kappa, f, it, stationary, history


def decode_ica(op: SketchOperator, y, opts: DecodeOptions | None = None, strict: bool = False) -> IcaDecodeResult:
    """Fit an orthogonally diagonalizable tensor to a tensor sketch.

    Minimizes ``||A(sum_i kappa_i q_i^{⊗4}) - y||^2`` over orthogonal ``Q`` and
    real ``kappa``.  ``kappa`` is eliminated by exact least squares; ``Q``
    follows Cayley-transform descent on the orthogonal group with
    Barzilai-Borwein steps and Armijo backtracking.  ``opts.restarts`` random
    orthogonal starts are run and the lowest residual wins; ties go to the
    lexicographically smallest sign-canonical ``Q``.

    ``converged`` holds when the relative residual is within ``opts.tol`` or
    the best run ended at a stationary point (the usual outcome for
    empirical sketches, which are never exactly diagonalizable).
    """
    opts = opts or DecodeOptions()
    yv = _measurements(op, y, TENSOR)
    d = op.ambient
    ynorm = float(np.linalg.norm(yv))
    if ynorm == 0:
        zero = DiagonalizableTensor(np.eye(d), np.zeros(d))
        return IcaDecodeResult(zero, 0.0, 0.0, 0, True, True, [(0, 0.0)])

    fit = _IcaFit(np.asarray(op.vectors), yv, d)
    ftol = (0.01 * opts.tol * ynorm) ** 2
    gtol = 1e-20 * ynorm**4
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.restarts)

    def run(ss):
        if d == 1:
            q0 = np.ones((1, 1))
        else:
            q0 = special_ortho_group.rvs(d, random_state=np.random.default_rng(ss))
        return _descend(fit, q0, opts.max_iters, ftol, gtol)

    if opts.threads > 1 and opts.restarts > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            runs = list(pool.map(run, seeds))
    else:
        runs = [run(ss) for ss in seeds]

    def key(item):
        Q, _, f, *_ = item
        return (f, tuple(canonical_signs(Q).ravel()))

    Q, kappa, f, iters, stationary, history = min(runs, key=key)
    Q = canonical_signs(Q)
    res = math.sqrt(f)
    rel = _relative(res, ynorm)
    result = IcaDecodeResult(
        tensor=DiagonalizableTensor(Q, kappa),
        residual=res,
        relative_residual=rel,
        iterations=iters,
        converged=rel <= opts.tol or stationary,
        stationary=stationary,
        history=history,
    )
    if not result.converged:
        log.info("decode_ica: relative residual %.3g above tol %.3g", rel, opts.tol)
        if strict:
            raise NoConvergence("ICA decoder did not reach tolerance", result)
    return result
