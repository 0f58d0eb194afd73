"""Seeded random linear sketching operators on statistic spaces.

Two operator kinds are provided:

``dense-gaussian-tensor``
    ``y_i = <a_i, vec(T)>`` for a ``d x d x d x d`` tensor ``T``; each ``a_i``
    has ``d**4`` entries.
``rank-one-matrix``
    ``y_i = a_i^T S a_i = trace(a_i a_i^T S)`` for a ``D x D`` matrix ``S``.

In both cases the entries of ``a_i`` are i.i.d. normal with variance
``1/sqrt(m)`` (standard deviation ``m**-0.25``), drawn from the counter-based
stream ``i`` of :mod:`cskl.rng`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from . import rng
from .errors import (
    DimensionMismatch,
    FingerprintMismatch,
    InvalidSize,
    KindMismatch,
    LengthMismatch,
    ShapeMismatch,
)
from .statistics import Whitener, as_batch, gaussian_fourth_moment, veronese_dim, veronese_embed

TENSOR = "dense-gaussian-tensor"
MATRIX = "rank-one-matrix"
MODELS = ("ica", "gpca", "pca")

_CHUNK_ROWS = 2048


@dataclass(frozen=True)
class SketchOperator:
    """Random linear map fully determined by ``(kind, seed, m, ambient)``.

    ``ambient`` is the tensor side ``d`` for the tensor kind and the matrix
    side ``D`` for the rank-one kind.
    """

    kind: str
    seed: int
    m: int
    ambient: int

    def __post_init__(self):
        if self.kind not in rng.KIND_CODES:
            raise KindMismatch(f"unknown operator kind {self.kind!r}")
        if int(self.m) < 1:
            raise InvalidSize(f"sketch length must be >= 1, got {self.m}")
        if int(self.ambient) < 1:
            raise InvalidSize(f"ambient dimension must be >= 1, got {self.ambient}")

    @property
    def fingerprint(self) -> tuple:
        return (self.kind, int(self.seed), int(self.m), int(self.ambient))

    @property
    def vector_length(self) -> int:
        return self.ambient**4 if self.kind == TENSOR else self.ambient

    @property
    def statistic_shape(self) -> tuple:
        if self.kind == TENSOR:
            return (self.ambient,) * 4
        return (self.ambient, self.ambient)

    @property
    def statistic_dim(self) -> int:
        """Dimension of the space the operator can distinguish."""
        if self.kind == TENSOR:
            return self.ambient**4
        return self.ambient * (self.ambient + 1) // 2

    @cached_property
    def vectors(self) -> np.ndarray:
        """Projection vectors ``a_i`` as rows, shape ``(m, vector_length)``."""
        raw = rng.standard_normal_rows(self.seed, rng.KIND_CODES[self.kind], self.m, self.vector_length)
        a = raw * self.m**-0.25
        a.setflags(write=False)
        return a

    @cached_property
    def matrix(self) -> np.ndarray:
        """The operator as an ``(m, prod(statistic_shape))`` matrix."""
        if self.kind == TENSOR:
            return self.vectors
        a = self.vectors
        mat = np.einsum("mi,mj->mij", a, a).reshape(self.m, -1)
        mat.setflags(write=False)
        return mat


def make_operator(kind: str, seed: int, m: int, ambient: int) -> SketchOperator:
    return SketchOperator(kind=kind, seed=int(seed), m=int(m), ambient=int(ambient))


@dataclass
class SketchVector:
    """An empirical (or exact) sketch together with its provenance."""

    values: np.ndarray
    fingerprint: tuple
    n_samples: int = 0
    model: str | None = None
    degree: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.shape[0] != self.fingerprint[2]:
            raise LengthMismatch(f"sketch has {self.values.shape} values, fingerprint says m={self.fingerprint[2]}")

    @property
    def m(self) -> int:
        return self.values.shape[0]


def check_fingerprint(op: SketchOperator, y: SketchVector) -> None:
    if tuple(y.fingerprint) != op.fingerprint:
        raise FingerprintMismatch(f"sketch fingerprint {tuple(y.fingerprint)} != operator {op.fingerprint}")


def apply(op: SketchOperator, s) -> np.ndarray:
    """Measurements ``A(s)`` of a statistic ``s``; exactly linear in ``s``."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != op.statistic_shape:
        raise ShapeMismatch(f"statistic shape {s.shape} != operator shape {op.statistic_shape}")
    if op.kind == TENSOR:
        return op.vectors @ s.reshape(-1)
    a = op.vectors
    return np.einsum("mi,mi->m", a @ s, a)


def apply_adjoint(op: SketchOperator, y) -> np.ndarray:
    """``sum_i y_i A_i`` with ``A_i`` the tensor ``a_i`` or matrix ``a_i a_i^T``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.m,):
        raise LengthMismatch(f"expected {op.m} measurements, got shape {y.shape}")
    if op.kind == TENSOR:
        return (op.vectors.T @ y).reshape(op.statistic_shape)
    a = op.vectors
    return (a.T * y) @ a


def sketch_statistic(op: SketchOperator, s, n_samples: int = 0, **kw) -> SketchVector:
    """Wrap :func:`apply` into a :class:`SketchVector`."""
    return SketchVector(apply(op, s), op.fingerprint, n_samples=n_samples, **kw)


def gaussian_baseline(op: SketchOperator) -> np.ndarray:
    """Sketch of the Gaussian fourth moment, subtracted from raw ICA sketches."""
    if op.kind != TENSOR:
        raise KindMismatch("the Gaussian baseline only exists for tensor sketches")
    return apply(op, gaussian_fourth_moment(op.ambient))


def _iter_chunks(data) -> Iterable[np.ndarray]:
    if isinstance(data, np.ndarray):
        yield data
    else:
        yield from data


def _raw_sums(op: SketchOperator, x: np.ndarray, model: str, degree: int | None) -> np.ndarray:
    # per-sample contributions, summed over the rows of x
    if op.kind == TENSOR:
        d = op.ambient
        d2 = d * d
        mats = op.vectors.reshape(op.m, d2, d2)
        stacked = mats.transpose(1, 0, 2).reshape(d2, op.m * d2)
        out = np.zeros(op.m)
        for lo in range(0, x.shape[0], _CHUNK_ROWS):
            xc = x[lo : lo + _CHUNK_ROWS]
            z = np.einsum("ni,nj->nij", xc, xc).reshape(xc.shape[0], d2)
            left = (z @ stacked).reshape(xc.shape[0], op.m, d2)
            out += np.einsum("nmk,nk->m", left, z)
        return out
    feats = veronese_embed(x, degree) if model == "gpca" else x
    proj = feats @ op.vectors.T
    return np.einsum("nm,nm->m", proj, proj)


def _expected_kind(model: str) -> str:
    if model not in MODELS:
        raise KindMismatch(f"unknown model {model!r}")
    return TENSOR if model == "ica" else MATRIX


def sketch_stream(
    op: SketchOperator,
    data,
    model: str,
    whitener: Whitener | None = None,
    degree: int | None = None,
) -> SketchVector:
    """Empirical sketch of a sample stream, computed one sample at a time.

    Parameters
    ----------
    op : SketchOperator
    data : ndarray or iterable of ndarray
        Samples (rows); an iterable is consumed chunk by chunk so the stream
        never has to fit in memory.
    model : {"ica", "gpca", "pca"}
    whitener : Whitener, optional
        Applied to each chunk before the fourth-moment pass.  Required for
        ``ica`` (two-pass semantics: fit the whitener on a first pass).
    degree : int, optional
        Veronese degree, required for ``gpca``.

    Returns
    -------
    SketchVector
        Equal to ``apply(op, statistic)`` of the accumulated statistic.  For
        ``ica`` the Gaussian baseline is subtracted once, after averaging.
    """
    kind = _expected_kind(model)
    if op.kind != kind:
        raise KindMismatch(f"model {model} needs a {kind} operator, got {op.kind}")
    if model == "ica" and whitener is None:
        raise ValueError("ica sketches need a whitener")
    if model == "gpca" and degree is None:
        raise ValueError("gpca sketches need a degree")
    d = op.ambient if model != "gpca" else None
    sums = np.zeros(op.m)
    n = 0
    for chunk in _iter_chunks(data):
        x = as_batch(chunk)
        if model == "ica":
            x = whitener.apply(x)
        if d is not None and x.shape[1] != d:
            raise DimensionMismatch(f"data dimension {x.shape[1]} != operator ambient {d}")
        if model == "gpca" and veronese_dim(degree, x.shape[1]) != op.ambient:
            raise DimensionMismatch(
                f"degree-{degree} embedding of d={x.shape[1]} has size "
                f"{veronese_dim(degree, x.shape[1])}, operator expects {op.ambient}"
            )
        sums += _raw_sums(op, x, model, degree)
        n += x.shape[0]
    if n == 0:
        raise ValueError("empty data stream")
    values = sums / n
    if model == "ica":
        values = values - gaussian_baseline(op)
    return SketchVector(values, op.fingerprint, n_samples=n, model=model, degree=degree)


def merge_sketches(a: SketchVector, b: SketchVector) -> SketchVector:
    """Sample-weighted average of two empirical sketches from one operator."""
    if tuple(a.fingerprint) != tuple(b.fingerprint):
        raise FingerprintMismatch("cannot merge sketches from different operators")
    if a.model != b.model or a.degree != b.degree:
        raise KindMismatch("cannot merge sketches of different models")
    n = a.n_samples + b.n_samples
    if n == 0:
        raise ValueError("both sketches are empty")
    values = (a.n_samples * a.values + b.n_samples * b.values) / n
    return SketchVector(values, a.fingerprint, n_samples=n, model=a.model, degree=a.degree, meta=dict(a.meta))
