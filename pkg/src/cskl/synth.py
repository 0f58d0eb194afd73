"""Seeded synthetic data with known ground truth.

Distributions used:

* ICA sources, all zero mean and unit variance: ``uniform`` on
  ``[-sqrt(3), sqrt(3)]`` (excess kurtosis -1.2), ``laplace`` with scale
  ``1/sqrt(2)`` (+3), ``rademacher`` on ``{-1, +1}`` (-2), ``gaussian`` (0).
  The mixing ``Q0`` is Haar-distributed on SO(d) unless supplied.
* Subspaces: bases are QR-orthonormalized standard Gaussian ``d x d_i``
  matrices; cluster labels are i.i.d. categorical with weights ``alpha``;
  in-subspace coefficients are standard Gaussian; ambient noise is
  ``N(0, sigma^2 I)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import special_ortho_group

from .errors import InvalidDims

SOURCE_KURTOSIS = {"uniform": -1.2, "laplace": 3.0, "rademacher": -2.0, "gaussian": 0.0}


@dataclass
class GenSpec:
    seed: int
    model: str
    d: int
    N: int
    sources: list = field(default_factory=lambda: ["uniform"])
    mixing: np.ndarray | None = None
    n: int = 2
    dims: list | None = None
    alpha: list | None = None
    noise: float = 0.0

    def __post_init__(self):
        if self.model not in ("ica", "subspaces", "gaussian"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.d < 1 or self.N < 1:
            raise InvalidDims("d and N must be positive")
        if self.model == "ica":
            if len(self.sources) == 1:
                self.sources = list(self.sources) * self.d
            if len(self.sources) != self.d:
                raise InvalidDims(f"need one source kind per channel, got {len(self.sources)} for d={self.d}")
            unknown = set(self.sources) - set(SOURCE_KURTOSIS)
            if unknown:
                raise ValueError(f"unknown source kinds {sorted(unknown)}")
            if self.mixing is not None:
                q = np.asarray(self.mixing, dtype=np.float64)
                if q.shape != (self.d, self.d) or np.linalg.norm(q.T @ q - np.eye(self.d)) > 1e-10:
                    raise ValueError("mixing must be a d x d orthogonal matrix")
                self.mixing = q
        if self.model == "subspaces":
            if self.dims is None:
                self.dims = [1] * self.n
            self.dims = [int(v) for v in self.dims]
            if len(self.dims) != self.n:
                raise InvalidDims(f"{len(self.dims)} dims given for n={self.n} subspaces")
            if any(v < 1 or v >= self.d for v in self.dims):
                raise InvalidDims(f"subspace dims must lie in [1, {self.d - 1}], got {self.dims}")
            if self.alpha is None:
                self.alpha = [1.0 / self.n] * self.n
            a = np.asarray(self.alpha, dtype=np.float64)
            if a.shape != (self.n,) or np.any(a <= 0) or abs(a.sum() - 1.0) > 1e-12:
                raise InvalidDims("alpha must be n positive weights summing to 1")
            if self.noise < 0:
                raise ValueError("noise must be non-negative")


def draw_sources(rs: np.random.Generator, kind: str, N: int) -> np.ndarray:
    if kind == "uniform":
        return rs.uniform(-np.sqrt(3.0), np.sqrt(3.0), N)
    if kind == "laplace":
        return rs.laplace(0.0, 1.0 / np.sqrt(2.0), N)
    if kind == "rademacher":
        return rs.choice([-1.0, 1.0], N)
    if kind == "gaussian":
        return rs.standard_normal(N)
    raise ValueError(f"unknown source kind {kind!r}")


def gen_ica(spec: GenSpec):
    """Return ``(X, Q0, kappa)`` with ``X = S Q0^T`` for independent sources ``S``."""
    rs = np.random.default_rng(spec.seed)
    S = np.column_stack([draw_sources(rs, k, spec.N) for k in spec.sources])
    if spec.mixing is not None:
        q0 = spec.mixing
    elif spec.d == 1:
        q0 = np.ones((1, 1))
    else:
        q0 = special_ortho_group.rvs(spec.d, random_state=rs)
    kappa = np.array([SOURCE_KURTOSIS[k] for k in spec.sources])
    return S @ q0.T, q0, kappa


def gen_subspaces(spec: GenSpec):
    """Return ``(X, labels, bases)`` for a noisy union of subspaces."""
    rs = np.random.default_rng(spec.seed)
    bases = [np.linalg.qr(rs.standard_normal((spec.d, k)))[0] for k in spec.dims]
    labels = rs.choice(spec.n, size=spec.N, p=np.asarray(spec.alpha))
    X = np.zeros((spec.N, spec.d))
    for i, b in enumerate(bases):
        idx = labels == i
        X[idx] = rs.standard_normal((int(idx.sum()), b.shape[1])) @ b.T
    if spec.noise > 0:
        X += spec.noise * rs.standard_normal(X.shape)
    return X, labels, bases


def gen_gaussian(spec: GenSpec) -> np.ndarray:
    return np.random.default_rng(spec.seed).standard_normal((spec.N, spec.d))


def generate(spec: GenSpec):
    """Dispatch on ``spec.model``; returns ``(X, truth)`` with ``truth`` a dict."""
    if spec.model == "ica":
        X, q0, kappa = gen_ica(spec)
        return X, {"mixing": q0, "kappa": kappa, "sources": list(spec.sources)}
    if spec.model == "subspaces":
        X, labels, bases = gen_subspaces(spec)
        return X, {"labels": labels, "bases": bases, "dims": spec.dims, "alpha": list(spec.alpha), "noise": spec.noise}
    return gen_gaussian(spec), {}
