import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cskl.decode import DiagonalizableTensor, decode_ica, decode_low_rank
from cskl.errors import DegenerateSpectrum, InvalidDims, LengthMismatch, SingularProduct
from cskl.models import (
    amari_index,
    clustering_error,
    direct_ica,
    gpca_cluster,
    gpca_polynomials,
    ica_extract,
    pca_extract,
    principal_angles,
    signed_permutation_distance,
)
from cskl.sketch import MATRIX, TENSOR, apply, make_operator, sketch_stream
from cskl.statistics import (
    cumulant_from_sources,
    embedded_correlation,
    empirical_cumulant,
    fit_whitener,
    second_moment,
    veronese_embed,
)
from cskl.synth import GenSpec, gen_ica, gen_subspaces

from conftest import random_orthogonal


def signed_scaled_permutation(rs, d):
    p = np.eye(d)[rs.permutation(d)]
    return p * rs.choice([-1, 1], d) * rs.uniform(0.5, 2.0, d)


# --- Amari index -------------------------------------------------------------


def test_amari_inverse_is_zero(rs):
    a = rs.standard_normal((4, 4))
    assert amari_index(np.linalg.inv(a), a) == pytest.approx(0.0, abs=1e-12)


def test_amari_hand_value():
    # rows: 2 * (1.1/1 - 1); columns: the same; divided by 2 d (d-1) = 4
    p = np.array([[1.0, 0.1], [0.1, 1.0]])
    assert amari_index(p, np.eye(2)) == pytest.approx((0.2 + 0.2) / 4)
    assert amari_index(p, np.eye(2)) == pytest.approx(0.1)


def test_amari_singular():
    with pytest.raises(SingularProduct):
        amari_index(np.ones((2, 2)), np.eye(2))


@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_amari_zero_iff_signed_permutation(seed, d):
    rs = np.random.default_rng(seed)
    p = signed_scaled_permutation(rs, d)
    assert amari_index(p, np.eye(d)) == pytest.approx(0.0, abs=1e-14)
    mixed = p + 0.05 * np.abs(rs.standard_normal((d, d))) + 0.01
    assert amari_index(mixed, np.eye(d)) > 0


# --- ICA extraction ----------------------------------------------------------


def test_ica_extract_identity_mixing(rs):
    s = rs.uniform(-math.sqrt(3), math.sqrt(3), (20_000, 3))
    w = fit_whitener(s)
    xw = w.apply(s)
    op = make_operator(TENSOR, 1, 90, 3)
    t = decode_ica(op, apply(op, empirical_cumulant(xw))).tensor
    h = ica_extract(t, w)
    # close to a signed permutation of I (up to whitening noise)
    assert amari_index(h.unmixing, np.eye(3)) <= 0.05
    np.testing.assert_allclose(np.sort(np.abs(h.unmixing).max(axis=1)), 1, atol=0.05)


def test_ica_extract_unit_rows(rs):
    x = rs.uniform(-1, 1, (5000, 3)) @ rs.standard_normal((3, 3))
    w = fit_whitener(x)
    t = DiagonalizableTensor(random_orthogonal(rs, 3), np.ones(3))
    h = ica_extract(t, w)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / x.shape[0]
    np.testing.assert_allclose(h.unmixing @ cov @ h.unmixing.T, np.eye(3), atol=1e-6)


def test_ica_extract_synthetic_d3():
    X, q0, _ = gen_ica(GenSpec(seed=3, model="ica", d=3, N=100_000))
    w = fit_whitener(X)
    op = make_operator(TENSOR, 3, 90, 3)
    t = decode_ica(op, sketch_stream(op, X, "ica", whitener=w)).tensor
    h = ica_extract(t, w, n_samples=X.shape[0])
    assert amari_index(h.unmixing, q0) <= 0.05
    assert h.identifiable
    xs = X @ h.unmixing.T
    tc = empirical_cumulant(fit_whitener(xs).apply(xs))
    off = tc.copy()
    off[(np.arange(3),) * 4] = 0
    assert np.abs(off).max() <= 0.05


def test_ica_gaussian_flagged():
    X, _, _ = gen_ica(GenSpec(seed=4, model="ica", d=3, N=100_000, sources=["gaussian"]))
    w = fit_whitener(X)
    op = make_operator(TENSOR, 4, 90, 3)
    t = decode_ica(op, sketch_stream(op, X, "ica", whitener=w)).tensor
    assert np.abs(t.kappa).max() < 0.2
    h = ica_extract(t, w, n_samples=X.shape[0])
    assert not h.identifiable


def test_direct_ica_recovers_exact_tensor(rs):
    q0 = random_orthogonal(rs, 3)
    t = direct_ica(cumulant_from_sources(q0, [-1.2, 3.0, -2.0]))
    assert signed_permutation_distance(t.Q, q0) <= 1e-8


# --- GPCA polynomials --------------------------------------------------------


def axis_lines(rs, per=100):
    t = rs.standard_normal(2 * per)
    x = np.vstack([np.column_stack([t[:per], np.zeros(per)]), np.column_stack([np.zeros(per), t[per:]])])
    return x, np.repeat([0, 1], per)


def test_polynomials_two_lines(rs):
    x, _ = axis_lines(rs)
    polys = gpca_polynomials(embedded_correlation(x, 2), 2, d=2)
    assert polys.shape == (1, 3)
    np.testing.assert_allclose(np.abs(polys[0]), [0, 1, 0], atol=1e-10)


def test_polynomials_full_rank(rs):
    corr = embedded_correlation(rs.standard_normal((500, 3)), 2)
    assert gpca_polynomials(corr, 2).shape == (0, 6)


def test_polynomials_constructed_null_space(rs):
    D = 6
    basis = np.linalg.qr(rs.standard_normal((D, D)))[0]
    null = basis[:, :2]
    corr = basis[:, 2:] @ np.diag([5.0, 3.0, 2.0, 1.0]) @ basis[:, 2:].T
    polys = gpca_polynomials(corr, 2)
    assert polys.shape[0] == 2
    assert principal_angles(polys.T, null).max() <= 1e-8


def test_polynomials_vanish_on_data(rs):
    x, _, _ = gen_subspaces(GenSpec(seed=1, model="subspaces", d=3, N=300, n=2, dims=[2, 1]))
    polys = gpca_polynomials(embedded_correlation(x, 2), 2)
    assert polys.shape[0] >= 1
    v = veronese_embed(x, 2)
    lhs = np.abs(v @ polys.T)
    rhs = 1e-8 * np.linalg.norm(v, axis=1)[:, None] * np.linalg.norm(polys, axis=1)[None, :]
    assert np.all(lhs <= rhs)


def test_polynomials_degenerate_warning():
    corr = np.diag([1e-7, 2e-7, 1.0])
    with pytest.warns(DegenerateSpectrum):
        polys = gpca_polynomials(corr, 1, rank_tol=1.5e-7)
    assert polys.shape[0] == 2


# --- GPCA clustering ---------------------------------------------------------


def test_cluster_orthogonal_lines(rs):
    x, truth = axis_lines(rs)
    polys = gpca_polynomials(embedded_correlation(x, 2), 2)
    h = gpca_cluster(x, polys, 2, [1, 1])
    assert clustering_error(h.labels, truth) == 0.0
    found = sorted(np.abs(b[:, 0]).argmax() for b in h.bases)
    assert found == [0, 1]
    for b in h.bases:
        assert np.abs(b[:, 0]).max() == pytest.approx(1.0, abs=1e-12)


def test_cluster_single_subspace_is_pca(rs):
    x = rs.standard_normal((200, 2)) @ np.array([[3.0, 0, 0], [0, 1.0, 0]])
    h = gpca_cluster(x, np.zeros((0, 3)), 1, [2])
    assert np.all(h.labels == 0)
    assert principal_angles(h.bases[0], np.eye(3)[:, :2]).max() <= 1e-10


def test_cluster_noisy_planes():
    x, truth, _ = gen_subspaces(GenSpec(seed=2, model="subspaces", d=3, N=2000, n=2, dims=[2, 2], noise=0.01))
    polys = gpca_polynomials(embedded_correlation(x, 2), 2, rank_tol=1e-3)
    h = gpca_cluster(x, polys, 2, [2, 2])
    assert 1 - clustering_error(h.labels, truth) >= 0.95
    for b in h.bases:
        np.testing.assert_allclose(b.T @ b, np.eye(2), atol=1e-8)


def test_cluster_mixed_dims():
    x, truth, bases = gen_subspaces(GenSpec(seed=5, model="subspaces", d=3, N=600, n=2, dims=[1, 2]))
    polys = gpca_polynomials(embedded_correlation(x, 2), 2)
    h = gpca_cluster(x, polys, 2, [1, 2])
    assert clustering_error(h.labels, truth) <= 0.02
    assert sorted(b.shape[1] for b in h.bases) == [1, 2]


def test_cluster_invalid_dims(rs):
    x, _ = axis_lines(rs)
    with pytest.raises(InvalidDims):
        gpca_cluster(x, np.ones((1, 3)), 2, [1])


# --- clustering error --------------------------------------------------------


def test_clustering_error_examples():
    truth = np.array([0] * 5 + [1] * 5)
    assert clustering_error(truth, truth) == 0
    assert clustering_error(1 - truth, truth) == 0
    pred = truth.copy()
    pred[0] = 1
    assert clustering_error(pred, truth) == pytest.approx(0.1)
    with pytest.raises(LengthMismatch):
        clustering_error(truth[:3], truth)


@given(st.integers(0, 2**31 - 1), st.integers(1, 10))
def test_clustering_error_relabel_invariant(seed, k):
    rs = np.random.default_rng(seed)
    truth = rs.integers(0, k, 60)
    pred = rs.integers(0, k, 60)
    perm = rs.permutation(k)
    assert clustering_error(perm[pred], truth) == clustering_error(pred, truth)


def test_clustering_error_large_k_matches_enumeration(rs):
    truth = rs.integers(0, 9, 200)
    pred = rs.integers(0, 9, 200)
    counts = np.zeros((9, 9), int)
    np.add.at(counts, (pred, truth), 1)
    best = max(counts[np.arange(9), list(p)].sum() for p in itertools.permutations(range(9)))
    assert clustering_error(pred, truth) == pytest.approx(1 - best / 200)


# --- PCA ---------------------------------------------------------------------


def test_pca_diag():
    h = pca_extract(np.diag([3.0, 2.0, 1.0]), 2)
    assert principal_angles(h.basis, np.eye(3)[:, :2]).max() <= 1e-12
    assert not h.degenerate


def test_pca_tied_spectrum():
    h = pca_extract(np.eye(4), 2)
    np.testing.assert_allclose(h.basis.T @ h.basis, np.eye(2), atol=1e-8)
    assert h.degenerate


def test_pca_from_sketch_matches_direct(rs):
    d, k = 10, 2
    x = rs.standard_normal((5000, k)) @ rs.standard_normal((k, d)) * 2 + 0.01 * rs.standard_normal((5000, d))
    direct = pca_extract(second_moment(x), k)
    op = make_operator(MATRIX, 9, 6 * k * d, d)
    decoded = decode_low_rank(op, sketch_stream(op, x, "pca")).matrix
    got = pca_extract(decoded, k)
    assert principal_angles(got.basis, direct.basis).max() <= 1e-2
