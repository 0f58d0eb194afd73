import math

import numpy as np
import pytest

from cskl.errors import FingerprintMismatch, InvalidSize, KindMismatch, LengthMismatch, ShapeMismatch
from cskl.sketch import (
    MATRIX,
    TENSOR,
    SketchVector,
    apply,
    apply_adjoint,
    gaussian_baseline,
    make_operator,
    merge_sketches,
    sketch_stream,
)
from cskl.statistics import (
    MomentAccumulator,
    embedded_correlation,
    empirical_cumulant,
    fit_whitener,
    second_moment,
    veronese_dim,
)


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300)


def sym(rs, D):
    a = rs.standard_normal((D, D))
    return a + a.T


def test_operator_determinism():
    a = make_operator(TENSOR, 42, 10, 3)
    b = make_operator(TENSOR, 42, 10, 3)
    np.testing.assert_array_equal(a.vectors, b.vectors)
    assert a.vectors.tobytes() == b.vectors.tobytes()
    assert not np.array_equal(a.vectors, make_operator(TENSOR, 43, 10, 3).vectors)


def test_rows_do_not_depend_on_m():
    a = make_operator(MATRIX, 9, 3, 5)
    b = make_operator(MATRIX, 9, 7, 5)
    np.testing.assert_allclose(a.vectors * 3**0.25, b.vectors[:3] * 7**0.25, rtol=1e-14)


def test_kinds_use_separate_streams():
    a = make_operator(MATRIX, 9, 2, 16)
    b = make_operator(TENSOR, 9, 2, 2)
    assert not np.allclose(a.vectors, b.vectors)


def test_tensor_vector_length():
    op = make_operator(TENSOR, 0, 4, 3)
    assert op.vectors.shape == (4, 81)


def test_sampling_variance():
    op = make_operator(TENSOR, 5, 100, 4)
    v = op.vectors.var()
    assert abs(v - 1 / math.sqrt(100)) <= 0.1 / math.sqrt(100)


def test_invalid_sizes():
    with pytest.raises(InvalidSize):
        make_operator(MATRIX, 0, 0, 3)
    with pytest.raises(InvalidSize):
        make_operator(MATRIX, 0, 3, 0)
    with pytest.raises(KindMismatch):
        make_operator("fourier", 0, 3, 3)


def test_apply_zero_and_shape():
    op = make_operator(MATRIX, 1, 6, 4)
    np.testing.assert_array_equal(apply(op, np.zeros((4, 4))), np.zeros(6))
    with pytest.raises(ShapeMismatch):
        apply(op, np.zeros((3, 3)))


def test_rank_one_hand_example():
    op = make_operator(MATRIX, 0, 1, 2)
    op.__dict__["vectors"] = np.array([[1.0, 1.0]])
    assert apply(op, np.array([[1.0, 2.0], [2.0, 4.0]]))[0] == 9.0


def test_rank_one_is_trace_form(rs):
    op = make_operator(MATRIX, 3, 5, 4)
    s = sym(rs, 4)
    expected = [np.trace(np.outer(a, a) @ s) for a in op.vectors]
    np.testing.assert_allclose(apply(op, s), expected, rtol=1e-12)


@pytest.mark.parametrize("kind,amb", [(MATRIX, 8), (TENSOR, 3)])
def test_linearity_100(rs, kind, amb):
    op = make_operator(kind, 11, 20, amb)
    shape = op.statistic_shape
    worst = 0.0
    for _ in range(100):
        s1, s2 = rs.standard_normal(shape), rs.standard_normal(shape)
        a, b = rs.standard_normal(2)
        lhs = apply(op, a * s1 + b * s2)
        rhs = a * apply(op, s1) + b * apply(op, s2)
        worst = max(worst, rel(lhs, rhs))
    assert worst <= 1e-12


@pytest.mark.parametrize("kind,amb", [(MATRIX, 8), (TENSOR, 3)])
def test_adjoint_identity_100(rs, kind, amb):
    op = make_operator(kind, 12, 20, amb)
    worst = 0.0
    for _ in range(100):
        s = rs.standard_normal(op.statistic_shape)
        y = rs.standard_normal(op.m)
        lhs = apply(op, s) @ y
        rhs = np.sum(s * apply_adjoint(op, y))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    assert worst <= 1e-10


def test_adjoint_examples():
    op = make_operator(MATRIX, 2, 1, 4)
    a = op.vectors[0]
    np.testing.assert_allclose(apply_adjoint(op, [1.0]), np.outer(a, a), rtol=1e-15)
    np.testing.assert_array_equal(apply_adjoint(op, [0.0]), np.zeros((4, 4)))
    with pytest.raises(LengthMismatch):
        apply_adjoint(op, [1.0, 2.0])


def test_full_rank_tensor_recovery(rs):
    op = make_operator(TENSOR, 4, 81, 3)
    s = rs.standard_normal((3, 3, 3, 3))
    sol = np.linalg.solve(op.matrix, apply(op, s))
    assert rel(sol, s.ravel()) <= 1e-8


def test_full_rank_matrix_recovery(rs):
    D = 6
    op = make_operator(MATRIX, 4, 21, D)
    s = sym(rs, D)
    iu = np.triu_indices(D)
    # measurements in the upper-triangular parametrization of symmetric matrices
    a = op.vectors
    coef = np.einsum("mi,mj->mij", a, a)
    coef = coef + np.transpose(coef, (0, 2, 1)) - np.einsum("mi,mi,ij->mij", a, a, np.eye(D))
    sol = np.linalg.solve(coef[:, iu[0], iu[1]], apply(op, s))
    assert rel(sol, s[iu]) <= 1e-8


# --- streaming ---------------------------------------------------------------


def test_stream_ica_matches_materialized(rs):
    x = rs.uniform(-1, 1, (3000, 3)) @ rs.standard_normal((3, 3))
    w = fit_whitener(x)
    op = make_operator(TENSOR, 8, 30, 3)
    sk = sketch_stream(op, x, "ica", whitener=w)
    direct = apply(op, empirical_cumulant(w.apply(x)))
    assert rel(sk.values, direct) <= 1e-9
    assert sk.n_samples == 3000 and sk.fingerprint == op.fingerprint


def test_stream_gpca_and_pca_match_materialized(rs):
    x = rs.standard_normal((500, 3))
    D = veronese_dim(3, 3)
    op = make_operator(MATRIX, 8, 25, D)
    assert rel(sketch_stream(op, x, "gpca", degree=3).values, apply(op, embedded_correlation(x, 3))) <= 1e-9
    op = make_operator(MATRIX, 8, 7, 3)
    assert rel(sketch_stream(op, x, "pca").values, apply(op, second_moment(x))) <= 1e-9


def test_stream_chunks_iterable(rs):
    x = rs.standard_normal((1000, 3))
    op = make_operator(MATRIX, 1, 12, 6)
    a = sketch_stream(op, x, "gpca", degree=2)
    b = sketch_stream(op, iter(np.array_split(x, 9)), "gpca", degree=2)
    assert rel(b.values, a.values) <= 1e-12


def test_stream_halves_merge(rs):
    x = rs.uniform(-1, 1, (2001, 3))
    w = fit_whitener(x)
    op = make_operator(TENSOR, 2, 15, 3)
    full = sketch_stream(op, x, "ica", whitener=w)
    a = sketch_stream(op, x[:700], "ica", whitener=w)
    b = sketch_stream(op, x[700:], "ica", whitener=w)
    merged = merge_sketches(a, b)
    assert merged.n_samples == 2001
    assert rel(merged.values, full.values) <= 1e-12
    weighted = (a.n_samples * a.values + b.n_samples * b.values) / 2001
    assert rel(weighted, full.values) <= 1e-12


def test_gaussian_ica_sketch_vanishes():
    rs = np.random.default_rng(0)
    op = make_operator(TENSOR, 0, 20, 3)
    norms = []
    for n in (1_000, 100_000):
        reps = []
        for _ in range(5):
            x = rs.standard_normal((n, 3))
            reps.append(np.linalg.norm(sketch_stream(op, x, "ica", whitener=fit_whitener(x)).values))
        norms.append(np.mean(reps))
    # 100x the samples -> about 10x smaller
    assert norms[1] < norms[0] / 5


def test_gaussian_baseline_is_sketch_of_G():
    op = make_operator(TENSOR, 3, 5, 2)
    eye = np.eye(2)
    g = np.zeros((2, 2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    g[i, j, k, l] = eye[i, j] * eye[k, l] + eye[i, k] * eye[j, l] + eye[i, l] * eye[j, k]
    np.testing.assert_allclose(gaussian_baseline(op), op.vectors @ g.ravel(), rtol=1e-14)


def test_stream_errors(rs):
    x = rs.standard_normal((10, 3))
    with pytest.raises(KindMismatch):
        sketch_stream(make_operator(MATRIX, 0, 3, 3), x, "ica", whitener=fit_whitener(x))
    with pytest.raises(ValueError):
        sketch_stream(make_operator(TENSOR, 0, 3, 3), x, "ica")
    with pytest.raises(ValueError):
        sketch_stream(make_operator(MATRIX, 0, 3, 6), x, "gpca")
    with pytest.raises(Exception):
        sketch_stream(make_operator(MATRIX, 0, 3, 5), x, "gpca", degree=2)


def test_merge_rejects_foreign_sketch():
    a = SketchVector(np.zeros(3), (MATRIX, 0, 3, 4), n_samples=1)
    b = SketchVector(np.zeros(3), (MATRIX, 1, 3, 4), n_samples=1)
    with pytest.raises(FingerprintMismatch):
        merge_sketches(a, b)
    with pytest.raises(LengthMismatch):
        SketchVector(np.zeros(2), (MATRIX, 0, 3, 4))
