"""Tests for dense-matrix primitives."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core import (
    SupportSet,
    SvdFactors,
    degree_stats,
    norm,
    pseudoinverse,
    reduced_svd,
    singular_value_threshold,
    soft_threshold,
    support_image_basis,
    support_of,
    support_project,
    tangent_basis,
    tangent_project,
)
from src.errors import ValidationError


def _random_factors(rng, m, n, r):
    U, _ = np.linalg.qr(rng.standard_normal((m, r)))
    V, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return SvdFactors(U, np.ones(r), V)


def test_reduced_svd_drops_small_values():
    f = reduced_svd(np.diag([3.0, 0.0]), rank_tol=1e-12)
    assert f.rank == 1
    assert np.allclose(f.singular_values, [3.0])
    f = reduced_svd(np.eye(3))
    assert f.rank == 3
    assert np.allclose(f.singular_values, [1, 1, 1])


def test_reduced_svd_reconstructs():
    A = np.random.default_rng(0).standard_normal((5, 4))
    f = reduced_svd(A)
    assert np.max(np.abs(f.reconstruct() - A)) <= 1e-8 * np.linalg.norm(A, 2)
    assert f.is_orthonormal()
    assert np.all(np.diff(f.singular_values) <= 0)


def test_reduced_svd_rejects_non_finite():
    with pytest.raises(ValidationError, match="non-finite"):
        reduced_svd(np.array([[1.0, np.nan]]))


def test_norm_kinds():
    A = np.array([[1.0, -2.0], [3.0, 4.0]])
    assert norm(A, "mi") == 7
    assert norm(np.diag([3.0, 4.0]), "nuclear") == pytest.approx(7)
    assert norm(A, "inf_entry") == 4
    assert norm(A, "one_entry") == 10
    assert norm(A, "frobenius") == pytest.approx(np.sqrt(30))
    assert norm(np.diag([3.0, 4.0]), "spectral") == pytest.approx(4)
    with pytest.raises(ValidationError):
        norm(A, "operator")


def test_nuclear_norm_matches_eigenvalues():
    A = np.random.default_rng(1).standard_normal((4, 4))
    eig = np.linalg.eigvalsh(A.T @ A)
    assert abs(norm(A, "nuclear") - np.sum(np.sqrt(np.clip(eig, 0, None)))) <= 1e-8


def test_soft_threshold():
    out = soft_threshold(np.array([[5.0, -1.0, -4.0]]), 2.0)
    assert np.array_equal(out, [[3.0, 0.0, -2.0]])
    A = np.array([[1.5, -0.2]])
    assert np.array_equal(soft_threshold(A, 0.0), A)
    with pytest.raises(ValidationError):
        soft_threshold(A, -1.0)


def test_singular_value_threshold():
    assert np.allclose(singular_value_threshold(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]))
    A = np.random.default_rng(2).standard_normal((3, 3))
    assert np.allclose(singular_value_threshold(A, 0.0), A)
    with pytest.raises(ValidationError):
        singular_value_threshold(A, -0.5)


def test_svt_satisfies_subgradient_condition():
    """X = SVT_tau(A) iff (A - X)/tau is a nuclear-norm subgradient at X."""
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 5))
    tau = 0.5
    X = singular_value_threshold(A, tau)
    f = reduced_svd(X)
    Q = (A - X) / tau
    assert np.linalg.norm(tangent_project(f, Q) - f.sign_matrix) <= 1e-6
    assert np.linalg.norm(tangent_project(f, Q, complement=True), 2) <= 1 + 1e-6
    assert np.linalg.norm(A - X, 2) <= tau + 1e-10


def test_tangent_project_examples():
    e1 = np.array([[1.0], [0.0]])
    f = SvdFactors(e1, np.ones(1), e1)
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(tangent_project(f, X), [[1, 2], [3, 0]])
    assert np.allclose(tangent_project(f, X) + tangent_project(f, X, complement=True), X)

    rng = np.random.default_rng(4)
    g = _random_factors(rng, 5, 4, 2)
    in_t = g.U @ rng.standard_normal((2, 4))
    assert np.allclose(tangent_project(g, in_t), in_t)


def test_tangent_project_rank_zero():
    f = SvdFactors.empty(3, 2)
    X = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(tangent_project(f, X), np.zeros((3, 2)))
    assert np.array_equal(tangent_project(f, X, complement=True), X)


def test_tangent_project_shape_mismatch():
    with pytest.raises(ValidationError):
        tangent_project(SvdFactors.empty(3, 2), np.zeros((2, 3)))


def test_projection_identities():
    rng = np.random.default_rng(5)
    for _ in range(20):
        f = _random_factors(rng, 7, 6, 2)
        X = rng.standard_normal((7, 6))
        PX = tangent_project(f, X)
        assert np.linalg.norm(tangent_project(f, PX) - PX) <= 1e-10 * np.linalg.norm(X)
        spec = np.linalg.norm(X, 2)
        assert np.linalg.norm(tangent_project(f, X, complement=True), 2) <= spec + 1e-10
        assert np.linalg.norm(PX, 2) <= 2 * spec + 1e-10


def test_dual_norm_and_mi_inequalities():
    rng = np.random.default_rng(6)
    for _ in range(20):
        A = rng.standard_normal((4, 5))
        B = rng.standard_normal((4, 5))
        inner = abs(np.sum(A * B))
        assert inner <= norm(A, "nuclear") * norm(B, "spectral") + 1e-10
        assert inner <= norm(A, "one_entry") * norm(B, "inf_entry") + 1e-10
        M = rng.standard_normal((5, 3))
        assert norm(A @ M, "inf_entry") <= norm(A, "mi") * norm(M, "inf_entry") + 1e-10


def test_svt_contraction():
    rng = np.random.default_rng(7)
    for tau in (0.1, 0.7, 2.0):
        A = rng.standard_normal((5, 6))
        assert np.linalg.norm(A - singular_value_threshold(A, tau), 2) <= tau + 1e-10


def test_support_project():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((3, 3))
    full = SupportSet(np.ones((3, 3), dtype=bool))
    empty = SupportSet(np.zeros((3, 3), dtype=bool))
    assert np.array_equal(support_project(X, full), X)
    assert np.array_equal(support_project(X, empty), np.zeros((3, 3)))
    omega = SupportSet(rng.random((3, 3)) < 0.5)
    once = support_project(X, omega)
    assert np.array_equal(support_project(once, omega), once)
    assert np.array_equal(once + support_project(X, omega, complement=True), X)
    with pytest.raises(ValidationError):
        support_project(np.zeros((2, 3)), omega)


def test_pseudoinverse():
    assert np.allclose(pseudoinverse(np.eye(3)), np.eye(3))
    assert np.allclose(pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    H = np.random.default_rng(9).standard_normal((6, 4))
    Hp = pseudoinverse(H)
    scale = np.linalg.norm(H, 2)
    assert np.max(np.abs(H @ Hp @ H - H)) <= 1e-8 * scale
    assert np.max(np.abs(Hp @ H @ Hp - Hp)) <= 1e-8 * scale


def test_degree_stats():
    assert degree_stats(np.zeros((3, 4))) == (0, 0, 0)
    assert degree_stats(np.eye(4)) == (1, 1, 1)
    S = np.zeros((3, 3))
    S[1] = 1.0
    stats = degree_stats(S)
    assert stats.d_r == 3 and stats.d_c == 1 and stats.d == 3
    assert degree_stats(np.array([[1e-3, 1.0]]), zero_tol=1e-2) == (1, 1, 1)


def test_tangent_basis_dimension_and_span():
    rng = np.random.default_rng(10)
    f = _random_factors(rng, 5, 4, 2)
    B = tangent_basis(f)
    assert B.shape == (20, 2 * (5 + 4 - 2))
    assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-10)
    X = rng.standard_normal((5, 4))
    via_basis = (B @ (B.T @ X.ravel())).reshape(5, 4)
    assert np.allclose(via_basis, tangent_project(f, X), atol=1e-10)


def test_support_image_basis_columns():
    G = np.arange(6.0).reshape(2, 3)
    omega = SupportSet.from_indices(3, 2, [(1, 0), (2, 1)])
    A = support_image_basis(G, omega)
    first = np.zeros((2, 2))
    first[:, 0] = G[:, 1]
    second = np.zeros((2, 2))
    second[:, 1] = G[:, 2]
    assert np.array_equal(A[:, 0], first.ravel())
    assert np.array_equal(A[:, 1], second.ravel())
    assert support_of(np.array([[0.0, 2.0]])).cardinality == 1


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
