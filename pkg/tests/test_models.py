"""Tests for the random instance generators."""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core import norm, reduced_svd
from src.errors import ValidationError
from src.models import (
    LowRankModelSpec,
    SparseModelSpec,
    degree_tail_check,
    eda_tonic,
    gaussian_noise,
    predicted_degree,
    random_low_rank,
    random_sparse,
)


def test_random_sparse_support_size():
    assert np.array_equal(random_sparse(SparseModelSpec(4, 5, 0)), np.zeros((4, 5)))
    full = random_sparse(SparseModelSpec(3, 4, 12, seed=1))
    assert np.all((full >= 1.0) & (full <= 2.0))
    S = random_sparse(SparseModelSpec(100, 100, 300, seed=2))
    assert np.count_nonzero(S) == 300


def test_random_sparse_rejects_bad_spec():
    with pytest.raises(ValidationError):
        SparseModelSpec(2, 2, 5)
    with pytest.raises(ValidationError):
        SparseModelSpec(2, 2, 1, value_low=3.0, value_high=2.0)


def test_random_sparse_is_deterministic():
    spec = SparseModelSpec(10, 10, 20, seed=42)
    assert np.array_equal(random_sparse(spec), random_sparse(spec))


def test_random_sparse_inclusion_is_uniform():
    p, n, s, draws = 5, 5, 5, 2000
    counts = np.zeros((p, n))
    for seed in range(draws):
        counts += random_sparse(SparseModelSpec(p, n, s, seed=seed)) != 0
    rate = s / (p * n)
    sd = math.sqrt(rate * (1 - rate) / draws)
    assert np.max(np.abs(counts / draws - rate)) <= 4 * sd


def test_random_low_rank_unit_rank_one():
    L, factors = random_low_rank(LowRankModelSpec(6, 5, 1, singular_values=[1.0], seed=3))
    assert abs(norm(L, "nuclear") - 1.0) <= 1e-10
    assert reduced_svd(L).rank == 1
    assert factors.is_orthonormal()


def test_random_low_rank_recovers_singular_values():
    sigma = [5.0, 3.0, 2.0, 1.0]
    L, factors = random_low_rank(LowRankModelSpec(6, 4, 4, singular_values=sigma, seed=4))
    assert np.allclose(reduced_svd(L).singular_values, sigma, atol=1e-8)
    assert abs(norm(L, "nuclear") - sum(sigma)) <= 1e-8
    assert np.allclose(factors.singular_values, sigma)


def test_random_low_rank_default_singular_values_are_balanced():
    _, factors = random_low_rank(LowRankModelSpec(8, 18, 2, seed=5))
    assert np.allclose(factors.singular_values, math.sqrt(8 * 18 / 2))


def test_right_side_orthogonal_model():
    e1 = np.zeros(5)
    e1[0] = 1.0
    L, _ = random_low_rank(LowRankModelSpec(5, 4, 1, model="right_side_orthogonal", U_input=e1, seed=6))
    assert np.all(L[1:] == 0.0)
    assert np.any(L[0] != 0.0)
    with pytest.raises(ValidationError, match="orthonormal"):
        LowRankModelSpec(5, 4, 1, model="right_side_orthogonal", U_input=2 * e1)
    with pytest.raises(ValidationError):
        LowRankModelSpec(5, 4, 1, model="right_side_orthogonal")


def test_low_rank_rejects_bad_rank():
    with pytest.raises(ValidationError):
        LowRankModelSpec(3, 3, 4)
    with pytest.raises(ValidationError):
        LowRankModelSpec(3, 3, 0)


def test_eda_tonic_is_nearly_rank_one():
    s = scipy.linalg.svdvals(eda_tonic(240, 50))
    assert s[1] / s[0] < 0.05
    assert np.array_equal(eda_tonic(4, 3, amplitude=0.0), np.zeros((4, 3)))
    assert reduced_svd(eda_tonic(6, 5, modulation=0.0)).rank == 1


def test_gaussian_noise():
    assert np.array_equal(gaussian_noise(3, 4, 0.0, 1), np.zeros((3, 4)))
    E = gaussian_noise(200, 200, 0.01, 7)
    assert abs(E.std() - 0.01) <= 0.05 * 0.01
    assert np.array_equal(E, gaussian_noise(200, 200, 0.01, 7))
    with pytest.raises(ValidationError):
        gaussian_noise(2, 2, -1.0, 0)


def test_predicted_degree():
    assert predicted_degree(100, 50, 100) == pytest.approx(max(2 * math.log(50), math.log(100)))


def test_degree_tail_check_edges():
    full = degree_tail_check(2, 2, 4, trials=5, seed=0)
    assert full.row_frequency == 1.0 and full.col_frequency == 1.0
    single = degree_tail_check(10, 10, 1, trials=20, seed=1)
    assert single.max_observed_degree == 1
    assert single.row_frequency == 1.0 and single.col_frequency == 1.0
    with pytest.raises(ValidationError):
        degree_tail_check(5, 5, 2, trials=0, seed=0)


@pytest.mark.slow
def test_degree_tail_frequencies_respect_bound():
    report = degree_tail_check(100, 100, 300, trials=2000, seed=2024)
    assert not report.violation
    assert report.row_frequency <= report.row_bound
    assert report.col_frequency <= report.col_bound


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
