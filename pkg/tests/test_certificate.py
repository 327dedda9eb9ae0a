"""Tests for dual certificate construction, checking and gamma scans."""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.certificate import (
    certificate_gamma_scan,
    check_certificate,
    construct_certificate,
    replay_proof_inequalities,
)
from src.constants import ACCEPTANCE_MARGIN
from src.core import SvdFactors, support_of, tangent_project
from src.diagnostics import diagnose, transversality_check
from src.errors import CertificateError, ValidationError
from src.masks import build_blur_mask, scale_columns
from src.models import LowRankModelSpec, SparseModelSpec, random_low_rank, random_sparse
from src.solver import SolverConfig, relative_error, solve_masked_separation


def _rank_one(m, n, seed):
    return random_low_rank(LowRankModelSpec(m, n, 1, seed=seed))


def _blur_instance(seed, size=20, support=5):
    mask = build_blur_mask(size)
    G, _ = scale_columns(mask, "spectral")
    S0 = random_sparse(SparseModelSpec(size, size, support, seed=seed))
    L0, factors = _rank_one(size, size, seed + 1000)
    return mask, G, S0, L0, factors


def _transversal_blur_instance(start_seed=0):
    for seed in range(start_seed, start_seed + 50):
        instance = _blur_instance(seed)
        _, G, S0, _, factors = instance
        if transversality_check(G, support_of(S0), factors):
            return instance
    raise AssertionError("no transversal blur instance found")


def test_no_sparse_part_gives_sign_matrix():
    L0, factors = _rank_one(4, 4, 1)
    cert = construct_certificate(np.eye(4), np.zeros((4, 4)), factors, gamma=10.0)
    assert np.allclose(cert.Q, factors.sign_matrix, atol=1e-10)
    assert np.max(np.abs(cert.eps_T)) <= 1e-10
    assert cert.cond_b_value <= 1e-10
    assert check_certificate(cert, np.eye(4), np.zeros((4, 4)), factors).ok


def test_no_low_rank_part_gives_scaled_signs():
    S0 = np.array([[1.5, 0.0], [0.0, -1.2]])
    factors = SvdFactors.empty(2, 2)
    cert = construct_certificate(np.eye(2), S0, factors, gamma=0.3)
    assert np.allclose(cert.Q, 0.3 * np.sign(S0), atol=1e-12)
    assert cert.cond_d_value <= 1e-12
    assert np.max(np.abs(cert.eps_omega)) <= 1e-12


def test_manufactured_spectral_violation_fails_condition_b():
    _, factors = _rank_one(4, 4, 2)
    cert = construct_certificate(np.eye(4), np.zeros((4, 4)), factors, gamma=10.0)
    perp = tangent_project(factors, np.random.default_rng(3).standard_normal((4, 4)), complement=True)
    perp_u, _, perp_vt = np.linalg.svd(perp)
    bad = replace(cert, Q=cert.Q + 1.2 * np.outer(perp_u[:, 0], perp_vt[0]))
    verdict = check_certificate(bad, np.eye(4), np.zeros((4, 4)), factors)
    assert not verdict.ok
    assert verdict.failed == ["condition (b)"]
    assert verdict.values.b == pytest.approx(1.2)


def test_construction_validates_inputs():
    _, factors = _rank_one(4, 4, 4)
    with pytest.raises(ValidationError):
        construct_certificate(np.eye(4), np.zeros((4, 4)), factors, gamma=0.0)
    with pytest.raises(ValidationError, match="incompatible"):
        construct_certificate(np.eye(3), np.zeros((3, 4)), factors, gamma=1.0)
    with pytest.raises(ValidationError, match="too large"):
        construct_certificate(np.eye(4), np.eye(4), factors, gamma=1.0, size_guard=5)


def test_blur_certificate_reconstruction_and_proof_replay():
    _, G, S0, _, factors = _transversal_blur_instance()
    report = diagnose(G, S0, factors, xi_samples=8)
    gamma = (
        0.5 * sum(report.gamma_interval) if report.gamma_interval else 1 / np.sqrt(20)
    )
    cert = construct_certificate(G, S0, factors, gamma)
    assert cert.cond_a_residual <= 1e-8
    assert cert.cond_c_residual <= 1e-8
    rebuilt = G @ cert.Q_omega + cert.Q_T
    assert np.linalg.norm(cert.Q - rebuilt) <= 1e-8 * max(1.0, np.linalg.norm(cert.Q))
    assert np.allclose(cert.eps_omega, cert.Q_omega - gamma * np.sign(S0))

    replay = replay_proof_inequalities(cert, G, factors, report.mu_upper, report.xi_upper, report.delta)
    assert replay.fixed_point_residual <= 1e-8
    assert replay.ok


def test_gamma_scan_extremes():
    _, G, S0, _, factors = _transversal_blur_instance()
    rows = certificate_gamma_scan(G, S0, factors, [1e-6, 1e4])
    assert [row.gamma for row in rows] == [1e-6, 1e4]
    assert "condition (d)" in rows[0].failed
    assert "condition (b)" in rows[1].failed


def test_gamma_scan_parallel_matches_serial():
    _, G, S0, _, factors = _transversal_blur_instance()
    gammas = list(np.geomspace(0.05, 5.0, 5))
    serial = certificate_gamma_scan(G, S0, factors, gammas)
    threaded = certificate_gamma_scan(G, S0, factors, gammas, workers=3)
    assert [r.gamma for r in serial] == gammas
    assert [r.ok for r in serial] == [r.ok for r in threaded]
    assert np.allclose([r.values.b for r in serial], [r.values.b for r in threaded])
    with pytest.raises(ValidationError):
        certificate_gamma_scan(G, S0, factors, [0.1, -1.0])


def test_replay_rejects_large_delta():
    _, factors = _rank_one(4, 4, 5)
    cert = construct_certificate(np.eye(4), np.zeros((4, 4)), factors, gamma=10.0)
    with pytest.raises(ValidationError):
        replay_proof_inequalities(cert, np.eye(4), factors, 1.0, 1.0, 1.0)


@pytest.mark.slow
def test_scan_covers_analytic_window():
    """Identity mask with one spike and a flat rank-one L0 satisfies the theorem."""
    m = 160
    S0 = np.zeros((m, m))
    S0[3, 5] = 1.5
    u = np.full((m, 1), 1 / np.sqrt(m))
    factors = SvdFactors(u, np.array([10.0]), u.copy())
    report = diagnose(np.eye(m), S0, factors, xi_samples=4)
    assert report.theorem_ok
    lo, hi = report.gamma_interval
    gammas = [lo + f * (hi - lo) for f in (0.25, 0.5, 0.75)]
    rows = certificate_gamma_scan(np.eye(m), S0, factors, gammas)
    assert all(row.ok for row in rows)


def _flat_identity_instance(m=160):
    S0 = np.zeros((m, m))
    S0[3, 5] = 1.5
    u = np.full((m, 1), 1 / np.sqrt(m))
    factors = SvdFactors(u, np.array([10.0]), u.copy())
    return np.eye(m), S0, 10.0 * u @ u.T, factors


@pytest.mark.slow
def test_passing_certificate_implies_exact_recovery():
    instances = [_blur_instance(seed)[1:] for seed in range(20)]
    instances.append(_flat_identity_instance())
    passed = 0
    for seed, (G, S0, L0, factors) in enumerate(instances):
        report = diagnose(G, S0, factors, xi_samples=8, seed=seed)
        gamma = 0.5 * sum(report.gamma_interval) if report.gamma_interval else 1 / np.sqrt(20)
        try:
            cert = construct_certificate(G, S0, factors, gamma)
        except CertificateError:
            continue
        if not check_certificate(cert, G, S0, factors, ACCEPTANCE_MARGIN).ok:
            continue
        config = SolverConfig(gamma=gamma, max_iter=20000, tol_primal=1e-10, tol_change=1e-10)
        result = solve_masked_separation(G @ S0 + L0, G, config)
        assert relative_error(S0, result.S_hat) <= 1e-4
        assert relative_error(L0, result.L_hat) <= 1e-4
        passed += 1
    assert passed >= 1


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
