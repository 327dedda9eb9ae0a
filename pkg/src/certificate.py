"""Dual certificates for exact recovery, built as a minimum-norm linear solve.

Q must satisfy P_T(Q) = U V^T and P_Omega(G^T Q) = gamma sign(S0). Both are
linear in vec(Q) through C = [A_Omega | B_T], where the columns of A_Omega are
vec(G E_ij) for (i, j) in Omega and B_T is an orthonormal basis of T. The
minimum-norm solution of C^T q = rhs lies in range(C), so it splits as
Q = G Q_omega + Q_T.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from src.constants import CERT_EQUALITY_TOL, CERT_SIZE_GUARD, STRICT_MARGIN
from src.core import (
    SupportSet,
    SvdFactors,
    check_finite,
    support_image_basis,
    support_of,
    support_project,
    tangent_basis,
    tangent_project,
)
from src.errors import CertificateError, ValidationError

logger = logging.getLogger(__name__)


class ConditionValues(NamedTuple):
    a: float  # ||P_T(Q) - U V^T||_F
    b: float  # ||P_T_perp(Q)||
    c: float  # ||P_Omega(G^T Q) - gamma sign(S0)||_inf
    d: float  # ||P_Omega_perp(G^T Q)||_inf


@dataclass
class Certificate:
    Q: np.ndarray
    Q_omega: np.ndarray
    Q_T: np.ndarray
    eps_omega: np.ndarray
    eps_T: np.ndarray
    cond_a_residual: float
    cond_b_value: float
    cond_c_residual: float
    cond_d_value: float
    gamma: float
    lstsq_residual: float = 0.0
    rank_deficient: bool = False

    def conditions(self) -> dict:
        return {
            "gamma": self.gamma,
            "cond_a_residual": self.cond_a_residual,
            "cond_b_value": self.cond_b_value,
            "cond_c_residual": self.cond_c_residual,
            "cond_d_value": self.cond_d_value,
        }


@dataclass
class CertificateVerdict:
    ok: bool
    failed: list[str]
    values: ConditionValues
    gamma: float

    def to_dict(self) -> dict:
        return {"ok": self.ok, "failed": self.failed, "gamma": self.gamma, **self.values._asdict()}


def condition_values(Q: np.ndarray, G: np.ndarray, S0: np.ndarray, factors: SvdFactors,
                     gamma: float, omega: SupportSet | None = None) -> ConditionValues:
    omega = omega or support_of(S0)
    GtQ = G.T @ Q
    on = support_project(GtQ, omega) - gamma * np.sign(support_project(S0, omega))
    off = support_project(GtQ, omega, complement=True)
    return ConditionValues(
        a=float(np.linalg.norm(tangent_project(factors, Q) - factors.sign_matrix)),
        b=float(scipy.linalg.svdvals(tangent_project(factors, Q, complement=True))[0]),
        c=float(np.abs(on).max(initial=0.0)),
        d=float(np.abs(off).max(initial=0.0)),
    )


def construct_certificate(G, S0, factors: SvdFactors, gamma: float,
                          size_guard: int = CERT_SIZE_GUARD) -> Certificate:
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    G = check_finite(G, "G")
    S0 = check_finite(S0, "S0")
    m, n = factors.shape
    if G.shape != (m, S0.shape[0]) or S0.shape[1] != n:
        raise ValidationError(f"incompatible shapes: G {G.shape}, S0 {S0.shape}, L0 {(m, n)}")
    omega = support_of(S0)
    k = omega.cardinality
    dim_t = factors.rank * (m + n - factors.rank)
    if k + dim_t > size_guard:
        raise ValidationError(f"certificate system too large: {k} + {dim_t} unknowns > {size_guard}")

    A = support_image_basis(G, omega)
    B = tangent_basis(factors)
    C = np.hstack([A, B])
    idx = omega.indices()
    rhs = np.concatenate([gamma * np.sign(S0[idx[:, 0], idx[:, 1]]), B.T @ factors.sign_matrix.ravel()])

    if C.shape[1] == 0:
        q = np.zeros(m * n)
        z = np.zeros(0)
        residual = 0.0
        rank_deficient = False
    else:
        q, _, rank, _ = scipy.linalg.lstsq(C.T, rhs)
        residual = float(np.linalg.norm(C.T @ q - rhs))
        if residual > CERT_EQUALITY_TOL * max(1.0, float(np.linalg.norm(rhs))):
            raise CertificateError("certificate equations are inconsistent", residual)
        rank_deficient = rank < C.shape[1]
        if rank_deficient:
            logger.warning("Certificate system is rank-deficient (rank %d of %d); G(Omega) and T overlap",
                           rank, C.shape[1])
        z = scipy.linalg.lstsq(C, q)[0]

    Q = q.reshape(m, n)
    Q_omega = np.zeros(S0.shape)
    Q_omega[idx[:, 0], idx[:, 1]] = z[:k]
    Q_T = (B @ z[k:]).reshape(m, n) if dim_t else np.zeros((m, n))
    values = condition_values(Q, G, S0, factors, gamma, omega)
    cert = Certificate(
        Q=Q, Q_omega=Q_omega, Q_T=Q_T,
        eps_omega=Q_omega - gamma * np.sign(S0),
        eps_T=Q_T - factors.sign_matrix,
        cond_a_residual=values.a, cond_b_value=values.b,
        cond_c_residual=values.c, cond_d_value=values.d,
        gamma=gamma, lstsq_residual=residual, rank_deficient=rank_deficient,
    )
    logger.debug("Certificate at gamma=%.4g: b=%.4g d=%.4g", gamma, values.b, values.d)
    return cert


def check_certificate(cert: Certificate, G, S0, factors: SvdFactors,
                      strict_margin: float = STRICT_MARGIN) -> CertificateVerdict:
    """Recompute the four conditions from cert.Q and compare them with the strict thresholds."""
    G = np.asarray(G, dtype=float)
    S0 = np.asarray(S0, dtype=float)
    values = condition_values(cert.Q, G, S0, factors, cert.gamma)
    failed = []
    if values.a > CERT_EQUALITY_TOL:
        failed.append("condition (a)")
    if values.b > 1.0 - strict_margin:
        failed.append("condition (b)")
    if values.c > CERT_EQUALITY_TOL:
        failed.append("condition (c)")
    if values.d > cert.gamma * (1.0 - strict_margin):
        failed.append("condition (d)")
    return CertificateVerdict(ok=not failed, failed=failed, values=values, gamma=cert.gamma)


@dataclass
class GammaScanRow:
    gamma: float
    ok: bool
    failed: list[str]
    values: ConditionValues


def _scan_one(G, S0, factors, gamma, strict_margin, size_guard) -> GammaScanRow:
    cert = construct_certificate(G, S0, factors, gamma, size_guard)
    verdict = check_certificate(cert, G, S0, factors, strict_margin)
    return GammaScanRow(gamma, verdict.ok, verdict.failed, verdict.values)


def certificate_gamma_scan(G, S0, factors: SvdFactors, gammas, strict_margin: float = STRICT_MARGIN,
                           size_guard: int = CERT_SIZE_GUARD, workers: int = 1) -> list[GammaScanRow]:
    """Construct and check a certificate per gamma; rows come back in input order."""
    gammas = [float(g) for g in gammas]
    if any(g <= 0 for g in gammas):
        raise ValidationError("every gamma in a scan must be positive")
    rows: dict[int, GammaScanRow] = {}
    if workers > 1 and len(gammas) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_scan_one, G, S0, factors, g, strict_margin, size_guard): i
                for i, g in enumerate(gammas)
            }
            for future in as_completed(futures):
                rows[futures[future]] = future.result()
    else:
        for i, g in enumerate(gammas):
            rows[i] = _scan_one(G, S0, factors, g, strict_margin, size_guard)
    table = [rows[i] for i in range(len(gammas))]
    passing = [row.gamma for row in table if row.ok]
    logger.info("Gamma scan: %d of %d values certify", len(passing), len(table))
    return table


@dataclass
class ProofReplay:
    fixed_point_residual: float  # ||eps_T + P_T(G Q_omega)||_F
    eps_T_norm: float
    eps_T_bound: float
    eps_omega_inf: float
    eps_omega_bound: float

    @property
    def ok(self) -> bool:
        slack = 1e-9
        return (
            self.fixed_point_residual <= CERT_EQUALITY_TOL
            and self.eps_T_norm <= self.eps_T_bound + slack
            and self.eps_omega_inf <= self.eps_omega_bound + slack
        )


def replay_proof_inequalities(cert: Certificate, G, factors: SvdFactors,
                              u: float, e: float, delta: float) -> ProofReplay:
    """Check eps_T = -P_T(G Q_omega) and the two bound chains behind the gamma window.

    ``u`` and ``e`` are upper bounds on mu_G(S0) and xi_G(L0); both chains are
    monotone in them, so upper bounds keep the inequalities valid.
    """
    if delta >= 1.0:
        raise ValidationError(f"delta must be < 1, got {delta}")
    G = np.asarray(G, dtype=float)
    fixed_point = float(np.linalg.norm(cert.eps_T + tangent_project(factors, G @ cert.Q_omega)))
    eps_T_norm = float(scipy.linalg.svdvals(cert.eps_T)[0])
    eps_omega_inf = float(np.abs(cert.eps_omega).max(initial=0.0))
    return ProofReplay(
        fixed_point_residual=fixed_point,
        eps_T_norm=eps_T_norm,
        eps_T_bound=2.0 * u * (cert.gamma + eps_omega_inf),
        eps_omega_inf=eps_omega_inf,
        eps_omega_bound=(delta * cert.gamma + e * (1.0 + eps_T_norm)) / (1.0 - delta),
    )
