"""ADMM solvers for min gamma ||S||_1 + ||L||_* subject to L + H S = M0.

The L-step is singular value thresholding. The S-step has no closed form for a
general mask, so the default linearizes the quadratic around the current S
(one proximal-gradient step with eta = ||H||^2 / step_scale). The alternative
runs a few FISTA iterations on the exact S-subproblem.
"""

import logging
import time
from dataclasses import asdict, dataclass, fields, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg

from src.constants import (
    DEFAULT_GAMMA,
    DEFAULT_INNER_ITERS,
    DEFAULT_MAX_ITER,
    DEFAULT_RHO,
    DEFAULT_STEP_SCALE,
    DEFAULT_TOL_CHANGE,
    DEFAULT_TOL_PRIMAL,
    NON_UNIQUE_RATIO,
    PINV_COND_LIMIT,
    RESIDUAL_BALANCE_FACTOR,
    RESIDUAL_BALANCE_RATIO,
    SOLVER_LOG_EVERY,
    SOLVER_METHODS,
)
from src.core import (
    SupportSet,
    SvdFactors,
    check_finite,
    shrink_singular_values,
    soft_threshold,
    support_project,
    tangent_project,
)
from src.errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    gamma: float = DEFAULT_GAMMA
    rho: float = DEFAULT_RHO
    step_scale: float = DEFAULT_STEP_SCALE
    max_iter: int = DEFAULT_MAX_ITER
    tol_primal: float = DEFAULT_TOL_PRIMAL
    tol_change: float = DEFAULT_TOL_CHANGE
    method: str = "linearized_admm"
    inner_iters: int = DEFAULT_INNER_ITERS
    record_history: bool = False
    adaptive_rho: bool = False

    def __post_init__(self):
        if self.method not in SOLVER_METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {', '.join(SOLVER_METHODS)}")
        if self.gamma <= 0 or self.rho <= 0:
            raise ValidationError("gamma and rho must be positive")
        if not 0 < self.step_scale <= 1:
            raise ValidationError(f"step_scale must lie in (0, 1], got {self.step_scale}")
        if self.max_iter < 1 or self.inner_iters < 1:
            raise ValidationError("max_iter and inner_iters must be >= 1")
        if self.tol_primal <= 0 or self.tol_change <= 0:
            raise ValidationError("tolerances must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown solver option(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolverResult:
    S_hat: np.ndarray
    L_hat: np.ndarray
    dual: np.ndarray
    iterations: int
    primal_residual: float
    objective: float
    status: str
    rho: float
    method: str
    non_unique: bool = False
    history: list[tuple[float, float]] | None = None
    seconds: float = 0.0

    def summary(self) -> dict:
        return {
            "status": self.status,
            "method": self.method,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "objective": self.objective,
            "rho": self.rho,
            "non_unique": self.non_unique,
            "seconds": self.seconds,
        }


class KKTReport(NamedTuple):
    support_residual: float      # ||P_Omega(H^T Q) - gamma sign(S)||_inf
    off_support_excess: float    # max(0, ||P_Omega_perp(H^T Q)||_inf - gamma)
    tangent_residual: float      # ||P_T(Q) - U V^T||_F
    complement_excess: float     # max(0, ||P_T_perp(Q)|| - 1)

    def worst(self) -> float:
        return max(self)


def objective_value(S: np.ndarray, L: np.ndarray, gamma: float) -> float:
    return float(gamma * np.abs(S).sum() + scipy.linalg.svdvals(L).sum())


def _check_problem(M0, H) -> tuple[np.ndarray, np.ndarray]:
    M0 = check_finite(M0, "M0")
    H = check_finite(H, "H")
    if H.shape[0] != M0.shape[0]:
        raise ValidationError(f"mask has {H.shape[0]} rows but M0 has {M0.shape[0]}")
    return M0, H


def _fista_s_step(S, H, C, eta, thresh, iters):
    """FISTA on (gamma/rho)||S||_1 + 0.5||H S + C||_F^2 with step 1/eta, warm-started at S."""
    Y = S.copy()
    t = 1.0
    for _ in range(iters):
        S_next = soft_threshold(Y - (H.T @ (H @ Y + C)) / eta, thresh)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = S_next + ((t - 1.0) / t_next) * (S_next - S)
        S, t = S_next, t_next
    return S


def solve_masked_separation(M0, H, config: SolverConfig | None = None) -> SolverResult:
    config = config or SolverConfig()
    M0, H = _check_problem(M0, H)
    if config.method == "pinv_baseline":
        return solve_via_pinv(M0, H, config)

    start = time.perf_counter()
    m, n = M0.shape
    p = H.shape[1]
    sigmas = scipy.linalg.svdvals(H)
    h_norm = float(sigmas[0])
    non_unique = p > m or float(sigmas[-1]) < NON_UNIQUE_RATIO * h_norm
    eta = max(h_norm * h_norm, 1e-12) / config.step_scale
    scale = max(1.0, float(np.linalg.norm(M0)))
    rho = config.rho
    gamma = config.gamma

    S = np.zeros((p, n))
    L = np.zeros((m, n))
    W = np.zeros((m, n))
    HS = np.zeros((m, n))
    history = [] if config.record_history else None
    status = "max_iter"
    primal = float(np.linalg.norm(M0)) / scale
    iterations = 0

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, config.max_iter + 1):
            iterations = k
            try:
                L_new, rank = shrink_singular_values(M0 - HS - W, 1.0 / rho)
                C = L_new - M0 + W
                if config.method == "linearized_admm":
                    S_new = soft_threshold(S - (H.T @ (HS + C)) / eta, gamma / (rho * eta))
                else:
                    S_new = _fista_s_step(S, H, C, eta, gamma / (rho * eta), config.inner_iters)
            except (np.linalg.LinAlgError, ValueError):
                status = "diverged"
                break
            HS_new = H @ S_new
            residual = HS_new + L_new - M0
            W_new = W + residual
            if not (np.all(np.isfinite(S_new)) and np.all(np.isfinite(L_new)) and np.all(np.isfinite(W_new))):
                status = "diverged"
                break

            primal = float(np.linalg.norm(residual)) / scale
            change = (float(np.linalg.norm(S_new - S)) + float(np.linalg.norm(L_new - L))) / scale
            dual_norm = rho * float(np.linalg.norm(HS_new - HS))
            S, L, W, HS = S_new, L_new, W_new, HS_new

            if history is not None:
                history.append((primal, objective_value(S, L, gamma)))
            if k % SOLVER_LOG_EVERY == 0:
                logger.debug("iter %d: primal=%.3e change=%.3e rank(L)=%d rho=%.3g",
                             k, primal, change, rank, rho)
            if primal <= config.tol_primal and change <= config.tol_change:
                status = "converged"
                break
            if config.adaptive_rho:
                primal_norm = primal * scale
                if primal_norm > RESIDUAL_BALANCE_RATIO * dual_norm:
                    rho *= RESIDUAL_BALANCE_FACTOR
                    W /= RESIDUAL_BALANCE_FACTOR
                elif dual_norm > RESIDUAL_BALANCE_RATIO * primal_norm:
                    rho /= RESIDUAL_BALANCE_FACTOR
                    W *= RESIDUAL_BALANCE_FACTOR

    if status == "diverged":
        logger.warning("Solver diverged at iteration %d; returning last finite iterates", iterations)
        primal = float(np.linalg.norm(HS + L - M0)) / scale
    result = SolverResult(
        S_hat=S, L_hat=L, dual=W,
        iterations=iterations,
        primal_residual=primal,
        objective=objective_value(S, L, gamma),
        status=status,
        rho=rho,
        method=config.method,
        non_unique=non_unique,
        history=history,
        seconds=time.perf_counter() - start,
    )
    logger.info("%s finished: %s after %d iterations, residual %.2e, objective %.6g",
                config.method, status, iterations, primal, result.objective)
    return result


def solve_via_pinv(M0, H, config: SolverConfig | None = None) -> SolverResult:
    """Reduce to classical separation of H^{-1} M0 = S + Y, then map back L = H Y."""
    config = config or SolverConfig()
    M0, H = _check_problem(M0, H)
    if H.shape[0] != H.shape[1]:
        raise ValidationError(f"pseudoinverse baseline needs a square mask, got {H.shape}")
    cond = float(np.linalg.cond(H))
    if not np.isfinite(cond) or cond > PINV_COND_LIMIT:
        raise ValidationError(f"mask is ill-conditioned (condition estimate {cond:.3e})")
    start = time.perf_counter()
    Y0 = scipy.linalg.solve(H, M0)
    inner = solve_masked_separation(Y0, np.eye(H.shape[0]), replace(config, method="linearized_admm"))
    S1 = inner.S_hat
    L1 = H @ inner.L_hat
    scale = max(1.0, float(np.linalg.norm(M0)))
    return replace(
        inner,
        L_hat=L1,
        primal_residual=float(np.linalg.norm(H @ S1 + L1 - M0)) / scale,
        objective=objective_value(S1, L1, config.gamma),
        method="pinv_baseline",
        seconds=time.perf_counter() - start,
    )


def kkt_report(result: SolverResult, H, gamma: float, omega: SupportSet, factors: SvdFactors) -> KKTReport:
    """Optimality residuals with Q = -rho W, the multiplier of M0 - L - H S = 0."""
    Q = -result.rho * result.dual
    HtQ = np.asarray(H, dtype=float).T @ Q
    sign = support_project(np.sign(result.S_hat), omega)
    on = np.abs(support_project(HtQ, omega) - gamma * sign)
    off = np.abs(support_project(HtQ, omega, complement=True))
    tangent = tangent_project(factors, Q) - factors.sign_matrix
    perp = tangent_project(factors, Q, complement=True)
    return KKTReport(
        support_residual=float(on.max(initial=0.0)),
        off_support_excess=max(0.0, float(off.max(initial=0.0)) - gamma),
        tangent_residual=float(np.linalg.norm(tangent)),
        complement_excess=max(0.0, float(scipy.linalg.svdvals(perp)[0]) - 1.0),
    )


def relative_error(truth, estimate) -> float:
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise ValidationError(f"shape mismatch: truth {truth.shape}, estimate {estimate.shape}")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        logger.warning("Relative error with zero truth; reporting the absolute norm of the estimate")
        return float(np.linalg.norm(estimate))
    return float(np.linalg.norm(estimate - truth)) / denom
