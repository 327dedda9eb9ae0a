"""Recoverability diagnostics: RINP constant, mu/xi intervals, incoherence, gamma window, verdicts."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from src.constants import (
    MU_BATCH,
    MU_ENUMERATE_CAP,
    MU_MEMORY_BUDGET,
    MU_SAMPLES,
    TRANSVERSALITY_GUARD,
    TRANSVERSALITY_TOL,
    UNIT_NORM_TOL,
    XI_MAX_RESAMPLES,
    XI_SAMPLES,
)
from src.core import (
    SupportSet,
    SvdFactors,
    check_finite,
    degree_stats,
    support_image_basis,
    tangent_basis,
    tangent_project,
)
from src.errors import MaskSepError, ValidationError

logger = logging.getLogger(__name__)


class MuBounds(NamedTuple):
    lower: float
    upper: float
    exact: float | None


class XiBounds(NamedTuple):
    lower: float
    upper: float


class Incoherence(NamedTuple):
    alpha: float
    beta_U_G: float
    beta_V: float
    inc: float


# ── RINP constant ───────────────────────────────────────────────────────

def rinp_delta_exact(G: np.ndarray, d: int) -> float:
    """max over |T| <= d of ||P_T||_mi for P = I - G^T G: per row, the d largest |P_ij|."""
    G = check_finite(G, "G")
    p = G.shape[1]
    if not 1 <= d <= p:
        raise ValidationError(f"d must lie in [1, {p}], got {d}")
    P = np.abs(np.eye(p) - G.T @ G)
    top = np.sort(P, axis=1)[:, p - d:]
    return float(top.sum(axis=1).max())


def rinp_delta_kernel_bound(kernel_basis, d: int) -> float:
    """Upper bound on delta from an orthonormal kernel basis, valid when ||H|| ||H^+|| = 1."""
    if d < 1:
        raise ValidationError(f"d must be >= 1, got {d}")
    if isinstance(kernel_basis, np.ndarray) and kernel_basis.ndim == 2:
        V = kernel_basis
    else:
        vectors = [np.asarray(v, dtype=float).ravel() for v in kernel_basis]
        if not vectors:
            return 0.0
        if len({v.size for v in vectors}) != 1:
            raise ValidationError("kernel vectors must share a common length")
        V = np.column_stack(vectors)
    if V.shape[1] == 0:
        return 0.0
    p = V.shape[0]
    if d > p:
        raise ValidationError(f"d must lie in [1, {p}], got {d}")
    norms = np.linalg.norm(V, axis=0)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
    if bad.size:
        raise ValidationError(f"kernel vector {bad[0]} has norm {norms[bad[0]]:.6g}, expected 1")
    weights = np.abs(V) @ np.max(np.abs(V), axis=0)
    return float(np.sort(weights)[p - d:].sum())


# ── mu_G ────────────────────────────────────────────────────────────────

def _masked_spectral_norms(G: np.ndarray, omega: SupportSet, signs: np.ndarray) -> np.ndarray:
    """||G A|| for each row of ``signs`` placed on the support of omega."""
    idx = omega.indices()
    A = np.zeros((signs.shape[0],) + omega.shape)
    A[:, idx[:, 0], idx[:, 1]] = signs
    return np.linalg.norm(G @ A, ord=2, axis=(1, 2))


def _enumerate_chunk(G, omega, k, start, stop) -> float:
    codes = np.arange(start, stop, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(k - 1)) & 1
    signs = np.hstack([np.ones((codes.size, 1)), 1.0 - 2.0 * bits])
    return float(_masked_spectral_norms(G, omega, signs).max())


def _mu_batch(G: np.ndarray, omega: SupportSet) -> int:
    """Sign patterns per chunk so that A and G A together stay within MU_MEMORY_BUDGET."""
    per_pattern = 8 * (omega.rows + G.shape[0]) * omega.cols
    return max(1, min(MU_BATCH, MU_MEMORY_BUDGET // per_pattern))


def mu_bounds(G: np.ndarray, omega: SupportSet, enumerate_cap: int = MU_ENUMERATE_CAP,
              samples: int = MU_SAMPLES, seed: int = 0, workers: int = 1) -> MuBounds:
    """Interval for mu_G(S) = max ||G A|| over A supported on omega with ||A||_inf <= 1."""
    if enumerate_cap < 0:
        raise ValidationError(f"enumerate_cap must be >= 0, got {enumerate_cap}")
    G = check_finite(G, "G")
    if G.shape[1] != omega.rows:
        raise ValidationError(f"G has {G.shape[1]} columns but the support has {omega.rows} rows")
    k = omega.cardinality
    if k == 0:
        return MuBounds(0.0, 0.0, 0.0)
    upper = float(scipy.linalg.svdvals(G)[0]) * degree_stats(omega.mask).d

    chunk = _mu_batch(G, omega)
    rng = np.random.default_rng(seed)
    lower = 0.0
    for start in range(0, samples, chunk):
        batch = min(chunk, samples - start)
        signs = rng.choice(np.array([-1.0, 1.0]), size=(batch, k))
        lower = max(lower, float(_masked_spectral_norms(G, omega, signs).max()))

    exact = None
    if k <= enumerate_cap:
        total = 1 << (k - 1)
        chunks = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]
        logger.debug("Enumerating %d sign patterns in %d chunks", total, len(chunks))
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_enumerate_chunk, G, omega, k, a, b) for a, b in chunks]
                exact = max(f.result() for f in as_completed(futures))
        else:
            exact = max(_enumerate_chunk(G, omega, k, a, b) for a, b in chunks)
    return MuBounds(lower, upper, exact)


# ── xi_G and incoherence ────────────────────────────────────────────────

def incoherence_stats(G: np.ndarray, factors: SvdFactors) -> Incoherence:
    G = check_finite(G, "G")
    if G.shape[0] != factors.shape[0]:
        raise ValidationError(f"G has {G.shape[0]} rows but L has {factors.shape[0]}")
    alpha = float(np.linalg.norm(G, axis=0).max())
    beta_U_G = float(np.linalg.norm(factors.U.T @ G, axis=0).max(initial=0.0))
    beta_V = float(np.linalg.norm(factors.V, axis=1).max(initial=0.0))
    return Incoherence(alpha, beta_U_G, beta_V, beta_U_G + alpha * beta_V)


def _structured_xi_candidates(G: np.ndarray, factors: SvdFactors) -> float:
    """Feasible tangent directions realizing beta(U,G) and alpha(G) beta(V)."""
    U, V = factors.U, factors.V
    best = 0.0
    proj = U @ (U.T @ G)
    proj_norms = np.linalg.norm(proj, axis=0)
    i = int(np.argmax(proj_norms))
    if proj_norms[i] > 0:
        # B = (P_U g_i / ||P_U g_i||) e_0^T
        best = max(best, float(np.max(np.abs(G.T @ proj[:, i]))) / proj_norms[i])
    col_norms = np.linalg.norm(G, axis=0)
    row_norms = np.linalg.norm(V, axis=1)
    i, j = int(np.argmax(col_norms)), int(np.argmax(row_norms))
    if col_norms[i] > 0 and row_norms[j] > 0:
        right = V @ V[j] / row_norms[j]  # P_V e_j / ||P_V e_j||
        B = np.outer(G[:, i] / col_norms[i], right)
        best = max(best, float(np.max(np.abs(G.T @ B))))
    return best


def xi_bounds(G: np.ndarray, factors: SvdFactors, samples: int = XI_SAMPLES, seed: int = 0) -> XiBounds:
    """Interval for xi_G(L) = max ||G^T B||_inf over B in T(L) with ||B|| <= 1."""
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples}")
    G = check_finite(G, "G")
    if factors.rank == 0:
        return XiBounds(0.0, 0.0)
    upper = incoherence_stats(G, factors).inc
    lower = _structured_xi_candidates(G, factors)
    rng = np.random.default_rng(seed)
    m, n = factors.shape
    for _ in range(samples):
        for attempt in range(XI_MAX_RESAMPLES + 1):
            Z = rng.standard_normal((m, n))
            B = tangent_project(factors, Z)
            spec = float(scipy.linalg.svdvals(B)[0])
            if spec > 1e-12 * np.linalg.norm(Z):
                break
            logger.debug("Degenerate tangent draw, resampling (attempt %d)", attempt + 1)
        else:
            raise MaskSepError(f"tangent projection vanished in {XI_MAX_RESAMPLES} resamples")
        lower = max(lower, float(np.max(np.abs(G.T @ B))) / spec)
    if lower > upper * (1 + 1e-9) + 1e-12:
        logger.error("xi lower bound %.6g exceeds the incoherence bound %.6g", lower, upper)
        raise MaskSepError(f"sampled xi lower bound {lower:.6g} exceeds analytic upper bound {upper:.6g}")
    return XiBounds(min(lower, upper), upper)


# ── Verdicts ────────────────────────────────────────────────────────────

def gamma_interval(u: float, e: float, delta: float) -> tuple[float, float] | None:
    """Admissible gamma window, or None when u e >= (1 - 3 delta) / 6."""
    if delta >= 1.0 / 3.0:
        raise ValidationError(f"delta must be < 1/3, got {delta}")
    if u < 0 or e < 0 or delta < 0:
        raise ValidationError("u, e and delta must be nonnegative")
    if u * e >= (1.0 - 3.0 * delta) / 6.0:
        return None
    lo = (1.0 + delta) * e / (1.0 - 3.0 * delta - 4.0 * u * e)
    hi = math.inf if u == 0 else (1.0 - delta - 3.0 * u * e) / u
    return lo, hi


def theorem_verdict(delta: float, mu_upper: float, xi_upper: float) -> bool:
    if delta >= 1.0 / 3.0:
        return False
    return mu_upper * xi_upper < (1.0 - 3.0 * delta) / 6.0


def corollary_verdict(d: int, inc: float, delta: float, spectral_norm_G: float) -> bool:
    """d(S0) inc(L0, G) < (1 - 3 delta) / (6 ||G||)."""
    if delta >= 1.0 / 3.0:
        return False
    return d * inc * spectral_norm_G < (1.0 - 3.0 * delta) / 6.0


def transversality_check(G: np.ndarray, omega: SupportSet, factors: SvdFactors,
                         tol: float = TRANSVERSALITY_TOL, guard: int = TRANSVERSALITY_GUARD) -> bool:
    """True iff G(Omega) and T(L) intersect only at zero."""
    G = check_finite(G, "G")
    k = omega.cardinality
    if k == 0:
        return True
    m, n = factors.shape
    r = factors.rank
    combined = k + r * (m + n - r)
    if combined > guard:
        raise ValidationError(
            f"transversality bases too large: |Omega|={k} + dim T={r * (m + n - r)} > {guard}"
        )
    image = scipy.linalg.orth(support_image_basis(G, omega))
    if image.shape[1] == 0 or r == 0:
        return True
    stacked = np.hstack([image, tangent_basis(factors)])
    if stacked.shape[1] > stacked.shape[0]:
        return False
    sigma_min = float(scipy.linalg.svdvals(stacked)[-1])
    return sigma_min > tol


def gaussian_inc_bound(m: int, n: int, p: int, r: int, eps: float) -> Incoherence:
    """High-probability incoherence bound for a N(0, 1/m) mask and a right-side random orthogonal L."""
    if not 0 < eps < 1:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    log_term = math.log(p / eps)
    beta_U_G = math.sqrt(5.0 * r * log_term / m)
    alpha = 1.0 + math.sqrt(2.0 / m * log_term)
    beta_V = math.sqrt((r + 16.0 * math.sqrt(r * math.log(n))) / n)
    return Incoherence(alpha, beta_U_G, beta_V, beta_U_G + alpha * beta_V)


# ── Report ──────────────────────────────────────────────────────────────

@dataclass
class DiagnosticsReport:
    delta: float
    d_used: int
    mu_lower: float
    mu_upper: float
    mu_exact: float | None
    xi_lower: float
    xi_upper: float
    alpha: float
    beta_U_G: float
    beta_V: float
    inc: float
    theorem_ok: bool
    theorem_ok_optimistic: bool
    corollary_ok: bool
    gamma_interval: tuple[float, float] | None
    transversal: bool | None
    spectral_norm_G: float

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.gamma_interval is not None:
            out["gamma_interval"] = list(self.gamma_interval)
        return out


def diagnose(G: np.ndarray, S0: np.ndarray, factors: SvdFactors, *, enumerate_cap: int = MU_ENUMERATE_CAP,
             mu_samples: int = MU_SAMPLES, xi_samples: int = XI_SAMPLES, seed: int = 0,
             workers: int = 1, zero_tol: float = 0.0) -> DiagnosticsReport:
    """Compute every recoverability quantity for (G, S0, L0 = factors)."""
    G = check_finite(G, "G")
    S0 = check_finite(S0, "S0")
    omega = SupportSet(np.abs(S0) > zero_tol)
    degrees = degree_stats(S0, zero_tol)
    # (I - G^T G) X acts column by column, so the column degree bounds delta
    delta = rinp_delta_exact(G, min(degrees.d_c, G.shape[1])) if degrees.d_c >= 1 else 0.0
    mu = mu_bounds(G, omega, enumerate_cap, mu_samples, seed, workers)
    xi = xi_bounds(G, factors, xi_samples, seed)
    stats = incoherence_stats(G, factors)
    spectral = float(scipy.linalg.svdvals(G)[0])
    ok = theorem_verdict(delta, mu.upper, xi.upper)
    window = gamma_interval(mu.upper, xi.upper, delta) if ok else None
    try:
        transversal = transversality_check(G, omega, factors)
    except ValidationError as e:
        logger.warning("Transversality not computed: %s", e)
        transversal = None
    report = DiagnosticsReport(
        delta=delta, d_used=degrees.d_c,
        mu_lower=mu.lower, mu_upper=mu.upper, mu_exact=mu.exact,
        xi_lower=xi.lower, xi_upper=xi.upper,
        alpha=stats.alpha, beta_U_G=stats.beta_U_G, beta_V=stats.beta_V, inc=stats.inc,
        theorem_ok=ok,
        theorem_ok_optimistic=theorem_verdict(delta, mu.lower, xi.lower),
        corollary_ok=corollary_verdict(degrees.d, stats.inc, delta, spectral),
        gamma_interval=window,
        transversal=transversal,
        spectral_norm_G=spectral,
    )
    logger.info("Diagnostics: delta=%.4g mu<=%.4g xi<=%.4g theorem_ok=%s", delta, mu.upper, xi.upper, ok)
    return report
