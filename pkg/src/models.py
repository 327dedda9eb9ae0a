"""Random instance generators: sparse supports, low-rank factors, EDA signal components."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from src.constants import (
    ORTHONORMAL_TOL,
    SPARSE_VALUE_HIGH,
    SPARSE_VALUE_LOW,
    TAIL_CHECK_SD_SLACK,
    TONIC_AMPLITUDE,
    TONIC_MODULATION,
)
from src.core import SvdFactors, degree_stats
from src.errors import ValidationError

logger = logging.getLogger(__name__)

LOW_RANK_MODELS = ("orthogonal", "right_side_orthogonal")


@dataclass
class SparseModelSpec:
    p: int
    n: int
    s: int
    value_low: float = SPARSE_VALUE_LOW
    value_high: float = SPARSE_VALUE_HIGH
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise ValidationError(f"sparse model dimensions must be positive, got {self.p}x{self.n}")
        if not 0 <= self.s <= self.p * self.n:
            raise ValidationError(f"support size {self.s} outside [0, {self.p * self.n}]")
        if self.value_low > self.value_high:
            raise ValidationError(f"value_low {self.value_low} exceeds value_high {self.value_high}")


@dataclass
class LowRankModelSpec:
    m: int
    n: int
    r: int
    model: str = "orthogonal"
    singular_values: list[float] | str | None = None  # None / "balanced": sqrt(m*n/r); "unit": ones
    seed: int = 0
    U_input: np.ndarray | None = None

    def __post_init__(self):
        if self.model not in LOW_RANK_MODELS:
            raise ValidationError(f"unknown low-rank model {self.model!r}")
        if not 1 <= self.r <= min(self.m, self.n):
            raise ValidationError(f"rank {self.r} outside [1, {min(self.m, self.n)}]")
        if self.model == "right_side_orthogonal":
            if self.U_input is None:
                raise ValidationError("right_side_orthogonal model requires U_input")
            U = np.asarray(self.U_input, dtype=float)
            if U.ndim == 1:
                U = U[:, None]
            if U.shape != (self.m, self.r):
                raise ValidationError(f"U_input must be {self.m}x{self.r}, got {U.shape}")
            if np.max(np.abs(U.T @ U - np.eye(self.r))) > ORTHONORMAL_TOL:
                raise ValidationError("U_input columns are not orthonormal")
            self.U_input = U

    def sigma(self) -> np.ndarray:
        rule = self.singular_values
        if rule is None or rule == "balanced":
            return np.full(self.r, math.sqrt(self.m * self.n / self.r))
        if rule == "unit":
            return np.ones(self.r)
        if isinstance(rule, str):
            raise ValidationError(f"unknown singular value rule {rule!r}")
        sigma = np.asarray(rule, dtype=float)
        if sigma.shape != (self.r,) or np.any(sigma <= 0):
            raise ValidationError(f"need {self.r} positive singular values")
        return sigma


def _haar_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniformly distributed partial isometry via sign-corrected QR of a Gaussian matrix."""
    Q, R = np.linalg.qr(rng.standard_normal((rows, cols)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def random_sparse(spec: SparseModelSpec) -> np.ndarray:
    """Uniform random support of size s, values i.i.d. uniform on [value_low, value_high]."""
    rng = np.random.default_rng(spec.seed)
    total = spec.p * spec.n
    support = rng.permutation(total)[:spec.s]
    flat = np.zeros(total)
    flat[support] = rng.uniform(spec.value_low, spec.value_high, size=spec.s)
    return flat.reshape(spec.p, spec.n)


def random_low_rank(spec: LowRankModelSpec) -> tuple[np.ndarray, SvdFactors]:
    rng = np.random.default_rng(spec.seed)
    if spec.model == "orthogonal":
        U = _haar_columns(rng, spec.m, spec.r)
    else:
        U = spec.U_input
    V = _haar_columns(rng, spec.n, spec.r)
    sigma = spec.sigma()
    order = np.argsort(-sigma, kind="stable")
    factors = SvdFactors(U[:, order], sigma[order], V[:, order])
    return factors.reconstruct(), factors


def eda_tonic(m: int, n: int, amplitude: float = TONIC_AMPLITUDE,
              modulation: float = TONIC_MODULATION) -> np.ndarray:
    """One sinusoid period over the flattened mn-vector, reshaped column-major: near rank 1."""
    if m < 1 or n < 1:
        raise ValidationError(f"tonic dimensions must be positive, got {m}x{n}")
    k = np.arange(m * n)
    v = amplitude * (1.0 + modulation * np.sin(2.0 * np.pi * k / (m * n)))
    return v.reshape((m, n), order="F")


def gaussian_noise(m: int, n: int, sigma: float, seed: int) -> np.ndarray:
    if sigma < 0:
        raise ValidationError(f"noise sigma must be nonnegative, got {sigma}")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, sigma, size=(m, n))


def predicted_degree(p: int, n: int, s: int) -> float:
    """High-probability bound on d(S) under the random sparsity model."""
    return max(s / n * math.log(n), s / p * math.log(p))


@dataclass
class DegreeTailReport:
    p: int
    n: int
    s: int
    trials: int
    row_threshold: float
    col_threshold: float
    row_frequency: float
    col_frequency: float
    row_bound: float
    col_bound: float
    row_violation: bool
    col_violation: bool
    predicted_degree: float
    max_observed_degree: int

    @property
    def violation(self) -> bool:
        return self.row_violation or self.col_violation


def _tail_bound(base: int, other: int, ratio: float) -> float:
    return base ** (-other * ratio / (base * (2.0 - ratio)))


def _exceeds(freq: float, bound: float, trials: int) -> bool:
    slack = TAIL_CHECK_SD_SLACK * math.sqrt(max(bound * (1.0 - bound), 0.0) / trials)
    return freq > bound + slack


def degree_tail_check(p: int, n: int, s: int, trials: int, seed: int) -> DegreeTailReport:
    """Monte-Carlo frequencies of large row/column degrees against the hypergeometric tail bounds."""
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    ratio = s / (p * n)
    row_threshold = s / p * math.log(p)
    col_threshold = s / n * math.log(n)
    seeds = np.random.SeedSequence(seed).generate_state(trials)
    row_hits = col_hits = 0
    max_degree = 0
    for trial_seed in seeds:
        stats = degree_stats(random_sparse(SparseModelSpec(p, n, s, seed=int(trial_seed))))
        row_hits += stats.d_r >= row_threshold
        col_hits += stats.d_c >= col_threshold
        max_degree = max(max_degree, stats.d)
    row_freq = row_hits / trials
    col_freq = col_hits / trials
    row_bound = _tail_bound(p, n, ratio)
    col_bound = _tail_bound(n, p, ratio)
    report = DegreeTailReport(
        p=p, n=n, s=s, trials=trials,
        row_threshold=row_threshold, col_threshold=col_threshold,
        row_frequency=row_freq, col_frequency=col_freq,
        row_bound=row_bound, col_bound=col_bound,
        row_violation=_exceeds(row_freq, row_bound, trials),
        col_violation=_exceeds(col_freq, col_bound, trials),
        predicted_degree=predicted_degree(p, n, s),
        max_observed_degree=max_degree,
    )
    if report.violation:
        logger.warning("Degree tail frequencies exceed the bound at p=%d n=%d s=%d", p, n, s)
    return report
