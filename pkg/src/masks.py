"""Mask families H and the column scalings G = H D used by the recoverability checks."""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg

from src.constants import (
    EDA_M,
    EDA_P,
    EDA_RATE,
    EDA_TAU1,
    EDA_TAU2,
    EDA_WINDOW,
    SIDECAR_SUFFIX,
)
from src.core import SvdFactors, check_finite, reduced_svd
from src.errors import ValidationError
from src.matrix_io import read_json, read_matrix_csv, write_json, write_matrix_csv

logger = logging.getLogger(__name__)

MASK_FAMILIES = ("identity", "blur_circulant", "gaussian", "eda_convolution", "orthogonal_columns", "custom")
SCALING_MODES = ("spectral", "column_norm", "custom")


@dataclass(frozen=True, eq=False)
class Mask:
    """An m x p mask with the provenance needed to rebuild it."""

    H: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.family not in MASK_FAMILIES:
            raise ValidationError(f"unknown mask family {self.family!r}")
        object.__setattr__(self, "H", check_finite(self.H, "mask"))

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def p(self) -> int:
        return self.H.shape[1]

    @cached_property
    def svd(self) -> SvdFactors:
        return reduced_svd(self.H)

    @property
    def spectral_norm(self) -> float:
        s = self.svd.singular_values
        return float(s[0]) if s.size else 0.0

    def metadata(self) -> dict:
        return {"family": self.family, "params": dict(self.params), "seed": self.seed}


@dataclass(frozen=True, eq=False)
class ColumnScaling:
    diag: np.ndarray
    mode: str

    def __post_init__(self):
        if self.mode not in SCALING_MODES:
            raise ValidationError(f"unknown scaling mode {self.mode!r}")
        diag = np.asarray(self.diag, dtype=float)
        if diag.ndim != 1 or not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise ValidationError("column scaling must be a vector of positive reals")
        object.__setattr__(self, "diag", diag)

    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)


# ── Builders ────────────────────────────────────────────────────────────

def build_identity(n: int) -> Mask:
    if n < 1:
        raise ValidationError(f"identity size must be >= 1, got {n}")
    return Mask(np.eye(n), "identity", {"n": n})


def build_blur_mask(p: int) -> Mask:
    """Orthogonalized two-tap circulant blur: every nonzero singular value is 1, kernel is the alternating vector."""
    if p < 2 or p % 2:
        raise ValidationError(f"blur mask needs an even size p >= 2, got {p}")
    first_row = np.zeros(p)
    first_row[:2] = 1.0
    blur = scipy.linalg.circulant(first_row).T
    U, s, Vt = scipy.linalg.svd(blur)
    keep = s > 1e-10 * s[0]
    H = U[:, keep] @ Vt[keep]
    return Mask(H, "blur_circulant", {"p": p})


def build_gaussian_mask(m: int, p: int, seed: int) -> Mask:
    """I.i.d. N(0, 1/m) entries from a PCG64 generator."""
    if m < 1 or p < 1:
        raise ValidationError(f"gaussian mask dimensions must be positive, got {m}x{p}")
    rng = np.random.default_rng(seed)
    H = rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, p))
    return Mask(H, "gaussian", {"m": m, "p": p}, seed)


def eda_kernel(tau1: float = EDA_TAU1, tau2: float = EDA_TAU2,
               rate: float = EDA_RATE, window: float = EDA_WINDOW) -> np.ndarray:
    """Bi-exponential response 2(exp(-t/tau1) - exp(-t/tau2)) sampled on [0, window)."""
    if not tau1 > tau2 > 0:
        raise ValidationError(f"need tau1 > tau2 > 0, got tau1={tau1}, tau2={tau2}")
    if rate <= 0 or window <= 0:
        raise ValidationError("sampling rate and window must be positive")
    t = np.arange(int(round(rate * window))) / rate
    return 2.0 * (np.exp(-t / tau1) - np.exp(-t / tau2))


def build_eda_mask(tau1: float = EDA_TAU1, tau2: float = EDA_TAU2, rate: float = EDA_RATE,
                   window: float = EDA_WINDOW, m: int = EDA_M, p: int = EDA_P) -> Mask:
    """Central m-row block of the full (p + K - 1) x p convolution matrix of the EDA kernel."""
    h = eda_kernel(tau1, tau2, rate, window)
    if p < 1 or m < 1:
        raise ValidationError(f"eda mask dimensions must be positive, got {m}x{p}")
    full_rows = len(h) + p - 1
    if m > full_rows:
        raise ValidationError(f"m={m} exceeds the {full_rows} rows of the full convolution")
    first_col = np.r_[h, np.zeros(p - 1)]
    first_row = np.r_[h[0], np.zeros(p - 1)]
    full = scipy.linalg.toeplitz(first_col, first_row)
    offset = (full_rows - m) // 2
    H = full[offset:offset + m]
    params = {"tau1": tau1, "tau2": tau2, "rate": rate, "window": window, "m": m, "p": p}
    logger.debug("EDA mask %dx%d from %d-tap kernel, row offset %d", m, p, len(h), offset)
    return Mask(H, "eda_convolution", params)


def build_orthogonal_columns_mask(m: int, p: int, column_scales=None, seed: int = 0) -> Mask:
    if m < p:
        raise ValidationError(f"orthogonal columns need m >= p, got m={m}, p={p}")
    scales = np.ones(p) if column_scales is None else np.broadcast_to(
        np.asarray(column_scales, dtype=float), (p,)).copy()
    if np.any(scales <= 0):
        raise ValidationError("column scales must be positive")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((m, p)))
    params = {"m": m, "p": p, "column_scales": scales.tolist()}
    return Mask(Q * scales, "orthogonal_columns", params, seed)


def rebuild_mask(family: str, params: dict, seed: int | None = None) -> Mask:
    """Rebuild a mask from its {family, params, seed} provenance."""
    try:
        if family == "identity":
            return build_identity(int(params["n"]))
        if family == "blur_circulant":
            return build_blur_mask(int(params["p"]))
        if family == "gaussian":
            return build_gaussian_mask(int(params["m"]), int(params["p"]), seed)
        if family == "eda_convolution":
            return build_eda_mask(**params)
        if family == "orthogonal_columns":
            return build_orthogonal_columns_mask(
                int(params["m"]), int(params["p"]), params.get("column_scales"), seed or 0)
    except KeyError as e:
        raise ValidationError(f"{family} mask is missing parameter {e}") from None
    raise ValidationError(f"mask family {family!r} cannot be rebuilt from parameters")


# ── Column scaling ──────────────────────────────────────────────────────

def scale_columns(mask: Mask, mode: str = "spectral", custom=None) -> tuple[np.ndarray, ColumnScaling]:
    """Return G = H D with D chosen by ``mode``."""
    H = mask.H
    if mode == "spectral":
        spec = mask.spectral_norm
        if spec == 0.0:
            raise ValidationError("spectral scaling of a zero mask")
        diag = np.full(mask.p, 1.0 / spec)
    elif mode == "column_norm":
        norms = np.linalg.norm(H, axis=0)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ValidationError(f"column {zero[0]} of the mask is zero")
        diag = 1.0 / norms
    elif mode == "custom":
        if custom is None:
            raise ValidationError("custom scaling requires a diagonal")
        diag = np.asarray(custom, dtype=float)
        if diag.shape != (mask.p,):
            raise ValidationError(f"custom diagonal must have length {mask.p}")
    else:
        raise ValidationError(f"unknown scaling mode {mode!r}")
    D = ColumnScaling(diag, mode)
    return H * D.diag, D


def kernel_basis(H: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ker H as columns (p x K)."""
    return scipy.linalg.null_space(check_finite(H, "mask"), rcond=rank_tol)


# ── Files ───────────────────────────────────────────────────────────────

def save_mask(mask: Mask, path):
    path = Path(path)
    write_matrix_csv(path, mask.H)
    write_json(path.with_suffix(SIDECAR_SUFFIX), mask.metadata())
    logger.info("Saved %s mask (%dx%d) to %s", mask.family, mask.m, mask.p, path)


def load_mask(path) -> Mask:
    """Load a mask CSV. The result is always family ``custom``; a sidecar, if any, is kept in params."""
    path = Path(path)
    H = read_matrix_csv(path, "mask")
    params = {"path": str(path)}
    sidecar = path.with_suffix(SIDECAR_SUFFIX)
    if sidecar.exists():
        params["provenance"] = read_json(sidecar)
    return Mask(H, "custom", params)
