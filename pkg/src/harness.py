"""Experiment runner: phase-transition grids, the EDA event curve and heatmap rendering."""

import csv
import logging
import math
import os
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from src import __version__
from src.constants import (
    CURVE_COLUMNS,
    DEFAULT_MASTER_SEED,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_TRIALS,
    EDA_EVENT_COUNTS,
    EDA_M,
    EDA_N,
    EDA_NOISE_SIGMA,
    EDA_P,
    EXPERIMENTS,
    GAMMA_RULES,
    GRID_COLUMNS,
    HEATMAP_NAN_RGB,
    OUTPUT_DIR_ENV,
    PHASE_RANKS,
    PHASE_SPARSITY_LEVELS,
    TIMING_COLUMNS,
    TONIC_AMPLITUDE,
    TONIC_MODULATION,
)
from src.errors import ValidationError
from src.masks import Mask, build_blur_mask, build_eda_mask, build_gaussian_mask
from src.matrix_io import read_json, write_json
from src.models import (
    LowRankModelSpec,
    SparseModelSpec,
    eda_tonic,
    gaussian_noise,
    random_low_rank,
    random_sparse,
)
from src.solver import SolverConfig, relative_error, solve_masked_separation

logger = logging.getLogger(__name__)

HEATMAP_FIELDS = ("err_S", "err_L")


@dataclass
class ExperimentConfig:
    experiment: str
    m: int | None = None
    n: int | None = None
    p: int | None = None
    sparsity_levels: list[float] = field(default_factory=lambda: list(PHASE_SPARSITY_LEVELS))
    ranks: list[int] = field(default_factory=lambda: list(PHASE_RANKS))
    event_counts: list[int] = field(default_factory=lambda: list(EDA_EVENT_COUNTS))
    trials: int = DEFAULT_TRIALS
    gamma_rule: str | None = None
    gamma: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    master_seed: int = DEFAULT_MASTER_SEED
    out_dir: str | None = None
    parallelism: int = 1
    noise_sigma: float = EDA_NOISE_SIGMA
    tonic_amplitude: float = TONIC_AMPLITUDE
    tonic_modulation: float = TONIC_MODULATION
    include_events: bool = True  # False: noise-and-tonic only debug runs

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
        if isinstance(self.solver, dict):
            self.solver = SolverConfig.from_dict(self.solver)
        eda = self.experiment == "eda"
        defaults = (EDA_M, EDA_N, EDA_P) if eda else (100, 100, 100)
        self.m = self.m or defaults[0]
        self.n = self.n or defaults[1]
        self.p = self.p or (defaults[2] if eda else self.m)
        self.gamma_rule = self.gamma_rule or ("inv_sqrt_n" if eda else "inv_sqrt_m")
        self.out_dir = self.out_dir or os.getenv(OUTPUT_DIR_ENV, "").strip() or DEFAULT_OUTPUT_DIR

        if self.gamma_rule not in GAMMA_RULES:
            raise ValidationError(f"unknown gamma rule {self.gamma_rule!r}")
        if self.gamma_rule == "explicit" and not (self.gamma and self.gamma > 0):
            raise ValidationError("gamma_rule 'explicit' needs a positive gamma")
        if self.trials < 1 or self.parallelism < 1:
            raise ValidationError("trials and parallelism must be >= 1")
        if min(self.m, self.n, self.p) < 1:
            raise ValidationError("dimensions must be positive")
        if eda:
            if not self.event_counts or any(c < 0 or c > self.p for c in self.event_counts):
                raise ValidationError(f"event counts must be nonempty and lie in [0, {self.p}]")
        else:
            if not self.sparsity_levels or any(not 0 < f <= 1 for f in self.sparsity_levels):
                raise ValidationError("sparsity levels must be nonempty fractions in (0, 1]")
            if not self.ranks or any(not 1 <= r <= min(self.m, self.n) for r in self.ranks):
                raise ValidationError(f"ranks must be nonempty and lie in [1, {min(self.m, self.n)}]")
            if self.experiment == "phase_blur" and self.m != self.p:
                raise ValidationError("the blur mask is square: phase_blur needs m == p")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
        if "experiment" not in data:
            raise ValidationError("config needs an 'experiment' field")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def gamma_value(self) -> float:
        if self.gamma_rule == "inv_sqrt_m":
            return 1.0 / math.sqrt(self.m)
        if self.gamma_rule == "inv_sqrt_n":
            return 1.0 / math.sqrt(self.n)
        return float(self.gamma)


def load_experiment_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """JSON config file, then non-None overrides on top."""
    data = read_json(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return ExperimentConfig.from_dict(data)


def trial_seed(master_seed: int, *key: int) -> int:
    """Per-trial seed that depends only on the master seed and the trial key."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1)[0])


def _sub_seeds(seed: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


@dataclass
class CellRecord:
    sparsity_fraction: float
    rank: int
    mean_err_S: float
    mean_err_L: float
    errors_S: list[float]
    errors_L: list[float]
    seeds: list[int]


@dataclass
class CurvePoint:
    events: int
    mean_err_X: float
    mean_err_T: float
    errors_X: list[float]
    errors_T: list[float]
    seeds: list[int]


@dataclass
class GridResult:
    experiment: str
    cells: list
    rows: list[dict]
    metadata: dict
    out_dir: Path


# ── Trials ──────────────────────────────────────────────────────────────

def _solver_for(config: ExperimentConfig) -> SolverConfig:
    return replace(config.solver, gamma=config.gamma_value())


def _phase_trial(config: ExperimentConfig, blur: Mask | None, frac: float, rank: int, trial: int) -> dict:
    seed = trial_seed(config.master_seed, round(frac * 1e6), rank, trial)
    s_seed, l_seed, h_seed = _sub_seeds(seed, 3)
    s = int(round(frac * config.p * config.n))
    S0 = random_sparse(SparseModelSpec(config.p, config.n, s, seed=s_seed))
    L0, _ = random_low_rank(LowRankModelSpec(config.m, config.n, rank, seed=l_seed))
    mask = blur if blur is not None else build_gaussian_mask(config.m, config.p, h_seed)
    M0 = mask.H @ S0 + L0
    result = solve_masked_separation(M0, mask.H, _solver_for(config))
    return {
        "sparsity_fraction": frac, "rank": rank, "trial": trial, "seed": seed,
        "err_S": relative_error(S0, result.S_hat), "err_L": relative_error(L0, result.L_hat),
        "status": result.status, "iters": result.iterations, "seconds": result.seconds,
    }


def _eda_trial(config: ExperimentConfig, mask: Mask, events: int, trial: int) -> dict:
    seed = trial_seed(config.master_seed, events, trial)
    x_seed, e_seed = _sub_seeds(seed, 2)
    s = events * config.n if config.include_events else 0
    X = random_sparse(SparseModelSpec(config.p, config.n, s, seed=x_seed))
    T = eda_tonic(config.m, config.n, config.tonic_amplitude, config.tonic_modulation)
    E = gaussian_noise(config.m, config.n, config.noise_sigma, e_seed)
    Y = T + mask.H @ X + E
    result = solve_masked_separation(Y, mask.H, _solver_for(config))
    return {
        "events": events, "trial": trial, "seed": seed,
        "err_X": relative_error(X, result.S_hat), "err_T": relative_error(T, result.L_hat),
        "status": result.status, "iters": result.iterations, "seconds": result.seconds,
    }


def _failed_row(key: dict, seed: int, error_cols: tuple[str, str]) -> dict:
    row = dict(key)
    row.update({"seed": seed, error_cols[0]: math.nan, error_cols[1]: math.nan,
                "status": "error", "iters": 0, "seconds": 0.0})
    return row


def _run_pool(tasks: list[tuple], worker, parallelism: int, label, on_error) -> dict:
    """Run ``worker(*task)`` for every task; failures become rows from ``on_error``."""
    results = {}
    with ThreadPoolExecutor(max_workers=parallelism) as executor:
        future_to_task = {executor.submit(worker, *task): task for task in tasks}
        for future in as_completed(future_to_task):
            task = future_to_task[future]
            try:
                results[task] = future.result()
            except Exception as e:
                logger.error("Trial %s failed: %s", label(task), e)
                results[task] = on_error(task)
    return results


# ── Output files ────────────────────────────────────────────────────────

def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows: list[dict]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _write_timings(path: Path, rows: list[dict], key_cols: tuple[str, ...]):
    timing_rows = [
        {"key": "/".join(_fmt(row[c]) for c in key_cols), "trial": row["trial"], "seconds": row["seconds"]}
        for row in rows
    ]
    _write_csv(path, TIMING_COLUMNS, timing_rows)


def _metadata(config: ExperimentConfig, started: float) -> dict:
    return {"config": config.to_dict(), "version": __version__, "wall_seconds": time.time() - started}


# ── Experiments ─────────────────────────────────────────────────────────

def run_phase_experiment(config: ExperimentConfig) -> GridResult:
    """Sparsity x rank recovery grid for the blur or Gaussian mask."""
    if config.experiment not in ("phase_blur", "phase_gaussian"):
        raise ValidationError(f"run_phase_experiment cannot run {config.experiment!r}")
    started = time.time()
    out_dir = Path(config.out_dir)
    blur = build_blur_mask(config.p) if config.experiment == "phase_blur" else None
    tasks = [(frac, r, t) for frac in config.sparsity_levels for r in config.ranks for t in range(config.trials)]
    logger.info("=== %s: %d cells x %d trials, gamma=%.4g ===", config.experiment,
                len(config.sparsity_levels) * len(config.ranks), config.trials, config.gamma_value())

    def worker(frac, r, t):
        return _phase_trial(config, blur, frac, r, t)

    def on_error(task):
        frac, r, t = task
        key = {"sparsity_fraction": frac, "rank": r, "trial": t}
        return _failed_row(key, trial_seed(config.master_seed, round(frac * 1e6), r, t), ("err_S", "err_L"))

    results = _run_pool(tasks, worker, config.parallelism, lambda task: "s=%g r=%d t=%d" % task, on_error)
    rows = [results[task] for task in tasks]

    cells = []
    by_cell = defaultdict(list)
    for row in rows:
        by_cell[(row["sparsity_fraction"], row["rank"])].append(row)
    for frac in config.sparsity_levels:
        for r in config.ranks:
            cell_rows = by_cell[(frac, r)]
            errs_S = [row["err_S"] for row in cell_rows]
            errs_L = [row["err_L"] for row in cell_rows]
            cells.append(CellRecord(frac, r, float(np.mean(errs_S)), float(np.mean(errs_L)),
                                    errs_S, errs_L, [row["seed"] for row in cell_rows]))
            logger.info("Cell s=%g r=%d: err_S=%.3g err_L=%.3g", frac, r, cells[-1].mean_err_S, cells[-1].mean_err_L)

    _write_csv(out_dir / "grid.csv", GRID_COLUMNS, rows)
    _write_timings(out_dir / "timings.csv", rows, ("sparsity_fraction", "rank"))
    summary_rows = [
        {"sparsity_fraction": c.sparsity_fraction, "rank": c.rank, "mean_err_S": c.mean_err_S,
         "mean_err_L": c.mean_err_L, "trials": len(c.seeds),
         "not_converged": sum(1 for row in by_cell[(c.sparsity_fraction, c.rank)] if row["status"] != "converged")}
        for c in cells
    ]
    _write_csv(out_dir / "grid_summary.csv",
               ("sparsity_fraction", "rank", "mean_err_S", "mean_err_L", "trials", "not_converged"), summary_rows)
    for name in HEATMAP_FIELDS:
        render_heatmap(out_dir / "grid.csv", name, out_dir / f"heatmap_{name}.ppm")
    metadata = _metadata(config, started)
    write_json(out_dir / "run.json", metadata)
    logger.info("=== %s complete in %.1fs, results in %s ===", config.experiment, metadata["wall_seconds"], out_dir)
    return GridResult(config.experiment, cells, rows, metadata, out_dir)


def run_eda_experiment(config: ExperimentConfig) -> GridResult:
    """Event-count sweep: Y = T + H X + E on the EDA convolution mask."""
    if config.experiment != "eda":
        raise ValidationError(f"run_eda_experiment cannot run {config.experiment!r}")
    started = time.time()
    out_dir = Path(config.out_dir)
    mask = build_eda_mask(m=config.m, p=config.p)
    tasks = [(c, t) for c in config.event_counts for t in range(config.trials)]
    logger.info("=== eda: %d event counts x %d trials, gamma=%.4g ===",
                len(config.event_counts), config.trials, config.gamma_value())

    def worker(c, t):
        return _eda_trial(config, mask, c, t)

    def on_error(task):
        c, t = task
        return _failed_row({"events": c, "trial": t}, trial_seed(config.master_seed, c, t), ("err_X", "err_T"))

    results = _run_pool(tasks, worker, config.parallelism, lambda task: "events=%d t=%d" % task, on_error)
    rows = [results[task] for task in tasks]

    points = []
    for c in config.event_counts:
        point_rows = [row for row in rows if row["events"] == c]
        errs_X = [row["err_X"] for row in point_rows]
        errs_T = [row["err_T"] for row in point_rows]
        points.append(CurvePoint(c, float(np.mean(errs_X)), float(np.mean(errs_T)),
                                 errs_X, errs_T, [row["seed"] for row in point_rows]))
        logger.info("Events %d: err_X=%.3g err_T=%.3g", c, points[-1].mean_err_X, points[-1].mean_err_T)

    _write_csv(out_dir / "curve.csv", CURVE_COLUMNS, rows)
    _write_timings(out_dir / "timings.csv", rows, ("events",))
    _write_csv(out_dir / "curve_summary.csv", ("events", "mean_err_X", "mean_err_T", "trials"),
               [{"events": pt.events, "mean_err_X": pt.mean_err_X, "mean_err_T": pt.mean_err_T,
                 "trials": len(pt.seeds)} for pt in points])
    metadata = _metadata(config, started)
    write_json(out_dir / "run.json", metadata)
    logger.info("=== eda complete in %.1fs, results in %s ===", metadata["wall_seconds"], out_dir)
    return GridResult("eda", points, rows, metadata, out_dir)


def run_experiment(config: ExperimentConfig) -> GridResult:
    if config.experiment == "eda":
        return run_eda_experiment(config)
    return run_phase_experiment(config)


# ── Heatmaps ────────────────────────────────────────────────────────────

def _parse_float(raw: str, column: str, lineno: int) -> float:
    raw = raw.strip()
    if raw.lower() in ("", "nan"):
        return math.nan
    try:
        return float(raw)
    except ValueError:
        raise ValidationError(f"grid row {lineno}: bad {column} value {raw!r}") from None


def render_heatmap(grid_csv, field_name: str, out_image) -> Path:
    """One pixel per (sparsity, rank) cell: gray level 255*clip(mean error, 0, 1), NaN in red.

    Columns run from the smallest sparsity fraction; the bottom row is the smallest rank.
    """
    if field_name not in HEATMAP_FIELDS:
        raise ValidationError(f"heatmap field must be one of {', '.join(HEATMAP_FIELDS)}")
    grid_csv, out_image = Path(grid_csv), Path(out_image)
    values = defaultdict(list)
    with grid_csv.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"sparsity_fraction", "rank", field_name} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{grid_csv.name}: missing column(s) {', '.join(sorted(missing))}")
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise ValidationError(f"grid row {lineno}: wrong number of fields")
            frac = _parse_float(row["sparsity_fraction"], "sparsity_fraction", lineno)
            rank = _parse_float(row["rank"], "rank", lineno)
            if math.isnan(frac) or math.isnan(rank):
                raise ValidationError(f"grid row {lineno}: missing cell coordinates")
            values[(frac, rank)].append(_parse_float(row[field_name], field_name, lineno))
    if not values:
        raise ValidationError(f"{grid_csv.name}: no data rows")

    fracs = sorted({k[0] for k in values})
    ranks = sorted({k[1] for k in values})
    pixels = np.zeros((len(ranks), len(fracs), 3), dtype=np.uint8)
    for x, frac in enumerate(fracs):
        for y, rank in enumerate(ranks):
            cell = values.get((frac, rank))
            mean = float(np.mean(cell)) if cell else math.nan
            row = len(ranks) - 1 - y
            if math.isnan(mean):
                pixels[row, x] = HEATMAP_NAN_RGB
            else:
                pixels[row, x] = round(255 * min(max(mean, 0.0), 1.0))
    out_image.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(out_image, format="PPM")
    logger.info("Heatmap %s (%dx%d) written to %s", field_name, len(fracs), len(ranks), out_image)
    return out_image
