"""Command-line entry point: solve, diagnose, certify, phase, eda, mask gen, render."""

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from src.certificate import (
    certificate_gamma_scan,
    check_certificate,
    construct_certificate,
    replay_proof_inequalities,
)
from src.constants import (
    EDA_M,
    EDA_P,
    EXIT_DIVERGED,
    EXIT_NEGATIVE_VERDICT,
    EXIT_OK,
    EXIT_VALIDATION,
    GAUSSIAN_INC_EPS,
    MASK_GEN_SIZE,
    MU_ENUMERATE_CAP,
    SOLVER_METHODS,
    STRICT_MARGIN,
    VERBOSE_ENV,
)
from src.core import reduced_svd
from src.diagnostics import diagnose, gaussian_inc_bound
from src.errors import CertificateError, SolverDivergedError, ValidationError
from src.harness import HEATMAP_FIELDS, load_experiment_config, render_heatmap, run_experiment
from src.masks import (
    build_blur_mask,
    build_eda_mask,
    build_gaussian_mask,
    build_identity,
    build_orthogonal_columns_mask,
    load_mask,
    save_mask,
    scale_columns,
)
from src.matrix_io import jsonable, read_json, read_matrix_csv, write_json, write_matrix_csv
from src.solver import SolverConfig, solve_masked_separation

logger = logging.getLogger(__name__)


def _print_json(payload: dict):
    print(json.dumps(jsonable(payload), indent=2, sort_keys=True))


def parse_gamma_spec(spec: str) -> list[float]:
    """A single float, or ``lo:hi:count`` for a log-spaced scan."""
    try:
        if ":" not in spec:
            values = [float(spec)]
        else:
            lo, hi, count = spec.split(":")
            values = list(np.geomspace(float(lo), float(hi), int(count)))
    except ValueError:
        raise ValidationError(f"bad gamma spec {spec!r}; expected a float or lo:hi:count") from None
    if not values or any(not (v > 0 and math.isfinite(v)) for v in values):
        raise ValidationError(f"gamma values must be positive, got {spec!r}")
    return [float(v) for v in values]


# ── Subcommands ─────────────────────────────────────────────────────────

_SOLVE_FLAGS = ("gamma", "method", "max_iter", "rho", "step_scale", "tol_primal", "tol_change", "inner_iters")


def _solver_config(args) -> SolverConfig:
    """Options from --config, overridden by any flag given on the command line."""
    options = read_json(args.config) if args.config else {}
    options.update({k: getattr(args, k) for k in _SOLVE_FLAGS if getattr(args, k) is not None})
    if args.adaptive_rho:
        options["adaptive_rho"] = True
    if "gamma" not in options:
        raise ValidationError("solve needs --gamma or a gamma in --config")
    return SolverConfig.from_dict(options)


def cmd_solve(args) -> int:
    M0 = read_matrix_csv(args.m0, "M0")
    H = load_mask(args.mask).H
    config = _solver_config(args)
    started = time.time()
    result = solve_masked_separation(M0, H, config)
    prefix = args.out_prefix
    write_matrix_csv(f"{prefix}S_hat.csv", result.S_hat)
    write_matrix_csv(f"{prefix}L_hat.csv", result.L_hat)
    report = {"config": config.to_dict(), **result.summary(), "wall_seconds": time.time() - started}
    write_json(f"{prefix}report.json", report)
    _print_json(report)
    if result.status == "diverged":
        raise SolverDivergedError(result.iterations)
    return EXIT_OK


def _load_problem(args):
    mask = load_mask(args.mask)
    S0 = read_matrix_csv(args.s0, "S0")
    L0 = read_matrix_csv(args.l0, "L0")
    G, _ = scale_columns(mask, args.scaling)
    return mask, G, S0, reduced_svd(L0)


def cmd_diagnose(args) -> int:
    mask, G, S0, factors = _load_problem(args)
    report = diagnose(G, S0, factors, enumerate_cap=args.enumerate_cap, seed=args.seed, workers=args.workers)
    payload = report.to_dict()
    provenance = mask.params.get("provenance") or {}
    if provenance.get("family") == "gaussian" and factors.rank:
        m, n = factors.shape
        predicted = gaussian_inc_bound(m, n, mask.p, factors.rank, GAUSSIAN_INC_EPS)
        payload["gaussian_inc_bound"] = predicted._asdict()
    if args.out:
        write_json(args.out, payload)
    _print_json(payload)
    return EXIT_OK if report.theorem_ok else EXIT_NEGATIVE_VERDICT


def cmd_certify(args) -> int:
    _, G, S0, factors = _load_problem(args)
    gammas = parse_gamma_spec(args.gamma)
    try:
        if len(gammas) == 1:
            cert = construct_certificate(G, S0, factors, gammas[0])
            verdict = check_certificate(cert, G, S0, factors, args.strict_margin)
            payload = {**verdict.to_dict(), "lstsq_residual": cert.lstsq_residual}
            if args.replay:
                report = diagnose(G, S0, factors, seed=args.seed)
                if report.delta < 1.0:
                    replay = replay_proof_inequalities(cert, G, factors, report.mu_upper, report.xi_upper, report.delta)
                    payload["proof_replay"] = {**vars(replay), "ok": replay.ok}
            ok = verdict.ok
        else:
            rows = certificate_gamma_scan(G, S0, factors, gammas, args.strict_margin, workers=args.workers)
            payload = {
                "scan": [{"gamma": r.gamma, "ok": r.ok, "failed": r.failed, **r.values._asdict()} for r in rows],
                "passing": [r.gamma for r in rows if r.ok],
            }
            ok = bool(payload["passing"])
    except CertificateError as e:
        payload = {"ok": False, "failed": ["construction"], "error": str(e), "lstsq_residual": e.residual}
        ok = False
    if args.out:
        write_json(args.out, payload)
    _print_json(payload)
    return EXIT_OK if ok else EXIT_NEGATIVE_VERDICT


def _experiment_overrides(args) -> dict:
    return {
        "experiment": getattr(args, "experiment", None),
        "trials": args.trials,
        "master_seed": args.master_seed,
        "out_dir": args.out_dir,
        "parallelism": args.parallelism,
    }


def cmd_phase(args) -> int:
    config = load_experiment_config(args.config, _experiment_overrides(args))
    if config.experiment == "eda":
        raise ValidationError("use the 'eda' subcommand for the eda experiment")
    run_experiment(config)
    return EXIT_OK


def cmd_eda(args) -> int:
    overrides = _experiment_overrides(args)
    overrides["experiment"] = "eda"
    if args.no_events:
        overrides["include_events"] = False
    run_experiment(load_experiment_config(args.config, overrides))
    return EXIT_OK


def cmd_mask_gen(args) -> int:
    family = args.family
    if family == "eda_convolution":
        sizes = {k: getattr(args, k) for k in ("m", "p") if getattr(args, k) is not None}
        save_mask(build_eda_mask(**sizes), args.out)
        return EXIT_OK
    m = MASK_GEN_SIZE if args.m is None else args.m
    p = MASK_GEN_SIZE if args.p is None else args.p
    if family == "identity":
        mask = build_identity(p)
    elif family == "blur_circulant":
        mask = build_blur_mask(p)
    elif family == "gaussian":
        mask = build_gaussian_mask(m, p, args.seed)
    else:
        scales = [float(v) for v in args.scales.split(",")] if args.scales else None
        mask = build_orthogonal_columns_mask(m, p, scales, args.seed)
    save_mask(mask, args.out)
    return EXIT_OK


def cmd_render(args) -> int:
    render_heatmap(args.grid, args.field, args.out)
    return EXIT_OK


# ── Parser ──────────────────────────────────────────────────────────────

def _add_problem_args(parser):
    parser.add_argument("--mask", type=Path, required=True, help="Mask CSV (m x p)")
    parser.add_argument("--s0", type=Path, required=True, help="Sparse component CSV (p x n)")
    parser.add_argument("--l0", type=Path, required=True, help="Low-rank component CSV (m x n)")
    parser.add_argument("--scaling", choices=("spectral", "column_norm"), default="spectral",
                        help="Column scaling D used to form G = H D")
    parser.add_argument("--seed", type=int, default=0, help="Seed for sampled bounds")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", type=Path, help="Also write the JSON report here")


def _add_experiment_args(parser):
    parser.add_argument("--config", type=Path, help="Experiment config JSON")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--master-seed", type=int)
    parser.add_argument("--out-dir", type=str)
    parser.add_argument("--parallelism", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="masksep", description="Masked sparse plus low-rank separation.")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="Solve min gamma||S||_1 + ||L||_* s.t. L + H S = M0")
    p.add_argument("--m0", type=Path, required=True)
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--config", type=Path, help="JSON file of solver options; flags override it")
    p.add_argument("--gamma", type=float)
    p.add_argument("--method", choices=SOLVER_METHODS)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--step-scale", type=float)
    p.add_argument("--tol-primal", type=float)
    p.add_argument("--tol-change", type=float)
    p.add_argument("--inner-iters", type=int, help="Inner FISTA steps (admm_inner_fista)")
    p.add_argument("--adaptive-rho", action="store_true")
    p.add_argument("--out-prefix", type=str, required=True, help="Prefix for S_hat.csv, L_hat.csv, report.json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("diagnose", help="Recoverability diagnostics; exits 1 when the theorem check fails")
    _add_problem_args(p)
    p.add_argument("--enumerate-cap", type=int, default=MU_ENUMERATE_CAP)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("certify", help="Construct and check a dual certificate")
    _add_problem_args(p)
    p.add_argument("--gamma", type=str, required=True, help="A float or lo:hi:count")
    p.add_argument("--strict-margin", type=float, default=STRICT_MARGIN)
    p.add_argument("--replay", action="store_true", help="Also replay the proof inequalities")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("phase", help="Phase-transition grid")
    _add_experiment_args(p)
    p.add_argument("--experiment", choices=("phase_blur", "phase_gaussian"))
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("eda", help="EDA event-count curve")
    _add_experiment_args(p)
    p.add_argument("--no-events", action="store_true", help="Tonic plus noise only")
    p.set_defaults(func=cmd_eda)

    p = sub.add_parser("mask", help="Mask utilities")
    mask_sub = p.add_subparsers(dest="mask_command", required=True)
    g = mask_sub.add_parser("gen", help="Build a mask and write CSV + JSON sidecar")
    g.add_argument("--family", required=True,
                   choices=("identity", "blur_circulant", "gaussian", "eda_convolution", "orthogonal_columns"))
    g.add_argument("--m", type=int, help=f"Rows (default {MASK_GEN_SIZE}; eda_convolution: {EDA_M})")
    g.add_argument("--p", type=int, help=f"Columns (default {MASK_GEN_SIZE}; eda_convolution: {EDA_P})")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scales", type=str, help="Comma-separated column scales (orthogonal_columns)")
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_mask_gen)

    p = sub.add_parser("render", help="Render a grid.csv field as a PPM heatmap")
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--field", choices=HEATMAP_FIELDS, default="err_S")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    load_dotenv(PROJECT_ROOT / ".env")
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = args.verbose or os.getenv(VERBOSE_ENV, "0") == "1"
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s [%(levelname)s] %(name)s: %(message)s')
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as e:
        logger.error("Invalid input: %s", e)
        return EXIT_VALIDATION
    except SolverDivergedError as e:
        logger.error("%s", e)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
