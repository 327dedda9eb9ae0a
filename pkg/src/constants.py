"""Centralized constants for the masked matrix separation toolkit."""

# ── Environment ─────────────────────────────────────────────────────────
# Read after .env is loaded, never at import time.
VERBOSE_ENV = "VERBOSE_LOGGING"
OUTPUT_DIR_ENV = "MASKSEP_OUTPUT_DIR"

# ── Output locations ────────────────────────────────────────────────────
DEFAULT_OUTPUT_DIR = "results"
SIDECAR_SUFFIX = ".json"

# ── Linear algebra tolerances ───────────────────────────────────────────
DEFAULT_RANK_TOL = 1e-10       # relative to sigma_max
DEFAULT_ZERO_TOL = 0.0         # supports are exact for synthetic data
ORTHONORMAL_TOL = 1e-8         # accepted deviation of U^T U from I for inputs
UNIT_NORM_TOL = 1e-8           # accepted deviation of ||v||_2 from 1

# ── Masks ───────────────────────────────────────────────────────────────
EDA_TAU1 = 2.0                 # seconds, slow decay
EDA_TAU2 = 0.75                # seconds, fast rise
EDA_RATE = 4                   # samples per second
EDA_WINDOW = 40.0              # seconds sampled, t in [0, 40)
EDA_M = 240
EDA_P = 160
EDA_N = 50
MASK_GEN_SIZE = 100            # mask gen rows and columns when not given

# ── Random models ───────────────────────────────────────────────────────
SPARSE_VALUE_LOW = 1.0
SPARSE_VALUE_HIGH = 2.0
TONIC_AMPLITUDE = 1.0
TONIC_MODULATION = 0.5         # sigma_2/sigma_1 ~ 2.6 * modulation / n
EDA_NOISE_SIGMA = 0.01
TAIL_CHECK_SD_SLACK = 3.0      # binomial standard deviations

# ── Diagnostics ─────────────────────────────────────────────────────────
MU_ENUMERATE_CAP = 20          # 2^19 spectral norms at the cap
MU_SAMPLES = 256
MU_BATCH = 4096                # max sign assignments per enumeration chunk
MU_MEMORY_BUDGET = 64 * 2**20  # bytes per chunk for the stacked A and G A arrays
XI_SAMPLES = 64
XI_MAX_RESAMPLES = 100
GAUSSIAN_INC_EPS = 0.01        # failure probability for the predicted Gaussian incoherence
TRANSVERSALITY_TOL = 1e-8
TRANSVERSALITY_GUARD = 5000    # max combined basis dimension

# ── Solver ──────────────────────────────────────────────────────────────
SOLVER_METHODS = ("linearized_admm", "admm_inner_fista", "pinv_baseline")
DEFAULT_GAMMA = 0.1
DEFAULT_RHO = 1.0
DEFAULT_STEP_SCALE = 0.99
DEFAULT_MAX_ITER = 2000
DEFAULT_TOL_PRIMAL = 1e-7
DEFAULT_TOL_CHANGE = 1e-7
DEFAULT_INNER_ITERS = 20
RESIDUAL_BALANCE_RATIO = 10.0  # adaptive rho: rebalance when residuals differ by this factor
RESIDUAL_BALANCE_FACTOR = 2.0
PINV_COND_LIMIT = 1e8
NON_UNIQUE_RATIO = 1e-8        # sigma_min(H) / sigma_max(H) below this flags non-uniqueness
SOLVER_LOG_EVERY = 200

# ── Certificates ────────────────────────────────────────────────────────
CERT_SIZE_GUARD = 5000         # max unknowns |Omega| + dim T
CERT_EQUALITY_TOL = 1e-8
STRICT_MARGIN = 1e-6
ACCEPTANCE_MARGIN = 0.05

# ── Harness ─────────────────────────────────────────────────────────────
EXPERIMENTS = ("phase_blur", "phase_gaussian", "eda")
GAMMA_RULES = ("inv_sqrt_m", "inv_sqrt_n", "explicit")
PHASE_SPARSITY_LEVELS = (0.01, 0.03, 0.06, 0.09, 0.12, 0.15, 0.18, 0.21, 0.24, 0.27, 0.3)
PHASE_RANKS = (1, 4, 7, 10, 13, 16, 19, 22, 25, 28)
EDA_EVENT_COUNTS = (4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30)
DEFAULT_TRIALS = 8
DEFAULT_MASTER_SEED = 2024
GRID_COLUMNS = ("sparsity_fraction", "rank", "trial", "seed", "err_S", "err_L", "status", "iters")
CURVE_COLUMNS = ("events", "trial", "seed", "err_X", "err_T", "status", "iters")
TIMING_COLUMNS = ("key", "trial", "seconds")
HEATMAP_NAN_RGB = (255, 0, 0)

# ── CLI exit codes ──────────────────────────────────────────────────────
EXIT_OK = 0
EXIT_NEGATIVE_VERDICT = 1
EXIT_VALIDATION = 2
EXIT_DIVERGED = 3
