"""SPARKLING MRI: Constants"""

# Hardware defaults (proton imaging, clinical gradients)
DEFAULT_N = 320
DEFAULT_FOV = 0.23
DEFAULT_G_MAX = 40.0
DEFAULT_S_MAX = 180.0
DEFAULT_RASTER_DT = 10.0
DEFAULT_DWELL_DT = 2.0
DEFAULT_GAMMA = 42.57

DEFAULT_N_SHOTS = 16
DEFAULT_N_SAMPLES = 512

# Target density defaults
DEFAULT_VDS_CUTOFF = 0.25
DEFAULT_VDS_DECAY = 2.0
DEFAULT_LOUPE_SLOPE = 20.0
DEFAULT_LOUPE_EPOCHS = 100
DEFAULT_LOUPE_STEP = 1.0
LOG_SPECTRUM_FLOOR = 1e-12

# SPARKLING defaults
DEFAULT_N_LEVELS = 4
DEFAULT_ITERS_PER_LEVEL = 60
DEFAULT_STEP_SCALE = 0.1
DEFAULT_MAX_HALVINGS = 20
DEFAULT_PROJ_TOL = 1e-8
DEFAULT_PROJ_MAX_ITER = 5000
EXACT_REPULSION_LIMIT = 32768
BARNES_HUT_THETA = 0.5
COINCIDENT_PAIR_FRACTION = 0.01

INIT_GOLDEN_ANGLE = "golden-angle-radial"
INIT_RADIAL_INOUT = "radial-inout"
INIT_FILE = "file"
INIT_KINDS = [INIT_GOLDEN_ANGLE, INIT_RADIAL_INOUT, INIT_FILE]

# Fourier operator defaults
NUFFT_MODE_EXACT = "exact"
NUFFT_MODE_GRIDDED = "gridded"
NUFFT_MODES = [NUFFT_MODE_EXACT, NUFFT_MODE_GRIDDED]
DEFAULT_KERNEL_WIDTH = 8
DEFAULT_GRID_OVERSAMPLING = 2.0
DEFAULT_PIPE_ITERS = 10

# Reconstruction defaults
DEFAULT_LAMBDA = 1e-3
DEFAULT_RECON_MAX_ITER = 200
DEFAULT_RECON_TOL = 1e-6
DEFAULT_WAVELET = "sym8"
DEFAULT_N_SCALES = 4
DEFAULT_CENTER_FRACTION = 0.2
DEFAULT_LAMBDA_MIN = 1e-4
DEFAULT_LAMBDA_MAX = 1.0
DEFAULT_LAMBDA_COUNT = 7
POWER_ITERATIONS = 20

# Quality metrics
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
MASK_THRESHOLD = 0.1
MASK_PERCENTILE = 99.0
MASK_CLOSING_RADIUS = 2

# Density methods
DENSITY_VDS = "vds"
DENSITY_SPECTRUM = "spectrum"
DENSITY_LOG_SPECTRUM = "log-spectrum"
DENSITY_LOUPE_LITE = "loupe-lite"
DENSITY_METHODS = [
    DENSITY_VDS,
    DENSITY_SPECTRUM,
    DENSITY_LOG_SPECTRUM,
    DENSITY_LOUPE_LITE,
]

# Phantom contrasts
CONTRAST_T1 = "t1"
CONTRAST_T2 = "t2"
CONTRASTS = [CONTRAST_T1, CONTRAST_T2]

# Study output
RESULTS_COLUMNS = [
    "slice_id",
    "density_method",
    "R",
    "lambda",
    "ssim",
    "psnr",
    "recon_iters",
    "wall_ms",
]
TIMINGS_COLUMNS = [
    "slice_id",
    "density_method",
    "acquire_ms",
    "calibrate_ms",
    "recon_ms",
    "score_ms",
]
SUMMARY_COLUMNS = [
    "density_method",
    "contrast",
    "count",
    "ssim_median",
    "ssim_q1",
    "ssim_q3",
    "psnr_median",
    "psnr_q1",
    "psnr_q3",
]

# CLI exit codes
EXIT_SUCCESS = 0
EXIT_USAGE = 1
EXIT_DATA_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# CLI keyword for choosing lambda by SSIM against a reference
LAMBDA_SEARCH = "search"
