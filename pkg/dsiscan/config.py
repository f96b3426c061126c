import os
from dotenv import load_dotenv

load_dotenv()

DSI_SEED = int(os.getenv("DSI_SEED", 20141231))
DSI_OUTPUT_DIR = os.getenv("DSI_OUTPUT_DIR", "dsi_report")
DSI_LOG_LEVEL = os.getenv("DSI_LOG_LEVEL", "INFO")

# Worker processes for null replicates (joblib n_jobs; -1 uses every core)
DSI_N_JOBS = int(os.getenv("DSI_N_JOBS", 1))
DSI_SELFTEST_JOBS = int(os.getenv("DSI_SELFTEST_JOBS", -1))

# Spectral analysis
DSI_SURROGATES = int(os.getenv("DSI_SURROGATES", 1000))
DSI_BOOTSTRAP_REPLICATES = int(os.getenv("DSI_BOOTSTRAP_REPLICATES", 100))
DSI_NULL_MODEL = os.getenv("DSI_NULL_MODEL", "bootstrap")
DSI_OMEGA_MAX = float(os.getenv("DSI_OMEGA_MAX", 20.0))
DSI_OMEGA_BINS = int(os.getenv("DSI_OMEGA_BINS", 512))
DSI_HARMONIC_TOLERANCE = float(os.getenv("DSI_HARMONIC_TOLERANCE", 0.15))

# Density estimation
DSI_GRID_SIZE = int(os.getenv("DSI_GRID_SIZE", 512))
DSI_BANDWIDTH_MIN = float(os.getenv("DSI_BANDWIDTH_MIN", 0.05))
DSI_BANDWIDTH_MAX = float(os.getenv("DSI_BANDWIDTH_MAX", 1.0))
DSI_BANDWIDTH_COUNT = int(os.getenv("DSI_BANDWIDTH_COUNT", 12))
DSI_SPECTRAL_BANDWIDTH_FACTOR = float(os.getenv("DSI_SPECTRAL_BANDWIDTH_FACTOR", 0.5))
DSI_TREND_BANDWIDTH_FACTOR = float(os.getenv("DSI_TREND_BANDWIDTH_FACTOR", 8.0))

# Layers and portfolios
DSI_LAYER_RATIO = float(os.getenv("DSI_LAYER_RATIO", 3.5))
DSI_LAYER_TOLERANCE = float(os.getenv("DSI_LAYER_TOLERANCE", 0.35))
DSI_RANK_THRESHOLD = int(os.getenv("DSI_RANK_THRESHOLD", 500))
DSI_PERIODS_PER_YEAR = int(os.getenv("DSI_PERIODS_PER_YEAR", 252))
DSI_MIN_RETURN_OBSERVATIONS = int(os.getenv("DSI_MIN_RETURN_OBSERVATIONS", 30))
