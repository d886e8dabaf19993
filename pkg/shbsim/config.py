import os
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

load_dotenv()

TWO_PI = 2.0 * np.pi

# Internal units are SI with angular frequencies in rad/s. Only the I/O layer
# (scenario files, CSV/JSON outputs) speaks Hz, kHz, MHz, mT, us or hours.

# ── Lattice (scheelite CaWO4, I4_1/a) ─────────────────────────────────────────
LATTICE_A_NM = 0.5243
LATTICE_C_NM = 1.1374
W_FRACTIONAL_POSITIONS = (
    (0.0, 0.25, 0.125),
    (0.5, 0.25, 0.375),
    (0.5, 0.75, 0.625),
    (0.0, 0.75, 0.875),
)
ER_SITE = (0.0, 0.25, 0.625)      # Ca site hosting the Er3+ ion
CUTOFF_RADIUS_NM = 1.2

SHELL_RADII_NM = {"TypeI": 0.3707, "TypeII": 0.3867, "TypeIII": 0.5687}
SHELL_TOLERANCE_NM = 0.001        # +-1 pm classification band

ISOTOPIC_ABUNDANCE = 0.145        # natural 183W abundance
MAX_NS = 12                       # dimension guard: 2**(Ns+1) <= 8192
SAMPLE_RETRIES = 4
CUTOFF_GROWTH = 1.5

# Dipolar hyperfine uses the Lande factor of the 4I15/2 multiplet
G_ELECTRON_DIPOLAR = 6.0 / 5.0

# Fitted hyperfine magnitudes (Hz); signs follow the dipolar value of the site
FITTED_OVERRIDES_HZ = {
    "TypeI": {"A_e": 73.0e3, "A_g": 23.0e3, "B": 0.0},
    "TypeII": {"A": 14.8e3, "B": 35.7e3},
}

# ── Spin Hamiltonian ──────────────────────────────────────────────────────────
G_PARALLEL = 1.247
G_PERP = 8.38
GAMMA_PARALLEL = TWO_PI * 17.35e9     # rad/s/T, measured
GAMMA_PERP = TWO_PI * 117.0e9
GAMMA_W = TWO_PI * 1.77394e6          # 183W
B0_T = (0.0, 1.0e-3, 0.4476)          # 1 mT off c; omega_I/2pi = 794 kHz
# <Jz> of the populated (lower) and upper electron level; the lower one is
# the negative expectation value for g_J > 0
JZ_E = 0.3
JZ_G = -0.7
OMEGA0 = TWO_PI * 7.839e9             # reference zero of every spectrum
GAMMA1 = 5.0                          # s^-1
T2 = 30e-3
GAMMA2 = 1.0 / T2
SIGMA = TWO_PI * 8.0e6

# ── Pumping and probing ───────────────────────────────────────────────────────
PUMP_AMPLITUDE = TWO_PI * 10.0
PUMP_DURATION = 120.0
PROBE_HWHM = TWO_PI * 1.0e3
N_DETUNINGS = 201
DETUNING_WINDOW_FACTOR = 3.0          # window = grid span + 3x grid span
DETUNING_DISTRIBUTION = "uniform"     # or "gaussian" (width SIGMA)
GAUSSIAN_WINDOW_SIGMAS = 5.0
ACTIVE_TRANSITION_THRESHOLD = 1e-4    # peak_rate * duration
N_RESONANCE_NODES = 32
RESONANCE_MERGE_TOL = 1e-6            # rad/s
EXPM_DENSE_MAX_DIM = 1024
EXPM_TOL = 1e-10
CLAMP_FLOOR = -1e-12

# ── Reset sweep ───────────────────────────────────────────────────────────────
RESET_SPAN = TWO_PI * 4.0e6
RESET_STEP = TWO_PI * 5.0e3           # chirped across each step
RESET_SCANS = 30
RESET_AMPLITUDE = TWO_PI * 2.0e3
RESET_DWELL = 10e-3

# ── Pulse pairs and echoes ────────────────────────────────────────────────────
RABI_AMPLITUDE = TWO_PI * 0.25e6
PULSE_DURATION = 1e-6
PAIR_DELAY = 100e-6
PAIR_WAIT = 0.2
CHECKPOINTS = (300, 1500, 3000, 6000, 12000, 18000, 36000)
ECHO_DETUNING_SPAN = TWO_PI * 2.0e6
ECHO_DETUNING_STEP = TWO_PI * 1.0e3

# ── Resonator ─────────────────────────────────────────────────────────────────
KAPPA_C = 3.0e7
KAPPA_I = 1.5e7
G_ENSEMBLE = TWO_PI * 0.5e6
GAMMA_H = TWO_PI * 1.0e3

# ── Fits ──────────────────────────────────────────────────────────────────────
N_TAU_SEEDS = 8
DEGENERATE_TAU_RATIO = 1.5
FIT_MAX_NFEV = 2000
SECONDS_PER_HOUR = 3600.0

# ── Ensemble profiles ─────────────────────────────────────────────────────────
PRESETS = {
    "desk": {"ns": 6, "n_configs": 64, "n_detunings": 51, "n_pairs": 3000},
    "full": {"ns": 8, "n_configs": 500, "n_detunings": 201, "n_pairs": 18000},
}

# ── Environment ───────────────────────────────────────────────────────────────
WORKERS = int(os.environ.get("SHBSIM_WORKERS", "1"))
OUTPUT_DIR = Path(os.environ.get("SHBSIM_OUTPUT_DIR", "results"))
LOG_LEVEL = os.environ.get("SHBSIM_LOG_LEVEL", "WARNING")

SCHEMA_VERSION = 1

# ── Random seed ───────────────────────────────────────────────────────────────
SEED = 42
