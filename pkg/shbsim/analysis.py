"""Measurement-side analysis: resonator reflection, line and decay fits, temperature models.

Frequencies are angular (rad/s) relative to the resonator frame, fields in
tesla, times in seconds. Reports convert taus to hours.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from lmfit import Model
from lmfit.models import ConstantModel, LorentzianModel
from scipy import constants as cnst
from scipy.optimize import least_squares

from shbsim.config import (
    DEGENERATE_TAU_RATIO,
    FIT_MAX_NFEV,
    G_ENSEMBLE,
    GAMMA_H,
    GAMMA_PARALLEL,
    GAMMA_PERP,
    KAPPA_C,
    KAPPA_I,
    N_TAU_SEEDS,
    OMEGA0,
    SECONDS_PER_HOUR,
    TWO_PI,
)
from shbsim.errors import (
    ConfigError,
    DegenerateFitError,
    DegenerateFitWarning,
    DegenerateInputError,
    ExtrapolationWarning,
    FitError,
    InversionWarning,
    SingularityError,
    ZeroTemperatureWarning,
)
from shbsim.holeburn import SpectralDensity

logger = logging.getLogger(__name__)

FIT_TOL = 1e-12
MIN_COUPLING = 1e-12      # relative size below which |S11|^2 carries no density


# ── Resonator ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ResonatorModel:
    omega0: float = 0.0             # resonator centre in the detuning frame
    kappa_c: float = KAPPA_C
    kappa_i: float = KAPPA_I
    g_ens: float = G_ENSEMBLE
    gamma_h: float = GAMMA_H

    def __post_init__(self):
        if self.kappa_c <= 0 or self.kappa_i <= 0:
            raise ConfigError("kappa_c and kappa_i must be positive")
        if self.gamma_h < 0 or self.g_ens <= 0:
            raise ConfigError("g_ens must be positive and gamma_h non-negative")

    @property
    def kappa(self) -> float:
        return self.kappa_c + self.kappa_i

    def denominator(self, omega) -> np.ndarray:
        return (np.asarray(omega, dtype=float) - self.omega0) + 0.5j * self.kappa

    def bare_s11(self, omega) -> np.ndarray:
        return 1.0 - 1j * self.kappa_c / self.denominator(omega)


def cavity_pull(model: ResonatorModel, rho: SpectralDensity, omega) -> np.ndarray:
    """W(w) = g^2 int rho(w') dw' / (w - w' + i gamma/2), rho linear between grid points."""
    grid = np.asarray(rho.freq_grid, dtype=float)
    values = np.asarray(rho.values, dtype=float)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    # gamma_h = 0 takes the principal value with the causal -i pi delta term
    z = omega[:, None] + 0.5j * max(model.gamma_h, 1e-300)
    x0, x1 = grid[:-1], grid[1:]
    slope = np.diff(values) / np.diff(grid)
    offset = values[:-1] - slope * x0
    u0 = z - x0[None, :]
    u1 = z - x1[None, :]
    seg = (offset + slope * z) * (np.log(u0) - np.log(u1)) - slope * (u0 - u1)
    return model.g_ens**2 * seg.sum(axis=1)


def s11(model: ResonatorModel, rho: SpectralDensity, omega) -> np.ndarray:
    """S11 = 1 - i kappa_c / ((w - w0) + i kappa/2 - W(w))."""
    return 1.0 - 1j * model.kappa_c / (model.denominator(omega) - cavity_pull(model, rho, omega))


def density_from_s11(s11_data, omega, model: ResonatorModel) -> np.ndarray:
    """Spin density -Im W / (pi g^2) from reflection data.

    Complex data are inverted exactly through W = D + i kappa_c / (S11 - 1).
    Real |S11|^2 data use the first-order expansion about the bare resonator.
    """
    omega = np.asarray(omega, dtype=float)
    data = np.asarray(s11_data)
    scale = np.pi * model.g_ens**2
    if np.iscomplexobj(data):
        if np.any(data == 1.0):
            raise SingularityError("S11 = 1 carries no invertible response")
        w = model.denominator(omega) + 1j * model.kappa_c / (data - 1.0)
        return -w.imag / scale

    if np.isclose(model.kappa_i, model.kappa_c, rtol=1e-12, atol=0):
        raise SingularityError("kappa_i = kappa_c: the |S11|^2 inversion is singular")
    bare = model.bare_s11(omega)
    d = model.denominator(omega)
    coupling = 2.0 * model.kappa_c * np.real(np.conj(bare) / d**2)
    small = np.abs(coupling) < MIN_COUPLING * np.max(np.abs(coupling))
    if np.any(small):
        warnings.warn(
            f"{int(small.sum())} frequencies with vanishing |S11|^2 sensitivity set to NaN",
            InversionWarning,
            stacklevel=2,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        im_w = np.where(small, np.nan, (data.astype(float) - np.abs(bare) ** 2) / coupling)
    return -im_w / scale


def density_ratio(s11_sq_burned, s11_sq_reference, omega, model: ResonatorModel) -> np.ndarray:
    """rho1/rho0 = (|S1|^2 - |Sb|^2) / (|S0|^2 - |Sb|^2)."""
    if np.isclose(model.kappa_i, model.kappa_c, rtol=1e-12, atol=0):
        raise SingularityError("kappa_i = kappa_c: the |S11|^2 inversion is singular")
    baseline = np.abs(model.bare_s11(omega)) ** 2
    return (np.asarray(s11_sq_burned) - baseline) / (np.asarray(s11_sq_reference) - baseline)


# ── Line and alignment fits ───────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class LineScan:
    b0_grid: np.ndarray
    kappa_i_values: np.ndarray

    def __post_init__(self):
        if self.b0_grid.shape != self.kappa_i_values.shape or self.b0_grid.size < 4:
            raise ConfigError("line scan needs matching field and loss arrays of length >= 4")
        if np.any(np.diff(self.b0_grid) <= 0):
            raise ConfigError("field grid must be strictly increasing")


def fit_line(scan: LineScan, gamma_parallel: float = GAMMA_PARALLEL) -> dict:
    """Lorentzian plus constant through kappa_i(B0); widths converted with gamma_parallel."""
    y = scan.kappa_i_values
    if np.ptp(y) <= 1e-12 * max(np.max(np.abs(y)), 1e-300):
        raise FitError("flat line scan: no peak to fit")

    mid = 0.5 * (scan.b0_grid[0] + scan.b0_grid[-1])
    x = (scan.b0_grid - mid) * 1e3          # mT about the scan midpoint
    peak = int(np.argmax(y))
    above = x[y >= 0.5 * (y.max() + y.min())]
    sigma0 = max(0.5 * (above[-1] - above[0]), np.min(np.diff(x)))

    model = LorentzianModel() + ConstantModel()
    params = model.make_params(
        amplitude=(y.max() - y.min()) * np.pi * sigma0,
        center=x[peak],
        sigma=sigma0,
        c=y.min(),
    )
    params["sigma"].set(min=0.0)
    result = model.fit(y, params, x=x, fit_kws={"xtol": FIT_TOL, "ftol": FIT_TOL}, max_nfev=FIT_MAX_NFEV)
    if not result.success:
        raise FitError(f"line fit did not converge: {result.message}")

    center_t = mid + result.params["center"].value * 1e-3
    fwhm_t = 2.0 * result.params["sigma"].value * 1e-3
    logger.info("line fit: center %.6f T, fwhm %.4f mT", center_t, fwhm_t * 1e3)
    return {
        "center_T": center_t,
        "fwhm_T": fwhm_t,
        "fwhm_Hz": fwhm_t * gamma_parallel / TWO_PI,
        "amplitude": result.params["amplitude"].value,
        "baseline": result.params["c"].value,
        "redchi": result.redchi,
    }


def alignment_model(theta, gamma_par=GAMMA_PARALLEL, gamma_perp=GAMMA_PERP, omega0=OMEGA0, b_offset=0.0):
    """Resonance field omega0 / sqrt(gamma_par^2 cos^2 + gamma_perp^2 sin^2) + b_offset."""
    if gamma_par <= 0 or gamma_perp <= 0:
        raise ConfigError("gyromagnetic ratios must be positive")
    theta = np.asarray(theta, dtype=float)
    return omega0 / np.sqrt((gamma_par * np.cos(theta)) ** 2 + (gamma_perp * np.sin(theta)) ** 2) + b_offset


def _alignment_curve(theta, theta0, b_offset, gamma_par, gamma_perp, omega0):
    return alignment_model(theta - theta0, gamma_par, gamma_perp, omega0, b_offset)


def fit_alignment(
    theta,
    b_peak,
    omega0: float = OMEGA0,
    gamma_par: float = GAMMA_PARALLEL,
    gamma_perp: float = GAMMA_PERP,
    vary_gammas: bool = False,
) -> dict:
    """Fit the angle origin and field offset of a rotation series."""
    theta = np.asarray(theta, dtype=float)
    b_peak = np.asarray(b_peak, dtype=float)
    # the field peaks on the axis with the smaller gyromagnetic ratio
    peak = int(np.argmax(b_peak) if gamma_par < gamma_perp else np.argmin(b_peak))
    seed = theta[peak]
    model = Model(_alignment_curve)
    params = model.make_params(
        theta0=seed,
        b_offset=b_peak[peak] - omega0 / gamma_par,
        gamma_par=gamma_par,
        gamma_perp=gamma_perp,
        omega0=omega0,
    )
    params["omega0"].set(vary=False)
    params["theta0"].set(min=seed - np.pi / 4, max=seed + np.pi / 4)
    params["gamma_par"].set(vary=vary_gammas, min=0.0)
    params["gamma_perp"].set(vary=vary_gammas, min=0.0)
    result = model.fit(b_peak, params, theta=theta, fit_kws={"xtol": FIT_TOL, "ftol": FIT_TOL})
    if not result.success:
        raise FitError(f"alignment fit did not converge: {result.message}")
    return {name: p.value for name, p in result.params.items()} | {"redchi": result.redchi}


# ── Multi-exponential decays ──────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class DecayFit:
    amplitudes: np.ndarray
    taus: np.ndarray
    n_terms: int
    residual_rms: float
    covariance: np.ndarray
    t_range: tuple[float, float] = (0.0, np.inf)
    degenerate: bool = False

    def __post_init__(self):
        if np.any(self.taus <= 0) or np.any(np.diff(self.taus) < 0):
            raise FitError("taus must be positive and sorted")
        if self.n_terms not in (1, 2, 3):
            raise ConfigError("n_terms must be 1, 2 or 3")

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(-t[..., None] / self.taus) @ self.amplitudes

    def to_dict(self) -> dict:
        return {
            "n_terms": self.n_terms,
            "amplitudes": self.amplitudes.tolist(),
            "taus_s": self.taus.tolist(),
            "taus_h": (self.taus / SECONDS_PER_HOUR).tolist(),
            "residual_rms": self.residual_rms,
            "covariance": self.covariance.tolist(),
            "degenerate": self.degenerate,
        }


def _basis(t: np.ndarray, log_taus: np.ndarray) -> np.ndarray:
    return np.exp(-t[:, None] * np.exp(-log_taus)[None, :])


def _project(t, y, w, log_taus):
    phi = _basis(t, log_taus) * w[:, None]
    amps, *_ = np.linalg.lstsq(phi, y * w, rcond=None)
    return amps, y * w - phi @ amps


def fit_multi_exponential(t, y, n_terms: int = 2, weights=None) -> DecayFit:
    """Sum of exponentials by variable projection over log(tau), multi-started."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if n_terms not in (1, 2, 3):
        raise ConfigError("n_terms must be 1, 2 or 3")
    if t.shape != y.shape or np.any(np.diff(t) <= 0):
        raise ConfigError("t must be strictly increasing and match y")
    if 2 * n_terms >= t.size:
        raise ConfigError(f"{t.size} points cannot constrain {n_terms} exponentials")
    if np.ptp(y) <= 1e-12 * max(np.max(np.abs(y)), 1e-300):
        raise DegenerateFitError("constant data carry no decay")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)

    span = t[-1] - t[0]
    seeds = np.log(np.geomspace(max(np.min(np.diff(t)), span * 1e-4), 10.0 * span, N_TAU_SEEDS))

    best = None
    for start in itertools.combinations(seeds, n_terms):
        sol = least_squares(
            lambda p: _project(t, y, w, p)[1],
            np.array(start),
            method="lm",
            xtol=FIT_TOL,
            ftol=FIT_TOL,
            max_nfev=FIT_MAX_NFEV,
        )
        if np.all(np.isfinite(sol.x)) and (best is None or sol.cost < best.cost):
            best = sol
    if best is None:
        raise FitError("no multi-exponential start converged")

    order = np.argsort(best.x)
    log_taus = best.x[order]
    amps, resid = _project(t, y, w, log_taus)
    taus = np.exp(log_taus)

    # Jacobian of the weighted model in (amplitudes, taus)
    e = np.exp(-t[:, None] / taus[None, :])
    jac = np.hstack([e, e * amps[None, :] * t[:, None] / taus[None, :] ** 2]) * w[:, None]
    dof = max(t.size - 2 * n_terms, 1)
    s2 = float(resid @ resid) / dof
    covariance = s2 * np.linalg.pinv(jac.T @ jac)

    degenerate = bool(n_terms > 1 and np.min(taus[1:] / taus[:-1]) < DEGENERATE_TAU_RATIO)
    if degenerate:
        warnings.warn(
            f"fitted taus {taus} closer than a factor {DEGENERATE_TAU_RATIO}",
            DegenerateFitWarning,
            stacklevel=2,
        )
    return DecayFit(
        amplitudes=amps,
        taus=taus,
        n_terms=n_terms,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        covariance=covariance,
        t_range=(float(t[0]), float(t[-1])),
        degenerate=degenerate,
    )


def rescale_probe_decay(raw, n_pulses, reference_fit: DecayFit) -> np.ndarray:
    """Divide out the probe-induced decay, reference normalized to 1 at zero pulses."""
    n_pulses = np.asarray(n_pulses, dtype=float)
    if np.any(n_pulses < 0):
        raise ConfigError("pulse counts must be non-negative")
    if np.any(n_pulses > reference_fit.t_range[1]):
        warnings.warn(
            f"reference decay extrapolated beyond {reference_fit.t_range[1]:g} pulses",
            ExtrapolationWarning,
            stacklevel=2,
        )
    anchor = reference_fit.evaluate(0.0)
    if anchor == 0:
        raise SingularityError("reference decay vanishes at zero pulses")
    return np.asarray(raw, dtype=float) / (reference_fit.evaluate(n_pulses) / anchor)


# ── Temperature dependence ────────────────────────────────────────────────────

def orbach_rate(T, gamma_1x: float, omega0: float = OMEGA0):
    """Gamma_1x / (exp(hbar omega0 / kB T) - 1); zero at T = 0."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise ConfigError("temperature must be non-negative")
    zero = T == 0
    if np.any(zero):
        warnings.warn("Orbach rate evaluated at T = 0", ZeroTemperatureWarning, stacklevel=2)
    safe = np.where(zero, 1.0, T)
    with np.errstate(over="ignore"):
        rate = gamma_1x / np.expm1(cnst.hbar * omega0 / (cnst.k * safe))
    rate = np.where(zero, 0.0, rate)
    return float(rate) if rate.ndim == 0 else rate


def _orbach_curve(T, gamma_1x, omega0):
    return gamma_1x / np.expm1(cnst.hbar * omega0 / (cnst.k * T))


def fit_orbach(T, tau, omega0: float = OMEGA0, gamma1: float | None = None, omega_i: float | None = None) -> dict:
    """Fit 1/tau = Gamma_1x / (e^{hbar w0/kT} - 1) with relative weights."""
    T = np.asarray(T, dtype=float)
    rates = 1.0 / np.asarray(tau, dtype=float)
    if np.any(T <= 0) or np.any(~np.isfinite(rates)) or np.any(rates <= 0):
        raise ConfigError("Orbach fit needs positive temperatures and lifetimes")
    model = Model(_orbach_curve)
    guess = float(np.median(rates * np.expm1(cnst.hbar * omega0 / (cnst.k * T))))
    params = model.make_params(gamma_1x=guess, omega0=omega0)
    params["omega0"].set(vary=False)
    params["gamma_1x"].set(min=0.0)
    result = model.fit(rates, params, T=T, weights=1.0 / rates, fit_kws={"xtol": FIT_TOL, "ftol": FIT_TOL})
    if not result.success:
        raise FitError(f"Orbach fit did not converge: {result.message}")

    gamma_1x = result.params["gamma_1x"].value
    out = {"gamma_1x": gamma_1x, "gamma_1x_stderr": result.params["gamma_1x"].stderr, "redchi": result.redchi}
    if gamma1 is not None and omega_i is not None:
        # Gamma_1x = Gamma_1 B^2 / (4 omega_I^2)
        out["b_implied_Hz"] = 2.0 * omega_i * np.sqrt(gamma_1x / gamma1) / TWO_PI
    return out


def raman_check(T, rates) -> dict:
    """Power-law exponent of rate(T) from a log-log linear fit."""
    T = np.asarray(T, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if np.any(T <= 0) or np.any(rates <= 0):
        raise ConfigError("Raman check needs positive temperatures and rates")
    (exponent, intercept), residuals, *_ = np.polyfit(np.log(T), np.log(rates), 1, full=True)
    return {
        "exponent": float(exponent),
        "log_prefactor": float(intercept),
        "residual": float(residuals[0]) if residuals.size else 0.0,
    }


# ── Grating spectra ───────────────────────────────────────────────────────────

def _uniform_step(freq) -> float:
    freq = np.asarray(freq, dtype=float)
    steps = np.diff(freq)
    if freq.size < 2 or not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
        raise ConfigError("grating analysis needs a uniform frequency grid")
    return float(steps[0])


def grating_fourier_component(freq, density, period: float) -> dict:
    """Amplitude and phase of the density modulation at ``period`` (rad/s).

    ``shift`` is the frequency displacement of the grating implied by the phase.
    """
    _uniform_step(freq)
    freq = np.asarray(freq, dtype=float)
    density = np.asarray(density, dtype=float)
    c = 2.0 * np.mean((density - density.mean()) * np.exp(-1j * TWO_PI * freq / period))
    phase = float(np.angle(c))
    return {"amplitude": float(np.abs(c)), "phase": phase, "shift": -phase * period / TWO_PI}


def dominant_period(freq, density) -> float:
    """Period (rad/s) of the strongest non-DC Fourier component."""
    step = _uniform_step(freq)
    density = np.asarray(density, dtype=float)
    spectrum = np.abs(np.fft.rfft(density - density.mean()))
    if spectrum.size < 2 or np.all(spectrum[1:] == 0):
        raise DegenerateInputError("density has no modulation")
    k = int(np.argmax(spectrum[1:])) + 1
    return density.size * step / k


# ── CSV ingestion ─────────────────────────────────────────────────────────────

LINE_SCAN_COLUMNS = ("B0_T", "kappa_i")
DECAY_COLUMNS = ("t_s", "amplitude", "n_pulses")
TEMPERATURE_COLUMNS = ("T_K", "tau_s")


def _read_columns(path: Path, columns: tuple[str, ...]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"data file not found: {path}")
    df = pd.read_csv(path)
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ConfigError(f"{path.name} is missing columns {missing}")
    return df


def load_line_scan(path: Path) -> LineScan:
    df = _read_columns(path, LINE_SCAN_COLUMNS).sort_values("B0_T")
    return LineScan(df["B0_T"].to_numpy(float), df["kappa_i"].to_numpy(float))


def load_decay_series(path: Path) -> pd.DataFrame:
    return _read_columns(path, DECAY_COLUMNS).sort_values("t_s").reset_index(drop=True)


def load_temperature_series(path: Path) -> pd.DataFrame:
    return _read_columns(path, TEMPERATURE_COLUMNS).sort_values("T_K").reset_index(drop=True)


S11_COLUMNS = ("detuning_Hz", "s11_sq")


def load_s11_scan(path: Path) -> pd.DataFrame:
    """|S11|^2 scan; an optional ``s11_sq_reference`` column holds the unburned trace."""
    return _read_columns(path, S11_COLUMNS).sort_values("detuning_Hz").reset_index(drop=True)
