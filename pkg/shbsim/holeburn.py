"""Continuous-wave hole burning through classical rate equations.

Populations live in a 2^(Ns+1) vector ordered (excited block, ground block),
each block indexed by the nuclear bit-string. Pumping and relaxation build a
rate matrix M whose columns sum to zero; populations evolve as e^{Mt}.

Spectra average over an electron detuning distribution. The unperturbed
density uses stratified samples with the probe Lorentzian integrated exactly
over each stratum. The pump-induced change is integrated on resonance-refined
nodes around every driven transition, since hole features are only a
power-broadened Gamma_2 wide.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.signal import find_peaks
from scipy.sparse.linalg import expm_multiply
from scipy.stats import norm

from shbsim.config import (
    ACTIVE_TRANSITION_THRESHOLD,
    CLAMP_FLOOR,
    DETUNING_DISTRIBUTION,
    DETUNING_WINDOW_FACTOR,
    EXPM_DENSE_MAX_DIM,
    GAMMA1,
    GAMMA2,
    GAUSSIAN_WINDOW_SIGMAS,
    ISOTOPIC_ABUNDANCE,
    MAX_NS,
    N_DETUNINGS,
    N_RESONANCE_NODES,
    PROBE_HWHM,
    RESONANCE_MERGE_TOL,
    SEED,
    TWO_PI,
)
from shbsim.ensemble import derive_seeds, pairwise_sum, parallel_map
from shbsim.errors import ConfigError, DimensionError, NonFiniteError, ShbError, with_context
from shbsim.lattice import BathConfiguration, HyperfineOverride, LatticeParams, sample_bath
from shbsim.spin_model import (
    ConditionalEigenSystem,
    SpinParams,
    TransitionTable,
    build_eigensystem,
    transition_elements,
)

logger = logging.getLogger(__name__)

ZERO_FLIP_NORM = 0.25     # |<e|Jx|g>|^2 of a bare allowed transition
NODE_CHUNK = 256


# ── Types ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PumpSpec:
    omega_d: float          # drive detuning from omega0
    omega_p: float          # pump amplitude
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError(f"pump duration must be positive, got {self.duration}")
        if self.omega_p < 0:
            raise ConfigError(f"pump amplitude must be non-negative, got {self.omega_p}")


@dataclass(frozen=True, eq=False)
class RateMatrix:
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class PopulationVector:
    """Level occupations, excited block first, little-endian nuclear index."""

    probs: np.ndarray

    @property
    def n_states(self) -> int:
        return self.probs.shape[-1] // 2

    @property
    def excited(self) -> np.ndarray:
        return self.probs[..., : self.n_states]

    @property
    def ground(self) -> np.ndarray:
        return self.probs[..., self.n_states:]

    @property
    def total(self) -> float:
        return float(self.probs.sum())


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    freq_grid: np.ndarray           # rad/s, detuning from omega0
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    rho1: np.ndarray | None = None
    rho0: np.ndarray | None = None

    def __post_init__(self):
        if self.freq_grid.shape != self.values.shape:
            raise ConfigError("frequency grid and values differ in shape")
        if self.freq_grid.size > 1 and np.any(np.diff(self.freq_grid) <= 0):
            raise ConfigError("frequency grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("spectral density contains non-finite values")


def thermal_state(ns: int) -> PopulationVector:
    n = 1 << ns
    probs = np.zeros(2 * n)
    probs[n:] = 1.0 / n
    return PopulationVector(probs)


# ── Rates ─────────────────────────────────────────────────────────────────────

def pump_rate(element, delta_ij, omega_p: float, gamma2: float):
    """Omega_ij = 2 omega_p^2 |m|^2 Gamma_2 / (Delta^2 + Gamma_2^2)."""
    if gamma2 <= 0:
        raise ConfigError(f"gamma2 must be positive, got {gamma2}")
    m2 = np.abs(element) ** 2
    return 2.0 * omega_p**2 * m2 * gamma2 / (np.asarray(delta_ij) ** 2 + gamma2**2)


def swept_pump_rate(element, delta_ij, omega_p: float, gamma2: float, width: float):
    """pump_rate averaged over a drive swept uniformly across ``width`` centred on ``delta_ij``."""
    if width <= 0:
        return pump_rate(element, delta_ij, omega_p, gamma2)
    if gamma2 <= 0:
        raise ConfigError(f"gamma2 must be positive, got {gamma2}")
    m2 = np.abs(element) ** 2
    d = np.asarray(delta_ij, dtype=float)
    swept = np.arctan((d + 0.5 * width) / gamma2) - np.arctan((d - 0.5 * width) / gamma2)
    return 2.0 * omega_p**2 * m2 * swept / width


def relaxation_rate(element, gamma1: float):
    """Gamma_ij = Gamma_1 |m|^2 / (1/2)^2, so a bare ion decays at Gamma_1."""
    return gamma1 * np.abs(element) ** 2 / ZERO_FLIP_NORM


def _rate_matrices(
    table: TransitionTable,
    omega_d: float,
    omega_p: float,
    deltas: np.ndarray,
    gamma1: float,
    gamma2: float,
    sweep_width: float = 0.0,
) -> np.ndarray:
    """Stack of rate matrices, one per electron detuning in ``deltas``.

    A positive ``sweep_width`` averages the pump over a chirp of that width.
    """
    n = table.n_states
    if table.ns > MAX_NS:
        raise DimensionError(f"rate matrix of dimension {2 * n} exceeds the guard")
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    detune = table.delta_energies[None, :] + deltas[:, None] - omega_d
    omega = swept_pump_rate(table.elements[None, :], detune, omega_p, gamma2, sweep_width)
    lam = omega + relaxation_rate(table.elements, gamma1)[None, :]

    m = np.zeros((deltas.size, 2 * n, 2 * n))
    m[:, table.e_index, n + table.g_index] = omega
    m[:, n + table.g_index, table.e_index] = lam
    diag = np.arange(2 * n)
    m[:, diag, diag] = -m.sum(axis=1)
    return m


def build_rate_matrix(
    table: TransitionTable,
    pump: PumpSpec,
    delta: float,
    gamma1: float = GAMMA1,
    gamma2: float = GAMMA2,
) -> RateMatrix:
    """Pump and relaxation rates for an ion at electron detuning ``delta``."""
    return RateMatrix(_rate_matrices(table, pump.omega_d, pump.omega_p, np.array([delta]), gamma1, gamma2)[0])


def _propagate(matrices: np.ndarray, probs: np.ndarray, t: float) -> np.ndarray:
    """Apply e^{M t} to each row of ``probs`` with its own matrix."""
    if not np.all(np.isfinite(matrices)):
        raise NonFiniteError("rate matrix contains non-finite entries")
    if t == 0:
        return probs.copy()
    dim = matrices.shape[-1]
    if dim <= EXPM_DENSE_MAX_DIM:
        props = linalg.expm(matrices * t)
        out = np.einsum("kab,kb->ka", props, probs)
    else:
        out = np.stack([
            expm_multiply(sparse.csr_array(mat) * t, vec) for mat, vec in zip(matrices, probs)
        ])
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("population evolution produced non-finite values")
    return np.maximum(out, CLAMP_FLOOR)


def evolve_populations(rho0: PopulationVector, M: RateMatrix, t: float) -> PopulationVector:
    if t < 0:
        raise ConfigError(f"evolution time must be non-negative, got {t}")
    out = _propagate(M.matrix[None], rho0.probs[None], t)[0]
    return PopulationVector(out)


def branching_matrix(table: TransitionTable) -> sparse.csr_array:
    """B[i, j] = Gamma_ij / sum_j Gamma_ij for excited i decaying to ground j."""
    weights = np.abs(table.elements) ** 2
    totals = np.bincount(table.e_index, weights=weights, minlength=table.n_states)
    n = table.n_states
    return sparse.csr_array((weights / totals[table.e_index], (table.e_index, table.g_index)), shape=(n, n))


def _collapse(probs: np.ndarray, branching: sparse.csr_array) -> np.ndarray:
    n = branching.shape[0]
    excited, ground = probs[..., :n], probs[..., n:]
    moved = (branching.T @ np.atleast_2d(excited).T).T.reshape(ground.shape)
    out = np.zeros_like(probs)
    out[..., n:] = ground + moved
    return out


def collapse_excited(rho: PopulationVector, table: TransitionTable) -> PopulationVector:
    """Empty the excited block through the relaxation branching ratios."""
    return PopulationVector(_collapse(rho.probs, branching_matrix(table)))


# ── Probing ───────────────────────────────────────────────────────────────────

def zero_flip_weights(table: TransitionTable) -> tuple[np.ndarray, np.ndarray]:
    """(|<e_j|Jx|g_j>|^2, eps_e_j - eps_g_j) ordered by j."""
    mask = table.zero_flip
    order = np.argsort(table.g_index[mask])
    return np.abs(table.elements[mask][order]) ** 2, table.delta_energies[mask][order]


def _lorentzian(x: np.ndarray, gamma: float) -> np.ndarray:
    return gamma / (np.pi * (x**2 + gamma**2))


def probe_density(
    rho_prime,
    eigensystem: ConditionalEigenSystem,
    freq_grid: np.ndarray,
    gamma_probe: float = PROBE_HWHM,
    *,
    detunings=None,
    weights=None,
    table: TransitionTable | None = None,
) -> SpectralDensity:
    """Zero-flip probe density summed over detuning samples.

    ``rho_prime`` is one population vector shared by every sample, or an array
    with one row per entry of ``detunings``.
    """
    if gamma_probe <= 0:
        raise ConfigError(f"probe HWHM must be positive, got {gamma_probe}")
    table = table or transition_elements(eigensystem)
    m2, offsets = zero_flip_weights(table)
    freq_grid = np.asarray(freq_grid, dtype=float)
    detunings = np.atleast_1d(0.0 if detunings is None else np.asarray(detunings, dtype=float))
    weights = np.ones(detunings.size) if weights is None else np.asarray(weights, dtype=float)

    probs = rho_prime.probs if isinstance(rho_prime, PopulationVector) else np.asarray(rho_prime)
    n = table.n_states
    ground = np.broadcast_to(np.atleast_2d(probs)[:, n:], (detunings.size, n))

    values = np.zeros_like(freq_grid)
    for delta, w, pops in zip(detunings, weights, ground):
        x = offsets[:, None] + delta - freq_grid[None, :]
        values += w * ((m2 * pops) @ _lorentzian(x, gamma_probe))
    return SpectralDensity(freq_grid, values, {"gamma_probe": gamma_probe, "n_detunings": int(detunings.size)})


# ── Detuning quadrature ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class DetuningWindow:
    distribution: str
    lo: float
    hi: float
    n_strata: int
    sigma: float

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_strata + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    def density(self, delta) -> np.ndarray:
        delta = np.asarray(delta, dtype=float)
        if self.distribution == "gaussian":
            return norm.pdf(delta, scale=self.sigma)
        inside = (delta >= self.lo) & (delta <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def masses(self) -> np.ndarray:
        e = self.edges
        if self.distribution == "gaussian":
            return np.diff(norm.cdf(e, scale=self.sigma))
        return np.diff(e) / (self.hi - self.lo)


def detuning_window(
    freq_grid: np.ndarray,
    n_detunings: int = N_DETUNINGS,
    distribution: str = DETUNING_DISTRIBUTION,
    sigma: float | None = None,
) -> DetuningWindow:
    if n_detunings < 1:
        raise ConfigError("need at least one detuning sample")
    if distribution == "gaussian":
        sigma = sigma or SpinParams().sigma
        half = GAUSSIAN_WINDOW_SIGMAS * sigma
        return DetuningWindow("gaussian", -half, half, n_detunings, sigma)
    if distribution != "uniform":
        raise ConfigError(f"unknown detuning distribution {distribution!r}")
    span = float(freq_grid[-1] - freq_grid[0])
    center = 0.5 * float(freq_grid[-1] + freq_grid[0])
    half = 0.5 * span * (1.0 + DETUNING_WINDOW_FACTOR)
    return DetuningWindow("uniform", center - half, center + half, n_detunings, sigma or SpinParams().sigma)


def _stratified_reference(
    m2: np.ndarray,
    offsets: np.ndarray,
    ground: np.ndarray,
    window: DetuningWindow,
    freq_grid: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """sum_k P_k <L>_k for a detuning-independent ground population."""
    edges = window.edges
    scale = window.masses() / np.diff(edges)
    x = freq_grid[None, :] - offsets[:, None]
    kernel = np.zeros_like(x)
    for lo, hi, s in zip(edges[:-1], edges[1:], scale):
        kernel += s * (np.arctan((x - lo) / gamma) - np.arctan((x - hi) / gamma))
    return (m2 * ground) @ kernel / np.pi


def _resonances(
    table: TransitionTable,
    pump: PumpSpec,
    gamma2: float,
    window: DetuningWindow,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centers, widths and saturation of driven transitions inside the window."""
    saturation = pump_rate(table.elements, 0.0, pump.omega_p, gamma2) * pump.duration
    centers = pump.omega_d - table.delta_energies
    widths = gamma2 * np.sqrt(1.0 + saturation)
    keep = (
        (saturation > ACTIVE_TRANSITION_THRESHOLD)
        & (centers >= window.lo - 10 * widths)
        & (centers <= window.hi + 10 * widths)
    )
    if not np.any(keep):
        return np.empty(0), np.empty(0), np.empty(0)

    keys = np.round(centers[keep] / RESONANCE_MERGE_TOL).astype(np.int64)
    unique, inverse = np.unique(keys, return_inverse=True)
    merged_sat = np.zeros(unique.size)
    np.maximum.at(merged_sat, inverse, saturation[keep])
    summed_sat = np.bincount(inverse, weights=saturation[keep], minlength=unique.size)
    return unique * RESONANCE_MERGE_TOL, gamma2 * np.sqrt(1.0 + merged_sat), summed_sat


def _resonance_nodes(
    centers: np.ndarray,
    widths: np.ndarray,
    strengths: np.ndarray,
    gamma2: float,
    n_nodes: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Tan-mapped Gauss-Legendre nodes per resonance with partition-of-unity weights."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    u = 0.5 * np.pi * x
    du = 0.5 * np.pi * w
    nodes = centers[:, None] + widths[:, None] * np.tan(u)[None, :]
    jac = widths[:, None] * du[None, :] / np.cos(u)[None, :] ** 2

    flat = nodes.ravel()
    share = np.empty_like(flat)
    for start in range(0, flat.size, NODE_CHUNK):
        chunk = flat[start:start + NODE_CHUNK]
        g = strengths[None, :] / (1.0 + ((chunk[:, None] - centers[None, :]) / gamma2) ** 2)
        own = np.repeat(np.arange(centers.size), n_nodes)[start:start + NODE_CHUNK]
        share[start:start + NODE_CHUNK] = g[np.arange(chunk.size), own] / g.sum(axis=1)
    return flat, jac.ravel() * share


# ── Ensemble spectrum ─────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ShbScenario:
    pump: PumpSpec
    freq_grid: np.ndarray
    n_configs: int = 64
    ns: int = 6
    seed: int = SEED
    gamma_probe: float = PROBE_HWHM
    n_detunings: int = N_DETUNINGS
    distribution: str = DETUNING_DISTRIBUTION
    spin: SpinParams = field(default_factory=SpinParams)
    lattice: LatticeParams = field(default_factory=LatticeParams)
    overrides: dict[str, HyperfineOverride] | None = None
    abundance: float = ISOTOPIC_ABUNDANCE
    n_nodes: int = N_RESONANCE_NODES
    baths: tuple[BathConfiguration, ...] | None = None

    def bath_list(self) -> list[BathConfiguration]:
        if self.baths is not None:
            return list(self.baths)
        return [
            sample_bath(
                self.lattice, s, self.ns,
                abundance=self.abundance,
                direction=self.spin.field_direction,
                overrides=self.overrides,
            )
            for s in derive_seeds(self.seed, self.n_configs)
        ]


def burned_populations(
    table: TransitionTable,
    pump: PumpSpec,
    deltas: np.ndarray,
    gamma1: float = GAMMA1,
    gamma2: float = GAMMA2,
) -> np.ndarray:
    """Collapsed populations after pumping from thermal, one row per detuning."""
    start = np.broadcast_to(thermal_state(table.ns).probs, (deltas.size, 2 * table.n_states))
    rows = []
    branching = branching_matrix(table)
    for s in range(0, deltas.size, NODE_CHUNK):
        part = deltas[s:s + NODE_CHUNK]
        mats = _rate_matrices(table, pump.omega_d, pump.omega_p, part, gamma1, gamma2)
        rows.append(_collapse(_propagate(mats, start[: part.size], pump.duration), branching))
    return np.concatenate(rows) if rows else np.empty((0, 2 * table.n_states))


def _burn_configuration(task) -> tuple[np.ndarray, np.ndarray]:
    scenario, index, bath = task
    try:
        spin = scenario.spin
        eig = build_eigensystem(bath, spin)
        table = transition_elements(eig)
        m2, offsets = zero_flip_weights(table)
        n = table.n_states
        grid = np.asarray(scenario.freq_grid, dtype=float)
        window = detuning_window(grid, scenario.n_detunings, scenario.distribution, spin.sigma)

        reference = _stratified_reference(m2, offsets, np.full(n, 1.0 / n), window, grid, scenario.gamma_probe)

        correction = np.zeros_like(grid)
        centers, widths, strengths = _resonances(table, scenario.pump, spin.gamma2, window)
        if centers.size:
            nodes, node_w = _resonance_nodes(centers, widths, strengths, spin.gamma2, scenario.n_nodes)
            node_w = node_w * window.density(nodes)
            live = node_w != 0
            nodes, node_w = nodes[live], node_w[live]
            for s in range(0, nodes.size, NODE_CHUNK):
                part = nodes[s:s + NODE_CHUNK]
                pops = burned_populations(table, scenario.pump, part, spin.gamma1, spin.gamma2)
                change = pops[:, n:] - 1.0 / n
                x = offsets[None, :, None] + part[:, None, None] - grid[None, None, :]
                correction += np.einsum(
                    "k,kj,kjf->f", node_w[s:s + NODE_CHUNK], change * m2, _lorentzian(x, scenario.gamma_probe)
                )
        logger.debug("configuration %d: %d driven resonances", index, centers.size)
        return reference + correction, reference
    except ShbError as exc:
        raise with_context(exc, config=index) from exc


def shb_spectrum(scenario: ShbScenario, workers: int | None = None) -> SpectralDensity:
    """Ensemble-averaged rho1/rho0 after a single-frequency pump.

    Numerator and denominator are averaged over configurations separately.
    """
    baths = scenario.bath_list()
    tasks = [(scenario, k, bath) for k, bath in enumerate(baths)]
    results = parallel_map(_burn_configuration, tasks, workers)
    rho1 = pairwise_sum([r[0] for r in results]) / len(results)
    rho0 = pairwise_sum([r[1] for r in results]) / len(results)
    grid = np.asarray(scenario.freq_grid, dtype=float)
    meta = {
        "n_configs": len(baths),
        "n_detunings": scenario.n_detunings,
        "seed": scenario.seed,
        "gamma_probe": scenario.gamma_probe,
        "omega_d": scenario.pump.omega_d,
        "omega_p": scenario.pump.omega_p,
        "duration": scenario.pump.duration,
    }
    return SpectralDensity(grid, rho1 / rho0, meta, rho1=rho1, rho0=rho0)


def hole_features(spectrum: SpectralDensity, n: int = 3) -> dict[str, list[dict]]:
    """Deepest holes and tallest anti-holes of a ratio spectrum (Hz, depth)."""
    deviation = spectrum.values - 1.0
    out = {}
    for label, signal in (("holes", -deviation), ("anti_holes", deviation)):
        idx, props = find_peaks(signal, height=0.0)
        order = np.argsort(-props["peak_heights"], kind="stable")[:n]
        out[label] = [
            {"detuning_Hz": float(spectrum.freq_grid[idx[k]] / TWO_PI), "depth": float(props["peak_heights"][k])}
            for k in order
        ]
    return out


# ── Reset ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ResetSweep:
    span: float
    step: float
    omega_p: float
    dwell: float
    n_scans: int = 1
    center: float = 0.0

    def __post_init__(self):
        if self.span < 0 or self.step <= 0 or self.dwell <= 0 or self.n_scans < 1:
            raise ConfigError("reset sweep needs span >= 0, step > 0, dwell > 0, n_scans >= 1")
        if self.omega_p < 0:
            raise ConfigError("reset amplitude must be non-negative")

    @property
    def frequencies(self) -> np.ndarray:
        half = 0.5 * self.span
        return self.center + np.arange(-half, half + 0.5 * self.step, self.step)


@dataclass(frozen=True, eq=False)
class ResetResult:
    populations: np.ndarray
    residual: float


def reset_sweep(
    state,
    sweep: ResetSweep | None = None,
    *,
    table: TransitionTable | None = None,
    detunings=None,
    weights=None,
    freq_grid=None,
    gamma_probe: float = PROBE_HWHM,
    gamma1: float = GAMMA1,
    gamma2: float = GAMMA2,
) -> ResetResult:
    """Erase a burned pattern.

    Without ``sweep`` the ideal reset returns the thermal vector. With a sweep,
    the drive chirps across one ``step`` per ``dwell`` for every detuning row
    of ``state`` and the residual is max |rho/rho_thermal - 1| on ``freq_grid``.
    """
    probs = state.probs if isinstance(state, PopulationVector) else np.asarray(state, dtype=float)
    ns = int(np.log2(probs.shape[-1] // 2))
    thermal = thermal_state(ns).probs

    if sweep is None:
        return ResetResult(np.broadcast_to(thermal, probs.shape).copy(), 0.0)

    if table is None:
        raise ConfigError("a simulated sweep needs the transition table")
    rows = np.atleast_2d(probs).copy()
    deltas = np.zeros(rows.shape[0]) if detunings is None else np.asarray(detunings, dtype=float)

    if sweep.omega_p > 0:
        for scan in range(sweep.n_scans):
            for f in sweep.frequencies:
                mats = _rate_matrices(table, f, sweep.omega_p, deltas, gamma1, gamma2, sweep.step)
                rows = _propagate(mats, rows, sweep.dwell)
            logger.debug("reset scan %d/%d done", scan + 1, sweep.n_scans)
        rows = _collapse(rows, branching_matrix(table))

    residual = float("nan")
    if freq_grid is not None:
        eig_free = _TableProbe(table)
        after = eig_free.density(rows, deltas, weights, freq_grid, gamma_probe)
        before = eig_free.density(
            np.broadcast_to(thermal, rows.shape), deltas, weights, freq_grid, gamma_probe
        )
        residual = float(np.max(np.abs(after / before - 1.0)))
    out = rows.reshape(probs.shape)
    return ResetResult(out, residual)


class _TableProbe:
    """Zero-flip probe driven directly by a transition table."""

    def __init__(self, table: TransitionTable):
        self.table = table
        self.m2, self.offsets = zero_flip_weights(table)

    def density(self, rows, deltas, weights, freq_grid, gamma) -> np.ndarray:
        n = self.table.n_states
        weights = np.ones(len(deltas)) if weights is None else np.asarray(weights)
        freq_grid = np.asarray(freq_grid, dtype=float)
        values = np.zeros_like(freq_grid)
        for delta, w, row in zip(deltas, weights, np.atleast_2d(rows)):
            x = self.offsets[:, None] + delta - freq_grid[None, :]
            values += w * ((self.m2 * row[n:]) @ _lorentzian(x, gamma))
        return values
