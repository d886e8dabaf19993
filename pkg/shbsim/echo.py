"""Pulse-pair grating accumulation and accumulated-echo probing.

Each pi/2 - tau - pi/2 pair acts coherently on the zero-flip two-level block
(e_j, g_j) of every detuning sample, then the excited population collapses
through the relaxation branching ratios, one-flip channels included. Repeating
the pair writes a spectral grating of period 2 pi / tau into the nuclear
populations; probing it gives echoes at multiples of tau. The gap between the
pulses is shortened by the pulses' phase lag so the grating period, and with
it the echo time, is exactly tau.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from shbsim.config import (
    CHECKPOINTS,
    ECHO_DETUNING_SPAN,
    ECHO_DETUNING_STEP,
    ISOTOPIC_ABUNDANCE,
    PAIR_DELAY,
    PAIR_WAIT,
    PROBE_HWHM,
    PULSE_DURATION,
    RABI_AMPLITUDE,
    SEED,
)
from shbsim.ensemble import derive_seeds, pairwise_sum, parallel_map
from shbsim.errors import ConfigError, NonFiniteError, ShbError, with_context
from shbsim.holeburn import SpectralDensity, branching_matrix, zero_flip_weights
from shbsim.lattice import BathConfiguration, HyperfineOverride, LatticeParams, sample_bath
from shbsim.spin_model import ConditionalEigenSystem, SpinParams, build_eigensystem, transition_elements

logger = logging.getLogger(__name__)

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PI_HALF_TOL = 1e-9
UNIFORM_RTOL = 1e-6


# ── Types ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PulseSpec:
    omega1: float = RABI_AMPLITUDE
    tp: float = PULSE_DURATION
    tau: float = PAIR_DELAY
    n_pairs: int = 0
    wait: float = PAIR_WAIT
    pi_half: bool = False

    def __post_init__(self):
        if self.tp <= 0 or self.omega1 < 0:
            raise ConfigError("pulse needs tp > 0 and omega1 >= 0")
        if self.tau <= self.tp:
            raise ConfigError(f"pair delay tau={self.tau} must exceed pulse duration tp={self.tp}")
        if self.n_pairs < 0:
            raise ConfigError("n_pairs must be non-negative")
        if self.pi_half and abs(self.omega1 * self.tp - np.pi / 2) > PI_HALF_TOL:
            raise ConfigError(f"omega1*tp = {self.omega1 * self.tp} is not pi/2")
        if self.omega1 * self.tp >= np.pi:
            raise ConfigError(f"pulse area omega1*tp = {self.omega1 * self.tp} must stay below pi")
        if self.free_time <= 0:
            raise ConfigError(f"tau={self.tau} leaves no free precession after the pulse lag {self.pulse_lag}")

    @property
    def pulse_lag(self) -> float:
        """Delay a slightly detuned spin accumulates inside the two pulses.

        A pair of area-alpha pulses refocuses as if the free precession were
        longer by 2 tp tan(alpha/2) / alpha (tp when alpha -> 0, 4 tp / pi
        for pi/2 pulses).
        """
        area = self.omega1 * self.tp
        if area == 0:
            return self.tp
        return 2.0 * self.tp * float(np.tan(area / 2)) / area

    @property
    def free_time(self) -> float:
        """Free precession between the pulses; the grating period is then 2 pi / tau."""
        return self.tau - self.pulse_lag


@dataclass(frozen=True, eq=False)
class GratingState:
    """Ground populations per (configuration, detuning, nuclear state)."""

    populations: np.ndarray     # (n_configs, n_detunings, 2**Ns)
    detunings: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray         # (n_configs, 2**Ns) zero-flip eps_e - eps_g
    strengths: np.ndarray       # (n_configs, 2**Ns) |<e_j|Jx|g_j>|^2
    n_applied: int = 0

    def __post_init__(self):
        sums = self.populations.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-9, rtol=0):
            raise ConfigError("grating populations must sum to 1 per sample")


@dataclass(frozen=True, eq=False)
class EchoTrace:
    time_grid: np.ndarray
    amplitude: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.time_grid.size > 1 and np.any(np.diff(self.time_grid) <= 0):
            raise ConfigError("time grid must be strictly increasing")
        if not np.all(np.isfinite(self.amplitude)):
            raise NonFiniteError("echo amplitude contains non-finite values")


# ── Pair generator ────────────────────────────────────────────────────────────

def pulse_rotation(delta_total, pulse: PulseSpec) -> np.ndarray:
    """R = cos(theta) I - i sin(theta)(sigma_z sin(phi) + sigma_x cos(phi)) in the (e, g) basis.

    Vectorized over ``delta_total``; the trailing two axes are the matrix.
    """
    delta = np.asarray(delta_total, dtype=float)
    omega_eff = np.hypot(delta, pulse.omega1)
    theta = 0.5 * omega_eff * pulse.tp
    safe = np.where(omega_eff > 0, omega_eff, 1.0)
    sin_phi = np.where(omega_eff > 0, delta / safe, 0.0)
    cos_phi = np.where(omega_eff > 0, pulse.omega1 / safe, 0.0)
    axis = sin_phi[..., None, None] * SIGMA_Z + cos_phi[..., None, None] * SIGMA_X
    return np.cos(theta)[..., None, None] * np.eye(2) - 1j * np.sin(theta)[..., None, None] * axis


def pair_excitation(delta_total, pulse: PulseSpec) -> np.ndarray:
    """Excited-state probability after R U_tau R acting on |g>."""
    delta = np.asarray(delta_total, dtype=float)
    rot = pulse_rotation(delta, pulse)
    # free precession in the frame of the pulse carrier; tau is pulse start to
    # echo spacing, so the pulses' own phase lag comes off the gap
    free = np.zeros(delta.shape + (2, 2), dtype=complex)
    free[..., 0, 0] = np.exp(-0.5j * delta * pulse.free_time)
    free[..., 1, 1] = np.exp(0.5j * delta * pulse.free_time)
    pair = rot @ free @ rot
    return np.abs(pair[..., 0, 1]) ** 2


def _pair_step(ground: np.ndarray, excitation: np.ndarray, branching_t) -> np.ndarray:
    lifted = ground * excitation
    return ground - lifted + (branching_t @ lifted.T).T


def apply_pair_generator(
    state: np.ndarray,
    eigensystem: ConditionalEigenSystem,
    pulse: PulseSpec,
    detunings=0.0,
) -> np.ndarray:
    """One pair on ground populations shaped (..., 2**Ns), one row per detuning."""
    table = transition_elements(eigensystem)
    _, offsets = zero_flip_weights(table)
    ground = np.atleast_2d(np.asarray(state, dtype=float))
    deltas = np.broadcast_to(np.atleast_1d(np.asarray(detunings, dtype=float)), (ground.shape[0],))
    excitation = pair_excitation(deltas[:, None] + offsets[None, :], pulse)
    out = _pair_step(ground, excitation, branching_matrix(table).T)
    return out.reshape(np.shape(state))


# ── Ensemble accumulation ─────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class EchoScenario:
    pulse: PulseSpec
    n_configs: int = 64
    ns: int = 6
    seed: int = SEED
    detuning_span: float = ECHO_DETUNING_SPAN
    detuning_step: float = ECHO_DETUNING_STEP
    spin: SpinParams = field(default_factory=SpinParams)
    lattice: LatticeParams = field(default_factory=LatticeParams)
    overrides: dict[str, HyperfineOverride] | None = None
    abundance: float = ISOTOPIC_ABUNDANCE
    checkpoints: tuple[int, ...] = CHECKPOINTS
    baths: tuple[BathConfiguration, ...] | None = None

    @property
    def detunings(self) -> np.ndarray:
        """Uniform samples over the span, right endpoint excluded."""
        half = 0.5 * self.detuning_span
        return np.arange(-half, half - 0.5 * self.detuning_step, self.detuning_step)

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


def _prepare(scenario: EchoScenario, bath: BathConfiguration):
    eig = build_eigensystem(bath, scenario.spin)
    table = transition_elements(eig)
    m2, offsets = zero_flip_weights(table)
    deltas = scenario.detunings
    excitation = pair_excitation(deltas[:, None] + offsets[None, :], scenario.pulse)
    ground = np.full((deltas.size, table.n_states), 1.0 / table.n_states)
    return ground, excitation, branching_matrix(table).T.tocsr(), m2, offsets


def _accumulate(ground, excitation, branching_t, n_pairs, index, on_checkpoint=None, checkpoints=()):
    marks = set(checkpoints)
    if 0 in marks and on_checkpoint is not None:
        on_checkpoint(0, ground)
    for step in range(1, n_pairs + 1):
        ground = _pair_step(ground, excitation, branching_t)
        if step in marks or step == n_pairs:
            if not np.all(np.isfinite(ground)):
                raise with_context(NonFiniteError("grating populations became non-finite"), config=index, step=step)
            if step in marks and on_checkpoint is not None:
                on_checkpoint(step, ground)
    return ground


def _grating_configuration(task):
    scenario, index, bath = task
    try:
        ground, excitation, branching_t, m2, offsets = _prepare(scenario, bath)
        ground = _accumulate(ground, excitation, branching_t, scenario.pulse.n_pairs, index)
        logger.debug("configuration %d: %d pairs applied", index, scenario.pulse.n_pairs)
        return ground, m2, offsets
    except ShbError as exc:
        if getattr(exc, "context", None):
            raise
        raise with_context(exc, config=index) from exc


def accumulate_grating(scenario: EchoScenario, workers: int | None = None) -> GratingState:
    baths = scenario.bath_list()
    results = parallel_map(_grating_configuration, [(scenario, k, b) for k, b in enumerate(baths)], workers)
    deltas = scenario.detunings
    return GratingState(
        populations=np.stack([r[0] for r in results]),
        detunings=deltas,
        weights=np.ones(deltas.size),
        offsets=np.stack([r[2] for r in results]),
        strengths=np.stack([r[1] for r in results]),
        n_applied=scenario.pulse.n_pairs,
    )


# ── Probing ───────────────────────────────────────────────────────────────────

def _phase_table(time_grid: np.ndarray, deltas: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.outer(time_grid, deltas)) * weights[None, :]


def _config_echo(ground, offsets, table: np.ndarray, time_grid) -> np.ndarray:
    per_line = table @ ground                                   # (T, 2**Ns)
    return np.sum(per_line * np.exp(1j * np.outer(time_grid, offsets)), axis=1)


def probe_echo(grating: GratingState, time_grid, pulse: PulseSpec | None = None) -> EchoTrace:
    """A_e(t) = sum_j p_j e^{i t (eps_e_j - eps_g_j + delta)}, averaged over samples.

    Normalized after averaging so a normalized population gives A_e(0) = 1.
    """
    time_grid = np.asarray(time_grid, dtype=float)
    table = _phase_table(time_grid, grating.detunings, grating.weights)
    parts = [
        _config_echo(pops, offsets, table, time_grid)
        for pops, offsets in zip(grating.populations, grating.offsets)
    ]
    norm = grating.weights.sum() * len(parts)
    meta = {"N": grating.n_applied, "n_configs": len(parts)}
    if pulse is not None:
        meta["tau"] = pulse.tau
    return EchoTrace(time_grid, pairwise_sum(parts) / norm, meta)


def echo_amplitudes(trace: EchoTrace, tau: float, n_echoes: int = 3) -> np.ndarray:
    """Complex trace value at t = j tau for j = 1..n_echoes."""
    times = tau * np.arange(1, n_echoes + 1)
    if times[-1] > trace.time_grid[-1] or times[0] < trace.time_grid[0]:
        raise ConfigError("echo times fall outside the trace")
    re = np.interp(times, trace.time_grid, trace.amplitude.real)
    im = np.interp(times, trace.time_grid, trace.amplitude.imag)
    return re + 1j * im


def _buildup_configuration(task):
    scenario, index, bath, n_echoes = task
    try:
        ground, excitation, branching_t, _, offsets = _prepare(scenario, bath)
        times = scenario.pulse.tau * np.arange(1, n_echoes + 1)
        table = _phase_table(times, scenario.detunings, np.ones(scenario.detunings.size))
        rows = {}

        def record(step, pops):
            rows[step] = _config_echo(pops, offsets, table, times)

        last = max(scenario.checkpoints, default=0)
        _accumulate(ground, excitation, branching_t, last, index, record, scenario.checkpoints)
        return np.array([rows[n] for n in scenario.checkpoints])
    except ShbError as exc:
        if getattr(exc, "context", None):
            raise
        raise with_context(exc, config=index) from exc


def echo_buildup(scenario: EchoScenario, n_echoes: int = 1, workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Echo amplitudes at every checkpoint: (pair counts, complex (n_checkpoints, n_echoes))."""
    if not scenario.checkpoints:
        raise ConfigError("echo buildup needs at least one checkpoint")
    if list(scenario.checkpoints) != sorted(set(scenario.checkpoints)):
        raise ConfigError("checkpoints must be strictly increasing")
    baths = scenario.bath_list()
    tasks = [(scenario, k, b, n_echoes) for k, b in enumerate(baths)]
    parts = parallel_map(_buildup_configuration, tasks, workers)
    norm = scenario.detunings.size * len(parts)
    return np.asarray(scenario.checkpoints), pairwise_sum(parts) / norm


def grating_density(
    grating: GratingState,
    freq_grid,
    gamma_probe: float = PROBE_HWHM,
) -> SpectralDensity:
    """Probed density of the grating relative to the thermal ensemble."""
    freq_grid = np.asarray(freq_grid, dtype=float)
    burned = np.zeros_like(freq_grid)
    thermal = np.zeros_like(freq_grid)
    for pops, offsets, m2 in zip(grating.populations, grating.offsets, grating.strengths):
        flat = 1.0 / offsets.size
        for j in range(offsets.size):
            x = grating.detunings[:, None] + offsets[j] - freq_grid[None, :]
            lor = gamma_probe / (np.pi * (x**2 + gamma_probe**2))
            w = grating.weights[:, None] * m2[j]
            burned += np.sum(w * pops[:, j, None] * lor, axis=0)
            thermal += np.sum(w * flat * lor, axis=0)
    meta = {"n_configs": int(grating.populations.shape[0]), "N": grating.n_applied, "gamma_probe": gamma_probe}
    return SpectralDensity(freq_grid, burned / thermal, meta, rho1=burned, rho0=thermal)


# ── Fourier bridge ────────────────────────────────────────────────────────────

def _check_uniform(grid: np.ndarray) -> float:
    if grid.size < 2:
        raise ConfigError("density grid needs at least two points")
    steps = np.diff(grid)
    if not np.allclose(steps, steps[0], rtol=UNIFORM_RTOL, atol=0):
        raise ConfigError("density must be sampled on a uniform grid")
    return float(steps[0])


def echo_from_density(spectrum: SpectralDensity, time_grid) -> EchoTrace:
    """A(t) = sum rho(w) e^{i w t} / sum rho(w); a unit DC component maps to A(0) = 1."""
    grid = np.asarray(spectrum.freq_grid, dtype=float)
    _check_uniform(grid)
    time_grid = np.asarray(time_grid, dtype=float)
    total = spectrum.values.sum()
    if total == 0:
        raise ConfigError("density has no DC component to normalize by")
    amplitude = np.exp(1j * np.outer(time_grid, grid)) @ spectrum.values / total
    return EchoTrace(time_grid, amplitude, {"source": "density"})


def delay_line_response(input_pulses, spectrum: SpectralDensity, time_grid) -> EchoTrace:
    """Causal superposition sum_k a_k A(t - t_k) of the density's impulse response."""
    time_grid = np.asarray(time_grid, dtype=float)
    out = np.zeros(time_grid.size, dtype=complex)
    for t_k, a_k in input_pulses:
        if t_k < 0:
            raise ConfigError(f"input pulse time must be non-negative, got {t_k}")
        shifted = time_grid - t_k
        live = shifted >= 0
        if np.any(live):
            out[live] += a_k * echo_from_density(spectrum, shifted[live]).amplitude
    return EchoTrace(time_grid, out, {"n_inputs": len(input_pulses)})


def pair_power_spectrum(tau: float, tp: float, freq_grid) -> np.ndarray:
    """sinc^2(x tp / 2) cos^2(x tau / 2), x the detuning from the carrier; peak 1 at x = 0."""
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    x = np.asarray(freq_grid, dtype=float)
    return np.sinc(x * tp / (2 * np.pi)) ** 2 * np.cos(0.5 * x * tau) ** 2
