from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from shbsim.analysis import dominant_period
from shbsim.config import TWO_PI
from shbsim.echo import (
    SIGMA_X,
    SIGMA_Z,
    EchoScenario,
    GratingState,
    PulseSpec,
    accumulate_grating,
    apply_pair_generator,
    delay_line_response,
    echo_amplitudes,
    echo_buildup,
    echo_from_density,
    grating_density,
    pair_excitation,
    pair_power_spectrum,
    probe_echo,
    pulse_rotation,
)
from shbsim.errors import ConfigError
from shbsim.holeburn import SpectralDensity, branching_matrix, zero_flip_weights
from shbsim.spin_model import build_eigensystem, transition_elements
from tests.conftest import KHZ, make_bath, make_site

TAU = 100e-6


def _storing_bath():
    return make_bath(make_site(-14.8, 120.0))


def _uniform_grid(n: int, step: float) -> np.ndarray:
    return (np.arange(n) - n // 2) * step


# ── Pulses ────────────────────────────────────────────────────────────────────

def test_pulse_validation():
    with pytest.raises(ConfigError):
        PulseSpec(tau=1e-6, tp=1e-6)
    with pytest.raises(ConfigError):
        PulseSpec(omega1=1.0, tp=1.0, tau=2.0, pi_half=True)
    assert PulseSpec(pi_half=True).omega1 * PulseSpec().tp == pytest.approx(np.pi / 2)
    with pytest.raises(ConfigError):
        PulseSpec(omega1=np.pi / 1e-6, tp=1e-6)
    with pytest.raises(ConfigError):
        PulseSpec(tau=1.2e-6, tp=1e-6)


def test_pulse_lag_shortens_free_precession():
    pulse = PulseSpec()
    assert pulse.pulse_lag == pytest.approx(4 * pulse.tp / np.pi)
    assert pulse.free_time == pytest.approx(pulse.tau - 4 * pulse.tp / np.pi)
    assert PulseSpec(omega1=0.0).pulse_lag == pulse.tp


@pytest.mark.parametrize("delta", [0.0, TWO_PI * 0.1e6, -TWO_PI * 1e6])
def test_pulse_rotation_matches_matrix_exponential(delta):
    pulse = PulseSpec()
    expected = expm(-0.5j * pulse.tp * (delta * SIGMA_Z + pulse.omega1 * SIGMA_X))
    np.testing.assert_allclose(pulse_rotation(delta, pulse), expected, atol=1e-12)


def test_resonant_pi_half_pulse_splits_population():
    rot = pulse_rotation(0.0, PulseSpec())
    assert abs(rot[0, 1]) ** 2 == pytest.approx(0.5)


def test_far_detuned_pulse_barely_excites():
    pulse = PulseSpec()
    rot = pulse_rotation(1e3 * pulse.omega1, pulse)
    assert abs(rot[0, 1]) ** 2 < 1e-5


def test_pair_excitation_fringes():
    pulse = PulseSpec()
    assert pair_excitation(0.0, pulse) == pytest.approx(1.0)
    assert pair_excitation(np.pi / pulse.tau, pulse) < 0.05


# ── Pair generator ────────────────────────────────────────────────────────────

def test_zero_rabi_leaves_state_unchanged(spin):
    eig = build_eigensystem(_storing_bath(), spin)
    state = np.array([[0.7, 0.3], [0.4, 0.6]])
    pulse = PulseSpec(omega1=0.0)
    out = apply_pair_generator(state, eig, pulse, detunings=np.array([0.0, TWO_PI * 5e3]))
    np.testing.assert_allclose(out, state, atol=1e-15)


def test_unmixed_nucleus_does_not_redistribute(spin):
    eig = build_eigensystem(make_bath(make_site(20.0, 0.0)), spin)
    state = np.array([0.5, 0.5])
    out = apply_pair_generator(state, eig, PulseSpec(), detunings=TWO_PI * 3e3)
    np.testing.assert_allclose(out, state, atol=1e-15)


def test_pair_generator_matches_dense_density_matrix(spin):
    eig = build_eigensystem(_storing_bath(), spin)
    table = transition_elements(eig)
    _, offsets = zero_flip_weights(table)
    branching = branching_matrix(table).toarray()
    pulse = PulseSpec()
    delta = TWO_PI * 7e3
    p0 = np.array([0.6, 0.4])

    # basis (e0, g0, e1, g1)
    h_pulse = np.zeros((4, 4), dtype=complex)
    h_free = np.zeros((4, 4), dtype=complex)
    for j in range(2):
        block = slice(2 * j, 2 * j + 2)
        h_pulse[block, block] = 0.5 * ((delta + offsets[j]) * SIGMA_Z + pulse.omega1 * SIGMA_X)
        h_free[block, block] = 0.5 * (delta + offsets[j]) * SIGMA_Z
    u_pulse = expm(-1j * pulse.tp * h_pulse)
    u = u_pulse @ expm(-1j * pulse.free_time * h_free) @ u_pulse
    rho = u @ np.diag([0.0, p0[0], 0.0, p0[1]]).astype(complex) @ u.conj().T
    diag = rho.diagonal().real
    excited, ground = diag[0::2], diag[1::2]
    expected = ground + branching.T @ excited

    out = apply_pair_generator(p0, eig, pulse, detunings=delta)
    np.testing.assert_allclose(out, expected, atol=1e-10)


def test_long_accumulation_conserves_probability():
    scenario = EchoScenario(
        pulse=PulseSpec(n_pairs=100_000),
        detuning_span=TWO_PI * 20e3,
        detuning_step=TWO_PI * 1e3,
        baths=(_storing_bath(),),
    )
    grating = accumulate_grating(scenario, workers=1)
    np.testing.assert_allclose(grating.populations.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(grating.populations >= 0)
    assert grating.n_applied == 100_000


def test_echo_detunings_exclude_endpoint():
    scenario = EchoScenario(pulse=PulseSpec(), baths=(_storing_bath(),))
    deltas = scenario.detunings
    assert deltas.size == 2000
    assert deltas[0] == pytest.approx(-TWO_PI * 1e6)
    assert deltas[-1] < TWO_PI * 1e6


# ── Grating and echoes ────────────────────────────────────────────────────────

@pytest.mark.parametrize("tau", [60e-6, 50e-6])
def test_grating_period_is_inverse_pair_delay(tau):
    scenario = EchoScenario(
        pulse=PulseSpec(tau=tau, n_pairs=100),
        detuning_span=TWO_PI * 1e6,
        detuning_step=TWO_PI * 0.5e3,
        baths=(_storing_bath(),),
    )
    grating = accumulate_grating(scenario, workers=1)
    grid = _uniform_grid(400, 0.5 * KHZ)
    density = grating_density(grating, grid)
    assert dominant_period(grid, density.values) == pytest.approx(TWO_PI / tau, rel=0.05)


def test_thermal_state_gives_no_echo():
    scenario = EchoScenario(pulse=PulseSpec(n_pairs=0), baths=(_storing_bath(),))
    grating = accumulate_grating(scenario, workers=1)
    trace = probe_echo(grating, np.array([0.0, TAU, 2 * TAU]))
    assert trace.amplitude[0] == pytest.approx(1.0)
    assert np.all(np.abs(trace.amplitude[1:]) < 1e-9)


def test_accumulated_grating_echoes_at_pair_delay():
    scenario = EchoScenario(pulse=PulseSpec(n_pairs=300), baths=(_storing_bath(),))
    grating = accumulate_grating(scenario, workers=1)
    trace = probe_echo(grating, np.array([TAU, 1.5 * TAU]), scenario.pulse)
    assert abs(trace.amplitude[0]) > 0
    assert abs(trace.amplitude[0]) > 10 * abs(trace.amplitude[1])
    assert trace.meta["tau"] == TAU


def test_single_fourier_component_gives_half_amplitude():
    deltas = _uniform_grid(2000, KHZ)
    a = 0.3
    mod = a * np.cos(deltas * TAU)
    pops = np.stack([0.5 * (1 + mod), 0.5 * (1 - mod)], axis=-1)[None]
    grating = GratingState(
        populations=pops,
        detunings=deltas,
        weights=np.ones(deltas.size),
        offsets=np.array([[0.0, np.pi / TAU]]),
        strengths=np.ones((1, 2)),
    )
    trace = probe_echo(grating, np.array([0.0, TAU]))
    assert trace.amplitude[0] == pytest.approx(1.0, abs=1e-12)
    assert trace.amplitude[1] == pytest.approx(a / 2, abs=1e-10)


def test_grating_state_requires_normalized_samples():
    with pytest.raises(ConfigError):
        GratingState(
            populations=np.full((1, 3, 2), 0.4),
            detunings=np.zeros(3),
            weights=np.ones(3),
            offsets=np.zeros((1, 2)),
            strengths=np.ones((1, 2)),
        )


def test_echo_buildup_grows_with_pairs():
    scenario = EchoScenario(
        pulse=PulseSpec(n_pairs=300),
        baths=(_storing_bath(),),
        checkpoints=(0, 30, 100, 300),
    )
    counts, amplitudes = echo_buildup(scenario, n_echoes=1, workers=1)
    np.testing.assert_array_equal(counts, [0, 30, 100, 300])
    magnitude = np.abs(amplitudes[:, 0])
    assert magnitude[0] < 1e-9
    assert np.all(np.diff(magnitude) > 0)


def test_echo_buildup_saturates():
    scenario = EchoScenario(
        pulse=PulseSpec(n_pairs=24_000),
        detuning_span=TWO_PI * 200e3,
        baths=(make_bath(make_site(-14.8, 35.7)),),
        checkpoints=(0, 1500, 6000, 12_000, 24_000),
    )
    _, amplitudes = echo_buildup(scenario, n_echoes=1, workers=1)
    magnitude = np.abs(amplitudes[:, 0])
    assert np.all(np.diff(magnitude) > 0)
    assert magnitude[3] >= 0.95 * magnitude[4]
    assert magnitude[1] < 0.8 * magnitude[4]


def test_consecutive_echoes_alternate_in_sign():
    tau = 80e-6
    scenario = EchoScenario(
        pulse=PulseSpec(tau=tau, n_pairs=3000),
        baths=(make_bath(make_site(-14.8, 35.7)),),
    )
    grating = accumulate_grating(scenario, workers=1)
    first, second = probe_echo(grating, np.array([tau, 2 * tau])).amplitude.real
    assert abs(first) > 1e-6
    assert np.sign(first) == -np.sign(second)


def test_echo_buildup_checks_checkpoints():
    scenario = EchoScenario(pulse=PulseSpec(), baths=(_storing_bath(),), checkpoints=(300, 100))
    with pytest.raises(ConfigError):
        echo_buildup(scenario, workers=1)


def test_echo_amplitudes_interpolate():
    times = np.linspace(0, 4 * TAU, 401)
    trace = probe_echo(
        GratingState(
            populations=np.full((1, 4, 2), 0.5),
            detunings=np.zeros(4),
            weights=np.ones(4),
            offsets=np.zeros((1, 2)),
            strengths=np.ones((1, 2)),
        ),
        times,
    )
    np.testing.assert_allclose(echo_amplitudes(trace, TAU), 1.0)
    with pytest.raises(ConfigError):
        echo_amplitudes(trace, TAU, n_echoes=5)


# ── Fourier bridge ────────────────────────────────────────────────────────────

def _density(values, step=KHZ):
    grid = _uniform_grid(values.size, step)
    return SpectralDensity(grid, values)


def test_flat_density_has_no_echo():
    spectrum = _density(np.ones(2000))
    trace = echo_from_density(spectrum, np.array([0.0, TAU]))
    assert trace.amplitude[0] == pytest.approx(1.0)
    assert abs(trace.amplitude[1]) < 1e-9


def test_cosine_density_gives_half_amplitude_echo():
    grid = _uniform_grid(2000, KHZ)
    spectrum = SpectralDensity(grid, 1.0 + 0.4 * np.cos(grid * TAU))
    trace = echo_from_density(spectrum, np.array([TAU]))
    assert trace.amplitude[0] == pytest.approx(0.2, abs=1e-10)


def test_density_echo_tracks_direct_echo():
    tau = 80e-6
    scenario = EchoScenario(
        pulse=PulseSpec(tau=tau, n_pairs=1000),
        baths=(make_bath(make_site(-14.8, 35.7)),),
    )
    grating = accumulate_grating(scenario, workers=1)
    density = grating_density(grating, _uniform_grid(2000, KHZ))
    for j in (1, 2, 3):
        window = j * tau + np.arange(-8, 9) * 0.5e-6
        direct = probe_echo(grating, window).amplitude
        bridged = echo_from_density(density, window).amplitude
        overlap = abs(np.vdot(direct, bridged)) / (np.linalg.norm(direct) * np.linalg.norm(bridged))
        assert overlap >= 0.95


def test_echo_from_density_rejects_bad_input():
    with pytest.raises(ConfigError):
        echo_from_density(SpectralDensity(np.array([0.0, 1.0, 3.0]), np.ones(3)), np.array([0.0]))
    with pytest.raises(ConfigError):
        echo_from_density(_density(np.zeros(10)), np.array([0.0]))


def test_delay_line_is_linear_and_causal():
    grid = _uniform_grid(2000, KHZ)
    spectrum = SpectralDensity(grid, 1.0 + 0.4 * np.cos(grid * TAU))
    times = np.linspace(0.0, 3 * TAU, 61)
    first = [(0.0, 1.0)]
    second = [(2 * TAU / 3, 0.5j)]
    both = delay_line_response(first + second, spectrum, times).amplitude
    summed = (
        delay_line_response(first, spectrum, times).amplitude
        + delay_line_response(second, spectrum, times).amplitude
    )
    np.testing.assert_allclose(both, summed, atol=1e-12)

    late = delay_line_response([(TAU, 1.0)], spectrum, times).amplitude
    np.testing.assert_array_equal(late[times < TAU], 0.0)
    with pytest.raises(ConfigError):
        delay_line_response([(-1.0, 1.0)], spectrum, times)


def test_delay_line_replays_each_input():
    grid = _uniform_grid(2000, KHZ)
    spectrum = SpectralDensity(grid, 1.0 + 0.4 * np.cos(grid * TAU))
    times = np.arange(401) * 0.5e-6
    inputs = [(0.0, 1.0), (30e-6, 0.5), (60e-6, -0.8)]
    out = delay_line_response(inputs, spectrum, times).amplitude
    for (_, a_k), index in zip(inputs, (200, 260, 320)):
        assert out[index] == pytest.approx(0.2 * a_k, abs=1e-9)
    assert abs(out[230]) < 1e-9
    assert abs(out[290]) < 1e-9


def test_pair_power_spectrum_nulls():
    freq = np.array([0.0, np.pi / TAU, 3 * np.pi / TAU])
    power = pair_power_spectrum(TAU, 1e-6, freq)
    assert power[0] == pytest.approx(1.0)
    assert np.all(power[1:] < 1e-20)
    with pytest.raises(ConfigError):
        pair_power_spectrum(0.0, 1e-6, freq)
