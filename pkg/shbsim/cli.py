"""Command-line entry point.

Usage:
    # Run a scenario file:
    shbsim run scenarios/shb_red.json [--workers 4] [--out-dir results/red]

    # Regression check between two run directories:
    shbsim compare results/a results/b [--rtol 1e-9 --atol 0]

    # Published scenario schema and ensemble presets:
    shbsim schema
    shbsim presets

Exit codes: 0 success, 1 compare found deviations, 2 invalid scenario,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from shbsim.analysis import (
    density_from_s11,
    density_ratio,
    dominant_period,
    fit_line,
    fit_multi_exponential,
    fit_orbach,
    load_decay_series,
    load_line_scan,
    load_s11_scan,
    load_temperature_series,
    raman_check,
    rescale_probe_decay,
)
from shbsim.config import LOG_LEVEL, OUTPUT_DIR, PRESETS, SECONDS_PER_HOUR, TWO_PI, WORKERS
from shbsim.echo import (
    EchoScenario,
    accumulate_grating,
    echo_amplitudes,
    echo_buildup,
    grating_density,
    probe_echo,
)
from shbsim.errors import ConfigError, NumericalError
from shbsim.holeburn import (
    ResetSweep,
    ShbScenario,
    burned_populations,
    detuning_window,
    hole_features,
    reset_sweep,
    shb_spectrum,
)
from shbsim.outputs import compare_runs, echo_frame, spectrum_frame, write_run
from shbsim.scenario import Scenario, load_scenario, schema
from shbsim.spin_model import build_eigensystem, transition_elements

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_DIFF, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
KHZ = TWO_PI * 1e3
# relative weights never exceed 1 / (WEIGHT_FLOOR * max|y|)
WEIGHT_FLOOR = 1e-3


def _banner(step: int, total: int, title: str) -> None:
    print("=" * 60)
    print(f"STEP {step}/{total}: {title}")
    print("=" * 60)


# ── Scenario adapters ─────────────────────────────────────────────────────────

def _shb_scenario(sc: Scenario) -> ShbScenario:
    return ShbScenario(
        pump=sc.pump.to_spec(),
        freq_grid=sc.grid.to_grid(),
        n_configs=sc.run.n_configs,
        ns=sc.run.ns,
        seed=sc.run.seed,
        gamma_probe=sc.probe.hwhm_kHz * KHZ,
        n_detunings=sc.run.n_detunings,
        distribution=sc.run.distribution,
        spin=sc.physics.to_params(),
        lattice=sc.lattice.to_params(),
        overrides=sc.lattice.to_overrides(),
        abundance=sc.lattice.abundance,
    )


def _echo_scenario(sc: Scenario) -> EchoScenario:
    return EchoScenario(
        pulse=sc.pulse.to_spec(),
        n_configs=sc.run.n_configs,
        ns=sc.run.ns,
        seed=sc.run.seed,
        detuning_span=sc.echo.detuning_span_MHz * TWO_PI * 1e6,
        detuning_step=sc.echo.detuning_step_kHz * KHZ,
        spin=sc.physics.to_params(),
        lattice=sc.lattice.to_params(),
        overrides=sc.lattice.to_overrides(),
        abundance=sc.lattice.abundance,
        checkpoints=sc.run.checkpoints,
    )


# ── Kinds ─────────────────────────────────────────────────────────────────────

def run_shb(sc: Scenario, workers: int):
    spectrum = shb_spectrum(_shb_scenario(sc), workers=workers)
    features = hole_features(spectrum)
    for label in ("holes", "anti_holes"):
        for f in features[label][:3]:
            print(f"  {label[:-1]:9s} {f['detuning_Hz'] / 1e3:+9.2f} kHz  depth {f['depth']:.4f}")
    return {"spectrum": spectrum_frame(spectrum)}, {"features": features | {"meta": spectrum.meta}}


def run_echo_accumulate(sc: Scenario, workers: int):
    esc = _echo_scenario(sc)
    grating = accumulate_grating(esc, workers=workers)
    density = grating_density(grating, sc.grid.to_grid(), sc.probe.hwhm_kHz * KHZ)
    period = dominant_period(density.freq_grid, density.values)
    expected = TWO_PI / esc.pulse.tau
    print(f"  grating period {period / KHZ:.3f} kHz (2 pi / tau = {expected / KHZ:.3f} kHz)")

    tables = {"grating": spectrum_frame(density)}
    report = {"period_Hz": period / TWO_PI, "expected_period_Hz": expected / TWO_PI, "n_pairs": grating.n_applied}
    if esc.checkpoints:
        counts, amps = echo_buildup(esc, n_echoes=1, workers=workers)
        tables["buildup"] = pd.DataFrame({
            "n_pairs": counts,
            "re": amps[:, 0].real,
            "im": amps[:, 0].imag,
            "abs": np.abs(amps[:, 0]),
        })
    return tables, {"grating": report}


def run_echo_probe(sc: Scenario, workers: int):
    esc = _echo_scenario(sc)
    grating = accumulate_grating(esc, workers=workers)
    trace = probe_echo(grating, sc.echo.time_grid(), esc.pulse)
    echoes = echo_amplitudes(trace, esc.pulse.tau, sc.echo.n_echoes)
    for j, a in enumerate(echoes, start=1):
        print(f"  echo {j}: |A| = {abs(a):.3e}, phase {np.angle(a):+.3f} rad")
    report = {
        "tau_s": esc.pulse.tau,
        "n_pairs": grating.n_applied,
        "echoes": [{"j": j, "re": a.real, "im": a.imag, "abs": abs(a)} for j, a in enumerate(echoes, start=1)],
    }
    return {"echo": echo_frame(trace)}, {"echoes": report}


def run_reset(sc: Scenario, workers: int):
    if sc.reset is None:
        raise ConfigError("kind 'reset' needs a reset block")
    shb = _shb_scenario(sc)
    window = detuning_window(shb.freq_grid, shb.n_detunings, shb.distribution, shb.spin.sigma)
    deltas, weights = window.centers, window.masses()
    sweep = sc.reset.to_sweep()
    idle = ResetSweep(span=0.0, step=1.0, omega_p=0.0, dwell=1.0)

    rows = []
    for k, bath in enumerate(shb.bath_list()):
        table = transition_elements(build_eigensystem(bath, shb.spin))
        burned = burned_populations(table, shb.pump, deltas, shb.spin.gamma1, shb.spin.gamma2)
        probe = {"table": table, "detunings": deltas, "weights": weights,
                 "freq_grid": shb.freq_grid, "gamma_probe": shb.gamma_probe}
        before = reset_sweep(burned, idle, **probe).residual
        after = reset_sweep(burned, sweep, gamma1=shb.spin.gamma1, gamma2=shb.spin.gamma2, **probe).residual
        rows.append({"config": k, "seed": bath.seed, "burned_residual": before, "reset_residual": after})
        logger.info("config %d: residual %.3e -> %.3e", k, before, after)
    frame = pd.DataFrame(rows)
    print(f"  mean residual {frame['burned_residual'].mean():.3e} -> {frame['reset_residual'].mean():.3e}")
    report = {
        "burned_residual_mean": frame["burned_residual"].mean(),
        "reset_residual_mean": frame["reset_residual"].mean(),
        "reset_residual_max": frame["reset_residual"].max(),
    }
    return {"reset": frame}, {"reset": report}


def run_analyze_decay(sc: Scenario, workers: int):
    block = sc.analysis
    data = load_decay_series(block.data_file)
    y = data["amplitude"].to_numpy(float)
    report = {}
    if block.reference_file is not None:
        ref = load_decay_series(block.reference_file)
        ref_fit = fit_multi_exponential(
            ref["n_pulses"].to_numpy(float), ref["amplitude"].to_numpy(float), block.reference_terms
        )
        y = rescale_probe_decay(y, data["n_pulses"].to_numpy(float), ref_fit)
        report["reference_fit"] = ref_fit.to_dict()
    t = data["t_s"].to_numpy(float)
    weights = None
    if block.weights == "relative":
        floor = max(WEIGHT_FLOOR * float(np.max(np.abs(y))), np.finfo(float).tiny)
        weights = 1.0 / np.maximum(np.abs(y), floor)
    fit = fit_multi_exponential(t, y, block.n_terms, weights)
    for tau in fit.taus:
        print(f"  tau = {tau / SECONDS_PER_HOUR:.2f} h")
    table = pd.DataFrame({"t_s": t, "amplitude": data["amplitude"], "rescaled": y, "model": fit.evaluate(t)})
    return {"decay": table}, {"decay_fit": report | {"fit": fit.to_dict()}}


def run_fit_line(sc: Scenario, workers: int):
    result = fit_line(load_line_scan(sc.analysis.data_file), sc.physics.to_params().gyro_tensor[2, 2])
    print(f"  center {result['center_T']:.6f} T, fwhm {result['fwhm_T'] * 1e3:.3f} mT = {result['fwhm_Hz'] / 1e6:.2f} MHz")
    return {}, {"line_fit": result}


def run_fit_s11(sc: Scenario, workers: int):
    block = sc.analysis
    scan = load_s11_scan(block.data_file)
    model = block.resonator.to_model()
    omega = scan["detuning_Hz"].to_numpy(float) * TWO_PI
    table = pd.DataFrame({
        "detuning_Hz": scan["detuning_Hz"],
        "density": density_from_s11(scan["s11_sq"].to_numpy(float), omega, model),
    })
    if "s11_sq_reference" in scan.columns:
        table["ratio"] = density_ratio(scan["s11_sq"], scan["s11_sq_reference"], omega, model)
    return {"density": table}, {}


def run_orbach(sc: Scenario, workers: int):
    data = load_temperature_series(sc.analysis.data_file)
    spin = sc.physics.to_params()
    T = data["T_K"].to_numpy(float)
    tau = data["tau_s"].to_numpy(float)
    omega_i = None if sc.analysis.omega_i_kHz is None else sc.analysis.omega_i_kHz * KHZ
    fit = fit_orbach(T, tau, spin.omega0, spin.gamma1, omega_i)
    raman = raman_check(T, 1.0 / tau)
    print(f"  Gamma_1x = {fit['gamma_1x']:.4g} s^-1, power-law exponent {raman['exponent']:.2f}")
    table = pd.DataFrame({"T_K": T, "tau_s": tau, "tau_h": tau / SECONDS_PER_HOUR})
    return {"orbach": table}, {"orbach": {"orbach": fit, "power_law": raman}}


RUNNERS = {
    "shb": run_shb,
    "echo_accumulate": run_echo_accumulate,
    "echo_probe": run_echo_probe,
    "reset": run_reset,
    "analyze_decay": run_analyze_decay,
    "fit_line": run_fit_line,
    "fit_s11": run_fit_s11,
    "orbach": run_orbach,
}


# ── Commands ──────────────────────────────────────────────────────────────────

def cmd_run(args) -> int:
    _banner(1, 3, "Loading scenario")
    scenario = load_scenario(Path(args.scenario))
    out_dir = Path(args.out_dir) if args.out_dir else (scenario.io.out_dir or OUTPUT_DIR / Path(args.scenario).stem)
    print(f"  kind={scenario.kind} seed={scenario.seed} -> {out_dir}\n")

    _banner(2, 3, f"Running {scenario.kind}")
    t0 = time.time()
    tables, reports = RUNNERS[scenario.kind](scenario, args.workers)
    print(f"  done in {time.time() - t0:.1f}s\n")

    _banner(3, 3, "Writing outputs")
    manifest = write_run(out_dir, scenario, tables, reports, scenario.io.formats)
    for name in manifest["outputs"]:
        print(f"  {out_dir / name}")
    return EXIT_OK


def cmd_compare(args) -> int:
    report = compare_runs(Path(args.run_a), Path(args.run_b), args.rtol, args.atol)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["within_tolerance"] else EXIT_DIFF


def cmd_schema(args) -> int:
    print(json.dumps(schema(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_presets(args) -> int:
    print(json.dumps(PRESETS, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shbsim", description="Spectral hole burning and accumulated echo toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Run a scenario file")
    p_run.add_argument("scenario", help="Scenario JSON file")
    p_run.add_argument("--workers", type=int, default=WORKERS, help="Worker processes (default: SHBSIM_WORKERS)")
    p_run.add_argument("--out-dir", default=None, help="Output directory (overrides io.out_dir)")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="Compare the CSV outputs of two runs")
    p_cmp.add_argument("run_a")
    p_cmp.add_argument("run_b")
    p_cmp.add_argument("--rtol", type=float, default=0.0)
    p_cmp.add_argument("--atol", type=float, default=0.0)
    p_cmp.set_defaults(func=cmd_compare)

    sub.add_parser("schema", help="Print the scenario JSON schema").set_defaults(func=cmd_schema)
    sub.add_parser("presets", help="Print the ensemble presets").set_defaults(func=cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            print(f"{loc}: {err['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
