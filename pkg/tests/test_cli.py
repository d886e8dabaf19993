from __future__ import annotations

import json
import os

import numpy as np
import pandas as pd
import pytest

from shbsim.cli import main
from shbsim.errors import ConfigError
from shbsim.outputs import MANIFEST, compare_runs, write_run
from shbsim.scenario import Scenario, load_lattice_config, load_scenario


def _write(path, payload) -> str:
    path.write_text(json.dumps(payload))
    return str(path)


def _shb_payload(seed: int = 1, **run) -> dict:
    return {
        "schema_version": 1,
        "kind": "shb",
        "run": {"seed": seed, "ns": 1, "n_configs": 2, "n_detunings": 11, **run},
        "grid": {"start_kHz": -20, "stop_kHz": 20, "step_kHz": 1},
        "pump": {"offset_kHz": -794.0},
    }


def _run(tmp_path, name: str, payload: dict, *extra: str) -> tuple[int, object]:
    scenario = _write(tmp_path / f"{name}.json", payload)
    out = tmp_path / name
    code = main(["run", scenario, "--workers", "1", "--out-dir", str(out), *extra])
    return code, out


# ── Scenario validation ───────────────────────────────────────────────────────

def test_missing_seed_is_a_config_error(tmp_path, capsys):
    payload = _shb_payload()
    del payload["run"]["seed"]
    code, out = _run(tmp_path, "noseed", payload)
    assert code == 2
    assert "run.seed: Field required" in capsys.readouterr().err
    assert not out.exists()


def test_unknown_kind_and_extra_keys_rejected(tmp_path):
    assert _run(tmp_path, "kind", _shb_payload() | {"kind": "burn"})[0] == 2
    assert _run(tmp_path, "extra", _shb_payload() | {"colour": "red"})[0] == 2


def test_unsupported_schema_version(tmp_path, capsys):
    code, _ = _run(tmp_path, "v2", _shb_payload() | {"schema_version": 2})
    assert code == 2
    assert "schema_version" in capsys.readouterr().err


def test_preset_fills_run_defaults(tmp_path):
    path = _write(tmp_path / "preset.json", {
        "schema_version": 1,
        "kind": "echo_probe",
        "preset": "desk",
        "run": {"seed": 5},
    })
    scenario = load_scenario(path)
    assert scenario.run.ns == 6
    assert scenario.run.n_configs == 64
    assert scenario.pulse.n_pairs == 3000


def test_scenario_defaults_to_tilted_field():
    scenario = Scenario.model_validate(_shb_payload())
    assert scenario.physics.b0_mT == pytest.approx((0.0, 1.0, 447.6))
    assert scenario.physics.to_params().omega_i / (2 * np.pi) == pytest.approx(794e3, rel=1e-3)


def test_analysis_kind_needs_existing_file(tmp_path):
    path = _write(tmp_path / "fit.json", {
        "schema_version": 1,
        "kind": "fit_line",
        "analysis": {"data_file": "absent.csv"},
    })
    assert main(["run", path, "--out-dir", str(tmp_path / "out")]) == 2


def test_lattice_config_file(tmp_path):
    path = _write(tmp_path / "lattice.json", {"cutoff_nm": 1.0, "abundance": 0.5, "overrides": {}})
    params, overrides, abundance = load_lattice_config(path)
    assert params.cutoff_radius == 1.0
    assert overrides == {}
    assert abundance == 0.5


# ── Runs and manifests ────────────────────────────────────────────────────────

def test_shb_run_writes_outputs_and_manifest(tmp_path, capsys):
    code, out = _run(tmp_path, "red", _shb_payload())
    assert code == 0
    assert "STEP 3/3" in capsys.readouterr().out
    manifest = json.loads((out / MANIFEST).read_text())
    assert manifest["kind"] == "shb"
    assert manifest["seed"] == 1
    assert set(manifest["outputs"]) == {"spectrum.csv", "features.json"}
    spectrum = pd.read_csv(out / "spectrum.csv")
    assert list(spectrum.columns) == ["detuning_Hz", "ratio", "rho1", "rho0"]
    assert len(spectrum) == 41
    assert not any(p.name.startswith(".staging-") for p in out.iterdir())


def test_reruns_are_byte_identical(tmp_path):
    _, first = _run(tmp_path, "a", _shb_payload())
    _, second = _run(tmp_path, "b", _shb_payload())
    assert (first / "spectrum.csv").read_bytes() == (second / "spectrum.csv").read_bytes()
    assert main(["compare", str(first), str(second)]) == 0


def test_compare_flags_different_seeds(tmp_path):
    tilted = {"b0_mT": [0.0, 20.0, 447.6]}
    _, first = _run(tmp_path, "s1", _shb_payload(1, ns=3, n_configs=4) | {"physics": tilted})
    _, second = _run(tmp_path, "s2", _shb_payload(2, ns=3, n_configs=4) | {"physics": tilted})
    report = compare_runs(first, second)
    assert report["within_tolerance"] is False
    assert report["files"]["spectrum.csv"]["ratio"]["max_abs"] > 0
    assert main(["compare", str(first), str(second)]) == 1


@pytest.mark.slow
def test_worker_count_does_not_change_results(tmp_path):
    payload = _shb_payload(7, ns=2, n_configs=4)
    _, serial = _run(tmp_path, "w1", payload)
    scenario = _write(tmp_path / "w2.json", payload)
    parallel = tmp_path / "w2"
    assert main(["run", scenario, "--workers", "2", "--out-dir", str(parallel)]) == 0
    assert (serial / "spectrum.csv").read_bytes() == (parallel / "spectrum.csv").read_bytes()


def test_echo_probe_run(tmp_path):
    payload = {
        "schema_version": 1,
        "kind": "echo_probe",
        "run": {"seed": 3, "ns": 1, "n_configs": 1},
        "pulse": {"n_pairs": 50},
        "echo": {"t_max_us": 320, "t_step_us": 1, "n_echoes": 3},
    }
    code, out = _run(tmp_path, "echo", payload)
    assert code == 0
    echoes = json.loads((out / "echoes.json").read_text())
    assert [e["j"] for e in echoes["echoes"]] == [1, 2, 3]
    assert list(pd.read_csv(out / "echo.csv").columns) == ["t_s", "re", "im", "abs"]


def test_failed_run_leaves_nothing_behind(tmp_path):
    pd.DataFrame({
        "t_s": np.linspace(0, 100, 10),
        "amplitude": np.ones(10),
        "n_pulses": np.zeros(10),
    }).to_csv(tmp_path / "flat.csv", index=False)
    payload = {"schema_version": 1, "kind": "analyze_decay", "analysis": {"data_file": "flat.csv"}}
    code, out = _run(tmp_path, "flat", payload)
    assert code == 3
    assert not out.exists()


def test_relative_weights_survive_a_zero_sample(tmp_path):
    t = np.linspace(0.0, 200.0, 30)
    amplitude = 0.6 * np.exp(-t / 5.0) + 0.4 * np.exp(-t / 50.0)
    amplitude[-1] = 0.0
    pd.DataFrame({"t_s": t, "amplitude": amplitude, "n_pulses": np.zeros(t.size)}).to_csv(
        tmp_path / "decay.csv", index=False
    )
    payload = {"schema_version": 1, "kind": "analyze_decay", "analysis": {"data_file": "decay.csv"}}
    code, out = _run(tmp_path, "zero", payload)
    assert code == 0
    fit = json.loads((out / "decay_fit.json").read_text())["fit"]
    assert np.all(np.isfinite(fit["taus_s"]))
    assert np.all(np.isfinite(pd.read_csv(out / "decay.csv")["model"]))


def test_write_run_cleans_staging_on_error(tmp_path):
    scenario = Scenario.model_validate(_shb_payload())
    with pytest.raises(TypeError):
        write_run(tmp_path / "out", scenario, {}, {"bad": {"values": {1, 2}}})
    assert list((tmp_path / "out").iterdir()) == []


def test_interrupted_rewrite_leaves_no_stale_manifest(tmp_path, monkeypatch):
    scenario = Scenario.model_validate(_shb_payload())
    out = tmp_path / "out"
    write_run(out, scenario, {"spectrum": pd.DataFrame({"ratio": [1.0, 0.9]})})
    assert (out / MANIFEST).exists()

    real_replace = os.replace

    def failing_replace(src, dst):
        if str(dst).endswith(".csv"):
            raise OSError("disk full")
        real_replace(src, dst)

    monkeypatch.setattr(os, "replace", failing_replace)
    with pytest.raises(OSError):
        write_run(out, scenario, {"spectrum": pd.DataFrame({"ratio": [0.5, 0.4]})})
    assert not (out / MANIFEST).exists()


def test_compare_needs_manifests(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    with pytest.raises(ConfigError):
        compare_runs(tmp_path / "a", tmp_path / "b")


# ── Analysis kinds ────────────────────────────────────────────────────────────

def test_fit_line_run(tmp_path):
    b0 = np.linspace(0.4488, 0.4548, 121)
    hwhm = 0.31e-3
    kappa_i = 2e6 + 5e5 * hwhm**2 / ((b0 - 0.4518) ** 2 + hwhm**2)
    pd.DataFrame({"B0_T": b0, "kappa_i": kappa_i}).to_csv(tmp_path / "scan.csv", index=False)
    payload = {"schema_version": 1, "kind": "fit_line", "analysis": {"data_file": "scan.csv"}}
    code, out = _run(tmp_path, "line", payload)
    assert code == 0
    result = json.loads((out / "line_fit.json").read_text())
    assert result["fwhm_Hz"] == pytest.approx(10.76e6, rel=1e-3)


def test_orbach_run(tmp_path):
    from shbsim.analysis import orbach_rate

    T = np.linspace(0.05, 0.22, 8)
    pd.DataFrame({"T_K": T, "tau_s": 1.0 / orbach_rate(T, 0.03)}).to_csv(tmp_path / "temps.csv", index=False)
    payload = {
        "schema_version": 1,
        "kind": "orbach",
        "analysis": {"data_file": "temps.csv", "omega_i_kHz": 794.0},
    }
    code, out = _run(tmp_path, "orbach", payload)
    assert code == 0
    report = json.loads((out / "orbach.json").read_text())
    assert report["orbach"]["gamma_1x"] == pytest.approx(0.03, rel=1e-4)
    assert report["orbach"]["b_implied_Hz"] == pytest.approx(123e3, rel=0.01)


# ── Informational commands ────────────────────────────────────────────────────

def test_schema_and_presets_commands(capsys):
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "kind" in schema["properties"]
    assert main(["presets"]) == 0
    presets = json.loads(capsys.readouterr().out)
    assert set(presets) == {"desk", "full"}
