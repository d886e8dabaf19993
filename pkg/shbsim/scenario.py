"""Scenario files: versioned JSON validated by pydantic, unit-suffixed keys.

Every block converts itself to the SI/rad-s types the simulation modules take.
Relative data paths resolve against the scenario file's directory, passed in
as validation context ``base_dir``.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from shbsim.analysis import ResonatorModel
from shbsim.config import (
    B0_T,
    CHECKPOINTS,
    CUTOFF_RADIUS_NM,
    GAMMA1,
    ISOTOPIC_ABUNDANCE,
    JZ_E,
    JZ_G,
    KAPPA_C,
    KAPPA_I,
    LATTICE_A_NM,
    LATTICE_C_NM,
    N_DETUNINGS,
    PRESETS,
    PUMP_DURATION,
    RESET_AMPLITUDE,
    RESET_DWELL,
    RESET_SCANS,
    RESET_SPAN,
    RESET_STEP,
    SCHEMA_VERSION,
    TWO_PI,
)
from shbsim.echo import PulseSpec
from shbsim.errors import ConfigError
from shbsim.holeburn import PumpSpec, ResetSweep
from shbsim.lattice import DEFAULT_OVERRIDES, HyperfineOverride, LatticeParams
from shbsim.spin_model import SpinParams

logger = logging.getLogger(__name__)

KINDS = ("shb", "echo_accumulate", "echo_probe", "reset", "analyze_decay", "fit_line", "fit_s11", "orbach")
STOCHASTIC_KINDS = {"shb", "echo_accumulate", "echo_probe", "reset"}
KHZ = TWO_PI * 1e3
MHZ = TWO_PI * 1e6


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ── Physics ───────────────────────────────────────────────────────────────────

class OverrideBlock(_Block):
    A_kHz: float | None = None
    B_kHz: float | None = None
    A_e_kHz: float | None = None
    A_g_kHz: float | None = None

    def to_override(self) -> HyperfineOverride:
        values = {"A": self.A_kHz, "B": self.B_kHz, "A_e": self.A_e_kHz, "A_g": self.A_g_kHz}
        return HyperfineOverride.from_hz({k: None if v is None else v * 1e3 for k, v in values.items()})


class LatticeBlock(_Block):
    a_nm: float = Field(LATTICE_A_NM, gt=0)
    c_nm: float = Field(LATTICE_C_NM, gt=0)
    cutoff_nm: float = Field(CUTOFF_RADIUS_NM, gt=0)
    abundance: float = Field(ISOTOPIC_ABUNDANCE, gt=0, le=1)
    # None keeps the fitted Type I/II values; {} runs pure dipolar couplings
    overrides: dict[Literal["TypeI", "TypeII", "TypeIII"], OverrideBlock] | None = None

    def to_params(self) -> LatticeParams:
        return LatticeParams(a=self.a_nm, c_len=self.c_nm, cutoff_radius=self.cutoff_nm)

    def to_overrides(self) -> dict[str, HyperfineOverride]:
        if self.overrides is None:
            return dict(DEFAULT_OVERRIDES)
        return {shell: block.to_override() for shell, block in self.overrides.items()}


class PhysicsBlock(_Block):
    b0_mT: tuple[float, float, float] = tuple(1e3 * b for b in B0_T)
    jz_e: float = JZ_E
    jz_g: float = JZ_G
    gamma1_per_s: float = Field(GAMMA1, gt=0)
    t2_ms: float = Field(30.0, gt=0)
    sigma_MHz: float = Field(8.0, gt=0)
    omega0_GHz: float = Field(7.839, gt=0)
    gamma_w_MHz_per_T: float = Field(1.77394, gt=0)
    gamma_parallel_GHz_per_T: float = Field(17.35, gt=0)
    gamma_perp_GHz_per_T: float = Field(117.0, gt=0)

    @field_validator("b0_mT")
    @classmethod
    def _nonzero_field(cls, v):
        if not any(v):
            raise ValueError("static field must be non-zero")
        return v

    def to_params(self) -> SpinParams:
        return SpinParams(
            b0=tuple(x * 1e-3 for x in self.b0_mT),
            gamma_w=self.gamma_w_MHz_per_T * MHZ,
            jz_e=self.jz_e,
            jz_g=self.jz_g,
            omega0=self.omega0_GHz * TWO_PI * 1e9,
            gamma1=self.gamma1_per_s,
            gamma2=1.0 / (self.t2_ms * 1e-3),
            sigma=self.sigma_MHz * MHZ,
            gamma_parallel=self.gamma_parallel_GHz_per_T * TWO_PI * 1e9,
            gamma_perp=self.gamma_perp_GHz_per_T * TWO_PI * 1e9,
        )


# ── Run and I/O ───────────────────────────────────────────────────────────────

class RunBlock(_Block):
    seed: int = Field(ge=0)
    ns: int = Field(6, ge=1, le=12)
    n_configs: int = Field(64, ge=1)
    n_detunings: int = Field(N_DETUNINGS, ge=1)
    distribution: Literal["uniform", "gaussian"] = "uniform"
    checkpoints: tuple[int, ...] = CHECKPOINTS

    @field_validator("checkpoints")
    @classmethod
    def _increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])) or any(c < 0 for c in v):
            raise ValueError("checkpoints must be non-negative and strictly increasing")
        return v


class IoBlock(_Block):
    out_dir: Path | None = None
    formats: tuple[Literal["csv", "json"], ...] = ("csv", "json")


# ── Protocol blocks ───────────────────────────────────────────────────────────

class PumpBlock(_Block):
    offset_kHz: float = 0.0
    amplitude_Hz: float = Field(10.0, ge=0)
    duration_s: float = Field(PUMP_DURATION, gt=0)

    def to_spec(self) -> PumpSpec:
        return PumpSpec(self.offset_kHz * KHZ, self.amplitude_Hz * TWO_PI, self.duration_s)


class GridBlock(_Block):
    start_kHz: float = -150.0
    stop_kHz: float = 150.0
    step_kHz: float = Field(0.5, gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.stop_kHz <= self.start_kHz:
            raise ValueError("grid stop must exceed start")
        return self

    def to_grid(self) -> np.ndarray:
        n = int(round((self.stop_kHz - self.start_kHz) / self.step_kHz)) + 1
        return np.linspace(self.start_kHz, self.stop_kHz, n) * KHZ


class ProbeBlock(_Block):
    hwhm_kHz: float = Field(1.0, gt=0)


class PulseBlock(_Block):
    rabi_MHz: float = Field(0.25, ge=0)
    tp_us: float = Field(1.0, gt=0)
    tau_us: float = Field(100.0, gt=0)
    n_pairs: int = Field(3000, ge=0)
    wait_ms: float = Field(200.0, ge=0)

    def to_spec(self) -> PulseSpec:
        return PulseSpec(
            omega1=self.rabi_MHz * MHZ,
            tp=self.tp_us * 1e-6,
            tau=self.tau_us * 1e-6,
            n_pairs=self.n_pairs,
            wait=self.wait_ms * 1e-3,
        )


class EchoBlock(_Block):
    t_max_us: float = Field(350.0, gt=0)
    t_step_us: float = Field(0.5, gt=0)
    detuning_span_MHz: float = Field(2.0, gt=0)
    detuning_step_kHz: float = Field(1.0, gt=0)
    n_echoes: int = Field(3, ge=1)

    def time_grid(self) -> np.ndarray:
        n = int(round(self.t_max_us / self.t_step_us)) + 1
        return np.linspace(0.0, self.t_max_us, n) * 1e-6


class ResetBlock(_Block):
    span_MHz: float = Field(RESET_SPAN / TWO_PI / 1e6, ge=0)
    step_kHz: float = Field(RESET_STEP / TWO_PI / 1e3, gt=0)
    amplitude_kHz: float = Field(RESET_AMPLITUDE / TWO_PI / 1e3, ge=0)
    dwell_ms: float = Field(RESET_DWELL * 1e3, gt=0)
    n_scans: int = Field(RESET_SCANS, ge=1)

    def to_sweep(self) -> ResetSweep:
        return ResetSweep(
            span=self.span_MHz * MHZ,
            step=self.step_kHz * KHZ,
            omega_p=self.amplitude_kHz * KHZ,
            dwell=self.dwell_ms * 1e-3,
            n_scans=self.n_scans,
        )


class ResonatorBlock(_Block):
    offset_MHz: float = 0.0
    kappa_c_per_s: float = Field(KAPPA_C, gt=0)
    kappa_i_per_s: float = Field(KAPPA_I, gt=0)
    g_ens_MHz: float = Field(0.5, gt=0)
    gamma_h_kHz: float = Field(1.0, ge=0)

    def to_model(self) -> ResonatorModel:
        return ResonatorModel(
            omega0=self.offset_MHz * MHZ,
            kappa_c=self.kappa_c_per_s,
            kappa_i=self.kappa_i_per_s,
            g_ens=self.g_ens_MHz * MHZ,
            gamma_h=self.gamma_h_kHz * KHZ,
        )


class AnalysisBlock(_Block):
    data_file: Path
    reference_file: Path | None = None
    n_terms: int = Field(2, ge=1, le=3)
    reference_terms: int = Field(3, ge=1, le=3)
    weights: Literal["none", "relative"] = "relative"
    resonator: ResonatorBlock = ResonatorBlock()
    # implied B from the Orbach fit, Gamma_1x = Gamma_1 B^2 / (4 omega_I^2)
    omega_i_kHz: float | None = Field(None, gt=0)

    @field_validator("data_file", "reference_file")
    @classmethod
    def _exists(cls, v: Path | None, info: ValidationInfo):
        if v is None:
            return v
        base = Path((info.context or {}).get("base_dir", "."))
        path = v if v.is_absolute() else base / v
        if not path.exists():
            raise ValueError(f"file not found: {path}")
        return path


# ── Scenario ──────────────────────────────────────────────────────────────────

class Scenario(_Block):
    schema_version: Literal[1]
    kind: Literal["shb", "echo_accumulate", "echo_probe", "reset", "analyze_decay", "fit_line", "fit_s11", "orbach"]
    preset: Literal["desk", "full"] | None = None
    physics: PhysicsBlock = PhysicsBlock()
    lattice: LatticeBlock = LatticeBlock()
    run: RunBlock | None = None
    io: IoBlock = IoBlock()
    pump: PumpBlock = PumpBlock()
    grid: GridBlock = GridBlock()
    probe: ProbeBlock = ProbeBlock()
    pulse: PulseBlock = PulseBlock()
    echo: EchoBlock = EchoBlock()
    reset: ResetBlock | None = None
    analysis: AnalysisBlock | None = None

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data: Any):
        if not isinstance(data, dict) or data.get("preset") is None:
            return data
        profile = PRESETS.get(data["preset"])
        if profile is None:
            return data
        data = dict(data)
        run_defaults = {k: v for k, v in profile.items() if k != "n_pairs"}
        data["run"] = {**run_defaults, **(data.get("run") or {})}
        data["pulse"] = {"n_pairs": profile["n_pairs"], **(data.get("pulse") or {})}
        return data

    @model_validator(mode="after")
    def _kind_requirements(self):
        if self.kind in STOCHASTIC_KINDS and self.run is None:
            raise ValueError(f"kind {self.kind!r} needs a run block with a seed")
        if self.kind in {"analyze_decay", "fit_line", "fit_s11", "orbach"} and self.analysis is None:
            raise ValueError(f"kind {self.kind!r} needs an analysis block with data_file")
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    @property
    def seed(self) -> int | None:
        return None if self.run is None else self.run.seed


def schema() -> dict:
    return Scenario.model_json_schema()


def load_scenario(path: Path) -> Scenario:
    """Parse and validate a scenario file; pydantic errors propagate unchanged."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path.name}: invalid JSON ({exc})") from exc
    if isinstance(data, dict) and data.get("schema_version") not in (None, SCHEMA_VERSION):
        raise ConfigError(f"{path.name}: unsupported schema_version {data['schema_version']}")
    return Scenario.model_validate(data, context={"base_dir": path.parent})


def load_lattice_config(path: Path) -> tuple[LatticeParams, dict[str, HyperfineOverride], float]:
    """Lattice block from a standalone JSON file: (params, overrides, abundance)."""
    path = Path(path)
    try:
        block = LatticeBlock.model_validate_json(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"lattice file not found: {path}") from exc
    return block.to_params(), block.to_overrides(), block.abundance
