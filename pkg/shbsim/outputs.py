"""Result files: figure-ready CSV, JSON reports and a run manifest.

A run is staged in a hidden directory inside ``out_dir`` and moved into place
only once every file is written, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import shutil
import tempfile
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd

from shbsim.config import SCHEMA_VERSION, TWO_PI
from shbsim.errors import ConfigError

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FLOAT_FORMAT = "%.12g"
PACKAGE = "erbium-shb"
VERSIONED = ("numpy", "scipy", "pandas", "lmfit", "pydantic")


# ── Frames ────────────────────────────────────────────────────────────────────

def spectrum_frame(spectrum) -> pd.DataFrame:
    return pd.DataFrame({
        "detuning_Hz": spectrum.freq_grid / TWO_PI,
        "ratio": spectrum.values,
        "rho1": spectrum.rho1 if spectrum.rho1 is not None else np.nan,
        "rho0": spectrum.rho0 if spectrum.rho0 is not None else np.nan,
    })


def echo_frame(trace) -> pd.DataFrame:
    return pd.DataFrame({
        "t_s": trace.time_grid,
        "re": trace.amplitude.real,
        "im": trace.amplitude.imag,
        "abs": np.abs(trace.amplitude),
    })


# ── Writing ───────────────────────────────────────────────────────────────────

def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for name in (PACKAGE, *VERSIONED):
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = "unknown"
    return out


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(_to_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_run(
    out_dir: Path,
    scenario,
    tables: dict[str, pd.DataFrame],
    reports: dict[str, dict] | None = None,
    formats=("csv", "json"),
) -> dict:
    """Stage tables and reports, add a manifest, then move everything into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        written = []
        if "csv" in formats:
            for name, frame in sorted(tables.items()):
                _write_csv(frame, staging / f"{name}.csv")
                written.append(f"{name}.csv")
        if "json" in formats:
            for name, payload in sorted((reports or {}).items()):
                _write_json(payload, staging / f"{name}.json")
                written.append(f"{name}.json")

        config = scenario.canonical_json()
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "kind": scenario.kind,
            "seed": scenario.seed,
            "config": json.loads(config),
            "config_sha256": sha256_bytes(config.encode()),
            "versions": _versions(),
            "outputs": {name: sha256_bytes((staging / name).read_bytes()) for name in sorted(written)},
        }
        _write_json(manifest, staging / MANIFEST)

        # a manifest in out_dir always describes complete outputs: drop the old one, land it last
        (out_dir / MANIFEST).unlink(missing_ok=True)
        for name in written:
            os.replace(staging / name, out_dir / name)
        os.replace(staging / MANIFEST, out_dir / MANIFEST)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    logger.info("wrote %d files to %s", len(manifest["outputs"]) + 1, out_dir)
    return manifest


# ── Comparison ────────────────────────────────────────────────────────────────

def load_manifest(run_dir: Path) -> dict:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise ConfigError(f"no manifest in {run_dir}")
    return json.loads(path.read_text())


def compare_runs(run_a: Path, run_b: Path, rtol: float = 0.0, atol: float = 0.0) -> dict:
    """Max absolute and relative deviation per CSV column between two runs."""
    man_a, man_b = load_manifest(run_a), load_manifest(run_b)
    files_a = {n for n in man_a["outputs"] if n.endswith(".csv")}
    files_b = {n for n in man_b["outputs"] if n.endswith(".csv")}
    report = {"files": {}, "missing": sorted(files_a ^ files_b), "within_tolerance": files_a == files_b}

    for name in sorted(files_a & files_b):
        a = pd.read_csv(Path(run_a) / name)
        b = pd.read_csv(Path(run_b) / name)
        if list(a.columns) != list(b.columns) or len(a) != len(b):
            report["files"][name] = {"error": "shape or columns differ"}
            report["within_tolerance"] = False
            continue
        columns = {}
        for col in a.columns:
            if not (pd.api.types.is_numeric_dtype(a[col]) and pd.api.types.is_numeric_dtype(b[col])):
                same = bool((a[col].astype(str) == b[col].astype(str)).all())
                columns[col] = {"equal": same}
                report["within_tolerance"] &= same
                continue
            x, y = a[col].to_numpy(float), b[col].to_numpy(float)
            diff = np.abs(x - y)
            diff[np.isnan(x) & np.isnan(y)] = 0.0
            scale = np.maximum(np.abs(x), np.abs(y))
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(diff == 0, 0.0, diff / scale)
            ok = bool(np.all(diff <= atol + rtol * scale))
            columns[col] = {"max_abs": float(np.max(diff, initial=0.0)), "max_rel": float(np.max(rel, initial=0.0)), "ok": ok}
            report["within_tolerance"] &= ok
        report["files"][name] = columns
    return report
