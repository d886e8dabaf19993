"""W-site geometry around a substitutional Er3+ in scheelite and its 183W baths.

Produces geometry-only ``NuclearSite`` lists, dipolar hyperfine couplings
(A, B) in the frame of the static field, fitted per-shell overrides and
seeded random bath configurations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import constants as cnst

from shbsim.config import (
    CUTOFF_GROWTH,
    CUTOFF_RADIUS_NM,
    ER_SITE,
    FITTED_OVERRIDES_HZ,
    G_ELECTRON_DIPOLAR,
    GAMMA_W,
    ISOTOPIC_ABUNDANCE,
    LATTICE_A_NM,
    LATTICE_C_NM,
    MAX_NS,
    SAMPLE_RETRIES,
    SHELL_RADII_NM,
    SHELL_TOLERANCE_NM,
    TWO_PI,
    W_FRACTIONAL_POSITIONS,
)
from shbsim.errors import ConfigError, DegenerateInputError, DimensionError, SingularityError

logger = logging.getLogger(__name__)

NM = 1e-9


class Shell(str, Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"
    TYPE_III = "TypeIII"
    OTHER = "Other"


# ── Parameter types ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class LatticeParams:
    a: float = LATTICE_A_NM
    c_len: float = LATTICE_C_NM
    w_fractional_positions: tuple[tuple[float, float, float], ...] = W_FRACTIONAL_POSITIONS
    er_site: tuple[float, float, float] = ER_SITE
    cutoff_radius: float = CUTOFF_RADIUS_NM

    def __post_init__(self):
        if self.a <= 0 or self.c_len <= 0:
            raise ConfigError(f"lattice constants must be positive, got a={self.a}, c={self.c_len}")
        if self.cutoff_radius <= 0:
            raise ConfigError(f"cutoff_radius must be positive, got {self.cutoff_radius}")
        for frac in (*self.w_fractional_positions, self.er_site):
            if len(frac) != 3 or not all(0.0 <= f < 1.0 for f in frac):
                raise ConfigError(f"fractional coordinate outside [0, 1): {frac}")

    @property
    def cell_lengths(self) -> np.ndarray:
        return np.array([self.a, self.a, self.c_len])


@dataclass(frozen=True)
class NuclearSite:
    """One 183W position relative to the Er3+ ion.

    ``A`` and ``B`` are angular frequencies; ``None`` until couplings are
    computed. ``branch_override`` holds signed (A_e, A_g) for shells whose
    isotropic coupling depends on the electron state.
    """

    displacement: tuple[float, float, float]   # nm
    distance: float                             # nm
    shell: Shell
    A: float | None = None
    B: float | None = None
    branch_override: tuple[float, float] | None = None

    def __post_init__(self):
        if self.B is not None and self.B < 0:
            raise ConfigError(f"B must be non-negative, got {self.B}")

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.displacement, dtype=float)

    def isotropic(self, branch: str) -> float:
        """Isotropic coupling seen by the nucleus in electron branch ``e`` or ``g``."""
        if self.A is None:
            raise ConfigError("site couplings are unset")
        if self.branch_override is None:
            return self.A
        return self.branch_override[0] if branch == "e" else self.branch_override[1]

    @property
    def strength(self) -> float:
        a_max = max(abs(self.isotropic("e")), abs(self.isotropic("g")))
        return math.hypot(a_max, self.B or 0.0)


@dataclass(frozen=True)
class BathConfiguration:
    sites: tuple[NuclearSite, ...]
    seed: int
    isotopic_abundance: float = ISOTOPIC_ABUNDANCE

    def __post_init__(self):
        if not 1 <= len(self.sites) <= MAX_NS:
            raise DimensionError(f"bath size {len(self.sites)} outside 1..{MAX_NS}")
        keys = {tuple(np.round(s.position, 9)) for s in self.sites}
        if len(keys) != len(self.sites):
            raise ConfigError("bath sites must occupy distinct positions")

    @property
    def ns(self) -> int:
        return len(self.sites)


@dataclass(frozen=True)
class DipolarConstants:
    mu0: float = cnst.mu_0
    g_e: float = G_ELECTRON_DIPOLAR
    mu_b: float = cnst.physical_constants["Bohr magneton"][0]
    g_n: float = GAMMA_W * cnst.hbar / cnst.physical_constants["nuclear magneton"][0]
    mu_n: float = cnst.physical_constants["nuclear magneton"][0]

    @property
    def prefactor(self) -> float:
        """mu0/(4 pi) g_e mu_B g_n mu_n / hbar, in rad/s * m^3."""
        return self.mu0 / (4 * np.pi) * self.g_e * self.mu_b * self.g_n * self.mu_n / cnst.hbar


@dataclass(frozen=True)
class HyperfineOverride:
    """Fitted magnitudes (rad/s) replacing dipolar values for one shell."""

    A: float | None = None
    B: float | None = None
    A_e: float | None = None
    A_g: float | None = None

    def __post_init__(self):
        if (self.A_e is None) != (self.A_g is None):
            raise ConfigError("branch overrides need both A_e and A_g")

    @classmethod
    def from_hz(cls, values: dict[str, float | None]) -> "HyperfineOverride":
        return cls(**{k: (None if v is None else TWO_PI * v) for k, v in values.items()})


DEFAULT_OVERRIDES = {
    shell: HyperfineOverride.from_hz(values) for shell, values in FITTED_OVERRIDES_HZ.items()
}


# ── Geometry ──────────────────────────────────────────────────────────────────

def classify_shell(distance: float) -> Shell:
    for label, radius in SHELL_RADII_NM.items():
        if abs(distance - radius) <= SHELL_TOLERANCE_NM:
            return Shell(label)
    return Shell.OTHER


def enumerate_w_sites(params: LatticeParams) -> list[NuclearSite]:
    """Every W position within ``cutoff_radius`` of the Er site, nearest first."""
    lengths = params.cell_lengths
    reach = np.ceil(params.cutoff_radius / lengths).astype(int) + 1
    er = np.asarray(params.er_site)
    fracs = np.asarray(params.w_fractional_positions)

    ranges = [np.arange(-n, n + 1) for n in reach]
    cells = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, 3)
    offsets = (cells[:, None, :] + fracs[None, :, :] - er).reshape(-1, 3) * lengths
    distances = np.linalg.norm(offsets, axis=1)
    keep = (distances > 0) & (distances <= params.cutoff_radius)
    offsets, distances = offsets[keep], distances[keep]

    rounded = np.round(offsets, 9)
    order = np.lexsort((rounded[:, 2], rounded[:, 1], rounded[:, 0], np.round(distances, 9)))
    sites = [
        NuclearSite(
            displacement=tuple(float(v) for v in offsets[k]),
            distance=float(distances[k]),
            shell=classify_shell(float(distances[k])),
        )
        for k in order
    ]
    if not sites:
        raise DegenerateInputError(
            f"no W site within cutoff {params.cutoff_radius} nm "
            f"(nearest shell at {min(SHELL_RADII_NM.values())} nm)"
        )
    return sites


def field_direction(b0) -> np.ndarray:
    b = np.asarray(b0, dtype=float)
    norm = np.linalg.norm(b)
    if norm == 0:
        raise ConfigError("static field must be non-zero")
    return b / norm


def _field_frame(direction: np.ndarray) -> np.ndarray:
    """Rows are x', y', z' with z' along ``direction``."""
    z = direction
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = helper - helper.dot(z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def dipolar_tensor(displacement_nm, constants: DipolarConstants | None = None) -> np.ndarray:
    constants = constants or DipolarConstants()
    r = np.asarray(displacement_nm, dtype=float) * NM
    dist = np.linalg.norm(r)
    if dist == 0:
        raise SingularityError("dipolar coupling at zero distance")
    rhat = r / dist
    return constants.prefactor / dist**3 * (np.eye(3) - 3.0 * np.outer(rhat, rhat))


def dipolar_hyperfine(
    site: NuclearSite,
    direction=(0.0, 0.0, 1.0),
    constants: DipolarConstants | None = None,
) -> tuple[float, float]:
    """(A, B) = (A_zz, sqrt(A_xz^2 + A_yz^2)) in the frame where z follows the field."""
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ConfigError(f"field direction must be a unit vector, got {direction}")
    if site.distance <= 0:
        raise SingularityError("dipolar coupling at zero distance")
    frame = _field_frame(direction)
    rotated = frame @ dipolar_tensor(site.displacement, constants) @ frame.T
    return float(rotated[2, 2]), float(math.hypot(rotated[0, 2], rotated[1, 2]))


def with_dipolar_couplings(
    sites: list[NuclearSite],
    direction=(0.0, 0.0, 1.0),
    constants: DipolarConstants | None = None,
) -> list[NuclearSite]:
    out = []
    for site in sites:
        a, b = dipolar_hyperfine(site, direction, constants)
        out.append(replace(site, A=a, B=b))
    return out


def apply_fitted_overrides(
    sites: list[NuclearSite],
    override_table: dict[str, HyperfineOverride],
) -> list[NuclearSite]:
    """Replace coupling magnitudes shell by shell, keeping each site's dipolar sign."""
    known = {s.value for s in Shell}
    unknown = set(override_table) - known
    if unknown:
        raise ConfigError(f"override for unknown shell(s): {sorted(unknown)}")

    out = []
    for site in sites:
        override = override_table.get(site.shell.value)
        if override is None:
            out.append(site)
            continue
        sign = -1.0 if (site.A or 0.0) < 0 else 1.0
        changes: dict = {}
        if override.A is not None:
            changes["A"] = sign * override.A
        if override.B is not None:
            changes["B"] = override.B
        if override.A_e is not None:
            changes["branch_override"] = (sign * override.A_e, sign * override.A_g)
            changes["A"] = sign * override.A_g
        out.append(replace(site, **changes))
    return out


# ── Bath sampling ─────────────────────────────────────────────────────────────

def draw_occupation(rng: np.random.Generator, n_sites: int, abundance: float) -> np.ndarray:
    return rng.random(n_sites) < abundance


def sample_bath(
    params: LatticeParams,
    rng_seed: int,
    ns_target: int,
    *,
    abundance: float = ISOTOPIC_ABUNDANCE,
    direction=(0.0, 0.0, 1.0),
    overrides: dict[str, HyperfineOverride] | None = None,
    constants: DipolarConstants | None = None,
) -> BathConfiguration:
    """Occupy sites with probability ``abundance`` and keep the ``ns_target`` strongest.

    When too few sites are occupied the cutoff grows by ``CUTOFF_GROWTH``; the
    generator is re-seeded each attempt, so nearer sites keep their draws.
    """
    if not 1 <= ns_target <= MAX_NS:
        raise DimensionError(f"ns_target {ns_target} outside 1..{MAX_NS}")
    if not 0.0 < abundance <= 1.0:
        raise ConfigError(f"abundance must lie in (0, 1], got {abundance}")
    overrides = DEFAULT_OVERRIDES if overrides is None else overrides

    current = params
    for attempt in range(SAMPLE_RETRIES + 1):
        sites = enumerate_w_sites(current)
        rng = np.random.default_rng(rng_seed)
        occupied = [s for s, hit in zip(sites, draw_occupation(rng, len(sites), abundance)) if hit]
        if len(occupied) >= ns_target:
            break
        logger.debug(
            "seed %d: %d occupied sites within %.3f nm, need %d",
            rng_seed, len(occupied), current.cutoff_radius, ns_target,
        )
        current = replace(current, cutoff_radius=current.cutoff_radius * CUTOFF_GROWTH)
    else:
        raise DegenerateInputError(
            f"fewer than {ns_target} occupied sites after {SAMPLE_RETRIES} cutoff enlargements"
        )

    coupled = apply_fitted_overrides(with_dipolar_couplings(occupied, direction, constants), overrides)
    strengths = np.array([s.strength for s in coupled])
    chosen = np.argsort(-strengths, kind="stable")[:ns_target]
    return BathConfiguration(
        sites=tuple(coupled[k] for k in chosen),
        seed=int(rng_seed),
        isotopic_abundance=abundance,
    )


# ── I/O ───────────────────────────────────────────────────────────────────────

def sites_frame(sites) -> pd.DataFrame:
    rows = []
    for s in sites:
        x, y, z = s.displacement
        rows.append({
            "x_nm": x,
            "y_nm": y,
            "z_nm": z,
            "r_nm": s.distance,
            "shell": s.shell.value,
            "A_Hz": np.nan if s.A is None else s.A / TWO_PI,
            "B_Hz": np.nan if s.B is None else s.B / TWO_PI,
        })
    return pd.DataFrame(rows, columns=["x_nm", "y_nm", "z_nm", "r_nm", "shell", "A_Hz", "B_Hz"])


def write_site_csv(sites, path: Path) -> Path:
    path = Path(path)
    sites_frame(sites).to_csv(path, index=False, float_format="%.12g")
    return path
