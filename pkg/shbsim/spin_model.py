"""Electron-branch-conditional nuclear Hamiltonians and their transitions.

Each nucleus l sees, with the electron in branch k in {e, g},

    H_k,l = (omega_I + <Jz>_k A_l) I_z + <Jz>_k B_l I_x

so the bath factorizes: 2x2 diagonalizations per nucleus, product-basis
energies indexed by a little-endian bit-string (bit l = state of nucleus l,
bit 0 = the +omega/2 level of the ground branch), and Jx matrix elements that
are products of single-nucleus overlaps.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as cnst

from shbsim.config import (
    B0_T,
    G_PARALLEL,
    G_PERP,
    GAMMA1,
    GAMMA2,
    GAMMA_PARALLEL,
    GAMMA_PERP,
    GAMMA_W,
    JZ_E,
    JZ_G,
    MAX_NS,
    OMEGA0,
    SIGMA,
    TWO_PI,
)
from shbsim.errors import ConfigError, DegeneracyWarning, DimensionError, SingularityError
from shbsim.lattice import BathConfiguration, NuclearSite

logger = logging.getLogger(__name__)

BRANCHES = ("e", "g")
BASIS_ORDER = "little-endian"
MU_B_OVER_HBAR = cnst.physical_constants["Bohr magneton"][0] / cnst.hbar


@dataclass(frozen=True)
class SpinParams:
    b0: tuple[float, float, float] = B0_T
    g_parallel: float = G_PARALLEL
    g_perp: float = G_PERP
    gamma_w: float = GAMMA_W
    jz_e: float = JZ_E
    jz_g: float = JZ_G
    omega0: float = OMEGA0
    gamma1: float = GAMMA1
    gamma2: float = GAMMA2
    sigma: float = SIGMA
    # measured gyromagnetic ratios; None derives them from the g-factors
    gamma_parallel: float | None = GAMMA_PARALLEL
    gamma_perp: float | None = GAMMA_PERP

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0 or self.sigma <= 0:
            raise ConfigError("gamma1, gamma2 and sigma must be positive")
        if np.linalg.norm(self.b0) == 0:
            raise ConfigError("static field b0 must be non-zero")

    @property
    def gyro_tensor(self) -> np.ndarray:
        g_par = self.gamma_parallel if self.gamma_parallel is not None else self.g_parallel * MU_B_OVER_HBAR
        g_perp = self.gamma_perp if self.gamma_perp is not None else self.g_perp * MU_B_OVER_HBAR
        return np.diag([g_perp, g_perp, g_par])

    @property
    def field_direction(self) -> np.ndarray:
        b = np.asarray(self.b0, dtype=float)
        return b / np.linalg.norm(b)

    @property
    def omega_i(self) -> float:
        return self.gamma_w * float(np.linalg.norm(self.b0))

    def jz(self, branch: str) -> float:
        if branch not in BRANCHES:
            raise ConfigError(f"branch must be 'e' or 'g', got {branch!r}")
        return self.jz_e if branch == "e" else self.jz_g


@dataclass(frozen=True)
class NuclearEigen:
    """Branch-resolved eigendata of one nucleus, paired by maximum overlap."""

    omega_e: float
    omega_g: float
    rotation_e: np.ndarray     # columns: bit-0 state, bit-1 state
    rotation_g: np.ndarray
    sign_e: float              # bit-0 energy of branch e is sign_e * omega_e / 2
    mixing_e: float
    mixing_g: float
    degenerate: bool = False

    @property
    def overlap(self) -> np.ndarray:
        """O[b_e, b_g] = <b_e|b_g> between single-nucleus states."""
        return self.rotation_e.T @ self.rotation_g

    @property
    def lam(self) -> float:
        return float(self.overlap[0, 0] ** 2)

    @property
    def xi(self) -> float:
        return 1.0 - self.lam


@dataclass(frozen=True)
class ConditionalEigenSystem:
    per_nucleus: tuple[NuclearEigen, ...]
    energies_e: np.ndarray
    energies_g: np.ndarray
    basis_order: str = BASIS_ORDER

    @property
    def ns(self) -> int:
        return len(self.per_nucleus)

    @property
    def n_states(self) -> int:
        return 1 << self.ns

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([n.lam for n in self.per_nucleus])

    @property
    def xis(self) -> np.ndarray:
        return np.array([n.xi for n in self.per_nucleus])


@dataclass(frozen=True)
class TransitionTable:
    """<e_i|Jx|g_j> restricted to at most one nuclear flip.

    Entries are grouped per excited index i: the zero-flip entry first, then
    one flip on nucleus 0, 1, ... Ns-1.
    """

    e_index: np.ndarray
    g_index: np.ndarray
    elements: np.ndarray
    delta_energies: np.ndarray
    n_flips: np.ndarray
    ns: int = field(default=0)

    @property
    def n_states(self) -> int:
        return 1 << self.ns

    @property
    def zero_flip(self) -> np.ndarray:
        return self.n_flips == 0


# ── Single-spin quantities ────────────────────────────────────────────────────

def electronic_frequency(params: SpinParams) -> float:
    """Electron spin splitting |gamma . B0| in rad/s."""
    b = np.asarray(params.b0, dtype=float)
    if np.linalg.norm(b) == 0:
        raise ConfigError("static field b0 must be non-zero")
    return float(np.linalg.norm(params.gyro_tensor @ b))


def _branch_terms(site: NuclearSite, params: SpinParams, branch: str) -> tuple[float, float]:
    jz = params.jz(branch)
    a = params.omega_i + jz * site.isotropic(branch)
    b = jz * (site.B or 0.0)
    return a, b


def _rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi / 2), math.sin(phi / 2)
    return np.array([[c, -s], [s, c]])


def conditional_frequencies(site: NuclearSite, params: SpinParams, branch: str) -> tuple[float, np.ndarray]:
    """Splitting omega_k and eigenbasis (columns +omega/2, -omega/2) of one nucleus."""
    a, b = _branch_terms(site, params, branch)
    omega = math.hypot(a, b)
    if omega == 0.0:
        warnings.warn(
            f"zero nuclear splitting in branch {branch}; using the B -> 0+ eigenbasis",
            DegeneracyWarning,
            stacklevel=2,
        )
        jz = params.jz(branch)
        return 0.0, _rotation(math.copysign(math.pi / 2, jz) if jz else math.pi / 2)
    return omega, _rotation(math.atan2(b, a))


def mixing_angle(site: NuclearSite, params: SpinParams, branch: str) -> float:
    """eta = <Jz>_k B / (omega_I + <Jz>_k A)."""
    a, b = _branch_terms(site, params, branch)
    if a == 0.0:
        raise SingularityError("mixing angle undefined when omega_I + <Jz> A = 0")
    return b / a


def cross_relaxation_rate(gamma1: float, B: float, omega_I: float) -> float:
    """Electron relaxation with one nuclear flip, Gamma_1 B^2 / (4 omega_I^2)."""
    if omega_I == 0:
        raise SingularityError("cross-relaxation rate needs omega_I != 0")
    return gamma1 * B**2 / (4.0 * omega_I**2)


# ── Product basis ─────────────────────────────────────────────────────────────

def bit_table(ns: int) -> np.ndarray:
    """bits[j, l] = state of nucleus l in product index j."""
    return (np.arange(1 << ns)[:, None] >> np.arange(ns)[None, :]) & 1


def _pair_nucleus(site: NuclearSite, params: SpinParams) -> NuclearEigen:
    omega_g, rot_g = conditional_frequencies(site, params, "g")
    omega_e, rot_e = conditional_frequencies(site, params, "e")
    sign_e = 1.0
    if abs(rot_e[:, 1] @ rot_g[:, 0]) > abs(rot_e[:, 0] @ rot_g[:, 0]):
        rot_e = rot_e[:, ::-1].copy()
        sign_e = -1.0
    a_e, b_e = _branch_terms(site, params, "e")
    a_g, b_g = _branch_terms(site, params, "g")
    return NuclearEigen(
        omega_e=omega_e,
        omega_g=omega_g,
        rotation_e=rot_e,
        rotation_g=rot_g,
        sign_e=sign_e,
        mixing_e=b_e / a_e if a_e else math.inf,
        mixing_g=b_g / a_g if a_g else math.inf,
        degenerate=(omega_e == 0.0 or omega_g == 0.0),
    )


def build_eigensystem(bath: BathConfiguration, params: SpinParams) -> ConditionalEigenSystem:
    """Factorized energies eps_k[j] = sum_l (+-omega_k,l / 2), detunings from omega0."""
    if bath.ns > MAX_NS:
        raise DimensionError(f"Ns = {bath.ns} exceeds the dimension guard {MAX_NS}")
    nuclei = tuple(_pair_nucleus(site, params) for site in bath.sites)
    signs = 1 - 2 * bit_table(bath.ns)
    half_e = np.array([n.sign_e * n.omega_e / 2 for n in nuclei])
    half_g = np.array([n.omega_g / 2 for n in nuclei])
    return ConditionalEigenSystem(
        per_nucleus=nuclei,
        energies_e=signs @ half_e,
        energies_g=signs @ half_g,
    )


def transition_elements(eigensystem: ConditionalEigenSystem) -> TransitionTable:
    """Zero- and one-flip <e_i|Jx|g_j>, normalized to 1/2 without nuclear mixing."""
    ns = eigensystem.ns
    n = eigensystem.n_states
    bits = bit_table(ns)
    overlaps = np.array([nuc.overlap for nuc in eigensystem.per_nucleus])   # (ns, 2, 2)
    cols = np.arange(ns)

    diag = overlaps[cols, bits, bits]                 # (n, ns)
    cross = overlaps[cols, bits, 1 - bits]
    total = np.prod(diag, axis=1)

    e_index = np.repeat(np.arange(n), ns + 1)
    g_index = np.empty((n, ns + 1), dtype=np.int64)
    g_index[:, 0] = np.arange(n)
    g_index[:, 1:] = np.arange(n)[:, None] ^ (1 << cols)[None, :]
    elements = np.empty((n, ns + 1))
    elements[:, 0] = 0.5 * total
    # |diag| >= 1/sqrt(2) after maximum-overlap pairing
    elements[:, 1:] = 0.5 * total[:, None] / diag * cross
    n_flips = np.zeros((n, ns + 1), dtype=np.int64)
    n_flips[:, 1:] = 1

    g_index = g_index.ravel()
    return TransitionTable(
        e_index=e_index,
        g_index=g_index,
        elements=elements.ravel(),
        delta_energies=eigensystem.energies_e[e_index] - eigensystem.energies_g[g_index],
        n_flips=n_flips.ravel(),
        ns=ns,
    )


# ── Dense references and dumps ────────────────────────────────────────────────

def dense_hamiltonians(bath: BathConfiguration, params: SpinParams) -> tuple[np.ndarray, np.ndarray]:
    """Full 2^Ns conditional Hamiltonians (H_e, H_g) in the little-endian product basis."""
    sz = np.diag([0.5, -0.5])
    sx = np.array([[0.0, 0.5], [0.5, 0.0]])
    out = []
    for branch in BRANCHES:
        dim = 1 << bath.ns
        h = np.zeros((dim, dim))
        for l, site in enumerate(bath.sites):
            a, b = _branch_terms(site, params, branch)
            local = a * sz + b * sx
            op = np.array([[1.0]])
            for m in reversed(range(bath.ns)):
                op = np.kron(op, local if m == l else np.eye(2))
            h += op
        out.append(h)
    return out[0], out[1]


def eigensystem_to_dict(eigensystem: ConditionalEigenSystem) -> dict:
    return {
        "basis_order": eigensystem.basis_order,
        "nuclei": [
            {
                "omega_e_Hz": n.omega_e / TWO_PI,
                "omega_g_Hz": n.omega_g / TWO_PI,
                "lambda": n.lam,
                "xi": n.xi,
                "sign_e": n.sign_e,
                "degenerate": n.degenerate,
            }
            for n in eigensystem.per_nucleus
        ],
        "energies_e_Hz": (eigensystem.energies_e / TWO_PI).tolist(),
        "energies_g_Hz": (eigensystem.energies_g / TWO_PI).tolist(),
    }


def transition_table_to_dict(table: TransitionTable) -> dict:
    return {
        "ns": table.ns,
        "entries": [
            {"i": int(i), "j": int(j), "element": float(m), "delta_Hz": float(d / TWO_PI), "flips": int(f)}
            for i, j, m, d, f in zip(
                table.e_index, table.g_index, table.elements, table.delta_energies, table.n_flips
            )
        ],
    }
