from __future__ import annotations

import numpy as np
import pytest

from shbsim.config import GAMMA_W, TWO_PI
from shbsim.lattice import BathConfiguration, NuclearSite, Shell
from shbsim.spin_model import SpinParams

KHZ = TWO_PI * 1e3


def make_site(
    A_kHz: float,
    B_kHz: float,
    *,
    x_nm: float = 0.7,
    shell: Shell = Shell.OTHER,
    branch_kHz: tuple[float, float] | None = None,
) -> NuclearSite:
    return NuclearSite(
        displacement=(x_nm, 0.0, 0.0),
        distance=x_nm,
        shell=shell,
        A=A_kHz * KHZ,
        B=B_kHz * KHZ,
        branch_override=None if branch_kHz is None else (branch_kHz[0] * KHZ, branch_kHz[1] * KHZ),
    )


def make_bath(*sites: NuclearSite, seed: int = 0) -> BathConfiguration:
    spaced = [
        NuclearSite(
            displacement=(0.7 + 0.1 * k, 0.0, 0.0),
            distance=0.7 + 0.1 * k,
            shell=s.shell,
            A=s.A,
            B=s.B,
            branch_override=s.branch_override,
        )
        for k, s in enumerate(sites)
    ]
    return BathConfiguration(sites=tuple(spaced), seed=seed)


def field_for_larmor(larmor_hz: float) -> tuple[float, float, float]:
    """Static field along c giving a 183W Larmor frequency of ``larmor_hz``."""
    return (0.0, 0.0, TWO_PI * larmor_hz / GAMMA_W)


@pytest.fixture
def spin() -> SpinParams:
    return SpinParams()


@pytest.fixture
def weak_field_spin() -> SpinParams:
    """omega_I / 2 pi = 100 kHz so nuclear mixing is strong."""
    return SpinParams(b0=field_for_larmor(100e3))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
