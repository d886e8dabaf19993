from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from shbsim.config import TWO_PI
from shbsim.errors import ConfigError, DegenerateInputError, DimensionError, SingularityError
from shbsim.lattice import (
    DEFAULT_OVERRIDES,
    HyperfineOverride,
    LatticeParams,
    Shell,
    apply_fitted_overrides,
    classify_shell,
    dipolar_hyperfine,
    dipolar_tensor,
    draw_occupation,
    enumerate_w_sites,
    sample_bath,
    with_dipolar_couplings,
    write_site_csv,
)

KHZ = TWO_PI * 1e3


def _shell_sites(shell: Shell):
    sites = enumerate_w_sites(LatticeParams(cutoff_radius=0.6))
    return [s for s in sites if s.shell is shell]


# ── Geometry ──────────────────────────────────────────────────────────────────

def test_nearest_shells_match_scheelite_geometry():
    sites = enumerate_w_sites(LatticeParams(cutoff_radius=0.6))
    assert len(sites) == 10
    counts = {shell: sum(s.shell is shell for s in sites) for shell in Shell}
    assert counts[Shell.TYPE_I] == 4
    assert counts[Shell.TYPE_II] == 4
    assert counts[Shell.TYPE_III] == 2
    assert counts[Shell.OTHER] == 0


def test_sites_sorted_by_distance():
    sites = enumerate_w_sites(LatticeParams(cutoff_radius=1.2))
    distances = [s.distance for s in sites]
    assert distances == sorted(distances)
    assert distances[0] == pytest.approx(0.3707, abs=1e-3)


def test_cutoff_below_nearest_shell_raises():
    with pytest.raises(DegenerateInputError):
        enumerate_w_sites(LatticeParams(cutoff_radius=0.3))


def test_classify_shell_band():
    assert classify_shell(0.3707) is Shell.TYPE_I
    assert classify_shell(0.3867 + 0.0009) is Shell.TYPE_II
    assert classify_shell(0.5687 - 0.0011) is Shell.OTHER


def test_invalid_lattice_params():
    with pytest.raises(ConfigError):
        LatticeParams(a=-1.0)
    with pytest.raises(ConfigError):
        LatticeParams(cutoff_radius=0.0)


# ── Dipolar couplings ─────────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "shell, a_khz, b_khz",
    [
        (Shell.TYPE_I, 38.74, None),
        (Shell.TYPE_II, -21.2, 51.0),
        (Shell.TYPE_III, -21.5, None),
    ],
)
def test_dipolar_couplings_reproduce_shell_values(shell, a_khz, b_khz):
    for site in _shell_sites(shell):
        a, b = dipolar_hyperfine(site, (0.0, 0.0, 1.0))
        assert a / KHZ == pytest.approx(a_khz, rel=0.02)
        if b_khz is not None:
            assert b / KHZ == pytest.approx(b_khz, rel=0.02)


def test_dipolar_tensor_is_traceless_and_symmetric():
    t = dipolar_tensor((0.3, -0.2, 0.5))
    assert np.trace(t) == pytest.approx(0.0, abs=1e-9 * np.abs(t).max())
    np.testing.assert_allclose(t, t.T)


def test_dipolar_tensor_falls_off_as_inverse_cube():
    r = np.array([0.3, -0.2, 0.5])
    np.testing.assert_allclose(dipolar_tensor(2 * r), dipolar_tensor(r) / 8, rtol=1e-12)
    np.testing.assert_allclose(dipolar_tensor(0.5 * r), 8 * dipolar_tensor(r), rtol=1e-12)


def test_dipolar_zero_distance_raises():
    with pytest.raises(SingularityError):
        dipolar_tensor((0.0, 0.0, 0.0))


def test_dipolar_rejects_non_unit_direction():
    site = _shell_sites(Shell.TYPE_I)[0]
    with pytest.raises(ConfigError):
        dipolar_hyperfine(site, (0.0, 0.0, 2.0))


# ── Fitted overrides ──────────────────────────────────────────────────────────

def test_overrides_keep_dipolar_sign():
    sites = with_dipolar_couplings(enumerate_w_sites(LatticeParams(cutoff_radius=0.6)))
    fitted = apply_fitted_overrides(sites, DEFAULT_OVERRIDES)
    for site in fitted:
        if site.shell is Shell.TYPE_II:
            assert site.A / KHZ == pytest.approx(-14.8)
            assert site.B / KHZ == pytest.approx(35.7)
        elif site.shell is Shell.TYPE_I:
            e, g = site.branch_override
            assert e / KHZ == pytest.approx(73.0)
            assert g / KHZ == pytest.approx(23.0)
            assert site.isotropic("e") == e
            assert site.B == 0.0
        else:
            assert site.branch_override is None


def test_empty_override_table_leaves_dipolar_values():
    sites = with_dipolar_couplings(enumerate_w_sites(LatticeParams(cutoff_radius=0.6)))
    assert apply_fitted_overrides(sites, {}) == sites


def test_unknown_override_shell_raises():
    sites = with_dipolar_couplings(enumerate_w_sites(LatticeParams(cutoff_radius=0.6)))
    with pytest.raises(ConfigError):
        apply_fitted_overrides(sites, {"TypeIV": HyperfineOverride(A=1.0)})


def test_branch_override_needs_both_values():
    with pytest.raises(ConfigError):
        HyperfineOverride(A_e=1.0)


# ── Sampling ──────────────────────────────────────────────────────────────────

def test_sample_bath_is_deterministic():
    a = sample_bath(LatticeParams(), 7, 6)
    b = sample_bath(LatticeParams(), 7, 6)
    assert a == b
    assert a.ns == 6


def test_sample_bath_keeps_strongest_sites():
    bath = sample_bath(LatticeParams(), 11, 5)
    strengths = [s.strength for s in bath.sites]
    assert strengths == sorted(strengths, reverse=True)


def test_sample_bath_grows_cutoff_when_sparse():
    bath = sample_bath(LatticeParams(cutoff_radius=0.4), 3, 4)
    assert bath.ns == 4
    assert max(s.distance for s in bath.sites) > 0.4


def test_full_abundance_occupies_first_shells():
    bath = sample_bath(LatticeParams(cutoff_radius=0.40), 5, 8, abundance=1.0)
    assert bath.ns == 8
    shells = [s.shell for s in bath.sites]
    assert shells.count(Shell.TYPE_I) == 4
    assert shells.count(Shell.TYPE_II) == 4


def test_occupation_is_binomial():
    counts = np.array([draw_occupation(np.random.default_rng(s), 10, 0.145).sum() for s in range(10_000)])
    sigma = np.sqrt(10 * 0.145 * 0.855 / counts.size)
    assert counts.mean() == pytest.approx(1.45, abs=4 * sigma)
    assert counts.var() == pytest.approx(10 * 0.145 * 0.855, rel=0.1)


def test_sample_bath_dimension_guard():
    with pytest.raises(DimensionError):
        sample_bath(LatticeParams(), 1, 13)


def test_sample_bath_rejects_bad_abundance():
    with pytest.raises(ConfigError):
        sample_bath(LatticeParams(), 1, 3, abundance=0.0)


def test_write_site_csv(tmp_path):
    sites = with_dipolar_couplings(enumerate_w_sites(LatticeParams(cutoff_radius=0.6)))
    path = write_site_csv(sites, tmp_path / "sites.csv")
    df = pd.read_csv(path)
    assert list(df.columns) == ["x_nm", "y_nm", "z_nm", "r_nm", "shell", "A_Hz", "B_Hz"]
    assert len(df) == 10
    assert set(df["shell"]) == {"TypeI", "TypeII", "TypeIII"}
