import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from kspec.models import ContractError
from kspec.spectra import (
    DensityCurve,
    EmpiricalSpectrum,
    MatrixKind,
    NormalizationError,
    SpectrumSource,
    check_normalized,
    eigenvalues_sym,
    histogram,
    ks_distance,
    levy_distance,
    levy_grid,
    read_curve_csv,
    spectrum_levy_distance,
    write_atoms_csv,
    write_curve_csv,
    write_histogram_csv,
)


def uniform_curve(points=2001):
    g = np.linspace(0.0, 1.0, points)
    return DensityCurve(g, np.ones_like(g))


def test_eigenvalues_sorted_and_symmetry_checked():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(eigenvalues_sym(m), [1.0, 3.0])
    with pytest.raises(ContractError):
        eigenvalues_sym(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_kendall_invariants_enforced():
    src = SpectrumSource(MatrixKind.KENDALL, 10, 2)
    EmpiricalSpectrum(np.array([0.5, 1.5]), src)
    with pytest.raises(ContractError):
        EmpiricalSpectrum(np.array([-0.1, 2.1]), src)
    with pytest.raises(ContractError):
        EmpiricalSpectrum(np.array([0.5, 1.0]), src)


def test_esd_cdf_steps():
    spec = EmpiricalSpectrum(np.array([0.0, 1.0, 1.0, 2.0]))
    assert spec.cdf(1.0) == 0.75 and spec.cdf_left(1.0) == 0.25
    assert spec.cdf(-1.0) == 0.0 and spec.cdf(5.0) == 1.0


def test_curve_mass_and_cdf_with_atom():
    g = np.linspace(0.0, 1.0, 101)
    c = DensityCurve(g, 0.5 * np.ones_like(g), ((0.5, 0.5),))
    assert c.total_mass == pytest.approx(1.0)
    assert c.cdf(0.5) == pytest.approx(0.75)
    assert c.cdf_left(0.5) == pytest.approx(0.25)
    assert c.support() == (0.0, 1.0)
    with pytest.raises(ContractError):
        DensityCurve(g, -np.ones_like(g))


def test_normalization_error_reports_mass():
    g = np.linspace(0.0, 1.0, 11)
    with pytest.raises(NormalizationError) as info:
        check_normalized(DensityCurve(g, 2.0 * np.ones_like(g)))
    assert info.value.total_mass == pytest.approx(2.0)


def test_ks_matches_scipy_for_uniform():
    x = np.random.default_rng(0).uniform(size=300)
    ours = ks_distance(EmpiricalSpectrum(x), uniform_curve())
    ref = stats.kstest(x, "uniform").statistic
    assert ours == pytest.approx(ref, abs=1e-9)


def test_ks_counts_atoms_and_round_off():
    g = np.linspace(1.0, 2.0, 1001)
    curve = DensityCurve(g, 0.5 * np.ones_like(g), ((0.0, 0.5),))
    # half the eigenvalues are numerical zeros of either sign
    ev = np.concatenate((np.array([-1e-15, 1e-15] * 50), np.linspace(1.0, 2.0, 100)))
    assert ks_distance(EmpiricalSpectrum(ev), curve) < 0.02
    shifted = np.concatenate((np.full(100, 0.2), np.linspace(1.0, 2.0, 100)))
    assert ks_distance(EmpiricalSpectrum(shifted), curve) == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=40))
def test_ks_is_a_probability_gap(values):
    d = ks_distance(EmpiricalSpectrum(np.sort(values)), uniform_curve(201))
    assert 0.0 <= d <= 1.0


def test_levy_distance_of_shift():
    f = lambda x: stats.norm.cdf(x)
    g = lambda x: stats.norm.cdf(x - 0.1)
    grid = levy_grid((-6.0, 6.0))
    d = levy_distance(f, g, grid)
    # Levy distance of a shift by h is below h and symmetric
    assert 0.0 < d <= 0.1 + 1e-6
    assert levy_distance(g, f, grid) == pytest.approx(d, abs=2e-6)
    assert levy_distance(f, f, grid) == 0.0


def test_levy_between_spectra_bounded_by_ks():
    rng = np.random.default_rng(2)
    a = EmpiricalSpectrum(np.sort(rng.standard_normal(200)))
    b = EmpiricalSpectrum(np.sort(rng.standard_normal(200)))
    grid = levy_grid((-4, 4), points=8192)
    ks = float(np.max(np.abs(a.cdf(grid) - b.cdf(grid))))
    assert spectrum_levy_distance(a, b) <= ks + 1e-6


def test_histogram_integrates_to_one():
    ev = np.random.default_rng(1).gamma(2.0, size=500)
    edges, dens = histogram(ev)
    assert 20 <= dens.size <= 100
    assert float(np.sum(dens * np.diff(edges))) == pytest.approx(1.0)
    edges, dens = histogram(np.full(5, 0.3))
    np.testing.assert_allclose(edges, [-0.2, 0.8])
    assert dens.tolist() == [1.0]


def test_csv_roundtrip_is_exact(tmp_path):
    g = np.linspace(0.1, 0.9, 33)
    curve = DensityCurve(g, np.sqrt(g), ((0.05, 0.1234567890123),))
    write_curve_csv(tmp_path / "c.csv", curve)
    write_atoms_csv(tmp_path / "a.csv", curve.atoms)
    back = read_curve_csv(tmp_path / "c.csv", tmp_path / "a.csv")
    np.testing.assert_array_equal(back.grid, curve.grid)
    np.testing.assert_array_equal(back.density, curve.density)
    assert back.atoms == curve.atoms
    edges, dens = histogram(np.linspace(0, 1, 50))
    write_histogram_csv(tmp_path / "h.csv", edges, dens)
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "bin_left,bin_right,density"
