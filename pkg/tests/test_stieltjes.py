import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kspec.models import CorrelationModel, DomainError, sigma_triple
from kspec.stieltjes import (
    Band2Solver,
    ConvergenceError,
    FinitePSolver,
    MA1Solver,
    SolverMode,
    SpectralGrid,
    ToeplitzSolver,
    _iterate,
    atom_mass,
    density_from_stieltjes,
    identity_stieltjes,
    identity_x_residual,
    lsd_curve,
    ma1_equation_residual,
    ma1_trace,
    mp_affine_curve,
    mp_affine_density,
    mp_affine_support,
    mp_curve,
    solve_x_band2,
    solve_x_finite_p,
    solve_x_ma1,
    solve_x_toeplitz,
    solver_for,
    stieltjes_quadratic_check,
    uniqueness_spread,
)

# roots of (2/3)c(z - 1/3)s^2 + (z - 1 + 2c/3)s + 1 = 0 computed with mpmath at 30 digits
IDENTITY_ROOTS = [
    (0.5, 1.0 + 0.01j, -0.728910182210167848652663952955 + 1.972892914296237775403222556602j),
    (2.0, 0.8 + 0.05j, -0.866262936657785232833181601645 + 0.937219253971108329913350487693j),
    (1.0, 0.3 + 0.02j, 5.279980454916488822630587020895 + 1.646186196199331511808981434519j),
]


@pytest.mark.parametrize("c,z,s", IDENTITY_ROOTS)
def test_identity_root_frozen(c, z, s):
    assert abs(identity_stieltjes(c, z) - s) < 1e-12


@pytest.mark.parametrize("c,z,s", IDENTITY_ROOTS)
def test_finite_p_identity_matches_root(c, z, s):
    sol = solve_x_finite_p(sigma_triple(CorrelationModel.identity(50)), c, z)
    assert abs(sol.s - s) < 1e-9
    assert identity_x_residual(c, z, sol.x) < 1e-9
    assert stieltjes_quadratic_check(c, z, sol.s) < 1e-9


def test_affine_support_frozen():
    lo, hi = mp_affine_support(0.5)
    assert lo == pytest.approx(0.390524291751269967465540850527, abs=1e-14)
    assert hi == pytest.approx(2.27614237491539669920112581614, abs=1e-14)
    lo, hi = mp_affine_support(2.0)
    assert lo == pytest.approx(0.447715250169206601597748367720, abs=1e-14)
    assert hi == pytest.approx(4.21895141649746006506891829895, abs=1e-14)


@pytest.mark.parametrize("c", [0.3, 0.5, 1.5, 2.0])
def test_affine_mp_mass(c):
    curve = mp_affine_curve(c, 20001)
    assert curve.total_mass == pytest.approx(1.0, abs=2e-3)
    assert curve.atom_mass == pytest.approx(max(0.0, 1 - 1 / c))
    assert mp_curve(c).total_mass == pytest.approx(1.0, abs=2e-3)


def test_affine_mp_is_rescaled_mp():
    # if y ~ MP(c) then (2/3) y + 1/3 has density (3/2) f_MP((3x - 1)/2)
    from kspec.stieltjes import mp_density
    x = np.linspace(0.5, 2.2, 50)
    np.testing.assert_allclose(mp_affine_density(0.5, x), 1.5 * mp_density(0.5, (3 * x - 1) / 2),
                               rtol=1e-12)


def test_backends_agree():
    model = CorrelationModel.ma1(60, 0.4)
    t = sigma_triple(model)
    z = 0.9 + 0.05j
    sols = [FinitePSolver(t, 0.7, b).solve(z) for b in ("spectral", "eig", "direct")]
    assert FinitePSolver(t, 0.7).backend == "spectral"
    for s in sols[1:]:
        assert abs(s.s - sols[0].s) < 1e-11


def test_eig_backend_for_noncommuting_triple():
    t = sigma_triple(CorrelationModel.factor(40, 3, "over_sqrt_p", 2))
    a = FinitePSolver(t, 1.2)
    assert a.backend == "eig"
    z = 1.1 + 0.02j
    assert abs(a.solve(z).s - FinitePSolver(t, 1.2, "direct").solve(z).s) < 1e-10


@pytest.mark.parametrize("rho", [0.2, 0.45, 0.5])
@pytest.mark.parametrize("c", [0.5, 2.0])
def test_ma1_closed_form_vs_symbol_quadrature(rho, c):
    for e in (0.1, 0.34, 0.9, 2.0):
        z = complex(e, 1e-2)
        a = solve_x_ma1(rho, c, z)
        b = solve_x_toeplitz(CorrelationModel.ma1(3, rho), c, z)
        assert abs(a.s - b.s) < 1e-8
        assert ma1_equation_residual(rho, c, z, a.x, a.s) < 1e-9


def test_ma1_zero_rho_is_identity():
    z = 0.8 + 0.05j
    assert abs(solve_x_ma1(0.0, 2.0, z).s - identity_stieltjes(2.0, z)) < 1e-11


def test_ma1_trace_matches_matrix_limit():
    rho, x, z = 0.3, 0.7 - 0.1j, 1.0 + 0.2j
    model = CorrelationModel.ma1(3000, rho)
    t, s = FinitePSolver(sigma_triple(model), 1.0).traces(x, z)
    t_cf, s_cf = ma1_trace(x, z, rho)
    assert abs(s - s_cf) < 1e-3 and abs(t - t_cf) < 1e-3


def test_band2_closed_s_matches_quadrature():
    z = 0.6 + 0.02j
    a = Band2Solver(0.25, 0.75).solve(z)
    b = solve_x_toeplitz(CorrelationModel.band_toeplitz2(3, 0.25), 0.75, z)
    assert abs(a.x - b.x) < 1e-10
    assert abs(a.s - b.s) < 1e-8
    assert solve_x_band2(0.25, 0.75, z).mode is SolverMode.CLOSED_FORM


def test_solver_for_dispatch():
    assert isinstance(solver_for(CorrelationModel.ma1(5, 0.2), 1.0), MA1Solver)
    assert isinstance(solver_for(CorrelationModel.band_toeplitz2(5, 0.2), 1.0), Band2Solver)
    assert isinstance(solver_for(CorrelationModel.ma1(5, 0.2), 1.0, "fourier"), ToeplitzSolver)
    assert isinstance(solver_for(CorrelationModel.factor(10), 1.0), FinitePSolver)
    with pytest.raises(DomainError):
        ToeplitzSolver(CorrelationModel.factor(10), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 4.5), st.floats(1e-3, 1.0), st.floats(0.2, 3.0), st.floats(0.0, 0.5))
def test_solution_contracts(e, eta, c, rho):
    z = complex(e, eta)
    sol = MA1Solver(rho, c).solve(z)
    assert sol.x.imag <= 1e-12
    assert sol.s.imag >= -1e-12
    assert abs(sol.s) <= 1.0 / eta * (1 + 1e-9)
    assert sol.residual <= 1e-10


def test_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        MA1Solver(0.2, 1.0).solve(1.0 - 0.1j)
    with pytest.raises(ValueError):
        SpectralGrid(np.array([1.0, 0.5]))


def test_convergence_error_carries_diagnostics():
    fn = lambda x, z: ma1_trace(x, z, 0.3)
    with pytest.raises(ConvergenceError) as info:
        _iterate(fn, 1.0, 0.5 + 1e-3j, 1.0, SolverMode.CLOSED_FORM, max_iter=3)
    assert info.value.iterations == 3 and info.value.residual > 0


def test_uniqueness_from_eight_starts():
    for solver in (MA1Solver(0.5, 1.5), Band2Solver(0.25, 0.75)):
        assert uniqueness_spread(solver, 0.7 + 1e-2j) < 1e-8


def test_atom_mass_identity():
    assert atom_mass(MA1Solver(0.0, 2.0), 1.0 / 3.0) == pytest.approx(0.5, abs=1e-4)
    assert atom_mass(MA1Solver(0.0, 0.5), 1.0 / 3.0) < 1e-4


def test_density_inversion_identity_interior():
    c = 0.5
    lo, hi = mp_affine_support(c)
    grid = SpectralGrid.linspace(lo + 0.05, hi - 0.05, 200, eta=1e-3)
    sweep = density_from_stieltjes(MA1Solver(0.0, c), grid, richardson=True)
    gap = np.max(np.abs(sweep.curve.density - mp_affine_density(c, grid.energies)))
    assert gap < 2e-2


def test_lsd_curve_normalized_with_atom():
    sweep = lsd_curve(MA1Solver(0.0, 2.0), points=800, eta=2e-3, atoms=(1.0 / 3.0,))
    curve = sweep.curve
    assert curve.atom_mass == pytest.approx(0.5, abs=1e-3)
    assert curve.total_mass == pytest.approx(1.0, abs=1e-2)
    assert len(sweep.diagnostics()) == len(sweep.solutions)


def test_lsd_curve_ma1_normalized():
    curve = lsd_curve(MA1Solver(0.5, 0.75), points=800, eta=2e-3).curve
    assert curve.total_mass == pytest.approx(1.0, abs=1e-2)


def test_band2_residue_means_match_quadrature():
    from kspec.stieltjes import band2_means
    solver = Band2Solver(0.25, 2.0)
    quad = ToeplitzSolver(CorrelationModel.band_toeplitz2(3, 0.25), 2.0)
    a, h = solver.shift, (2 / np.pi) * np.arcsin(0.125)
    for x, z in ((0.7 - 0.1j, 0.5 + 0.01j), (1.2 - 0.01j, 0.334 + 1e-4j), (0.05 - 1e-3j, -0.2 + 1e-3j)):
        t, s = band2_means(2 * x + a, z - (1 - a) / 3, h)
        t_q, s_q = quad.traces(x, z)
        assert abs(t - t_q) < 1e-11 and abs(s - s_q) < 1e-11
