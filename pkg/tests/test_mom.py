import numpy as np
import pytest
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from app.core.errors import SingularMatrixError, SingularityError
from app.services import mom_service as mom
from app.services.specfun import green_normal_derivative
from app.services.surface_service import flat_surface, from_function, make_grid, make_surface
from app.tools.oracles import flat_plate_error

K = 2.0 * np.pi
ALPHA = -np.pi / 4.0


def _problem(grid, polarization="TE", zeta=0.5, amplitude=1.0):
    return mom.ScatterProblem(polarization, K, ALPHA, zeta, grid, amplitude)


def _cquad(fn, a, b, **kwargs):
    re = integrate.quad(lambda t: fn(t).real, a, b, limit=200, **kwargs)[0]
    im = integrate.quad(lambda t: fn(t).imag, a, b, limit=200, **kwargs)[0]
    return complex(re, im)


# -- incident field ---------------------------------------------------------------------------


def test_incident_field_basics(baseline_grid):
    problem = _problem(baseline_grid)
    assert mom.incident_field(problem, np.array([[0.0, 0.0]])).to_numpy()[0] == pytest.approx(1.0)
    pts = np.random.default_rng(0).uniform(-5, 5, size=(30, 2))
    np.testing.assert_allclose(np.abs(mom.incident_field(problem, pts).to_numpy()), 1.0, atol=1e-12)


def test_incident_field_at_normal_incidence(baseline_grid):
    problem = mom.ScatterProblem("TE", K, -np.pi / 2, 0.5, baseline_grid)
    x = np.linspace(-3, 3, 7)
    z = np.full_like(x, 0.3)
    np.testing.assert_allclose(mom.incident_field(problem, x, z).to_numpy(), np.exp(-1j * K * 0.3), atol=1e-12)


def test_problem_validation(baseline_grid):
    with pytest.raises(ValueError):
        mom.ScatterProblem("TE", 0.0, ALPHA, 0.5, baseline_grid)
    with pytest.raises(ValueError):
        mom.ScatterProblem("XY", K, ALPHA, 0.5, baseline_grid)


# -- Dirichlet assembly ------------------------------------------------------------------------


def test_flat_dirichlet_matrix_is_symmetric(baseline_grid):
    a, _ = mom.assemble_dirichlet(_problem(baseline_grid), flat_surface(baseline_grid))
    a = a.to_numpy()
    np.testing.assert_allclose(a, a.T, rtol=1e-12, atol=1e-15)


def test_flat_dirichlet_off_diagonal_against_quadrature(baseline_grid):
    grid = baseline_grid
    a = mom.assemble_dirichlet(_problem(grid), flat_surface(grid))[0].to_numpy()
    n = 120
    for l in (n - 6, n - 3, n - 2, n + 2, n + 5, n + 40):
        x0, x1 = grid.nodes[l], grid.nodes[l + 1]
        oracle = _cquad(lambda x: 0.25j * special.hankel1(0, K * abs(grid.midpoints[n] - x)), x0, x1)
        assert abs(a[n, l] - oracle) / abs(oracle) < 0.02


def test_flat_dirichlet_off_diagonal_against_centre_value(baseline_grid):
    grid = baseline_grid
    a = mom.assemble_dirichlet(_problem(grid), flat_surface(grid))[0].to_numpy()
    x = grid.midpoints
    n = 60
    for l in (n + 3, n + 7, n + 25, n + 100):
        centre = grid.dx * 0.25j * special.hankel1(0, K * abs(x[n] - x[l]))
        assert abs(a[n, l] - centre) / abs(centre) < 0.02


@pytest.mark.parametrize("slope", [0.0, 0.5])
def test_dirichlet_self_term_against_singular_quadrature(slope):
    dx = 1.0 / 15.0
    ds = dx * np.hypot(1.0, slope)
    value = mom.dirichlet_self_term(K, dx, np.array(slope)).to_numpy()
    half = _cquad(lambda t: 0.25j * special.hankel1(0, K * t), 0.0, ds / 2)
    assert abs(value - 2.0 * half) / abs(2.0 * half) < 1e-3


def test_flat_dirichlet_near_diagonal_against_quadrature(baseline_grid):
    grid = baseline_grid
    a = mom.assemble_dirichlet(_problem(grid), flat_surface(grid))[0].to_numpy()
    n = 120
    for l in (n - 2, n - 1, n + 1, n + 2, n + mom.LOG_BAND, n + mom.LOG_BAND + 1):
        x0, x1 = grid.nodes[l], grid.nodes[l + 1]
        oracle = _cquad(lambda x: 0.25j * special.hankel1(0, K * abs(grid.midpoints[n] - x)), x0, x1)
        assert abs(a[n, l] - oracle) / abs(oracle) < 1e-3


@pytest.mark.parametrize("m", [1, 2, 5])
def test_log_panel_weights_integrate_quadratics_exactly(m):
    u = np.array([m - 0.5, m, m + 0.5])
    simpson = np.log(u) * np.array([1.0, 4.0, 1.0]) / 6.0
    weights = simpson + np.array(mom._log_panel_weights(m))
    for coeffs in ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, -1.2, 0.7]):
        poly = np.polynomial.Polynomial(coeffs)
        exact = integrate.quad(lambda t: poly(t) * np.log(t), m - 0.5, m + 0.5, epsabs=1e-14, epsrel=1e-13)[0]
        assert weights @ poly(u) == pytest.approx(exact, rel=1e-10, abs=1e-13)


def test_log_panel_weights_for_the_adjacent_panel():
    exact = 1.5 * np.log(1.5) - 0.5 * np.log(0.5) - 1.0
    simpson = (np.log(0.5) + np.log(1.5)) / 6.0
    assert sum(mom._log_panel_weights(1)) == pytest.approx(exact - simpson, rel=1e-12)


def test_log_weights_are_banded_and_mirrored():
    left, mid, right = mom._log_weights(30)
    np.testing.assert_array_equal(np.diag(mid), 0.0)
    np.testing.assert_array_equal(left, right.T)
    np.testing.assert_array_equal(mid, mid.T)
    offsets = np.abs(np.subtract.outer(np.arange(30), np.arange(30)))
    assert np.all(mid[offsets > mom.LOG_BAND] == 0.0)
    assert np.all(mid[(offsets >= 1) & (offsets <= mom.LOG_BAND)] != 0.0)


def test_node_interpolation_reproduces_cubics():
    grid = make_grid(2.0, 40)
    p = mom._node_interpolation(grid.n_panels)

    def cubic(x):
        return 0.2 - 0.5 * x + 0.3 * x**2 + 0.1 * x**3

    interior = slice(2, grid.n_panels - 1)
    np.testing.assert_allclose((p @ cubic(grid.midpoints))[interior], cubic(grid.nodes)[interior], atol=1e-12)


def test_dirichlet_far_observation_decay(baseline_grid):
    grid = baseline_grid
    problem = _problem(grid, zeta=10.0)
    _, b = mom.assemble_dirichlet(problem, flat_surface(grid), x_obs=np.array([0.0]))
    r = np.hypot(grid.midpoints, 10.0)
    scaled = np.abs(b.to_numpy()[0]) * np.sqrt(r)
    np.testing.assert_allclose(scaled / scaled.mean(), 1.0, atol=0.02)


def test_observation_line_must_clear_surface(baseline_surface):
    crest = baseline_surface.max_height
    problem = _problem(baseline_surface.grid, zeta=crest)
    with pytest.raises(SingularityError):
        mom.assemble_dirichlet(problem, baseline_surface)
    with pytest.raises(SingularityError):
        mom.scattered_field(_problem(baseline_surface.grid, "TM", zeta=crest), baseline_surface)


# -- Neumann assembly -------------------------------------------------------------------------


def test_flat_neumann_matrix(baseline_grid):
    a, _ = mom.assemble_neumann(_problem(baseline_grid, "TM"), flat_surface(baseline_grid))
    a = a.to_numpy()
    np.testing.assert_array_equal(np.diag(a), 0.5)
    off = a - np.diag(np.diag(a))
    assert np.max(np.abs(off)) == 0.0


def test_flat_neumann_surface_field_doubles_incident(baseline_grid):
    problem = _problem(baseline_grid, "TM")
    a, _ = mom.assemble_neumann(problem, flat_surface(baseline_grid))
    rhs = mom.incident_field(problem, baseline_grid.midpoints, np.zeros(240)).to_numpy()
    np.testing.assert_allclose(mom.solve_linear(a.to_numpy(), rhs), 2.0 * rhs, atol=1e-12)


def test_neumann_needs_second_derivative(baseline_surface):
    s = baseline_surface
    with pytest.raises(ValueError):
        mom.assemble_neumann(_problem(s.grid, "TM"), (s.h, s.dh))


def test_neumann_self_term_against_quadrature():
    grid = make_grid(8.0, 240)

    def h(x):
        return 0.3 * np.sin(1.3 * x)

    def dh(x):
        return 0.39 * np.cos(1.3 * x)

    surface = from_function(grid, h)
    a, _ = mom.assemble_neumann(_problem(grid, "TM", zeta=1.0), surface)
    a = a.to_numpy()
    for n in (40, 97, 150):
        xn = grid.midpoints[n]
        p = np.array([xn, h(xn)])

        def integrand(x):
            q = np.array([x, h(x)])
            return green_normal_derivative(K, p, q, dh(x)) * np.hypot(1.0, dh(x))

        gap = 1e-6
        oracle = _cquad(integrand, xn - grid.dx / 2, xn - gap) + _cquad(integrand, xn + gap, xn + grid.dx / 2)
        assert abs((a[n, n] - 0.5) - oracle) / abs(oracle) < 0.05


# -- solve ------------------------------------------------------------------------------------


def test_solve_identity():
    b = np.array([1 + 2j, -3j, 0.5])
    np.testing.assert_allclose(mom.solve_linear(np.eye(3, dtype=complex), b), b)


def test_solve_diagonal():
    y = mom.solve_linear(np.array([[2, 0], [0, 1j]]), np.array([2, 1j]))
    np.testing.assert_allclose(y, [1, 1], atol=1e-15)


def test_solve_residual(rng):
    a = rng.standard_normal((50, 50)) + 1j * rng.standard_normal((50, 50)) + 50 * np.eye(50)
    b = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    y = mom.solve_linear(a, b)
    assert np.linalg.norm(a @ y - b) / np.linalg.norm(b) < 1e-10


def test_solve_singular_matrix_reports_condition():
    with pytest.raises(SingularMatrixError) as info:
        mom.solve_linear(np.ones((3, 3), dtype=complex), np.ones(3, dtype=complex))
    assert info.value.rcond is not None and info.value.rcond < 1e-12


# -- scattered field --------------------------------------------------------------------------


def test_flat_plate_te_reflection():
    assert flat_plate_error(mom.Polarization.TE) < 0.05


def test_flat_plate_tm_reflection():
    assert flat_plate_error(mom.Polarization.TM) < 0.05


def test_flat_plate_te_field_vanishes_near_surface():
    grid = make_grid(8.0, 1024)
    problem = _problem(grid)
    x = grid.midpoints[np.abs(grid.midpoints) <= 4.0]
    total = mom.total_field(problem, flat_surface(grid), x, z_obs=0.01)
    assert np.sqrt(np.mean(np.abs(total) ** 2)) < 0.15


@pytest.mark.parametrize("polarization", ["TE", "TM"])
def test_scattered_field_is_linear_in_amplitude(baseline_surface, polarization):
    grid = baseline_surface.grid
    one = mom.simulate(_problem(grid, polarization), baseline_surface)
    two = mom.simulate(_problem(grid, polarization, amplitude=2.0), baseline_surface)
    np.testing.assert_allclose(two, 2.0 * one, rtol=1e-13, atol=1e-15)


def test_te_ignores_second_derivative(baseline_surface):
    s = baseline_surface
    problem = _problem(s.grid)
    with_d2h = mom.scattered_field(problem, (s.h, s.dh, s.d2h)).to_numpy()
    without = mom.scattered_field(problem, (s.h, s.dh)).to_numpy()
    assert with_d2h.tobytes() == without.tobytes()


@pytest.mark.parametrize("polarization", ["TE", "TM"])
def test_mesh_convergence_on_baseline_surface(polarization):
    coarse_grid, fine_grid = make_grid(8.0, 240), make_grid(8.0, 480)
    fine = make_surface(fine_grid, 2.0 / 3.0, 0.4, seed=3)
    coarse = from_function(coarse_grid, CubicSpline(fine.x, fine.h))
    x_obs = coarse_grid.midpoints
    psi_c = mom.simulate(_problem(coarse_grid, polarization), coarse, x_obs)
    psi_f = mom.simulate(_problem(fine_grid, polarization), fine, x_obs)
    assert np.linalg.norm(psi_c - psi_f) / np.linalg.norm(psi_f) < 0.01


def test_mesh_convergence_is_monotone(gentle_surface):
    def profile(x):
        return np.interp(x, gentle_surface.x, gentle_surface.h)

    x_obs = np.linspace(-6, 6, 61)
    fields = {}
    for n in (60, 120, 240, 480):
        grid = make_grid(8.0, n)
        fields[n] = mom.simulate(_problem(grid), from_function(grid, profile), x_obs)
    diffs = [np.linalg.norm(fields[n] - fields[2 * n]) / np.linalg.norm(fields[2 * n]) for n in (60, 120, 240)]
    assert diffs[0] > diffs[1] > diffs[2]


def test_scattered_field_defaults_to_midpoints(baseline_surface):
    problem = _problem(baseline_surface.grid)
    a = mom.simulate(problem, baseline_surface)
    b = mom.simulate(problem, baseline_surface, baseline_surface.x)
    np.testing.assert_array_equal(a, b)
