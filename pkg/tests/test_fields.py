import numpy as np
import pytest

from branchgeo.errors import GridTooCoarse, IllConditionedFit, NotClosedForm, SolverDiverged
from branchgeo.fields import (DiskGrid, GridField, dz_grid, fit_jet, iterated_poisson, laplacian_grid,
                              line_integral, poisson_solve, sample_jet)
from branchgeo.jets import BiJet


@pytest.fixture(scope="module")
def grid():
    return DiskGrid(1.0, 128, 128)


def test_grid_invariants(grid):
    r = np.abs(grid.z)
    assert r.min() >= grid.eps and r.max() <= grid.radius * (1 + 1e-15)
    assert grid.rho == pytest.approx(0.97)
    fine = DiskGrid(1.0, 256, 256)
    assert np.abs(fine.z).min() == pytest.approx(fine.eps)


@pytest.mark.parametrize("nr,nt", [(8, 64), (64, 8), (64, 48)])
def test_coarse_or_bad_grid_rejected(nr, nt):
    with pytest.raises(GridTooCoarse):
        DiskGrid(1.0, nr, nt)


def test_dz_of_cube(grid):
    f = GridField(grid, grid.z ** 3)
    dz, dzb = dz_grid(f)
    np.testing.assert_allclose(dz.values[0], 3 * grid.z ** 2, atol=1e-8 * 3)
    assert np.abs(dzb.values).max() < 1e-8


def test_dz_matches_jet_on_cartesian_grid():
    g = DiskGrid(1.0, 64, 64, mode="cartesian")
    J = BiJet.random(4, np.random.default_rng(0))
    dz, dzb = dz_grid(sample_jet(J, g))
    np.testing.assert_allclose(dz.values[0], J.dz()(g.z), atol=1e-10)
    np.testing.assert_allclose(dzb.values[0], J.dzbar()(g.z), atol=1e-10)


def test_line_integral_constant():
    F = BiJet.constant(1.0, 4)
    assert line_integral(F, 1.0, s=1) == pytest.approx(0.5, abs=1e-14)
    # int_0^z w dw = z^2 / 2 along both paths
    z = 0.3 - 0.7j
    assert line_integral(F, z, s=1) == pytest.approx(z * z / 2, abs=1e-13)


def test_line_integral_rejects_non_holomorphic():
    with pytest.raises(NotClosedForm):
        line_integral(BiJet.zbar(4), 0.5j, s=0)


def test_line_integral_on_grid_field(grid):
    J = BiJet.holomorphic([1.0, 0.5j, -0.3, 0.2], 6)
    z = 0.4 + 0.3j
    exact = line_integral(J, z, s=1)
    approx = line_integral(sample_jet(J, grid), z, s=1)
    assert abs(approx - exact) < 1e-7


def test_line_integral_accepts_callables():
    assert line_integral(lambda w: np.exp(w), 1j, s=0) == pytest.approx(np.exp(1j) - 1, abs=1e-13)


def test_poisson_quadratic(grid):
    u = poisson_solve(GridField(grid, 4.0 * np.ones(grid.shape)))
    np.testing.assert_allclose(u.values[0], np.abs(grid.z) ** 2 - 1.0, atol=1e-6)


def test_poisson_linearity(grid):
    rng = np.random.default_rng(1)
    a = sample_jet(BiJet.random(4, rng, real=True), grid)
    b = sample_jet(BiJet.random(4, rng, real=True), grid)
    lhs = poisson_solve(a * 2.0 + b * (-0.5))
    rhs = poisson_solve(a) * 2.0 + poisson_solve(b) * (-0.5)
    np.testing.assert_allclose(lhs.values, rhs.values, atol=1e-10)


def test_poisson_residual_guard(grid):
    # a field with a jump is not resolvable at the requested residual
    v = np.where(np.real(grid.z) > 0, 1.0, -1.0)
    with pytest.raises(SolverDiverged):
        poisson_solve(GridField(grid, v))


@pytest.mark.parametrize("s", [1, 2])
def test_iterated_poisson(grid, s):
    l = BiJet.from_terms({(0, 0): 1.0, (1, 0): 0.5, (0, 1): 0.5, (1, 1): 1.0}, 4, real=True)
    phi = iterated_poisson(sample_jet(l, grid), s)
    assert np.abs(phi.values[0, -1]).max() < 1e-12


def test_laplacian_of_polynomial(grid):
    J = BiJet.random(4, np.random.default_rng(2), real=True)
    lap = laplacian_grid(sample_jet(J, grid))
    np.testing.assert_allclose(lap.values[0], J.laplacian()(grid.z), atol=1e-6)


@pytest.mark.parametrize("order", [2, 5, 8])
def test_fit_jet_round_trip(grid, order):
    J = BiJet.random(order, np.random.default_rng(order))
    fit = fit_jet(sample_jet(J, grid), order)[0]
    assert fit.allclose(J, 1e-9)


def test_fit_jet_cartesian():
    g = DiskGrid(1.0, 32, 32, mode="cartesian")
    J = BiJet.random(4, np.random.default_rng(3), real=True)
    fit = fit_jet(sample_jet(J, g), 4)[0]
    assert fit.allclose(J, 1e-9) and fit.real


def test_fit_jet_ill_conditioned(grid):
    with pytest.raises(IllConditionedFit):
        fit_jet(sample_jet(BiJet.z(3), grid), 3, cond_max=1.0)


def test_csv_round_trip(tmp_path, grid):
    J = BiJet.random(3, np.random.default_rng(4))
    F = sample_jet([J, J.conj()], grid)
    path = F.to_csv(tmp_path / "f.csv")
    header = path.read_text().splitlines()[0]
    assert header == "r,theta,comp0_re,comp0_im,comp1_re,comp1_im"
    back = GridField.from_csv(path, grid)
    np.testing.assert_allclose(back.values, F.values, rtol=1e-15)


def test_grid_field_rejects_nan(grid):
    v = np.zeros(grid.shape)
    v[3, 4] = np.nan
    with pytest.raises(ValueError):
        GridField(grid, v)
