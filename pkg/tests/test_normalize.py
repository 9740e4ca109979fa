import numpy as np
import pytest

from branchgeo.branch import distinguished_coefficient, extract_branch_data
from branchgeo.builder import SurfaceMap, build_weierstrass_minimal
from branchgeo.errors import RootBranchAmbiguous
from branchgeo.fields import DiskGrid, GridField
from branchgeo.jets import BiJet
from branchgeo.normalize import (PrincipalPart, beltrami_residual, build_normalizing_diffeo, invert,
                                 normalized_components)

N = 10


@pytest.fixture(scope="module", params=[(1, 1), (1, 2), (2, 1), (2, 3)], ids=lambda p: "s%dk%d" % p)
def normalized(request):
    s, k = request.param
    f = build_weierstrass_minimal(s, k)
    bd = extract_branch_data(f)
    dif = build_normalizing_diffeo(f, bd)
    return f, bd, dif


def test_composition_and_roundtrip(normalized):
    f, bd, dif = normalized
    assert dif.composition_residual(0.5) <= 1e-8
    assert dif.roundtrip_residual(0.5) <= 1e-8
    assert dif.max_arg < np.pi


def test_c0_is_one_at_origin(normalized):
    # a = z^(s+1)(1 + O(|z|)), so c(w) = w(1 + O(|w|))
    _, _, dif = normalized
    assert dif.c0_at_zero == pytest.approx(1.0, abs=1e-12)
    assert dif.c_jet.coeff(1, 0) == pytest.approx(1.0, abs=1e-12)


def test_c_inverts_e_jetwise(normalized):
    _, _, dif = normalized
    ident = dif.e_jet.compose(dif.c_jet)
    target = BiJet.z(ident.order)
    assert (ident - target).max_abs() < 1e-10


def test_beltrami_equation(normalized):
    _, bd, dif = normalized
    varpi = distinguished_coefficient(bd).grid
    assert beltrami_residual(dif, varpi, "exact").values.max() < 1e-12
    assert beltrami_residual(dif, varpi, "grid").values.max() < 1e-6


def test_normalized_components(normalized):
    f, bd, dif = normalized
    nc = normalized_components(f, bd, dif)
    np.testing.assert_allclose(nc.b_at_zero, 0.0, atol=1e-12)
    assert nc.reconstruction_residual < 1e-6
    # each b jet is the Taylor part of the sampled b_h up to its order
    w = dif.w_grid.z
    for h, jet in enumerate(nc.b_jets):
        if jet is not None:
            err = np.abs(jet(w) - nc.b_grid.values[h])
            assert np.max(err / np.abs(w) ** (jet.order + 1)) < 50.0


def test_pure_branch_is_already_normal():
    s = 2
    a = BiJet.monomial(3, 0, N)
    f = SurfaceMap([a.re(), (a * -1j).re(), BiJet.zeros(N)], s, radius=0.5, grid=DiskGrid(0.5, 32, 32))
    bd = extract_branch_data(f)
    dif = build_normalizing_diffeo(f, bd)
    np.testing.assert_allclose(dif.e_values.values[0], f.grid.z, atol=1e-15)
    np.testing.assert_allclose(dif.c_values.values[0], dif.w_grid.z, atol=1e-15)
    nc = normalized_components(f, bd, dif, check_points=4)
    assert np.abs(nc.b_grid.values).max() == 0.0


def test_winding_root_is_rejected():
    # q = a / z^2 = 1 + 3z vanishes at z = -1/3 inside the disk
    a = BiJet.monomial(2, 0, N) + BiJet.monomial(3, 0, N) * 3.0
    f = SurfaceMap([a.re(), (a * -1j).re(), BiJet.zeros(N)], 1, radius=0.5, grid=DiskGrid(0.5, 32, 32))
    bd = extract_branch_data(f, strict=False)
    with pytest.raises(RootBranchAmbiguous):
        build_normalizing_diffeo(f, bd)


def test_invert_matches_forward_map():
    f = build_weierstrass_minimal(1, 2)
    pp = PrincipalPart(f)
    rng = np.random.default_rng(3)
    z = 0.3 * f.radius * np.sqrt(rng.uniform(size=40)) * np.exp(2j * np.pi * rng.uniform(size=40))
    np.testing.assert_allclose(invert(pp, pp.e(z)), z, atol=1e-12)
    assert invert(pp, np.zeros(3, complex)).tolist() == [0, 0, 0]


def test_diffeo_csv_round_trip(tmp_path, normalized):
    _, _, dif = normalized
    pc, pe = dif.to_csv(tmp_path)
    assert pc.name == "diffeo_c_w.csv" and pe.name == "diffeo_e_z.csv"
    back = GridField.from_csv(pc, dif.w_grid)
    np.testing.assert_allclose(back.values, dif.c_values.values, rtol=1e-15)
