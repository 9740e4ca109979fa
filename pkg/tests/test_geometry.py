import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from branchgeo.branch import extract_branch_data, index_and_degree
from branchgeo.builder import SurfaceMap, build_weierstrass_minimal, sphere_patch
from branchgeo.errors import DenominatorVanishing, ShapeMismatch
from branchgeo.fields import DiskGrid
from branchgeo.geometry import (LIPSCHITZ_VARIATION, JetDerivatives, LocalGeometry, MatrixField, adj2,
                                classical_curvatures, classify_branch_curvature, coprincipal_jets, det2, eig2,
                                frame_matrix, frontal_frame_from_branch, fundamental_forms, gram, inv2,
                                normal_frame, predicted_class, principal_coprincipal, right_product)
from branchgeo.iohelpers import read_pgm
from branchgeo.jets import BiJet, ZOrder
from branchgeo.suites import frame_algebra_residuals, minimal_fixtures, rotation_relation_residual

N = 10


def rand_points(rng, R, m=40):
    return R * np.sqrt(rng.uniform(0.01, 1, m)) * np.exp(2j * np.pi * rng.uniform(size=m))


# ------------------------------------------------------------ frame algebra
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("n", [3, 4, 6])
def test_frame_algebra_identities(seed, n):
    res = frame_algebra_residuals(np.random.default_rng(seed), n)
    assert max(res.values()) <= 1e-12, res


def test_gram_with_metric_matches_einsum():
    rng = np.random.default_rng(0)
    U, V = rng.normal(size=(5, 4, 2)), rng.normal(size=(5, 4, 3))
    L = rng.normal(size=(4, 4))
    G = L @ L.T
    np.testing.assert_allclose(gram(U, V, G), np.einsum("nia,ij,njb->nab", U, G, V), rtol=1e-13)
    np.testing.assert_allclose(gram(U, U), np.einsum("nia,nib->nab", U, U), rtol=1e-13)


@pytest.mark.parametrize("call", [
    lambda: frame_matrix(np.eye(3), np.ones((4, 2))),
    lambda: frame_matrix(np.ones((3, 2)), np.ones((3, 2))),
    lambda: right_product(np.ones((3, 2)), np.ones((3, 3))),
    lambda: gram(np.ones((3, 2)), np.ones((4, 2))),
    lambda: gram(np.ones((3, 2)), np.ones((3, 2)), np.eye(4)),
    lambda: MatrixField(np.ones(3)),
    lambda: MatrixField(np.ones((2, 3))) @ np.ones((2, 2)),
])
def test_shape_mismatch(call):
    with pytest.raises(ShapeMismatch):
        call()


def test_matrix_field_product_and_transpose():
    rng = np.random.default_rng(1)
    A, B = rng.normal(size=(7, 3, 2)), rng.normal(size=(7, 2, 4))
    P = MatrixField(A) @ MatrixField(B)
    np.testing.assert_allclose(P.values, A @ B)
    assert P.T.shape == (4, 3)
    assert P.sup() == pytest.approx(np.abs(A @ B).max())


mats = arrays(np.float64, (2, 2), elements=st.floats(-10, 10, allow_nan=False))


@settings(max_examples=200, deadline=None)
@given(mats)
def test_closed_form_2x2(m):
    assert det2(m) == pytest.approx(np.linalg.det(m), abs=1e-9 * max(1.0, np.abs(m).max() ** 2))
    np.testing.assert_allclose(adj2(m) @ m, det2(m) * np.eye(2), atol=1e-9 * max(1.0, np.abs(m).max() ** 2))
    if abs(det2(m)) > 1e-3:
        np.testing.assert_allclose(inv2(m) @ m, np.eye(2), atol=1e-6 * np.abs(m).max() ** 2 / abs(det2(m)))
    sym = m + m.T
    np.testing.assert_allclose(eig2(sym), np.linalg.eigvalsh(sym), atol=1e-8 * max(1.0, np.abs(sym).max()))


# --------------------------------------------------------- jet evaluation
@pytest.mark.parametrize("a,b", [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2)])
def test_real_partials_from_wirtinger(a, b):
    jet = BiJet.random(6, np.random.default_rng(3), real=True)
    jd = JetDerivatives([jet])
    z0 = np.array([0.2 - 0.1j])
    h = 1e-3

    def g(x, y):
        return jet(z0 + x + 1j * y).real

    # central differences: d^a/dx^a d^b/dy^b with the tensor stencil
    w = {0: [(0, 1.0)], 1: [(-1, -0.5), (1, 0.5)], 2: [(-1, 1.0), (0, -2.0), (1, 1.0)]}
    fd = sum(cx * cy * g(i * h, j * h) for i, cx in w[a] for j, cy in w[b]) / h ** (a + b)
    np.testing.assert_allclose(jd.partial(a, b, z0)[0].real, fd, rtol=1e-4, atol=1e-6)


# --------------------------------------------------------- co-principal part
@pytest.mark.parametrize("f", minimal_fixtures(), ids=lambda f: f.label or "fixture")
def test_coprincipal_jets_match_matrix_definition(f):
    bd = extract_branch_data(f)
    pp = principal_coprincipal(f, bd)
    z = bd.grid.z
    near = np.abs(z) < 0.3 * bd.grid.radius
    for h, jet in enumerate(pp.b_jets):
        np.testing.assert_allclose(jet(z[near]), pp.b_grid.values[h][near], atol=1e-4)
    geo = LocalGeometry(f, z[near][:50], bd.d)
    for h, jet in enumerate(pp.b_jets):
        np.testing.assert_allclose(jet(geo.z), geo.B[..., h, 0] + 1j * geo.B[..., h, 1], atol=1e-4)


def z_divisibility(jet, tol=1e-12):
    rows = [j for j in range(jet.coeffs.shape[0]) if np.abs(jet.coeffs[j]).max() > tol]
    return rows[0] if rows else jet.order + 1


@pytest.mark.parametrize("f", minimal_fixtures(), ids=lambda f: f.label or "fixture")
def test_coprincipal_derivative_pattern(f):
    # conj(db/dzbar) is the z-derivative of the conjugate convention
    bd = extract_branch_data(f)
    s = f.s
    iota, _ = index_and_degree(f)
    orders = [z_divisibility(b.dzbar().conj()) for b in coprincipal_jets(bd.d)]
    if iota.value < 2 * s + 1:
        assert min(orders) == iota.value - s - 1
    else:
        assert min(orders) >= s


def test_pure_branch_has_trivial_coprincipal_part():
    a = BiJet.monomial(3, 0, N)
    f = SurfaceMap([a.re(), (a * -1j).re(), BiJet.zeros(N), BiJet.zeros(N)], 2, radius=0.5,
                   grid=DiskGrid(0.5, 32, 32))
    pp = principal_coprincipal(f)
    assert pp.B.sup() == 0.0
    xi, g0 = normal_frame(f)
    expect = np.vstack([np.zeros((2, 2)), np.eye(2)])
    assert np.all(xi.values == expect)
    np.testing.assert_array_equal(g0, np.eye(2))


# ------------------------------------------------------------ normal frame
@pytest.mark.parametrize("f", minimal_fixtures()[:3] + [sphere_patch(1)], ids=lambda f: f.label or "fixture")
def test_normal_frame_is_normal(f):
    geo = LocalGeometry(f, rand_points(np.random.default_rng(2), 0.8 * f.radius))
    np.testing.assert_allclose(geo.metric_gram(geo.W, geo.xi), 0.0, atol=1e-12)
    np.testing.assert_allclose(geo.metric_gram(geo.F, geo.xi), 0.0, atol=1e-12)
    _, g0 = normal_frame(f)
    psi0 = f.metric.psi(np.array([[c.value.real] for c in f.components]))[0]
    np.testing.assert_allclose(g0, np.exp(-2 * psi0) * np.eye(f.n - 2), atol=1e-14)


def test_frontal_frame_reconstructs_jacobian():
    f = build_weierstrass_minimal(2, 1)
    ff = frontal_frame_from_branch(f)
    assert ff.reconstruction_residual() < 1e-12
    np.testing.assert_allclose(ff.lam, 9 * np.abs(f.grid.z) ** 4, rtol=1e-12)


def test_singular_principal_block():
    f = build_weierstrass_minimal(1, 1)
    with pytest.raises(DenominatorVanishing):
        LocalGeometry(f, np.array([1.0 + 0j]))


# ------------------------------------------------------------ forms
@pytest.mark.parametrize("f", minimal_fixtures()[:4] + [sphere_patch(1), sphere_patch(2)],
                         ids=lambda f: f.label or "fixture")
def test_fundamental_form_identities(f):
    ff = fundamental_forms(f)
    assert ff["first_form_residual"] < 1e-12
    assert ff["second_form_residual"] < 1e-10
    assert ff["two_path_residual"] < 1e-5
    if f.metric.is_euclidean:
        assert ff["coprincipal_residual"] < 1e-10


@pytest.mark.parametrize("f", minimal_fixtures(), ids=lambda f: f.label or "fixture")
def test_curvature_identities_on_minimal_maps(f):
    cur = classical_curvatures(f)
    for key in ("shape_identity_residual", "K_scaling_residual", "H_scaling_residual", "Hvec_scaling_residual"):
        assert cur[key] < 1e-6, key
    assert cur["gauss_brioschi_residual"] < 1e-4
    assert np.abs(cur["mean_curvature"]).max() < 1e-8
    # minimal surfaces have non-positive sectional curvature
    assert cur["sec"].max() <= 1e-10
    np.testing.assert_allclose(cur["scalar"], 2 * cur["sec"])


def test_sphere_patch_sectional_curvature():
    t = 0.5
    f = sphere_patch(1, t=t)
    cur = classical_curvatures(f)
    np.testing.assert_allclose(cur["sec"], 1 + t * t, rtol=1e-6)
    np.testing.assert_allclose(cur["brioschi"], 1 + t * t, rtol=1e-4)


@pytest.mark.parametrize("seed", range(4))
def test_rotation_relation(seed):
    rng = np.random.default_rng(seed)
    for f in minimal_fixtures()[::2]:
        assert rotation_relation_residual(f, rng) < 1e-8


# ------------------------------------------------------------ classifier
@pytest.mark.parametrize("iota,s,expected", [
    (ZOrder(2), 1, "Divergent"), (ZOrder(3), 1, "BoundedLipschitz"), (ZOrder(4), 2, "Divergent"),
    (ZOrder(5), 2, "BoundedLipschitz"), (ZOrder(3, limited=True), 2, "Inconclusive"),
    (ZOrder(9, limited=True), 2, "BoundedLipschitz"),
])
def test_predicted_class(iota, s, expected):
    assert predicted_class(iota, s) == expected


@pytest.mark.parametrize("s,k", [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)])
def test_classification_matches_index(s, k):
    f = build_weierstrass_minimal(s, k)
    rep = classify_branch_curvature(f)
    iota = s + k
    expected = "BoundedLipschitz" if iota >= 2 * s + 1 else "Divergent"
    assert rep.predicted == expected and rep.empirical == expected
    assert rep.sign == "negative"
    if expected == "Divergent":
        # |Sec| ~ r^(2(iota - 2s - 1)) so each halving multiplies by 4^(2s + 1 - iota)
        np.testing.assert_allclose(rep.growth, 4.0 ** (2 * s + 1 - iota), rtol=0.05)
        assert rep.growth_exponent == pytest.approx(2 * (iota - 2 * s - 1), abs=0.1)
    else:
        c = rep.lipschitz_constants
        assert c[-1] / c[0] - 1.0 <= LIPSCHITZ_VARIATION


def test_constant_curvature_patch_is_bounded():
    rep = classify_branch_curvature(sphere_patch(1))
    assert rep.empirical == "BoundedLipschitz" and rep.sign == "positive"


def test_curvature_report_files(tmp_path):
    rep = classify_branch_curvature(build_weierstrass_minimal(1, 2))
    paths = rep.write(tmp_path)
    assert {p.name for p in paths} == {"curvature_report.json", "curvature_annuli.csv", "sec_log10.pgm"}
    doc = json.loads((tmp_path / "curvature_report.json").read_text())
    assert doc["predicted"] == doc["empirical"] == "BoundedLipschitz" and doc["agrees"]
    assert [a["j"] for a in doc["annuli"]] == list(range(3, 9))
    lines = (tmp_path / "curvature_annuli.csv").read_text().splitlines()
    assert lines[0] == "j,radius,sup_abs_sec,mean_abs_sec,mean_sec,growth,lipschitz_ratio"
    assert len(lines) == 7
    img = read_pgm(tmp_path / "sec_log10.pgm")
    assert img.shape == rep.sec_grid.values[0].shape
