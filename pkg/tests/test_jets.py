import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchgeo.errors import NonExtendable, NotDivisible, OrderTooLow, ZeroOrderJet
from branchgeo.jets import (BiJet, ZOrder, conj_ratio_extend, divide_z_pow, extension_degree,
                            in_class_C, ord_z, ratio_extend)


def mono(j, k, order=8, c=1.0):
    return BiJet.monomial(j, k, order, c)


def test_mixed_derivative_of_modulus_power():
    f = mono(2, 2)
    out = f.dz().dzbar()
    expected = mono(1, 1, order=6, c=4.0)
    assert out.allclose(expected, 1e-15)


def test_division_example():
    f = mono(3, 0) + mono(2, 2)
    q = divide_z_pow(f, 2)
    assert q.allclose(mono(1, 0, 6) + mono(0, 2, 6), 1e-15)
    assert q.order == 6


def test_divide_reports_slots():
    f = mono(1, 0) + mono(0, 3)
    with pytest.raises(NotDivisible) as err:
        divide_z_pow(f, 2)
    assert err.value.details["slots"] == [(1, 0), (0, 3)]


def test_class_membership_examples():
    assert in_class_C(mono(3, 0), 1, 2)
    assert not in_class_C(BiJet.constant(1.0, 4), 0, 0)
    assert not in_class_C(mono(1, 1), 1, 2)
    with pytest.raises(OrderTooLow):
        in_class_C(mono(3, 0, order=3), 1, 4)


def test_zero_order_derivative():
    with pytest.raises(ZeroOrderJet):
        BiJet.constant(2.0, 0).dz()


@pytest.mark.parametrize("j,k", [(0, 0), (3, 1), (2, 4), (0, 5)])
def test_taylor_derivative_factorials(j, k):
    f = mono(j, k, c=2.5 - 1j)
    assert f.derivative_at_zero(j, k) == pytest.approx(math.factorial(j) * math.factorial(k) * (2.5 - 1j))


def test_evaluation_matches_monomials():
    rng = np.random.default_rng(0)
    f = BiJet.random(5, rng)
    z = rng.normal(size=7) + 1j * rng.normal(size=7)
    direct = sum(f.coeffs[j, k] * z ** j * np.conj(z) ** k for j in range(6) for k in range(6 - j))
    np.testing.assert_allclose(f(z), direct, rtol=1e-13)


def test_real_flag_symmetry():
    rng = np.random.default_rng(1)
    f = BiJet.random(6, rng, real=True)
    assert f.is_real()
    z = np.array([0.3 + 0.1j, -0.2j])
    assert np.isrealobj(f(z))
    # conj(d f / dz) = d f / dzbar for real f
    assert f.dzbar().allclose(f.dz().conj(), 1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_leibniz_and_reality_properties(seed):
    rng = np.random.default_rng(seed)
    f, g = BiJet.random(7, rng), BiJet.random(7, rng)
    assert (f * g).dz().allclose(f.dz() * g + f * g.dz(), 1e-9)
    assert (f * g).dzbar().allclose(f.dzbar() * g + f * g.dzbar(), 1e-9)
    assert f.conj().dzbar().allclose(f.dz().conj(), 1e-12)


def test_product_truncates_to_min_order():
    f = mono(1, 0, 4) + 1.0
    g = mono(0, 1, 6) + 1.0
    assert (f * g).order == 4


def test_power_and_reciprocal():
    rng = np.random.default_rng(2)
    f = BiJet.random(6, rng, scale=0.2) + 1.0
    r = f.power(1.0 / 3.0)
    assert (r * r * r).allclose(f, 1e-12)
    assert (f * f.reciprocal()).allclose(BiJet.constant(1.0, 6), 1e-12)


def test_compose_with_linear_map_is_exact():
    rng = np.random.default_rng(3)
    f = BiJet.random(5, rng)
    alpha, beta = 0.8 + 0.3j, 0.1 - 0.2j
    h = BiJet.from_terms({(1, 0): alpha, (0, 1): beta}, 5)
    fh = f.compose(h)
    z = 0.4 * np.exp(1j * np.linspace(0, 6, 9))
    np.testing.assert_allclose(fh(z), f(alpha * z + beta * np.conj(z)), rtol=1e-12)


def test_formal_inverse_round_trip():
    rng = np.random.default_rng(4)
    e = BiJet.from_terms({(1, 0): 1.2 + 0.1j, (0, 1): 0.3j}, 7) + BiJet.random(7, rng, scale=0.1) * BiJet.z(7) * BiJet.zbar(7)
    c = e.formal_inverse()
    assert e.compose(c).allclose(BiJet.z(7), 1e-11)
    assert c.compose(e).allclose(BiJet.z(7), 1e-11)


def test_conj_ratio_extension_matches_pointwise():
    rng = np.random.default_rng(5)
    s, n = 2, 10
    e = BiJet.z(n) ** s * BiJet.random(n - s, rng)
    w = conj_ratio_extend(e, s)
    z = 0.25 * np.exp(2j * np.pi * np.arange(64) / 64)
    pointwise = np.conj(z) ** s / z ** s * e(z)
    np.testing.assert_allclose(w(z), pointwise, atol=1e-10)


def test_non_extendable_negative_case():
    with pytest.raises(NonExtendable) as err:
        conj_ratio_extend(BiJet.constant(1.0, 6), 1)
    assert err.value.details["slot"] == [0, 0]


def test_extension_degree_of_homogeneous_terms():
    # zbar^3 e / z^3 with e = zbar^2: term zbar^5 / z^3 has degree 2 -> C^(1,1)
    e = mono(0, 2, 8)
    assert extension_degree(e, 3) == ZOrder(1)
    w = conj_ratio_extend(e, 3, k=1)
    assert w.order == 1 and w.max_abs() == 0.0
    with pytest.raises(NonExtendable):
        conj_ratio_extend(e, 3, k=2)


def test_ratio_extend_truncates_at_smoothness():
    # (z^3 - zbar^5) / z^3 = 1 - zbar^5 / z^3, smooth up to order 1
    f = mono(3, 0, 9) - mono(0, 5, 9)
    q, deg = ratio_extend(f, 0, 3)
    assert deg == ZOrder(1)
    assert q.allclose(BiJet.constant(1.0, 1), 1e-15)


def test_ord_z_basic_and_truncation():
    assert ord_z(mono(3, 0) + mono(0, 1)) == ZOrder(3)
    lim = ord_z(mono(1, 1, order=5))
    assert lim.limited and lim.value == 6
    assert str(lim) == ">=6"
    assert ZOrder(5) < lim
    assert ord_z([mono(4, 0), mono(2, 0) + mono(2, 1)]) == ZOrder(2)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_zorder_rules(seed):
    rng = np.random.default_rng(seed)
    n = 9

    def vanishing(p):
        f = BiJet.random(n, rng)
        c = f.coeffs.copy()
        c[:p, 0] = 0.0
        c[0, 0] = 0.0
        return BiJet(c, n)

    f, g = vanishing(rng.integers(1, 5)), vanishing(rng.integers(1, 5))
    e = BiJet.random(n, rng, scale=0.3) + 1.0
    of, og = ord_z(f), ord_z(g)
    assert ord_z(e * f) == of
    assert ord_z(f + g) >= min(of, og)
    if of < og:
        assert ord_z(f + g) == of
    assert ord_z(f * g) == of + og
    assert ord_z([f, g]) == min(of, og)
    assert ord_z(BiJet.zbar(n) * f).limited


def test_class_product_rule():
    rng = np.random.default_rng(6)
    s, k1, k2, n = 1, 1, 2, 8

    def member(k):
        c = BiJet.random(n, rng).coeffs
        for j in range(s + 1):
            c[j, : k - j + 1] = 0.0
        return BiJet(c, n)

    f, g = member(k1), member(k2)
    assert in_class_C(f, s, k1) and in_class_C(g, s, k2)
    assert in_class_C(f * g, s, k1 + k2 + 1)


def test_json_round_trip():
    rng = np.random.default_rng(7)
    f = BiJet.random(4, rng)
    data = json.loads(f.to_json())
    assert data["order"] == 4
    assert all(len(row) == 4 for row in data["coeffs"])
    assert BiJet.from_dict(data).allclose(f, 0.0)


def test_json_rejects_bad_slot():
    with pytest.raises(ValueError):
        BiJet.from_dict({"order": 2, "coeffs": [[2, 1, 1.0, 0.0]]})


def test_inverse_mixed_laplacian():
    l = mono(1, 0, 4) + mono(0, 1, 4) + 2.0
    phi = l.inverse_dzdzbar(2)
    assert phi.dz().dzbar().dz().dzbar().allclose(l, 1e-14)
    assert ord_z(phi).limited
