"""Seeded verification suites behind ``branchgeo verify``.

Each suite returns a list of :class:`Check` rows. The seed fully determines
every random draw, so two runs produce identical tables.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass

import numpy as np

from .branch import (analyze, detect_branch_order, distinguished_coefficient, extract_branch_data,
                     index_and_degree, check_estimate, mean_curvature_extension)
from .builder import (block_rotation, build_from_representation, build_null_minimal,
                      build_weierstrass_minimal, random_block_rotation, random_representation,
                      reparametrize, ambient_rotate, sphere_patch)
from .errors import NonExtendable
from .fields import DiskGrid, iterated_poisson, iterated_residual, laplacian_grid, sample_jet
from .geometry import (LocalGeometry, classical_curvatures, classify_branch_curvature, frame_matrix, gram,
                       right_product)
from .jets import BiJet, conj_ratio_extend, divide_z_pow, ord_z
from .normalize import beltrami_residual, build_normalizing_diffeo, normalized_components

_OPS = {"<=": operator.le, ">=": operator.ge, "==": operator.eq}


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    op: str = "<="

    @property
    def passed(self) -> bool:
        v = self.value
        if isinstance(v, float) and math.isnan(v):
            return False
        return bool(_OPS[self.op](v, self.threshold))

    def row(self):
        return [self.name, self.value, self.op, self.threshold, "pass" if self.passed else "fail"]


HEADER = ["check", "value", "op", "threshold", "result"]

WEIERSTRASS = [(s, k) for s in (1, 2) for k in (1, 2, 3)]
NULL_N4 = [(1, [[0, 1.0, 0.3], [0, 0, 0.5j]]), (1, [[0, 1.0], [0, 1.0j]]), (2, [[0, 0.5, 0, 0.2], [0, 0, 0.4]])]


def weierstrass_fixtures() -> dict:
    return {(s, k): build_weierstrass_minimal(s, k) for s, k in WEIERSTRASS}


def null_fixtures() -> list:
    return [build_null_minimal(s, gs) for s, gs in NULL_N4]


def minimal_fixtures() -> list:
    return list(weierstrass_fixtures().values()) + null_fixtures()


# ------------------------------------------------------------------- jets
def _vanishing(n, rng, p):
    c = BiJet.random(n, rng).coeffs
    c[:p, 0] = 0.0
    return BiJet(c, n)


def suite_zorder(seed: int, n_jets: int = 1000) -> list[Check]:
    rng = np.random.default_rng(seed)
    n = 9
    fails = dict.fromkeys(["unit_factor", "sum_lower_bound", "sum_strict", "product", "vector_min", "zbar_factor"], 0)
    for _ in range(n_jets):
        f, g = _vanishing(n, rng, int(rng.integers(1, 5))), _vanishing(n, rng, int(rng.integers(1, 5)))
        e = BiJet.random(n, rng, scale=0.3) + 1.0
        of, og = ord_z(f), ord_z(g)
        fails["unit_factor"] += ord_z(e * f) != of
        fails["sum_lower_bound"] += not ord_z(f + g) >= min(of, og)
        fails["sum_strict"] += of != og and ord_z(f + g) != min(of, og)
        fails["product"] += ord_z(f * g) != of + og
        fails["vector_min"] += ord_z([f, g]) != min(of, og)
        fails["zbar_factor"] += not ord_z(BiJet.zbar(n) * f).limited
    checks = [Check(f"ord_z {k} failures", v, 0, "==") for k, v in fails.items()]

    div_err, ext_err, ext_mul = 0.0, 0.0, 0.0
    for _ in range(n_jets // 10):
        p = int(rng.integers(1, 4))
        c = BiJet.random(n - p, rng)
        built = c.times_monomial(p, 0)
        div_err = max(div_err, (divide_z_pow(built, p) - c).max_abs())
        s = int(rng.integers(1, 3))
        target = BiJet.random(n - s, rng)
        # e = z^s g  =>  (zbar^s / z^s) e = zbar^s g
        e = target.times_monomial(s, 0)
        ext = conj_ratio_extend(e, s)
        ext_err = max(ext_err, (ext - target.times_monomial(0, s).truncate(ext.order)).max_abs())
        back = ext.times_monomial(s, 0).truncate(e.order)
        ext_mul = max(ext_mul, (back - e.times_monomial(0, s).truncate(e.order)).max_abs())
    checks += [Check("divide_z_pow round trip", div_err, 0.0, "=="),
               Check("conj_ratio_extend round trip", ext_err, 0.0, "=="),
               Check("conj_ratio_extend times z^s", ext_mul, 0.0, "==")]
    try:
        conj_ratio_extend(BiJet.constant(1.0, 6), 1)
        raised = 0
    except NonExtendable:
        raised = 1
    checks.append(Check("e(0) != 0 is not extendable", raised, 1, "=="))
    return checks


# ---------------------------------------------------------- representation
def _phi_sum(p: BiJet, s: int) -> BiJet:
    out = BiJet.zeros(p.order)
    for j in range(s + 1):
        d = p
        for _ in range(s + 1):
            d = d.dz()
        for _ in range(j):
            d = d.dzbar()
        out = (out.truncate(d.order) if out.order > d.order else out) + d.times_monomial(0, j) * (
            (-1) ** (s - j) * math.factorial(s) / math.factorial(j))
    return out


def representation_residuals(data, f) -> dict:
    """Jet residuals of the z-derivative and mixed-derivative identities, and the grid check."""
    s = data.s
    dz_err, mixed_err = 0.0, 0.0
    lead = [(s + 1) / 2, -0.5j * (s + 1)]
    for h in range(f.n):
        p = data.phi[h].extend(f.order)
        pred = (_phi_sum(p, s) + BiJet.holomorphic(data.F[h], p.order)).times_monomial(s, 0)
        if h < 2:
            pred = pred + BiJet.monomial(s, 0, pred.order, lead[h])
        fz = f.components[h].dz()
        m = min(fz.order, pred.order)
        dz_err = max(dz_err, (fz.truncate(m) - pred.truncate(m)).max_abs())
        mixed = f.components[h].dz().dzbar()
        rhs = _dzdzbar_pow(p, s).times_monomial(s, s)
        m = min(mixed.order, rhs.order)
        mixed_err = max(mixed_err, (mixed.truncate(m) - rhs.truncate(m)).max_abs())
    g = f.grid
    lap = laplacian_grid(f.sample(g), order=8).values / 4.0
    r2s = np.abs(g.z) ** (2 * s)
    target = np.array([r2s * _dzdzbar_pow(p, s)(g.z) for p in data.phi]).real
    mask = np.zeros(g.shape, bool)
    mask[3:-3] = True
    grid_err = float(np.abs(lap - target)[:, mask].max() / max(np.abs(target)[:, mask].max(), 1e-300))
    d0 = [c.value for c in f.d_jets()]
    d0_err = max(abs(d0[0] - 0.5), abs(d0[1] + 0.5j), *(abs(v) for v in d0[2:]))
    return {"dz": dz_err, "mixed": mixed_err, "grid": grid_err, "d0": d0_err}


def _dzdzbar_pow(p: BiJet, s: int) -> BiJet:
    L = p
    for _ in range(s + 1):
        L = L.dz().dzbar()
    return L


def suite_representation(seed: int, count: int = 50) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = {"dz": 0.0, "mixed": 0.0, "grid": 0.0, "d0": 0.0}
    for i in range(count):
        s = 1 + i % 2
        data = random_representation(s, rng)
        f = build_from_representation(data)
        for k, v in representation_residuals(data, f).items():
            worst[k] = max(worst[k], v)
    return [Check("df/dz identity on jets (max coeff)", worst["dz"], 1e-10),
            Check("mixed derivative identity on jets (max coeff)", worst["mixed"], 1e-10),
            Check("mixed derivative vs grid finite differences (rel)", worst["grid"], 1e-6),
            Check("d(0) = (1/2, -i/2, 0...)", worst["d0"], 1e-10)]


def suite_poisson(seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    grid = DiskGrid(1.0, 256, 256)
    out = []
    for s in (1, 2):
        l = BiJet.random(3, rng, real=True)
        phi = iterated_poisson(sample_jet(l, grid), s)
        out.append(Check(f"Lap^(s+1) phi = 4^(s+1) l, s={s} (rel)", iterated_residual(phi, sample_jet(l, grid), s),
                         1e-3))
        out.append(Check(f"boundary values s={s}", float(np.abs(phi.values[0, -1]).max()), 1e-12))
    return out


# ------------------------------------------------------------------ branch
def _fixture_set(seed: int):
    rng = np.random.default_rng(seed)
    fx = [(s, f) for (s, _), f in weierstrass_fixtures().items()]
    fx += [(s, f) for (s, _), f in zip(NULL_N4, null_fixtures())]
    for i in range(4):
        s = 1 + i % 2
        fx.append((s, build_from_representation(random_representation(s, rng))))
    fx += [(s, sphere_patch(s)) for s in (1, 2)]
    return fx


def suite_branch(seed: int) -> list[Check]:
    wrong, d0 = 0, 0.0
    for s, f in _fixture_set(seed):
        wrong += detect_branch_order(f) != s
        bd = extract_branch_data(f)
        v = [c.value for c in bd.d]
        d0 = max(d0, abs(v[0] - 0.5), abs(v[1] + 0.5j), *(abs(x) for x in v[2:]))
    return [Check("detected order mismatches", wrong, 0, "=="), Check("d(0) canonical values", d0, 1e-10)]


def random_diffeo_germ(rng, order: int) -> BiJet:
    """h = z e(z) with e(0) a random nonzero complex number and small higher terms."""
    e0 = complex(rng.uniform(0.5, 1.5) * np.exp(1j * rng.uniform(0, 2 * np.pi)))
    e = BiJet.random(2, rng, scale=0.2).extend(order - 1)
    c = e.coeffs.copy()
    c[0, 0] = e0
    return BiJet(c, order - 1).times_monomial(1, 0)


def suite_invariance(seed: int, count: int = 20) -> list[Check]:
    rng = np.random.default_rng(seed)
    fixtures = list(weierstrass_fixtures().values()) + null_fixtures()
    changed = 0
    for i in range(count):
        f = fixtures[i % len(fixtures)]
        base = index_and_degree(f)
        h = random_diffeo_germ(rng, f.order)
        g = reparametrize(f, h)
        changed += index_and_degree(g, f.s) != base
        M = random_block_rotation(f.n, rng)
        changed += index_and_degree(ambient_rotate(f, M), f.s) != base
    return [Check("index/degree changes under reparametrization and rotation", changed, 0, "==")]


def suite_estimate(seed: int) -> list[Check]:
    fails, eq_fails, eq_count = 0, 0, 0
    for s, f in _fixture_set(seed):
        rep = analyze(f)
        if not rep.flags.get("conformal"):
            continue
        fails += rep.estimate["status"] == "fail"
    for (s, k), f in weierstrass_fixtures().items():
        iota, rho = index_and_degree(f)
        est = check_estimate(iota, rho, s, f.n)
        eq_count += 1
        eq_fails += not (est["equality"] is True and iota.value == s + k and rho.value == 2 * k)
    return [Check("rho >= 2(iota - s) violations on conformal fixtures", fails, 0, "=="),
            Check("n = 3 Weierstrass equality failures", eq_fails, 0, "=="),
            Check("n = 3 Weierstrass fixtures checked", eq_count, 6, "==")]


# --------------------------------------------------------------- normalize
def suite_normalize(seed: int) -> list[Check]:
    comp, belt, c0, b0, rec = 0.0, 0.0, np.inf, 0.0, 0.0
    for (s, k), f in weierstrass_fixtures().items():
        bd = extract_branch_data(f)
        dif = build_normalizing_diffeo(f, bd)
        comp = max(comp, dif.composition_residual(0.5))
        varpi = distinguished_coefficient(bd).grid
        belt = max(belt, float(beltrami_residual(dif, varpi, "grid").values.max()))
        c0 = min(c0, abs(dif.c0_at_zero))
        nc = normalized_components(f, bd, dif, seed=seed)
        b0 = max(b0, float(np.abs(nc.b_at_zero).max()))
        rec = max(rec, nc.reconstruction_residual)
    return [Check("max |a(c(w)) - w^(s+1)| on half disk", comp, 1e-6),
            Check("Beltrami residual (grid derivatives)", belt, 1e-6),
            Check("min |c0(0)|", c0, 0.5, ">="),
            Check("max |b_h(0)|", b0, 1e-10),
            Check("reconstruction residual", rec, 1e-6)]


# ----------------------------------------------------------------- frontal
def _rel(a, b):
    return float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))


def random_frame(rng, n: int) -> np.ndarray:
    """Random frame with singular values in [0.5, 2] (condition number <= 4)."""
    q1, _ = np.linalg.qr(rng.normal(size=(n, n)))
    q2, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return q1 @ np.diag(rng.uniform(0.5, 2.0, n)) @ q2


def frame_algebra_residuals(rng, n: int) -> dict:
    k, s, h = int(rng.integers(1, n + 1)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    E = random_frame(rng, n)
    U, V = rng.normal(size=(n, k)), rng.normal(size=(n, k))
    F = rng.normal(size=(k, s))
    A = rng.normal(size=(s, h))
    lam = rng.normal()
    EU = frame_matrix(E, U)
    out = {}
    out["frame linearity"] = _rel(frame_matrix(E, lam * U + V), lam * EU + frame_matrix(E, V))
    F2 = rng.normal(size=(k, s))
    out["frame bilinearity"] = max(_rel(right_product(lam * U + V, F), lam * right_product(U, F) + right_product(V, F)),
                                 _rel(right_product(U, lam * F + F2), lam * right_product(U, F) + right_product(U, F2)))
    out["frame EE = Id"] = _rel(frame_matrix(E, E), np.eye(n))
    out["frame E(EU) = U"] = _rel(right_product(E, EU), U)
    U_dep = U.copy()
    if k >= 2:
        U_dep[:, -1] = U_dep[:, 0] * 2.0
    out["frame independence vs rank"] = float(
        (np.linalg.matrix_rank(EU) != k) + (k >= 2 and np.linalg.matrix_rank(frame_matrix(E, U_dep)) == k))
    out["frame U Id = U"] = _rel(right_product(U, np.eye(k)), U)
    out["frame associativity"] = _rel(right_product(right_product(U, F), A), right_product(U, F @ A))
    out["frame (EU)F = E(UF)"] = _rel(EU @ F, frame_matrix(E, right_product(U, F)))
    Ui = U if k <= n else U[:, :n]
    Asing = rng.normal(size=(Ui.shape[1], Ui.shape[1]))
    if Ui.shape[1] >= 2:
        Asing[:, -1] = Asing[:, 0]
    rank_ok = (np.linalg.matrix_rank(right_product(Ui, Asing)) == Ui.shape[1]) == (
        np.linalg.matrix_rank(Asing) == Ui.shape[1])
    out["frame rank of UA"] = float(not rank_ok)
    M = random_frame(rng, n)
    out["frame change of basis"] = _rel(frame_matrix(right_product(E, np.linalg.inv(M)), U), M @ EU)

    # metric products
    Lg = random_frame(rng, n)
    G = Lg @ Lg.T
    W = rng.normal(size=(n, s))
    Bm = rng.normal(size=(s, h))
    Am = rng.normal(size=(k, h))
    out["metric bilinearity"] = _rel(gram(lam * U + V, W, G), lam * gram(U, W, G) + gram(V, W, G))
    out["metric symmetry"] = _rel(gram(U, W, G), gram(W, U, G).T)
    Lc = np.linalg.cholesky(G)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    Eo = np.linalg.inv(Lc.T) @ Q
    out["metric orthonormal frame reduction"] = _rel(gram(U, W, G), frame_matrix(Eo, U).T @ frame_matrix(Eo, W))
    out["metric right factors"] = max(_rel(gram(right_product(U, Am), W, G), Am.T @ gram(U, W, G)),
                                   _rel(gram(U, right_product(W, Bm), G), gram(U, W, G) @ Bm))
    out["metric general frame reduction"] = _rel(gram(U, W, G), EU.T @ gram(E, E, G) @ frame_matrix(E, W))
    Qk = right_product(Eo, np.linalg.qr(rng.normal(size=(n, n)))[0][:, :min(k, n)])
    on_ambient = _rel(gram(Qk, Qk, G), np.eye(Qk.shape[1]))
    on_frame = _rel(frame_matrix(Eo, Qk).T @ frame_matrix(Eo, Qk), np.eye(Qk.shape[1]))
    out["metric orthonormality criterion"] = max(on_ambient, on_frame)
    return out


def rotation_relation_residual(f, rng) -> float:
    """max |B' - G B D^t| for a rotated rebuild f' = M f with M = diag(D, G)."""
    th = rng.uniform(0, 2 * np.pi)
    Gq, _ = np.linalg.qr(rng.normal(size=(f.n - 2, f.n - 2)))
    M = block_rotation(th, Gq)
    g = ambient_rotate(f, M)
    z = 0.6 * f.radius * np.sqrt(rng.uniform(0.01, 1, 64)) * np.exp(2j * np.pi * rng.uniform(size=64))
    B = LocalGeometry(f, z).B
    Bp = LocalGeometry(g, z).B
    D = M[:2, :2]
    return float(np.abs(Bp - Gq @ B @ D.T).max())


def suite_frontal(seed: int, count: int = 500) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(count):
        n = int(rng.integers(3, 7))
        for k, v in frame_algebra_residuals(rng, n).items():
            worst[k] = max(worst.get(k, 0.0), v)
    checks = [Check(k, v, 1e-12) for k, v in worst.items()]
    rot = 0.0
    for f in list(weierstrass_fixtures().values())[:3] + null_fixtures():
        rot = max(rot, rotation_relation_residual(f, rng))
    checks.append(Check("B' = G B D^t on rotated rebuilds", rot, 1e-8))
    return checks


# --------------------------------------------------------------- curvature
def suite_curvature(seed: int) -> list[Check]:
    idn, gb, hv = 0.0, 0.0, 0.0
    for f in minimal_fixtures() + [sphere_patch(1), sphere_patch(2)]:
        cur = classical_curvatures(f)
        idn = max(idn, cur["shape_identity_residual"], cur["K_scaling_residual"], cur["H_scaling_residual"],
                  cur["Hvec_scaling_residual"])
        gb = max(gb, cur["gauss_brioschi_residual"])
        if f.metric.is_euclidean:
            hv = max(hv, float(np.abs(cur["mean_curvature"]).max()))
    return [Check("relative/classical scaling identities", idn, 1e-6),
            Check("Gauss equation vs Brioschi", gb, 1e-4),
            Check("|H| on minimal fixtures", hv, 1e-6)]


def suite_classification(seed: int) -> list[Check]:
    out = []
    disagree = 0
    for (s, k), f in weierstrass_fixtures().items():
        rep = classify_branch_curvature(f)
        disagree += not rep.agrees
        if (s, k) == (1, 1):
            out.append(Check("s=1 iota=2 classified Divergent", int(rep.empirical == "Divergent"), 1, "=="))
            out.append(Check("s=1 iota=2 min growth per halving", min(rep.growth), 4.0, ">="))
        if (s, k) == (1, 2):
            out.append(Check("s=1 iota=3 classified BoundedLipschitz",
                             int(rep.empirical == "BoundedLipschitz"), 1, "=="))
            c = rep.lipschitz_constants
            out.append(Check("s=1 iota=3 Lipschitz constant variation", c[-1] / c[0] - 1.0, 0.2))
    out.append(Check("predicted vs empirical disagreements", disagree, 0, "=="))
    return out


def sphere_mean_curvature_error(s: int, t: float = 0.5) -> float:
    f = sphere_patch(s, t)
    bd = extract_branch_data(f)
    mc = mean_curvature_extension(f, bd)
    z = bd.grid.z
    exact = np.zeros((3,) + z.shape)
    exact[2] = t * (1 + np.abs(z) ** (2 * s + 2) + t * t) / 2
    at0 = np.array([0.0, 0.0, t * (1 + t * t) / 2])
    return max(float(np.abs(mc.grid.values - exact).max()), float(np.abs(mc.at_zero - at0).max()))


def suite_mean_curvature(seed: int) -> list[Check]:
    sup = 0.0
    for f in minimal_fixtures():
        mc = mean_curvature_extension(f, extract_branch_data(f))
        sup = max(sup, mc.sup)
    sph = max(sphere_mean_curvature_error(s) for s in (1, 2))
    return [Check("|H| on minimal fixtures incl. value at 0", sup, 1e-6),
            Check("sphere patch vs closed form", sph, 1e-4)]


SUITES = {"zorder": suite_zorder, "representation": suite_representation, "poisson": suite_poisson,
          "branch": suite_branch, "invariance": suite_invariance, "estimate": suite_estimate,
          "normalize": suite_normalize, "frontal": suite_frontal, "curvature": suite_curvature,
          "classification": suite_classification, "mean_curvature": suite_mean_curvature}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name == "all":
        out = []
        for key, fn in SUITES.items():
            out += [Check(f"{key}: {c.name}", c.value, c.threshold, c.op) for c in fn(seed)]
        return out
    return SUITES[name](seed)
