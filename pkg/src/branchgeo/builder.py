"""Construction of branched surface maps as exact polynomial jets.

Maps come from the representation formula in regular branch coordinates
(real potentials phi_h and holomorphic F_h), from the Weierstrass data of a
branched minimal surface, or from reparametrizing / rotating an existing map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BuildRejected, ConstraintViolated, NotDiffeoGerm, NotDivisible, OrderTooLow, ShapeMismatch
from .fields import DiskGrid, GridField, fit_jet, iterated_poisson, sample_jet
from .jets import BiJet, divide_z_pow

MAX_HALVINGS = 8
CONSTRAINT_TOL = 1e-10


@dataclass
class AmbientMetric:
    """Conformally flat ambient metric exp(2 psi) |dy|^2.

    ``euclidean`` has psi = 0. ``sphere`` is the round unit-sphere metric in
    stereographic coordinates, exp(psi) = 2 / (1 + |y - center|^2).
    """

    kind: str = "euclidean"
    center: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "sphere"):
            raise ValueError(f"unknown ambient metric {self.kind!r}")

    @property
    def is_euclidean(self) -> bool:
        return self.kind == "euclidean"

    def _shift(self, y):
        y = np.asarray(y, dtype=float)
        c = np.zeros(y.shape[0]) if self.center is None else np.asarray(self.center, dtype=float)
        return y - c.reshape((-1,) + (1,) * (y.ndim - 1))

    def psi(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_euclidean:
            return np.zeros(y.shape[1:])
        q = np.sum(self._shift(y) ** 2, axis=0)
        return np.log(2.0) - np.log1p(q)

    def grad_psi(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_euclidean:
            return np.zeros_like(y)
        u = self._shift(y)
        q = np.sum(u ** 2, axis=0)
        return -2.0 * u / (1.0 + q)

    def hess_psi(self, y):
        y = np.asarray(y, dtype=float)
        n = y.shape[0]
        if self.is_euclidean:
            return np.zeros((n, n) + y.shape[1:])
        u = self._shift(y)
        q = 1.0 + np.sum(u ** 2, axis=0)
        eye = np.eye(n).reshape((n, n) + (1,) * (y.ndim - 1))
        return -2.0 * eye / q + 4.0 * u[:, None] * u[None, :] / q ** 2

    def to_dict(self):
        return {"kind": self.kind, "center": None if self.center is None else list(self.center)}

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return cls()
        c = d.get("center")
        return cls(d.get("kind", "euclidean"), None if c is None else tuple(c))


class SurfaceMap:
    """Map from a punctured disk to R^n given by real component jets."""

    def __init__(self, components: Sequence[BiJet], s: int, radius: float = 1.0,
                 grid: DiskGrid | None = None, metric: AmbientMetric | None = None, label: str = ""):
        comps = list(components)
        if len(comps) < 3:
            raise ShapeMismatch("surface maps need n >= 3 components", n=len(comps))
        for i, c in enumerate(comps):
            if not c.is_real(1e-10):
                raise ValueError(f"component {i} is not real")
        order = min(c.order for c in comps)
        if order < 2 * s + 4:
            raise OrderTooLow(f"component jets of order {order} < 2s+4 = {2 * s + 4}", order=order)
        self.components = [BiJet(c.coeffs, order, real=True) for c in comps]
        self.s = int(s)
        self.radius = float(radius)
        self.grid = grid
        self.metric = metric or AmbientMetric()
        self.label = label

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def order(self) -> int:
        return self.components[0].order

    def with_radius(self, radius: float, grid: DiskGrid | None = None) -> "SurfaceMap":
        return SurfaceMap(self.components, self.s, radius, grid, self.metric, self.label)

    def evaluate(self, z) -> np.ndarray:
        return np.array([c(z) for c in self.components])

    def dz_jets(self) -> list[BiJet]:
        return [c.dz() for c in self.components]

    def d_jets(self) -> list[BiJet]:
        """Jets of d = (df/dz) / ((s+1) z^s)."""
        return [divide_z_pow(c, self.s) / (self.s + 1) for c in self.dz_jets()]

    def sample(self, grid: DiskGrid | None = None) -> GridField:
        grid = grid or self.grid
        if grid is None:
            raise ValueError("no grid attached")
        return sample_jet(self.components, grid)

    def is_polynomial(self) -> bool:
        """True when every component's degree fits inside the jet (values are exact)."""
        return all(c.degree(1e-14) <= self.order for c in self.components)

    def to_dict(self) -> dict:
        return {"n": self.n, "s": self.s, "radius": self.radius, "label": self.label,
                "metric": self.metric.to_dict(),
                "grid": None if self.grid is None else self.grid.to_dict(),
                "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, d: dict) -> "SurfaceMap":
        comps = [BiJet.from_dict(c, real=True) for c in d["components"]]
        grid = DiskGrid.from_dict(d["grid"]) if d.get("grid") else None
        return cls(comps, int(d["s"]), float(d.get("radius", 1.0)), grid,
                   AmbientMetric.from_dict(d.get("metric")), d.get("label", ""))


@dataclass
class RepresentationData:
    """Potentials phi_h (real jets) and holomorphic F_h (coefficient lists)."""

    s: int
    phi: list
    F: list
    check: bool = True
    violations: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.phi) != len(self.F):
            raise ShapeMismatch("phi and F must have the same length", phi=len(self.phi), F=len(self.F))
        if len(self.phi) < 3:
            raise ShapeMismatch("need at least three components")
        self.F = [np.atleast_1d(np.asarray(f, dtype=complex)) for f in self.F]
        self.violations = self.constraint_violations()
        if self.check and self.violations:
            raise ConstraintViolated(f"origin constraint fails for components {self.violations}",
                                     components=self.violations)

    def constraint_violations(self, tol: float = CONSTRAINT_TOL) -> list[int]:
        s = self.s
        bad = []
        for h, (p, f) in enumerate(zip(self.phi, self.F)):
            lead = (-1) ** s * math.factorial(s) * p.derivative_at_zero(s + 1, 0)
            if abs(p.value) > tol or abs(lead + f[0]) > tol:
                bad.append(h)
        return bad

    def to_dict(self) -> dict:
        return {"s": self.s, "phi": [p.to_dict() for p in self.phi],
                "F": [[[float(c.real), float(c.imag)] for c in f] for f in self.F]}

    @classmethod
    def from_dict(cls, d: dict, check: bool = True, base_dir=None) -> "RepresentationData":
        """Parse the JSON form; ``{"l": ...}`` entries are turned into potentials.

        ``l`` may be a jet (exact inversion, or the grid solver when the entry
        has ``"numeric": true``) or the path of a GridField CSV on the grid
        given by the top-level ``"grid"`` key.
        """
        from pathlib import Path
        s = int(d["s"])
        order = int(d.get("order", 2 * s + 6))
        grid = DiskGrid.from_dict(d["grid"]) if d.get("grid") else None
        phis = []
        for entry in d["phi"]:
            if "l" in entry:
                src = entry["l"]
                if isinstance(src, str):
                    if grid is None:
                        raise ValueError("a GridField reference needs a top-level grid")
                    path = Path(src) if base_dir is None else Path(base_dir) / src
                    l = GridField.from_csv(path, grid)
                    phis.append(potential_from_l(l, s, order))
                else:
                    l = BiJet.from_dict(src, real=True)
                    g = (grid or DiskGrid(1.0, 256, 256)) if entry.get("numeric") else None
                    phis.append(potential_from_l(l, s, order, grid=g))
            else:
                phis.append(BiJet.from_dict(entry, real=True))
        Fs = []
        for f in d["F"]:
            Fs.append([complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c) for c in f])
        return cls(s, phis, Fs, check=check)


def strip_pure_terms(phi: BiJet) -> BiJet:
    """Drop the z^j and zbar^j terms (they are annihilated by d/dz d/dzbar)."""
    c = phi.coeffs.copy()
    c[:, 0] = 0.0
    c[0, :] = 0.0
    return BiJet(c, phi.order, real=phi.real)


def potential_from_l(l, s: int, order: int, grid: DiskGrid | None = None) -> BiJet:
    """A potential phi with (d/dz d/dzbar)^(s+1) phi = l and no pure terms.

    A jet ``l`` without a grid is inverted exactly. Otherwise ``l`` is solved on
    the grid by iterated Poisson and the result fitted back to a jet; for
    polynomial ``l`` the Dirichlet solution is itself a polynomial, so the fit
    recovers it up to solver error.
    """
    if isinstance(l, BiJet) and grid is None:
        return l.inverse_dzdzbar(s + 1)
    if isinstance(l, BiJet):
        field_l, deg_l = sample_jet(l, grid), l.degree(1e-14)
    else:
        field_l = l
        deg_l = fit_jet(l, order)[0].degree(1e-8)
    phi = iterated_poisson(field_l, s)
    # fitting beyond the true degree only feeds solver noise into high coefficients
    deg = min(order, deg_l + 2 * s + 2)
    fitted = fit_jet(phi, deg)[0].extend(order)
    return strip_pure_terms(BiJet(fitted.coeffs, order, real=True))


def random_representation(s: int, rng: np.random.Generator, n: int = 3, scale: float = 0.15,
                          deg_phi: int | None = None, deg_F: int = 3) -> RepresentationData:
    """Random data satisfying the origin constraint."""
    deg_phi = deg_phi or 2 * s + 4
    phis, Fs = [], []
    for _ in range(n):
        p = BiJet.random(deg_phi, rng, scale=scale, real=True)
        c = p.coeffs.copy()
        c[0, 0] = 0.0
        p = BiJet(c, deg_phi, real=True)
        f = scale * (rng.normal(size=deg_F + 1) + 1j * rng.normal(size=deg_F + 1))
        f[0] = -(-1) ** s * math.factorial(s) * p.derivative_at_zero(s + 1, 0)
        phis.append(p)
        Fs.append(f)
    return RepresentationData(s, phis, Fs)


def phi_term(phi: BiJet, s: int) -> BiJet:
    """sum_{j,k<=s} (-1)^(2s-j-k) (s!)^2/(j!k!) d^{j+k}phi/dzbar^j dz^k zbar^j z^k."""
    acc = None
    sf = math.factorial(s)
    for j in range(s + 1):
        dj = phi
        for _ in range(j):
            dj = dj.dzbar()
        for k in range(s + 1):
            d = dj
            for _ in range(k):
                d = d.dz()
            coef = (-1) ** (2 * s - j - k) * sf * sf / (math.factorial(j) * math.factorial(k))
            term = d.times_monomial(k, j) * coef
            acc = term if acc is None else acc + term
    return acc


def integral_term(F: Sequence[complex], s: int, order: int) -> BiJet:
    """2 Re of int_0^z w^s F(w) dw for a polynomial F."""
    poly = np.zeros(order + 1, dtype=complex)
    for i, c in enumerate(F):
        p = s + i + 1
        if p <= order:
            poly[p] = c / p
    h = BiJet.holomorphic(poly, order)
    return (h + h.conj()).re()


def leading_terms(s: int, order: int) -> tuple[BiJet, BiJet]:
    zp = BiJet.monomial(s + 1, 0, order)
    return (zp.re(), zp.im())


def build_from_representation(data: RepresentationData, order: int | None = None,
                              radius: float = 1.0, grid_shape: tuple[int, int] = (128, 128),
                              validate: bool = True, label: str = "representation") -> SurfaceMap:
    s = data.s
    order = order or 2 * s + 6
    if data.violations:
        raise ConstraintViolated(f"origin constraint fails for components {data.violations}",
                                 components=data.violations)
    comps = []
    re_lead, im_lead = leading_terms(s, order)
    for h, (p, f) in enumerate(zip(data.phi, data.F)):
        # potentials are polynomials, so padding them to the target order is exact
        c = phi_term(p.extend(max(p.order, order)), s).truncate(order)
        c = c + integral_term(f, s, order)
        if h == 0:
            c = c + re_lead
        elif h == 1:
            c = c + im_lead
        comps.append(c.re())
    fmap = SurfaceMap(comps, s, radius, label=label)
    if validate:
        fmap = choose_radius(fmap, radius, grid_shape)
    else:
        fmap = fmap.with_radius(radius, DiskGrid(radius, *grid_shape))
    return fmap


def build_null_minimal(s: int, gs: Sequence[Sequence[complex]], order: int | None = None,
                       radius: float = 1.0, grid_shape: tuple[int, int] = (128, 128),
                       validate: bool = True, label: str = "") -> SurfaceMap:
    """Conformal minimal map in R^(2+len(gs)) from holomorphic g_h with g_h(0) = 0.

    df/dz = (s+1) z^s ((1-p)/2, -i(1+p)/2, g_3, ..., g_n) with p = sum g_h^2,
    a null vector, so the map is conformal and harmonic.
    """
    if s < 1:
        raise ValueError("need s >= 1")
    deg = max(len(g) - 1 for g in gs)
    order = order or max(2 * s + 6, s + 1 + 2 * deg)
    g_jets = []
    for g in gs:
        if abs(g[0]) > 0:
            raise ValueError("each g_h must vanish at 0")
        g_jets.append(BiJet.holomorphic(list(g), order))
    p = BiJet.zeros(order)
    for g in g_jets:
        p = p + g * g
    d = [(1.0 - p) * 0.5, (1.0 + p) * (-0.5j)] + g_jets
    comps = []
    for dh in d:
        fz = dh.times_monomial(s, 0).truncate(order) * (s + 1)
        poly = np.zeros(order + 1, dtype=complex)
        for j in range(order):
            poly[j + 1] = fz.coeffs[j, 0] / (j + 1)
        hol = BiJet.holomorphic(poly, order)
        comps.append((hol + hol.conj()).re())
    fmap = SurfaceMap(comps, s, radius, label=label or f"null curve s={s} n={len(comps)}")
    if validate:
        return choose_radius(fmap, radius, grid_shape)
    return fmap.with_radius(radius, DiskGrid(radius, *grid_shape))


def build_weierstrass_minimal(s: int, k: int, scale: float = 1.0, n: int = 3,
                              order: int | None = None, radius: float = 1.0,
                              grid_shape: tuple[int, int] = (128, 128),
                              validate: bool = True) -> SurfaceMap:
    """Branched minimal surface with df/dz = (s+1) z^s ((1-g^2)/2, -i(1+g^2)/2, g), g = scale z^k.

    Extra components (n > 3) are identically zero.
    """
    if k < 1 or s < 1:
        raise ValueError("need s >= 1 and k >= 1")
    g = np.zeros(k + 1, dtype=complex)
    g[k] = scale
    gs = [g] + [np.zeros(2, dtype=complex)] * (n - 3)
    return build_null_minimal(s, gs, order, radius, grid_shape, validate, label=f"weierstrass s={s} k={k}")


def condition_margins(d_values: np.ndarray) -> dict:
    """Frontal determinant, |gamma| and the quasiregularity ratio from sampled d."""
    d1, d2 = d_values[0], d_values[1]
    det = -4.0 * d1.real * d2.imag + 4.0 * d1.imag * d2.real
    dp1 = 2.0 * d1 - 1.0
    dp2 = 2j * d2 - 1.0
    gamma = 1.0 + 0.5 * (dp1 + dp2)
    alpha = 0.5 * (dp1 - dp2)
    ratio = np.abs(alpha) / np.maximum(np.abs(gamma), 1e-300)
    return {"det_min": float(np.min(det)), "gamma_min": float(np.min(np.abs(gamma))),
            "ratio_max": float(np.max(ratio))}


def admissible(fmap: SurfaceMap, grid: DiskGrid, det_floor: float = 0.1, ratio_cap: float = 0.9) -> tuple[bool, dict]:
    dv = np.array([d(grid.z) for d in fmap.d_jets()])
    m = condition_margins(dv)
    ok = m["det_min"] >= det_floor and m["gamma_min"] >= det_floor and m["ratio_max"] <= ratio_cap
    return ok, m


def choose_radius(fmap: SurfaceMap, radius: float, grid_shape: tuple[int, int]) -> SurfaceMap:
    """Halve the radius until the branch-coordinate conditions hold with margin."""
    try:
        fmap.d_jets()
    except NotDivisible as exc:
        raise BuildRejected("map is not in branch coordinates at the origin", **exc.details) from exc
    r = radius
    history = []
    for _ in range(MAX_HALVINGS + 1):
        grid = DiskGrid(r, *grid_shape)
        ok, margins = admissible(fmap, grid)
        history.append({"radius": r, **margins})
        if ok:
            return fmap.with_radius(r, grid)
        r *= 0.5
    raise BuildRejected(f"no admissible radius after {MAX_HALVINGS} halvings", history=history)


def reparametrize(fmap: SurfaceMap, h: BiJet) -> SurfaceMap:
    """f o h for a germ h(z) = z e(z) with e(0) != 0."""
    if abs(h.value) > 1e-14:
        raise NotDiffeoGerm("h(0) must vanish")
    try:
        e = divide_z_pow(h, 1)
    except NotDivisible as exc:
        raise NotDiffeoGerm("h is not of the form z e(z)", **exc.details) from exc
    if abs(e.value) <= 1e-12:
        raise NotDiffeoGerm("e(0) = 0: h is not a diffeomorphism germ")
    comps = [c.compose(h) for c in fmap.components]
    return SurfaceMap(comps, fmap.s, fmap.radius, fmap.grid, fmap.metric, fmap.label + " reparametrized")


def block_rotation(theta: float, G: np.ndarray) -> np.ndarray:
    n = G.shape[0] + 2
    M = np.zeros((n, n))
    c, s = np.cos(theta), np.sin(theta)
    M[:2, :2] = [[c, -s], [s, c]]
    M[2:, 2:] = G
    return M


def random_block_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(n - 2, n - 2)))
    q = q * np.sign(np.diag(r))
    return block_rotation(rng.uniform(0, 2 * np.pi), q)


def ambient_rotate(fmap: SurfaceMap, M: np.ndarray) -> SurfaceMap:
    M = np.asarray(M, dtype=float)
    n = fmap.n
    if M.shape != (n, n):
        raise ShapeMismatch(f"rotation must be {n}x{n}", shape=list(M.shape))
    if not np.allclose(M @ M.T, np.eye(n), atol=1e-12):
        raise ValueError("matrix is not orthogonal")
    if np.abs(M[:2, 2:]).max(initial=0) > 1e-12 or np.abs(M[2:, :2]).max(initial=0) > 1e-12:
        raise ValueError("matrix is not block diagonal")
    comps = []
    for i in range(n):
        acc = BiJet.zeros(fmap.order)
        for j in range(n):
            if M[i, j] != 0:
                acc = acc + fmap.components[j] * float(M[i, j])
        comps.append(acc)
    return SurfaceMap(comps, fmap.s, fmap.radius, fmap.grid, fmap.metric, fmap.label + " rotated")


def sphere_patch(s: int, t: float = 0.5, order: int | None = None, radius: float = 0.5,
                 grid_shape: tuple[int, int] = (128, 128)) -> SurfaceMap:
    """Branched flat plane inside the round-sphere ambient metric (a totally umbilic patch)."""
    order = order or 2 * s + 6
    re_lead, im_lead = leading_terms(s, order)
    comps = [re_lead, im_lead, BiJet.zeros(order)]
    fmap = SurfaceMap(comps, s, radius, DiskGrid(radius, *grid_shape),
                      AmbientMetric("sphere", (0.0, 0.0, -t)), label=f"sphere patch s={s} t={t}")
    return fmap
