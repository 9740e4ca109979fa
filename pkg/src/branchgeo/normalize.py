"""The normalizing diffeomorphism c with (f1 + i f2) o c = w^(s+1).

The inverse e(z) = z (a(z) / z^(s+1))^(1/(s+1)) is explicit; c is obtained
by Newton inversion of e node by node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .branch import BranchData
from .builder import SurfaceMap
from .errors import NewtonDiverged, OrderTooLow, RootBranchAmbiguous
from .fields import DiskGrid, GridField, dz_grid, line_integral
from .jets import BiJet, ZOrder, divide_z_pow, ratio_extend

NEWTON_MAX_ITER = 50
NEWTON_RTOL = 1e-10
MAX_BISECTIONS = 30


class PrincipalPart:
    """a = f1 + i f2 with its Wirtinger derivatives and e = a^(1/(s+1)) lifted from 1."""

    def __init__(self, f: SurfaceMap):
        self.s = f.s
        self.a = f.components[0] + f.components[1] * 1j
        self.a_z = self.a.dz()
        self.a_zbar = self.a.dzbar()

    def q(self, z):
        return self.a(z) / z ** (self.s + 1)

    def e(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        nz = z != 0
        out[nz] = z[nz] * self.q(z[nz]) ** (1.0 / (self.s + 1))
        return out

    def e_derivatives(self, z):
        """(e_z, e_zbar) by the chain rule through q = a / z^(s+1)."""
        z = np.asarray(z, dtype=complex)
        s = self.s
        q = self.q(z)
        root = q ** (1.0 / (s + 1))
        q_z = (self.a_z(z) - (s + 1) * self.a(z) / z) / z ** (s + 1)
        q_zb = self.a_zbar(z) / z ** (s + 1)
        fac = z / (s + 1) * root / q
        return root + fac * q_z, fac * q_zb


def check_root_branch(pp: PrincipalPart, grid: DiskGrid) -> float:
    """Lift arg q continuously from 0 along rays and around circles.

    The principal root is the continuous lift only if the lifted argument
    stays inside (-pi, pi); returns the largest |arg q| seen.
    """
    z = grid.z
    q = pp.q(z)
    if np.abs(q).min() <= 1e-12:
        raise RootBranchAmbiguous("a(z)/z^(s+1) vanishes on the grid", min_abs=float(np.abs(q).min()))
    ang = np.angle(q)
    if grid.mode == "polar":
        # rays: prepend the value arg q(0) = 0
        rays = np.concatenate([np.zeros((1, ang.shape[1])), ang], axis=0)
        lifted = np.unwrap(rays, axis=0)[1:]
        circ = np.unwrap(np.concatenate([lifted, lifted[:, :1]], axis=1), axis=1)
        winding = np.abs(circ[:, -1] - circ[:, 0]).max()
        if winding > 1e-6:
            raise RootBranchAmbiguous("nonzero winding of a(z)/z^(s+1) around a grid circle",
                                      winding=float(winding))
    else:
        lifted = ang
    peak = float(np.abs(lifted).max())
    if peak >= np.pi - 1e-8:
        raise RootBranchAmbiguous("lifted root leaves the principal branch", max_arg=peak)
    return peak


def invert(pp: PrincipalPart, w, seed=None, tol: float = 1e-12):
    """Solve e(z) = w pointwise; Newton first, continuation along the ray t w for failures."""
    w = np.asarray(w, dtype=complex)
    z = np.array(w if seed is None else seed, dtype=complex)
    z, ok = _newton(pp, w, z, tol)
    if not ok.all():
        bad = np.nonzero(~ok.ravel())[0]
        flat_z = z.ravel()
        flat_w = w.ravel()
        for i in bad:
            zi, good = _continuation(pp, flat_w[i], tol)
            if not good:
                raise NewtonDiverged("inverse iteration failed", nodes=[int(j) for j in bad[:50]])
            flat_z[i] = zi
        z = flat_z.reshape(w.shape)
    return z


def _newton(pp: PrincipalPart, w, z, tol):
    z = z.copy()
    zero = w == 0
    for _ in range(NEWTON_MAX_ITER):
        z[zero] = 0.0
        live = ~zero
        r = np.zeros_like(w)
        r[live] = w[live] - pp.e(z[live])
        if np.all(np.abs(r) <= tol):
            break
        ez, ezb = pp.e_derivatives(np.where(live, z, 1.0))
        jac = np.abs(ez) ** 2 - np.abs(ezb) ** 2
        step = (np.conj(ez) * r - ezb * np.conj(r)) / jac
        step[zero] = 0.0
        z = z + step
        if not np.all(np.isfinite(z)):
            z[~np.isfinite(z)] = w[~np.isfinite(z)]
    r = np.where(zero, 0.0, w - pp.e(np.where(zero, 1.0, z)))
    return z, np.abs(r) <= tol


def _continuation(pp: PrincipalPart, w: complex, tol: float):
    t, dt = 0.0, 0.25
    z = 0j
    halvings = 0
    while t < 1.0:
        t1 = min(1.0, t + dt)
        target = np.array([t1 * w])
        zn, ok = _newton(pp, target, np.array([z]), tol)
        if ok[0]:
            t, z = t1, zn[0]
            dt = min(2 * dt, 0.25)
        else:
            dt *= 0.5
            halvings += 1
            if halvings > MAX_BISECTIONS:
                return z, False
    return z, True


@dataclass
class Diffeo:
    s: int
    z_grid: DiskGrid
    w_grid: DiskGrid
    e_values: GridField
    c_values: GridField
    e_jet: BiJet
    c_jet: BiJet
    jet_degree: ZOrder
    domain_radius: float
    principal: PrincipalPart = field(repr=False)
    max_arg: float = 0.0

    @property
    def c0_at_zero(self) -> complex:
        c0, _ = ratio_extend(self.c_jet, 0, 1)
        return c0.value

    def c(self, w):
        return invert(self.principal, w)

    def c_derivatives(self, w, cw=None):
        """(c_w, c_wbar) at the points w (cw = c(w) if already known)."""
        z = self.c(w) if cw is None else cw
        ez, ezb = self.principal.e_derivatives(z)
        jac = np.abs(ez) ** 2 - np.abs(ezb) ** 2
        return np.conj(ez) / jac, -ezb / jac

    def composition_residual(self, radius_fraction: float = 0.5) -> float:
        """max |a(c(w)) - w^(s+1)| over w-grid nodes with |w| <= fraction * R."""
        w = self.w_grid.z
        mask = np.abs(w) <= radius_fraction * self.w_grid.radius * (1 + 1e-12)
        a = self.principal.a(self.c_values.values[0][mask])
        return float(np.abs(a - w[mask] ** (self.s + 1)).max())

    def roundtrip_residual(self, radius_fraction: float = 0.5) -> float:
        """max |c(e(z)) - z| on the z-grid nodes with |z| <= fraction * R."""
        z = self.z_grid.z
        mask = np.abs(z) <= radius_fraction * self.z_grid.radius * (1 + 1e-12)
        back = invert(self.principal, self.e_values.values[0][mask])
        return float(np.abs(back - z[mask]).max())

    def to_csv(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        return (self.c_values.to_csv(out_dir / "diffeo_c_w.csv"),
                self.e_values.to_csv(out_dir / "diffeo_e_z.csv"))


def build_normalizing_diffeo(f: SurfaceMap, bd: BranchData, w_shape: tuple[int, int] | None = None) -> Diffeo:
    s = bd.s
    pp = PrincipalPart(f)
    zg = bd.grid
    max_arg = check_root_branch(pp, zg)
    e_vals = pp.e(zg.z)

    # jets: q = a / z^(s+1) up to its smoothness degree
    q_jet, deg = ratio_extend(pp.a, 0, s + 1)
    order = q_jet.order + 1
    root = q_jet.power(1.0 / (s + 1), root_at_zero=1.0)
    e_jet = root.extend(q_jet.order).times_monomial(1, 0)
    if e_jet.order < 1:
        raise OrderTooLow("e jet needs order >= 1")
    c_jet = e_jet.formal_inverse()

    # domain of c: the largest disk inside e(outer circle)
    if zg.mode == "polar":
        outer = np.abs(e_vals[-1]).min()
    else:
        rz = np.abs(zg.z)
        outer = np.abs(e_vals[rz >= 0.95 * rz.max()]).min()
    w_radius = float(min(outer, zg.radius)) * (1 - 1e-9)
    shape = w_shape or zg.shape
    wg = DiskGrid(w_radius, *shape, mode=zg.mode)
    w = wg.z
    c_vals = np.zeros_like(w)
    if wg.mode == "polar":
        seed = w[0].copy()
        prev_r = np.abs(w[0, 0])
        for i in range(w.shape[0]):
            r = np.abs(w[i, 0])
            seed = seed * (r / prev_r) if i else seed
            c_vals[i] = invert(pp, w[i], seed=seed, tol=NEWTON_RTOL * zg.radius)
            seed, prev_r = c_vals[i], r
    else:
        c_vals = invert(pp, w, tol=NEWTON_RTOL * zg.radius)
    return Diffeo(s, zg, wg, GridField(zg, e_vals), GridField(wg, c_vals), e_jet, c_jet,
                  ZOrder(order) if not deg.limited else deg, w_radius, pp, max_arg)


def beltrami_residual(diffeo: Diffeo, varpi: GridField, method: str = "grid") -> GridField:
    """|e_zbar - varpi e_z| / max(1, |e_z|) on the z-grid.

    ``method="grid"`` differentiates the sampled e numerically, ``"exact"``
    uses the chain-rule derivatives.
    """
    if method == "grid":
        ez, ezb = dz_grid(diffeo.e_values, order=6)
        ez, ezb = ez.values[0], ezb.values[0]
    else:
        ez, ezb = diffeo.principal.e_derivatives(diffeo.z_grid.z)
    vals = np.abs(ezb - varpi.values[0] * ez) / np.maximum(1.0, np.abs(ez))
    return GridField(diffeo.z_grid, vals)


@dataclass
class NormalizedComponents:
    b_grid: GridField
    b_jets: list
    b_at_zero: np.ndarray
    reconstruction_residual: float = float("nan")


def _b_values(f: SurfaceMap, bd: BranchData, diffeo: Diffeo, w):
    """b_h(w) = conj(2 d(f_h o c)/dw / ((s+1) w^s)) for h = 3..n, pointwise."""
    s = bd.s
    cw = diffeo.c(w)
    c_w, c_wb = diffeo.c_derivatives(w, cw)
    d = np.array([dj(cw) for dj in bd.d[2:]])
    inner = (cw / w) ** s * d * c_w + (np.conj(cw) / w) ** s * np.conj(d) * np.conj(c_wb)
    return 2.0 * np.conj(inner)


def normalized_components(f: SurfaceMap, bd: BranchData, diffeo: Diffeo, check_points: int = 24,
                          seed: int = 0) -> NormalizedComponents:
    s = bd.s
    wg = diffeo.w_grid
    w = wg.z
    b = _b_values(f, bd, diffeo, w)

    # value at 0: c/w -> c0(0), c_w -> c_w(0), c_wbar(0) = 0 when varpi(0) = 0
    c_lin, c_lin_bar = diffeo.c_jet.coeff(1, 0), diffeo.c_jet.coeff(0, 1)
    c0 = diffeo.c0_at_zero
    d0 = np.array([dj.value for dj in bd.d[2:]])
    b0 = 2.0 * np.conj(c0 ** s * d0 * c_lin) + 2.0 * np.conj(np.conj(d0) * np.conj(c_lin_bar)) * (
        abs(c_lin_bar) > 1e-14)

    jets = []
    for comp in f.components[2:]:
        try:
            g = comp.compose(diffeo.c_jet)
            jets.append(divide_z_pow(g.dz(), s) * (2.0 / (s + 1)))
            jets[-1] = jets[-1].conj()
        except OrderTooLow:
            jets.append(None)

    out = NormalizedComponents(GridField(wg, b), jets, b0)
    out.reconstruction_residual = reconstruction_residual(f, bd, diffeo, check_points, seed)
    return out


def reconstruction_residual(f: SurfaceMap, bd: BranchData, diffeo: Diffeo, n_points: int = 24,
                            seed: int = 0) -> float:
    """max over sample points of |f_h(c(w)) - (s+1) Re int_0^w conj(b_h) z^s dz|."""
    s = bd.s
    rng = np.random.default_rng(seed)
    R = diffeo.w_grid.radius / 2
    pts = R * np.sqrt(rng.uniform(0.01, 1.0, n_points)) * np.exp(2j * np.pi * rng.uniform(size=n_points))
    worst = 0.0
    for h in range(f.n - 2):
        def integrand(v, h=h):
            v = np.asarray(v, dtype=complex)
            return np.conj(_b_values(f, bd, diffeo, v)[h])

        for p in pts:
            val = (s + 1) * line_integral(integrand, p, s=s, part="real").real
            target = f.components[h + 2](diffeo.c(np.array([p]))[0])
            worst = max(worst, abs(float(np.real(target)) - val))
    return worst
