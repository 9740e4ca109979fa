"""Branch data, branch order detection and the index / distinguished degree."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .builder import SurfaceMap
from .errors import (AmbientFrameMismatch, DenominatorVanishing, NonExtendable, NonRealL, NotABranchPoint,
                     NotConformal, NotDivisible, QuasiBoundViolated)
from .fields import DiskGrid, GridField
from .jets import TAU_JET, BiJet, ZOrder, divide_z_pow, ord_z, ratio_extend

L_IMAG_TOL = 1e-6
CONFORMAL_TOL = 1e-6
DENOMINATOR_FLOOR = 0.1


def divide_zbar_pow(f: BiJet, p: int, tol: float = TAU_JET) -> BiJet:
    return divide_z_pow(f.conj(), p, tol).conj()


def _canonical_lead(n: int) -> np.ndarray:
    u = np.zeros(n, dtype=complex)
    u[0], u[1] = 0.5, -0.5j
    return u


def detect_branch_order(f: SurfaceMap, tol: float = TAU_JET) -> int:
    """Branch order from the jet: largest s with z^s | df/dz, then the leading-vector check."""
    fz = f.dz_jets()
    rows = [np.nonzero(np.abs(c.coeffs).max(axis=1) > tol)[0] for c in fz]
    hits = [r[0] for r in rows if r.size]
    if not hits:
        raise NotABranchPoint("df/dz vanishes identically on the jet")
    s = int(min(hits))
    if s == 0:
        raise NotABranchPoint("df/dz does not vanish at the origin (immersion or generic point)")
    lead = np.array([c.coeffs[s, 0] for c in fz]) / (s + 1)
    canon = _canonical_lead(f.n)
    if np.abs(lead - canon).max() <= 1e-10:
        return s
    re, im = lead.real, lead.imag
    if abs(np.linalg.norm(re) - 0.5) < 1e-10 and abs(np.linalg.norm(im) - 0.5) < 1e-10 and abs(re @ im) < 1e-10:
        rot = leading_rotation(lead)
        raise AmbientFrameMismatch("leading jet is a rotated canonical vector", s=s,
                                   rotation=rot.tolist())
    raise NotABranchPoint("leading coefficient is not (s+1)!(1/2, -i/2, 0, ...)", s=s,
                          lead=[[float(v.real), float(v.imag)] for v in lead])


def leading_rotation(lead: np.ndarray) -> np.ndarray:
    """Orthogonal M with M lead = (1/2, -i/2, 0, ...); the normal block is any orthonormal complement."""
    e1 = 2.0 * lead.real
    e2 = -2.0 * lead.imag
    q = np.column_stack([e1, e2, null_space(np.vstack([e1, e2]))])
    return q.T


@dataclass
class BranchData:
    s: int
    d: list
    d_grid: GridField
    l: list | None
    l_grid: GridField | None
    l_imag: float
    det_min: float
    sup_ratio: float
    grid: DiskGrid
    metric: object = None

    @property
    def d1_prime(self) -> BiJet:
        return self.d[0] * 2.0 - 1.0

    @property
    def d2_prime(self) -> BiJet:
        return self.d[1] * 2j - 1.0

    @property
    def gamma(self) -> BiJet:
        return 1.0 + (self.d1_prime + self.d2_prime) * 0.5

    @property
    def alpha(self) -> BiJet:
        return (self.d1_prime - self.d2_prime) * 0.5

    @property
    def frontal_ok(self) -> bool:
        return self.det_min > 0.0

    @property
    def quasiregular_ok(self) -> bool:
        return self.sup_ratio < 1.0

    @property
    def regular(self) -> bool:
        return self.l is not None

    def flags(self) -> dict:
        return {"frontal_ok": self.frontal_ok, "quasiregular_ok": self.quasiregular_ok,
                "regular": self.regular}


def _d_grid_values(d_grid: GridField):
    d1, d2 = d_grid.values[0], d_grid.values[1]
    dp1, dp2 = 2.0 * d1 - 1.0, 2j * d2 - 1.0
    return dp1, dp2


def extract_branch_data(f: SurfaceMap, grid: DiskGrid | None = None, strict: bool = True) -> BranchData:
    s = detect_branch_order(f)
    grid = grid or f.grid or DiskGrid(f.radius)
    fz = f.dz_jets()
    d = [divide_z_pow(c, s) / (s + 1) for c in fz]
    z = grid.z
    d_grid = GridField(grid, np.array([c(z) for c in fz]) / ((s + 1) * z ** s))

    mixed = [c.dzbar() for c in fz]
    try:
        l = [divide_zbar_pow(divide_z_pow(m, s), s) for m in mixed]
    except NotDivisible:
        l = None
    if l is not None:
        l_vals = np.array([m(z) for m in mixed]) / np.abs(z) ** (2 * s)
        l_imag = max(max(float(np.abs(c.im().coeffs).max()) for c in l), float(np.abs(l_vals.imag).max()))
        if l_imag > L_IMAG_TOL:
            raise NonRealL(f"imaginary part of l reaches {l_imag:.3e}", residue=l_imag)
        l = [c.re() for c in l]
        l_grid = GridField(grid, l_vals.real)
    else:
        l_grid, l_imag = None, 0.0

    dp1, dp2 = _d_grid_values(d_grid)
    d1, d2 = d_grid.values[0], d_grid.values[1]
    det = -4.0 * d1.real * d2.imag + 4.0 * d1.imag * d2.real
    gamma = 1.0 + 0.5 * (dp1 + dp2)
    alpha = 0.5 * (dp1 - dp2)
    ratio = np.abs(alpha) / np.abs(gamma)
    bd = BranchData(s, d, d_grid, l, l_grid, l_imag, float(det.min()), float(ratio.max()), grid, f.metric)
    if strict and not bd.quasiregular_ok:
        raise QuasiBoundViolated(f"quasiregularity ratio reaches {bd.sup_ratio:.4f}", sup=bd.sup_ratio)
    return bd


@dataclass
class DistinguishedCoefficient:
    jet: BiJet
    grid: GridField
    smoothness: ZOrder
    sup: float


def distinguished_coefficient(bd: BranchData) -> DistinguishedCoefficient:
    """Beltrami coefficient of a = f1 + i f2, extended through the origin."""
    s = bd.s
    ratio = bd.alpha.conj() * bd.gamma.reciprocal()
    jet, _ = ratio_extend(ratio, s, s)
    if abs(jet.value) > 1e-12:
        raise NonExtendable("distinguished coefficient does not vanish at 0", value=abs(jet.value))
    z = bd.grid.z
    dp1, dp2 = _d_grid_values(bd.d_grid)
    vals = np.conj(z) ** s * 0.5 * np.conj(dp1 - dp2) / (z ** s * (1.0 + 0.5 * (dp1 + dp2)))
    return DistinguishedCoefficient(jet, GridField(bd.grid, vals), smoothness_degree(bd), float(np.abs(vals).max()))


def smoothness_degree(bd: BranchData) -> ZOrder:
    """Largest m with d^j conj(d1' - d2') / dzbar^j (0) = 0 for j <= m, capped at N - 1."""
    alpha = bd.alpha
    cap = alpha.order - 1
    o = ord_z(alpha)
    if o.limited or o.value - 1 > cap:
        return ZOrder(cap, limited=True)
    return ZOrder(o.value - 1)


def index_and_degree(f: SurfaceMap, s: int | None = None) -> tuple[ZOrder, ZOrder]:
    s = f.s if s is None else s
    iota = ord_z(f.components[2:]) - 1
    a = f.components[0] + f.components[1] * 1j
    rho = ord_z(a.conj()) - (s + 1)
    return iota, rho


def conformality_residual(f: SurfaceMap, bd: BranchData) -> GridField:
    """|d^t G d| per node with G = exp(2 psi) Id."""
    vals = np.sum(bd.d_grid.values ** 2, axis=0)
    if not f.metric.is_euclidean:
        y = f.sample(bd.grid).values.real
        vals = np.exp(2.0 * f.metric.psi(y)) * vals
    return GridField(bd.grid, np.abs(vals))


def conformality_residual_jet(bd: BranchData) -> float:
    acc = bd.d[0] * bd.d[0]
    for c in bd.d[1:]:
        acc = acc + c * c
    return acc.max_abs()


@dataclass
class MeanCurvature:
    grid: GridField
    at_zero: np.ndarray
    denominator_min_ratio: float

    @property
    def sup(self) -> float:
        return max(float(np.abs(self.grid.values).max()), float(np.abs(self.at_zero).max()))


def _normal_part(v: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto the complement of span(Re d, Im d) (columns per node)."""
    e1, e2 = d.real, d.imag
    n1 = e1 / np.linalg.norm(e1, axis=0)
    e2 = e2 - np.sum(e2 * n1, axis=0) * n1
    n2 = e2 / np.linalg.norm(e2, axis=0)
    return v - np.sum(v * n1, axis=0) * n1 - np.sum(v * n2, axis=0) * n2


def _mean_curvature_values(f: SurfaceMap, s: int, d: np.ndarray, l: np.ndarray, y: np.ndarray):
    d_norm2 = np.sum(np.abs(d) ** 2, axis=0)
    num = l / (s + 1) ** 2
    den = d_norm2
    if not f.metric.is_euclidean:
        grad = f.metric.grad_psi(y)
        num = num - d_norm2 * _normal_part(grad, d)
        den = np.exp(2.0 * f.metric.psi(y)) * d_norm2
    return num / den, den


def mean_curvature_extension(f: SurfaceMap, bd: BranchData) -> MeanCurvature:
    """Mean curvature vector in ambient coordinates, extended through the branch point.

    For a conformal map the tension field gives
    H = (l/(s+1)^2 - |d|^2 (grad psi)^normal) / (exp(2 psi) |d|^2),
    and the denominator exp(2 psi) sum_ik delta_ik Re(d_i conj d_k) is
    (g11 + g22)/4 at the origin.
    """
    if bd.l is None:
        raise NotDivisible("mixed derivative is not divisible by |z|^(2s); l is undefined")
    res = float(conformality_residual(f, bd).values.max())
    if max(res, conformality_residual_jet(bd)) > CONFORMAL_TOL:
        raise NotConformal(f"conformality residual {res:.3e}", residual=res)
    s = bd.s
    y = f.sample(bd.grid).values.real
    H, den = _mean_curvature_values(f, s, bd.d_grid.values, bd.l_grid.values, y)
    d0 = np.array([c.value for c in bd.d])[:, None]
    l0 = np.array([c.value.real for c in bd.l])[:, None]
    y0 = np.array([c.value.real for c in f.components])[:, None]
    H0, den0 = _mean_curvature_values(f, s, d0, l0, y0)
    ratio = float(den.min() / den0[0])
    if ratio < DENOMINATOR_FLOOR:
        raise DenominatorVanishing(f"mean-curvature denominator falls to {ratio:.3f} of its value at 0",
                                   ratio=ratio)
    return MeanCurvature(GridField(bd.grid, H), H0[:, 0], ratio)


def check_estimate(iota: ZOrder, rho: ZOrder, s: int, n: int) -> dict:
    """rho >= 2(iota - s), with equality expected when n = 3."""
    if iota.limited:
        return {"status": "inconclusive", "holds": None, "equality": None,
                "bound": f">={2 * (iota.value - s)}"}
    bound = 2 * (iota.value - s)
    holds = rho.value >= bound
    out = {"bound": bound, "holds": bool(holds), "equality": None, "status": "pass" if holds else "fail"}
    if n == 3:
        if rho.limited:
            out["equality"] = None
            out["status"] = "inconclusive" if holds else "fail"
        else:
            out["equality"] = rho.value == bound
            if not out["equality"]:
                out["status"] = "fail"
    return out


def leading_part_residual(f: SurfaceMap, s: int) -> float:
    """Largest coefficient of degree <= s+1 in a - z^(s+1)."""
    a = f.components[0] + f.components[1] * 1j - BiJet.monomial(s + 1, 0, f.order)
    c = a.coeffs
    return float(max(abs(c[j, k]) for j in range(s + 2) for k in range(s + 2 - j)))


@dataclass
class BranchReport:
    s: int
    iota: ZOrder
    rho: ZOrder
    varpi_smoothness: ZOrder
    flags: dict
    sup_ratio: float
    residuals: dict = field(default_factory=dict)
    estimate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"s": self.s, "iota": self.iota.to_json(), "rho": self.rho.to_json(),
                "varpi_smoothness": self.varpi_smoothness.to_json(), "flags": self.flags,
                "sup_ratio": self.sup_ratio, "residuals": self.residuals, "estimate": self.estimate}


def analyze(f: SurfaceMap) -> BranchReport:
    bd = extract_branch_data(f)
    varpi = distinguished_coefficient(bd)
    iota, rho = index_and_degree(f, bd.s)
    conf = float(conformality_residual(f, bd).values.max())
    residuals = {"conformality": conf, "leading_part": leading_part_residual(f, bd.s),
                 "l_imag": bd.l_imag, "varpi_sup": varpi.sup, "det_min": bd.det_min}
    flags = bd.flags()
    flags["conformal"] = conf <= CONFORMAL_TOL
    if flags["conformal"] and bd.regular:
        try:
            mc = mean_curvature_extension(f, bd)
            residuals["mean_curvature_sup"] = mc.sup
        except (NotConformal, DenominatorVanishing) as exc:
            residuals["mean_curvature_error"] = exc.code
    estimate = check_estimate(iota, rho, bd.s, f.n) if flags["conformal"] else {"status": "not_applicable"}
    return BranchReport(bd.s, iota, rho, varpi.smoothness, flags, bd.sup_ratio, residuals, estimate)
