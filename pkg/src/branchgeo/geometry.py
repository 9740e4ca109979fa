"""Frame algebra, fundamental forms, relative and classical curvatures near a branch point.

All pointwise quantities are evaluated from the exact polynomial jets of the
map, so they can be sampled on grids or on arbitrary circles around the
branch point. Numerical grid derivatives are used only as a second path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .builder import SurfaceMap
from .errors import BranchGeoError, DenominatorVanishing, MetricDegenerate, RankDeficient, ShapeMismatch
from .fields import DiskGrid, GridField, dz_grid
from .iohelpers import write_csv, write_json, write_pgm
from .jets import BiJet, ZOrder, divide_z_pow

ANNULUS_WINDOW = (3, 8)
GROWTH_FACTOR = 4.0
GROWTH_SLACK = 0.02
LIPSCHITZ_VARIATION = 0.2
LIPSCHITZ_NOISE = 1e-8


# --------------------------------------------------------------- frame algebra
class MatrixField:
    """Per-node matrices of a fixed shape; values have shape node_shape + (p, q)."""

    def __init__(self, values, grid: DiskGrid | None = None):
        v = np.asarray(values)
        if v.ndim < 2:
            raise ShapeMismatch("matrix fields need at least two trailing axes", ndim=v.ndim)
        self.values = v
        self.grid = grid

    @property
    def shape(self):
        return self.values.shape[-2:]

    def __matmul__(self, other):
        return MatrixField(_mm(self.values, _vals(other)), self.grid)

    @property
    def T(self):
        return MatrixField(np.swapaxes(self.values, -1, -2), self.grid)

    def sup(self) -> float:
        return float(np.abs(self.values).max())


def _vals(x):
    return x.values if isinstance(x, MatrixField) else np.asarray(x)


def _mm(a, b):
    a, b = _vals(a), _vals(b)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"cannot multiply {a.shape[-2:]} by {b.shape[-2:]}",
                            left=list(a.shape[-2:]), right=list(b.shape[-2:]))
    return a @ b


def frame_matrix(E, U) -> np.ndarray:
    """Matrix field of the sections U in the frame E (both given in standard coordinates)."""
    E, U = _vals(E), _vals(U)
    if E.shape[-1] != E.shape[-2] or E.shape[-2] != U.shape[-2]:
        raise ShapeMismatch("frame must be n x n and sections n x k",
                            frame=list(E.shape[-2:]), sections=list(U.shape[-2:]))
    return np.linalg.solve(E, U)


def right_product(U, B) -> np.ndarray:
    """(U . B)_j = sum_i B_ij U_i."""
    return _mm(U, B)


def gram(U, V, G=None) -> np.ndarray:
    """(U (.) V)_ij = g(U_i, V_j); G defaults to the Euclidean metric."""
    U, V = _vals(U), _vals(V)
    if U.shape[-2] != V.shape[-2]:
        raise ShapeMismatch("sections live in different bundles", left=U.shape[-2], right=V.shape[-2])
    Ut = np.swapaxes(U, -1, -2)
    if G is None:
        return Ut @ V
    G = _vals(G)
    if G.shape[-1] != U.shape[-2]:
        raise ShapeMismatch("metric size does not match the bundle rank")
    return Ut @ G @ V


def det2(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def adj2(m):
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out


def inv2(m):
    return adj2(m) / det2(m)[..., None, None]


def eig2(m):
    """Eigenvalues of 2x2 matrices with real spectrum (closed form)."""
    tr = m[..., 0, 0] + m[..., 1, 1]
    disc = np.sqrt(np.maximum(0.25 * tr ** 2 - det2(m), 0.0))
    return np.stack([0.5 * tr - disc, 0.5 * tr + disc], axis=-1)


# ----------------------------------------------------------- jet evaluation
def _xy_expansion(a: int, b: int) -> dict:
    """Coefficients of (u+v)^a (i(u-v))^b as {(p, q): coeff} with u = d/dz, v = d/dzbar."""
    poly = {(0, 0): 1.0 + 0j}
    for _ in range(a):
        new = {}
        for (p, q), c in poly.items():
            new[(p + 1, q)] = new.get((p + 1, q), 0) + c
            new[(p, q + 1)] = new.get((p, q + 1), 0) + c
        poly = new
    for _ in range(b):
        new = {}
        for (p, q), c in poly.items():
            new[(p + 1, q)] = new.get((p + 1, q), 0) + 1j * c
            new[(p, q + 1)] = new.get((p, q + 1), 0) - 1j * c
        poly = new
    return poly


class JetDerivatives:
    """Cached Wirtinger derivatives of a list of jets, evaluated as real partials."""

    def __init__(self, jets):
        self.jets = list(jets)
        self._cache = {}

    def wirtinger(self, p: int, q: int) -> list:
        key = (p, q)
        if key not in self._cache:
            if p == 0 and q == 0:
                self._cache[key] = self.jets
            elif p > 0:
                self._cache[key] = [j.dz() for j in self.wirtinger(p - 1, q)]
            else:
                self._cache[key] = [j.dzbar() for j in self.wirtinger(p, q - 1)]
        return self._cache[key]

    def partial(self, a: int, b: int, z) -> np.ndarray:
        """d^(a+b) / dx^a dy^b at z, stacked over components (complex)."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros((len(self.jets),) + z.shape, dtype=complex)
        for (p, q), c in _xy_expansion(a, b).items():
            if c != 0:
                out += c * np.array([j(z) for j in self.wirtinger(p, q)])
        return out


# ----------------------------------------------------------- pointwise engine
def _d_jets(f: SurfaceMap) -> list:
    """d = (df/dz) / ((s+1) z^s), valid for any map whose z-derivative is divisible by z^s."""
    return [divide_z_pow(c.dz(), f.s) / (f.s + 1) for c in f.components]


def _move(x):
    """components-first array -> nodes-first with components as trailing axis."""
    return np.moveaxis(np.asarray(x), 0, -1)


def _gamma(grad, a, b):
    """Christoffel term of exp(2 psi)|dy|^2: (a.g) b + (b.g) a - (a.b) g (vectors on last axis)."""
    ag = np.sum(a * grad, axis=-1, keepdims=True)
    bg = np.sum(b * grad, axis=-1, keepdims=True)
    ab = np.sum(a * b, axis=-1, keepdims=True)
    return ag * b + bg * a - ab * grad


@dataclass
class FrontalFrame:
    """W (n x 2), J' (2 x 2) and the ambient metric factor at a set of nodes."""

    z: np.ndarray
    W: np.ndarray
    Jp: np.ndarray
    jacobian: np.ndarray
    conformal_factor: np.ndarray
    grid: DiskGrid | None = None

    @property
    def lam(self) -> np.ndarray:
        return det2(self.Jp)

    @property
    def gram_W(self) -> np.ndarray:
        return self.conformal_factor[..., None, None] * gram(self.W, self.W)

    def reconstruction_residual(self) -> float:
        return float(np.abs(self.jacobian - self.W @ self.Jp).max())


class LocalGeometry:
    """All frame and curvature quantities of a branched map at the points z."""

    def __init__(self, f: SurfaceMap, z, d_jets=None):
        self.f = f
        s = f.s
        z = np.asarray(z, dtype=complex)
        self.z = z
        n = f.n
        fd = JetDerivatives(f.components)
        self._fd = fd
        dj = JetDerivatives(d_jets if d_jets is not None else _d_jets(f))
        self.y = _move(fd.partial(0, 0, z).real)
        self.F = np.stack([_move(fd.partial(1, 0, z).real), _move(fd.partial(0, 1, z).real)], axis=-1)
        self.F2 = {(a, b): _move(fd.partial(a, b, z).real) for a, b in [(2, 0), (1, 1), (0, 2)]}
        d = _move(dj.partial(0, 0, z))
        dx = _move(dj.partial(1, 0, z))
        dy = _move(dj.partial(0, 1, z))
        self.d = d
        self.W = np.stack([2 * d.real, -2 * d.imag], axis=-1)
        self.dW = [np.stack([2 * dx.real, -2 * dx.imag], axis=-1), np.stack([2 * dy.real, -2 * dy.imag], axis=-1)]
        c = (s + 1) * z ** s
        self.Jp = np.stack([np.stack([c.real, -c.imag], -1), np.stack([c.imag, c.real], -1)], -2)
        self.lam = det2(self.Jp)

        # ambient metric exp(2 psi) Id
        metric = f.metric
        yT = np.moveaxis(self.y, -1, 0)
        self.psi = metric.psi(yT)
        self.grad = _move(metric.grad_psi(yT))
        self.hess = np.moveaxis(np.moveaxis(metric.hess_psi(yT), 0, -1), 0, -1)
        self.conf = np.exp(2 * self.psi)

        # co-principal part B = D D'^-1 and its partial derivatives
        Dp, Dl = self.W[..., :2, :], self.W[..., 2:, :]
        detp = det2(Dp)
        if np.abs(detp).min() <= 1e-14:
            raise DenominatorVanishing("principal block of W is singular", min_det=float(np.abs(detp).min()))
        Dpi = inv2(Dp)
        self.Dp = Dp
        self.B = Dl @ Dpi
        self.JB = []
        for dW in self.dW:
            self.JB.append((dW[..., 2:, :] - self.B @ dW[..., :2, :]) @ Dpi)
        # JB_k[..., a, i] = d B_{k a} / d x_i for the k-th row
        self.JB_rows = [np.stack([self.JB[0][..., k, :], self.JB[1][..., k, :]], axis=-1) for k in range(n - 2)]

        # normal frame xi = G^-1 (-B^t ; Id)
        eye = np.broadcast_to(np.eye(n - 2), self.B.shape[:-2] + (n - 2, n - 2))
        base = np.concatenate([-np.swapaxes(self.B, -1, -2), eye], axis=-2)
        inv_conf = (1.0 / self.conf)[..., None, None]
        self.xi = inv_conf * base
        self.dxi = []
        for i in range(2):
            dbase = np.concatenate([-np.swapaxes(self.JB[i], -1, -2), np.zeros_like(eye)], axis=-2)
            dpsi = np.sum(self.grad * self.F[..., i], axis=-1)[..., None, None]
            self.dxi.append(-2 * dpsi * self.xi + inv_conf * dbase)

    # frames and forms
    def frontal_frame(self) -> FrontalFrame:
        return FrontalFrame(self.z, self.W, self.Jp, self.F, self.conf)

    def metric_gram(self, U, V):
        return self.conf[..., None, None] * gram(U, V)

    def second_form_relative(self, dxi=None) -> list:
        """II_V^{xi_k} = -W (.) nabla_dx xi_k, one 2x2 matrix field per normal section."""
        dxi = self.dxi if dxi is None else dxi
        out = []
        for k in range(self.f.n - 2):
            cols = []
            for i in range(2):
                v = dxi[i][..., :, k] + _gamma(self.grad, self.F[..., i], self.xi[..., :, k])
                cols.append(-self.conf[..., None] * np.einsum("...na,...n->...a", self.W, v))
            out.append(np.stack(cols, axis=-1))
        return out

    def second_form_classical_direct(self) -> list:
        """II^{xi_k}_ij = g(nabla_i f_j, xi_k) from second derivatives."""
        Fij = {(0, 0): self.F2[(2, 0)], (0, 1): self.F2[(1, 1)], (1, 0): self.F2[(1, 1)], (1, 1): self.F2[(0, 2)]}
        out = []
        for k in range(self.f.n - 2):
            xk = self.xi[..., :, k]
            m = np.empty(self.z.shape + (2, 2))
            for (i, j), fij in Fij.items():
                v = fij + _gamma(self.grad, self.F[..., i], self.F[..., j])
                m[..., i, j] = self.conf * np.sum(v * xk, axis=-1)
            out.append(m)
        return out

    def first_form(self) -> np.ndarray:
        return self.metric_gram(self.F, self.F)

    def relative(self, II_rel=None) -> dict:
        II_rel = self.second_form_relative() if II_rel is None else II_rel
        IW = self.metric_gram(self.W, self.W)
        if np.any(det2(IW) <= 0):
            raise MetricDegenerate("frame Gram matrix is not positive definite")
        IWi = inv2(IW)
        adjJ = adj2(self.Jp)
        frak = [-(IWi @ m) for m in II_rel]
        shape_rel = [-(adjJ @ m) for m in frak]
        return {"lambda": self.lam, "I_W": IW, "frak": frak, "shape_rel": shape_rel,
                "H_rel": [0.5 * (s[..., 0, 0] + s[..., 1, 1]) for s in shape_rel],
                "K_rel": [det2(m) for m in frak],
                "principal_rel": [eig2(s) for s in shape_rel]}

    def orthonormal_normals(self):
        """Gram-Schmidt of xi in the ambient metric; returns (xi', D) with xi' = xi D."""
        G = self.metric_gram(self.xi, self.xi)
        # Cholesky G = L L^t, D = L^-t keeps the order and gives D(p) = Id when xi(p) is orthonormal
        L = np.linalg.cholesky(G)
        D = np.linalg.inv(np.swapaxes(L, -1, -2))
        return self.xi @ D, D

    def curvatures(self, II_rel=None) -> dict:
        II_rel = self.second_form_relative() if II_rel is None else II_rel
        rel = self.relative(II_rel)
        I = self.first_form()
        detI = det2(I)
        Ii = inv2(I)
        II = [np.swapaxes(self.Jp, -1, -2) @ m for m in II_rel]
        A = [Ii @ m for m in II]
        xi_o, D = self.orthonormal_normals()
        m = self.f.n - 2
        A_o = [sum(D[..., k, j][..., None, None] * A[k] for k in range(m)) for j in range(m)]
        K_o = [det2(a) for a in A_o]
        H_o = [0.5 * (a[..., 0, 0] + a[..., 1, 1]) for a in A_o]
        Hvec = sum(H_o[j][..., None] * xi_o[..., :, j] for j in range(m))
        Hrel_o = [sum(D[..., k, j] * rel["H_rel"][k] for k in range(m)) for j in range(m)]
        Hvec_rel = sum(Hrel_o[j][..., None] * xi_o[..., :, j] for j in range(m))
        sec = self.ambient_sectional() + sum(K_o)
        return {"I": I, "II": II, "A": A, "H": [0.5 * (a[..., 0, 0] + a[..., 1, 1]) for a in A],
                "K": [det2(a) for a in A], "K_orth": K_o, "H_orth": H_o, "mean_curvature": Hvec,
                "mean_curvature_rel": Hvec_rel, "sec": sec, "detI": detI, "relative": rel, "D": D}

    def ambient_sectional(self) -> np.ndarray:
        """Sectional curvature of exp(2 psi)|dy|^2 on the plane spanned by W."""
        if self.f.metric.is_euclidean:
            return np.zeros(self.z.shape)
        q, _ = np.linalg.qr(self.W)
        u, v = q[..., :, 0], q[..., :, 1]
        hu = np.einsum("...i,...ij,...j->...", u, self.hess, u)
        hv = np.einsum("...i,...ij,...j->...", v, self.hess, v)
        gu = np.sum(u * self.grad, -1)
        gv = np.sum(v * self.grad, -1)
        g2 = np.sum(self.grad ** 2, -1)
        return np.exp(-2 * self.psi) * (-hu - hv + gu ** 2 + gv ** 2 - g2)

    def brioschi(self) -> np.ndarray:
        """Gaussian curvature of the induced metric from its coefficients (intrinsic path)."""
        fd = self._fd
        z = self.z
        P = {}
        for a, b in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2)]:
            # the determinant combination cancels heavily near the branch point
            P[(a, b)] = _move(fd.partial(a, b, z).real).astype(np.longdouble)

        def dot(x, y):
            return np.sum(x * y, axis=-1)

        fu, fv = P[(1, 0)], P[(0, 1)]
        fuu, fuv, fvv = P[(2, 0)], P[(1, 1)], P[(0, 2)]
        fuuv, fuvv = P[(2, 1)], P[(1, 2)]
        E, F, G = dot(fu, fu), dot(fu, fv), dot(fv, fv)
        Eu, Ev = 2 * dot(fuu, fu), 2 * dot(fuv, fu)
        Fu, Fv = dot(fuu, fv) + dot(fu, fuv), dot(fuv, fv) + dot(fu, fvv)
        Gu, Gv = 2 * dot(fuv, fv), 2 * dot(fvv, fv)
        Evv = 2 * (dot(fuvv, fu) + dot(fuv, fuv))
        Guu = 2 * (dot(fuuv, fv) + dot(fuv, fuv))
        Fuv = dot(fuuv, fv) + dot(fuu, fvv) + dot(fuv, fuv) + dot(fu, fuvv)
        if not self.f.metric.is_euclidean:
            g, H = self.grad, self.hess
            uu = dot(g, fu)
            uv = dot(g, fv)
            uuu = np.einsum("...i,...ij,...j->...", fu, H, fu) + dot(g, fuu)
            uuv = np.einsum("...i,...ij,...j->...", fu, H, fv) + dot(g, fuv)
            uvv = np.einsum("...i,...ij,...j->...", fv, H, fv) + dot(g, fvv)
            e = np.exp(2 * self.psi)

            def scale(X, Xu, Xv, Xuu=None, Xvv=None, Xuv=None):
                out = [e * X, e * (2 * uu * X + Xu), e * (2 * uv * X + Xv)]
                if Xuu is not None:
                    out.append(e * (4 * uu * uu * X + 2 * uuu * X + 4 * uu * Xu + Xuu))
                if Xvv is not None:
                    out.append(e * (4 * uv * uv * X + 2 * uvv * X + 4 * uv * Xv + Xvv))
                if Xuv is not None:
                    out.append(e * (4 * uu * uv * X + 2 * uuv * X + 2 * uu * Xv + 2 * uv * Xu + Xuv))
                return out

            E, Eu, Ev, Evv = scale(E, Eu, Ev, Xvv=Evv)
            G, Gu, Gv, Guu = scale(G, Gu, Gv, Xuu=Guu)
            F, Fu, Fv, Fuv = scale(F, Fu, Fv, Xuv=Fuv)
        a11 = -0.5 * Evv + Fuv - 0.5 * Guu
        det1 = (a11 * (E * G - F * F) - 0.5 * Eu * ((Fv - 0.5 * Gu) * G - 0.5 * Gv * F)
                + (Fu - 0.5 * Ev) * ((Fv - 0.5 * Gu) * F - 0.5 * Gv * E))
        det2_ = -0.5 * Ev * (0.5 * Ev * G - 0.5 * Gu * F) + 0.5 * Gu * (0.5 * Ev * F - 0.5 * Gu * E)
        return np.asarray((det1 - det2_) / (E * G - F * F) ** 2, dtype=float)


# ----------------------------------------------------- field-level operations
def frontal_frame_from_branch(f: SurfaceMap, bd=None, grid: DiskGrid | None = None) -> FrontalFrame:
    grid = grid or (bd.grid if bd is not None else f.grid)
    geo = LocalGeometry(f, grid.z, None if bd is None else bd.d)
    ff = geo.frontal_frame()
    ff.grid = grid
    sv = np.linalg.svd(ff.W, compute_uv=False)
    if sv[..., -1].min() <= 1e-12:
        raise RankDeficient("W loses rank on the grid", min_singular=float(sv[..., -1].min()))
    return ff


def coprincipal_jets(d: list) -> list:
    """Complex co-principal part b_j = B_j1 + i B_j2 as jets, from the jets of d.

    b_j = 2 (gamma conj(d_{j+2}) - conj(alpha) d_{j+2}) / Re{(1 + d1')(1 + conj d2')}
    with gamma = 1 + (d1' + d2')/2 and alpha = (d1' - d2')/2.
    """
    d1p = d[0] * 2.0 - 1.0
    d2p = d[1] * 2j - 1.0
    gamma = 1.0 + (d1p + d2p) * 0.5
    alpha = (d1p - d2p) * 0.5
    den = ((1.0 + d1p) * (1.0 + d2p).conj()).re()
    inv = den.reciprocal()
    return [(gamma * dj.conj() - alpha.conj() * dj) * inv * 2.0 for dj in d[2:]]


@dataclass
class PrincipalParts:
    a_jet: BiJet
    a_grid: GridField
    b_jets: list
    b_grid: GridField
    B: MatrixField


def principal_coprincipal(f: SurfaceMap, bd=None, grid: DiskGrid | None = None) -> PrincipalParts:
    grid = grid or (bd.grid if bd is not None else f.grid)
    d = bd.d if bd is not None else _d_jets(f)
    geo = LocalGeometry(f, grid.z, d)
    a = f.components[0] + f.components[1] * 1j
    B = geo.B
    b_vals = np.moveaxis(B[..., 0] + 1j * B[..., 1], -1, 0)
    return PrincipalParts(a, GridField(grid, a(grid.z)), coprincipal_jets(d), GridField(grid, b_vals),
                          MatrixField(B, grid))


def normal_frame(f: SurfaceMap, bd=None, grid: DiskGrid | None = None) -> tuple[MatrixField, np.ndarray]:
    """Normal frame xi and its Gram matrix at the branch point."""
    grid = grid or (bd.grid if bd is not None else f.grid)
    d = bd.d if bd is not None else _d_jets(f)
    geo = LocalGeometry(f, grid.z, d)
    at0 = LocalGeometry(f, np.array([0j]), d)
    g0 = at0.metric_gram(at0.xi, at0.xi)[0]
    return MatrixField(geo.xi, grid), g0


def fundamental_forms(f: SurfaceMap, bd=None, grid: DiskGrid | None = None) -> dict:
    """First and second forms by two paths, with the residuals of both identities."""
    grid = grid or (bd.grid if bd is not None else f.grid)
    d = bd.d if bd is not None else _d_jets(f)
    geo = LocalGeometry(f, grid.z, d)
    IW = geo.metric_gram(geo.W, geo.W)
    I_dec = np.swapaxes(geo.Jp, -1, -2) @ IW @ geo.Jp
    I_direct = geo.first_form()
    II_rel = geo.second_form_relative()
    # second path: differentiate the sampled normal frame on the grid
    dxi_grid = _grid_dxi(geo, grid)
    II_grid = geo.second_form_relative(dxi_grid)
    scale = max(1.0, max(float(np.abs(m).max()) for m in II_rel))
    out = {"I": I_direct, "I_W": IW, "II_rel": II_rel, "II_rel_grid": II_grid,
           "first_form_residual": float(np.abs(I_dec - I_direct).max() / max(1.0, np.abs(I_direct).max())),
           "two_path_residual": max(float(np.abs(a - b).max()) for a, b in zip(II_rel, II_grid)) / scale}
    II_direct = geo.second_form_classical_direct()
    out["second_form_residual"] = max(
        float(np.abs(np.swapaxes(geo.Jp, -1, -2) @ a - b).max()) for a, b in zip(II_rel, II_direct))
    if f.metric.is_euclidean:
        jb = [np.swapaxes(geo.Dp, -1, -2) @ m for m in geo.JB_rows]
        out["II_from_B"] = jb
        out["coprincipal_residual"] = max(float(np.abs(a - b).max()) for a, b in zip(II_rel, jb)) / scale
    return out


def _grid_dxi(geo: LocalGeometry, grid: DiskGrid) -> list:
    n, m = geo.xi.shape[-2:]
    vals = np.moveaxis(geo.xi.reshape(grid.shape + (n * m,)), -1, 0)
    dz, dzb = dz_grid(GridField(grid, vals), order=6)
    dx = (dz.values + dzb.values).real
    dy = (1j * (dz.values - dzb.values)).real
    return [np.moveaxis(dx, 0, -1).reshape(grid.shape + (n, m)),
            np.moveaxis(dy, 0, -1).reshape(grid.shape + (n, m))]


def relative_curvatures(f: SurfaceMap, bd=None, grid: DiskGrid | None = None) -> dict:
    grid = grid or (bd.grid if bd is not None else f.grid)
    geo = LocalGeometry(f, grid.z, None if bd is None else bd.d)
    return geo.relative()


def classical_curvatures(f: SurfaceMap, bd=None, grid: DiskGrid | None = None) -> dict:
    """Classical curvatures on the regular nodes plus the identity residuals."""
    grid = grid or (bd.grid if bd is not None else f.grid)
    geo = LocalGeometry(f, grid.z, None if bd is None else bd.d)
    cur = geo.curvatures()
    rel = cur["relative"]
    lam = rel["lambda"]
    shape_res = max(float((np.abs(s - lam[..., None, None] * a)).max() / max(1.0, np.abs(s).max()))
                    for s, a in zip(rel["shape_rel"], cur["A"]))
    k_res = max(float(np.abs(kr - lam * k).max() / max(1.0, np.abs(kr).max()))
                for kr, k in zip(rel["K_rel"], cur["K"]))
    h_res = max(float(np.abs(hr - lam * h).max() / max(1.0, np.abs(hr).max()))
                for hr, h in zip(rel["H_rel"], cur["H"]))
    hv_res = float(np.abs(cur["mean_curvature_rel"] - lam[..., None] * cur["mean_curvature"]).max()
                   / max(1.0, np.abs(cur["mean_curvature_rel"]).max()))
    brio = geo.brioschi()
    gauss_res = float(np.max(np.abs(brio - cur["sec"]) / np.maximum(1.0, np.abs(brio))))
    cur.update({"shape_identity_residual": shape_res, "K_scaling_residual": k_res,
                "H_scaling_residual": h_res, "Hvec_scaling_residual": hv_res,
                "brioschi": brio, "gauss_brioschi_residual": gauss_res,
                "scalar": 2.0 * cur["sec"], "geometry": geo})
    return cur


# ---------------------------------------------------------------- classifier
def circle_points(radius: float, n_angles: int = 64) -> np.ndarray:
    return radius * np.exp(2j * np.pi * (np.arange(n_angles) + 0.5) / n_angles)


@dataclass
class CurvatureReport:
    s: int
    iota: ZOrder
    predicted: str
    empirical: str
    radii: list
    sup_sec: list
    mean_abs_sec: list
    mean_sec: list
    growth: list
    lipschitz_ratios: list
    lipschitz_constants: list
    growth_exponent: float
    sign: str
    sup_mean_curvature: float
    mean_curvature_at_zero: list | None
    gauss_brioschi_residual: float
    identity_residuals: dict = field(default_factory=dict)
    sec_grid: GridField | None = None
    grid_fields: dict = field(default_factory=dict)

    @property
    def agrees(self) -> bool:
        return self.predicted == self.empirical

    def to_dict(self) -> dict:
        return {"s": self.s, "iota": self.iota.to_json(), "predicted": self.predicted,
                "empirical": self.empirical, "agrees": self.agrees, "sign": self.sign,
                "growth_exponent": self.growth_exponent,
                "annuli": [{"j": j, "radius": r, "sup_abs_sec": a, "mean_abs_sec": b, "mean_sec": c}
                           for j, r, a, b, c in zip(range(ANNULUS_WINDOW[0], ANNULUS_WINDOW[1] + 1), self.radii,
                                                    self.sup_sec, self.mean_abs_sec, self.mean_sec)],
                "growth": self.growth, "lipschitz_constants": self.lipschitz_constants,
                "sup_mean_curvature": self.sup_mean_curvature,
                "mean_curvature_at_zero": self.mean_curvature_at_zero,
                "gauss_brioschi_residual": self.gauss_brioschi_residual,
                "identity_residuals": self.identity_residuals}

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        paths = [write_json(out_dir / "curvature_report.json", self.to_dict())]
        rows = []
        for i, j in enumerate(range(ANNULUS_WINDOW[0], ANNULUS_WINDOW[1] + 1)):
            rows.append([j, self.radii[i], self.sup_sec[i], self.mean_abs_sec[i], self.mean_sec[i],
                         self.growth[i - 1] if i else float("nan"),
                         self.lipschitz_ratios[i - 1] if i else float("nan")])
        paths.append(write_csv(out_dir / "curvature_annuli.csv",
                               ["j", "radius", "sup_abs_sec", "mean_abs_sec", "mean_sec", "growth", "lipschitz_ratio"],
                               rows))
        if self.sec_grid is not None:
            img = np.log10(np.maximum(np.abs(self.sec_grid.values[0]), 1e-300))
            paths.append(write_pgm(out_dir / "sec_log10.pgm", img))
        return paths


def predicted_class(iota: ZOrder, s: int) -> str:
    if iota.value >= 2 * s + 1:
        return "BoundedLipschitz"
    if iota.limited:
        return "Inconclusive"
    return "Divergent"


def classify_branch_curvature(f: SurfaceMap, iota: ZOrder | None = None, n_angles: int = 64,
                              grid: DiskGrid | None = None, bd=None) -> CurvatureReport:
    """Predicted class from the index and empirical class from circles r = R/2^j."""
    from .branch import index_and_degree
    s = f.s
    if iota is None:
        iota, _ = index_and_degree(f)
    d = bd.d if bd is not None else _d_jets(f)
    R = f.radius
    js = list(range(ANNULUS_WINDOW[0], ANNULUS_WINDOW[1] + 1))
    radii = [R / 2 ** j for j in js]
    # radii r_j and r_j/2 are both in the window except the last half step
    sec_rings = []
    for r in radii + [radii[-1] / 2]:
        geo = LocalGeometry(f, circle_points(r, n_angles), d)
        sec_rings.append(geo.curvatures()["sec"])
    sup = [float(np.abs(x).max()) for x in sec_rings[:-1]]
    mean_abs = [float(np.abs(x).mean()) for x in sec_rings[:-1]]
    mean = [float(x.mean()) for x in sec_rings[:-1]]
    growth = [sup[i + 1] / sup[i] if sup[i] > 0 else float("inf") for i in range(len(sup) - 1)]
    q = [float(np.abs(sec_rings[i] - sec_rings[i + 1]).max() / (radii[i] / 2)) for i in range(len(radii))]
    consts = list(np.maximum.accumulate(q))
    tiny = 1e-300
    logs = np.log2(np.maximum(sup, tiny))
    exponent = float(np.polyfit(np.log2(radii), logs, 1)[0]) if max(sup) > 0 else 0.0

    divergent = all(g >= GROWTH_FACTOR * (1 - GROWTH_SLACK) for g in growth)
    # constants at roundoff level (locally constant Sec) carry no ratio information
    noise = LIPSCHITZ_NOISE * max(1.0, max(sup))
    stable = consts[-1] <= noise or consts[-1] / consts[0] - 1.0 <= LIPSCHITZ_VARIATION
    bounded = max(sup) == 0.0 or sup[-1] <= 2.0 * sup[0] + 1e-12
    if divergent:
        empirical = "Divergent"
    elif stable and bounded:
        empirical = "BoundedLipschitz"
    else:
        empirical = "Inconclusive"
    inner = sec_rings[-2]
    sign = "zero" if np.abs(inner).max() <= 1e-12 else ("negative" if inner.mean() < 0 else "positive")

    grid = grid or f.grid
    fields, sec_grid, gb_res, idres, sup_h = {}, None, float("nan"), {}, float("nan")
    if grid is not None:
        cur = classical_curvatures(f, bd, grid)
        sec_grid = GridField(grid, cur["sec"])
        gb_res = cur["gauss_brioschi_residual"]
        sup_h = float(np.abs(cur["mean_curvature"]).max())
        idres = {k: cur[k] for k in ("shape_identity_residual", "K_scaling_residual", "H_scaling_residual",
                                     "Hvec_scaling_residual")}
        fields = {"lambda": GridField(grid, cur["relative"]["lambda"]),
                  "mean_curvature": GridField(grid, np.moveaxis(cur["mean_curvature"], -1, 0))}
    h0 = None
    try:
        # the classical quantities are singular at 0; use the jet-based extension instead
        from .branch import extract_branch_data, mean_curvature_extension
        bd0 = bd or extract_branch_data(f, strict=False)
        if bd0.regular:
            h0 = [float(v) for v in mean_curvature_extension(f, bd0).at_zero]
    except BranchGeoError:
        h0 = None
    return CurvatureReport(s, iota, predicted_class(iota, s), empirical, radii, sup, mean_abs, mean, growth, q,
                           [float(c) for c in consts], exponent, sign, sup_h, h0, gb_res, idres, sec_grid, fields)
