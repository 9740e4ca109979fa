"""Fields sampled on punctured disk grids.

Polar grids use FFT in the angle and finite-difference stencils in the radius;
Cartesian grids sample the square inscribed in the disk. Both exclude a small
neighbourhood of the origin (the puncture cutoff ``eps``).
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.linalg import solve_banded

from .errors import GridTooCoarse, IllConditionedFit, NotClosedForm, SolverDiverged
from .iohelpers import write_csv
from .jets import BiJet

MIN_NODES = 16
DEFAULT_RHO = 0.97


def _stencil_weights(x: np.ndarray, x0: float, deriv: int = 1) -> np.ndarray:
    """Finite-difference weights at x0 from nodes x (exact for degree < len(x))."""
    h = np.max(np.abs(x - x0)) or 1.0
    t = (x - x0) / h
    p = len(x)
    vander = np.vander(t, p, increasing=True).T
    rhs = np.zeros(p)
    rhs[deriv] = np.prod(np.arange(1, deriv + 1))
    return np.linalg.solve(vander, rhs) / h ** deriv


def derivative_matrix(x: np.ndarray, order: int = 4, deriv: int = 1) -> np.ndarray:
    """Dense matrix of an (order+1)-point stencil derivative on sorted nodes x."""
    n = len(x)
    width = order + 1
    if n < width:
        raise GridTooCoarse(f"need at least {width} nodes for an order-{order} stencil")
    mat = np.zeros((n, n))
    half = width // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        idx = np.arange(lo, lo + width)
        mat[i, idx] = _stencil_weights(x[idx], x[i], deriv)
    return mat


class DiskGrid:
    """Punctured disk grid, polar (r, theta) or Cartesian.

    Polar radii are geometric, r_k = R * rho**k, descending from R. The ratio
    rho is 0.97 unless that would place nodes inside the cutoff, in which case
    it is raised so that the innermost ring sits on the cutoff.
    """

    def __init__(self, radius: float = 1.0, n_r: int = 128, n_theta: int = 128,
                 mode: str = "polar", rho: float | None = None, eps: float | None = None):
        if n_r < MIN_NODES or n_theta < MIN_NODES:
            raise GridTooCoarse(f"grid {n_r}x{n_theta} below the {MIN_NODES}-node minimum",
                                n_r=n_r, n_theta=n_theta)
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        self.mode = mode
        self.eps = float(eps) if eps is not None else self.radius / self.n_r
        if mode == "polar":
            if n_theta & (n_theta - 1):
                raise GridTooCoarse("n_theta must be a power of two for the FFT", n_theta=n_theta)
            if rho is None:
                rho = max(DEFAULT_RHO, (self.eps / self.radius) ** (1.0 / (self.n_r - 1)))
            self.rho = float(rho)
            self.r = self.radius * self.rho ** np.arange(self.n_r - 1, -1, -1)
            if self.r[0] < self.eps * (1 - 1e-12):
                raise GridTooCoarse("innermost ring falls inside the cutoff", rho=rho, eps=self.eps)
            self.theta = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
            rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
            self.z = rr * np.exp(1j * tt)
        elif mode == "cartesian":
            if n_r != n_theta:
                raise ValueError("cartesian grids are square: use n_r == n_theta")
            half = self.radius / np.sqrt(2.0)
            h = 2 * half / self.n_r
            self.x = -half + h * (np.arange(self.n_r) + 0.5)
            self.rho = None
            xx, yy = np.meshgrid(self.x, self.x, indexing="ij")
            self.z = xx + 1j * yy
            self.eps = min(self.eps, h / np.sqrt(2.0))
        else:
            raise ValueError(f"unknown grid mode {mode!r}")
        self._dr = None

    @property
    def shape(self):
        return self.z.shape

    @property
    def size(self):
        return self.z.size

    def scaled(self, radius: float) -> "DiskGrid":
        rho = self.rho if self.mode == "polar" else None
        eps = self.eps * radius / self.radius
        return DiskGrid(radius, self.n_r, self.n_theta, self.mode, rho=rho, eps=eps)

    def radial_matrix(self, order: int = 4) -> np.ndarray:
        if self._dr is None or self._dr[0] != order:
            self._dr = (order, derivative_matrix(self.r, order))
        return self._dr[1]

    def to_dict(self):
        return {"radius": self.radius, "n_r": self.n_r, "n_theta": self.n_theta,
                "mode": self.mode, "rho": self.rho, "eps": self.eps}

    @classmethod
    def from_dict(cls, d):
        return cls(d["radius"], d["n_r"], d["n_theta"], d.get("mode", "polar"),
                   rho=d.get("rho"), eps=d.get("eps"))

    def __repr__(self):
        return f"DiskGrid(R={self.radius}, {self.n_r}x{self.n_theta}, {self.mode})"


class GridField:
    """m-component field with values of shape (m, *grid.shape)."""

    def __init__(self, grid: DiskGrid, values):
        v = np.asarray(values)
        if v.shape == grid.shape:
            v = v[None]
        if v.shape[1:] != grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains NaN or inf")
        self.grid = grid
        self.values = v

    @property
    def m(self):
        return self.values.shape[0]

    def component(self, i: int) -> "GridField":
        return GridField(self.grid, self.values[i])

    def __add__(self, other):
        ov = other.values if isinstance(other, GridField) else other
        return GridField(self.grid, self.values + ov)

    def __sub__(self, other):
        ov = other.values if isinstance(other, GridField) else other
        return GridField(self.grid, self.values - ov)

    def __mul__(self, other):
        ov = other.values if isinstance(other, GridField) else other
        return GridField(self.grid, self.values * ov)

    __rmul__ = __mul__

    def sup(self, mask=None) -> float:
        a = np.abs(self.values)
        if mask is not None:
            a = a[:, mask]
        return float(a.max())

    def interpolate(self, zq) -> np.ndarray:
        """Values at arbitrary points of the punctured disk, shape (m, len(zq))."""
        zq = np.atleast_1d(np.asarray(zq, dtype=complex))
        g = self.grid
        if g.mode == "cartesian":
            out = []
            for comp in self.values:
                re = RegularGridInterpolator((g.x, g.x), comp.real, method="cubic",
                                             bounds_error=False, fill_value=None)
                im = RegularGridInterpolator((g.x, g.x), comp.imag, method="cubic",
                                             bounds_error=False, fill_value=None)
                pts = np.stack([zq.real, zq.imag], axis=-1)
                out.append(re(pts) + 1j * im(pts))
            res = np.array(out)
            return res.real if np.isrealobj(self.values) else res
        modes = np.fft.fft(self.values, axis=-1) / g.n_theta
        m = np.fft.fftfreq(g.n_theta, 1.0 / g.n_theta)
        if g.n_theta % 2 == 0:
            modes[..., g.n_theta // 2] *= 0.5
            m_extra = g.n_theta // 2
        rq = np.minimum(np.abs(zq), g.r[-1])
        tq = np.angle(zq)
        phase = np.exp(1j * np.outer(tq, m))
        if g.n_theta % 2 == 0:
            phase_extra = np.exp(1j * tq * m_extra)
        res = np.empty((self.m, len(zq)), dtype=complex)
        for i in range(len(zq)):
            ring = modes @ phase[i]
            if g.n_theta % 2 == 0:
                ring = ring + modes[..., g.n_theta // 2] * phase_extra[i]
            res[:, i] = CubicSpline(g.r, ring, axis=-1)(rq[i])
        return res.real if np.isrealobj(self.values) else res

    def to_csv(self, path) -> Path:
        g = self.grid
        header = ["r", "theta"]
        for i in range(self.m):
            header += [f"comp{i}_re", f"comp{i}_im"]
        zf = g.z.ravel()
        vals = self.values.reshape(self.m, -1)
        r = np.abs(zf)
        th = np.mod(np.angle(zf), 2 * np.pi)
        cols = [r, th]
        for i in range(self.m):
            cols += [vals[i].real, vals[i].imag]
        rows = np.column_stack(cols)
        return write_csv(path, header, rows.tolist())

    @classmethod
    def from_csv(cls, path, grid: DiskGrid) -> "GridField":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(x) for x in row] for row in reader])
        if header[:2] != ["r", "theta"] or (len(header) - 2) % 2:
            raise ValueError("malformed grid CSV header")
        m = (len(header) - 2) // 2
        if data.shape[0] != grid.size:
            raise ValueError("CSV node count does not match grid")
        zf = grid.z.ravel()
        if not np.allclose(data[:, 0], np.abs(zf), atol=1e-12):
            raise ValueError("CSV radii do not match grid")
        vals = data[:, 2::2] + 1j * data[:, 3::2]
        vals = vals.T.reshape((m,) + grid.shape)
        if np.all(vals.imag == 0):
            vals = vals.real
        return cls(grid, vals)


def sample_jet(jets: BiJet | Sequence[BiJet], grid: DiskGrid) -> GridField:
    if isinstance(jets, BiJet):
        jets = [jets]
    return GridField(grid, np.array([j(grid.z) for j in jets]))


def _d_theta(values: np.ndarray, n_theta: int) -> np.ndarray:
    k = np.fft.fftfreq(n_theta, 1.0 / n_theta)
    k[n_theta // 2] = 0.0
    return np.fft.ifft(1j * k * np.fft.fft(values, axis=-1), axis=-1)


def dz_grid(F: GridField, order: int = 4) -> tuple[GridField, GridField]:
    """Wirtinger derivatives (dF/dz, dF/dzbar) on the grid.

    Polar grids use dF/dz = e^{-i theta}(dF/dr - (i/r) dF/dtheta)/2 with a
    spectral angular derivative and an (order+1)-point radial stencil.
    """
    g = F.grid
    v = F.values.astype(complex)
    if g.mode == "polar":
        fr = np.einsum("ij,mjk->mik", g.radial_matrix(order), v)
        ft = _d_theta(v, g.n_theta)
        r = g.r[None, :, None]
        ph = np.exp(1j * g.theta)[None, None, :]
        dz = 0.5 * np.conj(ph) * (fr - 1j * ft / r)
        dzb = 0.5 * ph * (fr + 1j * ft / r)
    else:
        d = derivative_matrix(g.x, order)
        fx = np.einsum("ij,mjk->mik", d, v)
        fy = np.einsum("kj,mij->mik", d, v)
        dz = 0.5 * (fx - 1j * fy)
        dzb = 0.5 * (fx + 1j * fy)
    return GridField(g, dz), GridField(g, dzb)


def laplacian_grid(F: GridField, order: int = 4) -> GridField:
    _, fzb = dz_grid(F, order)
    fzbz, _ = dz_grid(fzb, order)
    out = 4.0 * fzbz.values
    if np.isrealobj(F.values):
        out = out.real
    return GridField(F.grid, out)


_GL_CACHE = {}


def _gauss(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = leggauss(n)
    return _GL_CACHE[n]


def _evaluator(F) -> Callable:
    if isinstance(F, BiJet):
        return lambda w: np.asarray(F(w), dtype=complex)
    if isinstance(F, GridField):
        return lambda w: F.interpolate(w)[0]
    if callable(F):
        return lambda w: np.asarray(F(w), dtype=complex)
    raise TypeError("integrand must be a BiJet, GridField or callable")


def _segment(fn, a, b, nodes):
    x, wts = _gauss(nodes)
    w = 0.5 * (b - a) * x + 0.5 * (b + a)
    vals = fn(w)
    return 0.5 * (b - a) * np.sum(wts * vals), np.max(np.abs(vals))


def _arc(fn, rad, t0, t1, nodes):
    x, wts = _gauss(nodes)
    t = 0.5 * (t1 - t0) * x + 0.5 * (t1 + t0)
    w = rad * np.exp(1j * t)
    vals = fn(w) * 1j * w
    return 0.5 * (t1 - t0) * np.sum(wts * vals), np.max(np.abs(fn(w)))


def line_integral(F, z: complex, s: int = 0, part: str = "complex", nodes: int = 32,
                  rel_tol: float = 1e-6) -> complex:
    """Integral of w^s F(w) dw from 0 to z.

    Computed along the radial-then-circular path (0 -> |z| -> z) and checked
    against the straight segment; ``part="real"`` compares real parts only,
    for integrands whose real part alone is exact.
    """
    fn0 = _evaluator(F)

    def fn(w):
        return w ** s * fn0(w)

    z = complex(z)
    rad, ang = abs(z), np.angle(z)
    if rad == 0.0:
        return 0j
    i1, m1 = _segment(fn, 0.0, rad, nodes)
    i2, m2 = _arc(fn, rad, 0.0, ang, nodes) if ang != 0 else (0j, 0.0)
    path_a = i1 + i2
    path_b, m3 = _segment(fn, 0.0, z, nodes)
    length = rad + rad * abs(ang)
    scale = max(m1, m2, m3)
    tol = rel_tol * length * scale + 1e-14
    diff = path_a - path_b
    if part == "real":
        diff = diff.real
    if abs(diff) > tol:
        raise NotClosedForm(f"path discrepancy {abs(diff):.3e} exceeds {tol:.3e}",
                            discrepancy=float(abs(diff)), tolerance=float(tol))
    return path_a


def _interior_mask(grid: DiskGrid, margin: int) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    if grid.mode == "polar":
        mask[margin:grid.n_r - margin, :] = True
    else:
        mask[margin:-margin, margin:-margin] = True
    return mask


def relative_residual(approx: GridField, target: GridField, margin: int = 3) -> float:
    mask = _interior_mask(approx.grid, margin)
    num = np.abs(approx.values - target.values)[:, mask].max()
    den = np.abs(target.values)[:, mask].max()
    return float(num / den) if den > 0 else float(num)


def poisson_solve(rhs: GridField, tol: float = 1e-4, check: bool = True) -> GridField:
    """Solve Lap u = rhs on the disk with u = 0 on |z| = R.

    Each angular Fourier mode solves a 4th-order (Numerov) banded system in
    t = log r. At the inner ring the regular local solution is imposed:
    u_t - |m| u = r^2 f_m / (2(|m|+1)).
    """
    g = rhs.grid
    if g.mode != "polar":
        raise ValueError("poisson_solve needs a polar grid")
    t = np.log(g.r)
    h = t[1] - t[0]
    n = g.n_r
    fm = np.fft.fft(rhs.values.astype(complex), axis=-1)
    mvals = np.abs(np.fft.fftfreq(g.n_theta, 1.0 / g.n_theta))
    gvals = (g.r ** 2)[None, :, None] * fm
    um = np.zeros_like(fm)
    c1 = h * h / 12.0
    for im, m in enumerate(mvals):
        ab = np.zeros((6, n), dtype=float)
        # banded storage: ab[u + i - j, j] = A[i, j] with u = 4 upper bands
        def put(i, j, val):
            ab[4 + i - j, j] = val
        put(0, 0, -25.0 / (12 * h) - m)
        for j, w in zip(range(1, 5), (48.0, -36.0, 16.0, -3.0)):
            put(0, j, w / (12 * h))
        off = 1.0 - c1 * m * m
        diag = -(2.0 + 10.0 * c1 * m * m)
        for i in range(1, n - 1):
            put(i, i - 1, off)
            put(i, i, diag)
            put(i, i + 1, off)
        put(n - 1, n - 1, 1.0)
        gm = gvals[:, :, im]
        b = np.zeros((rhs.m, n), dtype=complex)
        b[:, 1:-1] = c1 * (gm[:, 2:] + 10.0 * gm[:, 1:-1] + gm[:, :-2])
        b[:, 0] = g.r[0] ** 2 * fm[:, 0, im] / (2.0 * (m + 1.0))
        b[:, -1] = 0.0
        um[:, :, im] = solve_banded((1, 4), ab, b.T).T
    u = np.fft.ifft(um, axis=-1)
    if np.isrealobj(rhs.values):
        u = u.real
    out = GridField(g, u)
    if check:
        res = relative_residual(laplacian_grid(out), rhs)
        if not np.isfinite(res) or res > tol:
            raise SolverDiverged(f"Poisson residual {res:.3e} exceeds {tol:.1e}", residual=res)
    return out


def iterated_poisson(l: GridField, s: int, tol: float = 1e-3,
                     annulus: tuple[float, float] = (0.5, 0.8)) -> GridField:
    """phi with Lap^(s+1) phi = 4^(s+1) l, zero boundary values at every stage.

    Every stage is checked on the full interior. The compounded residual of
    Lap^(s+1) phi is measured on the annulus ``annulus`` (fractions of R):
    each numerical Laplacian multiplies rounding noise by about (h r)^-2, so
    near the puncture a sixth-order operator is not a usable check.
    """
    target = GridField(l.grid, 4.0 ** (s + 1) * l.values)
    phi = target
    for _ in range(s + 1):
        phi = poisson_solve(phi)
    res = iterated_residual(phi, l, s, annulus)
    if not np.isfinite(res) or res > tol:
        raise SolverDiverged(f"iterated Poisson residual {res:.3e} exceeds {tol:.1e}", residual=res)
    return phi


def iterated_residual(phi: GridField, l: GridField, s: int,
                      annulus: tuple[float, float] = (0.5, 0.8)) -> float:
    """Relative residual of Lap^(s+1) phi = 4^(s+1) l on an annulus (fractions of R)."""
    target = 4.0 ** (s + 1) * l.values
    back = phi
    for _ in range(s + 1):
        back = laplacian_grid(back, order=6)
    g = l.grid
    rad = np.abs(g.z)
    mask = (rad >= annulus[0] * g.radius) & (rad <= annulus[1] * g.radius)
    num = np.abs(back.values - target)[:, mask].max()
    den = np.abs(target)[:, mask].max()
    return float(num / den) if den > 0 else float(num)


def fit_jet(F: GridField, order: int, cond_max: float = 1e8) -> list[BiJet]:
    """Least-squares Taylor jet of each component of F at the origin."""
    g = F.grid
    m_comp = F.m
    out = np.zeros((m_comp, order + 1, order + 1), dtype=complex)
    if g.mode == "polar":
        modes = np.fft.fft(F.values.astype(complex), axis=-1) / g.n_theta
        rs = g.r / g.radius
        for m in range(-order, order + 1):
            if abs(m) >= g.n_theta // 2:
                raise IllConditionedFit("angular resolution too low for the jet order", order=order)
            degs = np.arange(abs(m), order + 1, 2)
            A = rs[:, None] ** degs[None, :]
            cond = np.linalg.cond(A)
            if cond > cond_max:
                raise IllConditionedFit(f"radial fit condition {cond:.2e} exceeds {cond_max:.0e}",
                                        condition=float(cond), mode=m)
            a = modes[:, :, m % g.n_theta]
            sol, *_ = np.linalg.lstsq(A, a.T, rcond=None)
            for di, d in enumerate(degs):
                j, k = (d + m) // 2, (d - m) // 2
                out[:, j, k] = sol[di] / g.radius ** d
    else:
        zs = g.z.ravel() / g.radius
        slots = [(j, k) for j in range(order + 1) for k in range(order + 1 - j)]
        A = np.stack([zs ** j * np.conj(zs) ** k for j, k in slots], axis=1)
        cond = np.linalg.cond(A)
        if cond > cond_max:
            raise IllConditionedFit(f"fit condition {cond:.2e} exceeds {cond_max:.0e}",
                                    condition=float(cond))
        sol, *_ = np.linalg.lstsq(A, F.values.reshape(m_comp, -1).T.astype(complex), rcond=None)
        for i, (j, k) in enumerate(slots):
            out[:, j, k] = sol[i] / g.radius ** (j + k)
    real = np.isrealobj(F.values)
    return [BiJet(c, order, real=real) for c in out]
