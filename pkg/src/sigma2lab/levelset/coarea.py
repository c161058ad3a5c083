"""Level-curve tables by coarea integration.

Two paths produce a :class:`LevelCurveTable`:

* ``analytic``: for centred radial fields the level sets are round
  spheres whose radius is known, so every surface average is ``r^3``
  times the integrand at one point, and ``A`` is closed-form. The
  integrands still go through the generic curvature formulas.
* ``grid``: a cell-centred lattice on the ball ``|x| <= R``. Inside each
  cell ``u`` is replaced by its linearisation, so ``u - u_p`` is ``|grad u|``
  times a sum of four independent uniforms. The slice density and
  distribution of that sum are exact (a box spline), which gives
  surface integrals ``int_L phi = sum phi h^4 f`` and superlevel volumes
  ``sum h^4 (1 - F)`` without shell aliasing.

Cone points are handled by a partition of unity. The lattice carries the
integrands weighted by a smooth radial cutoff ``chi``; on a small ball
around each point the level sets are radial graphs, and the ``1 - chi``
part of every surface and volume integral is done by polar quadrature.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
from scipy.interpolate import CubicSpline, PPoly
from scipy.optimize import brentq

from ..constants import S3_AREA
from ..sphere3 import s3_quadrature
from ..tables import LevelCurveTable, mass
from .fields import ScalarField4D
from .geometry import normal_second_derivative_from, surface_integrands

DEFAULT_LEVELS = 201
CHUNK = 1 << 15  # points per field evaluation batch
STENCIL_STEP = 1e-4


class EmptyBinsError(ValueError):
    """Some requested level has an empty level set."""


class SingularFractionError(ValueError):
    """Too much of the grid is cut out around singular points."""


@dataclass(frozen=True)
class GridSpec:
    radius: float = 6.0
    resolution: int = 64

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be at least 16")
        if self.resolution % 2:
            raise ValueError("resolution must be even so no node sits at the origin")

    @property
    def h(self) -> float:
        return 2.0 * self.radius / self.resolution

    @property
    def axis(self) -> np.ndarray:
        return -self.radius + (np.arange(self.resolution) + 0.5) * self.h


@dataclass(frozen=True)
class Bins:
    t_min: float
    t_max: float
    count: int = DEFAULT_LEVELS

    def __post_init__(self):
        if not self.t_max > self.t_min:
            raise ValueError("t_max must exceed t_min")
        if self.count < 3:
            raise ValueError("need at least three levels")

    @property
    def levels(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.count)

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.count - 1)


# -- exact slice statistics of a box spline ----------------------------------------


@numba.njit(cache=True, nogil=True)
def _subsets(c, nc, cs, sg):
    """Subset sums and signs for inclusion-exclusion over ``nc`` widths."""
    for m in range(1 << nc):
        acc = 0.0
        sgn = 1.0
        for i in range(nc):
            if (m >> i) & 1:
                acc += c[i]
                sgn = -sgn
        cs[m] = acc
        sg[m] = sgn


@numba.njit(cache=True, nogil=True)
def _box_stats(x, nc, cs, sg, norm_f, norm_F, norm_G):
    """Density, distribution and integrated distribution of a box spline at ``x`` from its left end."""
    F = 0.0
    f = 0.0
    G = 0.0
    for m in range(1 << nc):
        y = x - cs[m]
        if y > 0.0:
            yp = y ** (nc - 1)
            f += sg[m] * yp
            F += sg[m] * yp * y
            G += sg[m] * yp * y * y
    return F * norm_F, f * norm_f, G * norm_G


@numba.njit(cache=True, nogil=True)
def _cdf_pdf(s, c, nc):
    """Distribution and density of ``sum_i c_i (U_i - 1/2)`` at ``s``, ``U_i`` uniform."""
    cs = np.empty(1 << nc)
    sg = np.empty(1 << nc)
    _subsets(c, nc, cs, sg)
    tot = 0.0
    prod = 1.0
    for i in range(nc):
        tot += c[i]
        prod *= c[i]
    fact = 1.0
    for i in range(1, nc):
        fact *= i
    norm_f = 1.0 / (fact * prod)
    F, f, _ = _box_stats(s + 0.5 * tot, nc, cs, sg, norm_f, norm_f / nc, norm_f / (nc * (nc + 1)))
    return F, f


@numba.njit(cache=True, nogil=True)
def _step(y):
    if y <= 0.0:
        return 0.0
    if y >= 1.0:
        return 1.0
    return y * y * y * (10.0 - 15.0 * y + 6.0 * y * y)


@numba.njit(cache=True, nogil=True)
def _weight(x, centers, radii, mode):
    """Cutoff ``chi`` at ``x``, times the coarse share ``psi`` (mode 1) or the fine share ``1 - psi`` (mode 2)."""
    chi = 1.0
    psi = 1.0
    for q in range(centers.shape[0]):
        d2 = 0.0
        for i in range(4):
            e = x[i] - centers[q, i]
            d2 += e * e
        d = math.sqrt(d2)
        chi *= _step((d - radii[q, 0]) / (radii[q, 1] - radii[q, 0]))
        psi *= _step((d - radii[q, 2]) / (radii[q, 3] - radii[q, 2]))
    if mode == 1:
        return chi * psi
    if mode == 2:
        return chi * (1.0 - psi)
    return chi


@numba.njit(cache=True, nogil=True)
def _normal_root(s, kappa):
    """Root ``sigma`` of ``sigma + kappa sigma^2 / 2 = s``, the branch through 0."""
    disc = 1.0 + 2.0 * kappa * s
    if disc <= 0.0:
        return s
    return 2.0 * s / (1.0 + math.sqrt(disc))


@numba.njit(cache=True, nogil=True)
def _accumulate(x, u, g, nvec, phi, e4u, vmask, full_b, full_w, mode, shift, kappa, centers, radii, h,
                t0, dt, K, surf, vol, aint, full_v, full_a, n_blur, blur):
    c = np.empty(4 + n_blur)
    cs = np.empty(1 << (4 + n_blur))
    sg = np.empty(1 << (4 + n_blur))
    cs_v = np.empty(16)
    sg_v = np.empty(16)
    y = np.empty(4)
    h4 = h**4
    for p in range(u.size):
        if g[p] <= 0.0:
            # critical cell: step function in the volume integrals, no surface
            kk = int(np.floor((u[p] - t0) / dt)) + 1
            if kk > 0:
                kk = min(kk, K)
                full_v[kk - 1] += full_b[p]
                full_a[kk - 1] += full_w[p]
            continue
        nc = 0
        tot = 0.0
        prod = 1.0
        for i in range(4):
            ci = h * abs(nvec[p, i])
            if ci > 1e-4 * h:
                c[nc] = ci
                nc += 1
                tot += ci
                prod *= ci
        # volumes use the cell's own extent; surfaces add the blur
        nv = nc
        tot_v = tot
        fact_v = 1.0
        for i in range(1, nv):
            fact_v *= i
        norm_fv = 1.0 / (fact_v * prod)
        _subsets(c, nv, cs_v, sg_v)
        for i in range(n_blur):
            c[nc] = blur
            nc += 1
            tot += blur
            prod *= blur
        _subsets(c, nc, cs, sg)
        fact = 1.0
        for i in range(1, nc):
            fact *= i
        norm_f = 1.0 / (fact * prod)
        norm_F = norm_f / nc
        norm_G = norm_F / (nc + 1)
        half = 0.5 * tot * g[p]
        klo = int(np.ceil((u[p] - half - t0) / dt))
        khi = int(np.floor((u[p] + half - t0) / dt))
        if klo > 0:
            kk = min(klo, K)
            full_v[kk - 1] += full_b[p]
            full_a[kk - 1] += full_w[p]
        for k in range(max(klo, 0), min(khi, K - 1) + 1):
            s = (t0 + k * dt - u[p]) / g[p]
            _, f, _ = _box_stats(s + 0.5 * tot, nc, cs, sg, norm_f, norm_F, norm_G)
            F, _, G = _box_stats(s + 0.5 * tot_v, nv, cs_v, sg_v, norm_fv, norm_fv / nv, norm_fv / (nv * (nv + 1)))
            ws = h4
            wk = h4 * vmask[p]
            ea = e4u[p]
            if 1.0 - F > 1e-12:
                # offset of the superlevel part's centroid along the normal
                m1 = (G - s * F) / (1.0 - F)
                ea = e4u[p] * math.exp(4.0 * g[p] * m1)
                if mode[p] >= 0 and vmask[p] > 0.0:
                    for i in range(4):
                        y[i] = x[p, i] + nvec[p, i] * m1
                    wk = wk * _weight(y, centers, radii, 0)
            if mode[p] >= 0:
                # the level set point on the normal line through the cell centre,
                # from the quadratic model of u
                sig = _normal_root(s + shift[p], kappa[p])
                for i in range(4):
                    y[i] = x[p, i] + nvec[p, i] * sig
                ws = h4 * _weight(y, centers, radii, mode[p])
            for j in range(phi.shape[1]):
                surf[j, k] += phi[p, j] * ws * f
            vol[k] += wk * (1.0 - F)
            aint[k] += wk * ea * (1.0 - F)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass(frozen=True)
class _Exclusion:
    """Weights around cone points.

    ``chi`` vanishes inside ``rho1`` and is 1 outside ``rho2``; the coarse
    lattice share ``psi`` rises from 0 at ``rho2 + inner`` to 1 at
    ``rho2 + outer`` and sub-cells carry ``1 - psi``.
    """

    centers: np.ndarray  # (m, 4)
    radii: np.ndarray  # (m, 4): rho1, rho2, psi start, psi end
    balls: tuple = ()
    refine: int = 1  # sub-cells per axis

    @property
    def rho1(self):
        return self.radii[:, 0]

    @property
    def rho2(self):
        return self.radii[:, 1]

    def _distances(self, x):
        return [np.linalg.norm(x - p, axis=1) for p in self.centers]

    def within(self, x, column, pad):
        """Points closer than ``radii[:, column] + pad`` to some cone point."""
        out = np.zeros(x.shape[0], dtype=bool)
        for d, r in zip(self._distances(x), self.radii[:, column]):
            out |= d < r + pad
        return out

    def weight(self, x, mode: int = 0):
        chi = np.ones(x.shape[0])
        psi = np.ones(x.shape[0])
        for d, (r1, r2, a, b) in zip(self._distances(x), self.radii):
            chi *= _smoothstep((d - r1) / (r2 - r1))
            psi *= _smoothstep((d - a) / (b - a))
        return chi * {0: 1.0, 1: psi, 2: 1.0 - psi}[mode]


def _slab_points(grid: GridSpec, i: int):
    ax = grid.axis
    X2, X3, X4 = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.empty((X2.size, 4))
    pts[:, 0] = ax[i]
    pts[:, 1] = X2.ravel()
    pts[:, 2] = X3.ravel()
    pts[:, 3] = X4.ravel()
    keep = np.einsum("ni,ni->n", pts, pts) <= grid.radius**2
    return pts[keep]


def _pairwise_sum(parts):
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


class LocalGraphError(ValueError):
    """A level set inside a cut-out ball is not a radial graph over its cone point."""


@dataclass(frozen=True, eq=False)
class _LocalBall:
    """Polar quadrature on ``|x - p| < rho2`` weighted by ``1 - chi``.

    Inside the ball ``u`` decreases along every ray from ``p``, so each
    level set is a radial graph ``r = r(theta)`` with surface element
    ``r^3 |grad u| / |u_r| dtheta``.
    """

    center: np.ndarray
    rho1: float
    rho2: float
    dirs: np.ndarray  # (J, 4)
    weights: np.ndarray  # (J,)
    lam: np.ndarray  # (I,) log radii, ascending
    u: np.ndarray  # (I, J)
    du: np.ndarray  # (I, J) du/dlam
    cum_B: object  # antiderivative in lam, shared by all directions
    cum_A: object  # antiderivative in lam, one column per direction

    def cut(self, r):
        return 1.0 - _smoothstep((r - self.rho1) / (self.rho2 - self.rho1))

    @property
    def t_inner(self) -> float:
        """Above this level the level set lies inside ``|x - p| < rho1``."""
        i = int(np.searchsorted(self.lam, math.log(self.rho1)))
        return float(np.max(self.u[i]))

    @property
    def t_limit(self) -> float:
        """Highest level the radial samples resolve."""
        return float(np.min(self.u[0]))

    def roots(self, t) -> np.ndarray:
        """Log radius of level ``t`` on each ray, shape ``(K, J)``; ``lam[-1]`` if ``u < t`` on the whole ray part."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lam, u, du = self.lam, self.u, self.du
        out = np.empty((t.size, u.shape[1]))
        for j in range(u.shape[1]):
            k = np.clip(np.searchsorted(-u[:, j], -t), 1, lam.size - 1)  # first node with u <= t
            i0, i1 = k - 1, k
            d = lam[i1] - lam[i0]
            u0, u1 = u[i0, j], u[i1, j]
            m0, m1 = du[i0, j] * d, du[i1, j] * d
            s = np.clip((u0 - t) / (u0 - u1), 0.0, 1.0)
            for _ in range(4):
                # Newton on the cubic Hermite interpolant
                s2, s3 = s * s, s * s * s
                p = (2 * s3 - 3 * s2 + 1) * u0 + (s3 - 2 * s2 + s) * m0 + (3 * s2 - 2 * s3) * u1 + (s3 - s2) * m1
                dp = (6 * s2 - 6 * s) * (u0 - u1) + (3 * s2 - 4 * s + 1) * m0 + (3 * s2 - 2 * s) * m1
                s = np.clip(s - (p - t) / dp, 0.0, 1.0)
            out[:, j] = np.where(t <= u[-1, j], lam[-1], lam[i0] + s * d)
        return out

    def _cum_A_at(self, lam_kj):
        pp = self.cum_A
        i = np.clip(np.searchsorted(pp.x, lam_kj, side="right") - 1, 0, pp.x.size - 2)
        dx = lam_kj - pp.x[i]
        cols = np.broadcast_to(np.arange(lam_kj.shape[1]), lam_kj.shape)
        val = np.zeros_like(lam_kj)
        for m in range(pp.c.shape[0]):
            val = val * dx + pp.c[m, i, cols]
        return val

    def weight_above(self, t):
        """``(1/|S^3|) int_{u >= t} (1 - chi) e^{4u}`` over the ball."""
        return self._cum_A_at(self.roots(t)) @ self.weights

    def contributions(self, field, t):
        """Surface integrals ``(6, K)`` and volume integrals ``B, A`` (each ``(K,)``) of this ball."""
        lam_kj = self.roots(t)
        K = lam_kj.shape[0]
        r = np.exp(lam_kj)
        surf = np.zeros((6, K))
        kk, jj = np.nonzero(lam_kj < self.lam[-1])
        if kk.size:
            rk = r[kk, jj]
            x = self.center + rk[:, None] * self.dirs[jj]
            u, grad, hess = field.evaluate(x)
            g, _, phi = surface_integrands(u, grad, hess)
            ur = np.einsum("ni,ni->n", grad, self.dirs[jj])
            wgt = self.weights[jj] * self.cut(rk) * rk**3 * g / np.abs(ur)
            for c in range(6):
                surf[c] = np.bincount(kk, weights=wgt * phi[:, c], minlength=K)
        B = self.cum_B(lam_kj) @ self.weights
        A = self._cum_A_at(lam_kj) @ self.weights
        return surf, B, A


def _local_ball(field: ScalarField4D, center, beta: float, rho1: float, rho2: float,
                n_s: int = 8, n_phi: int = 16, step: float = 0.08, decay: float = 24.0) -> _LocalBall:
    """Sample ``u`` on rays from ``center`` out to ``rho2``, uniformly in ``log r``."""
    quad = s3_quadrature(n_s, n_phi)
    m = 4.0 + 4.0 * beta  # e^{4u} r^4 ~ r^m at the cone point
    span = decay / m
    n = int(math.ceil(span / step)) + 1
    lam = np.linspace(math.log(rho2) - span, math.log(rho2), n)
    r = np.exp(lam)
    x = np.asarray(center, dtype=float)[None, None, :] + r[:, None, None] * quad.points[None, :, :]
    u, grad, _ = field.evaluate(x.reshape(-1, 4))
    u = u.reshape(n, -1)
    du = np.einsum("nji,ji->nj", grad.reshape(n, quad.size, 4), quad.points) * r[:, None]
    if np.any(du >= 0):
        raise LocalGraphError("u is not radially decreasing around a cone point; refine the grid")
    cut = 1.0 - _smoothstep((r - rho1) / (rho2 - rho1))
    fB = cut * r**4
    fA = cut[:, None] * np.exp(4.0 * u) * r[:, None] ** 4
    # below lam[0] the integrands decay like r^4 and r^m
    cum_B = _antiderivative(lam, fB, fB[0] / 4.0)
    cum_A = _antiderivative(lam, fA, fA[0] / m)
    return _LocalBall(np.asarray(center, dtype=float), rho1, rho2, quad.points, quad.weights / S3_AREA,
                      lam, u, du, cum_B, cum_A)


def _antiderivative(x, y, base):
    """``base + int_{x0}^{s} y`` as a piecewise polynomial in ``s``."""
    pp = CubicSpline(x, y, axis=0).antiderivative()
    c = pp.c.copy()
    c[-1] += base - pp(x[0])
    return PPoly(c, pp.x, extrapolate=True)


def default_bins(field: ScalarField4D, grid: GridSpec, count: int = DEFAULT_LEVELS,
                 exclusion: tuple[float, float] = (1.5, 3.0), top_cells: int = 64,
                 blur: tuple[int, float] = (2, 0.5)) -> Bins:
    """Levels whose superlevel sets stay inside the domain.

    Without cone points the top level is the lowest of the ``top_cells``
    largest cell values, so the highest level sets still span several
    cells. With cone points it is the level whose set has shrunk into the
    inner cutoff radius around every point.
    """
    t_min, t_max = _prescan(field, grid, _exclusion(field, grid, exclusion), top_cells, blur)
    return Bins(t_min, t_max, count)


def _monotone_radius(field: ScalarField4D, center, r_max: float, n_s: int = 8, n_phi: int = 16,
                     n_r: int = 96) -> float:
    """Largest sampled radius below ``r_max`` out to which ``u`` decreases on every ray from ``center``."""
    quad = s3_quadrature(n_s, n_phi)
    r = r_max * np.exp(np.linspace(-6.0, 0.0, n_r))
    x = np.asarray(center, dtype=float)[None, None, :] + r[:, None, None] * quad.points[None, :, :]
    _, grad, _ = field.evaluate(x.reshape(-1, 4))
    du = np.einsum("nji,ji->nj", grad.reshape(n_r, quad.size, 4), quad.points)
    bad = np.any(du >= 0, axis=1)
    if not bad.any():
        return math.inf
    i = int(np.argmax(bad))
    if i == 0:
        raise LocalGraphError("u is not radially decreasing near a cone point")
    return float(r[i - 1])


def _exclusion(field: ScalarField4D, grid: GridSpec, exclusion, min_cells: float = 3.0,
               max_refine: int = 8, blend: tuple[float, float] = (0.5, 2.5)) -> _Exclusion:
    """Cutoff radii per cone point and the matching local balls.

    ``exclusion = (rho1, rho2)`` in cells is the default; the radii shrink
    (keeping their ratio) where ``u`` stops being radially decreasing
    sooner. Lattice cells near a ball are split so the inner radius spans
    at least ``min_cells`` sub-cells; coarse cells and sub-cells hand over
    between ``blend`` cells outside the outer radius.
    """
    pts = list(field.singular_points)
    centers = np.array([p.array for p in pts], dtype=float).reshape(-1, 4)
    betas = np.array([p.beta for p in pts], dtype=float)
    ratio = exclusion[0] / exclusion[1]
    rho2 = np.array([min(exclusion[1] * grid.h, 0.8 * _monotone_radius(field, c, exclusion[1] * grid.h))
                     for c in centers])
    rho1 = ratio * rho2
    for i in range(len(centers)):
        if np.linalg.norm(centers[i]) + rho2[i] > grid.radius:
            raise ValueError("a singular point's exclusion ball leaves the domain")
        for j in range(i):
            if np.linalg.norm(centers[i] - centers[j]) < rho2[i] + rho2[j]:
                raise ValueError("exclusion balls of two singular points overlap; refine the grid")
    refine = 1
    if len(centers):
        refine = int(math.ceil(min_cells * grid.h / float(np.min(rho1))))
        if refine > max_refine:
            raise LocalGraphError(
                f"cone points need sub-cells finer than h/{max_refine}; refine the grid")
    balls = tuple(_local_ball(field, c, b, r1, r2) for c, b, r1, r2 in zip(centers, betas, rho1, rho2))
    radii = np.stack([rho1, rho2, rho2 + blend[0] * grid.h, rho2 + blend[1] * grid.h], axis=1).reshape(-1, 4)
    return _Exclusion(centers, radii, balls, refine)


def _cell_model(u, grad, hess, h, blur):
    """Cell-mean value and half-width of the (blurred) linear cell model."""
    uc = u + (h * h / 24.0) * np.trace(hess, axis1=-2, axis2=-1)
    g = np.linalg.norm(grad, axis=-1)
    half = 0.5 * h * (np.sum(np.abs(grad), axis=-1) + blur[0] * blur[1] * g)
    return uc, half


def _ball_top(balls, lattice_weight, fraction):
    """Level above which the balls carry ``fraction`` of the total weight, at least the
    level where every lattice contribution has ended."""
    def above(t):
        return sum(float(b.weight_above(t)[0]) for b in balls)

    lo = max(b.t_inner for b in balls)
    hi = min(b.t_limit for b in balls)
    if lo >= hi:
        return hi
    target = fraction * (lattice_weight + above(-np.inf))
    if above(lo) <= target:
        return lo
    if above(hi) > target:
        return hi
    return brentq(lambda t: above(t) - target, lo, hi, xtol=1e-10)


def _prescan(field, grid, ex, top_cells, blur, top_fraction=0.03):
    shell_max = -np.inf
    top = np.empty(0)
    weight = 0.0
    for i in range(grid.resolution):
        pts = _slab_points(grid, i)
        if pts.size == 0:
            continue
        live = np.ones(pts.shape[0], dtype=bool)
        for c in ex.centers:
            live &= np.linalg.norm(pts - c, axis=1) > 0.05 * grid.h
        u = np.full(pts.shape[0], np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            u[live] = field.value(pts[live])
        r = np.linalg.norm(pts, axis=1)
        shell = r > grid.radius - 2.0 * grid.h
        if np.any(shell):
            shell_max = max(shell_max, float(np.max(u[shell])))
        if ex.balls:
            weight += float(np.sum(ex.weight(pts[live]) * np.exp(4.0 * u[live]))) * grid.h**4
        else:
            top = np.sort(np.concatenate([top, u]))[-top_cells:]
    if ex.balls:
        t_max = _ball_top(ex.balls, weight / S3_AREA, top_fraction)
    else:
        t_max = float(top[0])
    span = t_max - shell_max
    if not np.isfinite(span) or span <= 0:
        raise EmptyBinsError("no level set fits inside the domain; enlarge the domain radius")
    margin = 1e-3 * span
    return shell_max + margin, t_max - margin


@dataclass
class GridDiagnostics:
    cells: int
    excluded_cells: int
    critical_cells: int
    h: float
    local_B: np.ndarray
    local_A: np.ndarray

    @property
    def excluded_fraction(self) -> float:
        return self.excluded_cells / max(self.cells, 1)


_GAUSS2 = np.stack(np.meshgrid(*[np.array([-0.5, 0.5]) / math.sqrt(3.0)] * 4, indexing="ij"),
                   axis=-1).reshape(-1, 4)


def _full_cell_weights(ex, x, u, grad, hess, h, cutoff):
    """Cell averages of ``chi`` and ``chi e^{4u}`` times ``h^4`` (2-point Gauss per axis,
    quadratic model of ``u``); the centre values where there is no cutoff."""
    h4 = h**4
    e4u = np.exp(4.0 * u)
    if not cutoff:
        return np.full(x.shape[0], h4), h4 * e4u
    d = h * _GAUSS2  # (16, 4)
    pts = (x[:, None, :] + d[None, :, :]).reshape(-1, 4)
    chi = ex.weight(pts, 0).reshape(x.shape[0], -1)
    du = grad @ d.T + 0.5 * np.einsum("ki,nij,kj->nk", d, hess, d)
    return h4 * chi.mean(axis=1), h4 * e4u * (chi * np.exp(4.0 * du)).mean(axis=1)


def _sweep(field, grid, bins, ex, workers, blur):
    t = bins.levels
    K = t.size
    dt = bins.dt
    h = grid.h
    centers = np.ascontiguousarray(ex.centers, dtype=float).reshape(-1, 4)
    radii = np.ascontiguousarray(ex.radii, dtype=float).reshape(-1, 4)
    m = ex.refine
    hs = h / m
    idx = np.stack(np.meshgrid(*[np.arange(m)] * 4, indexing="ij"), axis=-1).reshape(-1, 4)
    offsets = ((idx + 0.5) / m - 0.5) * h
    # a cell's level set points and superlevel centroids stay this close to its centre
    reach = (1.0 + 0.5 * blur[0] * blur[1]) * h
    reach_s = reach / m
    # coarse cells own the volume beyond the middle of the hand-over shell
    split_pad = 0.5 * (ex.radii[:, 2] + ex.radii[:, 3]).min() - ex.radii[:, 1].min() if len(ex.centers) else 0.0

    def run(x, hc, mode, vmask, out):
        if x.shape[0] > CHUNK:
            return sum(run(x[i:i + CHUNK], hc, mode, vmask[i:i + CHUNK], out) for i in range(0, x.shape[0], CHUNK))
        u0, grad, hess = field.evaluate(x)
        e4u = np.exp(4.0 * u0)
        full_b, full_w = _full_cell_weights(ex, x, u0, grad, hess, hc, mode >= 0)
        full_b *= vmask
        full_w *= vmask
        # the linear cell model keeps the cell mean of the local quadratic
        u, _ = _cell_model(u0, grad, hess, hc, blur)
        with np.errstate(divide="ignore", invalid="ignore"):
            g, nvec, phi = surface_integrands(u, grad, hess)
            shift = (u - u0) / g
            kappa = normal_second_derivative_from(grad, hess) / g
        crit = ~(g > 1e-8 / hc)
        g = np.where(crit, 0.0, g)
        nvec = np.where(crit[:, None], 0.0, nvec)
        phi = np.where(crit[:, None], 0.0, phi)
        modes = np.full(x.shape[0], mode, dtype=np.int64)
        shift = np.where(crit, 0.0, shift)
        kappa = np.where(crit, 0.0, kappa)
        _accumulate(x, u, g, np.ascontiguousarray(nvec), np.ascontiguousarray(phi), e4u, vmask, full_b, full_w,
                    modes, shift, kappa,
                    centers, radii, hc, float(t[0]), dt, K, *out, int(blur[0]), float(blur[1]) * hc)
        return int(np.count_nonzero(crit & (full_b > 0)))

    def slab(i):
        out = (np.zeros((6, K)), np.zeros(K), np.zeros(K), np.zeros(K), np.zeros(K))
        counts = np.zeros(3, dtype=np.int64)
        pts = _slab_points(grid, i)
        if pts.size == 0:
            return (*out, counts)
        counts[0] = pts.shape[0]
        if not len(centers):
            counts[2] += run(pts, h, -1, np.ones(pts.shape[0]), out)
            return (*out, counts)
        # surfaces hand over smoothly (psi); volumes split sharply by parent cell
        fine = ex.within(pts, 3, reach)
        coarse = ~ex.within(pts, 2, -reach)
        split = ex.within(pts, 1, split_pad)
        counts[1] = int(np.count_nonzero(fine))
        plain = coarse & ~fine
        if np.any(plain):
            counts[2] += run(pts[plain], h, -1, np.ones(int(np.count_nonzero(plain))), out)
        blended = coarse & fine
        if np.any(blended):
            counts[2] += run(pts[blended], h, 1, (~split[blended]).astype(float), out)
        if counts[1]:
            # cells around cone points are split into m^4 sub-cells
            parents = np.flatnonzero(fine)
            step = max(1, CHUNK // offsets.shape[0])
            for j in range(0, parents.size, step):
                par = parents[j:j + step]
                sub = (pts[par][:, None, :] + offsets[None, :, :]).reshape(-1, 4)
                vm = np.repeat(split[par], offsets.shape[0]).astype(float)
                keep = ex.within(sub, 3, reach_s) & ~ex.within(sub, 0, -reach_s)
                for d in (np.linalg.norm(sub - p, axis=1) for p in centers):
                    keep &= d > 0.05 * hs
                if np.any(keep):
                    counts[2] += run(sub[keep], hs, 2, vm[keep], out)
        return (*out, counts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(slab, range(grid.resolution)))
    else:
        parts = [slab(i) for i in range(grid.resolution)]
    # fixed-order tree reduction: results do not depend on scheduling
    surf, vol, aint, fv, fa, counts = (_pairwise_sum([p[j] for p in parts]) for j in range(6))
    vol = vol + np.cumsum(fv[::-1])[::-1]
    aint = aint + np.cumsum(fa[::-1])[::-1]
    return surf, vol, aint, counts


def grid_table(field: ScalarField4D, grid: GridSpec, bins: Bins | None = None,
               exclusion: tuple[float, float] = (1.5, 3.0), max_excluded_fraction: float = 0.05,
               workers: int = 1, blur: tuple[int, float] = (2, 0.5)) -> LevelCurveTable:
    ex = _exclusion(field, grid, exclusion)
    if bins is None:
        bins = default_bins(field, grid, exclusion=exclusion, blur=blur)
    surf, vol, aint, counts = _sweep(field, grid, bins, ex, workers, blur)
    diag_frac = counts[1] / max(counts[0], 1)
    if diag_frac > max_excluded_fraction:
        raise SingularFractionError(
            f"{diag_frac:.3f} of the cells are cut out around singular points (limit {max_excluded_fraction})")
    t = bins.levels
    S = surf / S3_AREA
    local_B = np.zeros_like(t)
    local_A = np.zeros_like(t)
    for ball in ex.balls:
        if np.max(t) > ball.t_limit:
            raise LocalGraphError("levels rise above the radial samples around a cone point")
        s_loc, b_loc, a_loc = ball.contributions(field, t)
        S = S + s_loc
        local_B = local_B + b_loc
        local_A = local_A + a_loc
    if np.any(S[0] <= 0):
        bad = t[S[0] <= 0]
        raise EmptyBinsError(f"empty level sets at t in [{bad.min():.4g}, {bad.max():.4g}]")
    # t_min lies above u on the outer shell, so no superlevel set reaches past the domain
    B = vol / S3_AREA + local_B
    A = aint / S3_AREA + local_A
    z = -np.cbrt(S[2])
    Aprime = -np.exp(4.0 * t) * S[1]
    diag = GridDiagnostics(cells=int(counts[0]), excluded_cells=int(counts[1]), critical_cells=int(counts[2]),
                           h=grid.h, local_B=local_B, local_A=local_A)
    meta = {
        "path": "grid",
        "radius": grid.radius,
        "resolution": grid.resolution,
        "h": grid.h,
        "blur": list(blur),
        "dt": bins.dt,
        "t_min": bins.t_min,
        "t_max": bins.t_max,
        "D_plus_inf": field.d_plus_infinity,
        "total_volume": field.total_volume,
        "diagnostics": diag,
        "field": field.describe(),
    }
    return LevelCurveTable.assemble(t, A, B, z, S[3], S[4], S[5], S[0], Aprime, meta=meta)


# -- analytic path ----------------------------------------------------------------


def _radial_columns(field: ScalarField4D, t):
    t = np.asarray(t, dtype=float)
    r = np.asarray(field.level_radius(t), dtype=float)
    x = np.zeros((t.size, 4))
    x[:, 0] = r
    u, grad, hess = field.evaluate(x)
    g, _, phi = surface_integrands(u, grad, hess)
    r3 = r**3
    cols = {
        "L": r3,
        "Aprime": -np.exp(4.0 * t) * r3 * phi[:, 1],
        "z": -np.cbrt(r3 * phi[:, 2]),
        "D": r3 * phi[:, 3],
        "F1": r3 * phi[:, 4],
        "F2": r3 * phi[:, 5],
        "A": np.asarray(field.enclosed_weight(t), dtype=float),
        "B": r**4 / 4.0,
    }
    cols["M"] = mass(cols["D"], cols["z"], np.exp(4.0 * t) * cols["B"])
    return cols


def _stencil(f, t, delta):
    c = {k: f(t + k * delta) for k in (-2, -1, 1, 2)}
    return {name: (c[-2][name] - 8.0 * c[-1][name] + 8.0 * c[1][name] - c[2][name]) / (12.0 * delta)
            for name in ("A", "B", "z", "M")}


def analytic_table(field: ScalarField4D, levels=None, count: int = DEFAULT_LEVELS) -> LevelCurveTable:
    """Exact table for a centred radial field (sphere, football, shifted or rescaled copies)."""
    if not field.is_centered_radial:
        raise ValueError("the analytic path needs a centred radial field")
    if levels is None:
        lo = float(field.value(np.array([[math.e**4, 0.0, 0.0, 0.0]]))[0])
        hi = float(field.value(np.array([[math.e**-4, 0.0, 0.0, 0.0]]))[0])
        levels = np.linspace(lo, hi, count)
    t = np.asarray(levels, dtype=float)
    cols = _radial_columns(field, t)
    d = _stencil(lambda s: _radial_columns(field, s), t, STENCIL_STEP)
    meta = {"path": "analytic", "D_plus_inf": field.d_plus_infinity, "total_volume": field.total_volume,
            "field": field.describe()}
    return LevelCurveTable.assemble(
        t, cols["A"], cols["B"], cols["z"], cols["D"], cols["F1"], cols["F2"], cols["L"], cols["Aprime"],
        derivs={"dA": d["A"], "dB": d["B"], "dz": d["z"], "dM": d["M"]}, meta=meta)


def coarea_table(field: ScalarField4D, grid: GridSpec | None = None, bins: Bins | None = None, *,
                 path: str = "auto", levels=None, **grid_options) -> LevelCurveTable:
    """Level-curve table of ``field`` by the analytic or the grid path.

    ``path="auto"`` uses the analytic path for centred radial fields when
    no grid is given, and the grid path otherwise.
    """
    if path == "auto":
        path = "analytic" if (grid is None and field.is_centered_radial) else "grid"
    if path == "analytic":
        if levels is None and bins is not None:
            levels = bins.levels
        return analytic_table(field, levels)
    if path != "grid":
        raise ValueError(f"unknown path {path!r}")
    return grid_table(field, grid or GridSpec(), bins, **grid_options)


def core_mask(table: LevelCurveTable, fraction: float = 0.9) -> np.ndarray:
    """Rows whose superlevel sets carry between ``(1-f)/2`` and ``(1+f)/2`` of the total volume."""
    total = table.meta.get("total_volume") or float(np.max(table.A))
    lo = 0.5 * (1.0 - fraction) * total
    hi = 0.5 * (1.0 + fraction) * total
    return (table.A >= lo) & (table.A <= hi)


def cross_validate(field: ScalarField4D, grid: GridSpec, bins: Bins | None = None, fraction: float = 0.9,
                   **grid_options) -> dict:
    """Max deviation of each column between the grid and analytic paths on core bins."""
    gt = grid_table(field, grid, bins, **grid_options)
    at = analytic_table(field, gt.t)
    mask = core_mask(at, fraction)
    out = {}
    for name in ("A", "B", "C", "z", "D", "M", "F1", "F2", "L"):
        a, b = getattr(at, name)[mask], getattr(gt, name)[mask]
        out[name] = float(np.max(np.abs(a - b))) if mask.any() else float("nan")
    return out
