"""Quantitative isoperimetry for star-shaped sets in ``R^4``.

A set ``E = {r theta : 0 <= r <= rho(theta)}`` is described by its radial
function on the unit 3-sphere. Volume and perimeter use a product
quadrature on ``S^3``. The Fraenkel asymmetry compares ``E`` with the
equal-volume ball ``B_r(x)``; as long as ``|x| < r`` that ball is also
star-shaped about the origin, so along every ray the symmetric difference
is the segment between the two radii and

    |E triangle B_r(x)| = (1/4) int_{S^3} |rho_E^4 - rho_B^4| dtheta.

That integral is estimated with scrambled Sobol directions, which keeps
the estimate smooth in ``x`` for the simplex search.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .constants import OMEGA1, S3_AREA
from .sphere3 import s3_quadrature

DEFAULT_QUADRATURE = (12, 24)
DEFAULT_SAMPLES_LOG2 = 20  # 1_048_576 directions
FD_STEP = 1e-6


class QuadratureError(RuntimeError):
    """Volume or perimeter changed under quadrature refinement beyond tolerance."""


class SearchBoundaryError(RuntimeError):
    """The best ball centre reached the edge of the search region."""


class NotStarShapedError(ValueError):
    """A level set is not a radial graph over the chosen centre."""


def _tangential_fd(radius, dirs):
    """Tangential gradient of ``rho(x/|x|)`` by central differences."""
    out = np.zeros_like(dirs)
    for i in range(4):
        e = np.zeros(4)
        e[i] = FD_STEP
        out[:, i] = (radius(dirs + e) - radius(dirs - e)) / (2.0 * FD_STEP)
    return out - np.einsum("ni,ni->n", out, dirs)[:, None] * dirs


def _unit(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x / np.linalg.norm(x, axis=1)[:, None]


@dataclass(frozen=True, eq=False)
class StarShapedSet:
    """Star-shaped set about the origin given by its radial function.

    Parameters
    ----------
    radius
        Maps directions of shape ``(n, 4)`` to radii ``(n,)``. Inputs need
        not be normalized; the function is read as 0-homogeneous.
    gradient
        Tangential gradient of ``rho`` on ``S^3``; estimated by finite
        differences when omitted.
    quadrature
        ``(n_s, n_phi)`` of the Hopf product rule, ``n_s * n_phi**2`` nodes.
    """

    radius: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    quadrature: tuple[int, int] = DEFAULT_QUADRATURE
    label: str = ""

    def __post_init__(self):
        n_s, n_phi = self.quadrature
        if n_s * n_phi * n_phi < 1000:
            raise ValueError("use at least 1000 quadrature nodes on S^3")
        if np.any(self.samples[1] <= 0.0):
            raise ValueError("radial function must be positive")

    def rho(self, dirs) -> np.ndarray:
        return np.asarray(self.radius(_unit(dirs)), dtype=float)

    def tangential_gradient(self, dirs) -> np.ndarray:
        dirs = _unit(dirs)
        if self.gradient is not None:
            return np.asarray(self.gradient(dirs), dtype=float)
        return _tangential_fd(lambda d: self.radius(_unit(d)), dirs)

    @cached_property
    def samples(self):
        """Quadrature nodes, weights, ``rho`` and ``|grad rho|`` on them."""
        q = s3_quadrature(*self.quadrature)
        rho = self.rho(q.points)
        grad = self.tangential_gradient(q.points)
        return q.points, rho, np.linalg.norm(grad, axis=1), q.weights

    def refined(self, factor: int = 2) -> "StarShapedSet":
        n_s, n_phi = self.quadrature
        return StarShapedSet(self.radius, self.gradient, (factor * n_s, factor * n_phi), self.label)

    def scaled(self, k: float) -> "StarShapedSet":
        """``k E``."""
        grad = None if self.gradient is None else (lambda d: k * self.gradient(d))
        return StarShapedSet(lambda d: k * self.radius(d), grad, self.quadrature, f"{self.label}*{k:g}")

    def barycenter(self) -> np.ndarray:
        """``(1/|E|) int_E y dy = (1/|E|) int theta rho^5 / 5``."""
        pts, rho, _, w = self.samples
        return (w * rho**5 / 5.0) @ pts / volume(self, check=False)


def ball(r: float = 1.0, center=(0.0, 0.0, 0.0, 0.0), quadrature=DEFAULT_QUADRATURE) -> StarShapedSet:
    """Ball ``B_r(c)`` with ``|c| < r`` seen from the origin."""
    c = np.asarray(center, dtype=float).reshape(4)
    if np.linalg.norm(c) >= r:
        raise ValueError("the origin must lie inside the ball")

    def radius(d):
        p = d @ c
        return p + np.sqrt(p * p - c @ c + r * r)

    def gradient(d):
        p = d @ c
        s = np.sqrt(p * p - c @ c + r * r)
        dp = c[None, :] - p[:, None] * d  # tangential gradient of theta.c
        return (1.0 + p / s)[:, None] * dp

    return StarShapedSet(radius, gradient, quadrature, f"ball(r={r:g})")


def ellipsoid(axes, quadrature=DEFAULT_QUADRATURE) -> StarShapedSet:
    """Centred ellipsoid with semi-axes ``axes``."""
    a2 = np.asarray(axes, dtype=float).reshape(4) ** -2

    def radius(d):
        return 1.0 / np.sqrt(d * d @ a2)

    def gradient(d):
        q = d * d @ a2
        g = -(d * a2) / q[:, None] ** 1.5
        return g - np.einsum("ni,ni->n", g, d)[:, None] * d

    return StarShapedSet(radius, gradient, quadrature, "ellipsoid(" + ",".join(f"{a:g}" for a in axes) + ")")


def random_star_set(rng: np.random.Generator, amplitude: float = 0.15,
                    quadrature=DEFAULT_QUADRATURE) -> StarShapedSet:
    """``rho = exp(theta^T S theta + c (v.theta)^3)`` with random traceless ``S``, unit ``v`` and ``|c| <= amplitude``."""
    S = rng.normal(size=(4, 4))
    S = 0.5 * (S + S.T)
    S -= np.trace(S) / 4.0 * np.eye(4)
    S *= amplitude / np.linalg.norm(S, 2)
    v = rng.normal(size=4)
    v /= np.linalg.norm(v)
    c = amplitude * rng.uniform(-1.0, 1.0)

    def radius(d):
        p = d @ v
        return np.exp(np.einsum("ni,ij,nj->n", d, S, d) + c * p**3)

    def gradient(d):
        p = d @ v
        g = (2.0 * d @ S + 3.0 * c * (p * p)[:, None] * v) * radius(d)[:, None]
        return g - np.einsum("ni,ni->n", g, d)[:, None] * d

    return StarShapedSet(radius, gradient, quadrature, "random")


def _checked(value_of, E: StarShapedSet, check: bool, tol: float) -> float:
    v = value_of(E)
    if check:
        v2 = value_of(E.refined())
        if abs(v2 - v) > tol * abs(v2):
            raise QuadratureError(f"quadrature not converged: {v} vs {v2} after refinement")
    return v


def volume(E: StarShapedSet, check: bool = True, tol: float = 1e-6) -> float:
    """``|E| = (1/4) int_{S^3} rho^4``."""

    def f(S):
        _, rho, _, w = S.samples
        return float(w @ rho**4) / 4.0

    return _checked(f, E, check, tol)


def perimeter(E: StarShapedSet, check: bool = True, tol: float = 1e-6) -> float:
    """``|dE| = int_{S^3} rho^3 sqrt(1 + |grad rho|^2 / rho^2)``."""

    def f(S):
        _, rho, g, w = S.samples
        return float(w @ (rho**3 * np.sqrt(1.0 + (g / rho) ** 2)))

    return _checked(f, E, check, tol)


def equivalent_radius(vol: float) -> float:
    return (vol / OMEGA1) ** 0.25


def deficit(E: StarShapedSet) -> float:
    """``(|dE| - |dB_r|) / |dB_r|`` for the equal-volume ball."""
    r = equivalent_radius(volume(E))
    return perimeter(E) / (S3_AREA * r**3) - 1.0


def sobol_directions(log2_n: int = DEFAULT_SAMPLES_LOG2, seed: int = 0) -> np.ndarray:
    """``2**log2_n`` scrambled Sobol points pushed to ``S^3`` by the equal-area Hopf map."""
    u = qmc.Sobol(d=3, scramble=True, seed=seed).random_base2(log2_n)
    s = u[:, 0]
    p1, p2 = 2.0 * np.pi * u[:, 1], 2.0 * np.pi * u[:, 2]
    c, sn = np.sqrt(1.0 - s), np.sqrt(s)
    return np.stack([c * np.cos(p1), c * np.sin(p1), sn * np.cos(p2), sn * np.sin(p2)], axis=1)


@dataclass(frozen=True)
class AsymmetryReport:
    alpha: float
    deficit: float
    ratio: float  # alpha^2 / deficit
    center: tuple[float, float, float, float]
    r: float
    volume: float
    perimeter: float
    samples: int
    seed: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def fraenkel_asymmetry(E: StarShapedSet, init=None, tol: float = 1e-7, log2_samples: int = DEFAULT_SAMPLES_LOG2,
                       seed: int = 0, max_offset: float = 0.5, restarts: int = 1) -> AsymmetryReport:
    """Fraenkel asymmetry ``min_x |E triangle B_r(x)| / |B_r|`` with ``|B_r| = |E|``.

    The centre search is a Nelder-Mead simplex started at the volume
    barycenter and restarted ``restarts`` times from its own result.

    Raises
    ------
    SearchBoundaryError
        If the best centre lies at distance ``>= max_offset * r`` from the
        origin, where the ball may stop being star-shaped about it.
    """
    dirs = sobol_directions(log2_samples, seed)
    rho4 = E.rho(dirs) ** 4
    vol_s = OMEGA1 * float(np.mean(rho4))  # sample volume keeps alpha(ball) exact at its centre
    r = equivalent_radius(vol_s)
    limit = max_offset * r

    def objective(x):
        n = math.sqrt(float(x @ x))
        pen = 0.0
        if n > 0.95 * r:
            pen, x = n - 0.95 * r, x * (0.95 * r / n)
        p = dirs @ x
        rb = p + np.sqrt(p * p - float(x @ x) + r * r)
        return float(np.mean(np.abs(rho4 - rb**4))) / r**4 + pen

    x0 = E.barycenter() if init is None else np.asarray(init, dtype=float).reshape(4)
    step = 0.05 * r
    best = None
    for _ in range(restarts + 1):
        simplex = np.vstack([x0, x0 + step * np.eye(4)])
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": tol * r, "fatol": tol, "maxfev": 4000})
        if best is None or res.fun <= best.fun:
            best = res
        x0, step = best.x, 0.01 * r
    x = best.x
    if np.linalg.norm(x) >= limit:
        raise SearchBoundaryError(f"best centre {x.tolist()} left the search ball of radius {limit:g}")
    vol, per = volume(E), perimeter(E)
    req = equivalent_radius(vol)
    dfc = per / (S3_AREA * req**3) - 1.0
    alpha = float(best.fun)
    return AsymmetryReport(alpha=alpha, deficit=dfc, ratio=alpha * alpha / dfc if dfc > 0 else math.inf,
                           center=tuple(float(c) for c in x), r=req, volume=vol, perimeter=per,
                           samples=dirs.shape[0], seed=seed)


@dataclass(frozen=True)
class ShapeFunctional:
    volume_alpha: float  # |S|^3 alpha^2
    gap: float  # |L|^4 / |S^3|^4 - (4 B)^3 with B = |S| / |S^3|
    alpha: float
    volume: float
    perimeter: float

    def to_dict(self) -> dict:
        return asdict(self)


def deficit_shape_functional(S: StarShapedSet, report: AsymmetryReport | None = None, **kwargs) -> ShapeFunctional:
    """``|S|^3 alpha(S)^2`` and the isoperimetric gap of the boundary ``L = dS``.

    Both vanish exactly on balls; ``kwargs`` go to :func:`fraenkel_asymmetry`.
    """
    rep = report if report is not None else fraenkel_asymmetry(S, **kwargs)
    vol, per = rep.volume, rep.perimeter
    gap = (per / S3_AREA) ** 4 - (4.0 * vol / S3_AREA) ** 3
    return ShapeFunctional(volume_alpha=vol**3 * rep.alpha**2, gap=gap, alpha=rep.alpha, volume=vol, perimeter=per)


def levelset_star(field, t: float, center=None, r_max: float = 50.0, quadrature=DEFAULT_QUADRATURE,
                  chunk: int = 1 << 16) -> StarShapedSet:
    """Superlevel set ``{u >= t}`` of ``field`` as a star-shaped set about ``center``.

    The radius on each ray is the unique crossing of ``t``; the tangential
    gradient follows by implicit differentiation,
    ``grad rho = -rho (grad u)_T / u_r``.

    Raises
    ------
    NotStarShapedError
        If ``u`` does not cross ``t`` exactly once, transversally, on the
        quadrature rays.
    """
    c = np.zeros(4) if center is None else np.asarray(center, dtype=float).reshape(4)
    r_min = 1e-9

    def solve(dirs):
        out = np.empty(dirs.shape[0])
        for a in range(0, dirs.shape[0], chunk):
            d = dirs[a:a + chunk]
            lo = np.full(d.shape[0], r_min)
            hi = np.full(d.shape[0], 1.0)
            if np.any(field.value(c + lo[:, None] * d) < t):
                raise NotStarShapedError("level does not enclose the centre")
            for _ in range(64):
                above = field.value(c + hi[:, None] * d) >= t
                if not above.any():
                    break
                lo = np.where(above, hi, lo)
                hi = np.where(above, 2.0 * hi, hi)
                if np.any(hi > r_max):
                    raise NotStarShapedError("level set reaches beyond r_max")
            for _ in range(12):
                mid = 0.5 * (lo + hi)
                above = field.value(c + mid[:, None] * d) >= t
                lo, hi = np.where(above, mid, lo), np.where(above, hi, mid)
            r = 0.5 * (lo + hi)
            for _ in range(4):
                u, g, _ = field.evaluate(c + r[:, None] * d)
                ur = np.einsum("ni,ni->n", g, d)
                r = np.clip(r - (u - t) / ur, lo, hi)
            out[a:a + chunk] = r
        return out

    def gradient(dirs):
        r = solve(dirs)
        _, g, _ = field.evaluate(c + r[:, None] * dirs)
        ur = np.einsum("ni,ni->n", g, dirs)
        return -r[:, None] * (g - ur[:, None] * dirs) / ur[:, None]

    q = s3_quadrature(*quadrature)
    r0 = solve(q.points)
    probe = np.linspace(0.05, 1.5, 30)
    x = c + (probe[None, :, None] * r0[:, None, None]) * q.points[:, None, :]
    _, g, _ = field.evaluate(x.reshape(-1, 4))
    ur = np.einsum("nki,ni->nk", g.reshape(q.size, probe.size, 4), q.points)
    if np.any(ur >= 0.0):
        raise NotStarShapedError("u is not radially decreasing about the centre")
    return StarShapedSet(solve, gradient, quadrature, f"levelset(t={t:g})")
