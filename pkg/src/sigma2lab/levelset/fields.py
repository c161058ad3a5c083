"""Conformal factors on R^4 behind a common evaluation interface.

A field returns ``u``, ``grad u`` and ``grad^2 u`` at points of ``R^4``
away from its declared singular (cone) points, and declares a tail model
``u ~ c - k ln|x|`` used to correct volume integrals outside a truncated
domain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..radial import RadialSolution, d_plus_infinity, volume as radial_volume

EYE4 = np.eye(4)


@dataclass(frozen=True)
class SingularPoint:
    position: tuple[float, float, float, float]
    beta: float

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    @property
    def top_contribution(self) -> float:
        """Contribution ``3/2 beta^2 + beta^3/2`` of this point to ``D(+inf)``."""
        b = self.beta
        return 1.5 * b * b + 0.5 * b**3


@dataclass(frozen=True)
class TailModel:
    """``u(x) ~ c - k ln|x|`` for ``|x| >= radius`` (``k > 1``)."""

    c: float
    k: float
    radius: float

    def __post_init__(self):
        if self.k <= 1.0:
            raise ValueError("tail exponent must exceed 1 for a finite-volume metric")

    def bound(self, r):
        return self.c - self.k * np.log(r)

    def level_radius(self, t):
        return np.exp((self.c - np.asarray(t, dtype=float)) / self.k)

    def volume_beyond(self, t, R: float):
        """``|{u >= t} \\ B_R| / |S^3|`` under the tail model."""
        rt = self.level_radius(t)
        return np.where(rt > R, (rt**4 - R**4) / 4.0, 0.0)

    def weight_beyond(self, t, R: float):
        """``(1/|S^3|) int_{{u >= t} \\ B_R} e^{4u}`` under the tail model."""
        rt = np.maximum(self.level_radius(t), R)
        p = 4.0 - 4.0 * self.k
        return math.exp(4.0 * self.c) * (R**p - rt**p) / (-p)


class ScalarField4D:
    """Base class: subclasses implement :meth:`evaluate`.

    Implementations must be reentrant and free of side effects so that the
    grid sweep may call them from several threads.
    """

    singular_points: tuple[SingularPoint, ...] = ()
    tail: TailModel | None = None
    #: limit of ``D(t)`` as ``t -> +inf`` (0 for a smooth maximum)
    d_plus_infinity: float = 0.0
    #: ``(1/|S^3|) int e^{4u}`` when known in closed form
    total_volume: float | None = None
    #: whether the field is declared to solve ``sigma_2 = 3/2 e^{4u}``
    solves_equation: bool = False

    def evaluate(self, x):
        """Return ``(u, grad, hess)`` with shapes ``(n,)``, ``(n, 4)``, ``(n, 4, 4)``."""
        raise NotImplementedError

    def value(self, x):
        return self.evaluate(x)[0]

    # analytic level-set map, available for centred radial fields
    @property
    def is_centered_radial(self) -> bool:
        return False

    def level_radius(self, t):
        raise NotImplementedError("field has no closed-form level map")

    def enclosed_weight(self, t):
        raise NotImplementedError("field has no closed-form level map")

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


def _radial_derivatives(x, ur, urr):
    r = np.linalg.norm(x, axis=1)
    xh = x / r[:, None]
    grad = ur[:, None] * xh
    P = np.einsum("ni,nj->nij", xh, xh)
    hess = urr[:, None, None] * P + (ur / r)[:, None, None] * (EYE4 - P)
    return grad, hess


def _tail_constant(sol: RadialSolution) -> float:
    # w + a tau converges exponentially as tau -> +inf
    tau, w, _, _ = sol.state_at_xi(-40.0)
    return float(w + sol.a * tau)


class RadialField(ScalarField4D):
    """``u(x) = w(ln|x|) - ln|x|`` for a sphere or football profile."""

    solves_equation = True

    def __init__(self, sol: RadialSolution):
        self.sol = sol
        self.singular_points = () if sol.beta == 0 else (SingularPoint((0.0, 0.0, 0.0, 0.0), sol.beta),)
        self.tail = TailModel(c=_tail_constant(sol), k=1.0 + sol.a, radius=1.0)
        self.d_plus_infinity = d_plus_infinity(sol)
        self.total_volume = radial_volume(sol)

    def evaluate(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=1)
        u, ur, urr = self.sol.at_radius(r)
        grad, hess = _radial_derivatives(x, ur, urr)
        return u, grad, hess

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.sol.at_radius(np.linalg.norm(x, axis=1))[0]

    @property
    def is_centered_radial(self) -> bool:
        return True

    def level_radius(self, t):
        return np.exp(self.sol.tau_of_xi(self.sol.level_xi(t)))

    def enclosed_weight(self, t):
        xi = self.sol.level_xi(t)
        return self.sol.enclosed_weight(self.sol.a * np.tanh(xi))

    def describe(self) -> dict:
        return {"kind": "radial", "beta": self.sol.beta}


class MobiusField(ScalarField4D):
    """Image of a radial profile under a special conformal map, then translated.

    ``v(x) = w(s) - ln|y| - (1/2) ln P`` with ``y = x - shift``,
    ``P = 1 + 2 b.y + |b|^2 |y|^2`` and ``s = ln|y| - (1/2) ln P``. It
    solves the same equation with cone points at ``shift`` and
    ``shift - b/|b|^2``, both with parameter ``beta``, and is smooth at
    infinity.
    """

    solves_equation = True

    def __init__(self, sol: RadialSolution, b, shift=None):
        self.sol = sol
        self.b = np.asarray(b, dtype=float).reshape(4)
        nb2 = float(self.b @ self.b)
        if nb2 == 0.0:
            raise ValueError("b = 0 is the radial field itself")
        self.shift = np.zeros(4) if shift is None else np.asarray(shift, dtype=float).reshape(4)
        far = self.shift - self.b / nb2
        pts = (self.shift, far)
        self.singular_points = () if sol.beta == 0 else tuple(
            SingularPoint(tuple(float(c) for c in p), sol.beta) for p in pts)
        nb = math.sqrt(nb2)
        tau, w, _, _ = sol.state_at_xi(sol.xi_of_tau(-math.log(nb)))
        self.tail = TailModel(c=float(w) - math.log(nb), k=2.0, radius=1.0 + 2.0 * float(np.linalg.norm(far)))
        self.d_plus_infinity = 2.0 * d_plus_infinity(sol)
        self.total_volume = radial_volume(sol)

    def evaluate(self, x):
        y = np.atleast_2d(np.asarray(x, dtype=float)) - self.shift
        b = self.b
        nb2 = float(b @ b)
        r2 = np.einsum("ni,ni->n", y, y)
        P = 1.0 + 2.0 * y @ b + nb2 * r2
        ell = 0.5 * np.log(r2)
        p = np.log(P)
        s = ell - 0.5 * p
        _, w, v, w2 = self.sol.state_at_xi(self.sol.xi_of_tau(s))
        u = w - ell - 0.5 * p
        dl = y / r2[:, None]
        dP = 2.0 * b[None, :] + 2.0 * nb2 * y
        dp = dP / P[:, None]
        ds = dl - 0.5 * dp
        grad = v[:, None] * ds - dl - 0.5 * dp
        Hl = EYE4[None] / r2[:, None, None] - 2.0 * np.einsum("ni,nj->nij", y, y) / (r2 * r2)[:, None, None]
        Hp = (2.0 * nb2 / P)[:, None, None] * EYE4[None] - np.einsum("ni,nj->nij", dp, dp)
        Hs = Hl - 0.5 * Hp
        hess = w2[:, None, None] * np.einsum("ni,nj->nij", ds, ds) + v[:, None, None] * Hs - Hl - 0.5 * Hp
        return u, grad, hess

    def describe(self) -> dict:
        return {"kind": "mobius", "beta": self.sol.beta, "b": self.b.tolist(), "shift": self.shift.tolist()}


class EllipsoidalField(ScalarField4D):
    """``u = ln 2 - ln(1 + sum lambda_i x_i^2)``: smooth, not a solution unless all ``lambda_i = 1``."""

    def __init__(self, lambdas):
        self.lambdas = np.asarray(lambdas, dtype=float).reshape(4)
        if np.any(self.lambdas <= 0):
            raise ValueError("lambdas must be positive")
        self.solves_equation = bool(np.all(self.lambdas == 1.0))
        self.tail = TailModel(c=math.log(2.0) - math.log(float(self.lambdas.min())), k=2.0, radius=1.0)
        if self.solves_equation:
            self.total_volume = 4.0 / 3.0

    def evaluate(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lx = x * self.lambdas
        Q = 1.0 + np.einsum("ni,ni->n", x, lx)
        u = math.log(2.0) - np.log(Q)
        grad = -2.0 * lx / Q[:, None]
        hess = -2.0 * np.diag(self.lambdas)[None] / Q[:, None, None] + 4.0 * np.einsum(
            "ni,nj->nij", lx, lx) / (Q * Q)[:, None, None]
        return u, grad, hess

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return math.log(2.0) - np.log1p(np.einsum("ni,ni->n", x, x * self.lambdas))

    def describe(self) -> dict:
        return {"kind": "ellipsoidal", "lambdas": self.lambdas.tolist()}


class _Wrapper(ScalarField4D):
    def __init__(self, base: ScalarField4D):
        self.base = base
        self.singular_points = base.singular_points
        self.tail = base.tail
        self.d_plus_infinity = base.d_plus_infinity
        self.total_volume = base.total_volume
        self.solves_equation = base.solves_equation


class ShiftedField(_Wrapper):
    """``u + c``. Volumes of superlevel sets shift in ``t``; ``e^{4u}`` scales by ``e^{4c}``."""

    def __init__(self, base: ScalarField4D, c: float):
        super().__init__(base)
        self.c = float(c)
        if base.tail is not None:
            self.tail = TailModel(base.tail.c + self.c, base.tail.k, base.tail.radius)
        if base.total_volume is not None:
            self.total_volume = base.total_volume * math.exp(4.0 * self.c)
        # u + c solves sigma_2 = 3/2 e^{4(u+c)} only for c = 0
        self.solves_equation = base.solves_equation and self.c == 0.0

    def evaluate(self, x):
        u, g, h = self.base.evaluate(x)
        return u + self.c, g, h

    def value(self, x):
        return self.base.value(x) + self.c

    @property
    def is_centered_radial(self) -> bool:
        return self.base.is_centered_radial

    def level_radius(self, t):
        return self.base.level_radius(np.asarray(t) - self.c)

    def enclosed_weight(self, t):
        return math.exp(4.0 * self.c) * self.base.enclosed_weight(np.asarray(t) - self.c)

    def describe(self) -> dict:
        return {"kind": "shifted", "c": self.c, "base": self.base.describe()}


class RescaledField(_Wrapper):
    """``u(kx) + ln k``, the pull-back of the same metric under ``x -> kx``."""

    def __init__(self, base: ScalarField4D, k: float):
        super().__init__(base)
        if k <= 0:
            raise ValueError("scale must be positive")
        self.k = float(k)
        self.singular_points = tuple(
            SingularPoint(tuple(float(c) / self.k for c in p.position), p.beta) for p in base.singular_points)
        if base.tail is not None:
            bt = base.tail
            self.tail = TailModel(bt.c + (1.0 - bt.k) * math.log(self.k), bt.k, bt.radius / self.k)

    def evaluate(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u, g, h = self.base.evaluate(self.k * x)
        return u + math.log(self.k), self.k * g, self.k * self.k * h

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.base.value(self.k * x) + math.log(self.k)

    @property
    def is_centered_radial(self) -> bool:
        return self.base.is_centered_radial

    def level_radius(self, t):
        return self.base.level_radius(np.asarray(t) - math.log(self.k)) / self.k

    def enclosed_weight(self, t):
        return self.base.enclosed_weight(np.asarray(t) - math.log(self.k))

    def describe(self) -> dict:
        return {"kind": "rescaled", "k": self.k, "base": self.base.describe()}


class CorruptedHessianField(_Wrapper):
    """Fault injection: reports ``grad^2 u + delta I`` while ``u`` is unchanged."""

    def __init__(self, base: ScalarField4D, delta: float = 0.25):
        super().__init__(base)
        self.delta = float(delta)

    def evaluate(self, x):
        u, g, h = self.base.evaluate(x)
        return u, g, h + self.delta * EYE4

    def value(self, x):
        return self.base.value(x)

    def describe(self) -> dict:
        return {"kind": "corrupted-hessian", "delta": self.delta, "base": self.base.describe()}


class SampledGridField(ScalarField4D):
    """Values on a cell-centred lattice; derivatives by second-order differences.

    The lattice has nodes ``origin + h*i`` for ``i`` in ``[0, n)`` along each
    axis. Evaluation is only defined at interior nodes.
    """

    def __init__(self, values, origin: float, h: float, singular_points=(), tail: TailModel | None = None,
                 d_plus_infinity: float = 0.0, total_volume: float | None = None, solves_equation: bool = False):
        self.values = np.ascontiguousarray(values, dtype=float)
        if self.values.ndim != 4 or len(set(self.values.shape)) != 1:
            raise ValueError("values must be an (n, n, n, n) array")
        self.origin = float(origin)
        self.h = float(h)
        self.singular_points = tuple(singular_points)
        self.tail = tail
        self.d_plus_infinity = float(d_plus_infinity)
        self.total_volume = total_volume
        self.solves_equation = solves_equation

    @classmethod
    def from_field(cls, field: ScalarField4D, radius: float, resolution: int, halo: int = 2) -> "SampledGridField":
        """Sample ``field`` on the coarea lattice of ``(radius, resolution)`` plus a halo."""
        h = 2.0 * radius / resolution
        n = resolution + 2 * halo
        origin = -radius + (0.5 - halo) * h
        ax = origin + h * np.arange(n)
        vals = np.empty((n,) * 4)
        X2, X3, X4 = np.meshgrid(ax, ax, ax, indexing="ij")
        rest = np.stack([X2.ravel(), X3.ravel(), X4.ravel()], axis=1)
        pts = np.empty((rest.shape[0], 4))
        pts[:, 1:] = rest
        for i, x1 in enumerate(ax):
            pts[:, 0] = x1
            with np.errstate(divide="ignore", invalid="ignore"):
                vals[i] = field.value(pts).reshape((n,) * 3)
        return cls(vals, origin, h, field.singular_points, field.tail, field.d_plus_infinity,
                   field.total_volume, field.solves_equation)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def _indices(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        f = (x - self.origin) / self.h
        idx = np.rint(f).astype(np.int64)
        if np.any(np.abs(f - idx) > 1e-6):
            raise ValueError("sampled-grid fields are evaluated at lattice nodes only")
        if np.any(idx < 1) or np.any(idx > self.n - 2):
            raise ValueError("node too close to the lattice boundary for central differences")
        return idx

    def evaluate(self, x):
        idx = self._indices(x)
        V = self.values
        h = self.h

        def at(off):
            j = idx + off
            return V[j[:, 0], j[:, 1], j[:, 2], j[:, 3]]

        u = at(np.zeros(4, dtype=np.int64))
        grad = np.empty((idx.shape[0], 4))
        hess = np.empty((idx.shape[0], 4, 4))
        E = np.eye(4, dtype=np.int64)
        plus = [at(E[i]) for i in range(4)]
        minus = [at(-E[i]) for i in range(4)]
        for i in range(4):
            grad[:, i] = (plus[i] - minus[i]) / (2.0 * h)
            hess[:, i, i] = (plus[i] - 2.0 * u + minus[i]) / (h * h)
            for j in range(i + 1, 4):
                m = (at(E[i] + E[j]) - at(E[i] - E[j]) - at(E[j] - E[i]) + at(-E[i] - E[j])) / (4.0 * h * h)
                hess[:, i, j] = hess[:, j, i] = m
        return u, grad, hess

    def value(self, x):
        idx = self._indices(x)
        return self.values[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]]

    def save(self, path: str | Path) -> None:
        meta = {
            "origin": self.origin,
            "h": self.h,
            "singular_points": [[list(p.position), p.beta] for p in self.singular_points],
            "tail": None if self.tail is None else [self.tail.c, self.tail.k, self.tail.radius],
            "d_plus_infinity": self.d_plus_infinity,
            "total_volume": self.total_volume,
            "solves_equation": self.solves_equation,
        }
        np.savez(path, values=self.values, meta=json.dumps(meta, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "SampledGridField":
        with np.load(path, allow_pickle=False) as data:
            values = data["values"]
            meta = json.loads(str(data["meta"]))
        sp = tuple(SingularPoint(tuple(p), b) for p, b in meta["singular_points"])
        tail = None if meta["tail"] is None else TailModel(*meta["tail"])
        return cls(values, meta["origin"], meta["h"], sp, tail, meta["d_plus_infinity"],
                   meta["total_volume"], meta["solves_equation"])

    def describe(self) -> dict:
        return {"kind": "sampled-grid", "n": self.n, "h": self.h, "origin": self.origin}


def schouten(u_grad, u_hess):
    """``A = -grad^2 u + grad u grad u^T - |grad u|^2/2 I`` (Euclidean frame)."""
    g2 = np.einsum("...i,...i->...", u_grad, u_grad)
    return -u_hess + np.einsum("...i,...j->...ij", u_grad, u_grad) - 0.5 * g2[..., None, None] * EYE4


def sigma2(mat):
    tr = np.trace(mat, axis1=-2, axis2=-1)
    return 0.5 * (tr * tr - np.einsum("...ij,...ji->...", mat, mat))


def sigma2_residual(field: ScalarField4D, x, relative: bool = True):
    """``sigma_2(A) - 3/2 e^{4u}``, optionally divided by ``3/2 e^{4u}``."""
    u, g, h = field.evaluate(x)
    target = 1.5 * np.exp(4.0 * u)
    res = sigma2(schouten(g, h)) - target
    return res / target if relative else res


def sphere_field() -> RadialField:
    from ..radial import build_sphere

    return RadialField(build_sphere())


def football_field(beta: float) -> RadialField:
    from ..radial import build_football

    return RadialField(build_football(beta))


def perturbed_football(beta: float, b, separation: float = 2.4) -> ScalarField4D:
    """Non-radial exact solution: a football moved by a special conformal map.

    The two cone points are centred on the origin and rescaled to lie
    ``separation`` apart. ``|b|`` near 1 splits the volume evenly between them.
    """
    from ..radial import build_football

    b = np.asarray(b, dtype=float).reshape(4)
    nb2 = float(b @ b)
    mob = MobiusField(build_football(beta), b, shift=b / (2.0 * nb2))
    k = 1.0 / (separation * math.sqrt(nb2))
    return RescaledField(mob, k)


def perturbed_family(n: int = 20, seed: int = 0, separation: float = 2.4) -> list[ScalarField4D]:
    """``n`` perturbed footballs with ``beta`` in ``[-0.6, -0.35]`` and ``|b|`` in ``[0.8, 1.25]``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        beta = float(rng.uniform(-0.6, -0.35))
        d = rng.normal(size=4)
        d /= np.linalg.norm(d)
        out.append(perturbed_football(beta, float(rng.uniform(0.8, 1.25)) * d, separation))
    return out
