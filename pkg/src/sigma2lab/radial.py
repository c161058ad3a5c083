"""Rotationally symmetric constant-sigma_2 metrics: the round sphere and footballs.

On the cylinder ``tau = ln|x|`` a radial conformal factor is written
``u = w(tau) - tau``. With ``v = w'`` the equation
``sigma_2(g_E^{-1} A) = (3/2) e^{4u}`` becomes

    w'' = -e^{4w} / (1 - v^2),

which has the first integral ``H = v^2/2 - v^4/4 + e^{4w}/4``. A
football with cone parameter ``beta`` at both ends has ``a = 1 + beta``,
``H = a^2/2 - a^4/4`` and ``e^{4w} = (a^2 - v^2)(b^2 - v^2)`` with
``b^2 = 2 - a^2``. Profiles are parametrised by ``v = a tanh(xi)``,
which removes the logarithmic endpoint singularity of ``tau(v)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from .constants import SIGMA2_TARGET
from .tables import LevelCurveTable

DEFAULT_SAMPLES = 2048
DEFAULT_MARGIN = 1e-8
QUAD_TOL = 1e-12


class ConeExitError(ValueError):
    """``|v| >= 1``: the profile has left the positive cone."""


class QuadratureError(RuntimeError):
    pass


def cylinder_rhs(w, v):
    """Second derivative ``w''`` of a radial solution on the cylinder."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(v) >= 1.0):
        raise ConeExitError("|v| >= 1 leaves the Gamma_2^+ cone")
    out = -np.exp(4.0 * w) / (1.0 - v * v)
    return float(out) if out.ndim == 0 else out


def first_integral(w, v):
    """``v^2/2 - v^4/4 + e^{4w}/4``, constant along radial solutions."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    return v * v / 2.0 - v**4 / 4.0 + np.exp(4.0 * w) / 4.0


def _log_sech(x):
    ax = np.abs(x)
    return -ax + math.log(2.0) - np.log1p(np.exp(-2.0 * ax))


def _one_minus_tanh(ax):
    # 1 - tanh(x) for x >= 0 without cancellation
    e = np.exp(-2.0 * ax)
    return 2.0 * e / (1.0 + e)


@dataclass(frozen=True, eq=False)
class RadialSolution:
    """Sampled radial profile with closed-form evaluators.

    Sample arrays are ordered by increasing ``tau``; the gauge puts
    ``tau = 0`` where ``v = 0``, i.e. at the maximising level of ``C``.
    """

    beta: float
    a: float
    b2: float
    H: float
    tau: np.ndarray
    w: np.ndarray
    v: np.ndarray
    xi: np.ndarray

    @property
    def b(self) -> float:
        return math.sqrt(self.b2)

    @property
    def is_sphere(self) -> bool:
        return self.a == 1.0

    # -- closed-form profile in the xi parametrisation --------------------------

    def tau_of_xi(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.is_sphere:
            return -xi
        a, b = self.a, self.b
        ax = np.abs(xi)
        th = a * np.tanh(ax)
        # atanh((a/b) tanh|xi|), with b - a tanh|xi| = (b - a) + a (1 - tanh|xi|)
        at = 0.5 * (np.log(b + th) - np.log((b - a) + a * _one_minus_tanh(ax)))
        return -0.5 * np.sign(xi) * (ax / a + at / b)

    def dtau_dxi(self, xi):
        xi = np.asarray(xi, dtype=float)
        _, lb, l1 = self._logs(xi)
        return -np.exp(l1 - lb) / self.a

    def _logs(self, xi):
        """``ln(a^2 - v^2)``, ``ln(b^2 - v^2)``, ``ln(1 - v^2)`` at ``v = a tanh(xi)``."""
        a2 = self.a * self.a
        ls = 2.0 * _log_sech(xi)
        la = math.log(a2) + ls
        sech2 = np.exp(ls)
        if self.is_sphere:
            lb = la
            l1 = ls
        else:
            lb = np.log((self.b2 - a2) + a2 * sech2)
            l1 = np.log((1.0 - a2) + a2 * sech2)
        return la, lb, l1

    def state_at_xi(self, xi):
        """Return ``(tau, w, v, w'')`` at parameter values ``xi``."""
        xi = np.asarray(xi, dtype=float)
        la, lb, l1 = self._logs(xi)
        w = 0.25 * (la + lb)
        v = self.a * np.tanh(xi)
        w2 = -np.exp(la + lb - l1)
        return self.tau_of_xi(xi), w, v, w2

    def xi_of_tau(self, tau):
        """Invert ``tau(xi)`` by safeguarded Newton iteration."""
        tau = np.asarray(tau, dtype=float)
        if self.is_sphere:
            return -tau
        # tau is asymptotically linear with slope in [-1/(a b^2), -1/(2a)]
        xi = -self.a * self.b2 * tau
        xi = np.where(np.abs(tau) > 1.0, -2.0 * self.a * tau, xi)
        for _ in range(100):
            f = self.tau_of_xi(xi) - tau
            step = f / self.dtau_dxi(xi)
            xi = xi - step
            if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(xi))):
                break
        return xi

    def level_xi(self, t):
        """Parameter ``xi`` of the level ``u = t`` (``u`` is decreasing in ``tau``)."""
        t = np.asarray(t, dtype=float)
        if self.is_sphere:
            # u = ln 2 - ln(1 + r^2)
            if np.any(t >= math.log(2.0)):
                raise ValueError("level above the maximum ln 2 of the round sphere")
            tau = 0.5 * np.log(2.0 * np.exp(-t) - 1.0)
            return -tau
        ts = self.w - self.tau
        xi = np.interp(t, ts[::-1], self.xi[::-1])
        for _ in range(100):
            tau, w, v, _ = self.state_at_xi(xi)
            f = w - tau - t
            slope = (v - 1.0) * self.dtau_dxi(xi)
            step = f / slope
            xi = xi - step
            if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(xi))):
                break
        return xi

    def at_radius(self, r):
        """Return ``(u, u_r, u_rr)`` at Euclidean radii ``r``."""
        r = np.asarray(r, dtype=float)
        tau = np.log(r)
        _, w, v, w2 = self.state_at_xi(self.xi_of_tau(tau))
        u = w - tau
        ur = (v - 1.0) / r
        urr = (w2 + 1.0 - v) / (r * r)
        return u, ur, urr

    def enclosed_weight(self, v):
        """``(1/|S^3|) int_{|x| < r} e^{4u}`` for the sphere whose profile slope is ``v``."""
        a = self.a
        v = np.asarray(v, dtype=float)
        # factored forms: f(a) - f(v) with f(v) = v - v^3/3 cancels catastrophically as v -> a
        top = (a - v) * (1.0 - (a * a + a * v + v * v) / 3.0)
        bottom = 2.0 * (a - a**3 / 3.0) - (v + a) * (1.0 - (a * a - a * v + v * v) / 3.0)
        return np.where(v >= 0.0, top, bottom)


def build_sphere(n_samples: int = DEFAULT_SAMPLES, endpoint_margin: float = DEFAULT_MARGIN) -> RadialSolution:
    """Round sphere ``u = ln(2/(1+|x|^2))``; ``w = ln 2 + tau - ln(1 + e^{2 tau})``."""
    xi_max = math.atanh(1.0 - endpoint_margin)
    xi = np.linspace(xi_max, -xi_max, n_samples)
    tau = -xi
    w = math.log(2.0) + tau - np.logaddexp(0.0, 2.0 * tau)
    v = -np.tanh(tau)
    return RadialSolution(beta=0.0, a=1.0, b2=1.0, H=0.25, tau=tau, w=w, v=v, xi=xi)


def build_football(
    beta: float,
    n_samples: int = DEFAULT_SAMPLES,
    endpoint_margin: float = DEFAULT_MARGIN,
) -> RadialSolution:
    """Football with cone parameter ``beta`` at the origin and at infinity.

    ``tau(v) = -int_0^v (1-s^2)/((a^2-s^2)(b^2-s^2)) ds`` is integrated
    adaptively in the variable ``xi`` (``v = a tanh xi``) and checked
    against its partial-fraction antiderivative.
    """
    if beta == 0:
        return build_sphere(n_samples, endpoint_margin)
    if not -1.0 < beta < 0.0:
        raise ValueError(f"football needs -1 < beta < 0, got {beta}")
    a = 1.0 + beta
    b2 = 2.0 - a * a
    H = a * a / 2.0 - a**4 / 4.0
    xi_max = math.atanh(1.0 - endpoint_margin)
    xi = np.linspace(xi_max, -xi_max, n_samples)
    sol = RadialSolution(beta=float(beta), a=a, b2=b2, H=H, tau=np.empty(0), w=np.empty(0),
                         v=np.empty(0), xi=xi)

    def integrand(s):
        x = a * math.tanh(s)
        return -(1.0 - x * x) / (a * (b2 - x * x))

    # integrate outward from xi = 0 so the gauge tau(0) = 0 holds exactly
    tau = np.empty_like(xi)
    for sign in (1.0, -1.0):
        idx = np.flatnonzero(sign * xi >= 0)
        idx = idx[np.argsort(sign * xi[idx])]
        acc, prev = 0.0, 0.0
        for i in idx:
            piece, err = integrate.quad(integrand, prev, xi[i], epsabs=QUAD_TOL, epsrel=0.0, limit=200)
            if err > 10 * QUAD_TOL:
                raise QuadratureError(f"tau quadrature did not converge on [{prev}, {xi[i]}]")
            acc += piece
            prev = xi[i]
            tau[i] = acc
    closed = sol.tau_of_xi(xi)
    if np.max(np.abs(tau - closed) / np.maximum(1.0, np.abs(closed))) > 1e-9:
        raise QuadratureError("adaptive tau(v) disagrees with its antiderivative")
    _, w, v, _ = sol.state_at_xi(xi)
    return RadialSolution(beta=float(beta), a=a, b2=b2, H=H, tau=tau, w=w, v=v, xi=xi)


def volume(sol: RadialSolution) -> float:
    """``int e^{4w} dtau``, the normalised total volume."""
    a = sol.a

    def integrand(s):
        th = math.tanh(s)
        return a * (1.0 - th * th) * (1.0 - a * a * th * th)

    half, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 2.0 * half


def capacity(sol: RadialSolution) -> float:
    """``max_t C(t) = max e^{4w}/4``."""
    i = int(np.argmax(sol.w))
    lo = sol.xi[min(i + 1, sol.xi.size - 1)]
    hi = sol.xi[max(i - 1, 0)]
    lo, hi = min(lo, hi), max(lo, hi)
    res = optimize.minimize_scalar(lambda s: -float(sol.state_at_xi(s)[1]), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    return math.exp(-4.0 * res.fun) / 4.0


def mass(sol: RadialSolution) -> float:
    """Constant value ``1/4 - H`` of the level-set mass."""
    return 0.25 - sol.H


def radial_levelsets(sol: RadialSolution) -> LevelCurveTable:
    """Exact level-curve table at the profile samples.

    Level sets are round spheres ``|x| = e^tau``: with ``q = 1 - v``,
    ``z = v - 1``, ``B = e^{4 tau}/4``, ``C = e^{4w}/4`` and
    ``D = 3/2 q^2 - q^3/2``.
    """
    tau, w, v = sol.tau, sol.w, sol.v
    _, _, _, w2 = sol.state_at_xi(sol.xi)
    q = 1.0 - v
    e4w = np.exp(4.0 * w)
    with np.errstate(over="ignore"):
        B = np.exp(4.0 * tau) / 4.0
        L = np.exp(3.0 * tau)
        dB = np.exp(4.0 * tau) / (v - 1.0)
    z = v - 1.0
    D = 1.5 * q * q - 0.5 * q**3
    A = sol.enclosed_weight(v)
    F1 = 1.5 * q * q * (1.0 + v)
    F2 = -q * w2
    Aprime = -e4w / q
    dz = w2 / (v - 1.0)
    dD = -(3.0 * q - 1.5 * q * q) * dz
    dC = e4w * v / (v - 1.0)
    dM = (2.0 / 3.0 + 4.0 / 9.0 * z) * dD + (4.0 / 9.0 * D + z**3 / 9.0) * dz - dC
    t = w - tau
    return LevelCurveTable.assemble(
        t, A, B, z, D, F1, F2, L, Aprime,
        derivs={"dA": Aprime, "dB": dB, "dz": dz, "dM": dM},
        meta={"path": "radial-exact", "beta": sol.beta, "H": sol.H, "D_plus_inf": d_plus_infinity(sol)},
    )


def d_plus_infinity(sol: RadialSolution) -> float:
    """Limit of ``D`` at the top level: ``3/2 beta^2 + beta^3/2``."""
    q0 = -sol.beta
    return 1.5 * q0 * q0 - 0.5 * q0**3


def write_profile_csv(sol: RadialSolution, path: str | Path) -> None:
    """Profile export: ``tau, w, v, t, A, B, C, z, D, M``."""
    table = radial_levelsets(sol)
    # table rows run in increasing t, i.e. decreasing tau
    rows = zip(sol.tau[::-1], sol.w[::-1], sol.v[::-1], table.t, table.A, table.B, table.C,
               table.z, table.D, table.M)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["tau", "w", "v", "t", "A", "B", "C", "z", "D", "M"])
        for row in rows:
            wr.writerow([repr(float(x)) for x in row])


# -- cross-check paths -------------------------------------------------------------


def integrate_cylinder(beta: float, tau_span: tuple[float, float] = (-8.0, 8.0), n_eval: int = 801):
    """Integrate ``w'' = -e^{4w}/(1-v^2)`` from the gauge point ``v(0) = 0``.

    Returns ``(tau, w, v)`` on a uniform grid over ``tau_span``. The
    initial value ``e^{4w(0)} = a^2 b^2`` is the only input taken from
    the first integral.
    """
    a = 1.0 + beta
    w0 = 0.25 * math.log(a * a * (2.0 - a * a))

    def rhs(_, y):
        return [y[1], cylinder_rhs(y[0], y[1])]

    out = {}
    for end in tau_span:
        grid = np.linspace(0.0, end, n_eval // 2 + 1)
        sol = integrate.solve_ivp(rhs, (0.0, end), [w0, 0.0], method="DOP853", t_eval=grid,
                                  rtol=1e-13, atol=1e-14)
        if not sol.success:
            raise RuntimeError(sol.message)
        out[end] = sol
    lo, hi = out[tau_span[0]], out[tau_span[1]]
    tau = np.concatenate([lo.t[::-1], hi.t[1:]])
    w = np.concatenate([lo.y[0][::-1], hi.y[0][1:]])
    v = np.concatenate([lo.y[1][::-1], hi.y[1][1:]])
    return tau, w, v


def schouten_eigenvalues(u_r, u_rr, r):
    """Radial and tangential Schouten eigenvalues of a radial ``u`` (w.r.t. ``g_E``)."""
    lam1 = -u_rr + 0.5 * u_r * u_r
    lam2 = -u_r / r - 0.5 * u_r * u_r
    return lam1, lam2


@dataclass(frozen=True)
class RadialReductionOracle:
    """Finite-difference Schouten eigenvalues of a sampled radial ``u``."""

    r: np.ndarray
    h: float
    lam1: np.ndarray
    lam2: np.ndarray
    u: np.ndarray

    @property
    def sigma2(self) -> np.ndarray:
        return 3.0 * self.lam2 * (self.lam1 + self.lam2)

    @property
    def target(self) -> np.ndarray:
        return SIGMA2_TARGET * np.exp(4.0 * self.u)

    @property
    def in_cone(self) -> np.ndarray:
        s1 = self.lam1 + 3.0 * self.lam2
        return (s1 > 0) & (self.sigma2 > 0)


def reduction_oracle(u_of_r, r, h: float) -> RadialReductionOracle:
    """Second-order central differences of ``u`` at radii ``r`` with step ``h``."""
    r = np.asarray(r, dtype=float)
    um, u0, up = u_of_r(r - h), u_of_r(r), u_of_r(r + h)
    ur = (up - um) / (2.0 * h)
    urr = (up - 2.0 * u0 + um) / (h * h)
    lam1, lam2 = schouten_eigenvalues(ur, urr, r)
    return RadialReductionOracle(r=r, h=h, lam1=lam1, lam2=lam2, u=u0)
