"""Arithmetic on conformal divisors of conic 4-spheres.

A divisor ``D = sum beta_i p_i`` is represented only through its cone
parameters; the location of the marked points never enters the
classification or the total-volume formula.

Indices ``j`` are 1-based throughout, matching the labelling of marked
points ``p_1, ..., p_q``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from numbers import Rational
from pathlib import Path
from typing import Sequence

Number = float | Fraction

DEFAULT_TOL = 1e-12


class Criticality(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


class DivisorWarning(UserWarning):
    """Raised (as a warning) for cone parameters outside ``(-1, 0]``."""


@dataclass(frozen=True)
class ConformalDivisor:
    """Cone parameters attached to marked points.

    Parameters
    ----------
    betas : sequence of float or Fraction
        One cone parameter per marked point. Every entry must exceed -1.
    labels : sequence of str, optional
        Opaque identifiers for the marked points.
    """

    betas: tuple[Number, ...]
    labels: tuple[str, ...] = ()

    def __init__(self, betas: Sequence[Number], labels: Sequence[str] | None = None):
        betas = tuple(b if isinstance(b, Rational) else float(b) for b in betas)
        for b in betas:
            if not b > -1:
                raise ValueError(f"cone parameter {b!r} must be > -1")
        if labels is None:
            labels = tuple(f"p{i + 1}" for i in range(len(betas)))
        elif len(labels) != len(betas):
            raise ValueError("labels and betas differ in length")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "labels", tuple(str(x) for x in labels))
        if self.outside_model_range:
            warnings.warn(
                f"cone parameters {betas} leave (-1, 0]; radial constructions "
                "and the uniform volume bound assume -1 < beta <= 0",
                DivisorWarning,
                stacklevel=2,
            )

    @property
    def q(self) -> int:
        return len(self.betas)

    @property
    def outside_model_range(self) -> bool:
        """Diagnostic flag: some beta lies outside ``(-1, 0]``."""
        return any(b > 0 for b in self.betas)

    @property
    def is_rational(self) -> bool:
        return all(isinstance(b, Rational) for b in self.betas)

    def as_floats(self) -> tuple[float, ...]:
        return tuple(float(b) for b in self.betas)


def _check_index(divisor: ConformalDivisor, j: int) -> int:
    if not 1 <= j <= divisor.q:
        raise IndexError(f"index j={j} outside 1..{divisor.q}")
    return j - 1


def real_cbrt(x: float) -> float:
    """Real cube root, negative for negative input."""
    return math.copysign(abs(x) ** (1.0 / 3.0), x) if x else 0.0


def beta_tilde(divisor: ConformalDivisor, j: int) -> float:
    """Real cube root of the sum of cubes of all cone parameters except ``beta_j``."""
    jj = _check_index(divisor, j)
    betas = divisor.as_floats()
    s = math.fsum(b**3 for i, b in enumerate(betas) if i != jj)
    return float(_cbrt_polished(s))


def _cbrt_polished(s: float) -> float:
    # One Newton step removes the last-ulp error of the pow-based root.
    r = real_cbrt(s)
    if r != 0.0:
        r -= (r**3 - s) / (3.0 * r * r)
    return r


def _cone_energy(b: float) -> float:
    return 0.375 * b * b * (b + 2.0) ** 2


def criticality_gap(divisor: ConformalDivisor, j: int) -> float:
    """Gap ``G(D, j)``; positive means the strict subcritical inequality fails at ``j``.

    ``G = 3/8 b_j^2 (b_j+2)^2 - 3/8 bt^2 (bt+2)^2 - (bt + 3/2)(sum_{i != j} b_i^2 - bt^2)``
    with ``bt = beta_tilde(D, j)``.
    """
    jj = _check_index(divisor, j)
    betas = divisor.as_floats()
    bt = beta_tilde(divisor, j)
    s2 = math.fsum(b * b for i, b in enumerate(betas) if i != jj)
    return _cone_energy(betas[jj]) - _cone_energy(bt) - (bt + 1.5) * (s2 - bt * bt)


# -- exact arithmetic ---------------------------------------------------------
#
# With c = sum_{i != j} b_i^3 and s2 = sum_{i != j} b_i^2 the gap collapses to
# G = alpha0 + alpha1 * cbrt(c), because the bt^2 terms cancel and bt^4 = c*bt.


def _gap_coefficients(betas: Sequence[Fraction], jj: int) -> tuple[Fraction, Fraction, Fraction]:
    c = sum((b**3 for i, b in enumerate(betas) if i != jj), Fraction(0))
    s2 = sum((b**2 for i, b in enumerate(betas) if i != jj), Fraction(0))
    bj = betas[jj]
    energy = Fraction(3, 8) * bj**2 * (bj + 2) ** 2
    alpha0 = energy - Fraction(3, 2) * s2 - c / 2
    alpha1 = -(Fraction(3, 8) * c + s2)
    return alpha0, alpha1, c


def _rational_cbrt(c: Fraction) -> Fraction | None:
    sign = -1 if c < 0 else 1
    num, den = abs(c.numerator), c.denominator
    rn, rd = round(num ** (1 / 3)), round(den ** (1 / 3))
    for a in (rn - 1, rn, rn + 1):
        for d in (rd - 1, rd, rd + 1):
            if a >= 0 and d > 0 and a**3 == num and d**3 == den:
                return sign * Fraction(a, d)
    return None


def gap_sign_exact(divisor: ConformalDivisor, j: int) -> int:
    """Exact sign of ``G(D, j)`` for rational cone parameters."""
    if not divisor.is_rational:
        raise TypeError("exact evaluation needs rational cone parameters")
    jj = _check_index(divisor, j)
    betas = [Fraction(b) for b in divisor.betas]
    alpha0, alpha1, c = _gap_coefficients(betas, jj)
    root = _rational_cbrt(c)
    if root is not None:
        g = alpha0 + alpha1 * root
        return (g > 0) - (g < 0)
    # cbrt(c) irrational: G = 0 only if both coefficients vanish.
    if alpha1 == 0:
        return (alpha0 > 0) - (alpha0 < 0)
    # alpha1 * r > -alpha0  <=>  r > -alpha0/alpha1 (alpha1 > 0), cube is monotone
    pivot = -alpha0 / alpha1
    cmp = (c > pivot**3) - (c < pivot**3)
    return cmp if alpha1 > 0 else -cmp


def criticality_gap_exact(divisor: ConformalDivisor, j: int) -> Fraction | float:
    """``G(D, j)`` as a Fraction when ``beta_tilde`` is rational, else a float of the reduced form."""
    if not divisor.is_rational:
        raise TypeError("exact evaluation needs rational cone parameters")
    jj = _check_index(divisor, j)
    betas = [Fraction(b) for b in divisor.betas]
    alpha0, alpha1, c = _gap_coefficients(betas, jj)
    root = _rational_cbrt(c)
    if root is not None:
        return alpha0 + alpha1 * root
    return float(alpha0) + float(alpha1) * _cbrt_polished(float(c))


# -- classification -------------------------------------------------------------


@dataclass(frozen=True)
class CriticalityReport:
    betas: tuple[float, ...]
    gaps: tuple[float, ...]
    criticality: Criticality
    tol: float
    exact: bool = False
    volume: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "betas": list(self.betas),
            "gaps": list(self.gaps),
            "class": self.criticality.value,
            "V": self.volume,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def classify(divisor: ConformalDivisor, tol: float = DEFAULT_TOL, exact: bool | None = None) -> CriticalityReport:
    """Classify a divisor as sub-, super- or critical.

    Precedence: any gap above ``+tol`` makes the divisor supercritical,
    otherwise a gap within ``tol`` of zero makes it critical. Rational
    divisors are classified with exact signs unless ``exact=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if divisor.q == 0:
        # Round sphere: no index, the subcritical condition holds vacuously.
        return CriticalityReport((), (), Criticality.SUBCRITICAL, tol, False,
                                 normalized_total_volume(divisor))
    if exact is None:
        exact = divisor.is_rational
    gaps = tuple(criticality_gap(divisor, j) for j in range(1, divisor.q + 1))
    if exact:
        signs = [gap_sign_exact(divisor, j) for j in range(1, divisor.q + 1)]
        if any(s > 0 for s in signs):
            cls = Criticality.SUPERCRITICAL
        elif any(s == 0 for s in signs):
            cls = Criticality.CRITICAL
        else:
            cls = Criticality.SUBCRITICAL
    else:
        top = max(gaps)
        if top > tol:
            cls = Criticality.SUPERCRITICAL
        elif abs(top) <= tol:
            cls = Criticality.CRITICAL
        else:
            cls = Criticality.SUBCRITICAL
    return CriticalityReport(divisor.as_floats(), gaps, cls, tol, exact,
                             normalized_total_volume(divisor))


def nondegeneracy_constant(divisor: ConformalDivisor) -> float:
    """``2 - sum (beta^3 + 3 beta^2) / 2``; the curvature integral in units of ``|S^3|``."""
    return 2.0 - math.fsum((b**3 + 3 * b * b) / 2 for b in divisor.as_floats())


def normalized_total_volume(divisor: ConformalDivisor) -> float:
    """Normalised volume ``(1/|S^3|) int e^{4u}`` forced by ``sigma_2 = 3/2``."""
    return 2.0 / 3.0 * nondegeneracy_constant(divisor)


# -- sequences --------------------------------------------------------------------


@dataclass(frozen=True)
class SequenceReport:
    """Diagnostics for a finite sequence of divisors approaching the boundary."""

    j: int
    eps: float
    betas: tuple[tuple[float, ...], ...]
    gaps: tuple[float, ...]
    beta_tildes: tuple[float, ...]
    nondegeneracy: tuple[float, ...]
    classes: tuple[Criticality, ...]
    limit_betas: tuple[float, ...]
    limit_abs_sum: float
    cauchy_increment: float
    gap_decreasing: bool
    beta_tilde_margin_ok: bool
    admissibility_margin_ok: bool

    @property
    def nondegenerate(self) -> bool:
        """Limit keeps some cone point and the curvature constant stays positive."""
        return self.limit_abs_sum > 0 and min(self.nondegeneracy) > 0

    @property
    def flagged(self) -> bool:
        return not (self.beta_tilde_margin_ok and self.admissibility_margin_ok)

    def write_csv(self, path: str | Path) -> None:
        q = len(self.limit_betas)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["l", *[f"beta_{i + 1}" for i in range(q)], f"gap_{self.j}", "nondegen_const"])
            for l, (b, g, c) in enumerate(zip(self.betas, self.gaps, self.nondegeneracy), start=1):
                w.writerow([l, *(repr(x) for x in b), repr(g), repr(c)])


def analyze_sequence(
    seq: Sequence[ConformalDivisor],
    j: int,
    eps: float,
    tol: float = DEFAULT_TOL,
) -> SequenceReport:
    """Track the gap at index ``j`` along a sequence of divisors.

    The limit is estimated by the last element; ``cauchy_increment`` is
    the size of the final step and says how settled that estimate is.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not seq:
        raise ValueError("empty sequence")
    q = seq[0].q
    if any(d.q != q for d in seq):
        raise ValueError("all divisors in a sequence must share the point count q")
    gaps = tuple(criticality_gap(d, j) for d in seq)
    bts = tuple(beta_tilde(d, j) for d in seq)
    consts = tuple(nondegeneracy_constant(d) for d in seq)
    classes = tuple(classify(d, tol, exact=False).criticality for d in seq)
    limit = seq[-1].as_floats()
    if len(seq) > 1:
        prev = seq[-2].as_floats()
        cauchy = max(abs(a - b) for a, b in zip(limit, prev)) if q else 0.0
    else:
        cauchy = float("nan")
    mags = [abs(g) for g in gaps]
    decreasing = all(b <= a for a, b in zip(mags, mags[1:]))
    return SequenceReport(
        j=j,
        eps=eps,
        betas=tuple(d.as_floats() for d in seq),
        gaps=gaps,
        beta_tildes=bts,
        nondegeneracy=consts,
        classes=classes,
        limit_betas=limit,
        limit_abs_sum=math.fsum(abs(b) for b in limit),
        cauchy_increment=cauchy,
        gap_decreasing=decreasing,
        beta_tilde_margin_ok=all(b > -1 + eps for b in bts),
        admissibility_margin_ok=all(b > -1 + eps for b in limit),
    )
