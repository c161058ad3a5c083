"""Product quadrature on the unit 3-sphere in Hopf coordinates.

A point is ``(cos psi e^{i phi1}, sin psi e^{i phi2})``; with ``s = sin^2 psi``
the round measure is ``(1/2) ds dphi1 dphi2`` on ``[0,1] x [0,2pi]^2``.
Gauss-Legendre in ``s`` and the periodic trapezoid rule in both angles
integrate polynomials of the ambient coordinates exactly up to high degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .constants import S3_AREA


@dataclass(frozen=True, eq=False)
class S3Quadrature:
    points: np.ndarray  # (n, 4) unit vectors
    weights: np.ndarray  # (n,), summing to |S^3|
    shape: tuple[int, int, int]  # (n_s, n_phi1, n_phi2)

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def mean(self, values) -> float:
        return self.integrate(values) / S3_AREA


@lru_cache(maxsize=16)
def s3_quadrature(n_s: int = 12, n_phi: int = 24) -> S3Quadrature:
    """Quadrature with ``n_s * n_phi**2`` nodes."""
    x, wx = np.polynomial.legendre.leggauss(n_s)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * wx
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    wphi = 2.0 * np.pi / n_phi
    S, P1, P2 = np.meshgrid(s, phi, phi, indexing="ij")
    W = np.broadcast_to(ws[:, None, None], S.shape) * wphi * wphi * 0.5
    c, sn = np.sqrt(1.0 - S), np.sqrt(S)
    pts = np.stack([c * np.cos(P1), c * np.sin(P1), sn * np.cos(P2), sn * np.sin(P2)], axis=-1)
    pts.setflags(write=False)
    W = np.ascontiguousarray(W.ravel())
    W.setflags(write=False)
    return S3Quadrature(points=pts.reshape(-1, 4), weights=W, shape=(n_s, n_phi, n_phi))
