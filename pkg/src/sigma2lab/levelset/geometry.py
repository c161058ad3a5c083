"""Pointwise geometry of level sets ``L(t) = {u = t}``.

The unit normal is ``n = -grad u / |grad u|``, pointing out of the
superlevel set ``{u >= t}``, so round level sets of a radially decreasing
``u`` have ``H = +3/r``.
"""

from __future__ import annotations

import numpy as np

#: Gradients below this (relative to the field scale) count as critical.
CRITICAL_GRADIENT = 1e-8


class CriticalPointError(ValueError):
    """The gradient is too small for the level set to be a hypersurface."""


def _unpack(grad, hess):
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    g = np.sqrt(np.einsum("...i,...i->...", grad, grad))
    return grad, hess, g


def normal_second_derivative_from(grad, hess):
    """``n^T (grad^2 u) n``; the sign of ``n`` drops out."""
    grad, hess, g = _unpack(grad, hess)
    return np.einsum("...i,...ij,...j->...", grad, hess, grad) / (g * g)


def mean_curvature_from(grad, hess):
    """``div n = (-Lap u + u_nn) / |grad u|`` for ``n = -grad u/|grad u|``."""
    grad, hess, g = _unpack(grad, hess)
    lap = np.trace(hess, axis1=-2, axis2=-1)
    unn = np.einsum("...i,...ij,...j->...", grad, hess, grad) / (g * g)
    return (-lap + unn) / g


def _checked(field, x):
    u, grad, hess = field.evaluate(np.atleast_2d(np.asarray(x, dtype=float)))
    g = np.linalg.norm(grad, axis=-1)
    if np.any(g < CRITICAL_GRADIENT):
        raise CriticalPointError("gradient vanishes; the level set is not a hypersurface here")
    return grad, hess


def mean_curvature(field, x):
    """Mean curvature (sum of principal curvatures) of the level set through ``x``."""
    grad, hess = _checked(field, x)
    out = mean_curvature_from(grad, hess)
    return float(out[0]) if np.ndim(x) == 1 else out


def normal_second_derivative(field, x):
    """``nabla_nn u`` at ``x``."""
    grad, hess = _checked(field, x)
    out = normal_second_derivative_from(grad, hess)
    return float(out[0]) if np.ndim(x) == 1 else out


def surface_integrands(u, grad, hess):
    """Per-point integrands of the averaged surface quantities.

    Returns ``(g, n, phi)`` where ``phi`` has columns for ``L``,
    ``1/|grad u|`` (the ``A'`` integrand without ``e^{4t}``), ``z^3``,
    ``D``, ``F1`` and ``F2``.
    """
    grad, hess, g = _unpack(grad, hess)
    lap = np.trace(hess, axis1=-2, axis2=-1)
    unn = np.einsum("...i,...ij,...j->...", grad, hess, grad) / (g * g)
    Hg = -lap + unn  # H |grad u|
    phi = np.stack(
        [
            np.ones_like(g),
            1.0 / g,
            g**3,
            0.25 * (2.0 * Hg * g - 2.0 * g**3),
            (Hg - 1.5 * g * g) * g,
            (Hg / 3.0 - unn) * g,
        ],
        axis=-1,
    )
    return g, grad / g[..., None], phi


PHI_COLUMNS = ("L", "inv_grad", "grad3", "D", "F1", "F2")
