from __future__ import annotations

import numpy as np
import pytest

from sigma2lab.levelset.fields import EllipsoidalField, sphere_field
from sigma2lab.levelset.geometry import (CriticalPointError, mean_curvature, normal_second_derivative,
                                         surface_integrands)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_round_level_sets_have_mean_curvature_three_over_r(r):
    f = sphere_field()
    x = np.array([r, 0.0, 0.0, 0.0])
    assert mean_curvature(f, x) == pytest.approx(3.0 / r, rel=1e-12)


def test_normal_second_derivative_of_radial_field():
    f = sphere_field()
    r = 0.7
    x = np.array([0.0, r, 0.0, 0.0])
    # u = ln 2 - ln(1 + r^2), u_rr = -2(1 - r^2)/(1 + r^2)^2
    assert normal_second_derivative(f, x) == pytest.approx(-2 * (1 - r * r) / (1 + r * r) ** 2)


def test_critical_point_rejected():
    with pytest.raises(CriticalPointError):
        mean_curvature(EllipsoidalField(np.ones(4)), np.zeros(4))


def test_integrand_columns():
    f = sphere_field()
    x = np.array([[1.0, 0.0, 0.0, 0.0]])
    u, g, H = f.evaluate(x)
    gn, n, phi = surface_integrands(u, g, H)
    assert gn[0] == pytest.approx(1.0)
    assert phi[0, 0] == 1.0
    assert phi[0, 1] == pytest.approx(1.0)
    assert np.allclose(n[0], [-1.0, 0.0, 0.0, 0.0])
