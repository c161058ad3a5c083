from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigma2lab.radial import (ConeExitError, build_football, build_sphere, capacity, cylinder_rhs, first_integral,
                              integrate_cylinder, mass, radial_levelsets, reduction_oracle, volume,
                              write_profile_csv)


def test_sphere_profile_is_exact():
    sol = build_sphere()
    r = np.exp(sol.tau)
    assert np.allclose(sol.w - sol.tau, np.log(2.0 / (1.0 + r * r)), atol=1e-12)


@pytest.mark.parametrize("beta", [-0.1, -0.5, -0.9])
def test_first_integral_conserved(beta):
    sol = build_football(beta)
    H = first_integral(sol.w, sol.v)
    assert np.max(np.abs(H - sol.H)) < 1e-10


@pytest.mark.parametrize("beta", [-0.2, -0.5, -0.8])
def test_closed_forms(beta):
    sol = build_football(beta)
    a = 1.0 + beta
    assert capacity(sol) == pytest.approx(a * a * (2 - a * a) / 4, abs=1e-10)
    assert mass(sol) == pytest.approx(beta * beta * (2 + beta) ** 2 / 4, abs=1e-14)
    assert volume(sol) == pytest.approx(2 * a - 2 * a**3 / 3, abs=1e-11)


def test_rejects_beta_outside_range():
    with pytest.raises(ValueError):
        build_football(-1.0)
    with pytest.raises(ValueError):
        build_football(0.3)


def test_shooting_path_agrees_with_quadrature():
    sol = build_football(-0.5)
    tau, w, v = integrate_cylinder(-0.5)
    _, w_ref, _, _ = sol.state_at_xi(sol.xi_of_tau(tau))
    assert np.max(np.abs(w - w_ref)) < 1e-8
    assert np.max(np.abs(first_integral(w, v) - sol.H)) < 1e-8


def test_rhs_leaves_cone():
    with pytest.raises(ConeExitError):
        cylinder_rhs(0.0, 1.0)


def test_level_table_mass_constant():
    t = radial_levelsets(build_football(-0.5))
    assert np.max(np.abs(t.M - 9 / 64)) < 1e-8
    assert np.all(np.diff(t.A) < 0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.95, -0.05))
def test_mass_and_volume_properties(beta):
    sol = build_football(beta)
    assert mass(sol) >= 0
    assert 0 < volume(sol) <= 4.0 / 3.0 + 1e-12


def test_profile_csv(tmp_path):
    sol = build_football(-0.5)
    p = tmp_path / "p.csv"
    write_profile_csv(sol, p)
    head = p.read_text().splitlines()[0]
    assert head == "tau,w,v,t,A,B,C,z,D,M"


def test_reduction_oracle_second_order():
    def u(r):
        return math.log(2.0) - np.log1p(r * r)

    r = np.linspace(0.3, 2.0, 9)
    errs = []
    for h in (1e-2, 5e-3):
        o = reduction_oracle(u, r, h)
        errs.append(np.max(np.abs(o.sigma2 - o.target)))
        assert np.all(o.in_cone)
    assert math.log2(errs[0] / errs[1]) > 1.9


def test_enclosed_weight_keeps_relative_precision_near_the_top():
    sol = build_sphere()
    v = np.array([1.0 - 1e-6, 1.0 - 1e-9])
    exact = (1.0 - v) ** 2 * (2.0 + v) / 3.0
    np.testing.assert_allclose(sol.enclosed_weight(v), exact, rtol=1e-6)
