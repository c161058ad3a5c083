from __future__ import annotations

import math

import numpy as np
import pytest

from sigma2lab.levelset import coarea
from sigma2lab.levelset.coarea import (Bins, EmptyBinsError, GridSpec, LocalGraphError, SingularFractionError,
                                       analytic_table, coarea_table, core_mask, cross_validate, grid_table)
from sigma2lab.levelset.fields import (EllipsoidalField, ScalarField4D, SingularPoint, football_field,
                                       perturbed_football, sphere_field)
from sigma2lab.levelset.identities import resolved_mask


@pytest.fixture(scope="module")
def sphere_grid():
    f = sphere_field()
    return f, grid_table(f, GridSpec(6.0, 48))


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(6.0, 15)
    with pytest.raises(ValueError):
        GridSpec(6.0, 33)
    assert GridSpec(6.0, 64).h == pytest.approx(0.1875)


def test_bins_validation():
    with pytest.raises(ValueError):
        Bins(1.0, 0.0)
    with pytest.raises(ValueError):
        Bins(0.0, 1.0, 2)
    assert Bins(0.0, 1.0, 11).dt == pytest.approx(0.1)


def test_sphere_grid_matches_analytic(sphere_grid):
    f, gt = sphere_grid
    at = analytic_table(f, gt.t)
    m = core_mask(at) & resolved_mask(gt)
    for name, tol in (("B", 5e-3), ("C", 2e-3), ("z", 3e-2), ("M", 2e-2)):
        assert np.max(np.abs(getattr(gt, name)[m] - getattr(at, name)[m])) < tol, name


def test_capacity_never_exceeds_ceiling(sphere_grid):
    assert np.all(sphere_grid[1].C <= 4.0 / 3.0)


def test_football_grid_cross_validation():
    errs = cross_validate(football_field(-0.5), GridSpec(6.0, 32))
    assert errs["C"] < 5e-3
    assert errs["B"] < 1e-2


def test_levels_above_the_maximum_are_empty():
    f = EllipsoidalField([1.0, 1.0, 1.0, 1.2])
    with pytest.raises(EmptyBinsError):
        # the maximum is ln 2; the blur reaches only a few cells above it
        grid_table(f, GridSpec(6.0, 16), Bins(0.0, 3.0, 11))


def test_singular_fraction_limit():
    with pytest.raises(SingularFractionError):
        grid_table(football_field(-0.5), GridSpec(6.0, 32), max_excluded_fraction=0.0)


def test_analytic_path_needs_radial_field():
    with pytest.raises(ValueError):
        analytic_table(perturbed_football(-0.5, [0.2, 0.9, 0.1, 0.0]))
    t = coarea_table(sphere_field())
    assert t.meta["path"] == "analytic"


def test_local_ball_is_exact_inside_the_inner_radius():
    f = football_field(-0.5)
    ball = coarea._local_ball(f, np.zeros(4), -0.5, 0.4, 0.8)
    t = np.linspace(ball.t_inner + 0.05, ball.t_limit - 0.05, 7)
    surf, B, A = ball.contributions(f, t)
    r = f.level_radius(t)
    # spline antiderivatives on a log-radius step of 0.08
    assert np.allclose(B, r**4 / 4.0, rtol=1e-4)
    assert np.allclose(A, f.enclosed_weight(t), rtol=1e-4)
    assert np.allclose(surf[0], r**3, rtol=1e-8)  # averaged area of the round level set


class _Rising(ScalarField4D):
    """``u = 0.5 ln|x|`` with a declared cone point: grows along rays."""

    singular_points = (SingularPoint((0.0, 0.0, 0.0, 0.0), -0.5),)

    def evaluate(self, x):
        x = np.atleast_2d(x)
        r2 = np.einsum("ni,ni->n", x, x)
        g = 0.5 * x / r2[:, None]
        H = 0.5 * (np.eye(4)[None] / r2[:, None, None] - 2 * np.einsum("ni,nj->nij", x, x) / (r2 * r2)[:, None, None])
        return 0.25 * np.log(r2), g, H


def test_local_ball_rejects_non_graph_levels():
    with pytest.raises(LocalGraphError):
        coarea._local_ball(_Rising(), np.zeros(4), -0.5, 0.4, 0.8)


def test_weight_modes_partition_the_cutoff():
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, size=(500, 4))
    centers = np.zeros((1, 4))
    radii = np.array([[0.3, 0.6, 0.8, 1.6]])

    def w(mode):
        return np.array([coarea._weight(p, centers, radii, mode) for p in x])

    chi = w(0)
    assert np.allclose(w(1) + w(2), chi)
    d = np.linalg.norm(x, axis=1)
    assert np.all(chi[d < 0.3] == 0.0)
    assert np.all(chi[d > 0.6] == 1.0)


def test_normal_root_solves_the_quadratic():
    for s, k in ((0.1, 0.5), (-0.2, 1.3), (0.05, -2.0), (0.3, 0.0)):
        sig = coarea._normal_root(s, k)
        assert sig + 0.5 * k * sig * sig == pytest.approx(s, abs=1e-12)
        assert abs(sig) <= 2 * abs(s) + 1e-15


def test_core_mask_selects_central_volume(sphere_grid):
    t = sphere_grid[1]
    m = core_mask(t, 0.5)
    total = t.meta["total_volume"]
    assert np.all(t.A[m] >= 0.25 * total - 1e-12)
    assert np.all(t.A[m] <= 0.75 * total + 1e-12)
    assert math.isclose(total, 4.0 / 3.0)
