from __future__ import annotations

import math
import warnings
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigma2lab.divisor import (ConformalDivisor, Criticality, DivisorWarning, analyze_sequence, beta_tilde,
                               classify, criticality_gap, criticality_gap_exact, gap_sign_exact,
                               nondegeneracy_constant, normalized_total_volume)

betas_st = st.lists(st.floats(-0.95, -0.01), min_size=2, max_size=5)


def test_equal_pair_is_critical():
    d = ConformalDivisor((Fraction(-1, 2), Fraction(-1, 2)))
    rep = classify(d)
    assert rep.criticality is Criticality.CRITICAL
    assert criticality_gap_exact(d, 1) == 0


def test_supercritical_pair_gap():
    d = ConformalDivisor((Fraction(-1, 2), Fraction(-9, 10)))
    assert criticality_gap_exact(d, 2) == Fraction(783, 5000)
    assert classify(d).criticality is Criticality.SUPERCRITICAL


def test_subcritical_triple_gap():
    d = ConformalDivisor((-0.5, -0.5, -0.1))
    assert classify(d).criticality is Criticality.SUBCRITICAL
    assert criticality_gap(d, 1) == pytest.approx(-0.0094046, abs=1e-6)


def test_round_sphere_is_vacuously_subcritical():
    rep = classify(ConformalDivisor(()))
    assert rep.criticality is Criticality.SUBCRITICAL
    assert rep.volume == pytest.approx(4.0 / 3.0)


def test_rejects_beta_at_or_below_minus_one():
    with pytest.raises(ValueError):
        ConformalDivisor((-1.0, -0.5))


def test_positive_beta_warns():
    with pytest.warns(DivisorWarning):
        ConformalDivisor((0.2, -0.5))


def test_index_is_one_based():
    d = ConformalDivisor((-0.5, -0.2))
    with pytest.raises(IndexError):
        criticality_gap(d, 0)
    with pytest.raises(IndexError):
        beta_tilde(d, 3)


def test_exact_needs_rationals():
    with pytest.raises(TypeError):
        gap_sign_exact(ConformalDivisor((-0.5, -0.2)), 1)


def test_volume_formula():
    d = ConformalDivisor((-0.5, -0.5))
    assert normalized_total_volume(d) == pytest.approx(2 * 0.5 - 2 * 0.5**3 / 3)
    assert nondegeneracy_constant(d) == pytest.approx(2.0 - (-0.125 + 0.75))


@settings(max_examples=60, deadline=None)
@given(betas_st, st.randoms(use_true_random=False))
def test_classification_is_permutation_invariant(betas, rnd):
    perm = list(betas)
    rnd.shuffle(perm)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = classify(ConformalDivisor(betas), exact=False)
        b = classify(ConformalDivisor(perm), exact=False)
    assert a.criticality is b.criticality
    assert sorted(a.gaps) == pytest.approx(sorted(b.gaps), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-95, -1), min_size=2, max_size=4))
def test_exact_gap_matches_float(nums):
    d = ConformalDivisor([Fraction(n, 100) for n in nums])
    for j in range(1, d.q + 1):
        assert float(criticality_gap_exact(d, j)) == pytest.approx(criticality_gap(d, j), abs=1e-12)
        g = criticality_gap(d, j)
        if abs(g) > 1e-9:
            assert gap_sign_exact(d, j) == (1 if g > 0 else -1)


def test_sequence_gap_tends_to_zero(tmp_path):
    seq = [ConformalDivisor((-0.5, -0.5, -0.1 / l)) for l in range(1, 21)]
    rep = analyze_sequence(seq, 1, eps=1e-6)
    assert rep.gap_decreasing
    assert abs(rep.gaps[-1]) < 1e-3
    assert all(c is Criticality.SUBCRITICAL for c in rep.classes)
    assert rep.nondegenerate
    rep.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().count("\n") == 21


def test_sequence_other_index_does_not_close():
    seq = [ConformalDivisor((-0.5, -0.5, -0.1 / l)) for l in range(1, 21)]
    rep = analyze_sequence(seq, 3, eps=1e-6)
    assert rep.gaps[-1] == pytest.approx(-0.369, abs=1e-3)


def test_sequence_rejects_mixed_lengths():
    with pytest.raises(ValueError):
        analyze_sequence([ConformalDivisor((-0.5, -0.5)), ConformalDivisor((-0.5, -0.5, -0.1))], 1, 1e-6)
    with pytest.raises(ValueError):
        analyze_sequence([], 1, 1e-6)


def test_report_json_roundtrip():
    import json

    rep = classify(ConformalDivisor((-0.5, -0.9)))
    d = json.loads(rep.to_json())
    assert d["class"] == "supercritical"
    assert math.isclose(d["gaps"][1], 0.1566, abs_tol=1e-9)
