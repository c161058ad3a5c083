"""Scenario implementations.

Each scenario writes its files into the output directory and returns a
:class:`ScenarioResult` whose verdicts decide the exit code. Reports hold
no timings or paths outside the output directory, so identical scenarios
produce identical bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .. import isoperimetry as iso
from .. import plotting
from ..divisor import (ConformalDivisor, Criticality, analyze_sequence, classify, criticality_gap,
                       criticality_gap_exact, nondegeneracy_constant, normalized_total_volume)
from ..levelset.coarea import GridSpec, analytic_table, default_bins, grid_table
from ..levelset.fields import SampledGridField, football_field, perturbed_family, sphere_field
from ..levelset.identities import capacity_estimate, core_mask, resolved_mask, verify_identities
from ..radial import build_football, build_sphere, capacity, mass, radial_levelsets, volume, write_profile_csv
from .config import ConfigError, Scenario


class ScheduleError(ValueError):
    """The perturbation schedule does not increase strictly to zero from below."""


@dataclass
class ScenarioResult:
    kind: str
    report: dict
    verdicts: dict[str, bool] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (Fraction, Criticality)):
        return str(obj.value if isinstance(obj, Criticality) else obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _out(s: Scenario) -> Path:
    p = Path(s.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _football_closed_forms(beta: float) -> dict:
    a = 1.0 + beta
    return {
        "capacity": a * a * (2.0 - a * a) / 4.0,
        "mass": 0.25 * beta * beta * (2.0 + beta) ** 2,
        "volume": 2.0 * a - 2.0 * a**3 / 3.0,
    }


# -- classify ------------------------------------------------------------------------


def _divisor(betas) -> ConformalDivisor:
    try:
        return ConformalDivisor(betas)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run_classify(s: Scenario) -> ScenarioResult:
    """Classify the divisor in floating point and with exact rational arithmetic."""
    out = _out(s)
    d_float = _divisor(s.betas)
    d_exact = _divisor([Fraction(repr(b)) for b in s.betas])
    rf = classify(d_float, exact=False)
    rx = classify(d_exact, exact=True)
    gaps_exact = [criticality_gap_exact(d_exact, j) for j in range(1, d_exact.q + 1)]
    report = {
        "betas": list(s.betas),
        "class": rf.criticality.value,
        "class_exact": rx.criticality.value,
        "gaps": list(rf.gaps),
        "gaps_exact": [str(g) if isinstance(g, Fraction) else g for g in gaps_exact],
        "nondegeneracy_constant": nondegeneracy_constant(d_float),
        "volume": normalized_total_volume(d_float),
    }
    res = ScenarioResult("classify", report, {"float and exact classes agree": rf.criticality == rx.criticality})
    res.files.append(str(write_json(report, out / "classify.json")))
    return res


# -- football ------------------------------------------------------------------------


def _single_beta(s: Scenario) -> float:
    b = set(s.betas)
    if len(b) != 1:
        raise ConfigError("a football needs equal cone parameters, e.g. --betas -0.5,-0.5")
    beta = float(b.pop())
    if not -1.0 < beta <= 0.0:
        raise ConfigError("cone parameter must lie in (-1, 0]")
    return beta


def run_football(s: Scenario) -> ScenarioResult:
    """Radial football: closed forms against quadrature and the level-set table."""
    out = _out(s)
    beta = _single_beta(s)
    sol = build_football(beta) if beta < 0 else build_sphere()
    closed = _football_closed_forms(beta)
    table = radial_levelsets(sol)
    gb = normalized_total_volume(ConformalDivisor((beta, beta)))
    mass_dev = float(np.max(np.abs(table.M - closed["mass"])))
    numeric = {"capacity": capacity(sol), "mass": mass(sol), "volume": volume(sol)}
    report = {
        "beta": beta,
        "closed_form": closed,
        "numeric": numeric,
        "gauss_bonnet_volume": gb,
        "mass_column_max_deviation": mass_dev,
        "levels": len(table),
    }
    verdicts = {
        "M constant at closed form (1e-8)": mass_dev <= 1e-8,
        "capacity matches closed form (1e-8)": abs(numeric["capacity"] - closed["capacity"]) <= 1e-8,
        "volume matches curvature integral (1e-9)": abs(numeric["volume"] - gb) <= 1e-9,
    }
    res = ScenarioResult("football", report, verdicts)
    prof = out / "football_profile.csv"
    write_profile_csv(sol, prof)
    res.files += [str(prof), str(write_json(report, out / "football.json")),
                  str(plotting.plot_levelset(table, out / "football.svg", title=f"football beta={beta:g}"))]
    return res


# -- levelset-verify -------------------------------------------------------------------


def _field_for(s: Scenario):
    src = s.levelset.source
    if src == "sphere":
        return sphere_field()
    if src == "football":
        beta = _single_beta(s)
        return sphere_field() if beta == 0 else football_field(beta)
    if src == "perturbed":
        return perturbed_family(s.levelset.index + 1, seed=s.seed)[s.levelset.index]
    try:
        return SampledGridField.load(s.levelset.field_file)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read field file {s.levelset.field_file!r}: {exc}") from exc


def verify_field(field, s: Scenario, out: Path, stem: str = "levelset") -> ScenarioResult:
    """Table, identity report, capacity and plots for one field."""
    if s.levelset.path == "analytic":
        table = analytic_table(field, count=s.grid.bins)
        rows = np.ones(len(table), dtype=bool)
        K = capacity_estimate(table, field)
    else:
        grid = GridSpec(s.grid.domain_radius, s.grid.resolution)
        bins = default_bins(field, grid, s.grid.bins)
        table = grid_table(field, grid, bins)
        rows = core_mask(table) & resolved_mask(table)
        K = capacity_estimate(table)
    rep = verify_identities(table, field)
    report = {
        "field": field.describe(),
        "path": table.meta["path"],
        "levels": len(table),
        "capacity": K.to_dict(),
        "identities": rep.to_dict(),
        "meta": {k: v for k, v in table.meta.items() if k not in ("field",)},
    }
    verdicts = {f"{k}: {c.statement}": c.verdict != "FAIL" for k, c in rep.checks.items()}
    res = ScenarioResult("levelset-verify", report, verdicts)
    csv_path = out / f"{stem}.csv"
    table.write_csv(csv_path, rep.residual_columns())
    res.files += [str(csv_path), str(write_json(report, out / f"{stem}.json")),
                  str(plotting.plot_levelset(table, out / f"{stem}.svg", rows=rows, title=stem))]
    return res


def run_levelset_verify(s: Scenario) -> ScenarioResult:
    return verify_field(_field_for(s), s, _out(s))


# -- isoperimetry ----------------------------------------------------------------------


def run_isoperimetry(s: Scenario) -> ScenarioResult:
    """Ball, translated ball, ellipsoid family, scaling law and a random star-shaped family."""
    out = _out(s)
    o = s.isoperimetry
    kw = {"log2_samples": o.log2_samples, "seed": s.seed}
    rows = []

    def record(label, eps, rep):
        rows.append({"label": label, "eps": eps, "alpha": rep.alpha, "deficit": rep.deficit, "ratio": rep.ratio,
                     "r": rep.r, "center": list(rep.center), "volume": rep.volume, "perimeter": rep.perimeter})
        return rep

    b = record("ball", 0.0, iso.fraenkel_asymmetry(iso.ball(), **kw))
    tb = record("translated ball", 0.0, iso.fraenkel_asymmetry(iso.ball(1.0, (0.2, -0.1, 0.05, 0.0)), **kw))
    eps = sorted(o.eps)
    fam = [record("ellipsoid", e, iso.fraenkel_asymmetry(iso.ellipsoid((1, 1, 1, 1 + e)), **kw)) for e in eps]
    E = iso.ellipsoid((1, 1, 1, 1 + eps[len(eps) // 2]))
    s1 = iso.deficit_shape_functional(E, **kw)
    s2 = iso.deficit_shape_functional(E.scaled(0.5), **kw)
    scaling = s2.volume_alpha / s1.volume_alpha * 2.0**12
    rng = np.random.default_rng(s.seed)
    rand_kw = {"log2_samples": max(o.log2_samples - 4, 10), "seed": s.seed}
    rand = [record(f"random[{i}]", float("nan"), iso.fraenkel_asymmetry(iso.random_star_set(rng), **rand_kw))
            for i in range(o.random_sets)]
    halving = [{"eps": e1, "alpha_ratio": f1.alpha / f2.alpha, "deficit_ratio": f1.deficit / f2.deficit}
               for (e1, f1), (e2, f2) in zip(zip(eps, fam), zip(eps[1:], fam[1:])) if abs(e2 - 2 * e1) < 1e-12]
    ratios = [r["ratio"] for r in rows if r["label"] != "ball" and math.isfinite(r["ratio"])]
    report = {
        "ball": b.to_dict(),
        "translated_ball": tb.to_dict(),
        "ellipsoids": [f.to_dict() for f in fam],
        "halving": halving,
        "scaling_law_ratio": scaling,
        "shape_functional": {"eps": eps[len(eps) // 2], "r=1": s1.to_dict(), "r=1/2": s2.to_dict()},
        "random_min_deficit": min((r.deficit for r in rand), default=float("nan")),
        "empirical_ratio_sup": max(ratios, default=float("nan")),
    }
    verdicts = {
        "alpha(ball) = 0 (1e-3)": abs(b.alpha) <= 1e-3,
        "deficit(ball) = 0 (1e-3)": abs(b.deficit) <= 1e-3,
        "translated ball: centre found, alpha <= 1e-3": tb.alpha <= 1e-3,
        "alpha halves with eps (20%)": all(abs(h["alpha_ratio"] - 0.5) <= 0.1 for h in halving),
        "deficit quarters with eps (30%)": all(abs(h["deficit_ratio"] - 0.25) <= 0.075 for h in halving),
        "|S|^3 alpha^2 scales as r^12 (1%)": abs(scaling - 1.0) <= 1e-2,
        "deficit >= -1e-3 on the random family": all(r.deficit >= -1e-3 for r in rand),
    }
    res = ScenarioResult("isoperimetry", report, verdicts)
    csv_path = out / "isoperimetry.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "eps", "alpha", "deficit", "ratio", "r", "volume", "perimeter"])
        for r in rows:
            w.writerow([r["label"]] + [repr(float(r[k])) for k in ("eps", "alpha", "deficit", "ratio", "r",
                                                                     "volume", "perimeter")])
    res.files += [str(csv_path), str(write_json(report, out / "isoperimetry.json")),
                  str(plotting.plot_isoperimetry(eps, [f.alpha for f in fam], [f.deficit for f in fam],
                                                 out / "isoperimetry.svg", title="ellipsoids (1,1,1,1+eps)"))]
    return res


# -- boundary sequence -----------------------------------------------------------------


def schedule(s: Scenario) -> list[float]:
    o = s.sequence
    if o.length < 2:
        raise ScheduleError("a sequence needs at least two terms")
    eps = [o.eps0 / l if o.schedule == "harmonic" else o.eps0 for l in range(1, o.length + 1)]
    if not all(e < 0 for e in eps) or not all(b > a for a, b in zip(eps, eps[1:])):
        raise ScheduleError("schedule not converging: eps_l must increase strictly to 0 from below")
    return eps


def run_boundary_sequence(s: Scenario) -> ScenarioResult:
    """Divisors ``(beta, beta, eps_l)`` approaching the football ``(beta, beta)``."""
    out = _out(s)
    beta = _single_beta(s)
    if beta == 0:
        raise ConfigError("the boundary sequence needs beta in (-1, 0)")
    eps = schedule(s)
    j = s.sequence.index
    seq = [ConformalDivisor((beta, beta, e)) for e in eps]
    sr = analyze_sequence(seq, j, eps=1e-6)
    gaps = np.array(sr.gaps)
    vols = np.array([normalized_total_volume(d) for d in seq])
    closed = _football_closed_forms(beta)
    sol = build_football(beta)
    defect = closed["volume"] - vols
    e = np.abs(np.array(eps))
    slope = float(np.polyfit(np.log(e), np.log(defect), 1)[0])
    last = seq[-1]
    final_gaps = [criticality_gap(last, i) for i in range(1, last.q + 1)]
    boundary_index = int(np.argmin(np.abs(final_gaps))) + 1
    limit = (beta, beta)
    report = {
        "beta": beta,
        "index": j,
        "eps": eps,
        "gaps": gaps.tolist(),
        "classes": [c.value for c in sr.classes],
        "volumes": vols.tolist(),
        "volume_defect": defect.tolist(),
        "defect_log_slope": slope,
        "final_gaps_all_indices": final_gaps,
        "boundary_index": boundary_index,
        "limit": {
            "betas": list(limit),
            "capacity": closed["capacity"],
            "capacity_numeric": capacity(sol),
            "mass": closed["mass"],
            "volume": closed["volume"],
        },
        "limit_conditions": {
            # a limit with every cone parameter at zero is the round sphere
            "round_sphere_limit": all(b == 0 for b in limit),
            "cone_sum_positive": sum(abs(b) for b in limit) > 0,
        },
        "nondegeneracy_constants": list(sr.nondegeneracy),
    }
    verdicts = {
        f"|G(D_l,{j})| nonincreasing": sr.gap_decreasing,
        f"|G(D_L,{j})| < 1e-3": abs(gaps[-1]) < 1e-3,
        "every D_l subcritical": all(c == Criticality.SUBCRITICAL for c in sr.classes),
        f"index {j} is the boundary index": boundary_index == j,
        "volume defect O(eps^2)": abs(slope - 2.0) <= 0.1 and bool(np.all(defect > 0)),
        "limit capacity matches radial numerics (1e-8)": abs(capacity(sol) - closed["capacity"]) <= 1e-8,
    }
    res = ScenarioResult("boundary-sequence", report, verdicts)
    csv_path = out / "sequence.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l", "eps", f"gap_{j}", "class", "volume", "volume_defect"])
        for l, (ee, g, c, v, dv) in enumerate(zip(eps, gaps, sr.classes, vols, defect), start=1):
            w.writerow([l, repr(ee), repr(float(g)), c.value, repr(float(v)), repr(float(dv))])
    res.files += [str(csv_path), str(write_json(report, out / "sequence.json")),
                  str(plotting.plot_sequence(gaps, vols, closed["volume"], out / "sequence.svg",
                                             title=f"(beta, beta, eps_l), beta={beta:g}"))]
    return res


RUNNERS = {
    "classify": run_classify,
    "football": run_football,
    "levelset-verify": run_levelset_verify,
    "isoperimetry": run_isoperimetry,
    "boundary-sequence": run_boundary_sequence,
}


def run(s: Scenario) -> ScenarioResult:
    return RUNNERS[s.kind](s)
