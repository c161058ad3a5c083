from __future__ import annotations

from sigma2lab import plotting
from sigma2lab.radial import build_football, radial_levelsets


def test_svg_is_deterministic(tmp_path):
    t = radial_levelsets(build_football(-0.5))
    a = plotting.plot_levelset(t, tmp_path / "a.svg", title="x")
    b = plotting.plot_levelset(t, tmp_path / "b.svg", title="x")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().lstrip().startswith("<?xml")


def test_other_figures(tmp_path):
    p = plotting.plot_sequence([-1e-2, -5e-3, -2e-3], [0.90, 0.91, 0.915], 0.9167, tmp_path / "s.svg")
    q = plotting.plot_isoperimetry([0.05, 0.1], [0.04, 0.08], [3e-4, 1.4e-3], tmp_path / "i.svg")
    assert p.stat().st_size > 0 and q.stat().st_size > 0
