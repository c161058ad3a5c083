"""Level-curve tables ``t -> (A, B, C, z, D, M, E, F1, F2)``.

Every column is normalised by ``|S^3|`` the same way the averaged
integrals are: ``B = |S(t)|/|S^3|``, ``L = |L(t)|/|S^3|`` and so on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

#: Column order of the CSV export.
CSV_COLUMNS = ("t", "A", "B", "C", "z", "D", "M", "E", "F1", "F2", "dCdA")


def mass(D, z, C):
    """Level-set mass ``2/3 D + 4/9 D z + z^4/36 - C``."""
    return 2.0 / 3.0 * D + 4.0 / 9.0 * D * z + z**4 / 36.0 - C


@dataclass
class LevelCurveTable:
    """Per-level quantities of a conformal factor, sorted by increasing ``t``.

    ``Aprime`` is the surface form ``-e^{4t} avg_L 1/|grad u|``; ``dA``,
    ``dB``, ``dz``, ``dM`` are derivatives in ``t`` of the tabulated
    columns (finite differences unless the producer supplied them).
    """

    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    z: np.ndarray
    D: np.ndarray
    M: np.ndarray
    E: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    dCdA: np.ndarray
    L: np.ndarray
    Aprime: np.ndarray
    dA: np.ndarray
    dC: np.ndarray
    dz: np.ndarray
    dM: np.ndarray
    E_formula: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def assemble(
        cls,
        t,
        A,
        B,
        z,
        D,
        F1,
        F2,
        L,
        Aprime,
        derivs: Mapping[str, np.ndarray] | None = None,
        meta: dict | None = None,
    ) -> "LevelCurveTable":
        t = np.asarray(t, dtype=float)
        order = np.argsort(t, kind="stable")
        cols = {k: np.asarray(v, dtype=float)[order] for k, v in
                dict(A=A, B=B, z=z, D=D, F1=F1, F2=F2, L=L, Aprime=Aprime).items()}
        t = t[order]
        C = np.exp(4.0 * t) * cols["B"]
        M = mass(cols["D"], cols["z"], C)
        if derivs is None:
            if t.size < 2:
                raise ValueError("finite differences need at least two levels")
            dA = np.gradient(cols["A"], t, edge_order=1)
            dB = np.gradient(cols["B"], t, edge_order=1)
            dz = np.gradient(cols["z"], t, edge_order=1)
            dM = np.gradient(M, t, edge_order=1)
        else:
            dA, dB, dz, dM = (np.asarray(derivs[k], dtype=float)[order] for k in ("dA", "dB", "dz", "dM"))
        dC = np.exp(4.0 * t) * (4.0 * cols["B"] + dB)
        with np.errstate(divide="ignore", invalid="ignore"):
            dCdA = dC / dA
        E = dM + 4.0 * C
        E_formula = (2.0 * cols["z"] * dA + 2.0 / 3.0 * dz * cols["F1"]) / 3.0
        return cls(t=t, C=C, M=M, E=E, dCdA=dCdA, dA=dA, dC=dC, dz=dz, dM=dM,
                   E_formula=E_formula, meta=dict(meta or {}), **cols)

    def __len__(self) -> int:
        return self.t.size

    def subset(self, mask) -> "LevelCurveTable":
        """Rows selected by a boolean mask or index array."""
        arrays = {k: getattr(self, k)[mask] for k in self._array_fields()}
        return replace(self, **arrays, meta=dict(self.meta))

    @classmethod
    def _array_fields(cls) -> tuple[str, ...]:
        return tuple(f for f in cls.__dataclass_fields__ if f != "meta")

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def write_csv(self, path: str | Path, residuals: Mapping[str, np.ndarray] | None = None) -> None:
        residuals = dict(residuals or {})
        header = list(CSV_COLUMNS) + [f"residual_{k}" for k in residuals]
        cols = [getattr(self, c) for c in CSV_COLUMNS] + list(residuals.values())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([repr(float(x)) for x in row])
