"""Checks of classical causal flow on sampled density and flux fields.

A density rho and flux j on a uniform (t, x) grid flow causally when they
obey the continuity equation d rho/dt + d j/dx = 0 and the current is
causal, |j| <= rho (c = 1).  Equivalently the velocity v = j / rho is
bounded by the speed of light wherever rho > 0.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spacetime import GridMeasure

CAUSAL_RTOL = 1e-12
GRID_RTOL = 1e-9


@dataclass(frozen=True)
class SampledFlow:
    """rho and j sampled at times ``t`` (rows) and positions ``x`` (columns)."""

    t: np.ndarray
    x: np.ndarray
    rho: np.ndarray
    j: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        rho = np.asarray(self.rho, dtype=float)
        j = np.asarray(self.j, dtype=float)
        if rho.shape != (t.size, x.size) or j.shape != rho.shape:
            raise ValueError(f"fields must have shape ({t.size}, {x.size})")
        for name, arr in (("t", t), ("x", x), ("rho", rho), ("j", j)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite values")
        if np.any(rho < 0):
            raise ValueError("density must be non-negative")
        for name, arr in (("t", t), ("x", x)):
            if arr.size > 1 and np.any(np.diff(arr) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        for name, arr in (("t", t), ("x", x)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        rho.setflags(write=False)
        j.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "j", j)

    @property
    def dt(self) -> float:
        return _spacing(self.t, "t")

    @property
    def dx(self) -> float:
        return _spacing(self.x, "x")

    def slice_measure(self, i: int) -> GridMeasure:
        """Density at ``t[i]`` as a cell-centered grid measure."""
        dx = self.dx
        return GridMeasure.from_weights(self.t[i], self.x[0] - 0.5 * dx, dx, self.rho[i] * dx)

    @classmethod
    def from_csv(cls, path) -> "SampledFlow":
        """Read long-format rows ``t,x,rho,j`` covering a full rectangular grid."""
        with Path(path).open(newline="") as fh:
            rd = csv.DictReader(fh)
            missing = {"t", "x", "rho", "j"} - set(rd.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            rows = [(float(r["t"]), float(r["x"]), float(r["rho"]), float(r["j"])) for r in rd]
        if not rows:
            raise ValueError(f"{path}: no data rows")
        arr = np.array(rows)
        t, ti = np.unique(arr[:, 0], return_inverse=True)
        x, xi = np.unique(arr[:, 1], return_inverse=True)
        if len(rows) != t.size * x.size:
            raise ValueError(f"{path}: rows do not form a full (t, x) grid")
        rho = np.full((t.size, x.size), np.nan)
        j = np.full((t.size, x.size), np.nan)
        rho[ti, xi] = arr[:, 2]
        j[ti, xi] = arr[:, 3]
        if np.isnan(rho).any():
            raise ValueError(f"{path}: duplicate (t, x) rows")
        return cls(t, x, rho, j)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "x", "rho", "j"])
            for i, ti in enumerate(self.t):
                for k, xk in enumerate(self.x):
                    wr.writerow([repr(float(ti)), repr(float(xk)), repr(float(self.rho[i, k])), repr(float(self.j[i, k]))])


def _spacing(arr: np.ndarray, name: str) -> float:
    if arr.size < 2:
        raise ValueError(f"need at least two {name} samples")
    d = np.diff(arr)
    if np.max(np.abs(d - d[0])) > GRID_RTOL * abs(d[0]):
        raise ValueError(f"{name} samples must be uniformly spaced")
    return float(d[0])


def causal_current_check(flow: SampledFlow) -> tuple[bool, float]:
    """Whether |j| <= rho everywhere, and the worst ratio |j| / rho.

    A sample with rho = 0 but j != 0 is a non-causal datum (ratio inf).
    """
    rho, j = flow.rho, np.abs(flow.j)
    pos = rho > 0
    if np.any(j[~pos] > 0):
        return False, float("inf")
    ratio = float(np.max(j[pos] / rho[pos])) if pos.any() else 0.0
    return ratio <= 1 + CAUSAL_RTOL, ratio


def continuity_residual_check(flow: SampledFlow) -> float:
    """max |d rho/dt + d j/dx| by central differences over interior samples."""
    dt, dx = flow.dt, flow.dx
    if flow.t.size < 3 or flow.x.size < 3:
        raise ValueError("need at least three samples along t and x")
    drho = (flow.rho[2:, 1:-1] - flow.rho[:-2, 1:-1]) / (2 * dt)
    dj = (flow.j[1:-1, 2:] - flow.j[1:-1, :-2]) / (2 * dx)
    return float(np.max(np.abs(drho + dj)))


def velocity_bound_check(flow: SampledFlow) -> tuple[bool, float]:
    """Whether the velocity j / rho stays within light speed, and its maximum.

    The velocity is set to 0 where rho = 0.
    """
    pos = flow.rho > 0
    v = np.zeros_like(flow.rho)
    v[pos] = flow.j[pos] / flow.rho[pos]
    vmax = float(np.max(np.abs(v)))
    return vmax <= 1 + CAUSAL_RTOL, vmax
