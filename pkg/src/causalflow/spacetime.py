"""Events, light-cone order and grid measures on 1+1 Minkowski spacetime.

Natural units with c = 1 throughout: times and lengths share one unit.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MASS_TOL = 1e-12


@dataclass(frozen=True)
class Event:
    t: float
    x: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and math.isfinite(self.x)):
            raise ValueError(f"event coordinates must be finite, got ({self.t}, {self.x})")


def causally_precedes(p: Event, q: Event) -> bool:
    """True iff q lies in the closed causal future of p."""
    dt = q.t - p.t
    return dt >= 0 and abs(q.x - p.x) <= dt


@dataclass(frozen=True)
class SpatialRegion:
    """Finite union of disjoint, sorted closed intervals on a time slice."""

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        for a, b in ivs:
            if not a <= b:
                raise ValueError(f"interval [{a}, {b}] has a > b")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if not b0 < a1:
                raise ValueError("intervals must be sorted and pairwise disjoint")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]]) -> "SpatialRegion":
        """Build a region from arbitrary (possibly overlapping) intervals."""
        return cls(_merge(intervals))

    @classmethod
    def symmetric(cls, a: float) -> "SpatialRegion":
        return cls(((-a, a),))

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __bool__(self):
        return bool(self.intervals)

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x >= a) & (x <= b)
        return inside if inside.ndim else bool(inside)

    def issubset(self, other: "SpatialRegion") -> bool:
        return all(
            any(c <= a and b <= d for c, d in other.intervals) for a, b in self.intervals
        )

    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def scaled(self, s: float) -> "SpatialRegion":
        if s <= 0:
            raise ValueError("scale factor must be positive")
        return SpatialRegion(tuple((s * a, s * b) for a, b in self.intervals))

    def to_list(self) -> list[list[float]]:
        return [[a, b] for a, b in self.intervals]


def _merge(intervals: Iterable[Sequence[float]]) -> tuple[tuple[float, float], ...]:
    ivs = sorted((float(a), float(b)) for a, b in intervals)
    out: list[list[float]] = []
    for a, b in ivs:
        if a > b:
            raise ValueError(f"interval [{a}, {b}] has a > b")
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return tuple((a, b) for a, b in out)


def future_region(K: SpatialRegion, dt: float) -> SpatialRegion:
    """Slice of the causal future J+(K) a time dt later."""
    if dt < 0:
        raise ValueError(f"time gap must be non-negative, got {dt}")
    return SpatialRegion.from_intervals((a - dt, b + dt) for a, b in K.intervals)


@dataclass(frozen=True)
class GridMeasure:
    """Probability measure with piecewise-constant density on a uniform grid.

    Cell ``i`` covers ``[x0 + i*dx, x0 + (i+1)*dx]`` and carries mass ``w[i]``.
    """

    t: float
    x0: float
    dx: float
    w: np.ndarray = field(repr=False)
    renorm_delta: float = field(default=0.0, compare=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        total = math.fsum(w)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_weights(cls, t, x0, dx, w) -> "GridMeasure":
        """Normalize raw weights, recording ``sum(w) - 1`` as ``renorm_delta``."""
        w = np.clip(np.asarray(w, dtype=float), 0.0, None)
        total = math.fsum(w)
        if not total > 0:
            raise ValueError("weights carry no mass")
        w = w / total
        return cls(t, x0, dx, w / math.fsum(w), renorm_delta=total - 1.0)

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def edges(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x0 + self.dx * (np.arange(self.n) + 0.5)

    def cumulative(self, x) -> np.ndarray:
        """Mass of (-inf, x] under linear interpolation inside cells."""
        x = np.asarray(x, dtype=float)
        cdf = np.concatenate(([0.0], np.cumsum(self.w)))
        return np.interp(x, self.edges, cdf, left=0.0, right=cdf[-1])

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x_left", "weight"])
            for xl, wi in zip(self.edges[:-1], self.w):
                wr.writerow([repr(float(xl)), repr(float(wi))])
        meta = {"t": self.t, "x0": self.x0, "dx": self.dx, "n": self.n}
        _sidecar(path).write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_csv(cls, path) -> "GridMeasure":
        path = Path(path)
        meta = json.loads(_sidecar(path).read_text())
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if len(rows) != meta["n"]:
            raise ValueError(f"{path}: sidecar says n={meta['n']}, CSV has {len(rows)} rows")
        w = np.array([float(r["weight"]) for r in rows])
        return cls(float(meta["t"]), float(meta["x0"]), float(meta["dx"]), w)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def region_mass(mu: GridMeasure, K: SpatialRegion) -> float:
    """Mass of K under mu; partially covered cells count by overlap fraction."""
    if not K:
        return 0.0
    lo = np.array([a for a, _ in K.intervals])
    hi = np.array([b for _, b in K.intervals])
    m = mu.cumulative(hi) - mu.cumulative(lo)
    return float(min(1.0, max(0.0, math.fsum(m))))
