"""Quantifiers of acausal probability flow for freely evolving wave packets.

For a region K on the initial slice the deficiency

    M(t, K) = max(0, mu_0(K) - mu_t(J+(K)))

is the mass that provably left the causal future of K.  For an interval
[a, b] it splits as ``U(b) - V(a)`` with

    U(b) = F_0(b) - F_t(b + t),    V(a) = F_0(a) - F_t(a - t),

where F_s is the cumulative mass at time s.  The packets carry band-limited
densities, so F_s is exact on every shifted copy of the lattice and one FFT
per shift gives M for all lattice intervals at a given t.  Maximizers are
then refined off the lattice by golden-section search on the exact
pointwise cumulative.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import ConfigError
from .packets import Dispersion, Evolution, Grid, StateFamily, WavePacket, choose_grid, density
from .spacetime import GridMeasure, SpatialRegion, future_region
from .transport import DiscreteMeasure, max_causal_mass

EPSILON_M = 1e-11
T_STEP = 0.01
A_PER_DECADE = 200
A_RANGE = (1e-3, 1e2)
A_XTOL = 5e-4
EDGE_FRACTION = 0.45
ATOM_MIN_MASS = 1e-16
# deficiencies are differences of O(1) masses and carry ~1e-15 absolute
# round-off, so relative comparisons stop below this size
SCALING_FLOOR = 1e-8


@dataclass(frozen=True)
class NoiseFloor:
    """Smallest deficiency treated as a real violation.

    ``quadrature_error`` is the summed error estimate of the packets behind
    the two region masses; the floor is kept at least ten times above it.
    """

    epsilon_M: float = EPSILON_M
    quadrature_error: float = 0.0

    def __post_init__(self):
        if not self.epsilon_M > 0:
            raise ValueError("epsilon_M must be positive")
        if self.epsilon_M < 10 * self.quadrature_error:
            raise ValueError(
                f"floor {self.epsilon_M:.3g} is not 10x above the quadrature error "
                f"{self.quadrature_error:.3g}"
            )

    @classmethod
    def for_packets(cls, *packets: WavePacket, base: float = EPSILON_M) -> "NoiseFloor":
        q = sum(pk.quadrature_error() for pk in packets)
        return cls(max(base, 10 * q), q)


# -- lattice scans -----------------------------------------------------------


def _edges(p0: WavePacket, pt: WavePacket, t: float):
    """U and V (see module docstring) on the lattice, plus the usable mask."""
    g = pt.grid
    F0 = p0.cumulative_on_lattice(0.0)
    U = F0 - pt.cumulative_on_lattice(t)
    V = F0 - pt.cumulative_on_lattice(-t)
    usable = np.abs(g.x) + t <= EDGE_FRACTION * g.length
    return U, V, usable


def symmetric_profile(p0: WavePacket, pt: WavePacket, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Unclamped ``mu_0([-a, a]) - mu_t([-a-t, a+t])`` for every lattice half-width a > 0."""
    U, V, usable = _edges(p0, pt, t)
    n = pt.grid.n
    pos = np.arange(n // 2 + 1, n)
    pos = pos[usable[pos]]
    return pt.grid.x[pos], U[pos] - V[n - pos]


def interval_profile(p0: WavePacket, pt: WavePacket, t: float) -> tuple[float, float, float]:
    """Best lattice interval [a, b]: returns (deficiency, a, b), unclamped.

    Uses the split ``U(b) - V(a)`` with a running minimum of V, so all
    O(n^2) intervals are covered in linear time.
    """
    U, V, usable = _edges(p0, pt, t)
    idx = np.flatnonzero(usable)
    Vs = V[idx]
    arg = _running_argmin(Vs)
    gain = U[idx] - Vs[arg]
    k = int(np.argmax(gain))
    x = pt.grid.x
    return float(gain[k]), float(x[idx[arg[k]]]), float(x[idx[k]])


def _running_argmin(v: np.ndarray) -> np.ndarray:
    """Index of the minimum of ``v[:k + 1]`` for every k (latest on ties)."""
    hit = v == np.minimum.accumulate(v)
    return np.maximum.accumulate(np.where(hit, np.arange(v.size), 0))


def _golden(f, lo: float, mid: float, hi: float) -> tuple[float, float]:
    """Maximize f near mid, bracketed by lo < mid < hi."""
    fm = f(mid)
    if not (f(lo) < fm and f(hi) < fm):
        return mid, fm
    res = optimize.minimize_scalar(
        lambda s: -f(s), bracket=(lo, mid, hi), method="golden", options={"xtol": A_XTOL}
    )
    if -res.fun < fm:
        return mid, fm
    return float(res.x), float(-res.fun)


def _refine_symmetric(p0: WavePacket, pt: WavePacket, t: float, a: np.ndarray, D: np.ndarray):
    k = int(np.argmax(D))
    if D[k] <= 0 or k == 0 or k == D.size - 1:
        return float(a[k]), float(D[k])

    def deficit(s):
        F0 = p0.cumulative([-s, s])
        Ft = pt.cumulative([-s - t, s + t])
        return float((F0[1] - F0[0]) - (Ft[1] - Ft[0]))

    return _golden(deficit, float(a[k - 1]), float(a[k]), float(a[k + 1]))


def _refine_interval(p0: WavePacket, pt: WavePacket, t: float, a: float, b: float):
    dx = pt.grid.dx

    def U(s):
        return float(p0.cumulative([s])[0] - pt.cumulative([s + t])[0])

    def negV(s):
        return float(pt.cumulative([s - t])[0] - p0.cumulative([s])[0])

    b2, u = _golden(U, b - dx, b, b + dx)
    a2, nv = _golden(negV, a - dx, a, a + dx)
    if a2 > b2:
        return a, b, U(b) + negV(a)
    return a2, b2, u + nv


# -- single-time quantifiers -------------------------------------------------


def _evolution(family, disp, t, extent=0.0, grid=None) -> Evolution:
    return Evolution(family, disp, max(t, 1e-12), grid=grid, extent=extent)


def m_of_region(
    family: StateFamily,
    disp: Dispersion,
    t: float,
    K: SpatialRegion,
    grid: Grid | None = None,
) -> float:
    """``max(0, mu_0(K) - mu_t(J+(K)))`` for a finite union of intervals K.

    The initial mass is taken in closed form where the family has one.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    if not K or t == 0:
        return 0.0
    return max(0.0, _signed_deficiency(family, disp, t, K, grid))


def _signed_deficiency(family, disp, t, K, grid=None) -> float:
    reach = max(abs(v) for iv in K.intervals for v in iv)
    ev = _evolution(family, disp, t, extent=reach, grid=grid)
    mu0 = 0.0
    for a, b in K.intervals:
        closed = family.initial_interval_mass(a, b)
        mu0 += ev(0.0).interval_mass(a, b) if closed is None else closed
    pt = ev(t)
    mut = sum(pt.interval_mass(a, b) for a, b in future_region(K, t).intervals)
    return mu0 - mut


def _m_tilde_at(ev: Evolution, t: float, symmetric: bool, refine: bool = True):
    p0, pt = ev(0.0), ev(t)
    if symmetric:
        a, D = symmetric_profile(p0, pt, t)
        k = int(np.argmax(D))
        a_M, val = float(a[k]), float(D[k])
        if refine:
            a_r, v_r = _refine_symmetric(p0, pt, t, a, D)
            # the direct sum and the FFT differ at round-off; keep the larger
            if v_r > val:
                a_M, val = a_r, v_r
        return max(0.0, min(1.0, val)), a_M
    val, a, b = interval_profile(p0, pt, t)
    if refine and val > 0:
        a, b, val = _refine_interval(p0, pt, t, a, b)
    return max(0.0, min(1.0, val)), (a, b)


def m_tilde(
    family: StateFamily,
    disp: Dispersion,
    t: float,
    symmetric: bool | None = None,
    grid: Grid | None = None,
):
    """Largest deficiency over intervals at time t, and its maximizer.

    Parameters
    ----------
    symmetric : bool, optional
        Scan ``[-a, a]`` (returns ``a_M`` as a float) or all intervals
        ``[a, b]`` (returns the pair).  Defaults to symmetric unless the
        family is boosted.

    Returns
    -------
    (float, float or tuple)
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    if symmetric is None:
        symmetric = family.boost == 0
    if t == 0:
        return 0.0, (0.0 if symmetric else (0.0, 0.0))
    return _m_tilde_at(_evolution(family, disp, t, grid=grid), t, symmetric)


# -- sweeps ------------------------------------------------------------------


def default_t_grid(disp: Dispersion, t_max: float | None = None, step: float = T_STEP) -> np.ndarray:
    if t_max is None:
        t_max = 3.0 / disp.m if disp.kind != "massless" else 3.0
    n = int(round(t_max / step))
    return np.round(np.arange(1, n + 1) * step, 12)


def default_a_grid(grid: Grid, t_max: float) -> np.ndarray:
    """Log-spaced half-widths snapped to the lattice."""
    lo, hi = A_RANGE
    target = np.logspace(math.log10(lo), math.log10(hi), int(A_PER_DECADE * math.log10(hi / lo)) + 1)
    k = np.unique(np.maximum(1, np.round(target / grid.dx).astype(np.int64)))
    a = k * grid.dx
    return a[a + t_max <= EDGE_FRACTION * grid.length]


def timescales(t: np.ndarray, M: np.ndarray, eps: float) -> tuple[float, float, float]:
    """Onset t0, peak t1 and restoration t2 of a sampled curve M(t).

    t0 is the first sample above ``eps``; t2 the first one after the peak
    back at or below it (nan if none within the horizon, or no onset).
    """
    t = np.asarray(t)
    M = np.asarray(M)
    above = np.flatnonzero(M > eps)
    if above.size == 0:
        return math.nan, math.nan, math.nan
    k1 = int(np.argmax(M))
    after = np.flatnonzero(M[k1:] <= eps)
    t2 = float(t[k1 + after[0]]) if after.size else math.nan
    return float(t[above[0]]), float(t[k1]), t2


@dataclass
class ViolationProfile:
    """M(t, [-a, a]) sampled over a (t, a) table plus the derived timescales.

    ``m_tilde[i]`` is the maximum over all half-widths at ``t[i]`` (lattice
    plus refinement), so it bounds every sample in row i.  For boosted
    families it is the maximum over all intervals and ``a_max`` holds the
    interval ends.
    """

    family: StateFamily
    dispersion: Dispersion
    t: np.ndarray
    a: np.ndarray
    samples: np.ndarray = field(repr=False)
    m_tilde: np.ndarray = field(repr=False)
    a_max: list = field(repr=False)
    noise: NoiseFloor
    m_star: float
    t1_star: float
    a_M: float | tuple
    t0: np.ndarray = field(repr=False)
    t1: np.ndarray = field(repr=False)
    t2: np.ndarray = field(repr=False)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.size and (self.samples.min() < 0 or self.samples.max() > 1):
            raise ValueError("deficiencies must lie in [0, 1]")
        if self.samples.size and np.any(self.samples.max(axis=1) > self.m_tilde + 1e-15):
            raise ValueError("a sample exceeds the row maximum")

    def curve_timescales(self) -> tuple[float, float, float]:
        """(t0, t1, t2) of the row maxima M~(t)."""
        return timescales(self.t, self.m_tilde, self.noise.epsilon_M)

    def summary(self) -> dict:
        t0, t1, t2 = self.curve_timescales()
        return {
            "family": self.family.to_dict(),
            "dispersion": self.dispersion.to_dict(),
            "m_star": self.m_star,
            "t1_star": self.t1_star,
            "a_M": list(self.a_M) if isinstance(self.a_M, tuple) else self.a_M,
            "t0": _nan_none(t0),
            "t1": _nan_none(t1),
            "t2": _nan_none(t2),
            "epsilon_M": self.noise.epsilon_M,
            **self.diagnostics,
        }

    def to_csv(self, path) -> None:
        """Long-format table with columns ``t,a,M``."""
        with Path(path).open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "a", "M"])
            for i, ti in enumerate(self.t):
                for aj, mij in zip(self.a, self.samples[i]):
                    wr.writerow([repr(float(ti)), repr(float(aj)), repr(float(mij))])

    def curve_to_csv(self, path) -> None:
        """Row maxima with columns ``t,M_tilde,a_M``."""
        with Path(path).open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "M_tilde", "a_M"])
            for ti, mi, ai in zip(self.t, self.m_tilde, self.a_max):
                ai = ai if not isinstance(ai, tuple) else f"{ai[0]!r}:{ai[1]!r}"
                wr.writerow([repr(float(ti)), repr(float(mi)), ai if isinstance(ai, str) else repr(float(ai))])


def _nan_none(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def _sweep_rows(args):
    family, disp, grid, tail_tol, ts, a_idx, symmetric, refine = args
    ev = Evolution(family, disp, max(ts), grid=grid, tail_tol=tail_tol)
    p0 = ev(0.0)
    rows = []
    for t in ts:
        pt = ev(t)
        _, D = symmetric_profile(p0, pt, t)
        val, am = _m_tilde_at(ev, t, symmetric, refine)
        sample = np.clip(D[a_idx], 0.0, 1.0) if a_idx.size else np.empty(0)
        rows.append((val, am, sample, pt.quadrature_error()))
    return rows


def worker_count(requested: int | None = None) -> int:
    """Pool size: the request, capped by CAUSALFLOW_MAX_WORKERS and the CPU count."""
    cap = os.environ.get("CAUSALFLOW_MAX_WORKERS")
    n = requested if requested else 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, min(n, os.cpu_count() or 1))


def sweep(
    family: StateFamily,
    disp: Dispersion,
    t_grid=None,
    a_grid=None,
    symmetric: bool | None = None,
    refine_t: bool = True,
    refine_a: bool = True,
    noise: NoiseFloor | None = None,
    workers: int = 1,
    grid: Grid | None = None,
    tail_tol: float | None = None,
) -> ViolationProfile:
    """Fill the (t, a) table of deficiencies and extract the timescales.

    Parameters
    ----------
    t_grid : array_like, optional
        Sample times, default 0.01 steps over (0, 3/m].
    a_grid : array_like, optional
        Half-widths for the stored table; they are snapped to the lattice.
        Row maxima always scan every lattice half-width.
    refine_t : bool
        Golden-section refinement of the global peak time between the
        neighbouring samples.
    workers : int
        Processes for the time rows.
    grid, tail_tol : optional
        Override the automatically chosen lattice and tail budget.
    """
    t = default_t_grid(disp) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ConfigError("t grid must be positive and strictly increasing")
    if symmetric is None:
        symmetric = family.boost == 0
    t_max = float(t[-1])
    ev = Evolution(family, disp, t_max, grid=grid, tail_tol=tail_tol)
    grid = ev.grid
    if a_grid is None:
        a = default_a_grid(grid, t_max)
    else:
        a = np.unique(np.maximum(1, np.round(np.asarray(a_grid, float) / grid.dx))) * grid.dx
        if a.size and a[-1] + t_max > EDGE_FRACTION * grid.length:
            raise ConfigError("a grid reaches beyond the computational box")
    # index of each half-width in symmetric_profile's output (lattice k -> k - 1)
    a_idx = np.round(a / grid.dx).astype(np.int64) - 1

    nw = worker_count(workers)
    chunks = [c for c in np.array_split(t, min(nw * 4, t.size)) if c.size]
    jobs = [
        (family, disp, grid, ev.tail_tol, list(map(float, c)), a_idx, symmetric, refine_a)
        for c in chunks
    ]
    if nw > 1:
        with ProcessPoolExecutor(nw) as pool:
            parts = list(pool.map(_sweep_rows, jobs))
    else:
        parts = [_sweep_rows(j) for j in jobs]
    rows = [r for part in parts for r in part]
    m_t = np.array([r[0] for r in rows])
    a_max = [r[1] for r in rows]
    samples = np.array([r[2] for r in rows]).reshape(t.size, a.size)
    qerr = max(r[3] for r in rows) + ev(0.0).quadrature_error()
    if noise is None:
        noise = NoiseFloor(max(EPSILON_M, 10 * qerr), qerr)

    k = int(np.argmax(m_t))
    m_star, t1_star, a_M = float(m_t[k]), float(t[k]), a_max[k]
    if refine_t and m_star > noise.epsilon_M and 0 < k < t.size - 1:
        best = {}

        def peak(s):
            v, am = _m_tilde_at(ev, s, symmetric, refine_a)
            best[s] = am
            return v

        t1_star, m_star = _golden(peak, float(t[k - 1]), float(t[k]), float(t[k + 1]))
        a_M = best.get(t1_star, a_M)

    t0s, t1s, t2s = [], [], []
    for j in range(a.size):
        s0, s1, s2 = timescales(t, samples[:, j], noise.epsilon_M)
        t0s.append(s0)
        t1s.append(s1)
        t2s.append(s2)
    p0 = ev(0.0)
    diag = {
        "grid_n": grid.n,
        "grid_dx": grid.dx,
        "renorm_delta_0": p0.renorm_delta,
        "tail_mass_max": qerr,
    }
    return ViolationProfile(
        family, disp, t, a, samples, m_t, a_max, noise, m_star, t1_star, a_M,
        np.array(t0s), np.array(t1s), np.array(t2s), diag,
    )


# -- other quantifiers -------------------------------------------------------


def outside_probability(family: StateFamily, disp: Dispersion, t: float, grid: Grid | None = None) -> float:
    """``1 - mu_t(J+(supp mu_0))`` for a compactly supported initial state."""
    if not family.compact_support:
        raise ConfigError(
            f"outside probability needs compact initial support; {family.kind} has none"
        )
    if t < 0:
        raise ValueError("time must be non-negative")
    if t == 0:
        return 0.0
    half = family.d * family.scale
    ev = _evolution(family, disp, t, extent=half, grid=grid)
    return max(0.0, 1.0 - ev(t).interval_mass(-half - t, half + t))


def cell_measure(packet: WavePacket) -> GridMeasure:
    """Exact masses of the cells between consecutive lattice points.

    Cell edges sit on the lattice, so every lattice interval [-a, a] is a
    union of whole cells.
    """
    g = packet.grid
    F = packet.cumulative_on_lattice(0.0)
    return GridMeasure.from_weights(packet.t, g.x[0], g.dx, np.diff(F))


def slice_measures(
    family: StateFamily, disp: Dispersion, t: float, grid: Grid | None = None
) -> tuple[GridMeasure, GridMeasure]:
    """Cell measures of the packet at times 0 and t on a common lattice."""
    ev = _evolution(family, disp, t, grid=grid)
    return cell_measure(ev(0.0)), cell_measure(ev(t))


def n_tilde_packet(
    family: StateFamily,
    disp: Dispersion,
    t: float,
    grid: Grid | None = None,
    slack: float = 0.0,
    min_mass: float = ATOM_MIN_MASS,
) -> float:
    """Smallest acausally moved mass over couplings of the discretized slices.

    Cells carry their exact masses and become atoms at their centres.  With
    no slack, the neighbourhood of the cells inside a lattice interval K
    stays inside J+(K), so the result bounds ``M(t, K)`` from above for
    every lattice interval (weak duality holds without discretization
    error).  A positive ``slack`` widens the cone instead and errs the
    other way.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    mu0, mut = slice_measures(family, disp, t, grid)
    return measures_n_tilde(mu0, mut, slack, min_mass)


def measures_n_tilde(mu0: GridMeasure, mut: GridMeasure, slack: float, min_mass: float = ATOM_MIN_MASS) -> float:
    a = DiscreteMeasure.from_grid(mu0, min_mass)
    b = DiscreteMeasure.from_grid(mut, min_mass)
    return max_causal_mass(a, b, slack=slack).n_tilde


def hegerfeldt_witness(
    family: StateFamily,
    disp: Dispersion,
    t: float,
    eps: float = EPSILON_M,
    grid: Grid | None = None,
) -> tuple[float, float] | None:
    """A ball [c - r, c + r] gaining more mass by time t than its past cone held.

    Scans every lattice interval for ``mu_t(B) - mu_0(B widened by t)`` and
    returns ``(c, r)`` of the best one when it exceeds ``eps``.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    if t == 0:
        return None
    ev = _evolution(family, disp, t, grid=grid)
    # reversed roles: the target slice gains, the widened source loses
    return _interval_gain_witness(ev(t), ev(0.0), t, eps)


def _interval_gain_witness(pt, p0, t, eps):
    g = pt.grid
    Ft = pt.cumulative_on_lattice(0.0)
    U = Ft - p0.cumulative_on_lattice(t)
    V = Ft - p0.cumulative_on_lattice(-t)
    usable = np.flatnonzero(np.abs(g.x) + t <= EDGE_FRACTION * g.length)
    Vs = V[usable]
    arg = _running_argmin(Vs)
    gain = U[usable] - Vs[arg]
    k = int(np.argmax(gain))
    if gain[k] <= eps:
        return None
    lo, hi = g.x[usable[arg[k]]], g.x[usable[k]]
    return float(0.5 * (lo + hi)), float(0.5 * (hi - lo))


def grid_witness(mu0: GridMeasure, mut: GridMeasure, t: float, eps: float, slack: float = 0.0):
    """Ball witness on two grid measures with the same lattice.

    Balls are unions of whole cells of ``mut``; the past cone is widened by
    ``slack`` so cell discretization cannot fabricate a witness.
    """
    if mu0.dx != mut.dx or mu0.n != mut.n:
        raise ValueError("measures must share a lattice")
    e = mut.edges
    Ft = np.concatenate(([0.0], np.cumsum(mut.w)))
    r = t + slack
    U = Ft - mu0.cumulative(e + r)
    V = Ft - mu0.cumulative(e - r)
    run_arg = _running_argmin(V)
    gain = U - V[run_arg]
    k = int(np.argmax(gain))
    if gain[k] <= eps:
        return None
    lo, hi = e[run_arg[k]], e[k]
    return float(0.5 * (lo + hi)), float(0.5 * (hi - lo))


def scaling_check(
    family: StateFamily, m: float, t: float, region: SpatialRegion
) -> tuple[float, float, float]:
    """Compare the deficiency at mass m with its rescaled unit-mass twin.

    The left side evolves ``family`` with mass m to time t over ``region``;
    the right side evolves ``psi0(x / m)`` with unit mass to time ``m t``
    over the region scaled by m.  Each side picks its own grid.

    Returns
    -------
    (relative difference, left, right)
        Signed deficiencies (before clamping), so that the comparison is
        also meaningful where M itself vanishes.  The difference is taken
        relative to ``max(|left|, |right|, SCALING_FLOOR)``.
    """
    if not m > 0:
        raise ValueError("mass must be positive")
    if t < 0:
        raise ValueError("time must be non-negative")
    left = _signed_deficiency(family, Dispersion.relativistic(m), t, region)
    if m == 1:
        return 0.0, left, left
    right = _signed_deficiency(family.rescaled(m), Dispersion.relativistic(1.0), m * t, region.scaled(m))
    denom = max(abs(left), abs(right), SCALING_FLOOR)
    return abs(left - right) / denom, left, right
