"""Causal precedence between discrete measures on two time slices.

``max_causal_mass`` solves the bipartite max-flow

    source -> atoms(mu) -> causal edges -> atoms(nu) -> sink

with masses scaled to integers, so the flow is exact.  In 1+1 dimensions an
atom at ``x`` reaches exactly the target atoms in ``[x - r, x + r]``; these
windows are contiguous and move monotonically with ``x``, so augmenting along
the leftmost free target is optimal and runs in linear time.  The minimum cut
is read off the residual network and yields the Hall-deficiency witness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .spacetime import Event, GridMeasure, SpatialRegion, causally_precedes, future_region

MASS_TOL = 1e-12
CAUSAL_TOL = 1e-9
MASS_SCALE = 10**12
BRUTE_FORCE_MAX_ATOMS = 20


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely many point masses on the slice at time ``t``.

    Atoms are sorted on construction; duplicate positions are rejected.
    """

    t: float
    x: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        m = np.asarray(self.m, dtype=float).ravel()
        if x.shape != m.shape or x.size == 0:
            raise ValueError("positions and masses must be non-empty and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(m))):
            raise ValueError("atoms must be finite")
        if np.any(m <= 0):
            raise ValueError("atom masses must be positive")
        order = np.argsort(x, kind="stable")
        x, m = x[order], m[order]
        if np.any(np.diff(x) <= 0):
            raise ValueError("atom positions must be distinct")
        total = math.fsum(m)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {total!r}, not 1")
        x.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "m", m)

    @classmethod
    def from_atoms(cls, t, atoms) -> "DiscreteMeasure":
        atoms = list(atoms)
        return cls(t, [a[0] for a in atoms], [a[1] for a in atoms])

    @classmethod
    def from_grid(cls, mu: GridMeasure, min_mass: float = 0.0) -> "DiscreteMeasure":
        """Cell-center atoms of a grid measure; cells at or below ``min_mass`` are dropped."""
        keep = mu.w > min_mass
        w = mu.w[keep]
        return cls(mu.t, mu.centers[keep], w / math.fsum(w))

    def __len__(self):
        return self.x.size

    def mass(self, K: SpatialRegion) -> float:
        return math.fsum(self.m[K.contains(self.x)])


@dataclass
class CouplingResult:
    causal_mass: float
    n_tilde: float
    coupling: sparse.csr_matrix = field(repr=False)
    witness: np.ndarray
    radius: float

    def to_dict(self, mu: DiscreteMeasure | None = None) -> dict:
        out = {
            "causal_mass": self.causal_mass,
            "n_tilde": self.n_tilde,
            "witness": self.witness.tolist(),
        }
        if mu is not None:
            out["witness_x"] = mu.x[self.witness].tolist()
        return out


def _check_pair(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    if nu.t < mu.t:
        raise ValueError(f"target time {nu.t} precedes source time {mu.t}")
    return nu.t - mu.t


def _integer_masses(m: np.ndarray, scale: int) -> list[int]:
    q = [int(round(v * scale)) for v in m]
    q[int(np.argmax(m))] += scale - sum(q)
    if min(q) < 0:
        raise ValueError("mass too small to represent at the integer scale")
    return q


def _windows(x: np.ndarray, y: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Index ranges [lo, hi) of targets y with |y - x_i| <= r."""
    lo = np.searchsorted(y, x - r, side="left")
    hi = np.searchsorted(y, x + r, side="right")
    # searchsorted works on x -/+ r; align the edges with the |y - x| <= r test
    for i in range(x.size):
        while lo[i] > 0 and abs(y[lo[i] - 1] - x[i]) <= r:
            lo[i] -= 1
        while lo[i] < hi[i] and abs(y[lo[i]] - x[i]) > r:
            lo[i] += 1
        while hi[i] < y.size and abs(y[hi[i]] - x[i]) <= r:
            hi[i] += 1
        while hi[i] > lo[i] and abs(y[hi[i] - 1] - x[i]) > r:
            hi[i] -= 1
    return lo, hi


def max_causal_mass(
    mu: DiscreteMeasure, nu: DiscreteMeasure, slack: float = 0.0, scale: int = MASS_SCALE
) -> CouplingResult:
    """Largest mass an admissible coupling of ``mu`` and ``nu`` puts on causal pairs.

    Parameters
    ----------
    mu, nu : DiscreteMeasure
        Source and target slices, ``nu.t >= mu.t``.
    slack : float
        Extra cone radius; use about one cell width when the atoms stand for
        grid cells so that discretization cannot fake a violation.
    scale : int
        Integer mass resolution of the flow.

    Returns
    -------
    CouplingResult
        ``n_tilde`` is the mass the best coupling must move acausally and
        equals the deficiency ``mu(S) - nu(J+(S))`` of the returned witness.
    """
    if slack < 0:
        raise ValueError("slack must be non-negative")
    radius = _check_pair(mu, nu) + slack
    a = _integer_masses(mu.m, scale)
    b = _integer_masses(nu.m, scale)
    lo, hi = _windows(mu.x, nu.x, radius)
    n, k = len(mu), len(nu)

    cap = list(b)
    out = [0] * n
    rows: list[int] = []
    cols: list[int] = []
    vals: list[int] = []
    front = 0
    for i in range(n):
        need = a[i]
        j = max(front, int(lo[i]))
        h = int(hi[i])
        while need and j < h:
            take = min(need, cap[j])
            if take:
                rows.append(i)
                cols.append(j)
                vals.append(take)
                cap[j] -= take
                need -= take
            if cap[j] == 0:
                j += 1
        front = j
        out[i] = a[i] - need
    flow = sum(out)

    witness = _min_cut_sources(a, out, cap, lo, hi, rows, cols, k)

    # Route the leftover mass over non-causal pairs so the marginals are exact.
    src_left = [(i, a[i] - out[i]) for i in range(n) if a[i] > out[i]]
    dst_left = [(j, cap[j]) for j in range(k) if cap[j]]
    si = di = 0
    while si < len(src_left) and di < len(dst_left):
        i, ra = src_left[si]
        j, rb = dst_left[di]
        take = min(ra, rb)
        rows.append(i)
        cols.append(j)
        vals.append(take)
        src_left[si] = (i, ra - take)
        dst_left[di] = (j, rb - take)
        if ra == take:
            si += 1
        if rb == take:
            di += 1
    omega = sparse.coo_matrix(
        (np.array(vals, dtype=float) / scale, (rows, cols)), shape=(n, k)
    ).tocsr()

    cover = np.zeros(k + 1, dtype=np.int64)
    np.add.at(cover, lo[witness], 1)
    np.add.at(cover, hi[witness], -1)
    reach = np.cumsum(cover[:k]) > 0
    deficiency = math.fsum(mu.m[witness]) - math.fsum(nu.m[reach])
    flow_gap = (scale - flow) / scale
    if abs(deficiency - flow_gap) > CAUSAL_TOL:
        raise RuntimeError(
            f"min-cut deficiency {deficiency} disagrees with flow shortfall {flow_gap}"
        )
    n_tilde = max(0.0, deficiency)
    return CouplingResult(1.0 - n_tilde, n_tilde, omega, witness, radius)


def _min_cut_sources(a, out, cap, lo, hi, rows, cols, k) -> np.ndarray:
    """Source atoms on the source side of the minimum cut (residual reachability)."""
    n = len(a)
    back: list[list[int]] = [[] for _ in range(k)]
    for i, j in zip(rows, cols):
        back[j].append(i)
    # next_free[j]: smallest unvisited target index >= j (path-compressed)
    next_free = list(range(k + 1))

    def find(j):
        root = j
        while next_free[root] != root:
            root = next_free[root]
        while next_free[j] != root:
            next_free[j], j = root, next_free[j]
        return root

    seen_src = [False] * n
    stack = [i for i in range(n) if out[i] < a[i]]
    for i in stack:
        seen_src[i] = True
    while stack:
        i = stack.pop()
        j = find(int(lo[i]))
        while j < hi[i]:
            next_free[j] = j + 1
            if cap[j] > 0:
                raise RuntimeError("augmenting path left in residual network")
            for i2 in back[j]:
                if not seen_src[i2]:
                    seen_src[i2] = True
                    stack.append(i2)
            j = find(j + 1)
    return np.flatnonzero(seen_src)


def check_precedence_compact(
    mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = CAUSAL_TOL, slack: float = 0.0
) -> tuple[bool, float, SpatialRegion]:
    """Worst compact-set deficiency ``mu(K) - nu(J+(K))`` and the verdict ``<= tol``.

    The maximizing K is the point set of the minimum-cut witness atoms; its
    deficiency is re-evaluated directly on the region as a cross-check.
    """
    res = max_causal_mass(mu, nu, slack=slack)
    K = SpatialRegion.from_intervals((x, x) for x in mu.x[res.witness])
    worst = mu.mass(K) - nu.mass(future_region(K, res.radius))
    if abs(max(0.0, worst) - res.n_tilde) > CAUSAL_TOL:
        raise RuntimeError("witness region deficiency disagrees with the flow value")
    worst = max(0.0, worst)
    return worst <= tol, worst, K


def brute_force_deficiency(mu: DiscreteMeasure, nu: DiscreteMeasure, slack: float = 0.0) -> float:
    """max(0, max_S mu(S) - nu(J+(S))) by enumerating every subset of source atoms."""
    n = len(mu)
    if n > BRUTE_FORCE_MAX_ATOMS:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_ATOMS} source atoms, got {n}")
    _check_pair(mu, nu)
    # cone test through the event order, shifting the target back by the slack
    adj = np.array(
        [
            [causally_precedes(Event(mu.t, xi), Event(nu.t + slack, yj)) for yj in nu.x]
            for xi in mu.x
        ],
        dtype=np.int64,
    )
    best = 0.0
    bit = 1 << np.arange(n)
    for start in range(1, 1 << n, 1 << 16):
        codes = np.arange(start, min(start + (1 << 16), 1 << n))
        sel = (codes[:, None] & bit) != 0
        reached = (sel.astype(np.int64) @ adj) > 0
        gap = sel @ mu.m - reached @ nu.m
        best = max(best, float(gap.max()))
    return best


def support_condition(mu: DiscreteMeasure, nu: DiscreteMeasure) -> bool:
    """Whether every target atom lies in the causal future of some source atom.

    Necessary for precedence when mu is compactly supported, never sufficient.
    """
    _check_pair(mu, nu)
    return all(
        any(causally_precedes(Event(mu.t, xi), Event(nu.t, yj)) for xi in mu.x) for yj in nu.x
    )
