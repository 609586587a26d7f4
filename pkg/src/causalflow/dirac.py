"""Free Dirac evolution in 1+1 dimensions and checks of its causal flow.

Representation: gamma^0 = sigma_z, gamma^1 = i sigma_y, so that

    i d/dt psi = H psi,    H(p) = p sigma_x + m sigma_z,

on each momentum mode.  The density and current are

    rho = |psi_1|^2 + |psi_2|^2,    j = psi^dagger sigma_x psi = 2 Re(conj(psi_1) psi_2),

and |j| <= rho holds pointwise by Cauchy-Schwarz.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalBudgetError
from .packets import Grid, analyze, cell_masses, synthesize
from .spacetime import GridMeasure
from .transport import DiscreteMeasure, max_causal_mass

NORM_TOL = 1e-10
CURRENT_RTOL = 1e-12
BAND_TOL = 1e-14
ATOM_MIN_MASS = 1e-16
FD_DX = 1e-3
FD_DT = 2e-4


@dataclass
class SpinorField:
    """Two-component spinor sampled on a periodic lattice at time ``t``."""

    grid: Grid
    psi: np.ndarray = field(repr=False)
    t: float = 0.0
    m: float = 1.0

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != (2, self.grid.n):
            raise ValueError(f"spinor must have shape (2, {self.grid.n}), got {psi.shape}")
        if self.m < 0:
            raise ValueError("mass must be non-negative")
        self.psi = psi
        if abs(self.norm - 1.0) > NORM_TOL:
            raise ValueError(f"spinor norm is {self.norm!r}, not 1")

    @classmethod
    def from_momentum(cls, grid: Grid, amp: np.ndarray, m: float, t: float = 0.0) -> "SpinorField":
        """Synthesize from momentum amplitudes on ``grid.p`` and normalize."""
        amp = np.asarray(amp, dtype=complex)
        check_band(amp, grid)
        psi = np.stack([synthesize(amp[0], grid), synthesize(amp[1], grid)])
        norm = float(np.sum(np.abs(psi) ** 2) * grid.dx)
        return cls(grid, psi / math.sqrt(norm), t, m)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def rho(self) -> np.ndarray:
        return np.sum(np.abs(self.psi) ** 2, axis=0)

    @property
    def norm(self) -> float:
        return float(np.sum(self.rho) * self.grid.dx)

    def momentum(self) -> np.ndarray:
        return analyze(self.psi, self.grid)

    def resampled(self, grid: Grid) -> "SpinorField":
        """Same field on a finer lattice over the same box (exact, band-limited)."""
        g = self.grid
        if not math.isclose(grid.length, g.length, rel_tol=1e-12) or grid.n % g.n:
            raise ValueError("target grid must refine the box by an integer factor")
        amp = np.zeros((2, grid.n), dtype=complex)
        off = (grid.n - g.n) // 2
        amp[:, off : off + g.n] = self.momentum()
        psi = np.stack([synthesize(amp[0], grid), synthesize(amp[1], grid)])
        return SpinorField(grid, psi, self.t, self.m)

    def density(self) -> GridMeasure:
        """Exact masses of the cells centred on the lattice points."""
        g = self.grid
        return GridMeasure.from_weights(self.t, g.x[0] - 0.5 * g.dx, g.dx, cell_masses(g, self.rho))


@dataclass
class CurrentField:
    rho: np.ndarray
    j: np.ndarray
    t: float
    grid: Grid

    @property
    def max_ratio(self) -> float:
        """max |j| / rho over points with rho > 0."""
        pos = self.rho > 0
        return float(np.max(np.abs(self.j[pos]) / self.rho[pos])) if pos.any() else 0.0


def check_band(amp: np.ndarray, grid: Grid) -> None:
    """Reject amplitudes with weight above half the Nyquist momentum.

    Beyond it |psi|^2 aliases and the density is no longer resolved.
    """
    w = np.sum(np.abs(amp) ** 2, axis=0) * grid.dp
    outer = np.abs(grid.p) > 0.5 * grid.p_nyquist
    if w[outer].sum() > BAND_TOL * max(w.sum(), 1e-300):
        raise NumericalBudgetError(
            f"spinor carries {w[outer].sum():.3g} of its norm above half the Nyquist momentum"
        )


def energy_eigenvectors(p: np.ndarray, m: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit eigenvectors of H(p) for the energies +E(p) and -E(p)."""
    p = np.asarray(p, dtype=float)
    E = np.sqrt(p * p + m * m)
    s = np.sqrt(2 * E * (E + m))
    # H vanishes at p = m = 0; take the p -> 0+ limit there
    zero = s == 0
    s = np.where(zero, 1.0, s)
    a = np.where(zero, math.sqrt(0.5), (E + m) / s)
    b = np.where(zero, math.sqrt(0.5), p / s)
    return np.stack([a, b]), np.stack([-b, a])


def propagator(p: np.ndarray, m: float, t: float) -> np.ndarray:
    """exp(-i H(p) t) as an array of shape (2, 2, len(p))."""
    E = np.sqrt(p * p + m * m)
    c = np.cos(E * t)
    s = t * np.sinc(E * t / math.pi)  # sin(E t) / E, finite at E = 0
    return np.array([[c - 1j * s * m, -1j * s * p], [-1j * s * p, c + 1j * s * m]])


def evolve_dirac(initial: SpinorField, t: float) -> SpinorField:
    """Exact free evolution by the per-mode 2x2 exponential."""
    if t < 0:
        raise ValueError("time must be non-negative")
    g = initial.grid
    amp = initial.momentum()
    check_band(amp, g)
    U = propagator(g.p, initial.m, t)
    out = np.einsum("abk,bk->ak", U, amp)
    psi = np.stack([synthesize(out[0], g), synthesize(out[1], g)])
    return SpinorField(g, psi, initial.t + t, initial.m)


def split_step(initial: SpinorField, t: float, n_steps: int) -> SpinorField:
    """Fourth-order (Yoshida) splitting of the kinetic and mass terms.

    Independent of :func:`evolve_dirac` apart from the shared transforms;
    used as its oracle.
    """
    g = initial.grid
    p, m = g.p, initial.m
    tau = t / n_steps
    w1 = 1.0 / (2.0 - 2.0 ** (1 / 3))
    w0 = -(2.0 ** (1 / 3)) * w1
    cs = (w1 / 2, (w0 + w1) / 2, (w0 + w1) / 2, w1 / 2)
    ds = (w1, w0, w1)

    def kinetic(psi, h):
        amp = analyze(psi, g)
        c, s = np.cos(p * h), np.sin(p * h)
        amp = np.stack([c * amp[0] - 1j * s * amp[1], c * amp[1] - 1j * s * amp[0]])
        return np.stack([synthesize(amp[0], g), synthesize(amp[1], g)])

    def mass(psi, h):
        ph = np.exp(-1j * m * h)
        return np.stack([psi[0] * ph, psi[1] * np.conj(ph)])

    psi = initial.psi.copy()
    for _ in range(n_steps):
        for k in range(3):
            psi = kinetic(psi, cs[k] * tau)
            psi = mass(psi, ds[k] * tau)
        psi = kinetic(psi, cs[3] * tau)
    return SpinorField(g, psi, initial.t + t, m)


def current(field: SpinorField) -> CurrentField:
    """Density and current; asserts the current is causal everywhere."""
    a, b = field.psi
    rho = field.rho
    j = 2.0 * np.real(np.conj(a) * b)
    excess = np.abs(j) - rho
    if np.any(excess > CURRENT_RTOL * max(float(rho.max()), 1e-300)):
        raise AssertionError(f"spacelike current, |j| - rho up to {excess.max():.3g}")
    return CurrentField(rho, j, field.t, field.grid)


def continuity_residual(before: CurrentField, after: CurrentField) -> float:
    """max |d rho / dt + d j / dx| over interior points at the half time step.

    Forward difference in time, central difference in space of the
    time-averaged current; both second order about the midpoint.
    """
    if before.grid != after.grid:
        raise ValueError("snapshots must share a grid")
    dt = after.t - before.t
    if not dt > 0:
        raise ValueError("snapshots must be in increasing time order")
    dx = before.grid.dx
    drho = (after.rho - before.rho) / dt
    jm = 0.5 * (before.j + after.j)
    djdx = (jm[2:] - jm[:-2]) / (2 * dx)
    return float(np.max(np.abs(drho[1:-1] + djdx)))


def residual_at(
    initial: SpinorField, t: float, dt: float = FD_DT, refine: int | None = None
) -> float:
    """Continuity residual of the exact evolution between t and t + dt.

    The field is first resampled onto a lattice ``refine`` times finer; by
    default the smallest power of two bringing the spacing to ``FD_DX``.
    """
    if refine is None:
        refine = 1
        while initial.grid.dx / refine > FD_DX:
            refine *= 2
    field0 = initial if refine == 1 else initial.resampled(initial.grid.refined(refine))
    a = evolve_dirac(field0, t)
    b = evolve_dirac(field0, t + dt)
    return continuity_residual(current(a), current(b))


@dataclass
class DiracCheck:
    times: list[float]
    n_tilde: dict = field(repr=False)
    max_ratio: float
    tol: float

    @property
    def worst(self) -> float:
        return max(self.n_tilde.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return self.worst <= self.tol and self.max_ratio <= 1 + CURRENT_RTOL

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "pairs": [{"s": s, "t": t, "n_tilde": v} for (s, t), v in self.n_tilde.items()],
            "max_n_tilde": self.worst,
            "max_j_over_rho": self.max_ratio,
            "causal": self.ok,
        }


def dirac_causality_check(
    initial: SpinorField, times, slack: float | None = None, tol: float = 1e-6
) -> DiracCheck:
    """Coupling shortfall between the evolved densities for every pair s <= t.

    Each density becomes atoms at the cell centres carrying the exact cell
    masses.  Mass inside a cell may sit up to half a cell from its atom at
    either end, so the cone radius is widened by ``slack``, one cell by
    default.
    """
    times = [float(s) for s in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be non-decreasing")
    g = initial.grid
    slack = g.dx if slack is None else slack
    fields = [evolve_dirac(initial, s) for s in times]
    ratio = max(current(f).max_ratio for f in fields)
    atoms = [DiscreteMeasure.from_grid(f.density(), ATOM_MIN_MASS) for f in fields]
    out = {}
    for i, k in itertools.combinations_with_replacement(range(len(times)), 2):
        out[(times[i], times[k])] = max_causal_mass(atoms[i], atoms[k], slack=slack).n_tilde
    return DiracCheck(times, out, ratio, tol)


def gaussian_spinor(
    grid: Grid, m: float, width: float = 1.0, center: float = 0.0, boost: float = 0.0,
    upper: complex = 1.0, lower: complex = 0.0,
) -> SpinorField:
    """Gaussian envelope times a constant two-spinor (upper, lower)."""
    x = grid.x
    env = np.exp(-((x - center) ** 2) / (2 * width**2) + 1j * boost * x)
    psi = np.stack([upper * env, lower * env])
    psi /= math.sqrt(float(np.sum(np.abs(psi) ** 2) * grid.dx))
    return SpinorField(grid, psi, 0.0, m)


def spinor_grid(width: float, center: float, boost: float, t_max: float, dx_max: float = 0.25) -> Grid:
    """Lattice holding a Gaussian spinor of the given shape up to ``t_max``."""
    P = abs(boost) + 9.0 / width
    dx = min(dx_max, 0.98 * math.pi / (2 * P))
    half = abs(center) + 7.0 * width + t_max + 2.0
    n = 1024
    while n * dx < 2 * half:
        n *= 2
    return Grid(n, dx)


def random_spinor(rng: np.random.Generator, m: float = 1.0, t_max: float = 5.0) -> SpinorField:
    """Random superposition of positive- and negative-energy Gaussian packets.

    Draws one or two packets with random centre, width, mean momentum and
    complex weights on both energy branches.
    """
    n_bumps = int(rng.integers(1, 3))
    specs = []
    for _ in range(n_bumps):
        specs.append(
            dict(
                center=float(rng.uniform(-3, 3)),
                width=float(rng.uniform(0.3, 2.0)),
                boost=float(rng.uniform(-2, 2)),
                up=complex(*rng.normal(size=2)),
                down=complex(*rng.normal(size=2)),
            )
        )
    reach = max(abs(s["center"]) for s in specs)
    narrow = min(s["width"] for s in specs)
    kick = max(abs(s["boost"]) for s in specs)
    grid = spinor_grid(narrow, reach, kick, t_max)
    p = grid.p
    vp, vm = energy_eigenvectors(p, m)
    amp = np.zeros((2, grid.n), dtype=complex)
    for s in specs:
        w = s["width"]
        env = np.exp(-0.5 * (w * (p - s["boost"])) ** 2 - 1j * p * s["center"])
        amp += env * (s["up"] * vp + s["down"] * vm)
    return SpinorField.from_momentum(grid, amp, m)
