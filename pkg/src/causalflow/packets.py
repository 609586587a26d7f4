"""Initial wave packets and their free evolution by Fourier synthesis.

A packet is evolved as

    psi(t, x) = (2 pi)^(-1/2) * integral of phihat(p) exp(-i E(p) t + i p x) dp

with ``phihat`` always taken in closed form.  The integral is sampled on a
momentum lattice that straddles p = 0 and summed with one FFT, which is exact
up to periodization of psi over the box length and truncation of phihat at
the Nyquist momentum.  Both errors are bounded when the grid is chosen and
checked again after evolution.

Grids are picked so that phihat is negligible beyond *half* the Nyquist
momentum.  Then |psi|^2 is itself resolved by the lattice and its integral
over any interval can be evaluated exactly from its Fourier coefficients,
which is what the region masses downstream rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import NumericalBudgetError
from .spacetime import GridMeasure

FAMILIES = ("gaussian", "sech", "sinc_sech", "sinc_power", "box")
DISPERSIONS = ("relativistic", "massless", "nonrelativistic")

EXP_TAIL_TOL = 1e-13
POWER_TAIL_TOL = 1e-6
BOX_TAIL_TOL = 1e-4
NORM_TOL = 1e-10
N_MIN = 2**12
N_MAX = 2**20
SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class StateFamily:
    """Initial state ``psi0`` from one of the supported closed-form families.

    ``scale`` dilates the profile, ``psi0(x / scale) / sqrt(scale)``, and
    ``boost`` multiplies it by ``exp(i boost x)``.
    """

    kind: str
    d: float = 1.0
    alpha: float = 1.0
    n: int = 1
    p_m: float = 1.0
    boost: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unsupported family {self.kind!r}; choose from {FAMILIES}")
        if self.kind in ("gaussian", "box") and not self.d > 0:
            raise ValueError("d must be positive")
        if self.kind == "sech" and not self.alpha > 0:
            raise ValueError("alpha must be positive for the sech family")
        if self.kind == "sinc_sech" and not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if self.kind == "sinc_power":
            if int(self.n) != self.n or self.n < 1:
                raise ValueError("n must be a positive integer")
            if not self.p_m > 0:
                raise ValueError("p_m must be positive")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not math.isfinite(self.boost):
            raise ValueError("boost must be finite")

    @classmethod
    def gaussian(cls, d, **kw):
        return cls("gaussian", d=d, **kw)

    @classmethod
    def sech(cls, alpha, **kw):
        return cls("sech", alpha=alpha, **kw)

    @classmethod
    def sinc_sech(cls, alpha, **kw):
        return cls("sinc_sech", alpha=alpha, **kw)

    @classmethod
    def sinc_power(cls, n, p_m, **kw):
        return cls("sinc_power", n=int(n), p_m=p_m, **kw)

    @classmethod
    def box(cls, d, **kw):
        return cls("box", d=d, **kw)

    def params(self) -> dict:
        own = {
            "gaussian": ("d",),
            "sech": ("alpha",),
            "sinc_sech": ("alpha",),
            "sinc_power": ("n", "p_m"),
            "box": ("d",),
        }[self.kind]
        out = {k: getattr(self, k) for k in own}
        if self.boost:
            out["boost"] = self.boost
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params()}

    @classmethod
    def from_dict(cls, data: dict) -> "StateFamily":
        data = dict(data)
        return cls(data.pop("kind"), **data)

    def label(self) -> str:
        return self.kind + ":" + ",".join(f"{k}={v:g}" for k, v in self.params().items())

    def rescaled(self, s: float) -> "StateFamily":
        """The state ``psi0(x / s)``, normalized; boost is scaled along."""
        return replace(self, scale=self.scale * s, boost=self.boost / s)

    @property
    def compact_support(self) -> bool:
        return self.kind == "box"

    @property
    def heavy_tailed(self) -> bool:
        """Power-law decay in position or momentum space."""
        return self.kind in ("sinc_power", "box") or (self.kind == "sinc_sech" and self.alpha == 0)

    @property
    def even(self) -> bool:
        return self.boost == 0.0

    # closed-form pieces in the unscaled, unboosted variable

    def _base_momentum(self, u):
        k = self.kind
        if k == "gaussian":
            return (self.d / math.pi) ** 0.25 * np.exp(-0.5 * self.d * u * u)
        if k == "sech":
            a = self.alpha
            return math.sqrt(math.pi / (4 * a)) / np.cosh(np.clip(math.pi * u / (2 * a), -700, 700))
        if k == "sinc_sech":
            return _sinc_sech_momentum(u, self.alpha) / _sinc_sech_norm(self.alpha)
        if k == "sinc_power":
            n, pm = int(self.n), self.p_m
            return _box_convolution(u / pm, n) / math.sqrt(pm * _box_convolution_norm2(n))
        # box
        d = self.d
        return d * np.sinc(u * d / math.pi) / math.sqrt(math.pi * d)

    def _base_position(self, x):
        k = self.kind
        if k == "gaussian":
            return (math.pi * self.d) ** -0.25 * np.exp(-x * x / (2 * self.d))
        if k == "sech":
            a = self.alpha
            return math.sqrt(a / 2) / np.cosh(np.clip(a * x, -700, 700))
        if k == "sinc_sech":
            a = self.alpha
            return np.sinc(x / math.pi) / np.cosh(np.clip(a * x, -700, 700)) / _sinc_sech_xnorm(a)
        if k == "sinc_power":
            n, pm = int(self.n), self.p_m
            return np.sinc(pm * x / math.pi) ** n / math.sqrt(_sinc_power_xnorm2(n, pm))
        d = self.d
        return np.where(np.abs(x) <= d, 1.0 / math.sqrt(2 * d), 0.0)

    def _base_momentum_tail(self, P: float) -> float:
        """Upper bound on the base momentum mass with |u| > P."""
        k = self.kind
        if k == "gaussian":
            return float(special.erfc(math.sqrt(self.d) * P))
        if k == "sech":
            return 2.0 / (math.exp(min(700.0, math.pi * P / self.alpha)) + 1.0)
        if k == "sinc_sech":
            a = self.alpha
            if a == 0 or P <= 1:
                return 0.0 if a == 0 and P >= 1 else 1.0
            c = math.pi / (2 * a)
            n2 = _sinc_sech_norm(a) ** -2
            return 2 * n2 / (math.pi * c) * math.exp(-2 * c * (P - 1))
        if k == "sinc_power":
            return 0.0 if P >= self.n * self.p_m else 1.0
        return min(1.0, 2.0 / (math.pi * self.d * P)) if P > 0 else 1.0

    def _base_position_tail(self, R: float) -> float:
        """Upper bound on the initial mass with |x| > R."""
        k = self.kind
        if R <= 0:
            return 1.0
        if k == "gaussian":
            return float(special.erfc(R / math.sqrt(self.d)))
        if k == "sech":
            return 2.0 / (math.exp(min(700.0, 2 * self.alpha * R)) + 1.0)
        if k == "sinc_sech":
            n2 = _sinc_sech_xnorm(self.alpha) ** -2
            if self.alpha == 0:
                return min(1.0, 2 * n2 / R)
            return min(1.0, 4 * n2 * math.exp(-2 * self.alpha * R) / (self.alpha * R * R))
        if k == "sinc_power":
            n, pm = int(self.n), self.p_m
            n2 = 1.0 / _sinc_power_xnorm2(n, pm)
            return min(1.0, 2 * n2 * (pm * R) ** (-2 * n) * R / (2 * n - 1))
        return 0.0 if R >= self.d else 1.0

    def analyticity_width(self) -> float:
        """Half-width of the strip where phihat is analytic (inf for entire)."""
        if self.kind == "sech":
            return self.alpha / self.scale
        if self.kind == "sinc_sech" and self.alpha > 0:
            return self.alpha / self.scale
        if self.kind in ("gaussian", "box"):
            return math.inf
        return 0.0

    # scaled and boosted

    def momentum_tail(self, P: float) -> float:
        return self._base_momentum_tail(self.scale * P)

    def position_tail(self, R: float) -> float:
        return self._base_position_tail(R / self.scale)

    def position(self, x):
        """Closed-form ``psi0(x)``."""
        x = np.asarray(x, dtype=float)
        s = self.scale
        val = self._base_position(x / s) / math.sqrt(s)
        return val * np.exp(1j * self.boost * x) if self.boost else val.astype(complex)

    def initial_interval_mass(self, a: float, b: float) -> float | None:
        """Closed-form initial mass of [a, b] where one is available."""
        s = self.scale
        a, b = a / s, b / s
        if self.kind == "gaussian":
            r = math.sqrt(self.d)
            return 0.5 * (math.erf(b / r) - math.erf(a / r))
        if self.kind == "sech":
            return 0.5 * (math.tanh(self.alpha * b) - math.tanh(self.alpha * a))
        if self.kind == "box":
            d = self.d
            return max(0.0, min(b, d) - max(a, -d)) / (2 * d)
        return None


def momentum_amplitude(family: StateFamily) -> Callable[[np.ndarray], np.ndarray]:
    """Closed-form ``phihat0(p)`` of ``family``, unit L2 norm."""
    s, b = family.scale, family.boost
    root = math.sqrt(s)

    def phihat(p):
        p = np.asarray(p, dtype=float)
        return (root * family._base_momentum(s * (p - b))).astype(complex)

    return phihat


# --- family helpers ---------------------------------------------------------


def _sinc_sech_momentum(u, alpha):
    """Unnormalized transform of sin(x)/x * sech(alpha x)."""
    u = np.abs(np.asarray(u, dtype=float))
    if alpha == 0:
        return math.sqrt(math.pi / 2) * np.where(u < 1, 1.0, np.where(u == 1, 0.5, 0.0))
    c = math.pi / (2 * alpha)
    # gd(c(u+1)) - gd(c(u-1)) with gd(z) = pi/2 - 2 atan(exp(-z)) for z >= 0
    with np.errstate(over="ignore"):
        far = 2 * np.arctan(np.exp(-c * np.abs(u - 1))) - 2 * np.arctan(np.exp(-c * (u + 1)))
        near = math.pi - 2 * np.arctan(np.exp(-c * (u + 1))) - 2 * np.arctan(np.exp(-c * (1 - u)))
    return np.where(u >= 1, far, near) / SQRT_2PI


@lru_cache(maxsize=None)
def _sinc_sech_norm(alpha: float) -> float:
    if alpha == 0:
        return math.sqrt(math.pi / 2) * math.sqrt(2.0)
    f = lambda u: float(_sinc_sech_momentum(u, alpha)) ** 2
    c = math.pi / (2 * alpha)
    top = 1 + 40.0 / c
    val = integrate.quad(f, 0, 1, epsabs=1e-17, epsrel=1e-13, limit=200)[0]
    val += integrate.quad(f, 1, top, epsabs=1e-17, epsrel=1e-13, limit=400)[0]
    return math.sqrt(2 * val)


@lru_cache(maxsize=None)
def _sinc_sech_xnorm(alpha: float) -> float:
    # Plancherel: same L2 norm in both representations
    return _sinc_sech_norm(alpha)


def _box_convolution(u, n: int):
    """n-fold self-convolution of the indicator of [-1, 1], at u."""
    u = np.asarray(u, dtype=float)
    if n == 1:
        au = np.abs(u)
        return np.where(au < 1, 1.0, np.where(au == 1, 0.5, 0.0))
    out = np.zeros_like(u)
    for k in range(n + 1):
        out += (-1) ** k * math.comb(n, k) * np.clip(u + n - 2 * k, 0, None) ** (n - 1)
    out /= math.factorial(n - 1)
    return np.where(np.abs(u) >= n, 0.0, out)


@lru_cache(maxsize=None)
def _box_convolution_norm2(n: int) -> float:
    f = lambda u: float(_box_convolution(u, n)) ** 2
    pts = list(range(-n, n + 1))
    return sum(integrate.quad(f, a, b, epsabs=1e-17, epsrel=1e-13)[0] for a, b in zip(pts, pts[1:]))


@lru_cache(maxsize=None)
def _sinc_power_xnorm2(n: int, pm: float) -> float:
    # |F[(sin pm x / pm x)^n]|^2 integrates to (pi/2)^n (2 pi)^(1-n) pm^-2 * pm * ||C_n||^2
    return (math.pi / 2) ** n * (2 * math.pi) ** (1 - n) * _box_convolution_norm2(n) / pm


# --- dispersion ---------------------------------------------------------------


@dataclass(frozen=True)
class Dispersion:
    kind: str
    m: float = 1.0

    def __post_init__(self):
        if self.kind not in DISPERSIONS:
            raise ValueError(f"unsupported dispersion {self.kind!r}; choose from {DISPERSIONS}")
        if self.kind != "massless" and not self.m > 0:
            raise ValueError("mass must be positive")

    @classmethod
    def relativistic(cls, m=1.0):
        return cls("relativistic", m)

    @classmethod
    def massless(cls):
        return cls("massless", 0.0)

    @classmethod
    def nonrelativistic(cls, m=1.0):
        return cls("nonrelativistic", m)

    def energy(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "relativistic":
            return np.hypot(p, self.m)
        if self.kind == "massless":
            return np.abs(p)
        return p * p / (2 * self.m)

    def max_speed(self, p_max: float) -> float:
        return p_max / self.m if self.kind == "nonrelativistic" else 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind} if self.kind == "massless" else {"kind": self.kind, "m": self.m}

    @classmethod
    def from_dict(cls, data: dict) -> "Dispersion":
        data = dict(data)
        kind = data.pop("kind")
        return cls.massless() if kind == "massless" else cls(kind, **data)

    def label(self) -> str:
        return self.kind if self.kind == "massless" else f"{self.kind}:m={self.m:g}"


# --- grids and packets ---------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice ``x_k = (k - n/2) dx`` and its momentum dual.

    Momenta sit at half-integer multiples of ``dp = 2 pi / (n dx)`` so that
    p = 0 is never a sample point.
    """

    n: int
    dx: float

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError("grid size must be an even integer >= 4")
        if not self.dx > 0:
            raise ValueError("dx must be positive")

    @property
    def length(self) -> float:
        return self.n * self.dx

    @property
    def dp(self) -> float:
        return 2 * math.pi / self.length

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    @property
    def p(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2 + 0.5) * self.dp

    @property
    def p_nyquist(self) -> float:
        return math.pi / self.dx

    def refined(self, factor: int = 2) -> "Grid":
        """Same box, ``factor`` times finer."""
        return Grid(self.n * factor, self.dx / factor)

    def enlarged(self, factor: int = 2) -> "Grid":
        """Same spacing, ``factor`` times longer box."""
        return Grid(self.n * factor, self.dx)


def _invert_decreasing(f, tol: float, start: float) -> float:
    """Smallest r (to 1 %) with f(r) <= tol for a decreasing f."""
    hi = max(start, 1e-12)
    while f(hi) > tol:
        hi *= 2
        if hi > 1e15:
            return math.inf
    lo = hi / 2
    while f(lo) <= tol and lo > 1e-12:
        hi, lo = lo, lo / 2
    while hi - lo > 0.01 * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) <= tol:
            hi = mid
        else:
            lo = mid
    return hi


def default_tail_tol(family: StateFamily, disp: Dispersion) -> float:
    if family.kind == "box":
        return BOX_TAIL_TOL
    if family.heavy_tailed or disp.kind == "massless":
        return POWER_TAIL_TOL
    return EXP_TAIL_TOL


def choose_grid(
    family: StateFamily,
    disp: Dispersion,
    t_max: float,
    tail_tol: float | None = None,
    n_min: int = N_MIN,
    n_max: int = N_MAX,
    extent: float = 0.0,
) -> Grid:
    """Smallest power-of-two lattice resolving ``family`` up to time ``t_max``.

    The spacing puts the momentum cut-off at half the Nyquist momentum; the
    box covers the initial tails, the light cone (or the fastest group
    velocity) and the evolved exponential tails, plus ``extent`` on each side.
    """
    tol = default_tail_tol(family, disp) if tail_tol is None else tail_tol
    tiny = min(tol, EXP_TAIL_TOL) * 1e-3
    P = _invert_decreasing(family.momentum_tail, tiny, 1.0 / family.scale)
    if not math.isfinite(P) or family.kind == "box":
        P = _invert_decreasing(family.momentum_tail, tol, 1.0 / family.scale)
    P_top = abs(family.boost) + P
    dx = math.pi / max(2 * P, P_top) * 0.98
    R0 = _invert_decreasing(family.position_tail, tiny, family.scale)
    if not math.isfinite(R0):
        R0 = _invert_decreasing(family.position_tail, tol, family.scale)
    spread = disp.max_speed(P_top) * t_max
    if disp.kind == "relativistic":
        kappa = min(disp.m, family.analyticity_width())
        tail_len = math.log(1.0 / tiny) / (2 * kappa) if kappa > 0 else math.inf
    elif disp.kind == "massless":
        # the kink of |p| at p = 0 leaves density tails ~ t^2 / x^4
        tail_len = (max(t_max, 1.0) ** 2 / tol) ** (1 / 3)
    else:
        tail_len = 0.0
    if not math.isfinite(tail_len):
        tail_len = R0
    half = 1.05 * (R0 + spread + tail_len) + extent
    need = 2 * half / dx
    n = n_min
    while n < need and n < n_max:
        n *= 2
    if n < need:
        # Out of points.  Coarsen if the momentum cut-off still meets the
        # budget, otherwise keep the resolution and let the tail check judge.
        dx_box = 2 * half / n
        if family.momentum_tail(math.pi / (2 * dx_box)) <= tol:
            dx = dx_box
    return Grid(n, dx)


@dataclass
class WavePacket:
    """Sampled ``psi(t, x)`` on a periodic lattice plus its momentum data.

    ``renorm_delta`` is ``sum |psi|^2 dx - 1`` before renormalization and
    serves as a quadrature-error diagnostic together with ``tail_mass``
    (mass in the outer tenth of the box) and ``cutoff_mass`` (momentum mass
    beyond the resolved band).
    """

    grid: Grid
    psi: np.ndarray = field(repr=False)
    t: float
    family: StateFamily
    dispersion: Dispersion
    momentum_amplitude: Callable = field(repr=False)
    renorm_delta: float = 0.0
    tail_mass: float = 0.0
    cutoff_mass: float = 0.0
    _coef: np.ndarray | None = field(default=None, repr=False)
    _terms: dict = field(default_factory=dict, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def rho(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.rho) * self.grid.dx)

    def quadrature_error(self) -> float:
        return abs(self.renorm_delta) + self.tail_mass + self.cutoff_mass

    def density_coefficients(self) -> np.ndarray:
        """Fourier coefficients of |psi|^2 on the box, numpy FFT order."""
        if self._coef is None:
            self._coef = np.fft.fft(self.rho) / self.grid.n
        return self._coef

    def _kappa(self) -> np.ndarray:
        g = self.grid
        return 2 * math.pi * np.fft.fftfreq(g.n, d=g.dx)

    def cumulative_on_lattice(self, shift: float = 0.0) -> np.ndarray:
        """Mass of ``[x_0, x_k + shift]`` for every lattice point, exact for the band-limited density."""
        return lattice_cumulative(self.grid, self.density_coefficients(), shift)

    def cumulative(self, pts, rel_cut: float = 1e-18) -> np.ndarray:
        """Mass of ``[x_0, x]`` at arbitrary points, by direct Fourier summation."""
        g = self.grid
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        c = self.density_coefficients()
        key = ("cum", rel_cut)
        if key not in self._terms:
            kap = self._kappa()
            keep = np.abs(c) > rel_cut * abs(c[0])
            keep[0] = False
            wk = c[keep] / (1j * kap[keep])
            self._terms[key] = (kap[keep], wk, wk.sum().real)
        kk, wk, wsum = self._terms[key]
        out = np.empty(pts.size)
        rel = pts - g.x[0]
        for lo in range(0, pts.size, 256):
            r = rel[lo : lo + 256]
            out[lo : lo + 256] = (np.exp(1j * np.outer(r, kk)) @ wk).real - wsum
        return out + c[0].real * rel

    def interval_mass(self, a: float, b: float) -> float:
        if b < a:
            raise ValueError("interval must have a <= b")
        Fa, Fb = self.cumulative([a, b])
        return float(Fb - Fa)

    def at(self, pts) -> np.ndarray:
        """psi(t, x) at arbitrary points, by direct momentum summation."""
        g = self.grid
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        p = g.p
        amp = self.momentum_amplitude(p) * np.exp(-1j * self.dispersion.energy(p) * self.t)
        keep = np.abs(amp) > 1e-300
        amp, p = amp[keep], p[keep]
        out = np.empty(pts.size, dtype=complex)
        for lo in range(0, pts.size, 256):
            out[lo : lo + 256] = np.exp(1j * np.outer(pts[lo : lo + 256], p)) @ amp
        scale = g.dp / SQRT_2PI / math.sqrt(1.0 + self.renorm_delta)
        return out * scale


def lattice_cumulative(grid: Grid, coef: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """Integral of a lattice trigonometric polynomial from ``x_0`` to ``x_k + shift``.

    ``coef`` are its Fourier coefficients in numpy FFT order (``fft(f) / n``).
    """
    kap = 2 * math.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    kap[0] = 1.0
    c = coef / (1j * kap)
    c[0] = 0.0
    rot = c * np.exp(1j * kap * shift) if shift else c
    out = (np.fft.ifft(rot) * grid.n).real - c.sum().real
    return out + coef[0].real * (grid.x - grid.x[0] + shift)


def cell_masses(grid: Grid, rho: np.ndarray) -> np.ndarray:
    """Exact masses of the cells ``[x_k - dx/2, x_k + dx/2]`` of a band-limited density.

    ``rho`` must be resolved by the lattice (its spectrum inside the Nyquist
    band), which holds for ``|psi|^2`` when psi fits in half the band.
    """
    F = lattice_cumulative(grid, np.fft.fft(rho) / grid.n, -0.5 * grid.dx)
    total = float(np.sum(rho) * grid.dx)
    return np.diff(np.append(F, F[0] + total))


def synthesize(amplitude: np.ndarray, grid: Grid) -> np.ndarray:
    """``dp / sqrt(2 pi) * sum_j amplitude_j exp(i p_j x_k)`` on the lattice."""
    p, x = grid.p, grid.x
    pre = amplitude * np.exp(1j * p * x[0])
    return np.fft.ifft(pre) * grid.n * np.exp(1j * p[0] * (x - x[0])) * (grid.dp / SQRT_2PI)


def analyze(psi: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of :func:`synthesize`: momentum amplitudes on the lattice ``grid.p``."""
    p, x = grid.p, grid.x
    pre = psi * np.exp(-1j * p[0] * (x - x[0]))
    return np.fft.fft(pre, axis=-1) * np.exp(-1j * p * x[0]) * (grid.dx / SQRT_2PI)


def evolve(
    family: StateFamily,
    disp: Dispersion,
    t: float,
    grid: Grid | None = None,
    tail_tol: float | None = None,
    check: bool = True,
) -> WavePacket:
    """Free evolution of ``family`` under ``disp`` to time ``t``.

    Raises
    ------
    NumericalBudgetError
        If the momentum band is under-resolved (Nyquist) or the periodized
        packet carries more than ``tail_tol`` in the outer tenth of the box.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    tol = default_tail_tol(family, disp) if tail_tol is None else tail_tol
    if grid is None:
        grid = choose_grid(family, disp, t, tol)
    phihat = momentum_amplitude(family)
    p = grid.p
    band = grid.p_nyquist
    cutoff = family.momentum_tail(max(0.0, band - abs(family.boost)))
    if check and cutoff > tol:
        raise NumericalBudgetError(
            f"momentum band +-{band:.4g} leaves {cutoff:.3g} of the norm unresolved"
        )
    amp = phihat(p) * np.exp(-1j * disp.energy(p) * t)
    psi = synthesize(amp, grid)
    norm = float(np.sum(np.abs(psi) ** 2) * grid.dx)
    psi = psi / math.sqrt(norm)
    rho = np.abs(psi) ** 2
    x = grid.x
    tail = float(np.sum(rho[np.abs(x) >= 0.4 * grid.length]) * grid.dx)
    if check and tail > tol:
        raise NumericalBudgetError(
            f"box of length {grid.length:.4g} holds {tail:.3g} near its edges at t={t:g}"
        )
    return WavePacket(grid, psi, t, family, disp, phihat, norm - 1.0, tail, cutoff)


def density(packet: WavePacket) -> GridMeasure:
    """Cell-centered grid measure with weights ``|psi_k|^2 dx``."""
    g = packet.grid
    return GridMeasure.from_weights(packet.t, g.x[0] - 0.5 * g.dx, g.dx, packet.rho * g.dx)


def nonrel_cone_mass(a: float, t: float, m: float) -> float:
    """Mass of [-a-t, a+t] at time t for the spreading Gaussian (2/pi)^(1/4) exp(-x^2).

    The packet evolves freely with kinetic energy p^2 / (2m).
    """
    if not a > 0 or t < 0 or not m > 0:
        raise ValueError("need a > 0, t >= 0, m > 0")
    return math.erf(math.sqrt(2) * m * (a + t) / math.sqrt(m * m + 4 * t * t))


def nonrel_deficiency(a: float, t: float, m: float) -> float:
    """Signed ``mu_0([-a, a]) - mu_t([-a-t, a+t])`` for the same Gaussian.

    Written with erfc so that deficiencies far below double precision of
    the masses themselves stay resolved.
    """
    if not a > 0 or t < 0 or not m > 0:
        raise ValueError("need a > 0, t >= 0, m > 0")
    z = math.sqrt(2) * m * (a + t) / math.sqrt(m * m + 4 * t * t)
    return float(special.erfc(z) - special.erfc(math.sqrt(2) * a))


def nonrel_violation_threshold(t: float, m: float) -> float:
    """Half-width above which [-a, a] loses mass out of its cone by time t."""
    return m * (math.sqrt(m * m + 4 * t * t) + m) / (4 * t)


class Evolution:
    """Evolves one (family, dispersion) pair on a fixed grid at many times."""

    def __init__(self, family, disp, t_max, grid=None, tail_tol=None, extent=0.0):
        self.family = family
        self.dispersion = disp
        self.tail_tol = default_tail_tol(family, disp) if tail_tol is None else tail_tol
        self.grid = grid or choose_grid(family, disp, t_max, self.tail_tol, extent=extent)
        self._cache: dict[float, WavePacket] = {}

    def __call__(self, t: float) -> WavePacket:
        t = float(t)
        pk = self._cache.get(t)
        if pk is None:
            pk = evolve(self.family, self.dispersion, t, self.grid, self.tail_tol)
            if len(self._cache) > 8:
                self._cache.pop(next(iter(self._cache)))
            self._cache[t] = pk
        return pk
