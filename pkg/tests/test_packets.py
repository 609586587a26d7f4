import math

import numpy as np
import pytest
from scipy import integrate, special

from causalflow.errors import NumericalBudgetError
from causalflow.packets import (
    Dispersion,
    Evolution,
    Grid,
    StateFamily,
    analyze,
    choose_grid,
    density,
    evolve,
    momentum_amplitude,
    nonrel_cone_mass,
    nonrel_deficiency,
    nonrel_violation_threshold,
    synthesize,
)
from causalflow.spacetime import SpatialRegion, region_mass

FAMILIES = [
    StateFamily.gaussian(1.0),
    StateFamily.gaussian(0.01),
    StateFamily.sech(3.0),
    StateFamily.sech(1.0),
    StateFamily.sinc_sech(1.5),
    StateFamily.sinc_power(2, 1.0),
    StateFamily.sinc_power(3, 1.0),
    StateFamily.box(1.0),
]
EXP_FAMILIES = FAMILIES[:5]
DISPERSIONS = [
    Dispersion.relativistic(1.0),
    Dispersion.relativistic(0.3),
    Dispersion.nonrelativistic(1.0),
]


def numeric_transform(family, p, cut=60.0):
    """(2 pi)^(-1/2) * integral of psi0(x) exp(-i p x) over [-cut, cut]."""
    re = integrate.quad(lambda x: family.position(x).real, -cut, cut, weight="cos", wvar=p, limit=400)[0]
    im = integrate.quad(lambda x: family.position(x).real, -cut, cut, weight="sin", wvar=p, limit=400)[0]
    return (re - 1j * im) / math.sqrt(2 * math.pi)


@pytest.mark.parametrize("family", [f for f in FAMILIES if f.kind != "box"], ids=lambda f: f.label())
def test_momentum_normalization(family):
    phihat = momentum_amplitude(family)
    if family.kind == "sinc_power":
        edges = np.arange(-family.n, family.n + 1) * family.p_m
        total = sum(
            integrate.quad(lambda p: abs(phihat(p)[()]) ** 2, a, b, epsabs=1e-14)[0]
            for a, b in zip(edges, edges[1:])
        )
    else:
        total = integrate.quad(lambda p: abs(phihat(p)[()]) ** 2, -np.inf, np.inf, epsabs=1e-14, limit=500)[0]
    assert total == pytest.approx(1.0, abs=1e-12)


def test_box_momentum_normalization():
    # |phihat|^2 = (d / pi) sinc^2 has a slow tail; compare the truncated
    # integral with its closed form (2 / pi) (Si(2 d P) - sin^2(d P) / (d P))
    d, P = 1.0, 40.0
    phihat = momentum_amplitude(StateFamily.box(d))
    zeros = np.arange(-P, P + 1e-9, math.pi / d)
    edges = np.concatenate(([-P], zeros[(zeros > -P) & (zeros < P)], [P]))
    total = sum(
        integrate.quad(lambda p: abs(phihat(p)[()]) ** 2, a, b, epsabs=1e-15)[0]
        for a, b in zip(edges, edges[1:])
    )
    exact = 2 / math.pi * (special.sici(2 * d * P)[0] - math.sin(d * P) ** 2 / (d * P))
    assert total == pytest.approx(exact, abs=1e-12)


def test_sinc_momentum_is_flat():
    phihat = momentum_amplitude(StateFamily.sinc_power(1, 1.0))
    p = np.array([-0.999, -0.5, 0.0, 0.3, 0.999, 1.001, -2.0])
    np.testing.assert_allclose(phihat(p)[:5], 1 / math.sqrt(2), atol=1e-15)
    np.testing.assert_array_equal(phihat(p)[5:], 0)


def test_sinc_power_support():
    phihat = momentum_amplitude(StateFamily.sinc_power(3, 0.5))
    assert abs(phihat(1.49)) > 0
    assert phihat(1.51) == 0


@pytest.mark.parametrize(
    "family",
    [StateFamily.sech(1.0), StateFamily.sech(3.0), StateFamily.gaussian(1.0), StateFamily.sinc_sech(1.5)],
    ids=lambda f: f.label(),
)
@pytest.mark.parametrize("p", [0.0, 0.7, 2.5])
def test_momentum_matches_quadrature(family, p):
    closed = complex(momentum_amplitude(family)(p))
    assert closed == pytest.approx(numeric_transform(family, p), abs=1e-8)


def test_box_momentum_matches_quadrature():
    fam = StateFamily.box(1.0)
    for p in (0.0, 0.9, 3.3):
        closed = complex(momentum_amplitude(fam)(p))
        assert closed == pytest.approx(numeric_transform(fam, p, cut=1.0), abs=1e-8)


def test_boost_shifts_momentum():
    base = momentum_amplitude(StateFamily.gaussian(1.0))
    moved = momentum_amplitude(StateFamily.gaussian(1.0, boost=0.8))
    p = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(moved(p + 0.8), base(p), atol=1e-15)


def test_gaussian_peak_positive():
    v = complex(momentum_amplitude(StateFamily.gaussian(1.0))(0.0))
    assert v.real > 0 and v.imag == 0


def test_family_validation():
    with pytest.raises(ValueError):
        StateFamily.gaussian(0)
    with pytest.raises(ValueError):
        StateFamily.sech(0)
    with pytest.raises(ValueError):
        StateFamily.sinc_power(0, 1)
    with pytest.raises(ValueError):
        StateFamily("airy")
    with pytest.raises(ValueError):
        Dispersion.relativistic(0)
    StateFamily.sinc_sech(0.0)


def test_synthesize_analyze_round_trip(rng):
    g = Grid(256, 0.1)
    amp = rng.normal(size=256) + 1j * rng.normal(size=256)
    np.testing.assert_allclose(analyze(synthesize(amp, g), g), amp, atol=1e-12)


@pytest.mark.parametrize("family", EXP_FAMILIES, ids=lambda f: f.label())
def test_initial_density_matches_closed_form(family):
    pk = evolve(family, Dispersion.relativistic(1.0), 0.0)
    rho = np.abs(family.position(pk.x)) ** 2
    tol = 2e-7 if family.kind == "sinc_sech" else 1e-10
    assert np.max(np.abs(pk.rho - rho)) <= tol * max(1.0, rho.max())


def test_nonrel_gaussian_spreads_in_closed_form():
    # (2/pi)^(1/4) exp(-x^2) is the d = 1/2 member of the family
    for m in (1.0, 2.5):
        for t in (0.3, 1.0, 4.0):
            pk = evolve(StateFamily.gaussian(0.5), Dispersion.nonrelativistic(m), t)
            s = 1 + 4 * (t / m) ** 2
            exact = np.sqrt(2 / (math.pi * s)) * np.exp(-2 * pk.x**2 / s)
            assert np.max(np.abs(pk.rho - exact)) < 1e-10


@pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.label())
@pytest.mark.parametrize("disp", DISPERSIONS, ids=lambda d: d.label())
def test_unitarity(family, disp):
    if family.kind == "box" and disp.kind == "nonrelativistic":
        pytest.skip("unbounded speeds; covered by test_box_nonrel_exceeds_budget")
    ev = Evolution(family, disp, 2.0)
    for t in (0.0, 0.5, 2.0):
        pk = ev(t)
        assert pk.norm == pytest.approx(1.0, abs=1e-10)
        assert math.fsum(density(pk).w) == pytest.approx(1.0, abs=1e-12)
        assert abs(pk.renorm_delta) <= pk.cutoff_mass + pk.tail_mass + 1e-10


@pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.label())
def test_parity(family):
    ev = Evolution(family, Dispersion.relativistic(1.0), 3.0)
    for t in (0.4, 3.0):
        pk = ev(t)
        a = np.abs(pk.psi[1:])
        assert np.max(np.abs(a - a[::-1])) < 1e-10
        assert np.max(np.abs(pk.rho[1:] - pk.rho[1:][::-1])) < 1e-10


@pytest.mark.parametrize("family", EXP_FAMILIES, ids=lambda f: f.label())
def test_grid_convergence(family):
    disp = Dispersion.relativistic(1.0)
    t = 1.0
    g = choose_grid(family, disp, t)
    coarse = evolve(family, disp, t, g)
    for fine_grid in (g.refined(2), g.enlarged(2)):
        fine = evolve(family, disp, t, fine_grid)
        for a, b in ((-1.0, 1.0), (-3.0, 0.5), (0.2, 2.7)):
            assert abs(coarse.interval_mass(a, b) - fine.interval_mass(a, b)) < 1e-10


@pytest.mark.parametrize("family", [StateFamily.gaussian(1.0), StateFamily.sech(3.0)], ids=lambda f: f.label())
@pytest.mark.parametrize("m", [0.7, 2.3])
def test_mass_scaling_covariance(family, m):
    t = 0.9
    x = np.linspace(-4, 4, 41)
    left = evolve(family, Dispersion.relativistic(m), t).at(x)
    right = evolve(family.rescaled(m), Dispersion.relativistic(1.0), m * t).at(m * x)
    np.testing.assert_allclose(left, math.sqrt(m) * right, atol=1e-9)


def test_box_nonrel_exceeds_budget():
    ev = Evolution(StateFamily.box(1.0), Dispersion.nonrelativistic(1.0), 2.0)
    with pytest.raises(NumericalBudgetError):
        ev(0.5)


def test_density_symmetric_and_erf():
    pk = evolve(StateFamily.gaussian(0.5), Dispersion.relativistic(1.0), 0.0)
    mu = density(pk)
    assert np.max(np.abs(mu.w[1:] - mu.w[1:][::-1])) < 1e-10
    assert pk.interval_mass(-1, 1) == pytest.approx(math.erf(math.sqrt(2)), abs=1e-12)
    fine = density(evolve(StateFamily.gaussian(0.5), Dispersion.relativistic(1.0), 0.0, Grid(4096, 0.005)))
    assert region_mass(fine, SpatialRegion.symmetric(1.0)) == pytest.approx(math.erf(math.sqrt(2)), abs=1e-5)


def test_nonrel_cone_mass_at_zero():
    for a in (0.1, 1.0, 2.0):
        assert nonrel_cone_mass(a, 0.0, 1.0) == pytest.approx(math.erf(math.sqrt(2) * a), abs=1e-15)


def test_nonrel_cone_mass_below_threshold_violation():
    for t in (0.5, 1.0, 10.0):
        a = 1.1 * nonrel_violation_threshold(t, 1.0)
        assert nonrel_cone_mass(a, t, 1.0) < math.erf(math.sqrt(2) * a)
        a = 0.9 * nonrel_violation_threshold(t, 1.0)
        assert nonrel_cone_mass(a, t, 1.0) >= math.erf(math.sqrt(2) * a)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("m", [0.5, 1.0, 3.0])
def test_nonrel_deficiency_sign_flips_at_threshold(t, m):
    a0 = nonrel_violation_threshold(t, m)
    if math.sqrt(2) * a0 > 25:
        pytest.skip("erfc underflows at this threshold")
    assert nonrel_deficiency(1.05 * a0, t, m) > 0
    assert nonrel_deficiency(0.95 * a0, t, m) < 0


def test_nonrel_deficiency_agrees_with_erf_form():
    for a, t in ((1.0, 1.0), (0.7, 3.0), (2.0, 0.5)):
        direct = math.erf(math.sqrt(2) * a) - nonrel_cone_mass(a, t, 1.0)
        assert nonrel_deficiency(a, t, 1.0) == pytest.approx(direct, abs=1e-15)


def test_nonrel_cone_mass_matches_pipeline():
    fam, disp = StateFamily.gaussian(0.5), Dispersion.nonrelativistic(1.0)
    for t in (0.25, 1.0, 3.0):
        pk = evolve(fam, disp, t)
        for a in (0.3, 1.0, 2.0):
            assert pk.interval_mass(-a - t, a + t) == pytest.approx(nonrel_cone_mass(a, t, 1.0), abs=1e-8)


def test_nonrel_cone_mass_rejects_bad_input():
    with pytest.raises(ValueError):
        nonrel_cone_mass(0.0, 1.0, 1.0)


def test_budget_errors():
    fam, disp = StateFamily.gaussian(1.0), Dispersion.relativistic(1.0)
    with pytest.raises(NumericalBudgetError):
        evolve(fam, disp, 20.0, Grid(64, 0.5))
    with pytest.raises(NumericalBudgetError):
        evolve(fam, disp, 0.0, Grid(1024, 2.0))
    with pytest.raises(ValueError):
        evolve(fam, disp, -1.0)


def test_massless_grid_straddles_zero():
    g = choose_grid(StateFamily.gaussian(1.0), Dispersion.massless(), 1.0)
    assert np.min(np.abs(g.p)) == pytest.approx(g.dp / 2)


def test_interval_mass_matches_lattice_cumulative():
    pk = evolve(StateFamily.sech(2.0), Dispersion.relativistic(1.0), 0.7)
    x = pk.x
    F = pk.cumulative_on_lattice(0.0)
    k = np.array([pk.grid.n // 2 - 40, pk.grid.n // 2 + 17])
    direct = pk.cumulative(x[k]) - pk.cumulative([x[0]])[0]
    np.testing.assert_allclose(direct, F[k] - F[0], atol=1e-13)
