import math
import os

import numpy as np
import pytest

from causalflow.errors import ConfigError
from causalflow.packets import Dispersion, Evolution, StateFamily, nonrel_cone_mass
from causalflow.quantify import (
    A_PER_DECADE,
    EPSILON_M,
    NoiseFloor,
    default_a_grid,
    default_t_grid,
    hegerfeldt_witness,
    m_of_region,
    m_tilde,
    n_tilde_packet,
    outside_probability,
    scaling_check,
    sweep,
    symmetric_profile,
    timescales,
    worker_count,
)
from causalflow.spacetime import SpatialRegion

REL = Dispersion.relativistic(1.0)
GAUSS = StateFamily.gaussian(1.0)


@pytest.fixture(scope="module")
def short_profile():
    return sweep(StateFamily.gaussian(1e-2), REL, t_grid=np.round(np.arange(1, 101) * 0.01, 12))


def test_noise_floor_rule():
    NoiseFloor(1e-11, 1e-12)
    with pytest.raises(ValueError):
        NoiseFloor(1e-11, 2e-12)
    with pytest.raises(ValueError):
        NoiseFloor(0.0)


def test_m_zero_at_t_zero():
    assert m_of_region(GAUSS, REL, 0.0, SpatialRegion.symmetric(2.0)) == 0.0
    assert m_tilde(GAUSS, REL, 0.0)[0] == 0.0


def test_m_anchor_gaussian():
    M = m_of_region(GAUSS, REL, 0.81, SpatialRegion.symmetric(2.89))
    assert M == pytest.approx(3.55e-5, rel=0.1)


def test_m_nonrel_matches_closed_form():
    fam, disp = StateFamily.gaussian(0.5), Dispersion.nonrelativistic(1.0)
    for a, t in ((0.5, 0.3), (1.2, 1.0), (2.0, 2.0), (0.9, 5.0)):
        expect = max(0.0, math.erf(math.sqrt(2) * a) - nonrel_cone_mass(a, t, 1.0))
        assert m_of_region(fam, disp, t, SpatialRegion.symmetric(a)) == pytest.approx(expect, abs=1e-8)


def test_m_union_of_intervals():
    K = SpatialRegion(((-6.0, -2.5), (2.5, 6.0)))
    M = m_of_region(GAUSS, REL, 0.8, K)
    assert 0.0 <= M <= 1.0


def test_m_tilde_anchor():
    val, a_M = m_tilde(GAUSS, REL, 0.81)
    assert val == pytest.approx(3.55e-5, rel=0.1)
    assert a_M == pytest.approx(2.89, abs=0.05)


def test_onset_half_width():
    # below a0 ~ 2.65 no symmetric interval loses mass at any time
    ev = Evolution(GAUSS, REL, 3.0, extent=4.0)
    a = np.array([2.0, 2.4, 2.6, 2.63, 2.68, 2.75])
    mu0 = np.array([GAUSS.initial_interval_mass(-x, x) for x in a])
    best = np.full(a.size, -1.0)
    for t in np.arange(0.01, 3.001, 0.01):
        F = ev(t).cumulative(np.concatenate([-a - t, a + t]))
        best = np.maximum(best, mu0 - (F[a.size:] - F[: a.size]))
    assert np.all(best[:4] <= EPSILON_M)
    assert np.all(best[4:] > 1e-6)


def test_sech_alpha_one_below_floor():
    ev = Evolution(StateFamily.sech(1.0), REL, 3.0)
    p0 = ev(0.0)
    for t in (0.3, 0.8, 1.5, 3.0):
        _, D = symmetric_profile(p0, ev(t), t)
        assert D.max() <= EPSILON_M


def test_asymmetric_scan_dominates_symmetric():
    sym, a = m_tilde(GAUSS, REL, 0.81)
    asym, (lo, hi) = m_tilde(GAUSS, REL, 0.81, symmetric=False)
    assert asym >= sym - 1e-12
    assert asym == pytest.approx(sym, rel=1e-3)
    assert lo == pytest.approx(-hi, abs=1e-3)


def test_boost_selects_asymmetric_scan():
    val, (lo, hi) = m_tilde(StateFamily.gaussian(1.0, boost=0.5), REL, 0.8)
    assert val > EPSILON_M
    assert lo < 0 < hi and lo != -hi


def test_nonrel_violation_found():
    fam, disp = StateFamily.gaussian(0.5), Dispersion.nonrelativistic(1.0)
    for t in (0.5, 1.0, 3.0):
        val, _ = m_tilde(fam, disp, t)
        assert val > EPSILON_M


def test_profile_invariants(short_profile):
    pr = short_profile
    assert np.all((pr.samples >= 0) & (pr.samples <= 1))
    assert np.all(pr.m_tilde[:, None] >= pr.samples - 1e-15)
    assert pr.m_star >= pr.m_tilde.max() - 1e-15
    assert pr.m_star == pytest.approx(0.039, rel=0.15)
    t0, t1, t2 = pr.curve_timescales()
    assert t0 <= t1
    assert math.isnan(t2) or t2 > t1


def test_profile_csv(short_profile, tmp_path):
    pr = short_profile
    pr.to_csv(tmp_path / "p.csv")
    pr.curve_to_csv(tmp_path / "c.csv")
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "t,a,M"
    assert len(rows) == 1 + pr.t.size * pr.a.size
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "t,M_tilde,a_M"
    s = pr.summary()
    assert {"m_star", "t1_star", "a_M", "epsilon_M"} <= set(s)


def test_sweep_parallel_matches_serial():
    fam = StateFamily.gaussian(0.1)
    tg = np.round(np.arange(1, 21) * 0.05, 12)
    a = sweep(fam, REL, t_grid=tg, workers=1)
    b = sweep(fam, REL, t_grid=tg, workers=2)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.m_tilde, b.m_tilde)


def test_sweep_rejects_bad_grids():
    with pytest.raises(ConfigError):
        sweep(GAUSS, REL, t_grid=[0.2, 0.1])
    with pytest.raises(ConfigError):
        sweep(GAUSS, REL, t_grid=[0.1, 0.2], a_grid=[1e6])


def test_timescales():
    t = np.linspace(0.1, 3, 30)
    M = np.where((t > 0.5) & (t < 2.0), np.sin(np.pi * (t - 0.5) / 1.5), 0.0)
    t0, t1, t2 = timescales(t, M, 1e-3)
    assert t0 == pytest.approx(0.6)
    assert t1 == pytest.approx(1.2, abs=0.11)
    assert t2 == pytest.approx(2.0)
    assert math.isnan(timescales(t, np.zeros_like(t), 1e-3)[0])


def test_default_grids():
    t = default_t_grid(REL)
    assert t[0] == pytest.approx(0.01) and t[-1] == pytest.approx(3.0) and t.size == 300
    assert default_t_grid(Dispersion.relativistic(2.0))[-1] == pytest.approx(1.5)
    ev = Evolution(StateFamily.gaussian(1e-4), REL, 3.0)
    a = default_a_grid(ev.grid, 3.0)
    assert np.all(np.diff(a) > 0) and a[0] >= ev.grid.dx
    assert a.size <= A_PER_DECADE * 5 + 1


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("CAUSALFLOW_MAX_WORKERS", "2")
    assert worker_count(16) == min(2, os.cpu_count() or 1)
    assert worker_count(1) == 1


def test_outside_probability():
    box = StateFamily.box(1.0)
    assert outside_probability(box, REL, 0.0) == 0.0
    N = outside_probability(box, REL, 0.5)
    assert N > 0
    assert N == pytest.approx(m_of_region(box, REL, 0.5, SpatialRegion.symmetric(1.0)), abs=1e-9)
    with pytest.raises(ConfigError):
        outside_probability(GAUSS, REL, 0.5)


def test_n_tilde_zero_at_t_zero():
    assert n_tilde_packet(GAUSS, REL, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_n_tilde_bounds_m_tilde():
    fam = StateFamily.gaussian(1e-2)
    for t in (0.3, 0.64, 1.5):
        assert n_tilde_packet(fam, REL, t) >= m_tilde(fam, REL, t)[0] - 1e-4


def test_hegerfeldt_witness():
    w = hegerfeldt_witness(GAUSS, REL, 0.81)
    assert w is not None
    c, r = w
    assert r > 0
    assert hegerfeldt_witness(GAUSS, REL, 0.0) is None
    assert hegerfeldt_witness(StateFamily.sech(1.0), REL, 1.0) is None


def test_scaling_trivial():
    rel, left, right = scaling_check(GAUSS, 1.0, 0.5, SpatialRegion.symmetric(1.0))
    assert rel == 0.0 and left == right


@pytest.mark.parametrize(
    "family, m, t, a",
    [
        (StateFamily.gaussian(1.0), 2.0, 0.4, 1.45),
        (StateFamily.sech(3.0), 0.5, 0.8, 1.4),
        (StateFamily.gaussian(0.1), 1.37, 0.55, 0.6),
        (StateFamily.sinc_sech(1.5), 0.83, 0.9, 2.3),
    ],
)
def test_scaling_identity(family, m, t, a):
    rel, _, _ = scaling_check(family, m, t, SpatialRegion.symmetric(a))
    assert rel < 1e-6
