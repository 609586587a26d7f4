import numpy as np
import pytest

from causalflow.continuity import (
    SampledFlow,
    causal_current_check,
    continuity_residual_check,
    velocity_bound_check,
)
from causalflow.dirac import current, evolve_dirac, gaussian_spinor, spinor_grid
from causalflow.quantify import measures_n_tilde


def bump_flow(v=0.6, nt=41, nx=801, T=2.0, L=10.0):
    t = np.linspace(0, T, nt)
    x = np.linspace(-L, L, nx)
    rho = np.exp(-((x[None, :] - v * t[:, None]) ** 2)) / np.sqrt(np.pi)
    return SampledFlow(t, x, rho, v * rho)


def test_static_density():
    f = bump_flow(v=0.0)
    assert causal_current_check(f) == (True, 0.0)
    assert velocity_bound_check(f) == (True, 0.0)


def test_null_flow():
    f = bump_flow(v=1.0)
    ok, ratio = causal_current_check(f)
    assert ok and ratio == pytest.approx(1.0, abs=1e-15)
    ok, vmax = velocity_bound_check(f)
    assert ok and vmax == pytest.approx(1.0, abs=1e-15)


def test_spacelike_current_rejected():
    f = bump_flow(v=0.5)
    j = f.j.copy()
    j[10, 400] = 1.5 * f.rho[10, 400]
    bad = SampledFlow(f.t, f.x, f.rho, j)
    assert not causal_current_check(bad)[0]
    assert not velocity_bound_check(bad)[0]


def test_fast_flow_rejected():
    ok, vmax = velocity_bound_check(bump_flow(v=2.0))
    assert not ok and vmax == pytest.approx(2.0)


def test_current_without_density_flagged():
    t, x = np.linspace(0, 1, 3), np.linspace(0, 1, 4)
    rho = np.ones((3, 4))
    rho[1, 2] = 0.0
    j = np.zeros((3, 4))
    j[1, 2] = 1e-3
    assert causal_current_check(SampledFlow(t, x, rho, j)) == (False, float("inf"))
    # velocity is defined as zero where rho vanishes
    assert velocity_bound_check(SampledFlow(t, x, rho, j)) == (True, 0.0)


def test_translating_bump_residual_is_discretization_only():
    r1 = continuity_residual_check(bump_flow(nt=41, nx=801))
    r2 = continuity_residual_check(bump_flow(nt=81, nx=1601))
    assert r1 < 1e-2
    assert 3.5 < r1 / r2 < 4.5


def test_decaying_density_has_large_residual():
    t = np.linspace(0, 1, 21)
    x = np.linspace(-5, 5, 201)
    rho = np.exp(-t[:, None]) * np.exp(-x[None, :] ** 2)
    assert continuity_residual_check(SampledFlow(t, x, rho, np.zeros_like(rho))) > 0.1


def test_dirac_flow():
    grid = spinor_grid(1.0, 0.0, 0.5, 1.0, dx_max=0.05)
    f0 = gaussian_spinor(grid, 1.0, 1.0, boost=0.5, upper=1.0, lower=0.5j)
    ts = np.linspace(0.0, 0.02, 5)
    curs = [current(evolve_dirac(f0, s)) for s in ts]
    keep = np.abs(grid.x) < 8
    flow = SampledFlow(ts, grid.x[keep], np.array([c.rho[keep] for c in curs]), np.array([c.j[keep] for c in curs]))
    assert causal_current_check(flow)[0]
    ok, vmax = velocity_bound_check(flow)
    assert ok and vmax <= 1
    fine = spinor_grid(1.0, 0.0, 0.5, 1.0, dx_max=0.001)
    f0 = gaussian_spinor(fine, 1.0, 1.0, boost=0.5, upper=1.0, lower=0.5j)
    ts = np.linspace(0.0, 4e-4, 3)
    curs = [current(evolve_dirac(f0, s)) for s in ts]
    keep = np.abs(fine.x) < 8
    flow = SampledFlow(ts, fine.x[keep], np.array([c.rho[keep] for c in curs]), np.array([c.j[keep] for c in curs]))
    assert continuity_residual_check(flow) < 1e-6


def test_causal_current_implies_precedence():
    f = bump_flow(v=0.8, nt=11, nx=401)
    assert causal_current_check(f)[0]
    assert continuity_residual_check(f) < 1e-1
    dx = f.dx
    first = f.slice_measure(0)
    for i in range(1, f.t.size):
        later = f.slice_measure(i)
        assert measures_n_tilde(first, later, slack=dx) <= 1e-6


def test_csv_round_trip(tmp_path):
    f = bump_flow(nt=4, nx=9)
    path = tmp_path / "flow.csv"
    f.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,x,rho,j"
    g = SampledFlow.from_csv(path)
    np.testing.assert_array_equal(g.rho, f.rho)
    np.testing.assert_array_equal(g.j, f.j)


def test_csv_rejects_ragged_grid(tmp_path):
    path = tmp_path / "flow.csv"
    path.write_text("t,x,rho,j\n0,0,1,0\n0,1,1,0\n1,0,1,0\n")
    with pytest.raises(ValueError):
        SampledFlow.from_csv(path)


def test_validation():
    t, x = np.linspace(0, 1, 3), np.linspace(0, 1, 4)
    with pytest.raises(ValueError):
        SampledFlow(t, x, -np.ones((3, 4)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        SampledFlow(t, x, np.ones((4, 3)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        SampledFlow(t, x, np.full((3, 4), np.nan), np.zeros((3, 4)))
    uneven = SampledFlow(t, np.array([0, 0.1, 0.5, 1.0]), np.ones((3, 4)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        continuity_residual_check(uneven)
