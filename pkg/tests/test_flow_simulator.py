import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ancient_flows.ancient_constructor import construct_ancient
from ancient_flows.flow_simulator import (check_caccioppoli, energy_identity, evolve, evolve_parametric_latitude,
                                          fit_decay_rate, mode_energies, mode_energy_constant, verify_mode_inequalities)
from ancient_flows.trajectory import GRAPHICALITY_LOST, OK
from ancient_flows.variational import PeriodicGrid, get_functional


def test_constant_latitude_matches_ode():
    # a constant graph u moves by u' = -A_z(u, 0) = sin u
    fn = get_functional("sphere")
    g = PeriodicGrid(32)
    traj = evolve(fn, g, np.full(g.n, 0.2), 0.0, 1.0, dt=1e-3)
    ref = solve_ivp(lambda t, u: np.sin(u), (0, 1), [0.2], rtol=1e-12, atol=1e-14).y[0, -1]
    assert traj.status == OK
    assert abs(traj.fields[-1, 0] - ref) < 1e-6
    assert np.ptp(traj.fields[-1]) < 1e-12


def test_stable_mode_decays_at_its_eigenvalue():
    fn = get_functional("sphere")
    g = PeriodicGrid(64)
    traj = evolve(fn, g, 1e-4 * np.cos(2 * g.theta), 0.0, 1.0, dt=1e-3)
    slope = np.polyfit(traj.times, np.log(g.norm(traj.fields)), 1)[0]
    assert slope == pytest.approx(-3.0, abs=0.01)


def test_energy_identity_and_monotonicity():
    fn = get_functional("sphere")
    g = PeriodicGrid(64)
    u0 = 0.1 + 0.05 * np.cos(2 * g.theta) + 0.03 * np.sin(3 * g.theta)
    rep = energy_identity(fn, evolve(fn, g, u0, 0.0, 1.0, dt=1e-3))
    assert rep["monotone"] and rep["delta_A"] < 0
    assert rep["relative_mismatch"] < 1e-4


def test_leaving_graphical_domain():
    fn = get_functional("sphere")
    g = PeriodicGrid(32)
    traj = evolve(fn, g, np.full(g.n, 1.2), 0.0, 3.0, dt=1e-3)
    # u' = sin u reaches the bound pi/2 - 0.05 at t = log(tan(0.7604) / tan(0.6))
    assert traj.status == GRAPHICALITY_LOST
    assert traj.times[-1] == pytest.approx(math.log(math.tan((math.pi / 2 - 0.05) / 2) / math.tan(0.6)), abs=2e-3)
    assert np.ptp(traj.fields[-1]) < 1e-12


def test_time_span_must_divide():
    fn = get_functional("sphere")
    g = PeriodicGrid(16)
    with pytest.raises(ValueError):
        evolve(fn, g, np.zeros(16), 0.0, 1.0005, dt=1e-3)


@pytest.mark.parametrize("phi0", [0.2, -0.9, 1.3])
def test_parametric_latitude(phi0):
    tr = evolve_parametric_latitude(phi0, 0.0, 4.0, dt=1e-3)
    inv = np.sin(tr.phi) * np.exp(-tr.times)
    assert np.max(np.abs(inv - inv[0])) < 1e-8
    assert tr.extinction_time == pytest.approx(-math.log(math.sin(abs(phi0))), abs=1e-6)


def test_equator_never_goes_extinct():
    tr = evolve_parametric_latitude(0.0, 0.0, 1.0, dt=1e-2)
    assert tr.extinction_time == math.inf and np.all(tr.phi == 0)


def test_mode_diagnostics_on_ancient_solution(sphere64):
    _, g, split, es = sphere64
    sol = construct_ancient(split, es, [0.1], T_max=10.0, dt=1e-3)
    series = mode_energies(es, sol.trajectory)
    assert fit_decay_rate(series, (-8.0, -2.0))["rate"] == pytest.approx(1.0, abs=0.02)
    const = mode_energy_constant(series, g.n)
    assert const["constant"] == 0.0 and const["raw_constant"] < 1e-6
    ineq = verify_mode_inequalities(series, es)
    assert all(np.isfinite(v) for v in ineq.values())


def test_caccioppoli_refinement_stable():
    fn = get_functional("sphere")
    ratios = []
    for n in (64, 128):
        g = PeriodicGrid(n)
        u0 = 0.02 + 0.01 * np.cos(2 * g.theta)
        rep = check_caccioppoli(evolve(fn, g, u0, 0.0, 0.5, dt=1e-3))
        assert rep["in_smallness_regime"]
        ratios.append(rep["ratio"])
    assert ratios[0] == pytest.approx(ratios[1], rel=1e-6)
