import numpy as np
import pytest

from ancient_flows.linear_solver import (Forcing, HorizonTooShortError, InadmissibleForcingError, linear_residual,
                                         solve_linear_ancient, verify_linear_bound)
from ancient_flows.spectral_core import mode_coefficients


def test_zero_forcing_returns_linear_flow(sphere64):
    _, g, _, es = sphere64
    sol = solve_linear_ancient(es, [0.2], Forcing.zero(), 10.0, 1e-2)
    expected = 0.2 * np.exp(sol.trajectory.times)[:, None] * es.phis[0]
    assert np.max(np.abs(sol.trajectory.fields - expected)) < 1e-14


def test_stable_mode_forced(sphere64):
    # u_t = L u + exp(2t) phi (lambda = 3): u = exp(2t)/5 phi
    _, g, split, es = sphere64
    j = es.index + es.nullity
    phi = es.phis[j]
    f = Forcing(lambda th, t: np.exp(2 * t) * phi, 2.0)
    sol = solve_linear_ancient(es, [0.0], f, 10.0, 1e-3)
    c = sol.coefficients
    t = sol.trajectory.times
    assert np.max(np.abs(c[:, j] - np.exp(2 * t) / 5)) < 1e-6
    others = np.delete(c, j, axis=1)
    assert np.max(np.abs(others)) < 1e-12


def test_unstable_mode_forced(sphere64):
    # u_t = u + exp(2t), u(0) = 0: u = exp(2t) - exp(t)
    _, g, _, es = sphere64
    phi = es.phis[0]
    f = Forcing(lambda th, t: np.exp(2 * t) * phi, 2.0)
    sol = solve_linear_ancient(es, [0.0], f, 10.0, 1e-3)
    t = sol.trajectory.times
    assert np.max(np.abs(sol.coefficients[:, 0] - (np.exp(2 * t) - np.exp(t)))) < 1e-6


def test_residual_second_order(sphere64):
    _, g, split, es = sphere64
    f = Forcing(lambda th, t: np.exp(1.5 * t) * np.cos(2 * th) * np.sin(t), 1.5)
    res = [linear_residual(solve_linear_ancient(es, [0.1], f, 12.0, dt), split.L) for dt in (2e-3, 1e-3)]
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.1)


def test_errors(sphere64):
    _, g, _, es = sphere64
    with pytest.raises(InadmissibleForcingError):
        solve_linear_ancient(es, [0.0], Forcing(lambda th, t: 0 * th + 0 * t, 0.0), 10.0, 1e-2)
    slow = Forcing(lambda th, t: np.exp(0.1 * t) + 0 * th, 0.1)
    with pytest.raises(HorizonTooShortError):
        solve_linear_ancient(es, [0.0], slow, 10.0, 1e-2)
    liar = Forcing(lambda th, t: 5 * np.exp(t) + 0 * th, 1.0, bound=1.0)
    with pytest.raises(InadmissibleForcingError):
        solve_linear_ancient(es, [0.0], liar, 20.0, 1e-2)
    with pytest.raises(ValueError):
        solve_linear_ancient(es, [0.0, 1.0], Forcing.zero(), 10.0, 1e-2)


def test_linear_bound_constant(sphere64):
    _, g, _, es = sphere64
    f = Forcing(lambda th, t: np.exp(2 * t) * np.cos(3 * th), 2.0)
    sol = solve_linear_ancient(es, [0.1], f, 10.0, 1e-2)
    rep = verify_linear_bound(sol, 2.0, 0.5)
    assert np.isfinite(rep["constant"]) and rep["constant"] > 0
    zero = solve_linear_ancient(es, [0.0], Forcing.zero(), 10.0, 1e-2)
    assert verify_linear_bound(zero, 2.0, 0.5)["constant"] == 0.0
    with pytest.raises(ValueError):
        verify_linear_bound(sol, 2.0, 1.5)
