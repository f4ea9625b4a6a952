import math

import numpy as np
import pytest

from ancient_flows.ancient_constructor import (DivergenceError, construct_ancient, fit_order, verify_quadratic_envelope,
                                               weighted_distance)


def closed_form(a, t):
    return 2 * np.arctan(np.tan(a / (2 * math.sqrt(2 * math.pi))) * np.exp(t))


@pytest.mark.parametrize("a", [0.05, -0.1])
def test_matches_closed_form(sphere64, a):
    _, g, split, es = sphere64
    sol = construct_ancient(split, es, [a], T_max=10.0, dt=1e-3)
    err = np.max(np.abs(sol.trajectory.fields - closed_form(a, sol.trajectory.times)[:, None]))
    assert err < 1e-9
    assert all(r < 1 for r in sol.contraction_ratios)


def test_zero_parameter_gives_critical_point(sphere64):
    _, g, split, es = sphere64
    sol = construct_ancient(split, es, [0.0], T_max=10.0, dt=1e-2)
    assert np.max(np.abs(sol.trajectory.fields)) == 0.0


def test_rate_must_sit_in_spectral_gap(sphere64):
    _, g, split, es = sphere64
    with pytest.raises(ValueError):
        construct_ancient(split, es, [0.1], rate=1.5, T_max=10.0, dt=1e-2)


def test_iteration_budget_exhausted(sphere64):
    _, g, split, es = sphere64
    with pytest.raises(DivergenceError):
        construct_ancient(split, es, [0.2], T_max=10.0, dt=1e-2, max_iter=1)


def test_envelope_distance_is_odd_order(sphere64):
    # the sphere remainder is odd in u, so the distance to the linear flow scales like |a|^3
    _, g, split, es = sphere64
    sols = [construct_ancient(split, es, [a], T_max=10.0, dt=1e-2) for a in (0.05, 0.1, 0.2)]
    rep = verify_quadratic_envelope(sols, es)
    assert rep["all_finite"]
    assert rep["fitted_exponent"] == pytest.approx(3.0, abs=0.05)
    assert weighted_distance(sols[0], es) > 0


def test_fit_order():
    s = np.array([0.2, 0.1, 0.05])
    assert fit_order(s, 3 * s**2) == pytest.approx(2.0)
