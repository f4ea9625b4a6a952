import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ancient_flows.mz_ode import (CounterexampleAlarm, MZSystem, MZTrajectory, ancient_seeds, case_b_bound,
                                  inequality_residuals, integrate_mz, monte_carlo, random_mz_systems,
                                  verify_trichotomy)


def const(v):
    return lambda s: v


def test_decoupled_x_mode():
    sys = MZSystem(0.01, const(1.0), const(0.0), const(0.0))
    tr = integrate_mz(sys, (1.0, 0.0, 0.0))
    assert np.max(np.abs(tr.x - np.exp(0.01 * (tr.times + 50)))) < 1e-12
    assert np.all(tr.y == 0) and np.all(tr.z == 0)
    rep = verify_trichotomy(tr)
    assert rep["case"] == "A" and rep["s_star"] == 0.0


def test_decoupled_z_mode():
    sys = MZSystem(0.01, const(0.0), const(0.0), const(0.0))
    tr = integrate_mz(sys, (0.0, 0.0, 1.0))
    assert np.max(np.abs(tr.z / np.exp(tr.times + 50) - 1)) < 1e-8
    rep = verify_trichotomy(tr)
    assert rep["case"] == "B" and rep["case_b_constant"] == 0.0


def test_preconditions():
    sys = MZSystem(0.1, const(0.0), const(0.0), const(0.0))
    with pytest.raises(ValueError):
        integrate_mz(sys, (1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        integrate_mz(MZSystem(0.01, const(0.0), const(0.0), const(0.0)), (1.0, 0.0, 0.0), S=20)


def test_residual_check_flags_out_of_range_coefficients():
    bad = MZSystem(0.01, const(3.0), const(0.0), const(0.0))
    tr = integrate_mz(bad, (1.0, 0.0, 0.0))
    assert inequality_residuals(bad, tr)[0] > 1e-3


def test_alarm_when_neither_alternative_holds():
    t = np.linspace(-50, 0, 11)
    tr = MZTrajectory(t, np.ones(11), np.zeros(11), np.ones(11), 0.01)
    with pytest.raises(CounterexampleAlarm):
        verify_trichotomy(tr)
    assert verify_trichotomy(tr, raise_on_alarm=False)["case"] == "none"


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eps=st.sampled_from([0.005, 0.01, 0.05]))
def test_random_systems_satisfy_inequalities(seed, eps):
    seeds = [seed, seed + 1, seed + 2]
    sys = random_mz_systems(eps, seeds)
    tr = integrate_mz(sys, ancient_seeds(eps, seeds, 50.0), ds=0.02)
    assert np.max(inequality_residuals(sys, tr)) <= 1e-8
    assert np.all(tr.x >= 0) and np.all(tr.y >= 0) and np.all(tr.z >= 0)


def test_monte_carlo_small_batch_deterministic():
    a = monte_carlo(0.05, 40, seed=7, chunk=16)
    b = monte_carlo(0.05, 40, seed=7, chunk=40)
    assert json.dumps(a) == json.dumps(b)  # chunking does not change a bit
    s = a["summary"]
    assert s["pass_rate"] == 1.0
    assert s["case_counts"]["none"] == 0 and s["case_counts"]["AB"] == 0
    assert s["max_case_b_constant"] <= 1.1 * case_b_bound(0.05)
