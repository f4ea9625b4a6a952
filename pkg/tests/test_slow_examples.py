import math

import numpy as np
import pytest
from scipy import special

from ancient_flows.slow_examples import (ArrivalFunction, InadmissibleArrivalError, LatitudeFlow, arrival_from_csv,
                                         arrival_time_check, build_warping, builtin_arrival, check_admissible,
                                         l1_hypothesis_audit, latitude_flow, log_decay_check)
from ancient_flows.flow_simulator import evolve
from ancient_flows.variational import PeriodicGrid, get_functional


@pytest.mark.parametrize("name, F", [("exp", lambda s: s**2 / 2), ("poly", lambda s: s**3 / 3),
                                     ("sublog", lambda s: s**3 * special.expn(4, 1 / s))])
def test_warping_tables(name, F):
    m = build_warping(builtin_arrival(name))
    assert np.max(np.abs(m.f_table[1:] + F(m.s_table[1:]))) < 1e-12
    assert m.f_table[0] == 0.0


def test_sublog_quadrature_self_convergence():
    m = build_warping(builtin_arrival("sublog"))
    for s in (0.1, 0.4, 0.9):
        assert abs(m.f(s, tol=1e-9)[0] - m.f(s, tol=1e-13)[0]) < 1e-8


def test_inadmissible_arrivals():
    shifted = ArrivalFunction("shifted", lambda s: np.log(s) + 1, lambda s: 1 / s)
    with pytest.raises(InadmissibleArrivalError, match="normalization"):
        check_admissible(shifted)
    bounded = ArrivalFunction("bounded", lambda s: s - 1, lambda s: 1 + 0 * s)
    with pytest.raises(InadmissibleArrivalError, match="divergence"):
        check_admissible(bounded)
    slow_integral = ArrivalFunction("nonintegrable", lambda s: s**2 / 2 - 0.5 + 0 * s, lambda s: s)
    with pytest.raises(InadmissibleArrivalError):
        check_admissible(slow_integral)


def test_exp_closed_form():
    tr = latitude_flow(builtin_arrival("exp"), 0.5, 0.0, -10.0, 0.01)
    assert np.max(np.abs(tr.s - 0.5 * np.exp(tr.times))) < 1e-13


def test_poly_closed_form():
    tr = latitude_flow(builtin_arrival("poly"), 0.5, 0.0, -10.0, 0.01)
    assert np.max(np.abs(tr.s - 1 / (2 - tr.times))) < 1e-13


def test_forward_run_leaves_domain():
    tr = latitude_flow(builtin_arrival("exp"), 0.5, 0.0, 2.0, 0.01)
    assert tr.status == "left_domain"
    assert tr.times[-1] < math.log(2) + 0.01


@pytest.mark.parametrize("name", ["exp", "poly", "sublog"])
def test_arrival_identity(name):
    arr = builtin_arrival(name)
    tr = latitude_flow(arr, 0.5, 0.0, -50.0, 0.05)
    rep = arrival_time_check(tr, arr)
    assert rep["residual"] < 1e-8
    assert rep["shift"] == pytest.approx(-float(arr.tau(0.5)), abs=1e-8)
    assert np.all(np.diff(tr.s) < 0)  # s decreases backward in time


def test_arrival_check_needs_samples():
    one = LatitudeFlow(np.array([0.0]), np.array([0.5]), np.array([0.0]), "ok", "exp")
    with pytest.raises(ValueError, match="insufficient"):
        arrival_time_check(one, builtin_arrival("exp"))


def test_l1_audits():
    horizons = (10.0, 100.0, 1000.0)
    exp = l1_hypothesis_audit(latitude_flow(builtin_arrival("exp"), 0.5, 0.0, -1e3, 1.0), horizons)
    assert exp["classification"] == "convergent"
    assert exp["integrals"][-1] == pytest.approx(0.5, abs=1e-12)
    poly = l1_hypothesis_audit(latitude_flow(builtin_arrival("poly"), 0.5, 0.0, -1e3, 1.0), horizons)
    assert poly["classification"] == "divergent"
    assert poly["integrals"] == pytest.approx([math.log(1 + T / 2) for T in horizons], rel=1e-10)
    with pytest.raises(ValueError):
        l1_hypothesis_audit(latitude_flow(builtin_arrival("poly"), 0.5, 0.0, -10.0, 1.0), horizons)


def test_sublog_decay_rate():
    tr = latitude_flow(builtin_arrival("sublog"), 0.5, 0.0, -1e4, 1.0)
    rep = log_decay_check(tr)
    assert rep["relative_spread"] < 0.1
    assert l1_hypothesis_audit(tr)["classification"] == "divergent"


def test_custom_table(tmp_path):
    s = np.geomspace(1e-4, 1.0, 80)
    path = tmp_path / "tau.csv"
    path.write_text("s,tau\n" + "\n".join(f"{a:.17g},{math.log(a):.17g}" for a in s))
    arr = arrival_from_csv(path)
    rep = check_admissible(arr)
    assert rep["integral"] == pytest.approx(0.5, abs=1e-4)
    tr = latitude_flow(arr, 0.5, 0.0, -3.0, 0.01)
    assert np.max(np.abs(tr.s - 0.5 * np.exp(tr.times))) < 1e-4
    bad = tmp_path / "bad.csv"
    bad.write_text("0.1,-1\n0.2,-2\n0.5,-3\n1.0,0\n")
    with pytest.raises(InadmissibleArrivalError, match="monotone"):
        arrival_from_csv(bad)


def test_graph_flow_of_warped_latitude():
    # symmetric data stays symmetric; a constant graph moves by u' = -f'(u) exp(f(u)) = u exp(-u^2/2)
    from scipy.integrate import solve_ivp

    fn = get_functional("warped:exp")
    g = PeriodicGrid(32)
    tr = evolve(fn, g, np.full(g.n, 0.3), 0.0, 1.0, dt=1e-3)
    ref = solve_ivp(lambda t, u: u * np.exp(-u**2 / 2), (0, 1), [0.3], rtol=1e-12, atol=1e-14).y[0, -1]
    assert np.ptp(tr.fields[-1]) < 1e-12
    assert abs(tr.fields[-1, 0] - ref) < 1e-6
