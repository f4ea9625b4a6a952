import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ancient_flows.variational import (DomainError, EllipticFunctional, NotCriticalError, PeriodicGrid, evaluate,
                                       get_functional, gradient, gradient_jacobian, gradient_split)


def test_spectral_derivatives_exact_on_trig_polynomials():
    g = PeriodicGrid(32)
    u = np.sin(3 * g.theta) + 0.5 * np.cos(5 * g.theta)
    assert np.allclose(g.d1(u), 3 * np.cos(3 * g.theta) - 2.5 * np.sin(5 * g.theta), atol=1e-12)
    assert np.allclose(g.d2(u), -9 * np.sin(3 * g.theta) - 12.5 * np.cos(5 * g.theta), atol=1e-11)


def test_fd2_second_order():
    errs = []
    for n in (32, 64, 128):
        g = PeriodicGrid(n, scheme="fd2")
        errs.append(np.max(np.abs(g.d2(np.sin(2 * g.theta)) + 4 * np.sin(2 * g.theta))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)


def test_equator_length_and_criticality():
    fn = get_functional("sphere")
    g = PeriodicGrid(64)
    assert evaluate(fn, g, np.zeros(g.n)) == pytest.approx(2 * math.pi, abs=1e-13)
    assert np.max(np.abs(gradient(fn, g, np.zeros(g.n)))) == 0.0


def test_other_great_circles_are_critical():
    # tilted great circles: tan(u) = c sin(theta)
    fn = get_functional("sphere")
    g = PeriodicGrid(128)
    u = np.arctan(0.3 * np.sin(g.theta + 0.4))
    assert np.max(np.abs(gradient(fn, g, u))) < 1e-12


def test_domain_error_beyond_graphical_bound():
    fn = get_functional("sphere")
    g = PeriodicGrid(16)
    with pytest.raises(DomainError):
        evaluate(fn, g, np.full(g.n, 1.6))


def test_rejects_non_elliptic_integrand():
    def zero(x, z, q):
        return 0.0 * q

    with pytest.raises(ValueError):
        EllipticFunctional("bad", A=lambda x, z, q: -q**2, A_z=zero, A_q=lambda x, z, q: -2 * q, A_zz=zero,
                           A_zq=zero, A_qq=lambda x, z, q: -2.0 + 0 * q, z_bound=1.0)


def test_split_requires_critical_point():
    fn = get_functional("warped:poly")
    g = PeriodicGrid(16)
    split = gradient_split(fn, g)  # u = 0 is critical
    assert split.L.matrix.shape == (16, 16)
    tilted = EllipticFunctional("tilted", A=lambda x, z, q: np.sqrt(q**2 + 1) + z, A_z=lambda x, z, q: 1 + 0 * z,
                                A_q=lambda x, z, q: q / np.sqrt(q**2 + 1), A_zz=lambda x, z, q: 0 * z,
                                A_zq=lambda x, z, q: 0 * z, A_qq=lambda x, z, q: (q**2 + 1) ** -1.5, z_bound=1.0)
    with pytest.raises(NotCriticalError):
        gradient_split(tilted, g)


def test_split_reconstructs_gradient(rng):
    fn = get_functional("sphere")
    g = PeriodicGrid(64)
    split = gradient_split(fn, g)
    u = 0.05 * rng.standard_normal(g.n)
    u = np.fft.irfft(np.fft.rfft(u) * (np.arange(33) < 6), n=64)
    total = split.linear(u) + split.remainder(u)
    assert np.max(np.abs(total - gradient(fn, g, u))) <= 8 * np.finfo(float).eps * np.max(np.abs(gradient(fn, g, u)))


def test_jacobian_matches_difference_quotients(rng):
    fn = get_functional("sphere")
    g = PeriodicGrid(32)
    u = 0.1 * np.cos(g.theta) + 0.05 * np.sin(2 * g.theta)
    v = np.cos(3 * g.theta)
    J = gradient_jacobian(fn, g, u)
    h = 1e-6
    fd = (gradient(fn, g, u + h * v) - gradient(fn, g, u - h * v)) / (2 * h)
    assert np.max(np.abs(J @ v - fd)) < 1e-6


coeffs = st.lists(st.floats(-0.1, 0.1), min_size=3, max_size=3)


@settings(max_examples=25, deadline=None)
@given(c=coeffs, d=coeffs)
def test_gradient_is_negative_first_variation(c, d):
    fn = get_functional("sphere")
    g = PeriodicGrid(64)
    u = sum(ck * np.cos(k * g.theta) for k, ck in enumerate(c))
    v = sum(dk * np.sin((k + 1) * g.theta) for k, dk in enumerate(d)) + 0.01
    h = 1e-5
    dA = (evaluate(fn, g, u + h * v) - evaluate(fn, g, u - h * v)) / (2 * h)
    assert dA == pytest.approx(-g.inner(gradient(fn, g, u), v), abs=1e-8)


def test_unknown_functional():
    with pytest.raises(KeyError):
        get_functional("torus")
