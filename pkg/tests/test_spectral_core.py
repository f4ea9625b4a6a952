import numpy as np
import pytest

from ancient_flows.spectral_core import (DiscreteOperator, ResolutionError, eigendecompose, export_eigensystem,
                                         iota_minus, iota_zero, mode_coefficients, project_neutral,
                                         project_stable, project_unstable, weighted_norm)
from ancient_flows.trajectory import FlowTrajectory
from ancient_flows.variational import PeriodicGrid


def test_sphere_spectrum(sphere64):
    _, _, _, es = sphere64
    expected = [-1, 0, 0, 3, 3, 8, 8, 15, 15]
    assert np.allclose(es.lambdas[:9], expected, atol=1e-9)
    assert (es.index, es.nullity) == (1, 2)
    assert es.first_stable_lambda == pytest.approx(3.0)


def test_modes_orthonormal_and_signed(sphere64):
    _, g, _, es = sphere64
    gram = g.h * es.phis @ es.phis.T
    assert np.allclose(gram, np.eye(g.n), atol=1e-10)
    for phi in es.phis:
        big = np.argmax(np.abs(phi))
        assert phi[big] > 0


def test_projections_partition_identity(sphere64, rng):
    _, g, _, es = sphere64
    u = rng.standard_normal(g.n)
    total = project_unstable(es, u) + project_neutral(es, u) + project_stable(es, u)
    assert np.allclose(total, u, atol=1e-12)


def test_injections(sphere64):
    _, g, _, es = sphere64
    t = np.array([-2.0, -1.0, 0.0])
    u = iota_minus(es, [0.3], t)
    assert np.allclose(u, 0.3 / np.sqrt(2 * np.pi) * np.exp(t)[:, None], atol=1e-12)
    with pytest.raises(ValueError):
        iota_minus(es, [0.3], [0.5])
    w = iota_zero(es, [0.1, -0.2])
    assert np.allclose(mode_coefficients(es, w)[es.neutral], [0.1, -0.2], atol=1e-12)


def test_operator_must_be_symmetric():
    g = PeriodicGrid(8)
    with pytest.raises(ValueError):
        DiscreteOperator(g, np.triu(np.ones((8, 8))))


def test_weighted_norm_scaling():
    g = PeriodicGrid(32)
    t = np.linspace(-6, 0, 601)
    traj = FlowTrajectory.from_function(g, t, lambda th, tt: np.exp(tt) * np.cos(th))
    n1 = weighted_norm(traj, 2, 0.5, 0.5)
    doubled = FlowTrajectory(g, t, 2 * traj.fields)
    assert weighted_norm(doubled, 2, 0.5, 0.5) == pytest.approx(2 * n1, rel=1e-12)
    assert weighted_norm(FlowTrajectory(g, t, 0 * traj.fields), 2, 0.5, 0.5) == 0.0


def test_weighted_norm_needs_resolution():
    g = PeriodicGrid(16)
    t = np.linspace(-4, 0, 5)
    traj = FlowTrajectory(g, t, np.zeros((5, 16)))
    with pytest.raises(ResolutionError):
        weighted_norm(traj, 2, 0.5, 0.5)


def test_export(tmp_path, sphere64):
    _, _, _, es = sphere64
    eig, modes = export_eigensystem(es, tmp_path)
    lines = eig.read_text().splitlines()
    assert lines[0] == "j,lambda_j" and len(lines) == 65
    assert float(lines[1].split(",")[1]) == pytest.approx(-1.0)
    assert modes.exists()
