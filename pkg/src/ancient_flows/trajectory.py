from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .variational import PeriodicGrid

OK = "ok"
GRAPHICALITY_LOST = "graphicality_lost"
BLOWN_UP = "blown_up"


@dataclass(frozen=True)
class FlowTrajectory:
    """Fields ``u(., t_i)`` on a uniform time grid, one row per time."""

    grid: PeriodicGrid
    times: np.ndarray
    fields: np.ndarray
    status: str = OK
    message: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        fields = np.asarray(self.fields, dtype=float)
        if fields.ndim != 2 or fields.shape != (times.size, self.grid.n):
            raise ValueError(f"fields must have shape ({times.size}, {self.grid.n}), got {fields.shape}")
        if times.size > 2:
            steps = np.diff(times)
            if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(steps[0])):
                raise ValueError("trajectory times must be increasing and uniform")
        times.setflags(write=False)
        fields.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fields", fields)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def ok(self) -> bool:
        return self.status == OK

    def window(self, t_start: float, t_end: float) -> "FlowTrajectory":
        pad = 1e-9 * max(1.0, self.dt)
        keep = (self.times >= t_start - pad) & (self.times <= t_end + pad)
        return FlowTrajectory(self.grid, self.times[keep], self.fields[keep], self.status, self.message)

    def time_derivative(self) -> np.ndarray:
        """Second-order finite-difference ``du/dt`` at every stored time."""
        if self.times.size < 3:
            raise ValueError("need at least three samples for a time derivative")
        return np.gradient(self.fields, self.times, axis=0, edge_order=2)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, times, fn) -> "FlowTrajectory":
        """Sample ``fn(theta, t)`` (broadcasting) on the grid."""
        times = np.asarray(times, dtype=float)
        return cls(grid, times, fn(grid.theta[None, :], times[:, None]) * np.ones((times.size, grid.n)))
