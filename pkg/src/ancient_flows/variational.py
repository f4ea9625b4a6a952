"""Periodic one-dimensional elliptic functionals and their negative gradients.

A functional is ``A(f) = int_0^L A(x, f, f_x) dx`` on a periodic grid.  Its
negative L^2 gradient is evaluated in non-divergence form,

    H(u) = A_qq u'' + A_zq u' + A_qx - A_z,

with all partial derivatives taken at ``(x, u, u')``.  Fields are plain numpy
arrays whose last axis runs over the grid, so a whole trajectory of shape
``(n_times, n)`` can be pushed through the same call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "NotCriticalError",
    "PeriodicGrid",
    "EllipticFunctional",
    "GradientSplit",
    "builtin_sphere_functional",
    "warped_length_functional",
    "register_functional",
    "get_functional",
    "evaluate",
    "gradient",
    "gradient_jacobian",
    "gradient_split",
]


class DomainError(ValueError):
    """A field left the validity domain of a functional (lost graphicality)."""


class NotCriticalError(ValueError):
    """The zero field is not a critical point of the functional."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid ``theta_i = i*h`` on a circle of given length.

    ``scheme`` selects the differentiation rule: ``"spectral"`` (Fourier
    pseudo-spectral, the default) or ``"fd2"`` (centered second-order
    differences).
    """

    n: int
    length: float = 2.0 * np.pi
    scheme: str = "spectral"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"grid needs n >= 8 points, got {self.n}")
        if not self.length > 0:
            raise ValueError("grid length must be positive")
        if self.scheme not in ("spectral", "fd2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def _wavenumbers(self):
        return 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.h)

    def d1(self, u):
        u = np.asarray(u, dtype=float)
        if self.scheme == "fd2":
            return (np.roll(u, -1, axis=-1) - np.roll(u, 1, axis=-1)) / (2.0 * self.h)
        k = self._wavenumbers()
        mult = 1j * k
        if self.n % 2 == 0:
            mult[-1] = 0.0  # Nyquist mode has no real derivative
        return np.fft.irfft(mult * np.fft.rfft(u, axis=-1), n=self.n, axis=-1)

    def d2(self, u):
        u = np.asarray(u, dtype=float)
        if self.scheme == "fd2":
            return (np.roll(u, -1, axis=-1) - 2.0 * u + np.roll(u, 1, axis=-1)) / self.h**2
        k = self._wavenumbers()
        return np.fft.irfft(-(k**2) * np.fft.rfft(u, axis=-1), n=self.n, axis=-1)

    def d1_matrix(self) -> np.ndarray:
        return self.d1(np.eye(self.n)).T

    def d2_matrix(self) -> np.ndarray:
        m = self.d2(np.eye(self.n)).T
        return 0.5 * (m + m.T)

    def inner(self, u, v):
        """Grid L^2 inner product (periodic trapezoid rule) over the last axis."""
        return self.h * np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def norm(self, u):
        return np.sqrt(self.inner(u, u))

    def c_norm(self, u, order: int = 2):
        """Discrete C^k norm: sum of sup norms of derivatives up to ``order``."""
        u = np.asarray(u, dtype=float)
        total = np.max(np.abs(u), axis=-1)
        if order >= 1:
            total = total + np.max(np.abs(self.d1(u)), axis=-1)
        if order >= 2:
            total = total + np.max(np.abs(self.d2(u)), axis=-1)
        return total


Callback = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _zero(x, z, q):
    return np.zeros(np.broadcast(x, z, q).shape)


@dataclass(frozen=True)
class EllipticFunctional:
    """Integrand ``A(x, z, q)`` with analytic first and second partials.

    ``A_qx`` is optional and defaults to zero (integrands whose flux does not
    depend explicitly on position).  ``z_bound`` is the validity domain
    ``|z| <= z_bound`` including the graphicality margin.
    """

    name: str
    A: Callback
    A_z: Callback
    A_q: Callback
    A_zz: Callback
    A_zq: Callback
    A_qq: Callback
    A_qx: Callback = _zero
    z_bound: float = np.inf
    ellipticity: float = field(init=False, default=np.nan)

    def __post_init__(self):
        xs = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
        c = float(np.min(self.A_qq(xs, np.zeros_like(xs), np.zeros_like(xs))))
        if not c > 0:
            raise ValueError(f"{self.name}: Legendre-Hadamard condition fails (min A_qq = {c})")
        object.__setattr__(self, "ellipticity", c)

    def check_domain(self, u):
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise DomainError(f"{self.name}: non-finite field values")
        peak = float(np.max(np.abs(u))) if u.size else 0.0
        if peak > self.z_bound:
            raise DomainError(
                f"{self.name}: |u| = {peak:.6g} exceeds the graphical bound {self.z_bound:.6g}"
            )


_MARGIN = 0.05


def builtin_sphere_functional() -> EllipticFunctional:
    """Length of the latitude graph ``theta -> (theta, u(theta))`` in the round sphere.

    In latitude/longitude coordinates the line element is
    ``sqrt(u_theta^2 + cos(u)^2)``; the equator ``u = 0`` is critical.
    """

    def A(x, z, q):
        return np.sqrt(q**2 + np.cos(z) ** 2)

    def A_z(x, z, q):
        return -np.sin(z) * np.cos(z) / A(x, z, q)

    def A_q(x, z, q):
        return q / A(x, z, q)

    def A_qq(x, z, q):
        return np.cos(z) ** 2 / A(x, z, q) ** 3

    def A_zq(x, z, q):
        return q * np.sin(z) * np.cos(z) / A(x, z, q) ** 3

    def A_zz(x, z, q):
        w = A(x, z, q)
        sc = np.sin(z) * np.cos(z)
        return -np.cos(2.0 * z) / w - sc**2 / w**3

    return EllipticFunctional(
        name="sphere", A=A, A_z=A_z, A_q=A_q, A_zz=A_zz, A_zq=A_zq, A_qq=A_qq,
        z_bound=np.pi / 2 - _MARGIN,
    )


def warped_length_functional(name, f, df, d2f, z_max, margin=_MARGIN) -> EllipticFunctional:
    """Length of a graph ``s = u(theta)`` in the metric ``ds^2 + exp(2 f(s)) dtheta^2``.

    ``f``, ``df``, ``d2f`` are the warping function and its first two
    derivatives; each must accept arrays.
    """

    def E(z):
        return np.exp(2.0 * f(z))

    def A(x, z, q):
        return np.sqrt(q**2 + E(z))

    def A_z(x, z, q):
        return df(z) * E(z) / A(x, z, q)

    def A_q(x, z, q):
        return q / A(x, z, q)

    def A_qq(x, z, q):
        return E(z) / A(x, z, q) ** 3

    def A_zq(x, z, q):
        return -q * df(z) * E(z) / A(x, z, q) ** 3

    def A_zz(x, z, q):
        w = A(x, z, q)
        e = E(z)
        g = df(z)
        return (d2f(z) + 2.0 * g**2) * e / w - (g * e) ** 2 / w**3

    return EllipticFunctional(
        name=name, A=A, A_z=A_z, A_q=A_q, A_zz=A_zz, A_zq=A_zq, A_qq=A_qq,
        z_bound=z_max - margin,
    )


_REGISTRY: dict[str, Callable[[], EllipticFunctional]] = {"sphere": builtin_sphere_functional}


def register_functional(name: str, factory: Callable[[], EllipticFunctional]) -> None:
    _REGISTRY[name] = factory


def get_functional(name: str) -> EllipticFunctional:
    """Look up a functional by name: ``"sphere"`` or ``"warped:<example-id>"``."""
    if name.startswith("warped:") and name not in _REGISTRY:
        from . import slow_examples  # registers the warped built-ins

        slow_examples.register_warped_builtins()
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown functional {name!r}; known: {sorted(_REGISTRY)}") from None


def _state(grid: PeriodicGrid, u):
    u = np.asarray(u, dtype=float)
    x = np.broadcast_to(grid.theta, u.shape)
    return x, u, grid.d1(u)


def evaluate(functional: EllipticFunctional, grid: PeriodicGrid, u):
    """Total functional ``sum_i h A(theta_i, u_i, (Du)_i)`` (per row for stacked fields)."""
    functional.check_domain(u)
    x, z, q = _state(grid, u)
    return grid.h * np.sum(functional.A(x, z, q), axis=-1)


def gradient(functional: EllipticFunctional, grid: PeriodicGrid, u):
    """Negative L^2 gradient ``H(u)`` of the functional."""
    functional.check_domain(u)
    x, z, q = _state(grid, u)
    uxx = grid.d2(u)
    return (
        functional.A_qq(x, z, q) * uxx
        + functional.A_zq(x, z, q) * q
        + functional.A_qx(x, z, q)
        - functional.A_z(x, z, q)
    )


def _partial(fn, x, z, q, wrt, eps=1e-3):
    # five-point stencil; truncation ~eps^4, applied pointwise so no grid amplification
    def at(s):
        if wrt == "z":
            return fn(x, z + s, q)
        return fn(x, z, q + s)

    return (-at(2 * eps) + 8 * at(eps) - 8 * at(-eps) + at(-2 * eps)) / (12 * eps)


def gradient_jacobian(functional: EllipticFunctional, grid: PeriodicGrid, u) -> np.ndarray:
    """Dense matrix of the derivative of ``gradient`` at the single field ``u``.

    Second partials come from the callbacks; the third partials multiplying
    ``u'`` and ``u''`` are taken by pointwise finite differences of the
    second-partial callbacks.
    """
    x, z, q = _state(grid, u)
    uxx = grid.d2(u)
    f = functional
    c2 = f.A_qq(x, z, q)
    c1 = (
        _partial(f.A_qq, x, z, q, "q") * uxx
        + _partial(f.A_zq, x, z, q, "q") * q
        + _partial(f.A_qx, x, z, q, "q")
    )
    c0 = (
        _partial(f.A_qq, x, z, q, "z") * uxx
        + _partial(f.A_zq, x, z, q, "z") * q
        + _partial(f.A_qx, x, z, q, "z")
        - f.A_zz(x, z, q)
    )
    return c2[:, None] * grid.d2_matrix() + c1[:, None] * grid.d1_matrix() + np.diag(c0)


@dataclass(frozen=True)
class GradientSplit:
    """``H(u) = L u + remainder(u)`` about the critical point ``u = 0``."""

    functional: EllipticFunctional
    grid: PeriodicGrid
    L: "DiscreteOperator"  # noqa: F821 - defined in spectral_core

    def linear(self, u):
        return np.asarray(u, dtype=float) @ self.L.matrix.T

    def remainder(self, u):
        return gradient(self.functional, self.grid, u) - self.linear(u)


def gradient_split(functional: EllipticFunctional, grid: PeriodicGrid, tol: float = 1e-10) -> GradientSplit:
    """Linearize the gradient at zero; raises NotCriticalError if ``H(0) != 0``."""
    from .spectral_core import DiscreteOperator

    zero = np.zeros(grid.n)
    h0 = gradient(functional, grid, zero)
    if np.max(np.abs(h0)) > tol:
        raise NotCriticalError(
            f"{functional.name}: |H(0)| = {np.max(np.abs(h0)):.3g} exceeds {tol:g}"
        )
    x = grid.theta
    c2 = functional.A_qq(x, zero, zero)
    c1 = _partial(functional.A_qx, x, zero, zero, "q")
    c0 = _partial(functional.A_qx, x, zero, zero, "z") - functional.A_zz(x, zero, zero)
    mat = c2[:, None] * grid.d2_matrix() + c1[:, None] * grid.d1_matrix() + np.diag(c0)
    return GradientSplit(functional, grid, DiscreteOperator(grid, mat))
