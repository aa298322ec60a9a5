"""Toy manifolds with analytic tangents and a periodic viscous Burgers solver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ArgumentError, CFLError

__all__ = [
    "ManifoldSample",
    "BurgersRun",
    "gen_surface10",
    "gen_cylinder",
    "gen_spiral",
    "burgers_grid",
    "burgers_initial",
    "GENERATORS",
]


@dataclass
class ManifoldSample:
    points: np.ndarray  # m x n
    tangents: Optional[np.ndarray]  # m x n x r, orthonormal columns
    params: np.ndarray  # m x 2
    seed: Optional[int]
    name: str = ""


def _orthonormalize(jac):
    """Batch QR of ``m x n x r`` Jacobians, signs fixed so ``diag(R) > 0``."""
    q, r = np.linalg.qr(jac)
    s = np.sign(np.diagonal(r, axis1=1, axis2=2))
    s[s == 0] = 1.0
    return q * s[:, None, :]


def surface10_map(x1, x10):
    s1, c1 = np.sin(np.pi * x1), np.cos(np.pi * x1)
    s10, c10 = np.sin(np.pi * x10), np.cos(np.pi * x10)
    return np.stack(
        [x1, s1, c1, s10, c10, 2.0 * s1 * s10, s1 * c10, 2.0 * c1 * s10, c1 * c10, x10],
        axis=-1,
    )


def surface10_jacobian(x1, x10):
    p = np.pi
    s1, c1 = np.sin(p * x1), np.cos(p * x1)
    s10, c10 = np.sin(p * x10), np.cos(p * x10)
    z = np.zeros_like(x1)
    o = np.ones_like(x1)
    d1 = [o, p * c1, -p * s1, z, z, 2 * p * c1 * s10, p * c1 * c10, -2 * p * s1 * s10, -p * s1 * c10, z]
    d10 = [z, z, z, p * c10, -p * s10, 2 * p * s1 * c10, -p * s1 * s10, 2 * p * c1 * c10, -p * c1 * s10, o]
    return np.stack([np.stack(d1, -1), np.stack(d10, -1)], axis=-1)


def gen_surface10(m, seed=0):
    """2-D surface in R^10 parameterized by ``(x1, x10)`` uniform on ``[-1,1]^2``;
    coordinates 6 and 8 carry a factor 2."""
    if m < 10:
        raise ArgumentError("gen_surface10 needs m >= 10")
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-1.0, 1.0, m)
    x10 = rng.uniform(-1.0, 1.0, m)
    pts = surface10_map(x1, x10)
    tan = _orthonormalize(surface10_jacobian(x1, x10))
    return ManifoldSample(pts, tan, np.column_stack([x1, x10]), seed, "surface10")


def cylinder_map(theta, x3):
    return np.stack([np.cos(theta), np.sin(theta), x3], axis=-1)


def cylinder_jacobian(theta, x3):
    z, o = np.zeros_like(theta), np.ones_like(theta)
    dt = np.stack([-np.sin(theta), np.cos(theta), z], -1)
    dz = np.stack([z, z, o], -1)
    return np.stack([dt, dz], axis=-1)


def gen_cylinder(m, seed=0):
    """Unit cylinder, ``(theta, x3)`` uniform on ``[0, 2pi] x [-1, 1]``."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, m)
    x3 = rng.uniform(-1.0, 1.0, m)
    pts = cylinder_map(theta, x3)
    tan = _orthonormalize(cylinder_jacobian(theta, x3))
    return ManifoldSample(pts, tan, np.column_stack([theta, x3]), seed, "cylinder")


def spiral_map(rad, theta):
    return np.stack([rad * np.cos(theta), rad * np.sin(theta), theta / (2.0 * np.pi)], axis=-1)


def spiral_jacobian(rad, theta):
    z = np.zeros_like(rad)
    dr = np.stack([np.cos(theta), np.sin(theta), z], -1)
    dt = np.stack([-rad * np.sin(theta), rad * np.cos(theta), np.full_like(rad, 1.0 / (2.0 * np.pi))], -1)
    return np.stack([dr, dt], axis=-1)


def gen_spiral(m, seed=0):
    """One turn of a helicoidal ramp: ``(r, theta)`` uniform on
    ``[0.2, 1] x [-pi, pi]`` mapped to ``(r cos, r sin, theta / 2pi)``."""
    rng = np.random.default_rng(seed)
    rad = rng.uniform(0.2, 1.0, m)
    theta = rng.uniform(-np.pi, np.pi, m)
    pts = spiral_map(rad, theta)
    tan = _orthonormalize(spiral_jacobian(rad, theta))
    return ManifoldSample(pts, tan, np.column_stack([rad, theta]), seed, "spiral")


GENERATORS = {
    "surface10": gen_surface10,
    "cylinder": gen_cylinder,
    "spiral": gen_spiral,
}


# Burgers ---------------------------------------------------------------------


@dataclass
class BurgersRun:
    nu: float
    chi: float
    n_x: int
    dt_snap: float
    times: np.ndarray  # n_snap
    snapshots: np.ndarray  # n_snap x n_x

    @property
    def grid(self):
        return np.arange(self.n_x) / self.n_x


def burgers_initial(xi, chi):
    """Triangular bump of unit height and half-width ``chi / 2`` centred at 0.5."""
    return np.maximum(0.0, 1.0 - (2.0 / chi) * np.abs(xi - 0.5))


def _burgers_rhs(u, dx, nu):
    # conservative central flux for (u^2/2)_x, periodic
    up = np.roll(u, -1, axis=-1)
    um = np.roll(u, 1, axis=-1)
    f = 0.25 * (u * u + up * up)  # F_{j+1/2}
    conv = (f - np.roll(f, 1, axis=-1)) / dx
    diff = nu * (up - 2.0 * u + um) / (dx * dx)
    return diff - conv


def burgers_grid(nu=1e-3, chi_list=None, n_x=256, t_final=1.0, n_snap=500, cfl=0.25):
    """Integrate periodic viscous Burgers ``u_t + u u_x = nu u_xx`` on ``[0, 1)``
    from triangular initial conditions of widths ``chi_list``.

    Explicit RK4 with central differences; the step is the largest divisor
    of the snapshot interval not exceeding ``cfl * min(dx/max|u|, dx^2/(2 nu))``.
    Snapshots are taken at ``t = i * t_final / n_snap`` for ``i < n_snap``.
    """
    if chi_list is None:
        chi_list = np.linspace(0.1, 0.5, 25)
    chis = np.atleast_1d(np.asarray(chi_list, dtype=float))
    if n_x < 16 or n_x & (n_x - 1):
        raise ArgumentError(f"n_x must be a power of two >= 16, got {n_x}")
    if np.any(chis < 0.1 - 1e-12) or np.any(chis > 0.5 + 1e-12):
        raise ArgumentError("chi values must lie in [0.1, 0.5]")
    dx = 1.0 / n_x
    xi = np.arange(n_x) * dx
    u = burgers_initial(xi[None, :], chis[:, None])
    dt_snap = t_final / n_snap
    umax = max(float(np.abs(u).max()), 1e-12)
    dt_max = cfl * min(dx / umax, dx * dx / (2.0 * nu) if nu > 0 else math.inf)
    substeps = max(1, math.ceil(dt_snap / dt_max - 1e-12))
    dt = dt_snap / substeps

    snaps = np.empty((len(chis), n_snap, n_x))
    snaps[:, 0] = u
    for i in range(1, n_snap):
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(substeps):
                k1 = _burgers_rhs(u, dx, nu)
                k2 = _burgers_rhs(u + 0.5 * dt * k1, dx, nu)
                k3 = _burgers_rhs(u + 0.5 * dt * k2, dx, nu)
                k4 = _burgers_rhs(u + dt * k3, dx, nu)
                u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise CFLError(f"non-finite state at t={i * dt_snap:.4g}; CFL violated (dt={dt:.3g})")
        snaps[:, i] = u
    times = np.arange(n_snap) * dt_snap
    return [BurgersRun(nu, float(ch), n_x, dt_snap, times, snaps[q]) for q, ch in enumerate(chis)]
