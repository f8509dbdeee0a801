"""Velocity-space grid, sphere quadrature and grid densities.

Uniform Cartesian midpoint grid on [-v_max, v_max]^d with equal node
weights h^d.  Sphere rules: uniform angles in d=2 (even count, so the rule
is symmetric under omega -> -omega), octahedrally symmetric Lebedev rules
(6/14/26 points) in d=3.  Both sum to the full surface measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["VelocityGrid", "GridDensity", "maxwellian", "sphere_quadrature"]


def sphere_quadrature(d, n_angles=32, lebedev_points=26):
    """Direction/weight pairs integrating over S^{d-1} exactly for constants."""
    if d == 2:
        if n_angles % 2:
            raise ValueError("need an even angle count for a +-omega symmetric rule")
        theta = (np.arange(n_angles) + 0.5) * (2 * math.pi / n_angles)
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        wts = np.full(n_angles, 2 * math.pi / n_angles)
        return dirs, wts
    if d == 3:
        if lebedev_points == 6:
            groups = [(_octahedron_vertices(), 1.0 / 6.0)]
        elif lebedev_points == 14:
            groups = [(_octahedron_vertices(), 1.0 / 15.0), (_cube_vertices(), 3.0 / 40.0)]
        elif lebedev_points == 26:
            groups = [
                (_octahedron_vertices(), 1.0 / 21.0),
                (_edge_midpoints(), 4.0 / 105.0),
                (_cube_vertices(), 9.0 / 280.0),
            ]
        else:
            raise ValueError("supported Lebedev rules: 6, 14, 26 points")
        dirs = np.vstack([g for g, _ in groups])
        wts = np.concatenate([np.full(len(g), w) for g, w in groups]) * 4 * math.pi
        return dirs, wts
    raise ValueError("dimension must be 2 or 3")


def _octahedron_vertices():
    out = []
    for a in range(3):
        for s in (1.0, -1.0):
            v = [0.0, 0.0, 0.0]
            v[a] = s
            out.append(v)
    return np.array(out)


def _cube_vertices():
    r = 1.0 / math.sqrt(3.0)
    return np.array([[sx * r, sy * r, sz * r] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)])


def _edge_midpoints():
    r = 1.0 / math.sqrt(2.0)
    out = []
    for a in range(3):
        b = (a + 1) % 3
        for sa in (1, -1):
            for sb in (1, -1):
                v = [0.0, 0.0, 0.0]
                v[a] = sa * r
                v[b] = sb * r
                out.append(v)
    return np.array(out)


class VelocityGrid:
    """Midpoint grid: nodes at -v_max + (k + 1/2) h, h = 2 v_max / m."""

    def __init__(self, dimension=2, v_max=6.0, m=32, n_angles=32, lebedev_points=26):
        if dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        self.d = dimension
        self.v_max = float(v_max)
        self.m = int(m)
        self.h = 2.0 * self.v_max / self.m
        self.w0 = self.h**self.d
        axis = -self.v_max + (np.arange(self.m) + 0.5) * self.h
        self.axis = axis
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        self.nodes = np.column_stack([g.ravel() for g in mesh])
        self.n_nodes = self.m**self.d
        self.omegas, self.omega_weights = sphere_quadrature(
            self.d, n_angles=n_angles, lebedev_points=lebedev_points
        )
        surface = 2 * math.pi if self.d == 2 else 4 * math.pi
        if abs(self.omega_weights.sum() - surface) > 1e-12 * surface:
            raise AssertionError("sphere weights do not sum to the surface measure")
        self.strides = np.array([self.m ** (self.d - 1 - a) for a in range(self.d)])

    def shape(self):
        return (self.m,) * self.d

    def speeds(self):
        return np.sqrt((self.nodes**2).sum(axis=1))

    def integrate(self, values):
        return float(np.sum(values)) * self.w0

    def moments(self, values):
        """(mass, momentum_1..d, energy) of a nodal density."""
        mass = self.integrate(values)
        mom = [self.integrate(values * self.nodes[:, a]) for a in range(self.d)]
        energy = self.integrate(values * (self.nodes**2).sum(axis=1))
        return np.array([mass, *mom, energy])

    def invariant_matrix(self):
        """Columns 1, v_1..v_d, |v|^2 evaluated at the nodes."""
        cols = [np.ones(self.n_nodes)]
        cols += [self.nodes[:, a] for a in range(self.d)]
        cols.append((self.nodes**2).sum(axis=1))
        return np.column_stack(cols)

    def interpolate(self, values, points):
        """Multilinear interpolation of nodal values at arbitrary points.

        Points whose full stencil leaves the grid evaluate to zero.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r = (points + self.v_max) / self.h - 0.5
        base = np.floor(r).astype(np.int64)
        frac = r - base
        valid = np.all((base >= 0) & (base <= self.m - 2), axis=1)
        out = np.zeros(len(points))
        vals = np.asarray(values).ravel()
        for corner in range(2**self.d):
            idx = np.zeros(len(points), dtype=np.int64)
            wt = np.ones(len(points))
            for a in range(self.d):
                bit = (corner >> a) & 1
                idx += (base[:, a] + bit) * self.strides[a]
                wt *= frac[:, a] if bit else 1.0 - frac[:, a]
            contrib = np.where(valid, wt * vals[np.clip(idx, 0, self.n_nodes - 1)], 0.0)
            out += contrib
        return out


@dataclass
class GridDensity:
    """Nodal phase-space density on a VelocityGrid (flat storage)."""

    grid: VelocityGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if len(self.values) != self.grid.n_nodes:
            raise ValueError("value count does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite density values")

    def mass(self):
        return self.grid.integrate(self.values)

    def momentum(self):
        return np.array([self.grid.integrate(self.values * self.grid.nodes[:, a]) for a in range(self.grid.d)])

    def energy(self):
        return self.grid.integrate(self.values * (self.grid.nodes**2).sum(axis=1))

    def copy(self):
        return GridDensity(self.grid, self.values.copy())


def maxwellian(grid, beta=1.0, mass=1.0, mean=None):
    """Maxwellian density with inverse temperature beta and drift `mean`."""
    mean = np.zeros(grid.d) if mean is None else np.asarray(mean, dtype=float)
    diff = grid.nodes - mean
    norm = mass * (beta / (2 * math.pi)) ** (grid.d / 2)
    return GridDensity(grid, norm * np.exp(-0.5 * beta * (diff**2).sum(axis=1)))
