"""Linearized collision operator, its adjoint, and the backward semigroup.

The adjoint acts on test functions by gathering their interpolated values
at the primed velocities; it is, entry for entry, the transpose of the
scatter-based forward linearization, so the duality
< L phi, psi > = < phi, L* psi > holds to rounding and is tested that way.
"""

from __future__ import annotations

import numpy as np

from .collision import _view, pair_classes
from .grid import GridDensity

__all__ = ["adjoint_apply", "adjoint_matrix", "backward_semigroup", "AdjointPropagator"]


def _flat_indices(grid, windows, extra=(0,) * 8):
    """Flat node indices of the window view (C-order)."""
    axes = [np.arange(lo + e, hi + e) * grid.strides[a] for a, ((lo, hi), e) in enumerate(zip(windows, extra))]
    total = axes[0]
    for nxt in axes[1:]:
        total = (total[:, None] + nxt[None, :]).ravel()
    return total


def adjoint_apply(f, psi):
    """L* psi at the nodes: sum_j w0 sum_omega w K f_j [Dpsi](i,j,omega)."""
    grid = f.grid
    fv = f.values.reshape(grid.shape())
    pv = np.asarray(psi, dtype=float).reshape(grid.shape())
    out = np.zeros(grid.shape())
    w0 = grid.w0
    for w_omega, kern, windows, du, (corners_a, weights_a), (corners_b, weights_b) in pair_classes(grid):
        jshift = tuple(-u for u in du)
        dpsi = -_view(pv, windows) - _view(pv, windows, jshift)
        for offs, wt in zip(corners_a, weights_a):
            if wt:
                dpsi = dpsi + wt * _view(pv, windows, offs)
        for offs, wt in zip(corners_b, weights_b):
            if wt:
                dpsi = dpsi + wt * _view(pv, windows, tuple(o - u for o, u in zip(offs, du)))
        c = 0.5 * w0 * w_omega * kern
        fi = _view(fv, windows)
        fj = _view(fv, windows, jshift)
        _view(out, windows)[...] += c * fj * dpsi
        _view(out, windows, jshift)[...] += c * fi * dpsi
    return out.ravel()


def adjoint_matrix(f):
    """Dense nodal matrix of L*_f (assembled from the same event classes)."""
    grid = f.grid
    n = grid.n_nodes
    fv = f.values
    mat = np.zeros((n, n))
    w0 = grid.w0
    for w_omega, kern, windows, du, (corners_a, weights_a), (corners_b, weights_b) in pair_classes(grid):
        rows_i = _flat_indices(grid, windows)
        du_flat = int(sum(u * s for u, s in zip(du, grid.strides)))
        rows_j = rows_i - du_flat
        c = 0.5 * w0 * w_omega * kern
        coeff_i = c * fv[rows_j]      # weight of Dpsi on row i
        coeff_j = c * fv[rows_i]      # weight of Dpsi on row j
        cols = []
        wts = []
        for offs, wt in zip(corners_a, weights_a):
            off_flat = int(sum(o * s for o, s in zip(offs, grid.strides)))
            cols.append(rows_i + off_flat)
            wts.append(wt)
        for offs, wt in zip(corners_b, weights_b):
            off_flat = int(sum(o * s for o, s in zip(offs, grid.strides)))
            cols.append(rows_j + off_flat)
            wts.append(wt)
        cols += [rows_i, rows_j]
        wts += [-1.0, -1.0]
        for col, wt in zip(cols, wts):
            if wt:
                np.add.at(mat, (rows_i, col), coeff_i * wt)
                np.add.at(mat, (rows_j, col), coeff_j * wt)
    return mat


class AdjointPropagator:
    """Backward test-function evolution d psi/ds = -L*_{f(s)} psi.

    L*(f) is linear in f, so matrices assembled at the stored path knots
    interpolate exactly to any intermediate time.
    """

    def __init__(self, f_path, max_knots=64):
        self.grid = f_path.grid
        times = np.asarray(f_path.times)
        if len(times) > max_knots:
            pick = np.unique(np.linspace(0, len(times) - 1, max_knots).astype(int))
        else:
            pick = np.arange(len(times))
        self.times = times[pick]
        self.matrices = [adjoint_matrix(f_path.densities[k]) for k in pick]

    def apply(self, t, psi):
        times = self.times
        if t <= times[0]:
            return self.matrices[0] @ psi
        if t >= times[-1]:
            return self.matrices[-1] @ psi
        k = int(np.searchsorted(times, t)) - 1
        theta = (t - times[k]) / (times[k + 1] - times[k])
        return (1 - theta) * (self.matrices[k] @ psi) + theta * (self.matrices[k + 1] @ psi)

    def evolve(self, phi, t, s, dt, return_path=False):
        """psi_s with psi_t = phi, integrated by explicit midpoint."""
        if s > t:
            raise ValueError("backward evolution needs s <= t")
        psi = np.asarray(phi, dtype=float).copy()
        if s == t:
            return ([(t, psi.copy())] if return_path else psi)
        n_steps = max(1, int(np.ceil((t - s) / dt)))
        step = (t - s) / n_steps
        clock = t
        out = [(t, psi.copy())]
        for _ in range(n_steps):
            k1 = self.apply(clock, psi)
            mid = psi + 0.5 * step * k1
            k2 = self.apply(clock - 0.5 * step, mid)
            psi = psi + step * k2
            clock -= step
            out.append((clock, psi.copy()))
        return out if return_path else psi


def backward_semigroup(f_path, phi, t, s, dt=None):
    """Convenience wrapper: integrate the backward equation from t down to s."""
    if dt is None:
        dt = max((t - s) / 64.0, 1e-6) if t > s else 1e-6
    prop = AdjointPropagator(f_path)
    return prop.evolve(np.asarray(phi, dtype=float), t, s, dt)
