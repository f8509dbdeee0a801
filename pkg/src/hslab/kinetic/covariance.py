"""Fluctuation covariance machinery on the velocity grid.

Conventions: a bilinear form B(phi, psi) on test functions is stored as a
nodal kernel matrix b with B(phi, psi) = w0^2 phi^T b psi.  The
space-homogeneous reduction integrates the spatial delta against the unit
torus volume, so no extra geometric factor appears anywhere.
"""

from __future__ import annotations

import math

import numpy as np

from .collision import _view, collision_operator, pair_classes
from .grid import GridDensity
from .linearized import AdjointPropagator, _flat_indices, adjoint_apply
from .solver import FPath

__all__ = [
    "noise_covariance",
    "noise_form_matrix",
    "recollision_kernel",
    "recollision_apply",
    "sigma_apply",
    "sigma_identity_residual",
    "covariance_evolution",
    "spohn_covariance",
    "fluctuation_dissipation_gap",
    "ld_hamiltonian",
]

EXP_ARG_LIMIT = 700.0


def _gather_delta(grid, pv, windows, du, stencil_a, stencil_b):
    """Interpolated Delta psi over one class window."""
    corners_a, weights_a = stencil_a
    corners_b, weights_b = stencil_b
    jshift = tuple(-u for u in du)
    delta = -_view(pv, windows) - _view(pv, windows, jshift)
    for offs, wt in zip(corners_a, weights_a):
        if wt:
            delta = delta + wt * _view(pv, windows, offs)
    for offs, wt in zip(corners_b, weights_b):
        if wt:
            delta = delta + wt * _view(pv, windows, tuple(o - u for o, u in zip(offs, du)))
    return delta


def noise_covariance(f, phi, psi):
    """Cov(phi, psi) = 1/2 int f f Dphi Dpsi over pairs and angles."""
    grid = f.grid
    fv = f.values.reshape(grid.shape())
    pv = np.asarray(phi, dtype=float).reshape(grid.shape())
    qv = np.asarray(psi, dtype=float).reshape(grid.shape())
    total = 0.0
    w0 = grid.w0
    for w_omega, kern, windows, du, sa, sb in pair_classes(grid):
        jshift = tuple(-u for u in du)
        dphi = _gather_delta(grid, pv, windows, du, sa, sb)
        dpsi = dphi if qv is pv else _gather_delta(grid, qv, windows, du, sa, sb)
        ff = _view(fv, windows) * _view(fv, windows, jshift)
        total += w_omega * kern * float((ff * dphi * dpsi).sum())
    return 0.5 * w0 * w0 * total


def noise_form_matrix(f):
    """Kernel matrix of the noise form: Cov(phi,psi) = w0^2 phi^T sigma psi."""
    grid = f.grid
    n = grid.n_nodes
    fv = f.values
    sigma = np.zeros((n, n))
    for w_omega, kern, windows, du, (corners_a, weights_a), (corners_b, weights_b) in pair_classes(grid):
        rows_i = _flat_indices(grid, windows)
        du_flat = int(sum(u * s for u, s in zip(du, grid.strides)))
        rows_j = rows_i - du_flat
        base = 0.5 * w_omega * kern * fv[rows_i] * fv[rows_j]
        idx = []
        wts = []
        for offs, wt in zip(corners_a, weights_a):
            idx.append(rows_i + int(sum(o * s for o, s in zip(offs, grid.strides))))
            wts.append(wt)
        for offs, wt in zip(corners_b, weights_b):
            idx.append(rows_j + int(sum(o * s for o, s in zip(offs, grid.strides))))
            wts.append(wt)
        idx += [rows_i, rows_j]
        wts += [-1.0, -1.0]
        n_terms = len(idx)
        for a in range(n_terms):
            if wts[a] == 0.0:
                continue
            rows = np.concatenate([idx[a]] * n_terms)
            cols = np.concatenate(idx)
            vals = np.concatenate([base * (wts[a] * wts[b]) for b in range(n_terms)])
            np.add.at(sigma, (rows, cols), vals)
    return sigma


def recollision_kernel(g):
    """Matrix R(v_i, v_j) = int (g' g' - g g) dmu_{ij}(omega) on node pairs."""
    grid = g.grid
    n = grid.n_nodes
    gv = g.values
    gview = gv.reshape(grid.shape())
    out = np.zeros((n, n))
    for w_omega, kern, windows, du, (corners_a, weights_a), (corners_b, weights_b) in pair_classes(grid):
        rows_i = _flat_indices(grid, windows)
        du_flat = int(sum(u * s for u, s in zip(du, grid.strides)))
        rows_j = rows_i - du_flat
        jshift = tuple(-u for u in du)
        ga = np.zeros(len(rows_i))
        for offs, wt in zip(corners_a, weights_a):
            if wt:
                ga += wt * _view(gview, windows, offs).ravel()
        gb = np.zeros(len(rows_i))
        for offs, wt in zip(corners_b, weights_b):
            if wt:
                gb += wt * _view(gview, windows, tuple(o - u for o, u in zip(offs, du))).ravel()
        vals = w_omega * kern * (ga * gb - gv[rows_i] * gv[rows_j])
        np.add.at(out, (rows_i, rows_j), vals)
    return out


def recollision_apply(g, phi):
    """int R(g,g)(., v2) phi(v2) dv2 at the nodes."""
    kernel = recollision_kernel(g)
    return g.grid.w0 * (kernel @ np.asarray(phi, dtype=float))


def sigma_apply(f, phi):
    """Sigma_t phi = - int dmu_{z1} [f f + f' f'] Dphi."""
    grid = f.grid
    fv = f.values.reshape(grid.shape())
    pv = np.asarray(phi, dtype=float).reshape(grid.shape())
    out = np.zeros(grid.shape())
    w0 = grid.w0
    for w_omega, kern, windows, du, sa, sb in pair_classes(grid):
        jshift = tuple(-u for u in du)
        dphi = _gather_delta(grid, pv, windows, du, sa, sb)
        fa = np.zeros_like(dphi)
        for offs, wt in zip(sa[0], sa[1]):
            if wt:
                fa = fa + wt * _view(fv, windows, offs)
        fb = np.zeros_like(dphi)
        for offs, wt in zip(sb[0], sb[1]):
            if wt:
                fb = fb + wt * _view(fv, windows, tuple(o - u for o, u in zip(offs, du)))
        weight = _view(fv, windows) * _view(fv, windows, jshift) + fa * fb
        _view(out, windows)[...] -= w0 * w_omega * kern * weight * dphi
    return out.ravel()


def sigma_identity_residual(f, f_dot, phi, norm=True):
    """Residual of the key operator identity linking Sigma, L, L* and R.

    Sigma phi + f (L* phi) + L(f phi) - (df/dt) phi - int R(f,f)(., v2) phi dv2
    vanishes in the continuum; here it is bounded by interpolation and
    quadrature error.  Returns the max-norm by default, else the nodal field.
    """
    from .collision import linearized_forward

    phi = np.asarray(phi, dtype=float)
    term_sigma = sigma_apply(f, phi)
    term_fl = f.values * adjoint_apply(f, phi)
    term_lf = linearized_forward(f, f.values * phi)
    term_dt = np.asarray(f_dot, dtype=float) * phi
    term_r = recollision_apply(f, phi)
    residual = term_sigma + term_fl + term_lf - term_dt - term_r
    if norm:
        return float(np.abs(residual).max())
    return residual


def covariance_evolution(f_path, c0, t_end, dt, max_knots=64):
    """Integrate dc/dt = c A + A^T c + sigma(t) in the nodal basis.

    c0 is the kernel matrix of the equal-time covariance form at t=0;
    returns the list [(t, c(t)), ...].  A(t) and sigma(t) are interpolated
    from matrices assembled at path knots (both are linear except sigma's
    quadratic f dependence, which is sampled at the knots and linearly
    interpolated in t; the step error is absorbed in the integrator order).
    """
    grid = f_path.grid
    times = np.asarray(f_path.times)
    if len(times) > max_knots:
        pick = np.unique(np.linspace(0, len(times) - 1, max_knots).astype(int))
    else:
        pick = np.arange(len(times))
    knot_t = times[pick]
    from .linearized import adjoint_matrix

    a_mats = [adjoint_matrix(f_path.densities[k]) for k in pick]
    s_mats = [noise_form_matrix(f_path.densities[k]) for k in pick]

    def interp(mats, t):
        if t <= knot_t[0]:
            return mats[0]
        if t >= knot_t[-1]:
            return mats[-1]
        k = int(np.searchsorted(knot_t, t)) - 1
        theta = (t - knot_t[k]) / (knot_t[k + 1] - knot_t[k])
        return (1 - theta) * mats[k] + theta * mats[k + 1]

    def rhs(t, c):
        a = interp(a_mats, t)
        s = interp(s_mats, t)
        s = 0.5 * (s + s.T)
        return c @ a + a.T @ c + s

    c = 0.5 * (np.asarray(c0, dtype=float) + np.asarray(c0, dtype=float).T)
    out = [(0.0, c.copy())]
    n_steps = max(1, int(math.ceil(t_end / dt)))
    step = t_end / n_steps
    t = 0.0
    for _ in range(n_steps):
        k1 = rhs(t, c)
        mid = c + 0.5 * step * k1
        k2 = rhs(t + 0.5 * step, mid)
        c = c + step * k2
        c = 0.5 * (c + c.T)
        t += step
        out.append((t, c.copy()))
    return out


def equilibrium_covariance_matrix(f):
    """Kernel matrix of C(phi,psi) = int phi psi f: diagonal f / w0."""
    return np.diag(f.values / f.grid.w0)


def spohn_covariance(f_path, phi, psi, t, dt, max_knots=64):
    """Equal-time covariance via the semigroup-plus-recollision route.

    C(t,t,phi,psi) = int phi psi f_t
                   + int_0^t  dtau < U*(t,tau) phi, R(f_tau, f_tau) U*(t,tau) psi >.
    The time integral uses the trapezoid rule on the backward-path steps.
    """
    grid = f_path.grid
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    f_t = f_path.value_at(t)
    term1 = grid.w0 * float((phi * psi * f_t.values).sum())
    if t == 0.0:
        return term1
    prop = AdjointPropagator(f_path, max_knots=max_knots)
    path_phi = prop.evolve(phi, t, 0.0, dt, return_path=True)
    path_psi = prop.evolve(psi, t, 0.0, dt, return_path=True)
    integrand = []
    for (tau, phi_tau), (tau2, psi_tau) in zip(path_phi, path_psi):
        r = recollision_kernel(f_path.value_at(tau))
        integrand.append((tau, grid.w0**2 * float(phi_tau @ r @ psi_tau)))
    total = 0.0
    for (t1, g1), (t0, g0) in zip(integrand[:-1], integrand[1:]):
        total += 0.5 * (g1 + g0) * (t1 - t0)
    return term1 + total


def fluctuation_dissipation_gap(m_eq, phi, t, dt):
    """Equilibrium balance of injected noise against semigroup dissipation.

    Returns int_0^t Cov(psi_u, psi_u) du - (int M phi^2 - int M psi_0^2)
    where psi_u is the backward-evolved test function around the
    Maxwellian m_eq; zero in the continuum, bounded here by the combined
    quadrature and integrator error.
    """
    grid = m_eq.grid
    phi = np.asarray(phi, dtype=float)
    path = FPath.constant(m_eq, max(t, 1e-12))
    prop = AdjointPropagator(path, max_knots=2)
    if t == 0.0:
        return 0.0
    steps = prop.evolve(phi, t, 0.0, dt, return_path=True)
    sigma = noise_form_matrix(m_eq)
    sigma = 0.5 * (sigma + sigma.T)
    values = [(tau, grid.w0**2 * float(psi @ sigma @ psi)) for tau, psi in steps]
    integral = 0.0
    for (t1, g1), (t0, g0) in zip(values[:-1], values[1:]):
        integral += 0.5 * (g1 + g0) * (t1 - t0)
    psi0 = steps[-1][1]
    dissipation = grid.w0 * float((m_eq.values * phi**2).sum()) - grid.w0 * float((m_eq.values * psi0**2).sum())
    return integral - dissipation


def ld_hamiltonian(f, p):
    """Large-deviation Hamiltonian 1/2 int f f (exp(Dp) - 1) dmu."""
    grid = f.grid
    if np.any(f.values < 0):
        raise ValueError("density must be nonnegative")
    fv = f.values.reshape(grid.shape())
    pv = np.asarray(p, dtype=float).reshape(grid.shape())
    total = 0.0
    w0 = grid.w0
    for w_omega, kern, windows, du, sa, sb in pair_classes(grid):
        jshift = tuple(-u for u in du)
        dp = _gather_delta(grid, pv, windows, du, sa, sb)
        peak = np.abs(dp).max() if dp.size else 0.0
        if peak > EXP_ARG_LIMIT:
            raise OverflowError(f"exp argument {peak:.1f} too large on the truncation domain")
        ff = _view(fv, windows) * _view(fv, windows, jshift)
        total += w_omega * kern * float((ff * np.expm1(dp)).sum())
    return 0.5 * w0 * w0 * total
