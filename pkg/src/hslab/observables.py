"""Empirical-measure, fluctuation-field and cumulant estimators.

All estimators are pure reductions over the immutable records of a
ReplicaEnsemble.  Error bars are leave-one-replica-out jackknife estimates
unless noted.  The connected pair estimator returns the intensity-scaled
second cumulant: mu * Var(pi(h)) - mean((1/mu) sum h^2), which vanishes for
independent Poisson particles and stays order one in the dilute scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "TestFunction",
    "PhaseBins",
    "named_test_function",
    "empirical_measure",
    "fluctuation_field",
    "fluctuation_values",
    "estimate_F1",
    "estimate_F2_connected",
    "estimate_covariance",
    "estimate_log_mgf",
    "k_statistics",
    "variance_decomposition_residual",
    "jackknife_error",
]


@dataclass
class TestFunction:
    """Phase-space observable h(x, v) evaluated particle-wise.

    evaluator maps (positions (N,d), velocities (N,d)) to per-particle
    values (N,).  growth is 'bounded' or 'gaussian' (dominated by
    c0 exp(beta0 |v|^2 / 4)).
    """

    __test__ = False                # not a pytest class despite the name

    evaluator: callable
    growth: str = "bounded"
    name: str = "h"
    bound: float = None
    growth_params: tuple = None     # (alpha0, beta0) for the gaussian tag

    def __call__(self, positions, velocities):
        vals = np.asarray(self.evaluator(positions, velocities), dtype=float)
        if vals.shape != (len(velocities),):
            raise ValueError("evaluator must return one value per particle")
        return vals

    def check_growth(self, rng, d=2, samples=1000, scale=3.0):
        v = rng.normal(scale=scale, size=(samples, d))
        x = rng.random((samples, d))
        vals = np.abs(self(x, v))
        if self.growth == "bounded":
            limit = self.bound if self.bound is not None else np.inf
            return bool(np.all(vals <= limit * (1 + 1e-12)))
        alpha0, beta0 = self.growth_params
        envelope = np.exp(alpha0 + beta0 / 4.0 * (v**2).sum(axis=1))
        return bool(np.all(vals <= envelope * (1 + 1e-12)))


def named_test_function(kind, **params):
    """Named test functions selectable from configuration files."""
    if kind == "polynomial":
        # sum_k coeff_k * v_axis^power per term: terms = [(coeff, axis, power), ...]
        terms = params["terms"]

        def poly(x, v):
            out = np.zeros(len(v))
            for coeff, axis, power in terms:
                out += coeff * v[:, axis] ** power
            return out

        return TestFunction(poly, growth="gaussian", name=params.get("name", "poly"),
                            growth_params=(params.get("alpha0", 5.0), params.get("beta0", 1.0)))
    if kind == "gaussian_bump":
        center = np.asarray(params.get("center", (0.0, 0.0)), dtype=float)
        width = float(params.get("width", 1.0))
        amp = float(params.get("amplitude", 1.0))

        def bump(x, v):
            return amp * np.exp(-((v - center) ** 2).sum(axis=1) / (2 * width * width))

        return TestFunction(bump, growth="bounded", name=params.get("name", "bump"), bound=abs(amp))
    if kind == "indicator_box":
        lo = np.asarray(params["lower"], dtype=float)
        hi = np.asarray(params["upper"], dtype=float)

        def box(x, v):
            return np.all((v >= lo) & (v <= hi), axis=1).astype(float)

        return TestFunction(box, growth="bounded", name=params.get("name", "box"), bound=1.0)
    raise ValueError(f"unknown test function kind {kind!r}")


@dataclass
class PhaseBins:
    """Cartesian velocity boxes (optionally and position boxes).

    velocity_edges: one increasing edge array per velocity axis.  Particles
    outside the velocity domain are counted in an overflow tally.
    """

    velocity_edges: list
    position_edges: list = None

    def __post_init__(self):
        self.velocity_edges = [np.asarray(e, dtype=float) for e in self.velocity_edges]
        for e in self.velocity_edges:
            if np.any(np.diff(e) <= 0):
                raise ValueError("velocity edges must increase")
        if self.position_edges is not None:
            self.position_edges = [np.asarray(e, dtype=float) for e in self.position_edges]

    @property
    def shape(self):
        shape = tuple(len(e) - 1 for e in self.velocity_edges)
        if self.position_edges is not None:
            shape = tuple(len(e) - 1 for e in self.position_edges) + shape
        return shape

    def volumes(self):
        grids = []
        if self.position_edges is not None:
            grids += [np.diff(e) for e in self.position_edges]
        grids += [np.diff(e) for e in self.velocity_edges]
        vol = grids[0]
        for g in grids[1:]:
            vol = np.multiply.outer(vol, g)
        return vol

    def centers(self):
        return [0.5 * (e[1:] + e[:-1]) for e in self.velocity_edges]

    def histogram(self, positions, velocities):
        """Counts per bin plus the number of out-of-domain particles."""
        if len(velocities) == 0:
            return np.zeros(self.shape), 0
        cols = []
        edges = []
        if self.position_edges is not None:
            cols.append(positions)
            edges += self.position_edges
        cols.append(velocities)
        edges += self.velocity_edges
        data = np.hstack(cols)
        counts, _ = np.histogramdd(data, bins=edges)
        overflow = len(velocities) - int(counts.sum())
        return counts, overflow


def empirical_measure(state, h, mu):
    """pi(h) = (1/mu) sum_i h(z_i)."""
    if state.n == 0:
        return 0.0
    return float(h(state.positions, state.velocities).sum()) / mu


def fluctuation_field(state, h, reference, mu):
    """zeta(h) = sqrt(mu) (pi(h) - reference)."""
    return math.sqrt(mu) * (empirical_measure(state, h, mu) - reference)


def _pi_values(ensemble, h, time_index):
    mu = ensemble.cfg.mu
    vals = []
    for pos, vel in ensemble.iter_snapshots(time_index):
        vals.append(h(pos, vel).sum() / mu if len(vel) else 0.0)
    return np.asarray(vals)


def _sum_h2_over_mu(ensemble, h, time_index):
    mu = ensemble.cfg.mu
    vals = []
    for pos, vel in ensemble.iter_snapshots(time_index):
        vals.append((h(pos, vel) ** 2).sum() / mu if len(vel) else 0.0)
    return np.asarray(vals)


def fluctuation_values(ensemble, h, time, reference="loo"):
    """Per-replica fluctuation-field values sqrt(mu)(pi_r - ref_r).

    reference 'loo' centers each replica at the mean over the others
    (avoids self-correlation bias), 'mean' at the plain ensemble mean, and
    a float at the supplied external value (e.g. a kinetic-solver integral).
    """
    k = ensemble.time_index(time)
    mu = ensemble.cfg.mu
    pi = _pi_values(ensemble, h, k)
    r = len(pi)
    if isinstance(reference, str):
        if reference == "loo":
            if r < 2:
                raise ValueError("leave-one-out centering needs at least 2 replicas")
            ref = (pi.sum() - pi) / (r - 1)
        elif reference == "mean":
            ref = np.full(r, pi.mean())
        else:
            raise ValueError(f"unknown reference {reference!r}")
    else:
        ref = np.full(r, float(reference))
    return math.sqrt(mu) * (pi - ref)


def jackknife_error(values, statistic):
    """Leave-one-out jackknife standard error of statistic(values)."""
    values = np.asarray(values)
    n = len(values)
    if n < 2:
        return math.inf
    idx = np.arange(n)
    loo = np.array([statistic(values[idx != i]) for i in range(n)])
    return float(math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum()))


def estimate_F1(ensemble, bins, time):
    """Binned one-particle density with replica-spread standard errors.

    Returns (density, stderr, overflow_fraction); density has bins.shape and
    estimates the velocity (or phase) distribution scaled so that its
    integral approximates N/mu.
    """
    k = ensemble.time_index(time)
    mu = ensemble.cfg.mu
    replicas = ensemble.ok_replicas()
    if not replicas:
        raise ValueError("ensemble has no successful replicas")
    vol = bins.volumes()
    per_replica = []
    overflow = 0
    total = 0
    for pos, vel in ensemble.iter_snapshots(k):
        counts, extra = bins.histogram(pos, vel)
        per_replica.append(counts / (mu * vol))
        overflow += extra
        total += len(vel)
    stack = np.stack(per_replica)
    density = stack.mean(axis=0)
    stderr = stack.std(axis=0, ddof=1) / math.sqrt(len(stack)) if len(stack) > 1 else np.full_like(density, np.inf)
    return density, stderr, overflow / max(total, 1)


def estimate_F2_connected(ensemble, h, time, min_replicas=100):
    """Scaled connected pair correlation f2(h,h) with a jackknife error bar.

    f2_hat = mu * Var_replicas(pi(h)) - mean_replicas((1/mu) sum_i h^2(z_i)).
    """
    k = ensemble.time_index(time)
    mu = ensemble.cfg.mu
    pi = _pi_values(ensemble, h, k)
    h2 = _sum_h2_over_mu(ensemble, h, k)
    if len(pi) < min_replicas:
        raise ValueError(f"need at least {min_replicas} replicas, have {len(pi)}")
    paired = np.stack([pi, h2], axis=1)

    def stat(rows):
        return mu * rows[:, 0].var(ddof=1) - rows[:, 1].mean()

    value = stat(paired)
    n = len(paired)
    idx = np.arange(n)
    loo = np.array([stat(paired[idx != i]) for i in range(n)])
    err = math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum())
    return float(value), float(err)


def estimate_covariance(ensemble, h1, h2, s, t):
    """Replica covariance of the fluctuation fields zeta_s(h1), zeta_t(h2)."""
    ks = ensemble.time_index(s)
    kt = ensemble.time_index(t)
    mu = ensemble.cfg.mu
    a = _pi_values(ensemble, h1, ks)
    b = _pi_values(ensemble, h2, kt)
    if len(a) < 2:
        raise ValueError("need at least 2 replicas")
    paired = np.stack([a, b], axis=1)

    def stat(rows):
        return mu * np.cov(rows[:, 0], rows[:, 1], ddof=1)[0, 1]

    value = stat(paired)
    n = len(paired)
    idx = np.arange(n)
    loo = np.array([stat(paired[idx != i]) for i in range(n)])
    err = math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum())
    return float(value), float(err)


def estimate_log_mgf(ensemble, h, time):
    """Scaled log moment generating functional (1/mu) log E exp(sum h).

    Uses log-sum-exp over replicas; returns (value, jackknife error).
    """
    k = ensemble.time_index(time)
    mu = ensemble.cfg.mu
    sums = []
    for pos, vel in ensemble.iter_snapshots(k):
        sums.append(h(pos, vel).sum() if len(vel) else 0.0)
    sums = np.asarray(sums)
    if not np.all(np.isfinite(sums)):
        raise OverflowError("test function produced non-finite exponents")
    n = len(sums)
    value = (logsumexp(sums) - math.log(n)) / mu
    idx = np.arange(n)
    loo = np.array([(logsumexp(sums[idx != i]) - math.log(n - 1)) / mu for i in range(n)])
    err = math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum())
    return float(value), float(err)


def k_statistics(samples, order):
    """Unbiased k-statistic (cumulant estimator) of order <= 4."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if order not in (1, 2, 3, 4):
        raise ValueError("order must be in 1..4")
    if n < max(order, 2):
        raise ValueError(f"need at least {max(order, 2)} samples for order {order}")
    mean = x.mean()
    if order == 1:
        return float(mean)
    c = x - mean
    m2 = (c**2).mean()
    if order == 2:
        return float(n / (n - 1) * m2)
    m3 = (c**3).mean()
    if order == 3:
        return float(n * n / ((n - 1) * (n - 2)) * m3)
    m4 = (c**4).mean()
    num = n * n * ((n + 1) * m4 - 3 * (n - 1) * m2 * m2)
    return float(num / ((n - 1) * (n - 2) * (n - 3)))


def variance_decomposition_residual(ensemble, h, time):
    """Float residual of the second-moment decomposition identity.

    mean[(pi - mean pi)^2] equals mean[(1/mu^2) sum h^2] +
    mean[(1/mu^2) sum_{i != j} h_i h_j] - (mean pi)^2 exactly, when all
    terms are computed from the same replicas; the residual is rounding.
    """
    k = ensemble.time_index(time)
    mu = ensemble.cfg.mu
    pi = _pi_values(ensemble, h, k)
    h2 = []
    for pos, vel in ensemble.iter_snapshots(k):
        h2.append((h(pos, vel) ** 2).sum() / mu**2 if len(vel) else 0.0)
    h2 = np.asarray(h2)
    off_diag = pi**2 - h2          # (1/mu^2)[(sum h)^2 - sum h^2]
    lhs = ((pi - pi.mean()) ** 2).mean()
    rhs = h2.mean() + off_diag.mean() - pi.mean() ** 2
    return float(lhs - rhs)
