"""Grand-canonical initial sampling and seeded replica ensembles.

The initial measure weights an N-particle configuration by
mu^N/N! * prod f0(z_i) restricted to the hard-sphere exclusion; sampling is
whole-configuration rejection (draw N ~ Poisson, draw i.i.d. states, accept
or redraw everything), which reproduces the exclusion-conditioned law
exactly.  Replicas use counter-based Philox streams keyed by
(seed, replica), so any subset of replicas can be regenerated
independently and merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hardsphere import SystemState, advance

RNG_NAME = "philox4x64"
MAX_REJECTION_ATTEMPTS = 100_000
MIN_EXPECTED_ACCEPTANCE = 1e-3

__all__ = [
    "InitialLaw",
    "GCConfig",
    "ReplicaEnsemble",
    "replica_rng",
    "sample_velocity",
    "sample_grand_canonical",
    "run_replicas",
]


def _ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass
class InitialLaw:
    """One-particle velocity profile f0 (uniform in position).

    profile: 'maxwellian' (inverse temperature beta), 'bimodal' (two
    Maxwellian bumps at +-separation/2 along the first axis), or 'custom'
    (tabulated per-component density, sampled by inverse CDF with linear
    interpolation).  `mass` scales the total intensity: the expected
    particle number is mu * mass.
    """

    profile: str = "maxwellian"
    beta: float = 1.0
    separation: float = 2.0
    table_v: np.ndarray = None
    table_f: np.ndarray = None
    c0: float = None
    beta0: float = None
    mass: float = 1.0

    def __post_init__(self):
        if self.profile not in ("maxwellian", "bimodal", "custom"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == "custom":
            if self.table_v is None or self.table_f is None:
                raise ValueError("custom profile needs table_v/table_f")
            self.table_v = np.asarray(self.table_v, dtype=float)
            self.table_f = np.asarray(self.table_f, dtype=float)
            if np.any(self.table_f < 0):
                raise ValueError("tabulated density must be nonnegative")
            if self.c0 is None or self.beta0 is None:
                raise ValueError("custom profile needs the envelope constants c0, beta0")
        if self.profile == "bimodal":
            # shifted bumps: exp(-b(v-u)^2/2) <= exp(b u^2/2) exp(-b v^2/4)
            if self.beta0 is None:
                self.beta0 = 0.5 * self.beta
            if self.c0 is None:
                u = 0.5 * self.separation
                self.c0 = 1.1 * max(1.0, self.beta) ** 1.5 * math.exp(0.5 * self.beta * u * u)
        if self.beta0 is None:
            self.beta0 = self.beta
        if self.c0 is None:
            # Gaussian normalizations are bounded by (beta/2pi)^{d/2} <= beta^{d/2}
            self.c0 = max(1.0, self.beta) ** 1.5 * 1.1

    # -- densities ----------------------------------------------------------

    def velocity_density(self, v):
        """Probability density of the velocity marginal at rows of v."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        d = v.shape[1]
        if self.profile == "maxwellian":
            norm = (self.beta / (2 * math.pi)) ** (d / 2)
            return norm * np.exp(-0.5 * self.beta * (v**2).sum(axis=1))
        if self.profile == "bimodal":
            u = 0.5 * self.separation
            norm = (self.beta / (2 * math.pi)) ** (d / 2)
            sq = (v**2).sum(axis=1)
            plus = np.exp(-0.5 * self.beta * (sq - 2 * u * v[:, 0] + u * u))
            minus = np.exp(-0.5 * self.beta * (sq + 2 * u * v[:, 0] + u * u))
            return 0.5 * norm * (plus + minus)
        dens = np.ones(len(v))
        marg = self._table_density()
        for a in range(d):
            dens *= np.interp(v[:, a], self.table_v, marg, left=0.0, right=0.0)
        return dens

    def _table_density(self):
        weights = np.trapezoid(self.table_f, self.table_v)
        return self.table_f / weights

    def phase_density(self, v):
        """f0 on the phase space (uniform in x), including the mass factor."""
        return self.mass * self.velocity_density(v)

    # -- sampling and moments -------------------------------------------------

    def sample_velocities(self, n, d, rng):
        if self.profile == "maxwellian":
            return rng.normal(scale=1.0 / math.sqrt(self.beta), size=(n, d))
        if self.profile == "bimodal":
            out = rng.normal(scale=1.0 / math.sqrt(self.beta), size=(n, d))
            signs = np.where(rng.random(n) < 0.5, 1.0, -1.0)
            out[:, 0] += signs * 0.5 * self.separation
            return out
        marg = self._table_density()
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (marg[1:] + marg[:-1]) * np.diff(self.table_v))])
        cdf /= cdf[-1]
        u = rng.random((n, d))
        return np.interp(u, cdf, self.table_v)

    def component_variance(self):
        if self.profile == "maxwellian":
            return 1.0 / self.beta
        if self.profile == "bimodal":
            return 1.0 / self.beta + 0.25 * self.separation**2
        marg = self._table_density()
        m1 = np.trapezoid(self.table_v * marg, self.table_v)
        m2 = np.trapezoid(self.table_v**2 * marg, self.table_v)
        return float(m2 - m1 * m1)

    def check_envelope(self, d, rng, samples=2000):
        """Spot check f0 <= c0 exp(-beta0 |v|^2 / 2) on random probe points."""
        v = rng.normal(scale=2.0 / math.sqrt(self.beta0), size=(samples, d))
        dens = self.phase_density(v)
        bound = self.c0 * np.exp(-0.5 * self.beta0 * (v**2).sum(axis=1))
        return bool(np.all(dens <= bound * (1 + 1e-9)))


@dataclass
class GCConfig:
    dimension: int = 2
    diameter: float = 0.01
    intensity: float = None          # defaults to diameter^-(d-1)
    law: InitialLaw = field(default_factory=InitialLaw)
    horizon: float = 1.0
    seed: int = 0
    replicas: int = 1
    position_lattice: int = None     # sample positions on a G^d grid (validation aid)
    record_snapshots: bool = True

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.intensity is None:
            self.intensity = self.diameter ** -(self.dimension - 1)

    @property
    def mu(self):
        return self.intensity

    def expected_acceptance(self):
        lam = self.mu * self.law.mass
        pairs = 0.5 * lam * lam * _ball_volume(self.dimension) * self.diameter**self.dimension
        return math.exp(-pairs)

    def boltzmann_grad_parameter(self):
        return self.mu * self.diameter ** (self.dimension - 1)


def replica_rng(seed, replica):
    """Independent counter-based stream for one replica."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + int(replica)))


def sample_velocity(law, rng, d=2):
    """One velocity draw from the law's marginal."""
    return law.sample_velocities(1, d, rng)[0]


def _sample_positions(cfg, n, rng):
    if cfg.position_lattice:
        g = cfg.position_lattice
        idx = rng.integers(0, g, size=(n, cfg.dimension))
        return (idx + 0.5) / g
    return rng.random((n, cfg.dimension))


def _exclusion_holds(pos, eps):
    if len(pos) < 2:
        return True
    delta = pos[:, None, :] - pos[None, :, :]
    delta -= np.rint(delta)
    dist2 = (delta**2).sum(axis=-1)
    np.fill_diagonal(dist2, np.inf)
    return bool(dist2.min() > eps * eps)


def sample_grand_canonical(cfg, rng):
    """Exact sample of the exclusion-conditioned Poisson configuration law."""
    est = cfg.expected_acceptance()
    if est < MIN_EXPECTED_ACCEPTANCE:
        raise ValueError(
            f"estimated rejection acceptance {est:.2e} below {MIN_EXPECTED_ACCEPTANCE}; "
            "parameters are outside the dilute regime"
        )
    lam = cfg.mu * cfg.law.mass
    for _ in range(MAX_REJECTION_ATTEMPTS):
        n = int(rng.poisson(lam))
        pos = _sample_positions(cfg, n, rng)
        vel = cfg.law.sample_velocities(n, cfg.dimension, rng)
        if _exclusion_holds(pos, cfg.diameter):
            if n == 0:
                pos = np.zeros((0, cfg.dimension))
                vel = np.zeros((0, cfg.dimension))
            return SystemState(pos, vel, cfg.diameter)
    raise RuntimeError(f"no admissible configuration in {MAX_REJECTION_ATTEMPTS} attempts")


class ReplicaEnsemble:
    """Observable records and snapshots for a family of independent replicas."""

    def __init__(self, cfg, sample_times, observable_names=()):
        self.cfg = cfg
        self.sample_times = list(sample_times)
        self.observable_names = list(observable_names)
        self.records = {}        # (replica, name, time_index) -> float
        self.snapshots = {}      # (replica, time_index) -> (positions, velocities)
        self.failed = set()
        self.replica_ids = []

    @property
    def metadata(self):
        return {
            "rng": RNG_NAME,
            "seed": self.cfg.seed,
            "dimension": self.cfg.dimension,
            "diameter": self.cfg.diameter,
            "intensity": self.cfg.mu,
            "replicas": len(self.replica_ids),
            "failed": sorted(self.failed),
            "sample_times": self.sample_times,
        }

    def ok_replicas(self):
        return [r for r in self.replica_ids if r not in self.failed]

    def values(self, name, time_index):
        return np.array([self.records[(r, name, time_index)] for r in self.ok_replicas()])

    def snapshot(self, replica, time_index):
        return self.snapshots[(replica, time_index)]

    def iter_snapshots(self, time_index):
        for r in self.ok_replicas():
            yield self.snapshots[(r, time_index)]

    def time_index(self, t):
        for k, s in enumerate(self.sample_times):
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return k
        raise KeyError(f"time {t} not among sample times {self.sample_times}")

    def merge(self, other):
        """Combine disjoint replica sets; order-independent."""
        if self.sample_times != other.sample_times:
            raise ValueError("ensembles sample different times")
        if set(self.replica_ids) & set(other.replica_ids):
            raise ValueError("replica ids overlap")
        out = ReplicaEnsemble(self.cfg, self.sample_times, self.observable_names)
        out.records = {**self.records, **other.records}
        out.snapshots = {**self.snapshots, **other.snapshots}
        out.failed = self.failed | other.failed
        out.replica_ids = sorted(self.replica_ids + other.replica_ids)
        return out


def run_replicas(cfg, observables=(), sample_times=(0.0,), replica_range=None):
    """Sample, evolve and record each replica; reproducible per (cfg, seed).

    observables: iterable of (name, fn) with fn(SystemState) -> float.
    Failed replicas are recorded and excluded from aggregates.
    """
    observables = list(observables)
    sample_times = sorted(sample_times)
    if sample_times and sample_times[0] < 0:
        raise ValueError("sample times must be nonnegative")
    if replica_range is None:
        replica_range = range(cfg.replicas)
    ens = ReplicaEnsemble(cfg, sample_times, [name for name, _ in observables])
    for r in replica_range:
        ens.replica_ids.append(r)
        rng = replica_rng(cfg.seed, r)
        try:
            state = sample_grand_canonical(cfg, rng)
            for k, t in enumerate(sample_times):
                if t > state.time:
                    state, _ = advance(state, t)
                if cfg.record_snapshots:
                    ens.snapshots[(r, k)] = (state.positions.copy(), state.velocities.copy())
                for name, fn in observables:
                    ens.records[(r, name, k)] = float(fn(state))
        except Exception:
            ens.failed.add(r)
    ens.replica_ids.sort()
    return ens
