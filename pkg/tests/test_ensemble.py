import itertools
import math

import numpy as np
import pytest

from hslab.ensemble import (
    GCConfig,
    InitialLaw,
    replica_rng,
    run_replicas,
    sample_grand_canonical,
    sample_velocity,
)


def lattice_distribution_oracle(g, eps, lam, n_max):
    """Exact P(N) for the exclusion-conditioned law with positions iid
    uniform over the g^2 cell centers: P(N) proportional to lam^N S_N / g^{2N}
    with S_N the number of N-subsets with pairwise torus distance > eps."""
    pts = [((i + 0.5) / g, (j + 0.5) / g) for i in range(g) for j in range(g)]

    def far(p, q):
        dx = abs(p[0] - q[0])
        dy = abs(p[1] - q[1])
        dx = min(dx, 1 - dx)
        dy = min(dy, 1 - dy)
        return dx * dx + dy * dy > eps * eps

    def count_subsets(k):
        total = 0
        stack = [(0, ())]
        while stack:
            start, chosen = stack.pop()
            if len(chosen) == k:
                total += 1
                continue
            for idx in range(start, len(pts)):
                if all(far(pts[idx], pts[c]) for c in chosen):
                    stack.append((idx + 1, chosen + (idx,)))
        return total

    weights = []
    for n in range(n_max + 1):
        s_n = count_subsets(n)
        weights.append(lam**n * s_n / (g * g) ** n)
        if s_n == 0:
            break
    weights = np.array(weights)
    return weights / weights.sum()


class TestInitialLaw:
    def test_maxwellian_moments(self):
        law = InitialLaw("maxwellian", beta=2.0)
        rng = np.random.default_rng(0)
        v = law.sample_velocities(10**6, 2, rng)
        se_mean = math.sqrt(0.5 / 10**6)
        assert abs(v.mean()) <= 4 * se_mean
        assert abs(v.var() - 0.5) <= 4 * math.sqrt(2 * 0.25 / 10**6)

    def test_bimodal_symmetric_mean(self):
        law = InitialLaw("bimodal", beta=1.0, separation=3.0)
        rng = np.random.default_rng(1)
        v = law.sample_velocities(2 * 10**5, 2, rng)
        se = math.sqrt(law.component_variance() / len(v))
        assert abs(v[:, 0].mean()) <= 4 * se
        assert abs(v[:, 0].var() - law.component_variance()) <= 4 * law.component_variance() / math.sqrt(len(v)) * 2

    def test_degenerate_beta_collapses(self):
        law = InitialLaw("maxwellian", beta=1e12)
        rng = np.random.default_rng(2)
        v = law.sample_velocities(1000, 3, rng)
        assert np.abs(v).max() < 1e-4

    def test_unknown_profile_rejected(self):
        with pytest.raises(ValueError):
            InitialLaw("uniform")

    def test_custom_tabulated_law(self):
        # triangle density on [-1, 1]
        grid = np.linspace(-1.0, 1.0, 201)
        f = 1.0 - np.abs(grid)
        law = InitialLaw("custom", table_v=grid, table_f=f, c0=2.0, beta0=0.5)
        rng = np.random.default_rng(3)
        v = law.sample_velocities(2 * 10**5, 2, rng)
        # triangle variance = 1/6
        assert abs(v.var() - 1 / 6) <= 4 * (1 / 6) / math.sqrt(v.size) * 3
        assert abs(law.component_variance() - 1 / 6) < 1e-3

    def test_envelope_holds_for_builtin_laws(self):
        rng = np.random.default_rng(4)
        assert InitialLaw("maxwellian", beta=1.0).check_envelope(2, rng)
        assert InitialLaw("bimodal", beta=1.0, separation=2.5).check_envelope(2, rng)

    def test_density_normalization(self):
        law = InitialLaw("bimodal", beta=1.5, separation=2.0)
        grid = np.linspace(-8, 8, 401)
        vv = np.array(list(itertools.product(grid, grid)))
        total = law.velocity_density(vv).sum() * (grid[1] - grid[0]) ** 2
        assert total == pytest.approx(1.0, abs=1e-6)


class TestGrandCanonical:
    def test_zero_mass_gives_empty_state(self):
        cfg = GCConfig(dimension=2, diameter=0.01, law=InitialLaw(mass=0.0), seed=1)
        state = sample_grand_canonical(cfg, replica_rng(1, 0))
        assert state.n == 0

    def test_small_diameter_mean_matches_poisson(self):
        cfg = GCConfig(dimension=2, diameter=1e-4, intensity=5.0, seed=2)
        rng = replica_rng(2, 0)
        counts = [sample_grand_canonical(cfg, rng).n for _ in range(3000)]
        se = math.sqrt(5.0 / 3000)
        assert abs(np.mean(counts) - 5.0) <= 4 * se

    def test_exclusion_always_satisfied(self):
        cfg = GCConfig(dimension=2, diameter=0.04, intensity=30.0, seed=3)
        rng = replica_rng(3, 0)
        for _ in range(50):
            state = sample_grand_canonical(cfg, rng)
            if state.n >= 2:
                assert state.min_pair_distance() > cfg.diameter

    def test_mean_matches_weighted_poisson_oracle(self):
        cfg = GCConfig(dimension=2, diameter=1 / 80, intensity=80.0, seed=4)
        rng = replica_rng(4, 0)
        draws = 1500
        counts = np.array([sample_grand_canonical(cfg, rng).n for _ in range(draws)])
        # independent oracle: self-normalized acceptance-weighted Poisson draws
        orng = np.random.default_rng(999)
        ns, ws = [], []
        for _ in range(6000):
            n = orng.poisson(80.0)
            pos = orng.random((n, 2))
            delta = pos[:, None, :] - pos[None, :, :]
            delta -= np.rint(delta)
            d2 = (delta**2).sum(axis=-1)
            np.fill_diagonal(d2, np.inf)
            ns.append(n)
            ws.append(1.0 if d2.min() > cfg.diameter**2 else 0.0)
        ns, ws = np.array(ns), np.array(ws)
        oracle_mean = (ns * ws).sum() / ws.sum()
        se_emp = counts.std(ddof=1) / math.sqrt(draws)
        acc = ns[ws > 0]
        se_orc = acc.std(ddof=1) / math.sqrt(len(acc))
        assert abs(counts.mean() - oracle_mean) <= 3 * math.hypot(se_emp, se_orc)

    def test_infeasible_parameters_rejected(self):
        cfg = GCConfig(dimension=2, diameter=0.5, intensity=20.0, seed=5)
        with pytest.raises(ValueError):
            sample_grand_canonical(cfg, replica_rng(5, 0))

    def test_lattice_law_matches_exhaustive_oracle(self):
        g, eps, lam = 5, 0.25, 3.0
        cfg = GCConfig(
            dimension=2, diameter=eps, intensity=lam, seed=6, position_lattice=g,
            law=InitialLaw(mass=1.0),
        )
        rng = replica_rng(6, 0)
        draws = 4000
        counts = np.bincount([sample_grand_canonical(cfg, rng).n for _ in range(draws)], minlength=16)
        p = lattice_distribution_oracle(g, eps, lam, 15)
        for n in range(len(p)):
            se = math.sqrt(max(p[n] * (1 - p[n]), 1e-12) / draws)
            observed = counts[n] / draws if n < len(counts) else 0.0
            assert abs(observed - p[n]) <= 4 * se + 1e-9, f"N={n}: {observed} vs {p[n]}"


class TestReplicas:
    def test_metadata_only_run(self):
        cfg = GCConfig(dimension=2, diameter=0.02, intensity=10.0, seed=7, replicas=1)
        ens = run_replicas(cfg, observables=[], sample_times=[0.0])
        assert ens.replica_ids == [0]
        assert ens.metadata["rng"] == "philox4x64"
        assert not ens.failed

    def test_determinism(self):
        cfg = GCConfig(dimension=2, diameter=0.02, intensity=15.0, seed=8, replicas=4, horizon=0.2)
        obs = [("npart", lambda s: s.n), ("esum", lambda s: s.kinetic_energy())]
        e1 = run_replicas(cfg, obs, sample_times=[0.0, 0.2])
        e2 = run_replicas(cfg, obs, sample_times=[0.0, 0.2])
        assert e1.records == e2.records

    def test_merge_equals_single_run(self):
        cfg = GCConfig(dimension=2, diameter=0.02, intensity=15.0, seed=9, replicas=10)
        obs = [("npart", lambda s: s.n)]
        full = run_replicas(cfg, obs, sample_times=[0.0])
        part1 = run_replicas(cfg, obs, sample_times=[0.0], replica_range=range(0, 6))
        part2 = run_replicas(cfg, obs, sample_times=[0.0], replica_range=range(6, 10))
        merged = part1.merge(part2)
        assert merged.records == full.records
        assert merged.replica_ids == full.replica_ids
        # order independence
        merged_rev = part2.merge(part1)
        assert merged_rev.records == full.records

    def test_equilibrium_moment_stationarity(self):
        cfg = GCConfig(
            dimension=2, diameter=1 / 40, intensity=40.0, seed=10, replicas=80,
            law=InitialLaw("maxwellian", beta=1.0),
        )

        def moment(order):
            return lambda s: float((s.velocities[:, 0] ** order).sum()) / cfg.mu

        obs = [(f"m{k}", moment(k)) for k in (1, 2, 3, 4)]
        ens = run_replicas(cfg, obs, sample_times=[0.0, 0.4])
        assert not ens.failed
        for k in (1, 2, 3, 4):
            v0 = ens.values(f"m{k}", 0)
            v1 = ens.values(f"m{k}", 1)
            diff = v1 - v0
            se = diff.std(ddof=1) / math.sqrt(len(diff))
            assert abs(diff.mean()) <= 3 * se + 1e-12, f"moment {k} drifted"
