"""Collision-tree Monte Carlo for the backward (iterated Duhamel) series.

A pseudo-trajectory starts from root states at time t and flows backward;
at each creation time a fresh particle is adjoined next to its parent at
distance +-eps along the sampled contact direction, with the scattering
law applied on the positive hemisphere.  Between creations the whole
cluster follows the backward hard-sphere flow (the forward engine run on
negated velocities), or straight lines in the zero-diameter limit mode.

Slots: roots occupy 0..n-1, created particles n..n+m-1 in creation order.
All recorded velocities are forward-frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hardsphere import SystemState, advance

__all__ = [
    "CollisionTreeSpec",
    "CreationParams",
    "PseudoTrajectory",
    "ClusteringReport",
    "count_collision_trees",
    "enumerate_collision_trees",
    "build_pseudo_trajectory",
    "estimate_F1_duhamel",
    "DuhamelEstimate",
    "classify_recollisions",
    "detect_overlaps",
    "min_inter_distance",
    "clustering_graph",
    "clustering_probability_scan",
    "wilson_interval",
]


@dataclass(frozen=True)
class CollisionTreeSpec:
    """Parent slot and hemisphere sign for each created particle."""

    n_roots: int
    parents: tuple = ()
    signs: tuple = ()

    def __post_init__(self):
        if self.n_roots < 1:
            raise ValueError("need at least one root")
        if len(self.parents) != len(self.signs):
            raise ValueError("parents and signs must align")
        for k, (p, s) in enumerate(zip(self.parents, self.signs)):
            if not 0 <= p < self.n_roots + k:
                raise ValueError(f"creation {k}: parent slot {p} not yet alive")
            if s not in (1, -1):
                raise ValueError("signs are +1 or -1")

    @property
    def m(self):
        return len(self.parents)


@dataclass(frozen=True)
class CreationParams:
    """Strictly decreasing creation times with contact angles and velocities."""

    times: tuple
    omegas: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "omegas", np.atleast_2d(np.asarray(self.omegas, dtype=float)))
        object.__setattr__(self, "velocities", np.atleast_2d(np.asarray(self.velocities, dtype=float)))
        for earlier, later in zip(times[1:], times[:-1]):
            if earlier >= later:
                raise ValueError("creation times must decrease strictly")


def count_collision_trees(n, m):
    """|A_{n,m}| = n (n+1) ... (n+m-1)."""
    if n < 1 or m < 0:
        raise ValueError("need n >= 1, m >= 0")
    out = 1
    for k in range(m):
        out *= n + k
    return out


def enumerate_collision_trees(n, m):
    """All parent assignments (unsigned); matches count_collision_trees."""
    import itertools

    choice_sets = [range(n + k) for k in range(m)]
    return [CollisionTreeSpec(n, tuple(p), (1,) * m) for p in itertools.product(*choice_sets)]


@dataclass
class PseudoEvent:
    kind: str            # 'creation' or 'scattering'
    time: float
    participants: tuple  # slots
    omega: tuple
    sign: int = 0
    approach: float = 0.0   # (v_new - v_parent(t^+)) . omega at creations


@dataclass
class PseudoTrajectory:
    eps: float
    t_top: float
    n_roots: int
    parent_of: dict
    checkpoints: list = field(default_factory=list)   # (time, slots, pos, vel), decreasing times
    events: list = field(default_factory=list)
    creation_dots: list = field(default_factory=list)

    def root_of(self, slot):
        while slot >= self.n_roots:
            slot = self.parent_of[slot]
        return slot

    def birth_time(self, slot):
        if slot < self.n_roots:
            return self.t_top
        for ev in self.events:
            if ev.kind == "creation" and ev.participants[0] == slot:
                return ev.time
        raise KeyError(slot)

    def final_configuration(self):
        """(slots, positions, velocities) at time zero."""
        t, slots, pos, vel = self.checkpoints[-1]
        return slots, pos, vel

    def state_at(self, tau):
        """Positions/velocities of the particles alive at time tau."""
        if not (0.0 <= tau <= self.t_top):
            raise ValueError("time outside the trajectory window")
        for time, slots, pos, vel in self.checkpoints:
            if time <= tau + 1e-15:
                dt = time - tau
                return slots, np.mod(pos - vel * dt, 1.0), vel
        time, slots, pos, vel = self.checkpoints[-1]
        return slots, np.mod(pos - vel * (time - tau), 1.0), vel

    def segments(self):
        """Free-flight pieces: (t_hi, t_lo, slots, pos_at_t_hi, vel)."""
        out = []
        for (t1, slots, pos, vel), (t0, *_rest) in zip(self.checkpoints, self.checkpoints[1:]):
            out.append((t1, t0, slots, pos, vel))
        t_last, slots, pos, vel = self.checkpoints[-1]
        if t_last > 0.0:
            out.append((t_last, 0.0, slots, pos, vel))
        return out


def build_pseudo_trajectory(spec, root_positions, root_velocities, params, eps, t, mode="finite"):
    """Backward construction; returns None if a creation violates exclusion.

    mode 'finite' runs the backward hard-sphere flow between creations at
    diameter eps; mode 'zero' adjoins at the parent position exactly and
    uses free backward flow (the limiting construction).
    """
    if mode not in ("finite", "zero"):
        raise ValueError("mode is 'finite' or 'zero'")
    if spec.m != len(params.times):
        raise ValueError("parameter count does not match the spec")
    zero_mode = mode == "zero"
    n = spec.n_roots
    pos = np.mod(np.atleast_2d(np.asarray(root_positions, dtype=float)), 1.0)
    vel = np.atleast_2d(np.asarray(root_velocities, dtype=float)).copy()
    d = pos.shape[1]
    slots = list(range(n))
    traj = PseudoTrajectory(eps=0.0 if zero_mode else eps, t_top=t, n_roots=n,
                            parent_of={n + k: spec.parents[k] for k in range(spec.m)})
    traj.checkpoints.append((t, tuple(slots), pos.copy(), vel.copy()))

    def run_backward(tau_hi, tau_lo):
        nonlocal pos, vel
        if tau_hi - tau_lo <= 0:
            return
        if zero_mode or len(slots) == 1:
            pos = np.mod(pos - vel * (tau_hi - tau_lo), 1.0)
            return
        state = SystemState(pos, -vel, eps)
        out, log = advance(state, tau_hi - tau_lo, validate=False)
        for ev in log:
            tau_ev = tau_hi - ev.time
            # event snapshot in forward frame
            mid = SystemState(pos, -vel, eps)
            seg, _ = advance(mid, ev.time, validate=False)
            traj.events.append(PseudoEvent("scattering", tau_ev, (slots[ev.i], slots[ev.j]), ev.omega))
            traj.checkpoints.append((tau_ev, tuple(slots), seg.positions.copy(), -seg.velocities))
        pos = out.positions.copy()
        vel = -out.velocities

    clock = t
    for k in range(spec.m):
        t_k = params.times[k]
        run_backward(clock, t_k)
        clock = t_k
        parent = spec.parents[k]
        p_idx = slots.index(parent)
        omega = params.omegas[k]
        v_new = params.velocities[k]
        sign = spec.signs[k]
        offset = 0.0 if zero_mode else sign * eps
        x_new = np.mod(pos[p_idx] + offset * omega, 1.0)
        if not zero_mode and len(slots) > 1:
            delta = pos - x_new[None, :]
            delta -= np.rint(delta)
            dist = np.sqrt((delta**2).sum(axis=1))
            dist[p_idx] = np.inf      # the parent sits at distance eps by construction
            if dist.min() <= eps:
                return None
        dot = float(np.dot(v_new - vel[p_idx], omega))
        traj.creation_dots.append(dot)
        new_slot = n + k
        traj.events.append(PseudoEvent("creation", t_k, (new_slot, parent), tuple(omega), sign, dot))
        pos = np.vstack([pos, x_new])
        vel = np.vstack([vel, v_new])
        slots.append(new_slot)
        if sign == 1 and dot > 0.0:
            proj = float(np.dot(vel[p_idx] - vel[-1], omega))
            vel[p_idx] = vel[p_idx] - proj * omega
            vel[-1] = vel[-1] + proj * omega
        traj.checkpoints.append((t_k, tuple(slots), pos.copy(), vel.copy()))
    run_backward(clock, 0.0)
    traj.checkpoints.append((0.0, tuple(slots), pos.copy(), vel.copy()))
    return traj


# ---------------------------------------------------------------------------
# Monte Carlo estimator of the one-particle density


@dataclass
class DuhamelEstimate:
    value: float
    stderr: float
    per_order: list          # (m, mean, stderr, abs_mass, positive_mean, negative_mean)
    rejected: int
    series_ratio: float

    def order_mean(self, m):
        for row in self.per_order:
            if row[0] == m:
                return row[1]
        raise KeyError(m)

    def order_split(self, m):
        for row in self.per_order:
            if row[0] == m:
                return row[4], row[5]
        raise KeyError(m)


def _surface(d):
    return 2 * math.pi if d == 2 else 4 * math.pi


def _gauss_density(v, beta):
    d = v.shape[-1]
    return (beta / (2 * math.pi)) ** (d / 2) * np.exp(-0.5 * beta * (v**2).sum(axis=-1))


def _sample_sphere(rng, d):
    u = rng.normal(size=d)
    return u / np.linalg.norm(u)


def estimate_F1_duhamel(law, t, h, eps, m0=3, samples=20000, mode="zero", d=2, rng=None,
                        proposal_beta=None):
    """Monte Carlo value of int h dF1(t) from the truncated backward series.

    Orders m = 0..m0 are sampled with equal shares of the budget; each
    sample draws a tree uniformly (parents and hemisphere signs), ordered
    uniform creation times on (0, t), uniform contact angles, and Gaussian
    creation velocities heavier-tailed than the initial law (importance
    weights stay bounded).  Samples violating the exclusion constraint at
    a creation count as zero.  The returned series_ratio is the empirical
    mass ratio between successive orders (a truncation diagnostic).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if proposal_beta is None:
        proposal_beta = 0.5 * law.beta0
    per_order = []
    rejected = 0
    order_masses = []
    total = 0.0
    var_total = 0.0
    share = max(1, samples // (m0 + 1))
    surface = _surface(d)
    for m in range(m0 + 1):
        vals = np.zeros(share)
        pos_sum = 0.0
        neg_sum = 0.0
        for i in range(share):
            x_root = rng.random(d)
            v_root = rng.normal(scale=1.0 / math.sqrt(proposal_beta), size=d)
            prop_density = _gauss_density(v_root, proposal_beta)
            parents = tuple(int(rng.integers(1 + k)) for k in range(m))
            signs = tuple(1 if rng.random() < 0.5 else -1 for _ in range(m))
            spec = CollisionTreeSpec(1, parents, signs)
            times = tuple(np.sort(rng.random(m))[::-1] * t)
            omegas = np.array([_sample_sphere(rng, d) for _ in range(m)]) if m else np.zeros((0, d))
            vels = rng.normal(scale=1.0 / math.sqrt(proposal_beta), size=(m, d))
            params = CreationParams(times, omegas, vels)
            traj = build_pseudo_trajectory(spec, x_root[None, :], v_root[None, :], params, eps, t, mode=mode)
            if traj is None:
                rejected += 1
                continue
            weight = float(h(x_root[None, :], v_root[None, :])[0])
            sign_total = 1.0
            for k in range(m):
                dot = traj.creation_dots[k]     # (v_k - v_parent(t_k^+)) . omega_k
                if dot <= 0.0:
                    weight = 0.0                # the (.)_+ kernel kills this sample
                    break
                sign_total *= signs[k]
                weight *= dot
                weight /= _gauss_density(vels[k], proposal_beta) * (1.0 / surface)
            if weight != 0.0:
                _, _pos, v_final = traj.final_configuration()
                weight *= float(np.prod(law.mass * law.velocity_density(v_final)))
                weight /= prop_density
                # tree count, sign choices, and the ordered-time simplex volume
                weight *= count_collision_trees(1, m) * (2.0**m)
                if m:
                    weight *= t**m / math.factorial(m)
                weight *= sign_total
            vals[i] = weight
            if weight > 0:
                pos_sum += weight
            elif weight < 0:
                neg_sum += weight
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(share)) if share > 1 else math.inf
        mass = float(np.abs(vals).mean())
        per_order.append((m, mean, se, mass, pos_sum / share, neg_sum / share))
        order_masses.append(mass)
        total += mean
        var_total += se * se
    ratios = [order_masses[k + 1] / order_masses[k] for k in range(len(order_masses) - 1) if order_masses[k] > 0]
    series_ratio = max(ratios) if ratios else 0.0
    return DuhamelEstimate(total, math.sqrt(var_total), per_order, rejected, series_ratio)


# ---------------------------------------------------------------------------
# recollision / overlap classification


def classify_recollisions(traj, eps_check=1e-12):
    """Scattering events between pre-existing particles, flagged external
    when the participants descend from different roots."""
    out = []
    for ev in traj.events:
        if ev.kind != "scattering":
            continue
        a, b = ev.participants
        out.append({
            "time": ev.time,
            "pair": (a, b),
            "roots": (traj.root_of(a), traj.root_of(b)),
            "external": traj.root_of(a) != traj.root_of(b),
            "omega": ev.omega,
        })
    return out


def _segment_pairs(traj_a, traj_b):
    """Common refinement of the two checkpoint grids."""
    times = sorted({t for t, *_ in traj_a.checkpoints} | {t for t, *_ in traj_b.checkpoints}, reverse=True)
    if times and times[-1] > 0.0:
        times.append(0.0)
    for t_hi, t_lo in zip(times, times[1:]):
        if t_hi - t_lo <= 1e-15:
            continue
        yield t_hi, t_lo


def _pair_interval(x0, dv, eps, duration):
    """Sub-intervals of [0, duration] where |x0 + tau dv - k| < eps, plus
    the minimal distance over the window (scanning nearby periodic images)."""
    d = len(x0)
    reach = [int(math.ceil(abs(dv[a]) * duration)) + 1 for a in range(d)]
    import itertools as it

    intervals = []
    min_dist2 = math.inf
    a_coef = float(np.dot(dv, dv))
    for offs in it.product(*[range(-r, r + 1) for r in reach]):
        rx = x0 - np.asarray(offs, dtype=float)
        b = float(np.dot(rx, dv))
        c0 = float(np.dot(rx, rx))
        if a_coef == 0.0:
            lowest = c0
            t_star = 0.0
        else:
            t_star = min(max(-b / a_coef, 0.0), duration)
            lowest = c0 + 2 * b * t_star + a_coef * t_star * t_star
        min_dist2 = min(min_dist2, lowest)
        if eps <= 0:
            continue
        disc = b * b - a_coef * (c0 - eps * eps)
        if a_coef == 0.0:
            if c0 < eps * eps:
                intervals.append((0.0, duration))
            continue
        if disc <= 0.0:
            continue
        root = math.sqrt(disc)
        lo = (-b - root) / a_coef
        hi = (-b + root) / a_coef
        lo, hi = max(lo, 0.0), min(hi, duration)
        if hi > lo:
            intervals.append((lo, hi))
    return intervals, math.sqrt(max(min_dist2, 0.0))


def _alive_states(traj, t_hi):
    for time, slots, pos, vel in traj.checkpoints:
        if time <= t_hi + 1e-12:
            return slots, np.mod(pos - vel * (time - t_hi), 1.0), vel
    time, slots, pos, vel = traj.checkpoints[-1]
    return slots, np.mod(pos - vel * (time - t_hi), 1.0), vel


def detect_overlaps(traj_a, traj_b, eps):
    """Maximal time intervals where some inter-trajectory pair sits closer
    than eps (strict), found by exact per-segment quadratic solves.

    Returns a list of dicts with keys (start, end, pair); contiguous
    intervals of the same particle pair are merged across segments.
    """
    raw = []
    for t_hi, t_lo in _segment_pairs(traj_a, traj_b):
        slots_a, pos_a, vel_a = _alive_states(traj_a, t_hi)
        slots_b, pos_b, vel_b = _alive_states(traj_b, t_hi)
        duration = t_hi - t_lo
        for ia, sa in enumerate(slots_a):
            for ib, sb in enumerate(slots_b):
                dx = pos_a[ia] - pos_b[ib]
                dx -= np.rint(dx)
                dv = -(vel_a[ia] - vel_b[ib])   # backward-time relative motion
                intervals, _ = _pair_interval(dx, dv, eps, duration)
                for lo, hi in intervals:
                    raw.append({"start": t_hi - hi, "end": t_hi - lo, "pair": (sa, sb)})
    # union across pairs into maximal intervals; the reported pair is the
    # one realizing the interval's supremum endpoint
    raw.sort(key=lambda r: r["start"])
    merged = []
    for r in raw:
        if merged and r["start"] <= merged[-1]["end"] + 1e-12:
            if r["end"] > merged[-1]["end"]:
                merged[-1]["end"] = r["end"]
                merged[-1]["pair"] = r["pair"]
        else:
            merged.append(dict(r))
    return merged


def min_inter_distance(traj_a, traj_b):
    """Exact minimum over time of the closest inter-trajectory pair distance."""
    # static distance of the top configurations covers zero-length windows
    _, pos_a, _ = traj_a.checkpoints[0][1], traj_a.checkpoints[0][2], None
    _, pos_b, _ = traj_b.checkpoints[0][1], traj_b.checkpoints[0][2], None
    delta = pos_a[:, None, :] - pos_b[None, :, :]
    delta -= np.rint(delta)
    best = float(np.sqrt((delta**2).sum(axis=-1)).min())
    for t_hi, t_lo in _segment_pairs(traj_a, traj_b):
        slots_a, pos_a, vel_a = _alive_states(traj_a, t_hi)
        slots_b, pos_b, vel_b = _alive_states(traj_b, t_hi)
        duration = t_hi - t_lo
        for ia in range(len(slots_a)):
            for ib in range(len(slots_b)):
                dx = pos_a[ia] - pos_b[ib]
                dx -= np.rint(dx)
                dv = -(vel_a[ia] - vel_b[ib])
                _, dist = _pair_interval(dx, dv, 0.0, duration)
                best = min(best, dist)
    return best


@dataclass
class ClusteringReport:
    recollisions: list
    overlaps: list
    edges: list          # (tree_i, tree_j, sign, time)
    minimal: bool
    per_jungle: list


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def clustering_graph(trajectories, forests, jungles, eps=None):
    """Signed clustering graph per the backward-in-time extraction rules.

    trajectories: one PseudoTrajectory per forest (roots of forest k are
    the global tree labels forests[k], in slot order).  Within a forest,
    external recollisions are scanned from time t downward and kept when
    they do not close a cycle (+ edges).  Overlaps between forests of a
    common jungle are reduced to a spanning selection by decreasing
    overlap time (- edges), each attributed to the trees owning the
    overlapping particles.  `minimal` holds iff every jungle's edge set is
    a tree on its trees (checked independently via edge count + acyclicity).
    """
    for jungle in jungles:
        for fidx in jungle:
            if not 0 <= fidx < len(forests):
                raise ValueError("jungle refers to a missing forest")
    covered = sorted(f for jungle in jungles for f in jungle)
    if covered != list(range(len(forests))):
        raise ValueError("jungles must partition the forests")
    if eps is None:
        eps = max(traj.eps for traj in trajectories)
    edges = []
    recollisions = []
    overlaps = []

    def tree_label(forest_idx, slot):
        traj = trajectories[forest_idx]
        return forests[forest_idx][traj.root_of(slot)]

    for fidx, traj in enumerate(trajectories):
        events = [r for r in classify_recollisions(traj) if r["external"]]
        events.sort(key=lambda r: -r["time"])
        uf = _UnionFind(forests[fidx])
        for rec in events:
            a = tree_label(fidx, rec["pair"][0])
            b = tree_label(fidx, rec["pair"][1])
            if uf.union(a, b):
                recollisions.append({**rec, "trees": (a, b), "forest": fidx})
                edges.append((a, b, +1, rec["time"]))

    for jungle in jungles:
        candidates = []
        for i, fa in enumerate(jungle):
            for fb in jungle[i + 1:]:
                found = detect_overlaps(trajectories[fa], trajectories[fb], eps)
                if not found:
                    continue
                # sup of times where the distance drops below eps
                best = max(found, key=lambda r: r["end"])
                candidates.append((best["end"], fa, fb, best))
        candidates.sort(key=lambda c: -c[0])
        uf = _UnionFind(jungle)
        for t_ov, fa, fb, rec in candidates:
            if uf.union(fa, fb):
                a = tree_label(fa, rec["pair"][0])
                b = tree_label(fb, rec["pair"][1])
                overlaps.append({"time": t_ov, "forests": (fa, fb), "trees": (a, b), "interval": rec})
                edges.append((a, b, -1, t_ov))

    per_jungle = []
    minimal = True
    for jungle in jungles:
        trees = [lab for f in jungle for lab in forests[f]]
        subset = [e for e in edges if e[0] in trees and e[1] in trees]
        uf = _UnionFind(trees)
        acyclic = all(uf.union(a, b) for a, b, _s, _t in subset)
        jungle_minimal = acyclic and len(subset) == len(trees) - 1
        per_jungle.append({"trees": trees, "edges": subset, "minimal": jungle_minimal})
        minimal &= jungle_minimal
    return ClusteringReport(recollisions, overlaps, edges, minimal, per_jungle)


def wilson_interval(successes, n, z=1.96):
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def clustering_probability_scan(law, t, eps_list, samples, d=2, seed=0):
    """P[two independent single-root backward flows approach within eps].

    Free single-particle trees (no creations): the event is the tube
    condition min distance <= eps over [0, t].  Returns per-eps rows
    (eps, mu, p_hat, wilson_lo, wilson_hi, hits) plus the fitted slope of
    log P against log mu.
    """
    if len(eps_list) < 2:
        raise ValueError("need at least two diameters to fit a slope")
    rows = []
    for idx, eps in enumerate(eps_list):
        rng = np.random.default_rng((seed << 16) + idx)
        hits = 0
        for _ in range(samples):
            x = rng.random((2, d))
            v = law.sample_velocities(2, d, rng)
            dx = x[0] - x[1]
            dx -= np.rint(dx)
            dv = -(v[0] - v[1])
            _, dist = _pair_interval(dx, dv, 0.0, t)
            if dist <= eps:
                hits += 1
        p = hits / samples
        lo, hi = wilson_interval(hits, samples)
        mu = eps ** -(d - 1)
        rows.append({"eps": eps, "mu": mu, "p": p, "lo": lo, "hi": hi, "hits": hits})
        if hits == 0:
            rows[-1]["starved"] = True
    xs = [math.log(r["mu"]) for r in rows if r["p"] > 0]
    ys = [math.log(r["p"]) for r in rows if r["p"] > 0]
    slope = float("nan")
    if len(xs) >= 2:
        slope = float(np.polyfit(xs, ys, 1)[0])
    return rows, slope
