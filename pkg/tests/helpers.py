"""Shared test utilities: brute-force dynamics oracle and random states."""

import math

import numpy as np

from hslab.hardsphere import CollisionEvent, SystemState

CHUNK = 4096


def random_admissible_state(n, d, eps, rng, speed=1.0):
    """n non-overlapping spheres with Gaussian velocities.

    Tries whole-configuration rejection; for dense systems falls back to a
    jittered lattice, which still yields an exclusion-respecting state.
    """
    for _ in range(200):
        pos = rng.random((n, d))
        delta = pos[:, None, :] - pos[None, :, :]
        delta -= np.rint(delta)
        dist = np.sqrt((delta**2).sum(axis=-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() > eps * 1.001:
            break
    else:
        m = int(math.ceil(n ** (1.0 / d)))
        spacing = 1.0 / m
        if spacing < eps * 1.05:
            raise ValueError(f"cannot place {n} spheres of diameter {eps} on the torus")
        sites = np.array(list(np.ndindex(*(m,) * d)), dtype=float) * spacing
        pick = rng.choice(len(sites), size=n, replace=False)
        jitter = 0.5 * (spacing - eps * 1.01)
        pos = np.mod(sites[pick] + rng.uniform(-jitter, jitter, size=(n, d)), 1.0)
    vel = rng.normal(scale=speed, size=(n, d))
    return SystemState(pos, vel, eps)


def oracle_advance(state, until, dt_factor=1e-5):
    """Fine-time-step reference dynamics with bisection-refined contacts.

    Scans pair distances on a dt = dt_factor * eps grid, then bisects each
    detected crossing of the contact distance down to ~1e-12 time accuracy.
    Independent of the event-driven engine: no prediction, no scheduling.
    """
    eps = state.diameter
    d = state.dimension
    n = state.n
    dt = dt_factor * eps
    pos = state.positions.copy()
    vel = state.velocities.copy()
    t = state.time
    log = []
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if not pairs:
        return SystemState(pos, vel, eps, until), log

    def pair_dist(x, i, j):
        delta = x[i] - x[j]
        delta -= np.rint(delta)
        return math.sqrt(float(np.dot(delta, delta)))

    while t < until - 1e-15:
        steps = min(CHUNK, max(1, int(math.ceil((until - t) / dt))))
        tau = dt * np.arange(1, steps + 1)
        tau[-1] = min(tau[-1], until - t)
        # distances for every pair on the whole chunk at once
        hit_step = None
        hit_pairs = None
        grid = pos[None, :, :] + tau[:, None, None] * vel[None, :, :]
        for k, (i, j) in enumerate(pairs):
            delta = grid[:, i, :] - grid[:, j, :]
            delta -= np.rint(delta)
            dist2 = (delta**2).sum(axis=1)
            inside = np.nonzero(dist2 < eps * eps)[0]
            if inside.size:
                step = int(inside[0])
                if hit_step is None or step < hit_step:
                    hit_step = step
                    hit_pairs = [(i, j)]
                elif step == hit_step:
                    hit_pairs.append((i, j))
        if hit_step is None:
            pos = np.mod(pos + vel * tau[-1], 1.0)
            t += tau[-1]
            continue
        lo = tau[hit_step - 1] if hit_step > 0 else 0.0
        hi = tau[hit_step]
        best = None
        for (i, j) in hit_pairs:
            a, b = lo, hi
            for _ in range(80):
                mid = 0.5 * (a + b)
                if pair_dist(np.mod(pos + vel * mid, 1.0), i, j) >= eps:
                    a = mid
                else:
                    b = mid
                if b - a < 1e-14 * max(1.0, hi):
                    break
            if best is None or a < best[0]:
                best = (a, i, j)
        tc, i, j = best
        pos = np.mod(pos + vel * tc, 1.0)
        t += tc
        delta = pos[i] - pos[j]
        delta -= np.rint(delta)
        norm = math.sqrt(float(np.dot(delta, delta)))
        omega = delta / norm
        dv = vel[i] - vel[j]
        proj = float(np.dot(dv, omega))
        if abs(proj) >= 1e-12 * math.sqrt(float(np.dot(dv, dv))):
            vel[i] = vel[i] - proj * omega
            vel[j] = vel[j] + proj * omega
            log.append(CollisionEvent(t, i, j, tuple(omega)))
        else:
            # tangential graze: step past the contact without scattering
            pos = np.mod(pos + vel * dt, 1.0)
            t += dt
    return SystemState(pos, vel, eps, until), log
