"""Stochastic particle relaxation (Bird-style majorant rejection).

Space-homogeneous Kac process whose pair rate (1/N) |v_i - v_j| c_d and
hemisphere-weighted contact angles reproduce the hard-sphere collision
integral in the mean-field limit; energy and momentum are conserved
exactly at every accepted collision.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["dsmc_relax"]


def _angular_mass(d):
    return 2.0 if d == 2 else math.pi


def _sample_contact_direction(u_hat, rng):
    """omega distributed as ((u . omega))_+ / (c_d |u|) on the hemisphere."""
    d = len(u_hat)
    if d == 2:
        sin_t = 2.0 * rng.random() - 1.0
        cos_t = math.sqrt(1.0 - sin_t * sin_t)
        c, s = u_hat
        return np.array([c * cos_t - s * sin_t, s * cos_t + c * sin_t])
    cos_t = math.sqrt(rng.random())
    sin_t = math.sqrt(1.0 - cos_t * cos_t)
    phi = 2.0 * math.pi * rng.random()
    # orthonormal frame around u_hat
    a = np.array([1.0, 0.0, 0.0]) if abs(u_hat[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(u_hat, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u_hat, e1)
    return cos_t * u_hat + sin_t * (math.cos(phi) * e1 + math.sin(phi) * e2)


def dsmc_relax(law, n_particles, t_end, rate_scale, rng, d=2, sample_times=(), dt=None):
    """Evolve n_particles velocities; returns (times, snapshots, n_collisions).

    rate_scale majorizes every relative speed; candidates violating it
    raise (underflow of the majorant).  Snapshots are velocity arrays
    copied at the requested times (always including 0 and t_end).
    """
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    c_d = _angular_mass(d)
    vel = law.sample_velocities(n_particles, d, rng)
    rate_cand = 0.5 * (n_particles - 1) * c_d * rate_scale
    if dt is None:
        dt = 0.05 / (c_d * rate_scale)
    marks = sorted(set([0.0, t_end] + [float(s) for s in sample_times]))
    if marks[0] < 0 or marks[-1] > t_end:
        raise ValueError("sample times outside [0, t_end]")
    times, snaps = [], []
    t = 0.0
    n_coll = 0
    for mark in marks:
        while t < mark - 1e-15:
            step = min(dt, mark - t)
            n_cand = rng.poisson(rate_cand * step)
            for _ in range(n_cand):
                i = int(rng.integers(n_particles))
                j = int(rng.integers(n_particles - 1))
                if j >= i:
                    j += 1
                u = vel[i] - vel[j]
                speed = math.sqrt(float(u @ u))
                if speed > rate_scale:
                    raise RuntimeError(f"majorant underflow: |v_i - v_j| = {speed:.3f} > {rate_scale}")
                if rng.random() * rate_scale < speed:
                    omega = _sample_contact_direction(u / speed, rng)
                    proj = float(u @ omega)
                    vel[i] = vel[i] - proj * omega
                    vel[j] = vel[j] + proj * omega
                    n_coll += 1
            t += step
        times.append(mark)
        snaps.append(vel.copy())
    return times, snaps, n_coll
