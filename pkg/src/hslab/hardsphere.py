"""Event-driven dynamics of N hard spheres on the d-dimensional unit torus.

Exact specular collisions scheduled through a binary min-heap with lazy
epoch invalidation.  Spatial acceleration uses cell lists with
cell-crossing events when the box is fine enough (>= 5 cells per axis);
otherwise every pair is predicted directly with a periodic-image scan.

Positions live in [0,1)^d; particle state between events is free flight.
Units: torus side 1, time in simulation units.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

CONTACT_TOL = 1e-9          # relative admissible penetration
GRAZE_TOL = 1e-12           # relative approach rate below which contact is skipped

__all__ = [
    "ParticleState",
    "SystemState",
    "CollisionEvent",
    "scatter",
    "predict_pair_collision",
    "free_flow",
    "advance",
    "OverlapError",
    "write_snapshot_csv",
    "read_snapshot_csv",
    "write_event_log_csv",
]


class OverlapError(RuntimeError):
    """Raised when a state violates the hard-sphere exclusion beyond tolerance."""


@dataclass(frozen=True)
class ParticleState:
    position: tuple
    velocity: tuple
    collision_count: int = 0


@dataclass
class CollisionEvent:
    time: float
    i: int
    j: int
    omega: tuple


@dataclass
class SystemState:
    """Microstate of N spheres: positions/velocities arrays plus the clock."""

    positions: np.ndarray        # (N, d), each component in [0, 1)
    velocities: np.ndarray       # (N, d)
    diameter: float
    time: float = 0.0
    collision_counts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have matching shapes")
        if self.collision_counts is None:
            self.collision_counts = np.zeros(len(self.positions), dtype=np.int64)
        if self.diameter <= 0:
            raise ValueError("diameter must be positive")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")

    @property
    def n(self):
        return len(self.positions)

    @property
    def dimension(self):
        return self.positions.shape[1] if self.positions.size else 2

    def particles(self):
        return [
            ParticleState(tuple(self.positions[i]), tuple(self.velocities[i]), int(self.collision_counts[i]))
            for i in range(self.n)
        ]

    def copy(self):
        return SystemState(
            self.positions.copy(), self.velocities.copy(), self.diameter, self.time, self.collision_counts.copy()
        )

    def kinetic_energy(self):
        return float(np.sum(self.velocities**2))

    def momentum(self):
        return self.velocities.sum(axis=0)

    def min_pair_distance(self):
        if self.n < 2:
            return math.inf
        delta = self.positions[:, None, :] - self.positions[None, :, :]
        delta -= np.rint(delta)
        dist = np.sqrt((delta**2).sum(axis=-1))
        np.fill_diagonal(dist, np.inf)
        return float(dist.min())

    def validate(self):
        if self.n >= 2 and self.min_pair_distance() < self.diameter * (1.0 - CONTACT_TOL):
            raise OverlapError(
                f"pair distance {self.min_pair_distance():.3e} below diameter {self.diameter:.3e}"
            )


def scatter(v, w, omega):
    """Specular reflection of a velocity pair along the unit contact vector."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    omega = np.asarray(omega, dtype=float)
    norm = float(np.dot(omega, omega))
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"omega must be a unit vector, got |omega|^2 = {norm}")
    proj = float(np.dot(v - w, omega))
    return v - proj * omega, w + proj * omega


def _pair_contact_time(dx, dv, eps, horizon, offsets):
    """Earliest contact in (0, horizon] over the given integer image offsets."""
    best = None
    eps2 = eps * eps
    for off in offsets:
        rx = [dx[a] - off[a] for a in range(len(dx))]
        b = sum(r * u for r, u in zip(rx, dv))
        if b >= 0.0:
            continue
        a = sum(u * u for u in dv)
        c = sum(r * r for r in rx) - eps2
        if c < 0.0:
            if c < -2.0 * eps2 * CONTACT_TOL:
                raise OverlapError("particles overlap at prediction time")
            c = 0.0
        disc = b * b - a * c
        if disc <= 0.0:
            continue
        root = math.sqrt(disc)
        if root < GRAZE_TOL * math.sqrt(a) * eps:
            continue  # tangential contact, measure-zero grazing skipped
        t = c / (-b + root)
        if 0.0 <= t <= horizon and (best is None or t < best):
            best = t
    return best


def _image_offsets(dv, horizon, d):
    ranges = []
    for a in range(d):
        reach = int(math.ceil(abs(dv[a]) * horizon)) + 1
        ranges.append(range(-reach, reach + 1))
    return list(itertools.product(*ranges))


def predict_pair_collision(a, b, eps, horizon):
    """Contact time of two free-flying spheres within `horizon`, or None.

    Scans every periodic image reachable within the horizon.
    """
    xa = np.asarray(a.position, dtype=float)
    xb = np.asarray(b.position, dtype=float)
    va = np.asarray(a.velocity, dtype=float)
    vb = np.asarray(b.velocity, dtype=float)
    d = len(xa)
    dx = xa - xb
    dx -= np.rint(dx)
    dv = va - vb
    if float(np.dot(dx, dx)) < (eps * (1.0 - CONTACT_TOL)) ** 2:
        raise OverlapError("particles already overlap beyond tolerance")
    return _pair_contact_time(dx.tolist(), dv.tolist(), eps, horizon, _image_offsets(dv.tolist(), horizon, d))


def free_flow(state, dt):
    """Free transport by dt: positions advance modulo 1, velocities fixed."""
    out = state.copy()
    out.positions = np.mod(out.positions + out.velocities * dt, 1.0)
    out.time += dt
    return out


# ---------------------------------------------------------------------------
# event loop

_KIND_PAIR = 0
_KIND_TRANSFER = 1


class _EventLoop:
    """One advance() call: owns plain-float mirrors of the state for speed."""

    def __init__(self, state, until, force_cells=None):
        self.eps = state.diameter
        self.d = state.dimension
        self.n = state.n
        self.t0 = state.time
        self.until = until
        self.pos = [list(map(float, row)) for row in state.positions]
        self.vel = [list(map(float, row)) for row in state.velocities]
        self.count = [int(c) for c in state.collision_counts]
        self.tlast = [state.time] * self.n
        self.heap = []
        self.seq = itertools.count()
        self.log = []

        kmax = int(1.0 / self.eps)
        ktarget = max(5, int(round(self.n ** (1.0 / self.d))))
        self.k = min(kmax, ktarget)
        self.use_cells = self.k >= 5 and self.n > 8
        if force_cells is not None:
            if force_cells and self.k < 5:
                raise ValueError("cell mode needs at least 5 cells per axis")
            self.use_cells = force_cells
        if self.use_cells:
            self.cell_len = 1.0 / self.k
            self.cells = {}
            self.cell_of = []
            for i in range(self.n):
                c = self._cell_index(self.pos[i])
                self.cell_of.append(c)
                self.cells.setdefault(c, set()).add(i)

    # -- geometry helpers ---------------------------------------------------

    def _cell_index(self, x):
        return tuple(min(self.k - 1, int(x[a] * self.k)) for a in range(self.d))

    def _position_at(self, i, t):
        dt = t - self.tlast[i]
        return [self.pos[i][a] + self.vel[i][a] * dt for a in range(self.d)]

    def _sync(self, i, t):
        if t != self.tlast[i]:
            x = self._position_at(i, t)
            self.pos[i] = [xa - math.floor(xa) for xa in x]
            self.tlast[i] = t

    # -- scheduling ---------------------------------------------------------

    def _push(self, time, kind, i, j, ci, cj, payload=None):
        heapq.heappush(self.heap, (time, next(self.seq), kind, i, j, ci, cj, payload))

    def _predict_pair(self, i, j, now):
        xi = self._position_at(i, now)
        xj = self._position_at(j, now)
        dx = [xi[a] - xj[a] for a in range(self.d)]
        dx = [r - round(r) for r in dx]
        dv = [self.vel[i][a] - self.vel[j][a] for a in range(self.d)]
        horizon = self.until - now
        if horizon <= 0:
            return
        if self.use_cells:
            # minimal image only; contacts beyond either particle's cell exit
            # are dropped and rediscovered after the transfer re-prediction
            t = _pair_contact_time(dx, dv, self.eps, horizon, [(0,) * self.d])
            if t is not None:
                cap = min(self._cell_exit_time(i, now), self._cell_exit_time(j, now)) - now
                if t > cap:
                    return
        else:
            t = _pair_contact_time(dx, dv, self.eps, horizon, _image_offsets(dv, horizon, self.d))
        if t is not None:
            self._push(now + t, _KIND_PAIR, i, j, self.count[i], self.count[j])

    def _cell_offset(self, x, cell, a):
        # coordinate relative to the cell's lower bound, wrapped to [0, 1);
        # lies in [0, cell_len] when position and cell registry agree.  The
        # registry can lag the synced position by a few ulps right at a
        # boundary, in which case the wrap maps -ulp to ~1; snap that to 0.
        r = x[a] - cell[a] * self.cell_len
        r -= math.floor(r)
        return 0.0 if r > 0.5 else r

    def _cell_exit_time(self, i, now):
        best = math.inf
        x = self._position_at(i, now)
        cell = self.cell_of[i]
        for a in range(self.d):
            v = self.vel[i][a]
            if v == 0.0:
                continue
            r = self._cell_offset(x, cell, a)
            dt = (self.cell_len - r) / v if v > 0 else r / (-v)
            best = min(best, now + dt)
        return best

    def _schedule_transfer(self, i, now):
        t = self._cell_exit_time(i, now)
        if t <= self.until:
            self._push(t, _KIND_TRANSFER, i, -1, self.count[i], -1)

    def _neighbors(self, i):
        cell = self.cell_of[i]
        out = set()
        for delta in itertools.product((-1, 0, 1), repeat=self.d):
            c = tuple((cell[a] + delta[a]) % self.k for a in range(self.d))
            out |= self.cells.get(c, set())
        out.discard(i)
        return out

    def _reschedule_particle(self, i, now):
        if self.use_cells:
            partners = self._neighbors(i)
            self._schedule_transfer(i, now)
        else:
            partners = (j for j in range(self.n) if j != i)
        for j in partners:
            a, b = (i, j) if i < j else (j, i)
            self._predict_pair(a, b, now)

    # -- event execution ----------------------------------------------------

    def run(self):
        now = self.t0
        if self.n >= 2:
            if self.use_cells:
                for i in range(self.n):
                    for j in self._neighbors(i):
                        if j > i:
                            self._predict_pair(i, j, now)
                    self._schedule_transfer(i, now)
            else:
                for i in range(self.n):
                    for j in range(i + 1, self.n):
                        self._predict_pair(i, j, now)
        while self.heap:
            time, _, kind, i, j, ci, cj, _ = heapq.heappop(self.heap)
            if time > self.until:
                break
            if self.count[i] != ci:
                continue
            if kind == _KIND_PAIR:
                if self.count[j] != cj:
                    continue
                self._execute_collision(i, j, time)
            else:
                self._execute_transfer(i, time)
            now = time
        return self._finish()

    def _execute_collision(self, i, j, time):
        self._sync(i, time)
        self._sync(j, time)
        dx = [self.pos[i][a] - self.pos[j][a] for a in range(self.d)]
        dx = [r - round(r) for r in dx]
        norm = math.sqrt(sum(r * r for r in dx))
        if not (self.eps * 0.5 < norm < self.eps * 1.5):
            raise RuntimeError(f"stale collision executed at separation {norm:.3e} (eps={self.eps:.3e})")
        omega = [r / norm for r in dx]
        proj = sum((self.vel[i][a] - self.vel[j][a]) * omega[a] for a in range(self.d))
        for a in range(self.d):
            self.vel[i][a] -= proj * omega[a]
            self.vel[j][a] += proj * omega[a]
        self.count[i] += 1
        self.count[j] += 1
        self.log.append(CollisionEvent(time, i, j, tuple(omega)))
        self._reschedule_particle(i, time)
        self._reschedule_particle(j, time)

    def _execute_transfer(self, i, time):
        self._sync(i, time)
        x = self.pos[i]
        cell = self.cell_of[i]
        # pick the axis whose boundary was hit (closest to a boundary crossing)
        best_axis, best_dir, best_err = 0, 0, math.inf
        for a in range(self.d):
            v = self.vel[i][a]
            if v == 0:
                continue
            r = self._cell_offset(x, cell, a)
            if v > 0:
                err = abs(self.cell_len - r)
                direction = 1
            else:
                err = r
                direction = -1
            if err < best_err:
                best_axis, best_dir, best_err = a, direction, err
        new_cell = list(cell)
        new_cell[best_axis] = (new_cell[best_axis] + best_dir) % self.k
        new_cell = tuple(new_cell)
        self.cells[cell].discard(i)
        self.cells.setdefault(new_cell, set()).add(i)
        self.cell_of[i] = new_cell
        self._reschedule_particle(i, time)

    def _finish(self):
        for i in range(self.n):
            self._sync(i, self.until)
        positions = np.asarray(self.pos, dtype=float) if self.n else np.zeros((0, self.d))
        velocities = np.asarray(self.vel, dtype=float) if self.n else np.zeros((0, self.d))
        state = SystemState(
            np.mod(positions, 1.0),
            velocities,
            self.eps,
            self.until,
            np.asarray(self.count, dtype=np.int64),
        )
        return state, self.log


def advance(state, until, validate=True, force_cells=None):
    """Advance through the exact event sequence up to time `until`.

    Returns (new_state, collision_log); the input state is not mutated.
    Each logged event carries (time, i, j, omega) with omega the minimal
    image contact direction (x_i - x_j)/eps.  `force_cells` overrides the
    automatic choice of spatial acceleration (used for cross-validation).
    """
    if until < state.time:
        raise ValueError("cannot advance backwards; negate velocities instead")
    if validate:
        state.validate()
    if state.n == 0 or until == state.time:
        out = state.copy()
        out.time = until
        return out, []
    loop = _EventLoop(state, until, force_cells=force_cells)
    out, log = loop.run()
    if validate:
        out.validate()
    return out, log


# ---------------------------------------------------------------------------
# serialization helpers (CSV formats shared with the CLI)


def write_snapshot_csv(state, path):
    d = state.dimension
    header = "id," + ",".join(f"x{a + 1}" for a in range(d)) + "," + ",".join(f"v{a + 1}" for a in range(d))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(state.n):
            cols = [str(i)]
            cols += [format(x, ".17g") for x in state.positions[i]]
            cols += [format(v, ".17g") for v in state.velocities[i]]
            fh.write(",".join(cols) + "\n")


def read_snapshot_csv(path, diameter, time=0.0):
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    names = data.dtype.names
    d = sum(1 for name in names if name.startswith("x"))
    pos = np.column_stack([data[f"x{a + 1}"] for a in range(d)])
    vel = np.column_stack([data[f"v{a + 1}"] for a in range(d)])
    return SystemState(pos, vel, diameter, time)


def write_event_log_csv(log, path, dimension):
    header = "time,i,j," + ",".join(f"omega{a + 1}" for a in range(dimension))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for ev in log:
            cols = [format(ev.time, ".17g"), str(ev.i), str(ev.j)]
            cols += [format(w, ".17g") for w in ev.omega]
            fh.write(",".join(cols) + "\n")
