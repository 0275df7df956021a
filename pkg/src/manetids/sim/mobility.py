"""Random waypoint mobility.

Each node alternates between a pause at its current position and a straight
trip to a uniformly drawn waypoint at a uniformly drawn speed. Positions are
evaluated on demand from the current segment rather than on a fixed tick.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .kernels import positions_at


class Phase(enum.Enum):
    PAUSED = "paused"
    MOVING = "moving"


@dataclass
class NodeKinematics:
    position: tuple[float, float]
    waypoint: tuple[float, float]
    speed: float
    phase: Phase
    since: float = 0.0          # time of the last update
    paused_until: float = 0.0   # only meaningful while PAUSED


def waypoint_position(k: NodeKinematics, now: float) -> tuple[float, float]:
    """Position of a node at ``now`` without advancing its state.

    While paused the node stays put. While moving it travels in a straight
    line toward the waypoint and stops there once reached.
    """
    if now < k.since:
        raise ValueError(f"query time {now} precedes last update {k.since}")
    x0, y0 = k.position
    if k.phase is Phase.PAUSED or k.speed <= 0.0:
        return (x0, y0)
    dx = k.waypoint[0] - x0
    dy = k.waypoint[1] - y0
    dist = math.hypot(dx, dy)
    travelled = k.speed * (now - k.since)
    if travelled >= dist:
        return k.waypoint
    frac = travelled / dist
    return (x0 + dx * frac, y0 + dy * frac)


class RandomWaypoint:
    """Vectorised random-waypoint state for all nodes of a run.

    Every node owns an independent generator so its trajectory depends only
    on the run seed and its id, never on the order of position queries.
    """

    def __init__(self, n: int, area_side: float, speed_min: float, speed_max: float,
                 pause_time: float, seed_seq: np.random.SeedSequence, start=None):
        self.n = n
        self.area_side = float(area_side)
        self.speed_min = float(speed_min)
        self.speed_max = float(speed_max)
        self.pause_time = float(pause_time)
        self.rngs = [np.random.Generator(np.random.PCG64(s)) for s in seed_seq.spawn(n)]
        drawn = np.array([r.uniform(0.0, self.area_side, size=2) for r in self.rngs])
        if start is None:
            start = drawn
        else:
            start = np.asarray(start, dtype=float).reshape(n, 2)
            if start.min() < 0 or start.max() > self.area_side:
                raise ValueError("initial positions must lie inside the area")
        self.origin = start.copy()          # segment start position
        self.target = start.copy()          # segment end position
        self.t0 = np.zeros(n)               # segment start time
        self.t1 = np.full(n, self.pause_time)  # time the current phase ends
        self.moving = np.zeros(n, dtype=bool)
        self.velocity = np.zeros((n, 2))
        self.distance = np.zeros(n)         # distance covered by finished segments
        # plain-float mirror of the segment state for cheap scalar queries
        self._seg = [(float(x), float(y), 0.0, 0.0, 0.0, self.pause_time) for x, y in start]
        self.seg = np.array(self._seg, dtype=float).reshape(n, 6)

    def positions(self, now: float) -> np.ndarray:
        return positions_at(self.seg, now, self.area_side)

    def position(self, i: int, now: float) -> tuple[float, float]:
        x, y, vx, vy, t0, t1 = self._seg[i]
        if vx == 0.0 and vy == 0.0:
            return (x, y)
        dt = (now if now < t1 else t1) - t0
        x += vx * dt
        y += vy * dt
        side = self.area_side
        return (min(max(x, 0.0), side), min(max(y, 0.0), side))

    def kinematics(self, i: int) -> NodeKinematics:
        if self.moving[i]:
            speed = float(np.hypot(*self.velocity[i]))
            return NodeKinematics(tuple(self.origin[i]), tuple(self.target[i]), speed,
                                  Phase.MOVING, since=float(self.t0[i]))
        return NodeKinematics(tuple(self.origin[i]), tuple(self.origin[i]), 0.0, Phase.PAUSED,
                              since=float(self.t0[i]), paused_until=float(self.t1[i]))

    def advance(self, i: int) -> float:
        """Finish node ``i``'s current phase and start the next one.

        Returns the time at which the new phase ends (``inf`` for a trip at
        zero speed, which never completes).
        """
        now = self.t1[i]
        if self.moving[i]:
            self.distance[i] += float(np.hypot(*(self.target[i] - self.origin[i])))
            self.origin[i] = self.target[i]
            self.velocity[i] = 0.0
            self.moving[i] = False
            self.t0[i] = now
            self.t1[i] = now + self.pause_time
            self._sync(i)
            return self.t1[i]
        rng = self.rngs[i]
        self.target[i] = rng.uniform(0.0, self.area_side, size=2)
        speed = rng.uniform(self.speed_min, self.speed_max)
        delta = self.target[i] - self.origin[i]
        dist = float(np.hypot(*delta))
        self.t0[i] = now
        self.moving[i] = True
        if dist == 0.0:
            self.velocity[i] = 0.0
            self.t1[i] = now
        elif speed <= 0.0:
            self.velocity[i] = 0.0
            self.t1[i] = math.inf
        else:
            self.velocity[i] = delta / dist * speed
            self.t1[i] = now + dist / speed
        self._sync(i)
        return self.t1[i]

    def _sync(self, i: int) -> None:
        o, v = self.origin[i], self.velocity[i]
        self._seg[i] = (float(o[0]), float(o[1]), float(v[0]), float(v[1]),
                        float(self.t0[i]), float(self.t1[i]))
        self.seg[i] = self._seg[i]

    def travelled(self, now: float) -> np.ndarray:
        """Total path length per node up to ``now``."""
        partial = np.where(self.moving, np.hypot(*(self.positions(now) - self.origin).T), 0.0)
        return self.distance + partial
