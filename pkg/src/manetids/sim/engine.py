"""Discrete-event kernel.

Events are ordered by (time, sequence); the sequence number is a global
counter assigned at scheduling time, so ties resolve in scheduling order.
Interval bookkeeping is lazy: the routing snapshot for boundary ``k * dt``
is taken just before the first event later than that instant, which makes
every event at exactly ``k * dt`` count toward the interval it closes.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ..config import AttackKind, SimConfig
from . import kernels
from .channel import ChannelStats, in_range, neighbours_of, transmission_delay
from .mobility import RandomWaypoint

log = logging.getLogger(__name__)

COUNTER_NAMES = ("rreq_sent", "rreq_recv", "rrep_sent", "rerr_sent", "rerr_recv")


class EventKind(enum.IntEnum):
    PACKET_ARRIVAL = 0
    CBR_TICK = 1
    ATTACK_TICK = 2
    MOBILITY_UPDATE = 3
    INTERVAL_BOUNDARY = 4
    ROUTE_TIMEOUT = 5


class Event(NamedTuple):
    time: float
    sequence: int
    kind: EventKind
    data: tuple


@dataclass
class CounterLog:
    """Everything the data collector needs from one run.

    ``counts[k, node]`` holds the five packet counters of interval ``k``;
    ``heard[k, node]`` is a mask of ids heard during the interval;
    ``route_valid[b]`` / ``hop_sums[b]`` are routing snapshots at boundary
    ``b * dt`` for ``b = 0 .. interval_count``.
    """

    config: SimConfig
    malicious_ids: tuple[int, ...]
    counts: np.ndarray
    heard: np.ndarray
    route_valid: np.ndarray
    hop_sums: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def interval_count(self) -> int:
        return self.counts.shape[0]

    @property
    def legitimate_ids(self) -> list[int]:
        bad = set(self.malicious_ids)
        return [i for i in range(self.config.node_count) if i not in bad]

    def counter(self, name: str) -> np.ndarray:
        return self.counts[:, :, COUNTER_NAMES.index(name)]

    def heard_from(self, node: int, interval: int) -> set[int]:
        return set(np.flatnonzero(self.heard[interval, node]).tolist())

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.malicious_ids).encode())
        for arr in (self.counts, self.heard, self.route_valid, self.hop_sums):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


class Simulator:
    def __init__(self, config: SimConfig,
                 on_boundary: Callable[[Simulator, int, float], None] | None = None,
                 *, positions=None, traffic: bool = True):
        """``positions`` overrides the random initial placement and ``traffic=False``
        disables CBR flows; both exist for hand-built test topologies."""
        from ..adversary import Adversary
        from ..aodv import Aodv

        config.validate()
        self.config = config
        n = config.node_count
        self.n = n
        self.now = 0.0
        self.heap: list = []
        self._seq = 0
        self.range2 = config.radio_range ** 2
        self.stats = ChannelStats()
        self.on_boundary = on_boundary
        self.events_processed = 0
        self.last_event_time = 0.0
        self.time_went_backwards = False

        root = np.random.SeedSequence(config.rng_seed)
        mob_ss, traffic_ss, attack_ss = root.spawn(3)
        self.mobility = RandomWaypoint(n, config.area_side, config.speed_min, config.speed_max,
                                       config.pause_time, mob_ss, start=positions)
        self.traffic_rng = np.random.Generator(np.random.PCG64(traffic_ss))

        intervals = self.intervals = config.interval_count
        self.k = 0
        self.counts = np.zeros((intervals, n, 5), dtype=np.int64)
        self.heard = np.zeros((intervals, n, n), dtype=bool)
        self.route_valid = np.zeros((intervals + 1, n, n), dtype=bool)
        self.hop_sums = np.zeros((intervals + 1, n), dtype=np.int64)
        self.next_boundary = 1

        self.aodv = Aodv(self)
        self.adversary = None
        self.malicious_ids: tuple[int, ...] = ()
        if config.attack_kind is not AttackKind.NONE:
            self.adversary = Adversary(self, np.random.Generator(np.random.PCG64(attack_ss)))
            self.malicious_ids = self.adversary.malicious_ids
            self.aodv.adversary = self.adversary

        for i in range(n):
            self.push(float(self.mobility.t1[i]), EventKind.MOBILITY_UPDATE, (i,))
        self.flows = np.full(n, -1)
        if traffic:
            self._setup_cbr()
        if self.adversary is not None:
            self.adversary.start()

    # -- scheduling -------------------------------------------------------

    def push(self, time: float, kind: EventKind, data: tuple) -> None:
        self._seq += 1
        heapq.heappush(self.heap, Event(time, self._seq, kind, data))

    def schedule_timeout(self, time: float, node: int, dest: int, rreq_id: int) -> None:
        self.push(time, EventKind.ROUTE_TIMEOUT, (node, dest, rreq_id))

    # -- channel ----------------------------------------------------------

    def positions(self, now: float) -> np.ndarray:
        return self.mobility.positions(now)

    def reachable(self, a: int, b: int, now: float) -> bool:
        mob = self.mobility
        return in_range(mob.position(a, now), mob.position(b, now), self.config.radio_range)

    def broadcast(self, sender: int, packet, now: float) -> np.ndarray:
        receivers = neighbours_of(self.positions(now), sender, self.config.radio_range)
        if receivers.size:
            self.stats.sent += receivers.size
            t = now + transmission_delay(packet.size, self.config.bandwidth)
            self.push(t, EventKind.PACKET_ARRIVAL, (packet, sender, receivers))
        return receivers

    def broadcast_wave(self, senders: np.ndarray, packet, now: float) -> None:
        """Broadcast of the same packet by several nodes at the same instant."""
        ptr, idx = kernels.receivers_csr(self.positions(now), senders, self.range2)
        if idx.size:
            self.stats.sent += idx.size
            t = now + transmission_delay(packet.size, self.config.bandwidth)
            self.push(t, EventKind.PACKET_ARRIVAL, (packet, senders, (ptr, idx)))

    def unicast(self, sender: int, receiver: int, packet, now: float,
                checked: bool = False) -> bool:
        """Send to one neighbour; ``checked`` skips a range test the caller already did."""
        self.stats.sent += 1
        if not checked and not self.reachable(sender, receiver, now):
            self.stats.dropped += 1
            return False
        t = now + transmission_delay(packet.size, self.config.bandwidth)
        self.push(t, EventKind.PACKET_ARRIVAL, (packet, sender, receiver))
        return True

    # -- traffic ----------------------------------------------------------

    def _setup_cbr(self) -> None:
        cfg = self.config
        n = self.n
        if n < 2:
            return
        rng = self.traffic_rng
        offset = rng.integers(1, n, size=n)
        self.flows = (np.arange(n) + offset) % n
        period = 1.0 / cfg.cbr_rate
        phase = rng.uniform(0.0, period, size=n)
        ticks = int(np.floor(cfg.duration * cfg.cbr_rate)) + 1
        self.cbr_sizes = rng.integers(cfg.cbr_size_min, cfg.cbr_size_max + 1, size=(n, ticks))
        self.cbr_phase = phase
        for i in range(n):
            self.push(float(phase[i]), EventKind.CBR_TICK, (i, 0))

    def _cbr_tick(self, node: int, j: int, now: float) -> None:
        from ..aodv import Data

        size = int(self.cbr_sizes[node, j])
        self.aodv.forward_data(node, Data(node, int(self.flows[node]), size, [node]), now)
        j += 1
        if j < self.cbr_sizes.shape[1]:
            self.push(float(self.cbr_phase[node]) + j / self.config.cbr_rate, EventKind.CBR_TICK,
                      (node, j))

    # -- main loop --------------------------------------------------------

    def _close_intervals(self, upto: float) -> None:
        dt = self.config.sampling_interval
        last = self.intervals
        while self.next_boundary <= last and self.next_boundary * dt < upto:
            b = self.next_boundary
            t = b * dt
            valid, hop_sums = self.aodv.routes.snapshot_masks(t)
            self.route_valid[b] = valid
            self.hop_sums[b] = hop_sums
            self.next_boundary += 1
            if b < last:
                self.k = b
            if self.on_boundary is not None:
                self.on_boundary(self, b - 1, t)

    def flood_horizon(self) -> float:
        """Latest instant (exclusive) a flood may advance to without reordering events."""
        limit = min(self.next_boundary * self.config.sampling_interval, self.config.duration)
        horizon = float(np.nextafter(limit, np.inf))
        if self.heap and self.heap[0].time < horizon:
            horizon = self.heap[0].time
        return horizon

    def _dispatch_arrival(self, data: tuple, now: float) -> None:
        packet, sender, receivers = data
        aodv = self.aodv
        kind = packet.kind
        if kind == "RREQ":
            ptr, idx = receivers
            aodv.receive_rreq_wave(packet, sender, ptr, idx, now)
            return
        heard = self.heard[self.k]
        if kind == "RERR":
            self.stats.delivered += receivers.size
            heard[receivers, sender] = True
            for r in receivers.tolist():
                aodv.handle_rerr(r, packet, sender, now)
            return
        self.stats.delivered += 1
        heard[receivers, sender] = True
        if kind == "DATA":
            aodv.handle_data(receivers, packet, sender, now)
        else:
            aodv.handle_rrep(receivers, packet, sender, now)

    def step(self) -> Event:
        ev = heapq.heappop(self.heap)
        now = ev.time
        if now < self.last_event_time:
            self.time_went_backwards = True
        self.last_event_time = now
        self._close_intervals(now)
        self.now = now
        self.events_processed += 1
        kind = ev.kind
        if kind == EventKind.PACKET_ARRIVAL:
            self._dispatch_arrival(ev.data, now)
        elif kind == EventKind.CBR_TICK:
            self._cbr_tick(ev.data[0], ev.data[1], now)
        elif kind == EventKind.MOBILITY_UPDATE:
            i = ev.data[0]
            t_next = self.mobility.advance(i)
            if t_next <= self.config.duration:
                self.push(float(t_next), EventKind.MOBILITY_UPDATE, (i,))
        elif kind == EventKind.ATTACK_TICK:
            self.adversary.tick(ev.data, now)
        elif kind == EventKind.ROUTE_TIMEOUT:
            self.aodv.discovery_timeout(*ev.data, now)
        return ev

    def run(self) -> CounterLog:
        duration = self.config.duration
        while self.heap and self.heap[0].time <= duration:
            self.step()
        self._close_intervals(np.inf)
        self.now = duration
        for ev in self.heap:
            if ev.kind == EventKind.PACKET_ARRIVAL:
                r = ev.data[2]
                self.stats.in_flight += r[1].size if isinstance(r, tuple) else np.size(r)
        return self.counter_log()

    def counter_log(self) -> CounterLog:
        aodv = self.aodv
        stats = {
            "channel_sent": self.stats.sent,
            "channel_delivered": self.stats.delivered,
            "channel_dropped": self.stats.dropped,
            "channel_in_flight": self.stats.in_flight,
            "events": self.events_processed,
            "data_forwarded": aodv.data_forwarded.copy(),
            "data_delivered": aodv.data_delivered.copy(),
            "data_dropped": aodv.data_dropped.copy(),
            "rerr_propagated": aodv.rerr_propagated.copy(),
            "injected": (self.adversary.injected.copy() if self.adversary is not None
                         else np.zeros(self.n, dtype=np.int64)),
            "distance": self.mobility.travelled(self.config.duration),
        }
        return CounterLog(self.config, self.malicious_ids, self.counts, self.heard,
                          self.route_valid, self.hop_sums, stats)


def run_simulation(config: SimConfig, on_boundary=None) -> CounterLog:
    """Run one scenario end to end and return its counter log."""
    return Simulator(config, on_boundary=on_boundary).run()


def run_until(sim: Simulator, t: float) -> None:
    """Process every queued event up to and including time ``t``."""
    while sim.heap and sim.heap[0].time <= t:
        sim.step()
    sim.now = max(sim.now, t)
