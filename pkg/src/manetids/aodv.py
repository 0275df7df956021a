"""A compact AODV: on-demand discovery, RREP replies and RERR maintenance.

No HELLO messages, expanding ring search or local repair. Routing state for
the whole network lives in (node, destination) arrays so the flooding path
can be processed as a batch.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

import numpy as np

from .sim import kernels
from .sim.channel import transmission_delay
from .sim.engine import EventKind
from .sim.kernels import RERR_RECV, RERR_SENT, REPLY_DEST, REPLY_SPURIOUS, RREP_SENT, RREQ_SENT

if TYPE_CHECKING:
    from .sim.engine import Simulator

log = logging.getLogger(__name__)

# message sizes in bytes (RFC 3561 layouts)
RREQ_SIZE = 24
RREP_SIZE = 20
RERR_HEADER = 4
RERR_PER_DEST = 8


@dataclass(frozen=True, slots=True)
class Rreq:
    rreq_id: int
    source: int
    destination: int
    dest_seq: int           # originator's last known sequence for destination, 0 if unknown
    source_seq: int
    hop_count: int = 0
    dest_only: bool = False  # only the destination may answer

    kind = "RREQ"

    @property
    def origin(self) -> int:
        return self.source

    @property
    def size(self) -> int:
        return RREQ_SIZE

    def __post_init__(self):
        if self.hop_count < 0:
            raise ValueError("hop_count must be >= 0")


@dataclass(frozen=True, slots=True)
class Rrep:
    source: int             # originator of the discovery, final recipient
    destination: int
    dest_seq: int
    hop_count: int
    origin: int             # node that generated the reply

    kind = "RREP"

    @property
    def size(self) -> int:
        return RREP_SIZE

    def __post_init__(self):
        if self.hop_count < 0:
            raise ValueError("hop_count must be >= 0")


@dataclass(frozen=True, slots=True)
class Rerr:
    unreachable: tuple[tuple[int, int], ...]   # (destination, dest_seq)
    origin: int

    kind = "RERR"

    @property
    def size(self) -> int:
        return RERR_HEADER + RERR_PER_DEST * len(self.unreachable)

    def __post_init__(self):
        if not self.unreachable:
            raise ValueError("RERR must list at least one destination")


@dataclass(slots=True)
class Data:
    source: int
    destination: int
    payload_size: int
    path: list[int] = field(default_factory=list)

    kind = "DATA"

    @property
    def origin(self) -> int:
        return self.source

    @property
    def size(self) -> int:
        return self.payload_size


Packet = Union[Rreq, Rrep, Rerr, Data]


@dataclass(frozen=True)
class RouteEntry:
    destination: int
    next_hop: int
    hop_count: int
    dest_seq: int
    expiry: float


class RouteTables:
    """Routing tables of every node, stored as (node, destination) arrays."""

    def __init__(self, n: int):
        self.n = n
        self.next_hop = np.full((n, n), -1, dtype=np.int64)
        self.hops = np.zeros((n, n), dtype=np.int64)
        self.seq = np.zeros((n, n), dtype=np.int64)
        self.expiry = np.full((n, n), -np.inf)
        # last time the node forwarded transit DATA along the entry
        self.used = np.full((n, n), -np.inf)

    def valid(self, node: int, dest: int, now: float) -> bool:
        return self.next_hop[node, dest] >= 0 and self.expiry[node, dest] > now

    def entry(self, node: int, dest: int) -> RouteEntry | None:
        if self.next_hop[node, dest] < 0:
            return None
        return RouteEntry(dest, int(self.next_hop[node, dest]), int(self.hops[node, dest]),
                          int(self.seq[node, dest]), float(self.expiry[node, dest]))

    def table(self, node: int, now: float) -> dict[int, RouteEntry]:
        live = np.flatnonzero((self.next_hop[node] >= 0) & (self.expiry[node] > now))
        return {int(d): self.entry(node, int(d)) for d in live}

    def install(self, node: int, dest: int, next_hop: int, hop_count: int, dest_seq: int,
                now: float, lifetime: float) -> bool:
        return kernels.install_route(self.next_hop, self.hops, self.seq, self.expiry, node,
                                     dest, next_hop, hop_count, dest_seq, now, lifetime)

    def invalidate(self, node: int, dest: int, now: float, dest_seq: int | None = None) -> None:
        self.expiry[node, dest] = now
        bumped = self.seq[node, dest] + 1 if dest_seq is None else dest_seq
        self.seq[node, dest] = max(self.seq[node, dest], bumped)

    def snapshot_masks(self, now: float) -> tuple[np.ndarray, np.ndarray]:
        """Valid-destination mask and hop sums for every node at ``now``."""
        valid = (self.next_hop >= 0) & (self.expiry > now)
        return valid, np.where(valid, self.hops, 0).sum(axis=1)


def route_snapshot(table) -> tuple[frozenset[int], int]:
    """(set of valid destinations, sum of their hop counts).

    ``table`` maps destination to :class:`RouteEntry` and should only hold
    live entries, e.g. the result of :meth:`RouteTables.table`.
    """
    dests = frozenset(table)
    return dests, int(sum(e.hop_count for e in table.values()))


class Aodv:
    """Protocol logic for all nodes of one simulation."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        cfg = sim.config
        n = cfg.node_count
        self.n = n
        self.lifetime = cfg.route_lifetime
        self.routes = RouteTables(n)
        self.own_seq = np.zeros(n, dtype=np.int64)
        self.next_rreq_id = np.ones(n, dtype=np.int64)
        self.seen: dict[tuple[int, int], np.ndarray] = {}
        self.queues: dict[tuple[int, int], deque] = {}
        self.pending: dict[tuple[int, int], int] = {}
        self.blackhole = np.zeros(n, dtype=bool)
        self.adversary = None
        # per-node accounting outside the five feature counters
        self.data_forwarded = np.zeros(n, dtype=np.int64)
        self.data_delivered = np.zeros(n, dtype=np.int64)
        self.data_dropped = np.zeros(n, dtype=np.int64)
        self.rerr_propagated = np.zeros(n, dtype=np.int64)
        self.rrep_dropped = 0

    # -- counters ---------------------------------------------------------

    def bump(self, node, counter: int, by: int = 1) -> None:
        self.sim.counts[self.sim.k, node, counter] += by

    # -- route discovery --------------------------------------------------

    def originate_rreq(self, node: int, destination: int, now: float, *,
                       dest_only: bool = False, dest_seq: int | None = None) -> Rreq:
        self.own_seq[node] += 1
        rreq_id = int(self.next_rreq_id[node])
        self.next_rreq_id[node] += 1
        if dest_seq is None:
            dest_seq = int(self.routes.seq[node, destination])
        rreq = Rreq(rreq_id, node, destination, dest_seq, int(self.own_seq[node]), 0, dest_only)
        seen = np.zeros(self.n, dtype=bool)
        seen[node] = True
        self.seen[(node, rreq_id)] = seen
        self.send_rreq(np.array([node], dtype=np.int64), rreq, now)
        return rreq

    def send_rreq(self, senders: np.ndarray, rreq: Rreq, now: float) -> None:
        self.sim.counts[self.sim.k, senders, RREQ_SENT] += 1
        self.sim.broadcast_wave(senders, rreq, now)

    def request_route(self, node: int, data: Data, now: float) -> None:
        """Queue ``data`` and start a discovery unless one is already outstanding."""
        key = (node, data.destination)
        q = self.queues.get(key)
        if q is None:
            q = self.queues[key] = deque()
        if len(q) >= self.sim.config.queue_capacity:
            self.data_dropped[node] += 1
        else:
            q.append(data)
        if key not in self.pending:
            rreq = self.originate_rreq(node, data.destination, now)
            self.pending[key] = rreq.rreq_id
            self.sim.schedule_timeout(now + self.sim.config.discovery_timeout, node,
                                      data.destination, rreq.rreq_id)

    def discovery_timeout(self, node: int, dest: int, rreq_id: int, now: float) -> None:
        key = (node, dest)
        if self.pending.get(key) != rreq_id:
            return
        del self.pending[key]
        if self.routes.valid(node, dest, now):
            self.flush_queue(node, dest, now)
            return
        q = self.queues.pop(key, None)
        if q:
            self.data_dropped[node] += len(q)

    def receive_rreq_wave(self, rreq: Rreq, senders: np.ndarray, ptr: np.ndarray,
                          idx: np.ndarray, now: float) -> None:
        """Deliver a wave of RREQ copies and carry the flood on while nothing else is due."""
        seen = self.seen.get((rreq.source, rreq.rreq_id))
        if seen is None:
            # request we never saw originate (e.g. injected directly in tests)
            seen = self.seen[(rreq.source, rreq.rreq_id)] = np.zeros(self.n, dtype=bool)
        sim = self.sim
        rt = self.routes
        delay = transmission_delay(rreq.size, sim.config.bandwidth)
        (senders, ptr, idx, hop_count, now, repliers, reply_to, reply_kind, delivered,
         scheduled) = kernels.rreq_flood(
            senders, ptr, idx, seen, rreq.source, rreq.source_seq, rreq.destination,
            rreq.dest_seq, rreq.dest_only, rreq.hop_count, now, sim.flood_horizon(), delay,
            self.lifetime, sim.range2, sim.config.area_side, sim.mobility.seg, self.blackhole,
            rt.next_hop, rt.hops, rt.seq, rt.expiry, sim.counts[sim.k], sim.heard[sim.k])
        sim.now = now
        sim.stats.delivered += delivered
        sim.stats.sent += scheduled
        if idx.size:
            fwd = Rreq(rreq.rreq_id, rreq.source, rreq.destination, rreq.dest_seq,
                       rreq.source_seq, hop_count, rreq.dest_only)
            sim.push(now + delay, EventKind.PACKET_ARRIVAL, (fwd, senders, (ptr, idx)))
        for r, prev, kind in zip(repliers.tolist(), reply_to.tolist(), reply_kind.tolist()):
            if kind == REPLY_SPURIOUS:
                self.adversary.blackhole_reply(r, rreq, prev, now)
                continue
            if kind == REPLY_DEST:
                self.own_seq[r] = max(self.own_seq[r], rreq.dest_seq)
                rrep = Rrep(rreq.source, r, int(self.own_seq[r]), 0, r)
            else:
                rrep = Rrep(rreq.source, rreq.destination, int(rt.seq[r, rreq.destination]),
                            int(rt.hops[r, rreq.destination]), r)
            self.send_rrep(r, prev, rrep, now)

    def handle_rreq(self, node: int, rreq: Rreq, sender: int, now: float) -> None:
        """Deliver a single RREQ copy from ``sender`` to ``node``."""
        self.receive_rreq_wave(rreq, np.array([sender], dtype=np.int64),
                               np.array([0, 1], dtype=np.int64),
                               np.array([node], dtype=np.int64), now)

    def send_rrep(self, node: int, next_hop: int, rrep: Rrep, now: float) -> None:
        self.bump(node, RREP_SENT)
        self.sim.unicast(node, next_hop, rrep, now)

    def handle_rrep(self, node: int, rrep: Rrep, sender: int, now: float) -> None:
        rt = self.routes
        if self.adversary is not None and self.blackhole[node] and rrep.source != node:
            return
        if rrep.destination == node:
            return
        updated = rt.install(node, rrep.destination, sender, rrep.hop_count + 1, rrep.dest_seq,
                             now, self.lifetime)
        if rrep.source == node:
            if rt.valid(node, rrep.destination, now):
                self.pending.pop((node, rrep.destination), None)
                self.flush_queue(node, rrep.destination, now)
            return
        if not updated:
            return
        if not rt.valid(node, rrep.source, now):
            self.rrep_dropped += 1
            return
        fwd = Rrep(rrep.source, rrep.destination, rrep.dest_seq, rrep.hop_count + 1, rrep.origin)
        self.send_rrep(node, int(rt.next_hop[node, rrep.source]), fwd, now)
        if (node, rrep.destination) in self.queues:
            self.flush_queue(node, rrep.destination, now)

    def flush_queue(self, node: int, dest: int, now: float) -> None:
        q = self.queues.pop((node, dest), None)
        while q:
            self.forward_data(node, q.popleft(), now)

    # -- route maintenance -----------------------------------------------

    def link_break(self, node: int, next_hop: int, now: float) -> list[tuple[int, int]]:
        """Invalidate every live route of ``node`` through ``next_hop`` and report it."""
        rt = self.routes
        dests = np.flatnonzero((rt.next_hop[node] == next_hop) & (rt.expiry[node] > now))
        lost = []
        for d in dests.tolist():
            rt.invalidate(node, d, now)
            lost.append((d, int(rt.seq[node, d])))
        if lost:
            self.send_rerr(node, Rerr(tuple(lost), node), now)
        return lost

    def send_rerr(self, node: int, rerr: Rerr, now: float) -> None:
        self.bump(node, RERR_SENT)
        self.sim.broadcast(node, rerr, now)

    def handle_rerr(self, node: int, rerr: Rerr, sender: int, now: float) -> None:
        self.bump(node, RERR_RECV)
        if self.adversary is not None and self.adversary.dropping_filter(node, rerr) == "drop":
            return
        rt = self.routes
        window = self.sim.config.sampling_interval
        propagate = []
        for dest, dseq in rerr.unreachable:
            if rt.next_hop[node, dest] != sender or not rt.expiry[node, dest] > now:
                continue
            rt.invalidate(node, dest, now, dseq)
            if now - rt.used[node, dest] <= window:
                propagate.append((dest, int(rt.seq[node, dest])))
        if propagate:
            self.rerr_propagated[node] += 1
            self.send_rerr(node, Rerr(tuple(propagate), node), now)

    # -- data plane -------------------------------------------------------

    def forward_data(self, node: int, data: Data, now: float) -> None:
        dest = data.destination
        if dest == node:
            self.data_delivered[node] += 1
            return
        rt = self.routes
        if not rt.valid(node, dest, now):
            self.request_route(node, data, now)
            return
        hop = int(rt.next_hop[node, dest])
        if not self.sim.reachable(node, hop, now):
            self.data_dropped[node] += 1
            self.link_break(node, hop, now)
            return
        rt.expiry[node, dest] = max(rt.expiry[node, dest], now + self.lifetime)
        if data.source != node:
            rt.used[node, dest] = now
            self.data_forwarded[node] += 1
        self.sim.unicast(node, hop, data, now, checked=True)

    def handle_data(self, node: int, data: Data, sender: int, now: float) -> None:
        data.path.append(node)
        if (self.adversary is not None and self.blackhole[node]
                and data.destination != node):
            self.data_dropped[node] += 1
            return
        self.forward_data(node, data, now)
