"""Malicious node behaviours layered over the AODV handlers.

All malicious nodes of a run share one attack kind. Flooders and forgers
inject on a fixed 0.1 s clock starting at t = 0.1 s; droppers and black
holes only change how received packets are handled.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from .aodv import Rerr, Rrep, Rreq
from .config import AttackKind
from .sim.engine import EventKind
from .sim.kernels import RERR_SENT, RREP_SENT, RREQ_SENT

if TYPE_CHECKING:
    from .sim.engine import Simulator

log = logging.getLogger(__name__)

DROP = "drop"
PASS = "pass"


class Adversary:
    def __init__(self, sim: Simulator, rng: np.random.Generator):
        cfg = sim.config
        self.sim = sim
        self.kind = cfg.attack_kind
        self.rng = rng
        n = cfg.node_count
        ids = rng.choice(n, size=cfg.malicious_count, replace=False)
        self.malicious_ids: tuple[int, ...] = tuple(sorted(int(i) for i in ids))
        self.is_malicious = np.zeros(n, dtype=bool)
        self.is_malicious[list(self.malicious_ids)] = True
        self.injected = np.zeros(n, dtype=np.int64)
        self.victims: dict[int, int] = {}
        self.ticks_per_second = 1.0 / cfg.attack_period
        legit = np.flatnonzero(~self.is_malicious)
        if self.kind is AttackKind.FORGING and legit.size:
            for m in self.malicious_ids:
                self.victims[m] = int(legit[rng.integers(legit.size)])
        if self.kind is AttackKind.BLACKHOLE:
            sim.aodv.blackhole[list(self.malicious_ids)] = True

    def start(self) -> None:
        if self.kind not in (AttackKind.FLOODING, AttackKind.FORGING):
            return
        first = 1 / self.ticks_per_second
        if first > self.sim.config.duration:
            return
        for m in self.malicious_ids:
            self.sim.push(first, EventKind.ATTACK_TICK, (m, 1))

    def tick(self, data: tuple[int, int], now: float) -> None:
        node, j = data
        if self.kind is AttackKind.FLOODING:
            self.flooding_tick(node, now)
        else:
            self.forging_tick(node, self.victims[node], now)
        # tick times are j / rate rather than accumulated sums so they land on exact decimals
        nxt = (j + 1) / self.ticks_per_second
        if nxt <= self.sim.config.duration:
            self.sim.push(nxt, EventKind.ATTACK_TICK, (node, j + 1))

    def flooding_tick(self, node: int, now: float) -> Rreq:
        """Broadcast one forged route request for a random destination.

        The request is marked destination-only so no intermediate node can
        cut the flood short with a cached route.
        """
        aodv = self.sim.aodv
        n = self.sim.n
        dest = int(self.rng.integers(n - 1))
        if dest >= node:
            dest += 1
        self.injected[node] += 1
        return aodv.originate_rreq(node, dest, now, dest_only=True)

    def forging_tick(self, node: int, victim: int, now: float) -> Rerr:
        """Broadcast a fabricated RERR declaring ``victim`` unreachable."""
        aodv = self.sim.aodv
        seq = int(aodv.routes.seq[node, victim]) + 1
        rerr = Rerr(((victim, seq),), node)
        self.injected[node] += 1
        aodv.send_rerr(node, rerr, now)
        return rerr

    def dropping_filter(self, node: int, packet) -> str:
        if self.kind is AttackKind.DROPPING and self.is_malicious[node] and packet.kind == "RERR":
            return DROP
        return PASS

    def blackhole_reply(self, node: int, rreq: Rreq, prev_hop: int, now: float) -> Rrep:
        """Answer a route request at once with a fake one-hop route."""
        rrep = Rrep(rreq.source, rreq.destination, rreq.dest_seq + 1, 1, node)
        self.sim.aodv.send_rrep(node, prev_hop, rrep, now)
        return rrep

    def blackhole_handle(self, node: int, packet, sender: int, now: float) -> None:
        """Black-hole reception of any packet type."""
        aodv = self.sim.aodv
        if packet.kind == "RREQ":
            aodv.handle_rreq(node, packet, sender, now)
        elif packet.kind == "RREP":
            aodv.handle_rrep(node, packet, sender, now)
        elif packet.kind == "DATA":
            aodv.handle_data(node, packet, sender, now)
        else:
            aodv.handle_rerr(node, packet, sender, now)
