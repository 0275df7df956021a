"""Idealised radio: unit-disk reachability and size/bandwidth delay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def in_range(a, b, radio_range: float) -> bool:
    """True iff the Euclidean distance between ``a`` and ``b`` is at most ``radio_range``."""
    # squared form so scalar and vectorised checks agree bit-for-bit
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return dx * dx + dy * dy <= radio_range * radio_range


def transmission_delay(size: float, bandwidth: float) -> float:
    if size <= 0:
        raise ValueError(f"packet size must be positive, got {size}")
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    return size * 8.0 / bandwidth


def neighbours_of(positions: np.ndarray, sender: int, radio_range: float) -> np.ndarray:
    """Ids within range of ``sender`` (sender excluded), ascending."""
    d = positions - positions[sender]
    mask = np.einsum("ij,ij->i", d, d) <= radio_range * radio_range
    mask[sender] = False
    return np.flatnonzero(mask)


@dataclass
class ChannelStats:
    """Per-receiver delivery accounting.

    Every scheduled reception counts once in ``sent``; it later ends up
    ``delivered``, ``dropped`` (unicast to a receiver out of range at send
    time) or still ``in_flight`` when the run stops.
    """

    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    in_flight: int = 0

    def conserved(self) -> bool:
        return self.sent == self.delivered + self.dropped + self.in_flight
