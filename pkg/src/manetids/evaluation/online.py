"""Classify every legitimate node at each interval boundary while the simulation runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..config import SimConfig
from ..features import FEATURE_NAMES, feature_block
from ..sim.engine import Simulator
from .metrics import SchemaMismatch

log = logging.getLogger(__name__)


class Scope(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class AlarmRecord:
    time: float
    node: int
    scope: Scope
    label: str


def check_schema(config: SimConfig, model) -> None:
    if model.dim != len(FEATURE_NAMES):
        raise SchemaMismatch(f"model expects {model.dim} features, rows have {len(FEATURE_NAMES)}")
    if model.sampling_interval is not None and model.sampling_interval != config.sampling_interval:
        raise SchemaMismatch(f"model sampling interval {model.sampling_interval:g} s vs "
                             f"scenario {config.sampling_interval:g} s")


def run_online_detection(config: SimConfig, model) -> list[AlarmRecord]:
    """Monitoring only: alarms are recorded, never sent, so the run itself is unchanged."""
    check_schema(config, model)
    alarms: list[AlarmRecord] = []
    legit = None

    def on_boundary(sim: Simulator, k: int, t: float) -> None:
        nonlocal legit
        if k < 0:
            return
        if legit is None:
            bad = set(sim.malicious_ids)
            legit = np.array([i for i in range(sim.n) if i not in bad], dtype=np.int64)
        X, _ = feature_block(sim.counts[k:k + 1], sim.heard[k:k + 1],
                             sim.route_valid[k:k + 2], sim.hop_sums[k:k + 2], legit)
        pred = model.predict(X)
        for node, p in zip(legit.tolist(), pred.tolist()):
            if p != 0:
                label = model.task.classes[p]
                alarms.append(AlarmRecord(t, node, Scope.LOCAL, label))
                alarms.append(AlarmRecord(t, node, Scope.GLOBAL, label))

    sim = Simulator(config, on_boundary=on_boundary)
    sim.run()
    log.info("%s: %d alarms", config.scenario_id, len(alarms))
    return alarms
