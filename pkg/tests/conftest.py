import numpy as np
import pytest

from manetids.config import SimConfig
from manetids.sim.engine import Simulator


def static_sim(positions, *, radio_range=250.0, duration=10.0, dt=5.0, traffic=False, **kw):
    """Simulator over a fixed topology that never moves."""
    positions = np.asarray(positions, dtype=float)
    side = max(850.0, float(positions.max()) + 1.0)
    cfg = SimConfig(area_side=side, node_count=len(positions), radio_range=radio_range,
                    pause_time=duration, duration=duration, sampling_interval=dt, **kw)
    return Simulator(cfg, positions=positions, traffic=traffic)


@pytest.fixture
def line3():
    # 0 -- 1 -- 2, ends 400 m apart so only neighbours hear each other
    return static_sim([(0, 0), (200, 0), (400, 0)])


@pytest.fixture
def line4():
    return static_sim([(0, 0), (200, 0), (400, 0), (600, 0)])


# criterion id -> (passed, detail), filled by test_acceptance and echoed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0].rstrip("abcd")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
