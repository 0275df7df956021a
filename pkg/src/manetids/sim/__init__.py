from .engine import CounterLog, Simulator, run_simulation
from .mobility import NodeKinematics, Phase, waypoint_position
from .channel import in_range, transmission_delay

__all__ = [
    "CounterLog", "Simulator", "run_simulation",
    "NodeKinematics", "Phase", "waypoint_position",
    "in_range", "transmission_delay",
]
