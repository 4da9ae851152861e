from burrow.sim.config import Preset, SimConfig
from burrow.sim.loops import LabeledLoop, inject_outlier_loops, read_loops, write_loops
from burrow.sim.robot import RobotRun, simulate_robot
from burrow.sim.scenario import Scenario, build_scenario, write_scenario
from burrow.sim.world import World, generate_world

__all__ = [
    "LabeledLoop",
    "Preset",
    "RobotRun",
    "Scenario",
    "SimConfig",
    "World",
    "build_scenario",
    "generate_world",
    "inject_outlier_loops",
    "read_loops",
    "simulate_robot",
    "write_loops",
    "write_scenario",
]
