"""minicar: deterministic 2D simulator and control stack for a small
self-driving car — bicycle-model kinematics, three lane-keeping
controllers, lane-geometry post-processing, monocular ranging, occupancy
mapping, maneuver state machines and a scenario CLI.
"""

from .control import (
    PathError,
    PidGains,
    PurePursuitGains,
    SpeedPolicy,
    StanleyGains,
    pid_steer,
    pure_pursuit_steer,
    speed_command,
    stanley_steer,
)
from .kinematics import (
    ControlInput,
    GyroSample,
    VehicleParams,
    VehicleState,
    clamp_input,
    localize,
    normalize_angle,
    step,
    turning_radius,
)
from .scenario import ConfigError, Scenario, load_scenario
from .simulate import RunLog, StepRecord, simulate

__version__ = "0.1.0"

__all__ = [
    "ControlInput",
    "ConfigError",
    "GyroSample",
    "PathError",
    "PidGains",
    "PurePursuitGains",
    "RunLog",
    "Scenario",
    "SpeedPolicy",
    "StanleyGains",
    "StepRecord",
    "VehicleParams",
    "VehicleState",
    "clamp_input",
    "load_scenario",
    "localize",
    "normalize_angle",
    "pid_steer",
    "pure_pursuit_steer",
    "simulate",
    "speed_command",
    "stanley_steer",
    "step",
    "turning_radius",
    "__version__",
]
