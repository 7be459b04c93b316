"""Battery charging-optimization toolkit.

Electrochemical cell simulator with surface-film aging, a goal-conditioned
charging environment, a from-scratch soft actor-critic trainer, and CC /
CC-CV baseline controllers for protocol comparison.
"""

__version__ = "0.1.0"

from .errors import (ChargeOptError, CheckpointError, ConfigError,
                     InfeasibleRateError, NoRootError, ParameterError,
                     SimulationBlowupError, VoltageDomainError)
from .params import (BatteryParams, FunctionTable, arrhenius_correct,
                     default_params, i_1crate, i_1crate_sides, load_params,
                     save_params, soc_window, stoich_from_ocv)
from .battery import BatteryState, Simulator, StepOutput
from .env import ChargeEnv, EnvConfig, Observation, observation_dim
from .sac import ReplayBuffer, SacAgent, SacConfig, SacTrainer
from .baselines import (ProfileMetrics, cc_controller, cccv_controller,
                        evaluate_profile)

__all__ = [
    "BatteryParams", "BatteryState", "ChargeEnv", "ChargeOptError",
    "CheckpointError", "ConfigError", "EnvConfig", "FunctionTable",
    "InfeasibleRateError", "NoRootError", "Observation", "ParameterError",
    "ProfileMetrics", "ReplayBuffer", "SacAgent", "SacConfig", "SacTrainer",
    "Simulator", "SimulationBlowupError", "StepOutput", "VoltageDomainError",
    "arrhenius_correct", "cc_controller", "cccv_controller", "default_params",
    "evaluate_profile", "i_1crate", "i_1crate_sides", "load_params",
    "observation_dim", "save_params", "soc_window", "stoich_from_ocv",
    "__version__",
]
