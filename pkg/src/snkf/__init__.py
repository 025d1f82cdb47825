"""Kalman filtering over amplify-and-forward wireless sensor networks."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Amplification,
    ChannelRealization,
    InstabilityError,
    NoiseModel,
    Scenario,
    ScenarioError,
    Sensor,
    SensorSet,
    SystemModel,
    load_scenario,
    stationary_state_variance,
    transmit_power,
    validate_scenario,
)
from .kalman import (  # noqa: E402
    FilterTrace,
    compare_schemes,
    mac_snr,
    orth_snr,
    riccati_step_mac,
    riccati_step_orth,
    run_filter,
    steady_state_from_snr,
)
from .alloc import AllocationProblem, AllocationSolution, InfeasibleError, solve  # noqa: E402
