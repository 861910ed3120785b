"""Fair heat-deficit allocation for district heating networks."""

from .control import (
    ControlOutput,
    desired_load,
    feedforward,
    tune_a0,
    tune_a1,
    tuned,
    well_tuned_residual,
)
from .coordination import (
    AllocationRound,
    Strategy,
    allocate,
    compute_deficit,
    compute_weights,
    coordination_round,
    predicted_deviation,
)
from .engine import SimulationResult, run
from .metrics import compare, consumption, discomfort
from .scenario import Scenario, load_scenario
from .thermal import (
    SteadyState,
    UnitInputs,
    UnitParams,
    UnitState,
    closed_loop_system,
    derivatives,
    heat_flow_ext,
    heat_flow_hs,
    steady_state,
    step,
)
from .weather import WeatherSeries, load_weather_csv, sample_weather, synth_weather

__version__ = "0.1.0"
