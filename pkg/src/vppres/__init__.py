"""Minimal frequency-regulation reserve sizing and allocation for VPPs."""

from ._kernels import BACKEND
from .alloc import (AllocationPlan, IbrParams, InjectionBasis, MarketParams,
                    allocate_even, allocate_prop, injection_basis, punishment,
                    solve_allocation, solve_allocation_robust)
from .errors import (ConfigError, DivergenceError, GridMismatchError,
                     InfeasibleError, OverdampedError, SolverError, VppresError)
from .freqcore import (DeadbandTimes, Disturbance, EnergyIntegral, FreqMetrics,
                       FreqTrajectory, GridParams, SafetyLimits, SecondOrderChar,
                       VppGain, cumulative_energy, deadband_times, freq_response,
                       metrics, pu_seconds_to_mwh, qss_deviation, second_order_char,
                       vpp_power, vpp_power_steady)
from .reserve import (FeasibleRegion, LineFlowResult, PtdfLine, PtdfNetwork,
                      ReserveDecision, feasible_region, line_flow_check,
                      min_reserve, reserve_peak_baseline)
from .scenario import (RunReport, ScenarioConfig, bundled_config_path, emit,
                       load_config, run_case)
from .statespace import (DeviceParams, SimResult, StabilityFit, StateSpaceModel,
                         assemble, dominant_pole, dump_matrix, eigenvalues,
                         equilibrium, fit_stability_surface, simulate)

__version__ = "0.1.0"
