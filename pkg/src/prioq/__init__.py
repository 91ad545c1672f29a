"""Priority-list queueing models: simulation, stationary laws, waiting times, records."""

from .analytic import (BarabasiStationaryDensity, BarabasiWaitingTime, GeneralWaitingTime,
                       barabasi_stationary_cdf, barabasi_stationary_pdf, barabasi_tau_pmf,
                       expected_tau, stationary_residual)
from .estimators import QueueSimulator, StationaryDensityEstimator
from .exceptions import (ContractError, DegenerateRegimeError, DivergenceError, DomainError,
                         NonConvergenceWarning, PartialResultWarning,
                         UnsupportedConfigurationError)
from .model import GridDensity, PriorityDistribution, SelectionProtocol, make_model, q, q1
from .simulator import SimulationConfig, SimulationResult, run, run_replicas
from .solver import assemble, hs_norm, scan_region, solve, solve_auto, solve_direct, tau_bounds

__version__ = "0.1.0"
