"""Service layer exports."""

from .analytic_engine import CoverageReport, coverage, mixed_coverage
from .monte_carlo import SimEstimate, SimSettings, estimate
from .network_model import NetworkConfig, TierParams, effective_network
from .results_writer import SweepTableWriter
