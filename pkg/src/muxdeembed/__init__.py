"""Multiplexed de-embedding of a DUT through a programmable over-the-air fixture."""

__version__ = "0.1.0"

from .campaign import MeasurementCampaign, Scenario, make_scenario, simulate_campaign
from .diagnostics import effective_rank, jacobian_rank_at, mse, sweep
from .estimator import (
    EstimatorSettings,
    analytic_jacobian,
    estimate,
    fd_jacobian,
    loss,
    sym,
)
from .network import (
    PFRealization,
    PortPartition,
    ScatteringMatrix,
    compose_pf,
    forward_model,
    measurable_s,
    random_passive_reciprocal,
)
from .tln import (
    Stage,
    Termination,
    TLNConfiguration,
    TLNHardwareModel,
    count_step1_configs,
    count_step2_configs,
    enumerate_configs,
    step1_series,
    step2_series,
    synthesize_tln,
)
