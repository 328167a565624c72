"""Half-hourly multi-region renewable grid dispatch and capacity optimisation."""

from .costs import (
    AnnualCosts,
    AnnualEnergy,
    CostBreakdown,
    capital_recovery_factor,
    hydro_bio_purchase_cost,
    lcoe_breakdown,
    technology_lcoe,
)
from .demand import DemandSpec, FleetClass, HeatingSpec, compose_demand
from .dispatch import (
    DispatchResult,
    Portfolio,
    StorageState,
    reliability,
    simulate,
    step_interval,
    storage_update,
)
from .network import balance_flows, line_loss_rate
from .optimizer import DEConfig, de_optimize, evaluate, optimize_portfolio, sensitivity_sweep
from .report import RunSummary, read_summary, summarize, write_dispatch_csv, write_summary
from .scenario import Scenario, load_scenario, load_scenario_traces, parse_scenario, validate_scenario
from .traces import TimeSeries, TraceSet, interval_count, synth_trace

__version__ = "0.1.0"

__all__ = [
    "AnnualCosts", "AnnualEnergy", "CostBreakdown", "capital_recovery_factor", "hydro_bio_purchase_cost",
    "lcoe_breakdown", "technology_lcoe", "DemandSpec", "FleetClass", "HeatingSpec", "compose_demand",
    "DispatchResult", "Portfolio", "StorageState", "reliability", "simulate", "step_interval", "storage_update",
    "balance_flows", "line_loss_rate", "DEConfig", "de_optimize", "evaluate", "optimize_portfolio",
    "sensitivity_sweep", "RunSummary", "read_summary", "summarize", "write_dispatch_csv", "write_summary",
    "Scenario", "load_scenario", "load_scenario_traces", "parse_scenario", "validate_scenario",
    "TimeSeries", "TraceSet", "interval_count", "synth_trace",
]
