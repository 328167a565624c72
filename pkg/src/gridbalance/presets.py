"""Shipped synthetic datasets and reference demand configurations.

The desk dataset is three regions in a line (NTH - CTR - STH) over one
calendar year. Wind in NTH follows a shared weather driver and wind in STH
follows its negation, so the two ends are anti-correlated and a network
can smooth them.
"""

from __future__ import annotations

from datetime import datetime
from pathlib import Path

import numpy as np

from .demand import DemandSpec, FleetClass, HeatingSpec
from .traces import _ar1, synth_trace, write_trace_csv

DATA_DIR = Path(__file__).parent / "data"
DESK_TRACES = "desk_traces.csv"
DESK_REGIONS = ("NTH", "CTR", "STH")
DESK_YEAR = 2021

# region -> (mean demand GW, pv cf, wind cf, seed offset)
_DESK_SITES = {
    "NTH": (3.0, 0.30, 0.41, 10),
    "CTR": (4.0, 0.28, 0.38, 20),
    "STH": (2.5, 0.24, 0.41, 30),
}


def desk_traces(seed: int = DESK_YEAR, horizon: int = 17520):
    """The desk dataset's traces (deterministic for a given seed)."""
    start = datetime(DESK_YEAR, 1, 1)
    rng = np.random.default_rng(seed)
    shared = _ar1(rng, horizon, 0.995)
    latent = {"NTH": shared, "STH": -shared, "CTR": None}
    out = []
    for region, (demand, pv_cf, wind_cf, offset) in _DESK_SITES.items():
        out.append(synth_trace("solar", seed + offset, horizon, pv_cf, start=start, name=f"pv_{region}"))
        out.append(synth_trace("wind", seed + offset + 1, horizon, wind_cf, noise=0.45, start=start,
                               name=f"wind_{region}", latent=latent[region]))
        out.append(synth_trace("demand", seed + offset + 2, horizon, 1.0, start=start, scale=demand,
                               name=f"demand_{region}"))
    return out


def write_desk_dataset(path=None, seed: int = DESK_YEAR) -> Path:
    path = Path(path) if path is not None else DATA_DIR / DESK_TRACES
    write_trace_csv(path, desk_traces(seed))
    return path


def national_scale_demand(base_trace_ids: dict) -> DemandSpec:
    """Electrified transport, heating and industry at national scale.

    Road vehicles are metered at the plug (charging efficiency 1), which is
    how the published per-class grid demands are reproduced; heating
    efficiencies are calibrated to the published per-row electricity.
    """
    road = dict(charging_efficiency=1.0, battery_kwh=40.0)
    fleets = (
        FleetClass("passenger_car", 14.3e6, 12_600, 27, flexible_share=0.8, travel_profile_id="commuter", **road),
        FleetClass("light_commercial", 3.2e6, 16_400, 32, travel_profile_id="daytime", **road),
        FleetClass("rigid_truck", 0.5e6, 20_800, 80, travel_profile_id="daytime", **road),
        FleetClass("articulated_truck", 0.1e6, 79_400, 160, travel_profile_id="daytime", **road),
        FleetClass("non_freight_truck", 0.02e6, 13_100, 73, travel_profile_id="daytime", **road),
        FleetClass("bus", 0.08e6, 26_900, 76, travel_profile_id="daytime", **road),
        FleetClass("motorcycle", 0.86e6, 2_600, 14, travel_profile_id="commuter", **road),
        FleetClass("rail", fixed_energy_twh=4.744, charging_efficiency=1.0, vampire_loss=0.0, travel_profile_id="flat"),
    )
    heating = (
        HeatingSpec("space_heating", 23.0, 0.825, 0.70, profile_id="heating"),
        HeatingSpec("water_heating", 22.0, 0.67, 0.667, profile_id="water_heating"),
        HeatingSpec("cooking", 8.0, 0.40, 0.195, profile_id="cooking"),
    )
    return DemandSpec(base_demand=dict(base_trace_ids), fleets=fleets, heating=heating, industry_power=9.0)
