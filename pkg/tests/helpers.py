"""Small synthetic scenarios and traces shared by the tests."""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from gridbalance.demand import DemandSpec, FleetClass
from gridbalance.scenario import (
    Bounds,
    Interconnector,
    OptimizerSettings,
    Region,
    Scenario,
    ScenarioFlags,
    Zone,
)
from gridbalance.traces import TimeSeries, align

START = datetime(2021, 1, 1)
HALF_HOUR = timedelta(minutes=30)


def trace_set(series: dict, start: datetime = START):
    """TraceSet from ``{id: values}``."""
    return align([TimeSeries(k, start, HALF_HOUR, np.asarray(v, dtype=float)) for k, v in series.items()])


def region(rid, hydro_gw=0.0, hydro_twh=0.0, pv=True, wind=True):
    zone = Zone(f"{rid}1", rid, f"pv_{rid}" if pv else None, f"wind_{rid}" if wind else None)
    return Region(rid, (zone,), hydro_gw, hydro_twh)


def scenario(
    region_ids=("A",),
    links=(),
    *,
    hydro=None,
    interconnection=True,
    ev_flex=False,
    fleets=(),
    reliability_limit=2e-5,
    pooled=False,
    pooled_cap=None,
    bounds=Bounds(),
    optimizer=OptimizerSettings(),
    lookahead_hours=24.0,
    deferral_floor="reference",
    scenario_id="test",
):
    """A scenario whose region R reads traces pv_R, wind_R and demand_R.

    ``links`` holds (from, to, length_km) or (from, to, length_km, existing_gw).
    ``hydro`` maps region -> (power GW, annual TWh).
    """
    hydro = hydro or {}
    regions = tuple(region(r, *hydro.get(r, (0.0, 0.0))) for r in region_ids)
    ics = []
    for link in links:
        a, b, km = link[:3]
        existing = link[3] if len(link) > 3 else 0.0
        ics.append(Interconnector(f"{a}-{b}", a, b, float(km), existing_gw=existing))
    return Scenario(
        id=scenario_id,
        regions=regions,
        interconnectors=tuple(ics),
        flags=ScenarioFlags(
            interconnection_enabled=interconnection,
            ev_flexibility_enabled=ev_flex,
            ev_lookahead_hours=lookahead_hours,
            ev_deferral_floor=deferral_floor,
        ),
        demand_spec=DemandSpec(base_demand={r: f"demand_{r}" for r in region_ids}, fleets=tuple(fleets)),
        reliability_limit=reliability_limit,
        hydro_bio_pooled=pooled,
        hydro_bio_pooled_cap=pooled_cap,
        bounds=bounds,
        optimizer=optimizer,
    )


def flat_traces(region_ids=("A",), horizon=48, demand=1.0, pv=0.0, wind=0.0, start=START):
    series = {}
    for r in region_ids:
        series[f"pv_{r}"] = np.full(horizon, pv)
        series[f"wind_{r}"] = np.full(horizon, wind)
        series[f"demand_{r}"] = np.full(horizon, demand)
    return trace_set(series, start)


def random_traces(rng, region_ids, horizon, demand_scale=1.0, start=START):
    series = {}
    for r in region_ids:
        series[f"pv_{r}"] = rng.uniform(0, 1, horizon)
        series[f"wind_{r}"] = rng.uniform(0, 1, horizon)
        series[f"demand_{r}"] = rng.uniform(0.2, 1.5, horizon) * demand_scale
    return trace_set(series, start)


def car_fleet(count=1.0e5, flexible=True, charger_kw=7.0):
    return FleetClass(
        "passenger_car", count, 12_600, 17, flexible_share=0.8 if flexible else 0.0,
        travel_profile_id="commuter", battery_kwh=60.0, charger_kw=charger_kw,
    )
