"""Operational demand: original electricity sector plus electrified transport,
heating and a flat industrial load.

Annual energies are TWh/yr measured at the grid; interval series are GW.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .traces import (
    DT_HOURS,
    INTERVALS_PER_DAY,
    TimeSeries,
    TraceError,
    TraceSet,
    calendar_years,
    year_fraction,
)

PJ_PER_TWH = 3.6


class DemandError(ValueError):
    """Raised when a demand component cannot be resolved."""


@dataclass(frozen=True)
class FleetClass:
    """One class of electrified road (or rail) vehicles.

    ``energy_intensity`` is kWh/100 km. ``fixed_energy_twh`` replaces the
    count x distance x intensity product for modes without a fleet count
    (e.g. rail traction).
    """

    name: str
    count: float = 0.0
    annual_km: float = 0.0
    energy_intensity: float = 0.0
    charging_efficiency: float = 0.85
    vampire_loss: float = 0.01
    tnd_loss: float = 0.075
    flexible_share: float = 0.0
    travel_profile_id: str = "flat"
    battery_kwh: float = 60.0
    charger_kw: float = 7.0
    fixed_energy_twh: float | None = None


@dataclass(frozen=True)
class HeatingSpec:
    """Displaced gas/LPG heating load served by heat pumps or electric appliances."""

    name: str
    fuel_energy_pj: float
    fuel_efficiency: float
    cop: float
    tnd_loss: float = 0.075
    profile_id: str = "flat"


@dataclass(frozen=True)
class DemandSpec:
    """Demand composition for every region of a scenario.

    Share maps (region -> fraction) default to each region's share of base
    demand energy when left empty. Profiles map an id to either a sequence
    of weights (48 daily or one year of half-hours) or a CSV path.
    """

    base_demand: Mapping[str, str] = field(default_factory=dict)
    fleets: tuple = ()
    heating: tuple = ()
    industry_power: float = 0.0
    transport_shares: Mapping[str, float] = field(default_factory=dict)
    heating_shares: Mapping[str, float] = field(default_factory=dict)
    industry_shares: Mapping[str, float] = field(default_factory=dict)
    profiles: Mapping[str, object] = field(default_factory=dict)


def _daily_shape(hours_centres, peaks):
    w = np.zeros(INTERVALS_PER_DAY)
    for centre, width, height in peaks:
        d = np.minimum(np.abs(hours_centres - centre), 24 - np.abs(hours_centres - centre))
        w += height * np.exp(-0.5 * (d / width) ** 2)
    return w


def _builtin_profiles() -> dict:
    h = (np.arange(INTERVALS_PER_DAY) + 0.5) / 2.0
    shapes = {
        "flat": np.ones(INTERVALS_PER_DAY),
        # home charging after the evening commute
        "commuter": _daily_shape(h, [(19.0, 2.0, 1.0), (22.0, 1.5, 0.6), (8.5, 1.0, 0.15)]) + 0.02,
        # depot and workplace charging
        "daytime": _daily_shape(h, [(12.0, 3.0, 1.0)]) + 0.02,
        # space heating: morning and evening occupancy peaks
        "heating": _daily_shape(h, [(7.5, 1.5, 1.0), (19.0, 2.5, 0.9)]) + 0.1,
        "water_heating": _daily_shape(h, [(7.0, 1.0, 1.0), (20.0, 1.5, 0.7)]) + 0.1,
        "cooking": _daily_shape(h, [(7.5, 0.8, 0.4), (12.5, 0.8, 0.3), (18.5, 1.0, 1.0)]) + 0.03,
    }
    return {k: v / v.sum() for k, v in shapes.items()}


BUILTIN_PROFILES = _builtin_profiles()


def heating_profile_from_temperature(temperature: TimeSeries, base_temp: float = 18.0, floor: float = 0.05) -> np.ndarray:
    """Half-hourly weights as an affine function of heating degrees.

    Weights are proportional to ``floor + max(0, base_temp - T)`` and are
    normalised to sum to 1 over the supplied series.
    """
    degrees = np.maximum(0.0, base_temp - np.asarray(temperature.values, dtype=float))
    w = floor + degrees
    return w / w.sum()


def fleet_annual_energy(f: FleetClass) -> float:
    """Grid-side energy of a fleet class in TWh/yr.

    Traction energy is divided by the charging efficiency and grossed up by
    network losses; vampire drain adds ``vampire_loss`` of a nominal battery
    per vehicle per day.
    """
    if f.fixed_energy_twh is not None:
        traction = f.fixed_energy_twh
    else:
        traction = f.count * f.annual_km * f.energy_intensity / 100.0 / 1e9
    if traction == 0 and f.count == 0:
        return 0.0
    eff = f.charging_efficiency if f.charging_efficiency > 0 else 1.0
    vampire = f.count * f.vampire_loss * f.battery_kwh * 365.0 / 1e9
    return traction / eff * (1.0 + f.tnd_loss) + vampire


def heating_annual_energy(h: HeatingSpec) -> float:
    """Electricity to replace a fuel-fired heating end use, TWh/yr."""
    if np.isinf(h.cop):
        return 0.0
    useful_pj = h.fuel_energy_pj * h.fuel_efficiency
    return useful_pj / h.cop / PJ_PER_TWH * (1.0 + h.tnd_loss)


def load_profile(spec, base_dir: Path | None = None) -> np.ndarray:
    """Resolve a profile spec (builtin name, weight list or CSV path) to weights."""
    if isinstance(spec, str):
        if spec in BUILTIN_PROFILES:
            return BUILTIN_PROFILES[spec]
        path = Path(spec)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise DemandError(f"profile file {spec!r} not found")
        frame = pd.read_csv(path)
        weights = pd.to_numeric(frame.iloc[:, -1], errors="coerce").to_numpy(dtype=float)
        if not np.all(np.isfinite(weights)):
            raise DemandError(f"profile file {spec!r} has non-numeric weights")
    else:
        weights = np.asarray(spec, dtype=float)
    if weights.ndim != 1 or len(weights) == 0:
        raise DemandError("profile must be a non-empty sequence of weights")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise DemandError("profile weights must be non-negative with positive sum")
    return weights / weights.sum()


def distribute_annual(annual_twh: float, weights: np.ndarray, timestamps: np.ndarray) -> np.ndarray:
    """Spread an annual energy over intervals following ``weights``; returns GW.

    Daily profiles (48 weights) give every calendar day ``1/days_in_year`` of
    the annual energy. Year-long profiles are stretched onto each calendar
    year's interval count and renormalised.
    """
    n = len(timestamps)
    out = np.zeros(n)
    if annual_twh == 0 or n == 0:
        return out
    gwh = annual_twh * 1000.0
    years = calendar_years(timestamps)
    if len(weights) == INTERVALS_PER_DAY:
        slot = ((timestamps - timestamps.astype("datetime64[D]")).astype(int) // 30).astype(int)
        leap = ((years % 4 == 0) & (years % 100 != 0)) | (years % 400 == 0)
        days = np.where(leap, 366.0, 365.0)
        energy = gwh / days * weights[slot]
        return energy / DT_HOURS
    for year in np.unique(years):
        idx = np.flatnonzero(years == year)
        first = np.datetime64(f"{int(year)}-01-01T00:00", "m")
        per_year = int((np.datetime64(f"{int(year) + 1}-01-01T00:00", "m") - first) / np.timedelta64(30, "m"))
        pos = ((timestamps[idx] - first) / np.timedelta64(30, "m")).astype(int)
        src = np.floor(np.arange(per_year) * len(weights) / per_year).astype(int)
        w = weights[src]
        w = w / w.sum()
        out[idx] = gwh * w[pos] / DT_HOURS
    return out


def _default_shares(regions, base_energy: dict) -> dict:
    total = sum(base_energy.values())
    if total <= 0:
        return {r: 1.0 / len(regions) for r in regions}
    return {r: base_energy[r] / total for r in regions}


@dataclass(frozen=True, eq=False)
class ComposedDemand:
    """Per-region demand series and the flexible-EV sub-demand.

    ``total`` includes every component; ``flexible_ev`` is the grid-side
    charging the flexible passenger fleet would draw on its travel profile,
    so ``total - flexible_ev`` is the inflexible load. ``ev_draw`` is the
    matching battery-side driving consumption (GW).
    """

    regions: tuple
    total: dict
    flexible_ev: dict
    ev_draw: dict
    ev_capacity_gwh: dict
    ev_max_charge_gw: dict
    ev_charge_efficiency: float
    components: dict

    def inflexible(self, region) -> np.ndarray:
        return self.total[region].values - self.flexible_ev[region].values

    def annual_energy(self, region=None) -> float:
        """Mean annual composed demand (TWh/yr) for one region or all."""
        regions = [region] if region is not None else self.regions
        ts = self.total[self.regions[0]]
        years = year_fraction(ts.timestamps())
        return sum(self.total[r].values.sum() for r in regions) * DT_HOURS / 1000.0 / years


def compose_demand(spec: DemandSpec, traces: TraceSet, regions=None, base_dir: Path | None = None) -> ComposedDemand:
    """Build per-region demand from the base trace and electrified components."""
    regions = tuple(regions if regions is not None else spec.base_demand)
    missing = [r for r in regions if r not in spec.base_demand]
    if missing:
        raise DemandError(f"no base demand trace for regions {missing}")
    base = {}
    for r in spec.base_demand:
        tid = spec.base_demand[r]
        if tid not in traces:
            raise DemandError(f"region {r!r}: base demand trace {tid!r} not found")
        base[r] = np.asarray(traces[tid].values, dtype=float)
    first = traces[spec.base_demand[regions[0]]]
    stamps = first.timestamps()
    years = year_fraction(stamps)
    # default shares are taken over every region of the study, not just the
    # regions requested, so isolated sub-scenarios keep their absolute loads
    base_energy = {r: base[r].sum() * DT_HOURS for r in spec.base_demand}
    study = tuple(spec.base_demand)
    transport_shares = dict(spec.transport_shares) or _default_shares(study, base_energy)
    heating_shares = dict(spec.heating_shares) or _default_shares(study, base_energy)
    industry_shares = dict(spec.industry_shares) or _default_shares(study, base_energy)

    profiles = {}

    def profile(pid):
        if pid not in profiles:
            if pid in spec.profiles:
                profiles[pid] = load_profile(spec.profiles[pid], base_dir)
            elif pid in BUILTIN_PROFILES:
                profiles[pid] = BUILTIN_PROFILES[pid]
            else:
                raise DemandError(f"unresolved profile id {pid!r}")
        return profiles[pid]

    n = len(stamps)
    transport = {r: np.zeros(n) for r in regions}
    flexible = {r: np.zeros(n) for r in regions}
    draw = {r: np.zeros(n) for r in regions}
    capacity = {r: 0.0 for r in regions}
    max_charge = {r: 0.0 for r in regions}
    heating = {r: np.zeros(n) for r in regions}
    components = {"base": sum(base_energy[r] for r in regions) / 1000.0 / years if years else 0.0}
    ev_eff = 0.85
    flex_effs = []

    for f in spec.fleets:
        annual = fleet_annual_energy(f)
        components[f"transport:{f.name}"] = annual
        shape = profile(f.travel_profile_id)
        for r in regions:
            share = transport_shares.get(r, 0.0)
            if share == 0:
                continue
            series = distribute_annual(annual * share, shape, stamps)
            flex = f.flexible_share * series
            transport[r] += series
            if f.flexible_share > 0:
                flexible[r] += flex
                draw[r] += flex * f.charging_efficiency
                vehicles = f.count * f.flexible_share * share
                capacity[r] += vehicles * f.battery_kwh / 1e6
                max_charge[r] += vehicles * f.charger_kw / 1e6
        if f.flexible_share > 0:
            flex_effs.append(f.charging_efficiency)
    if flex_effs:
        if max(flex_effs) - min(flex_effs) > 1e-12:
            raise DemandError("flexible fleet classes must share one charging efficiency")
        ev_eff = flex_effs[0]

    for h in spec.heating:
        annual = heating_annual_energy(h)
        components[f"heating:{h.name}"] = annual
        shape = profile(h.profile_id)
        for r in regions:
            share = heating_shares.get(r, 0.0)
            if share:
                heating[r] += distribute_annual(annual * share, shape, stamps)

    hours_per_year = len(stamps) * DT_HOURS / years if years else 0.0
    components["industry"] = spec.industry_power * hours_per_year / 1000.0

    total, flex_ts, draw_ts = {}, {}, {}
    for r in regions:
        industry = spec.industry_power * industry_shares.get(r, 0.0)
        values = base[r] + transport[r] + heating[r] + industry
        total[r] = first.with_values(values, name=f"{r}:demand")
        flex_ts[r] = first.with_values(flexible[r], name=f"{r}:flexible_ev")
        draw_ts[r] = first.with_values(draw[r], name=f"{r}:ev_draw")
    return ComposedDemand(
        regions=regions,
        total=total,
        flexible_ev=flex_ts,
        ev_draw=draw_ts,
        ev_capacity_gwh=capacity,
        ev_max_charge_gw=max_charge,
        ev_charge_efficiency=ev_eff,
        components=components,
    )


__all__ = [
    "ComposedDemand",
    "DemandError",
    "DemandSpec",
    "FleetClass",
    "HeatingSpec",
    "TraceError",
    "compose_demand",
    "distribute_annual",
    "fleet_annual_energy",
    "heating_annual_energy",
    "heating_profile_from_temperature",
    "load_profile",
]
