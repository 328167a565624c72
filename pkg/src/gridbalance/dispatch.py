"""Chronological half-hourly dispatch of a multi-region system.

Each interval applies a fixed merit order. On the deficit side: local VRE,
VRE surplus moved over the network, storage discharge (local, then
networked), hydro/bio (local, then networked), then unserved energy. On the
surplus side: storage charging, opportunistic EV charging, then spill.

The per-interval arithmetic lives in numba kernels; the small Python
wrappers below (``storage_update``, ``ev_flexible_charge``,
``hydro_bio_dispatch``, ``step_interval``) call the same kernels so there is
a single implementation of every rule.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import jit
from .costs import AnnualEnergy
from .demand import ComposedDemand, DemandError, compose_demand
from .network import _balance, link_arrays
from .scenario import Scenario, build_topology
from .traces import DT_HOURS, TraceError, TraceSet, calendar_years, year_fraction

DT = 0.5
_EPS = 1e-12

# columns of the per-interval, per-region result block
VRE_AVAILABLE = 0
VRE_USED = 1
STORAGE_CHARGE = 2
STORAGE_DISCHARGE = 3
HYDRO_BIO = 4
EV_CHARGE = 5
NET_IMPORT = 6
SPILL = 7
UNSERVED = 8
INFLEXIBLE = 9
STORAGE_SOC = 10
EV_SOC = 11
N_COLUMNS = 12

COLUMN_NAMES = (
    "vre_available",
    "vre_used",
    "storage_charge",
    "storage_discharge",
    "hydro_bio",
    "ev_charge",
    "net_import",
    "spill",
    "unserved",
    "inflexible_demand",
    "storage_soc",
    "ev_soc",
)


class DispatchError(ValueError):
    """Raised for inputs that cannot be simulated (e.g. horizon mismatch)."""


# --------------------------------------------------------------------------
# scalar kernels


@jit
def _charge_limit(soc, power, energy, charge_eff):
    """Largest charging power (GW) the store can accept this interval."""
    if power <= 0.0 or charge_eff <= 0.0:
        return 0.0
    room = (energy - soc) / (charge_eff * DT)
    return max(0.0, min(power, room))


@jit
def _discharge_limit(soc, power, discharge_eff):
    """Largest power (GW) the store can deliver this interval."""
    if power <= 0.0:
        return 0.0
    return max(0.0, min(power, soc * discharge_eff / DT))


@jit
def _after_charge(soc, gw, energy, charge_eff):
    soc += gw * charge_eff * DT
    return energy if soc > energy else soc


@jit
def _after_discharge(soc, gw, discharge_eff):
    soc -= gw * DT / discharge_eff
    return 0.0 if soc < 0.0 else soc


@jit
def _hydro_limit(power_cap, budget_gwh):
    return max(0.0, min(power_cap, budget_gwh / DT))


@jit(refcount=False)
def _ev_mandatory(soc, capacity, max_charge, eff, floor, draws, start, stop):
    """Smallest charge (GW) now that keeps the fleet above ``floor`` all window.

    The projection assumes charging at ``max_charge`` in every later interval
    of the window, so deferring is allowed only while a catch-up remains
    possible. ``draws[start:stop]`` are the battery-side driving draws.
    """
    if capacity <= 0.0 or eff <= 0.0:
        return 0.0
    d0 = draws[start]
    need = 0.0
    ahead = 0.0
    for k in range(start, stop):
        if k > start:
            ahead += (max_charge * eff - draws[k]) * DT
        m = ((floor - soc - ahead) / DT + d0) / eff
        if m > need:
            need = m
    headroom = (capacity - soc + d0 * DT) / (eff * DT)
    return max(0.0, min(need, max_charge, headroom))


@jit
def _ev_room(soc, capacity, max_charge, eff, draw, charged):
    """Extra charging power (GW) the fleet can still take this interval."""
    if capacity <= 0.0 or eff <= 0.0:
        return 0.0
    energy_room = (capacity - soc + draw * DT) / (eff * DT) - charged
    return max(0.0, min(max_charge - charged, energy_room))


@jit
def _ev_after(soc, charge, draw, eff, capacity, floor_min):
    soc += (charge * eff - draw) * DT
    if soc > capacity:
        soc = capacity
    # absorb rounding so the floor holds exactly
    if soc < floor_min and soc > floor_min - 1e-9 * (1.0 + capacity):
        soc = floor_min
    if soc < 0.0:
        soc = 0.0
    return soc


# --------------------------------------------------------------------------
# interval kernel
#
# Scratch space is allocated once per run: ``buf`` holds per-region rows,
# ``lbuf`` per-link rows and ``ibuf`` integer rows for path search.

_POS, _RECV, _SENT, _CHARGE, _DISCHARGE, _HYDRO, _EV, _OFFER, _P, _GOT, _BEST = range(11)
N_BUF = 11
_FWD, _BWD, _LOSS, _CAP = range(4)


@jit(refcount=False)
def _push(p, link_from, link_to, link_eff, buf, lbuf, ibuf):
    _balance(p, link_from, link_to, link_eff, lbuf[_CAP], lbuf[_FWD], lbuf[_BWD], lbuf[_LOSS],
             buf[_RECV], buf[_SENT], buf[_BEST], ibuf[0], ibuf[1])


@jit(refcount=False)
def _network_supply(link_from, link_to, link_eff, buf, lbuf, ibuf):
    """Serve remaining deficits from ``buf[_OFFER]`` over the network.

    Only regions with no deficit and no leftover surplus may offer. The
    amount drawn from each offering region is left in ``buf[_GOT]``;
    deficits in ``buf[_POS]`` shrink.
    """
    pos = buf[_POS]
    offer = buf[_OFFER]
    p = buf[_P]
    got = buf[_GOT]
    n = pos.shape[0]
    any_offer = False
    any_deficit = False
    for r in range(n):
        got[r] = 0.0
        p[r] = 0.0
        if pos[r] < 0.0:
            p[r] = pos[r]
            any_deficit = True
        elif pos[r] == 0.0 and offer[r] > _EPS:
            p[r] = offer[r]
            any_offer = True
    if not (any_offer and any_deficit):
        return False
    _push(p, link_from, link_to, link_eff, buf, lbuf, ibuf)
    for r in range(n):
        if pos[r] < 0.0:
            pos[r] = p[r]
        elif pos[r] == 0.0 and offer[r] > _EPS:
            got[r] = offer[r] - p[r]
    return True


@jit(refcount=False)
def _network_absorb(link_from, link_to, link_eff, buf, lbuf, ibuf):
    """Send leftover surplus to regions with spare absorbing room ``buf[_OFFER]``.

    The power received by each absorbing region is left in ``buf[_GOT]``;
    surpluses in ``buf[_POS]`` shrink.
    """
    pos = buf[_POS]
    room = buf[_OFFER]
    p = buf[_P]
    got = buf[_GOT]
    n = pos.shape[0]
    any_src = False
    any_sink = False
    for r in range(n):
        got[r] = 0.0
        p[r] = 0.0
        if pos[r] > 0.0:
            p[r] = pos[r]
            any_src = True
        elif pos[r] == 0.0 and room[r] > _EPS:
            p[r] = -room[r]
            any_sink = True
    if not (any_src and any_sink):
        return False
    _push(p, link_from, link_to, link_eff, buf, lbuf, ibuf)
    for r in range(n):
        if pos[r] > 0.0:
            pos[r] = p[r]
        elif pos[r] == 0.0 and room[r] > _EPS:
            got[r] = room[r] + p[r]
    return True


@jit(refcount=False)
def _run(
    t_start, t_stop, load, vre, ev_profile, ev_draw, year, budget_caps,
    soc, ev_soc, budget,
    st_power, st_energy, charge_eff, discharge_eff,
    ev_capacity, ev_max_charge, ev_eff, ev_floor, ev_floor_min, flexible, window,
    hydro_cap, hydro_group, pooled,
    link_from, link_to, link_eff, link_cap,
    out, link_flow, link_loss,
    buf, lbuf, ibuf,
):
    """Dispatch intervals ``t_start`` to ``t_stop``; state arrays are updated in place.

    The hydro/bio budget is refilled whenever the calendar year changes.
    """
    n = load.shape[0]
    n_links = link_from.shape[0]
    pos = buf[_POS]
    recv = buf[_RECV]
    sent = buf[_SENT]
    charge = buf[_CHARGE]
    discharge = buf[_DISCHARGE]
    hydro = buf[_HYDRO]
    ev = buf[_EV]
    offer = buf[_OFFER]
    got = buf[_GOT]
    for t in range(t_start, t_stop):
        if t > t_start and year[t] != year[t - 1]:
            for g in range(budget.shape[0]):
                budget[g] = budget_caps[g]
        stop = min(t + window, load.shape[1])
        for q in range(N_BUF):
            for r in range(n):
                buf[q, r] = 0.0
        for l in range(n_links):
            lbuf[_FWD, l] = 0.0
            lbuf[_BWD, l] = 0.0
            lbuf[_LOSS, l] = 0.0
            lbuf[_CAP, l] = link_cap[l]

        # mandatory EV charging is load like any other
        for r in range(n):
            if flexible:
                ev[r] = _ev_mandatory(ev_soc[r], ev_capacity[r], ev_max_charge[r], ev_eff,
                                      ev_floor[r], ev_draw[r], t, stop)
            else:
                ev[r] = ev_profile[r, t]
            pos[r] = vre[r, t] - load[r, t] - ev[r]

        # VRE surplus to deficits
        if n_links > 0:
            _push(pos, link_from, link_to, link_eff, buf, lbuf, ibuf)

        # storage discharge, local first
        short = False
        for r in range(n):
            if pos[r] < 0.0:
                d = _discharge_limit(soc[r], st_power[r], discharge_eff)
                if d >= -pos[r]:
                    d = -pos[r]
                    pos[r] = 0.0
                else:
                    pos[r] += d
                    short = True
                discharge[r] = d
                soc[r] = _after_discharge(soc[r], d, discharge_eff)
        if short and n_links > 0:
            for r in range(n):
                offer[r] = min(st_power[r] - discharge[r], soc[r] * discharge_eff / DT)
            if _network_supply(link_from, link_to, link_eff, buf, lbuf, ibuf):
                for r in range(n):
                    if got[r] > 0.0:
                        discharge[r] += got[r]
                        soc[r] = _after_discharge(soc[r], got[r], discharge_eff)

        # hydro/bio, local first
        short = False
        for r in range(n):
            if pos[r] < 0.0:
                g = hydro_group[r]
                h = _hydro_limit(hydro_cap[r], budget[g])
                if h >= -pos[r]:
                    h = -pos[r]
                    pos[r] = 0.0
                else:
                    pos[r] += h
                    short = True
                hydro[r] = h
                budget[g] = max(0.0, budget[g] - h * DT)
        if short and n_links > 0:
            # with a pooled budget each source is settled before the next offers
            rounds = n if pooled else 1
            for k in range(rounds):
                for r in range(n):
                    offer[r] = 0.0
                    if pooled and r != k:
                        continue
                    offer[r] = _hydro_limit(hydro_cap[r] - hydro[r], budget[hydro_group[r]])
                if _network_supply(link_from, link_to, link_eff, buf, lbuf, ibuf):
                    for r in range(n):
                        if got[r] > 0.0:
                            hydro[r] += got[r]
                            g = hydro_group[r]
                            budget[g] = max(0.0, budget[g] - got[r] * DT)

        # storage charging, local first
        spare = False
        for r in range(n):
            if pos[r] > 0.0:
                c = _charge_limit(soc[r], st_power[r], st_energy[r], charge_eff)
                if c >= pos[r]:
                    c = pos[r]
                    pos[r] = 0.0
                else:
                    pos[r] -= c
                    spare = True
                charge[r] = c
                soc[r] = _after_charge(soc[r], c, st_energy[r], charge_eff)
        if spare and n_links > 0:
            for r in range(n):
                offer[r] = 0.0
                if discharge[r] == 0.0 and hydro[r] == 0.0:
                    offer[r] = _charge_limit(soc[r], st_power[r] - charge[r], st_energy[r], charge_eff)
            if _network_absorb(link_from, link_to, link_eff, buf, lbuf, ibuf):
                for r in range(n):
                    if got[r] > 0.0:
                        charge[r] += got[r]
                        soc[r] = _after_charge(soc[r], got[r], st_energy[r], charge_eff)

        # opportunistic EV charging
        if flexible:
            spare = False
            for r in range(n):
                if pos[r] > 0.0:
                    c = _ev_room(ev_soc[r], ev_capacity[r], ev_max_charge[r], ev_eff, ev_draw[r, t], ev[r])
                    if c >= pos[r]:
                        c = pos[r]
                        pos[r] = 0.0
                    else:
                        pos[r] -= c
                        spare = True
                    ev[r] += c
            if spare and n_links > 0:
                for r in range(n):
                    offer[r] = _ev_room(ev_soc[r], ev_capacity[r], ev_max_charge[r], ev_eff, ev_draw[r, t], ev[r])
                if _network_absorb(link_from, link_to, link_eff, buf, lbuf, ibuf):
                    for r in range(n):
                        ev[r] += got[r]

        for r in range(n):
            ev_soc[r] = _ev_after(ev_soc[r], ev[r], ev_draw[r, t], ev_eff, ev_capacity[r], ev_floor_min[r])
            spill = pos[r] if pos[r] > 0.0 else 0.0
            unserved = -pos[r] if pos[r] < 0.0 else 0.0
            out[t, r, VRE_AVAILABLE] = vre[r, t]
            out[t, r, VRE_USED] = vre[r, t] - spill
            out[t, r, STORAGE_CHARGE] = charge[r]
            out[t, r, STORAGE_DISCHARGE] = discharge[r]
            out[t, r, HYDRO_BIO] = hydro[r]
            out[t, r, EV_CHARGE] = ev[r]
            out[t, r, NET_IMPORT] = recv[r] - sent[r]
            out[t, r, SPILL] = spill
            out[t, r, UNSERVED] = unserved
            out[t, r, INFLEXIBLE] = load[r, t]
            out[t, r, STORAGE_SOC] = soc[r]
            out[t, r, EV_SOC] = ev_soc[r]
        for l in range(n_links):
            link_flow[t, l] = lbuf[_FWD, l] - lbuf[_BWD, l]
            link_loss[t, l] = lbuf[_LOSS, l]


def _scratch(n_regions, n_links):
    return (np.zeros((N_BUF, n_regions)), np.zeros((4, n_links)), np.zeros((2, n_regions), dtype=np.int64))


@jit
def _simulate(
    load, vre, ev_profile, ev_draw, year,
    soc0, ev_soc0, budget_caps,
    st_power, st_energy, charge_eff, discharge_eff,
    ev_capacity, ev_max_charge, ev_eff, ev_floor, ev_floor_min, flexible, window,
    hydro_cap, hydro_group, pooled,
    link_from, link_to, link_eff, link_cap,
    out, link_flow, link_loss,
):
    n = load.shape[0]
    buf = np.zeros((N_BUF, n))
    lbuf = np.zeros((4, link_from.shape[0]))
    ibuf = np.zeros((2, n), dtype=np.int64)
    _run(
        0, load.shape[1], load, vre, ev_profile, ev_draw, year, budget_caps,
        soc0.copy(), ev_soc0.copy(), budget_caps.copy(),
        st_power, st_energy, charge_eff, discharge_eff,
        ev_capacity, ev_max_charge, ev_eff, ev_floor, ev_floor_min, flexible, window,
        hydro_cap, hydro_group, pooled,
        link_from, link_to, link_eff, link_cap,
        out, link_flow, link_loss,
        buf, lbuf, ibuf,
    )


# --------------------------------------------------------------------------
# domain types


@dataclass
class Portfolio:
    """Installed capacities: GW per zone/region/link, GWh of storage per region."""

    pv_gw: dict = field(default_factory=dict)
    wind_gw: dict = field(default_factory=dict)
    storage_power_gw: dict = field(default_factory=dict)
    storage_energy_gwh: dict = field(default_factory=dict)
    link_capacity_gw: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("pv_gw", "wind_gw", "storage_power_gw", "storage_energy_gwh", "link_capacity_gw"):
            for key, value in getattr(self, name).items():
                if not value >= 0:
                    raise ValueError(f"{name}[{key!r}] must be non-negative, got {value}")
        for key, power in self.storage_power_gw.items():
            energy = self.storage_energy_gwh.get(key, 0.0)
            if energy < power * DT * (1 - 1e-9):
                raise ValueError(f"storage in {key!r} holds less than one interval at full power")

    @staticmethod
    def layout(scenario: Scenario) -> list:
        """Decision-vector layout: (field, key) pairs in a fixed order."""
        zones = [z.id for z in scenario.zones]
        regions = list(scenario.region_ids)
        links = [ic.id for ic in scenario.interconnectors]
        return (
            [("pv_gw", z) for z in zones]
            + [("wind_gw", z) for z in zones]
            + [("storage_power_gw", r) for r in regions]
            + [("storage_energy_gwh", r) for r in regions]
            + [("link_capacity_gw", i) for i in links]
        )

    def to_vector(self, scenario: Scenario) -> np.ndarray:
        return np.array([getattr(self, f).get(k, 0.0) for f, k in self.layout(scenario)], dtype=float)

    @classmethod
    def from_vector(cls, scenario: Scenario, x) -> "Portfolio":
        parts = {f: {} for f in ("pv_gw", "wind_gw", "storage_power_gw", "storage_energy_gwh", "link_capacity_gw")}
        layout = cls.layout(scenario)
        if len(x) != len(layout):
            raise ValueError(f"expected {len(layout)} decision variables, got {len(x)}")
        for (f, k), v in zip(layout, x):
            parts[f][k] = float(v)
        return cls(**parts)

    @classmethod
    def empty(cls, scenario: Scenario) -> "Portfolio":
        return cls.from_vector(scenario, np.zeros(len(cls.layout(scenario))))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Portfolio":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown portfolio fields {sorted(unknown)}")
        return cls(**{k: {str(a): float(b) for a, b in v.items()} for k, v in data.items()})

    def scaled(self, k: float) -> "Portfolio":
        return Portfolio(**{f: {a: b * k for a, b in v.items()} for f, v in self.to_dict().items()})


@dataclass
class StorageState:
    soc_gwh: float
    power_gw: float
    energy_gwh: float
    charge_eff: float = math.sqrt(0.8)
    discharge_eff: float = math.sqrt(0.8)

    @classmethod
    def symmetric(cls, power_gw, energy_gwh, soc_gwh=0.0, round_trip=0.8) -> "StorageState":
        eff = math.sqrt(round_trip)
        return cls(soc_gwh, power_gw, energy_gwh, eff, eff)


def storage_update(state: StorageState, request_gw: float, direction: str):
    """Charge or discharge for one interval; returns ``(new_state, accepted_gw)``."""
    if request_gw < 0:
        raise ValueError("request must be non-negative")
    if direction == "charge":
        limit = _charge_limit(state.soc_gwh, state.power_gw, state.energy_gwh, state.charge_eff)
        accepted = min(request_gw, limit)
        soc = _after_charge(state.soc_gwh, accepted, state.energy_gwh, state.charge_eff)
    elif direction == "discharge":
        accepted = min(request_gw, _discharge_limit(state.soc_gwh, state.power_gw, state.discharge_eff))
        soc = _after_discharge(state.soc_gwh, accepted, state.discharge_eff)
    else:
        raise ValueError("direction must be 'charge' or 'discharge'")
    return dataclasses.replace(state, soc_gwh=soc), accepted


@dataclass
class EVAggregateState:
    """The flexible passenger fleet as one battery that never discharges to the grid.

    ``consumption`` is the battery-side driving draw (GW) per interval.
    """

    soc_gwh: float
    capacity_gwh: float
    max_charge_gw: float
    consumption: np.ndarray
    min_soc_fraction: float = 0.25
    charge_eff: float = 0.85


def ev_flexible_charge(
    ev: EVAggregateState,
    surplus_gw: float,
    deficit_gw: float = 0.0,
    lookahead: int = 48,
    t: int = 0,
    floor_gwh: float | None = None,
    flexibility_enabled: bool = True,
    profile_gw: float | None = None,
) -> float:
    """Grid charging (GW) of the fleet in interval ``t``.

    Charging is deferred while the projected state of charge stays above the
    floor (``min_soc_fraction`` of capacity unless ``floor_gwh`` is given)
    across ``lookahead`` intervals; surplus is absorbed opportunistically.
    With flexibility disabled the fleet draws ``profile_gw`` (defaulting to
    the grid energy that matches the interval's consumption).
    """
    draws = np.asarray(ev.consumption, dtype=float)
    if not flexibility_enabled:
        return float(profile_gw if profile_gw is not None else draws[t] / ev.charge_eff)
    floor = ev.min_soc_fraction * ev.capacity_gwh if floor_gwh is None else floor_gwh
    stop = min(t + lookahead, len(draws))
    forced = _ev_mandatory(ev.soc_gwh, ev.capacity_gwh, ev.max_charge_gw, ev.charge_eff, floor, draws, t, stop)
    if surplus_gw > 0 and deficit_gw <= 0:
        extra = _ev_room(ev.soc_gwh, ev.capacity_gwh, ev.max_charge_gw, ev.charge_eff, draws[t], forced)
        return forced + min(surplus_gw, extra)
    return forced


@dataclass
class HydroBioBudget:
    """Dispatchable hydro/bio with a power cap and a calendar-year energy cap."""

    power_cap_gw: float
    annual_cap_twh: float
    year_to_date_twh: float = 0.0
    year: int | None = None

    @property
    def remaining_gwh(self) -> float:
        return max(0.0, (self.annual_cap_twh - self.year_to_date_twh) * 1000.0)


def hydro_bio_dispatch(budget: HydroBioBudget, residual_deficit_gw: float, year: int | None = None) -> float:
    """Dispatch against ``residual_deficit_gw``; decrements the budget in place.

    Passing a ``year`` different from the budget's resets the year-to-date
    energy first.
    """
    if residual_deficit_gw < 0:
        raise ValueError("residual deficit must be non-negative")
    if year is not None and year != budget.year:
        budget.year = year
        budget.year_to_date_twh = 0.0
    gw = min(residual_deficit_gw, _hydro_limit(budget.power_cap_gw, budget.remaining_gwh))
    budget.year_to_date_twh = min(budget.annual_cap_twh, budget.year_to_date_twh + gw * DT / 1000.0)
    return gw


# --------------------------------------------------------------------------
# prepared inputs


@dataclass(eq=False)
class SystemInputs:
    """Portfolio-independent arrays for repeated simulation of one scenario."""

    scenario: Scenario
    regions: tuple
    timestamps: np.ndarray
    year: np.ndarray
    pv_cf: np.ndarray  # (zones, T)
    wind_cf: np.ndarray
    zone_region: np.ndarray
    load: np.ndarray  # (regions, T) inflexible demand
    ev_profile: np.ndarray
    ev_draw: np.ndarray
    ev_capacity: np.ndarray
    ev_max_charge: np.ndarray
    ev_eff: float
    ev_floor: np.ndarray
    ev_floor_min: np.ndarray
    ev_soc0: np.ndarray
    flexible: bool
    window: int
    hydro_cap: np.ndarray
    hydro_group: np.ndarray
    budget_caps: np.ndarray
    pooled: bool
    link_ids: tuple
    link_from: np.ndarray
    link_to: np.ndarray
    link_eff: np.ndarray
    link_existing: np.ndarray
    demand: ComposedDemand

    @property
    def horizon(self) -> int:
        return self.load.shape[1]


def _cf_row(traces: TraceSet, trace_id, horizon):
    if trace_id is None:
        return np.zeros(horizon)
    if trace_id not in traces:
        raise DispatchError(f"trace {trace_id!r} not found")
    values = traces[trace_id].values
    if len(values) != horizon:
        raise DispatchError(f"trace {trace_id!r} has {len(values)} intervals, expected {horizon}")
    return np.asarray(values, dtype=float)


def prepare(scenario: Scenario, traces: TraceSet) -> SystemInputs:
    """Compose demand and gather every array the kernels need."""
    regions = scenario.region_ids
    horizon = traces.horizon
    for tid, ts in traces.series.items():
        if len(ts.values) != horizon:
            raise DispatchError(f"trace {tid!r} has {len(ts.values)} intervals, expected {horizon}")
    demand = compose_demand(scenario.demand_spec, traces, regions, scenario.base_dir)
    stamps = traces.timestamps()
    zones = scenario.zones
    pv_cf = np.array([_cf_row(traces, z.pv_trace_id, horizon) for z in zones]).reshape(len(zones), horizon)
    wind_cf = np.array([_cf_row(traces, z.wind_trace_id, horizon) for z in zones]).reshape(len(zones), horizon)
    zone_region = np.array([regions.index(z.region) for z in zones], dtype=np.int64)

    flags = scenario.flags
    total = np.array([demand.total[r].values for r in regions])
    ev_profile = np.array([demand.flexible_ev[r].values for r in regions])
    ev_draw = np.array([demand.ev_draw[r].values for r in regions])
    capacity = np.array([demand.ev_capacity_gwh[r] for r in regions], dtype=float)
    # the charger rating must at least carry the unmanaged profile
    max_charge = np.array([max(demand.ev_max_charge_gw[r], ev_profile[i].max(initial=0.0)) for i, r in enumerate(regions)])
    soc0 = scenario.storage.initial_soc * capacity
    floor_min = flags.ev_min_soc * capacity
    if flags.ev_deferral_floor == "reference":
        # the unmanaged trajectory is flat at the initial state of charge
        floor = np.maximum(floor_min, soc0)
    else:
        floor = floor_min.copy()

    hydro_cap = np.array([r.hydro_bio_power_cap if r.has_hydro_bio else 0.0 for r in scenario.regions])
    annual = np.array([r.hydro_bio_annual_cap * 1000.0 if r.has_hydro_bio else 0.0 for r in scenario.regions])
    if scenario.hydro_bio_pooled:
        group = np.zeros(len(regions), dtype=np.int64)
        cap = annual.sum() if scenario.hydro_bio_pooled_cap is None else scenario.hydro_bio_pooled_cap * 1000.0
        budget_caps = np.array([cap])
    else:
        group = np.arange(len(regions), dtype=np.int64)
        budget_caps = annual

    topo = build_topology(scenario)
    link_from, link_to, eff, existing = link_arrays(topo, {})
    return SystemInputs(
        scenario=scenario,
        regions=regions,
        timestamps=stamps,
        year=calendar_years(stamps).astype(np.int64),
        pv_cf=pv_cf,
        wind_cf=wind_cf,
        zone_region=zone_region,
        load=total - ev_profile,
        ev_profile=ev_profile,
        ev_draw=ev_draw,
        ev_capacity=capacity,
        ev_max_charge=max_charge,
        ev_eff=float(demand.ev_charge_efficiency),
        ev_floor=floor,
        ev_floor_min=floor_min,
        ev_soc0=soc0,
        flexible=bool(flags.ev_flexibility_enabled),
        window=max(1, int(round(flags.ev_lookahead_hours / DT_HOURS))),
        hydro_cap=hydro_cap,
        hydro_group=group,
        budget_caps=budget_caps,
        pooled=bool(scenario.hydro_bio_pooled),
        link_ids=tuple(ic.id for ic in topo.links),
        link_from=link_from,
        link_to=link_to,
        link_eff=eff,
        link_existing=existing,
        demand=demand,
    )


# --------------------------------------------------------------------------
# results


@dataclass(eq=False)
class IntervalResult:
    """One interval: per-region values (GW) keyed by column name, per-link flow and loss."""

    regions: tuple
    values: np.ndarray  # (regions, N_COLUMNS)
    link_ids: tuple = ()
    link_flow: np.ndarray = field(default_factory=lambda: np.zeros(0))
    link_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __getitem__(self, key):
        region, column = key
        return float(self.values[self.regions.index(region), COLUMN_NAMES.index(column)])

    def balance_residual(self) -> np.ndarray:
        return balance_residual(self.values)


def balance_residual(values: np.ndarray) -> np.ndarray:
    """Left minus right of the per-region balance identity (GW)."""
    v = values
    lhs = (
        v[..., VRE_USED] + v[..., STORAGE_DISCHARGE] + v[..., HYDRO_BIO] + v[..., NET_IMPORT]
        - v[..., STORAGE_CHARGE] - v[..., EV_CHARGE]
    )
    return lhs - (v[..., INFLEXIBLE] - v[..., UNSERVED])


@dataclass(eq=False)
class DispatchResult:
    """Interval results for a whole run (after any burn-in) and annual aggregates."""

    regions: tuple
    timestamps: np.ndarray
    values: np.ndarray  # (T, regions, N_COLUMNS)
    link_ids: tuple
    link_flow: np.ndarray  # (T, links)
    link_loss: np.ndarray
    pv_available: np.ndarray  # (T, regions)
    wind_available: np.ndarray
    storage_energy_gwh: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        """(T, regions) series of one column."""
        return self.values[:, :, COLUMN_NAMES.index(name)]

    def interval(self, t: int) -> IntervalResult:
        return IntervalResult(self.regions, self.values[t], self.link_ids, self.link_flow[t], self.link_loss[t])

    @property
    def years(self) -> float:
        return year_fraction(self.timestamps)

    def energy_gwh(self, name: str, per_region: bool = False):
        total = self.column(name).sum(axis=0) * DT
        return total if per_region else float(total.sum())

    def annual_totals(self) -> dict:
        """Energy by source and sink, GWh per calendar year."""
        years = calendar_years(self.timestamps)
        out = {}
        for y in np.unique(years):
            mask = years == y
            out[int(y)] = {name: float(self.values[mask, :, i].sum() * DT) for i, name in enumerate(COLUMN_NAMES)
                           if name not in ("storage_soc", "ev_soc")}
            out[int(y)]["losses"] = float(self.link_loss[mask].sum() * DT)
        return out

    def dispatched_split(self):
        """Dispatched PV and wind (GW, shape (T, regions)) split by availability."""
        used = self.column("vre_used")
        avail = self.pv_available + self.wind_available
        share = np.divide(self.pv_available, avail, out=np.zeros_like(avail), where=avail > 0)
        return used * share, used * (1.0 - share) * (avail > 0)

    def annual_energy(self) -> AnnualEnergy:
        """Mean annual energies (MWh/yr) for levelising."""
        years = self.years
        k = DT * 1000.0 / years
        pv, wind = self.dispatched_split()
        served = self.column("inflexible_demand") - self.column("unserved") + self.column("ev_charge")
        return AnnualEnergy(
            delivered=float(served.sum() * k),
            generated=float((self.column("vre_used") + self.column("hydro_bio")).sum() * k),
            hydro_bio=float(self.column("hydro_bio").sum() * k),
            pv=float(pv.sum() * k),
            wind=float(wind.sum() * k),
            spilled=float(self.column("spill").sum() * k),
            losses=float(self.link_loss.sum() * k),
        )

    def peak_storage(self) -> dict:
        """Largest total discharge (GW) and the widest swing in stored energy (GWh)."""
        discharge = self.column("storage_discharge").sum(axis=1)
        soc = self.column("storage_soc")
        swing = soc.max(axis=0) - soc.min(axis=0) if len(soc) else np.zeros(len(self.regions))
        return {"discharge_gw": float(discharge.max(initial=0.0)), "energy_swing_gwh": float(swing.sum())}


def _portfolio_arrays(inputs: SystemInputs, portfolio: Portfolio):
    s = inputs.scenario
    zones = s.zones
    pv = np.array([portfolio.pv_gw.get(z.id, 0.0) for z in zones], dtype=float)
    wind = np.array([portfolio.wind_gw.get(z.id, 0.0) for z in zones], dtype=float)
    n = len(inputs.regions)
    pv_avail = np.zeros((n, inputs.horizon))
    wind_avail = np.zeros((n, inputs.horizon))
    for i in range(len(zones)):
        r = inputs.zone_region[i]
        if pv[i]:
            pv_avail[r] += pv[i] * inputs.pv_cf[i]
        if wind[i]:
            wind_avail[r] += wind[i] * inputs.wind_cf[i]
    st_power = np.array([portfolio.storage_power_gw.get(r, 0.0) for r in inputs.regions], dtype=float)
    st_energy = np.array([portfolio.storage_energy_gwh.get(r, 0.0) for r in inputs.regions], dtype=float)
    link_cap = inputs.link_existing + np.array([portfolio.link_capacity_gw.get(i, 0.0) for i in inputs.link_ids], dtype=float)
    return pv_avail, wind_avail, st_power, st_energy, link_cap


def simulate_prepared(inputs: SystemInputs, portfolio: Portfolio, burn_in_years: int = 0) -> DispatchResult:
    """Run the kernel over the whole horizon with precomputed inputs."""
    s = inputs.scenario
    pv_avail, wind_avail, st_power, st_energy, link_cap = _portfolio_arrays(inputs, portfolio)
    vre = pv_avail + wind_avail
    n, horizon = inputs.load.shape
    n_links = len(inputs.link_ids)
    out = np.zeros((horizon, n, N_COLUMNS))
    flow = np.zeros((horizon, n_links))
    loss = np.zeros((horizon, n_links))
    eff = math.sqrt(s.storage.round_trip_efficiency)
    _simulate(
        inputs.load, vre, inputs.ev_profile, inputs.ev_draw, inputs.year,
        s.storage.initial_soc * st_energy, inputs.ev_soc0, inputs.budget_caps,
        st_power, st_energy, eff, eff,
        inputs.ev_capacity, inputs.ev_max_charge, inputs.ev_eff, inputs.ev_floor, inputs.ev_floor_min,
        inputs.flexible, inputs.window,
        inputs.hydro_cap, inputs.hydro_group, inputs.pooled,
        inputs.link_from, inputs.link_to, inputs.link_eff, link_cap,
        out, flow, loss,
    )
    start = 0
    if burn_in_years:
        years = np.unique(inputs.year)
        if burn_in_years >= len(years):
            raise DispatchError(f"burn-in of {burn_in_years} year(s) leaves nothing of a {len(years)}-year horizon")
        start = int(np.searchsorted(inputs.year, years[burn_in_years]))
    return DispatchResult(
        regions=inputs.regions,
        timestamps=inputs.timestamps[start:],
        values=out[start:],
        link_ids=inputs.link_ids,
        link_flow=flow[start:],
        link_loss=loss[start:],
        pv_available=pv_avail.T[start:],
        wind_available=wind_avail.T[start:],
        storage_energy_gwh=st_energy,
    )


def simulate(scenario: Scenario, portfolio: Portfolio, traces: TraceSet, burn_in_years: int = 0) -> DispatchResult:
    """Dispatch ``portfolio`` chronologically over the traces' horizon.

    Storage and the EV fleet start half full. ``burn_in_years`` leading
    calendar years are simulated but dropped from the result.
    """
    try:
        inputs = prepare(scenario, traces)
    except (TraceError, DemandError) as exc:
        raise DispatchError(str(exc)) from None
    return simulate_prepared(inputs, portfolio, burn_in_years)


@dataclass
class DispatchState:
    """Mutable state carried between intervals by :func:`step_interval`."""

    storage_soc: np.ndarray
    ev_soc: np.ndarray
    hydro_budget_gwh: np.ndarray


def initial_state(inputs: SystemInputs, portfolio: Portfolio) -> DispatchState:
    st_energy = _portfolio_arrays(inputs, portfolio)[3]
    return DispatchState(
        storage_soc=inputs.scenario.storage.initial_soc * st_energy,
        ev_soc=inputs.ev_soc0.copy(),
        hydro_budget_gwh=inputs.budget_caps.copy(),
    )


def step_interval(
    inputs: SystemInputs,
    portfolio: Portfolio,
    state: DispatchState,
    demand_gw,
    vre_available_gw,
    ev_profile_gw=None,
    ev_draw_window=None,
) -> IntervalResult:
    """Dispatch a single interval from explicit demand and VRE vectors.

    ``ev_draw_window`` holds (regions, k) upcoming battery-side draws starting
    with the current interval; ``state`` is updated in place.
    """
    n = len(inputs.regions)
    load = np.asarray(demand_gw, dtype=float).reshape(n, 1)
    vre = np.asarray(vre_available_gw, dtype=float).reshape(n, 1)
    profile = np.zeros((n, 1)) if ev_profile_gw is None else np.asarray(ev_profile_gw, dtype=float).reshape(n, 1)
    draws = np.zeros((n, 1)) if ev_draw_window is None else np.asarray(ev_draw_window, dtype=float).reshape(n, -1)
    if draws.shape[1] > 1:
        # the kernel reads the lookahead from the same arrays as the load
        load = np.hstack([load, np.zeros((n, draws.shape[1] - 1))])
        vre = np.hstack([vre, np.zeros((n, draws.shape[1] - 1))])
        profile = np.hstack([profile, np.zeros((n, draws.shape[1] - 1))])
    _, _, st_power, st_energy, link_cap = _portfolio_arrays(inputs, portfolio)
    s = inputs.scenario
    eff = math.sqrt(s.storage.round_trip_efficiency)
    values = np.zeros((1, n, N_COLUMNS))
    flow = np.zeros((1, len(inputs.link_ids)))
    loss = np.zeros((1, len(inputs.link_ids)))
    _run(
        0, 1, load, vre, profile, draws, np.zeros(load.shape[1], dtype=np.int64), inputs.budget_caps,
        state.storage_soc, state.ev_soc, state.hydro_budget_gwh,
        st_power, st_energy, eff, eff,
        inputs.ev_capacity, inputs.ev_max_charge, inputs.ev_eff, inputs.ev_floor, inputs.ev_floor_min,
        inputs.flexible, inputs.window,
        inputs.hydro_cap, inputs.hydro_group, inputs.pooled,
        inputs.link_from, inputs.link_to, inputs.link_eff, link_cap,
        values, flow, loss,
        *_scratch(n, len(inputs.link_ids)),
    )
    return IntervalResult(inputs.regions, values[0], inputs.link_ids, flow[0], loss[0])


@dataclass(frozen=True)
class Reliability:
    overall: float
    by_year: dict
    worst_interval_gw: float
    unserved_gwh: float
    demand_gwh: float


def reliability(dr: DispatchResult) -> Reliability:
    """Unserved fraction of demand overall and per calendar year."""
    unserved = dr.column("unserved").sum(axis=1)
    demand = (dr.column("inflexible_demand") + dr.column("ev_charge")).sum(axis=1)
    years = calendar_years(dr.timestamps)
    by_year = {}
    for y in np.unique(years):
        mask = years == y
        d = demand[mask].sum()
        by_year[int(y)] = float(unserved[mask].sum() / d) if d > 0 else 0.0
    total_d = demand.sum()
    return Reliability(
        overall=float(unserved.sum() / total_d) if total_d > 0 else 0.0,
        by_year=by_year,
        worst_interval_gw=float(unserved.max(initial=0.0)),
        unserved_gwh=float(unserved.sum() * DT),
        demand_gwh=float(total_d * DT),
    )
