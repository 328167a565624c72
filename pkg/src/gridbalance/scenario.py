"""Scenario configuration: domain types, YAML parsing, validation and topology.

Units at this boundary are fixed: GW for power, GWh for storage energy,
TWh/yr for annual energy budgets, $/kW (etc.) for costs and km for lengths.
See ``docs/scenario_schema.md`` for the file format.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .demand import DemandSpec, FleetClass, HeatingSpec
from .traces import TraceError, TraceSet, align, csv_columns, load_trace_file

SCHEMA_VERSION = 1
DEFAULT_RELIABILITY_LIMIT = 2e-5
DEFAULT_RESERVE_FRACTION = 0.25


class ScenarioError(ValueError):
    """Base class for scenario problems."""


class ScenarioParseError(ScenarioError):
    """The configuration text does not follow the schema."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key:
            where.append(f"key {key!r}")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ScenarioValidationError(ScenarioError):
    """The configuration parsed but violates scenario invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in self.violations))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class Zone:
    id: str
    region: str
    pv_trace_id: str | None = None
    wind_trace_id: str | None = None
    hvac_connection_cost_rate: float | None = None


@dataclass(frozen=True)
class Region:
    id: str
    zones: tuple = ()
    hydro_bio_power_cap: float = 0.0
    hydro_bio_annual_cap: float = 0.0
    has_hydro_bio: bool | None = None

    def __post_init__(self):
        if self.has_hydro_bio is None:
            has = self.hydro_bio_power_cap > 0 and self.hydro_bio_annual_cap > 0
            object.__setattr__(self, "has_hydro_bio", has)


@dataclass(frozen=True)
class Interconnector:
    id: str
    from_region: str
    to_region: str
    length_km: float
    kind: str = "overhead"
    reserve_fraction: float = DEFAULT_RESERVE_FRACTION
    existing_gw: float = 0.0


@dataclass(frozen=True)
class TechCost:
    """Unit costs for one technology.

    ``capital`` is $/kW, ``capital_energy`` $/kWh, ``capital_per_mw`` and
    ``capital_per_mw_km`` are the HVDC converter and line costs.
    """

    capital: float = 0.0
    fom: float = 0.0
    vom: float = 0.0
    lifetime: float = 25.0
    capital_energy: float = 0.0
    capital_per_mw: float = 0.0
    capital_per_mw_km: float = 0.0


@dataclass(frozen=True)
class TechnologyCosts:
    pv: TechCost = TechCost(capital=1600.0, fom=18.0, vom=0.0, lifetime=25.0)
    wind: TechCost = TechCost(capital=1800.0, fom=36.0, vom=3.0, lifetime=25.0)
    storage: TechCost = TechCost(capital=800.0, capital_energy=70.0, fom=10.0, lifetime=50.0)
    hvdc_overhead: TechCost = TechCost(capital_per_mw=160_000.0, capital_per_mw_km=320.0, lifetime=50.0)
    hvdc_submarine: TechCost = TechCost(capital=4000.0, lifetime=50.0)
    hvac: TechCost = TechCost(capital=1500.0, lifetime=50.0)
    discount_rate_real: float = 0.05
    hydro_bio_purchase_price: float = 50.0
    hvac_storage_share: float = 0.0

    TECHNOLOGIES = ("pv", "wind", "storage", "hvdc_overhead", "hvdc_submarine", "hvac")


@dataclass(frozen=True)
class ScenarioFlags:
    interconnection_enabled: bool = True
    ev_flexibility_enabled: bool = False
    ev_flexible_share: float = 0.80
    ev_min_soc: float = 0.25
    ev_lookahead_hours: float = 24.0
    ev_deferral_floor: str = "reference"


@dataclass(frozen=True)
class StorageSettings:
    round_trip_efficiency: float = 0.80
    initial_soc: float = 0.5


@dataclass(frozen=True)
class Bounds:
    """Upper bounds of the optimiser's decision variables (lower bound 0)."""

    pv_gw: float = 10.0
    wind_gw: float = 10.0
    storage_power_gw: float = 10.0
    storage_energy_gwh: float = 200.0
    link_gw: float = 10.0


@dataclass(frozen=True)
class OptimizerSettings:
    population: int = 0  # 0 means 10 x dimension
    generations: int = 100
    differential_weight: float = 0.8
    crossover_rate: float = 0.9
    penalty_weight: float = 1e6
    convergence_window: int = 25
    convergence_tol: float = 1e-7


@dataclass(frozen=True)
class Scenario:
    id: str
    regions: tuple
    interconnectors: tuple = ()
    costs: TechnologyCosts = TechnologyCosts()
    flags: ScenarioFlags = ScenarioFlags()
    demand_spec: DemandSpec = DemandSpec()
    reliability_limit: float = DEFAULT_RELIABILITY_LIMIT
    trace_files: tuple = ()
    storage: StorageSettings = StorageSettings()
    hydro_bio_pooled: bool = False
    hydro_bio_pooled_cap: float | None = None
    bounds: Bounds = Bounds()
    optimizer: OptimizerSettings = OptimizerSettings()
    description: str = ""
    study_regions: tuple = ()
    base_dir: Path | None = field(default=None, compare=False)

    @property
    def region_ids(self):
        return tuple(r.id for r in self.regions)

    @property
    def zones(self):
        return tuple(z for r in self.regions for z in r.zones)

    def region(self, region_id) -> Region:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)

    def trace_paths(self):
        base = self.base_dir or Path(".")
        return [Path(p) if Path(p).is_absolute() else base / p for p in self.trace_files]

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def single_region(self, region_id) -> "Scenario":
        """The isolated sub-scenario for one region (7 Grids style).

        Demand settings are kept whole so that default regional shares of the
        electrified loads are still computed over every region of the study.
        """
        return dataclasses.replace(
            self,
            id=f"{self.id}:{region_id}",
            regions=(self.region(region_id),),
            interconnectors=(),
            hydro_bio_pooled=False,
            hydro_bio_pooled_cap=None,
            study_regions=self.study_regions or self.region_ids,
        )


# --------------------------------------------------------------------------
# parsing


def _line_index(node, path=(), out=None):
    """Map key paths to 1-based source lines of a composed YAML node tree."""
    if out is None:
        out = {}
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = key_node.value
            out[path + (key,)] = key_node.start_mark.line + 1
            _line_index(value_node, path + (key,), out)
            out[path + (key,)] = key_node.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_index(item, path + (i,), out)
    return out


class _Reader:
    """Typed, line-aware access to one mapping of the configuration."""

    def __init__(self, data, path, lines):
        self.path = path
        self.lines = lines
        if not isinstance(data, dict):
            raise ScenarioParseError("expected a mapping", self.dotted(), self.line())
        self.data = data
        self.seen = set()

    def dotted(self, key=None):
        parts = [str(p) if not isinstance(p, int) else f"[{p}]" for p in self.path]
        if key is not None:
            parts.append(str(key))
        text = ".".join(parts)
        return text.replace(".[", "[")

    def line(self, key=None):
        path = self.path + ((key,) if key is not None else ())
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def has(self, key):
        return key in self.data

    def raw(self, key, default=None):
        self.seen.add(key)
        return self.data.get(key, default)

    def _fail(self, key, message):
        raise ScenarioParseError(message, self.dotted(key), self.line(key))

    def req(self, key, kind):
        if key not in self.data:
            raise ScenarioParseError("missing required key", self.dotted(key), self.line())
        return self.opt(key, None, kind)

    def opt(self, key, default, kind):
        self.seen.add(key)
        if key not in self.data or self.data[key] is None:
            return default
        value = self.data[key]
        if kind is float:
            if isinstance(value, bool):
                self._fail(key, "expected a number")
            if isinstance(value, str):
                try:
                    value = float(value)
                except ValueError:
                    self._fail(key, "expected a number")
            if not isinstance(value, (int, float)):
                self._fail(key, "expected a number")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self._fail(key, "expected an integer")
            return value
        if kind is bool:
            if not isinstance(value, bool):
                self._fail(key, "expected true or false")
            return value
        if kind is str:
            if not isinstance(value, (str, int, float)) or isinstance(value, bool):
                self._fail(key, "expected a string")
            return str(value)
        if kind is list:
            if not isinstance(value, list):
                self._fail(key, "expected a list")
            return value
        if kind is dict:
            if not isinstance(value, dict):
                self._fail(key, "expected a mapping")
            return value
        raise TypeError(kind)

    def sub(self, key):
        self.seen.add(key)
        return _Reader(self.data.get(key) or {}, self.path + (key,), self.lines)

    def items(self, key):
        values = self.opt(key, [], list)
        return [_Reader(v, self.path + (key, i), self.lines) for i, v in enumerate(values)]

    def finish(self):
        for key in self.data:
            if key not in self.seen:
                raise ScenarioParseError("unknown key", self.dotted(key), self.line(key))


def _float_map(reader, key):
    raw = reader.opt(key, {}, dict)
    sub = reader.sub(key)
    out = {}
    for k in raw:
        out[str(k)] = sub.req(k, float)
    return out


def _tech_cost(reader, default: TechCost) -> TechCost:
    kw = {}
    for f in dataclasses.fields(TechCost):
        kw[f.name] = reader.opt(f.name, getattr(default, f.name), float)
    reader.finish()
    return TechCost(**kw)


def _parse_costs(r: _Reader) -> TechnologyCosts:
    default = TechnologyCosts()
    kw = {
        "discount_rate_real": r.opt("discount_rate", default.discount_rate_real, float),
        "hydro_bio_purchase_price": r.opt("hydro_bio_price", default.hydro_bio_purchase_price, float),
        "hvac_storage_share": r.opt("hvac_storage_share", default.hvac_storage_share, float),
    }
    for tech in TechnologyCosts.TECHNOLOGIES:
        if r.has(tech):
            kw[tech] = _tech_cost(r.sub(tech), getattr(default, tech))
        else:
            r.seen.add(tech)
    r.finish()
    return TechnologyCosts(**kw)


_FLEET_DEFAULTS = FleetClass(name="")


def _parse_fleet(r: _Reader, flags: ScenarioFlags) -> FleetClass:
    flexible = r.opt("flexible", False, bool)
    share = r.opt("flexible_share", None, float)
    if share is None:
        share = flags.ev_flexible_share if flexible else 0.0
    fleet = FleetClass(
        name=r.req("name", str),
        count=r.opt("count", 0.0, float),
        annual_km=r.opt("annual_km", 0.0, float),
        energy_intensity=r.opt("energy_intensity", 0.0, float),
        charging_efficiency=r.opt("charging_efficiency", _FLEET_DEFAULTS.charging_efficiency, float),
        vampire_loss=r.opt("vampire_loss", _FLEET_DEFAULTS.vampire_loss, float),
        tnd_loss=r.opt("tnd_loss", _FLEET_DEFAULTS.tnd_loss, float),
        flexible_share=share,
        travel_profile_id=r.opt("travel_profile", "flat", str),
        battery_kwh=r.opt("battery_kwh", _FLEET_DEFAULTS.battery_kwh, float),
        charger_kw=r.opt("charger_kw", _FLEET_DEFAULTS.charger_kw, float),
        fixed_energy_twh=r.opt("fixed_energy_twh", None, float),
    )
    r.finish()
    return fleet


def _parse_heating(r: _Reader) -> HeatingSpec:
    spec = HeatingSpec(
        name=r.req("name", str),
        fuel_energy_pj=r.req("fuel_energy_pj", float),
        fuel_efficiency=r.req("fuel_efficiency", float),
        cop=r.req("cop", float),
        tnd_loss=r.opt("tnd_loss", 0.075, float),
        profile_id=r.opt("profile", "flat", str),
    )
    r.finish()
    return spec


def _parse_profiles(r: _Reader) -> dict:
    out = {}
    for key, value in r.data.items():
        r.seen.add(key)
        if isinstance(value, str):
            out[str(key)] = value
        elif isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            out[str(key)] = tuple(float(v) for v in value)
        else:
            raise ScenarioParseError("profile must be a file path or a list of numbers", r.dotted(key), r.line(key))
    return out


def _parse_demand(r: _Reader, flags: ScenarioFlags) -> DemandSpec:
    base = {str(k): str(v) for k, v in r.opt("base", {}, dict).items()}
    spec = DemandSpec(
        base_demand=base,
        fleets=tuple(_parse_fleet(f, flags) for f in r.items("fleets")),
        heating=tuple(_parse_heating(h) for h in r.items("heating")),
        industry_power=r.opt("industry_power", 0.0, float),
        transport_shares=_float_map(r, "transport_shares"),
        heating_shares=_float_map(r, "heating_shares"),
        industry_shares=_float_map(r, "industry_shares"),
        profiles=_parse_profiles(r.sub("profiles")),
    )
    r.finish()
    return spec


def _parse_flags(r: _Reader) -> ScenarioFlags:
    d = ScenarioFlags()
    flags = ScenarioFlags(
        interconnection_enabled=r.opt("interconnection_enabled", d.interconnection_enabled, bool),
        ev_flexibility_enabled=r.opt("ev_flexibility_enabled", d.ev_flexibility_enabled, bool),
        ev_flexible_share=r.opt("ev_flexible_share", d.ev_flexible_share, float),
        ev_min_soc=r.opt("ev_min_soc", d.ev_min_soc, float),
        ev_lookahead_hours=r.opt("ev_lookahead_hours", d.ev_lookahead_hours, float),
        ev_deferral_floor=r.opt("ev_deferral_floor", d.ev_deferral_floor, str),
    )
    if flags.ev_deferral_floor not in ("reference", "min_soc"):
        raise ScenarioParseError("expected 'reference' or 'min_soc'", r.dotted("ev_deferral_floor"), r.line("ev_deferral_floor"))
    r.finish()
    return flags


def _parse_simple(r: _Reader, cls):
    default = cls()
    kw = {}
    for f in dataclasses.fields(cls):
        value = getattr(default, f.name)
        kind = bool if isinstance(value, bool) else int if isinstance(value, int) else float
        kw[f.name] = r.opt(f.name, value, kind)
    r.finish()
    return cls(**kw)


def parse_scenario(config_text: str, base_dir=None, validate: bool = True) -> Scenario:
    """Parse YAML scenario text into a :class:`Scenario` with defaults applied.

    Schema violations raise :class:`ScenarioParseError` naming the key and
    line; invariant violations (e.g. links to undeclared regions) raise
    :class:`ScenarioValidationError` unless ``validate`` is false.
    """
    try:
        node = yaml.compose(config_text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}", None, mark.line + 1 if mark else None) from None
    if node is None:
        raise ScenarioParseError("empty configuration")
    lines = _line_index(node)
    root = _Reader(data, (), lines)

    version = root.req("schema_version", int)
    if version != SCHEMA_VERSION:
        raise ScenarioParseError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})", "schema_version", root.line("schema_version"))

    flags = _parse_flags(root.sub("flags"))

    regions = []
    for rr in root.items("regions"):
        rid = rr.req("id", str)
        zones = []
        for zr in rr.items("zones"):
            zones.append(
                Zone(
                    id=zr.req("id", str),
                    region=rid,
                    pv_trace_id=zr.opt("pv_trace", None, str),
                    wind_trace_id=zr.opt("wind_trace", None, str),
                    hvac_connection_cost_rate=zr.opt("hvac_connection_cost", None, float),
                )
            )
            zr.finish()
        regions.append(
            Region(
                id=rid,
                zones=tuple(zones),
                hydro_bio_power_cap=rr.opt("hydro_bio_power_cap", 0.0, float),
                hydro_bio_annual_cap=rr.opt("hydro_bio_annual_cap", 0.0, float),
                has_hydro_bio=rr.opt("has_hydro_bio", None, bool),
            )
        )
        rr.finish()

    links = []
    for lr in root.items("interconnectors"):
        links.append(
            Interconnector(
                id=lr.req("id", str),
                from_region=lr.req("from", str),
                to_region=lr.req("to", str),
                length_km=lr.req("length_km", float),
                kind=lr.opt("kind", "overhead", str),
                reserve_fraction=lr.opt("reserve_fraction", DEFAULT_RESERVE_FRACTION, float),
                existing_gw=lr.opt("existing_gw", 0.0, float),
            )
        )
        if links[-1].kind not in ("overhead", "submarine"):
            raise ScenarioParseError("kind must be 'overhead' or 'submarine'", lr.dotted("kind"), lr.line("kind"))
        lr.finish()

    traces = root.opt("traces", [], list) if not isinstance(root.data.get("traces"), str) else [root.raw("traces")]
    if not all(isinstance(t, str) for t in traces):
        raise ScenarioParseError("traces must list CSV file paths", "traces", root.line("traces"))

    scenario = Scenario(
        id=root.req("id", str),
        description=root.opt("description", "", str),
        study_regions=tuple(str(x) for x in root.opt("study_regions", [], list)),
        regions=tuple(regions),
        interconnectors=tuple(links),
        costs=_parse_costs(root.sub("costs")),
        flags=flags,
        demand_spec=_parse_demand(root.sub("demand"), flags),
        reliability_limit=root.opt("reliability_limit", DEFAULT_RELIABILITY_LIMIT, float),
        trace_files=tuple(traces),
        storage=_parse_simple(root.sub("storage"), StorageSettings),
        hydro_bio_pooled=root.opt("hydro_bio_pooled", False, bool),
        hydro_bio_pooled_cap=root.opt("hydro_bio_pooled_cap", None, float),
        bounds=_parse_simple(root.sub("bounds"), Bounds),
        optimizer=_parse_simple(root.sub("optimizer"), OptimizerSettings),
        base_dir=Path(base_dir) if base_dir is not None else None,
    )
    root.finish()
    if validate:
        problems = validate_scenario(scenario)
        if problems:
            raise ScenarioValidationError(problems)
    return scenario


def load_scenario(path, validate: bool = True) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioError(f"{path}: scenario file not found") from None
    return parse_scenario(text, base_dir=path.parent, validate=validate)


# --------------------------------------------------------------------------
# rendering


def _changed(obj, default) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if value != getattr(default, f.name):
            out[f.name] = value
    return out


def scenario_to_dict(s: Scenario) -> dict:
    """Plain-data form of a scenario, accepted by :func:`parse_scenario`."""
    costs = {
        "discount_rate": s.costs.discount_rate_real,
        "hydro_bio_price": s.costs.hydro_bio_purchase_price,
        "hvac_storage_share": s.costs.hvac_storage_share,
    }
    for tech in TechnologyCosts.TECHNOLOGIES:
        costs[tech] = dataclasses.asdict(getattr(s.costs, tech))

    def fleet(f: FleetClass):
        d = {
            "name": f.name,
            "count": f.count,
            "annual_km": f.annual_km,
            "energy_intensity": f.energy_intensity,
            "charging_efficiency": f.charging_efficiency,
            "vampire_loss": f.vampire_loss,
            "tnd_loss": f.tnd_loss,
            "flexible_share": f.flexible_share,
            "travel_profile": f.travel_profile_id,
            "battery_kwh": f.battery_kwh,
            "charger_kw": f.charger_kw,
        }
        if f.fixed_energy_twh is not None:
            d["fixed_energy_twh"] = f.fixed_energy_twh
        return d

    spec = s.demand_spec
    demand = {
        "base": dict(spec.base_demand),
        "industry_power": spec.industry_power,
        "fleets": [fleet(f) for f in spec.fleets],
        "heating": [
            {
                "name": h.name,
                "fuel_energy_pj": h.fuel_energy_pj,
                "fuel_efficiency": h.fuel_efficiency,
                "cop": h.cop,
                "tnd_loss": h.tnd_loss,
                "profile": h.profile_id,
            }
            for h in spec.heating
        ],
        "transport_shares": dict(spec.transport_shares),
        "heating_shares": dict(spec.heating_shares),
        "industry_shares": dict(spec.industry_shares),
        "profiles": {k: (v if isinstance(v, str) else list(v)) for k, v in spec.profiles.items()},
    }
    out = {
        "schema_version": SCHEMA_VERSION,
        "id": s.id,
        "description": s.description,
        "reliability_limit": s.reliability_limit,
        "hydro_bio_pooled": s.hydro_bio_pooled,
        "hydro_bio_pooled_cap": s.hydro_bio_pooled_cap,
        "traces": list(s.trace_files),
        "flags": dataclasses.asdict(s.flags),
        "storage": dataclasses.asdict(s.storage),
        "regions": [
            {
                "id": r.id,
                "hydro_bio_power_cap": r.hydro_bio_power_cap,
                "hydro_bio_annual_cap": r.hydro_bio_annual_cap,
                "has_hydro_bio": r.has_hydro_bio,
                "zones": [
                    {
                        k: v
                        for k, v in {
                            "id": z.id,
                            "pv_trace": z.pv_trace_id,
                            "wind_trace": z.wind_trace_id,
                            "hvac_connection_cost": z.hvac_connection_cost_rate,
                        }.items()
                        if v is not None
                    }
                    for z in r.zones
                ],
            }
            for r in s.regions
        ],
        "interconnectors": [
            {
                "id": ic.id,
                "from": ic.from_region,
                "to": ic.to_region,
                "length_km": ic.length_km,
                "kind": ic.kind,
                "reserve_fraction": ic.reserve_fraction,
                "existing_gw": ic.existing_gw,
            }
            for ic in s.interconnectors
        ],
        "costs": costs,
        "demand": demand,
        "bounds": dataclasses.asdict(s.bounds),
        "optimizer": dataclasses.asdict(s.optimizer),
    }
    if s.hydro_bio_pooled_cap is None:
        del out["hydro_bio_pooled_cap"]
    if s.study_regions:
        out["study_regions"] = list(s.study_regions)
    return out


def render_scenario(s: Scenario) -> str:
    """YAML text for ``s``; ``parse_scenario(render_scenario(s)) == s``."""
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=False)


# --------------------------------------------------------------------------
# validation


def _frac(x):
    return 0.0 <= x <= 1.0


def validate_scenario(s: Scenario) -> list:
    """Check every scenario invariant; returns a list of :class:`Violation`."""
    out = []

    def bad(code, message):
        out.append(Violation(code, message))

    region_ids = [r.id for r in s.regions]
    if not region_ids:
        bad("no_regions", "scenario declares no regions")
    dupes = {x for x in region_ids if region_ids.count(x) > 1}
    for d in sorted(dupes):
        bad("duplicate_id", f"region {d!r} declared more than once")
    zone_ids = [z.id for z in s.zones]
    for d in sorted({x for x in zone_ids if zone_ids.count(x) > 1}):
        bad("duplicate_id", f"zone {d!r} declared more than once")

    for r in s.regions:
        if not r.zones:
            bad("empty_zones", f"region {r.id!r} has no zones")
        if r.hydro_bio_power_cap < 0 or r.hydro_bio_annual_cap < 0:
            bad("negative_cap", f"region {r.id!r} has a negative hydro/bio cap")
        for z in r.zones:
            if z.hvac_connection_cost_rate is not None and z.hvac_connection_cost_rate < 0:
                bad("negative_cost", f"zone {z.id!r} has a negative HVAC connection cost")

    known = set(region_ids)
    demand_known = known | set(s.study_regions)
    link_ids = [ic.id for ic in s.interconnectors]
    for d in sorted({x for x in link_ids if link_ids.count(x) > 1}):
        bad("duplicate_id", f"interconnector {d!r} declared more than once")
    for ic in s.interconnectors:
        unknown = [x for x in (ic.from_region, ic.to_region) if x not in known]
        if unknown:
            bad("unknown_region", f"interconnector {ic.id!r} references undeclared region(s) {', '.join(unknown)}")
        if ic.from_region == ic.to_region:
            bad("self_loop", f"interconnector {ic.id!r} connects {ic.from_region!r} to itself")
        if not ic.length_km > 0:
            bad("bad_length", f"interconnector {ic.id!r} length must be positive")
        if not _frac(ic.reserve_fraction):
            bad("reserve_out_of_range", f"interconnector {ic.id!r} reserve_fraction outside [0, 1]")
        if ic.existing_gw < 0:
            bad("negative_cap", f"interconnector {ic.id!r} has negative existing capacity")

    c = s.costs
    for tech in TechnologyCosts.TECHNOLOGIES:
        tc = getattr(c, tech)
        for f in dataclasses.fields(tc):
            if f.name != "lifetime" and getattr(tc, f.name) < 0:
                bad("negative_cost", f"{tech}.{f.name} is negative")
        if tc.lifetime < 1:
            bad("bad_lifetime", f"{tech}.lifetime must be at least 1 year")
    if c.discount_rate_real < 0:
        bad("negative_cost", "discount_rate is negative")
    if c.hydro_bio_purchase_price < 0:
        bad("negative_cost", "hydro_bio_price is negative")
    if not _frac(c.hvac_storage_share):
        bad("share_out_of_range", "hvac_storage_share outside [0, 1]")

    f = s.flags
    if not _frac(f.ev_min_soc):
        bad("soc_out_of_range", f"ev_min_soc {f.ev_min_soc} outside [0, 1]")
    if not _frac(f.ev_flexible_share):
        bad("share_out_of_range", f"ev_flexible_share {f.ev_flexible_share} outside [0, 1]")
    if f.ev_lookahead_hours < 0.5:
        bad("bad_window", "ev_lookahead_hours must cover at least one interval")

    if not 0 < s.storage.round_trip_efficiency <= 1:
        bad("bad_efficiency", "storage round_trip_efficiency outside (0, 1]")
    if not _frac(s.storage.initial_soc):
        bad("soc_out_of_range", "storage initial_soc outside [0, 1]")
    if not 0 <= s.reliability_limit < 1:
        bad("bad_reliability_limit", "reliability_limit outside [0, 1)")
    if s.hydro_bio_pooled_cap is not None and s.hydro_bio_pooled_cap < 0:
        bad("negative_cap", "hydro_bio_pooled_cap is negative")

    for name, value in dataclasses.asdict(s.bounds).items():
        if value < 0:
            bad("bad_bounds", f"bounds.{name} is negative")

    spec = s.demand_spec
    for r in region_ids:
        if spec.base_demand and r not in spec.base_demand:
            bad("missing_demand", f"region {r!r} has no base demand trace")
    for r in spec.base_demand:
        if r not in demand_known:
            bad("unknown_region", f"demand.base references undeclared region {r}")
    for fl in spec.fleets:
        for name in ("charging_efficiency", "vampire_loss", "tnd_loss", "flexible_share"):
            if not _frac(getattr(fl, name)):
                bad("share_out_of_range", f"fleet {fl.name!r} {name} outside [0, 1]")
        if fl.count < 0 or fl.annual_km < 0 or fl.energy_intensity < 0 or fl.battery_kwh < 0 or fl.charger_kw < 0:
            bad("negative_value", f"fleet {fl.name!r} has a negative quantity")
        if fl.flexible_share > 0 and fl.charging_efficiency <= 0:
            bad("bad_efficiency", f"fleet {fl.name!r} is flexible but has zero charging efficiency")
    for h in spec.heating:
        if not h.cop > 0:
            bad("bad_cop", f"heating {h.name!r} cop must be positive")
        if not _frac(h.fuel_efficiency) or not _frac(h.tnd_loss):
            bad("share_out_of_range", f"heating {h.name!r} efficiency or loss outside [0, 1]")
        if h.fuel_energy_pj < 0:
            bad("negative_value", f"heating {h.name!r} fuel energy is negative")
    if spec.industry_power < 0:
        bad("negative_value", "industry_power is negative")
    for label, shares in (
        ("transport_shares", spec.transport_shares),
        ("heating_shares", spec.heating_shares),
        ("industry_shares", spec.industry_shares),
    ):
        if not shares:
            continue
        for r, v in shares.items():
            if r not in demand_known:
                bad("unknown_region", f"demand.{label} references undeclared region {r}")
            if not _frac(v):
                bad("share_out_of_range", f"demand.{label}[{r}] outside [0, 1]")
        if abs(sum(shares.values()) - 1.0) > 1e-6:
            bad("share_sum", f"demand.{label} must sum to 1 (got {sum(shares.values()):g})")
    for pid, prof in spec.profiles.items():
        if not isinstance(prof, str):
            if len(prof) == 0 or any(w < 0 for w in prof) or sum(prof) <= 0:
                bad("bad_weights", f"profile {pid!r} needs non-negative weights with positive sum")

    if f.interconnection_enabled and len(region_ids) > 1 and not dupes and not out:
        topo = build_topology(s)
        if not topo.is_connected():
            bad("disconnected", "interconnection is enabled but the region graph is not connected")
    return out


# --------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class Topology:
    """Regions and the interconnectors usable between them.

    ``links`` is sorted by interconnector id, which fixes every tie-break in
    flow balancing.
    """

    nodes: tuple
    links: tuple = ()

    def index(self, region_id) -> int:
        return self.nodes.index(region_id)

    @property
    def edge_count(self) -> int:
        return len(self.links)

    def adjacency(self) -> Mapping[str, list]:
        adj = {n: [] for n in self.nodes}
        for ic in self.links:
            adj[ic.from_region].append((ic.to_region, ic.id))
            adj[ic.to_region].append((ic.from_region, ic.id))
        return adj

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adj = self.adjacency()
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for nxt, _ in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(self.nodes)


def build_topology(s: Scenario) -> Topology:
    """Region graph; isolated nodes when interconnection is disabled."""
    nodes = tuple(r.id for r in s.regions)
    if not s.flags.interconnection_enabled:
        return Topology(nodes=nodes)
    known = set(nodes)
    links = tuple(sorted((ic for ic in s.interconnectors if ic.from_region in known and ic.to_region in known), key=lambda ic: ic.id))
    return Topology(nodes=nodes, links=links)


# --------------------------------------------------------------------------
# inputs


def load_scenario_traces(s: Scenario) -> TraceSet:
    """Read and align every trace file of ``s``.

    Columns used as PV or wind traces are validated as capacity factors;
    all others are read as power (GW).
    """
    if not s.trace_files:
        raise TraceError(f"scenario {s.id!r} lists no trace files")
    cf_ids = {z.pv_trace_id for z in s.zones} | {z.wind_trace_id for z in s.zones}
    series = []
    for path in s.trace_paths():
        if not path.exists():
            raise TraceError(f"{path}: trace file not found")
        columns = {c: ("cf" if c in cf_ids else "power") for c in csv_columns(path)}
        series.extend(load_trace_file(path, columns))
    return align(series)


def input_digest(s: Scenario) -> str:
    """SHA-256 over the rendered scenario and the bytes of its trace files."""
    h = hashlib.sha256(render_scenario(s).encode("utf-8"))
    for path in s.trace_paths():
        h.update(path.name.encode("utf-8"))
        h.update(path.read_bytes())
    return h.hexdigest()
