"""Run summaries (JSON) and plot-ready dispatch traces (CSV)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .costs import CostBreakdown, CostError, annualize_portfolio, lcoe_breakdown
from .dispatch import (
    COLUMN_NAMES,
    EV_CHARGE,
    HYDRO_BIO,
    INFLEXIBLE,
    NET_IMPORT,
    SPILL,
    STORAGE_CHARGE,
    STORAGE_DISCHARGE,
    UNSERVED,
    VRE_USED,
    DispatchError,
    DispatchResult,
    Portfolio,
    reliability,
)
from .scenario import Scenario

SIGNIFICANT_DIGITS = 6
SUMMARY_VERSION = 1

# per-region columns of the dispatch CSV, in order
DISPATCH_COLUMNS = (VRE_USED, STORAGE_CHARGE, STORAGE_DISCHARGE, HYDRO_BIO, EV_CHARGE, NET_IMPORT, SPILL, UNSERVED, INFLEXIBLE)


def sig(x, digits: int = SIGNIFICANT_DIGITS):
    """``x`` rounded to ``digits`` significant digits; non-finite floats become None."""
    if x is None or isinstance(x, bool):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if not math.isfinite(x):
        return None
    if x == 0:
        return 0.0
    return float(f"{x:.{digits - 1}e}")


def _canonical(value):
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, (float, int, np.floating, np.integer)) and not isinstance(value, bool):
        return sig(value)
    return value


@dataclass
class RunSummary:
    """Everything reported about one portfolio on one scenario.

    Numbers are held already rounded to six significant digits so a summary
    survives a write/read cycle unchanged. ``runtime_s`` is kept in memory
    only; files always carry null so that reruns are byte-identical.
    """

    scenario_id: str
    seed: int | None
    input_digest: str
    portfolio: dict
    breakdown: dict
    annual_costs: dict
    storage: dict
    reliability: dict
    generation_mix: dict
    energy_twh: dict
    optimizer: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)
    runtime_s: float | None = None

    def __post_init__(self):
        for f in fields(self):
            if f.name not in ("scenario_id", "input_digest", "runtime_s"):
                setattr(self, f.name, _canonical(getattr(self, f.name)))

    @property
    def lcoe(self):
        return self.breakdown["lcoe"]

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {"summary_version": SUMMARY_VERSION}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        if not include_runtime:
            out["runtime_s"] = None
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunSummary":
        data = dict(data)
        version = data.pop("summary_version", SUMMARY_VERSION)
        if version != SUMMARY_VERSION:
            raise ValueError(f"unsupported summary version {version}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown summary fields {sorted(unknown)}")
        return cls(**data)


def _breakdown_dict(bd: CostBreakdown | None) -> dict:
    if bd is None:
        parts = dict(lcoe=0.0, lcog=0.0, lcob_storage=0.0, lcob_transmission=0.0, lcob_spill_loss=0.0)
    else:
        parts = dict(
            lcoe=bd.lcoe,
            lcog=bd.lcog,
            lcob_storage=bd.lcob_storage,
            lcob_transmission=bd.lcob_transmission,
            lcob_spill_loss=bd.lcob_spill_loss,
        )
    components = parts["lcog"] + parts["lcob_storage"] + parts["lcob_transmission"] + parts["lcob_spill_loss"]
    parts["lcob"] = components - parts["lcog"]
    # the identity check travels with the file: parts must sum back to lcoe
    parts["identity"] = {"components_sum": components, "residual": parts["lcoe"] - components}
    return parts


def summarize(
    scenario: Scenario,
    portfolio: Portfolio,
    dr: DispatchResult,
    *,
    seed: int | None = None,
    input_digest: str = "",
    optimum=None,
    runtime_s: float | None = None,
) -> RunSummary:
    """Build the summary of ``portfolio`` from its dispatch result."""
    rel = reliability(dr)
    annual = annualize_portfolio(portfolio, scenario)
    energy = dr.annual_energy()
    try:
        bd = lcoe_breakdown(annual, energy, scenario.costs)
        annual_costs = dict(bd.annual)
    except CostError:
        bd = None
        annual_costs = dict(pv=annual.pv, wind=annual.wind, storage=annual.storage, hvdc=annual.hvdc,
                            hvac=annual.hvac, vom=0.0, hydro_bio_purchase=0.0, total=annual.total)
    generated = energy.generated
    mix = {
        name: (value / generated if generated > 0 else 0.0)
        for name, value in (("pv", energy.pv), ("wind", energy.wind), ("hydro_bio", energy.hydro_bio))
    }
    peak = dr.peak_storage()
    storage = {
        "power_gw": sum(portfolio.storage_power_gw.values()),
        "energy_gwh": sum(portfolio.storage_energy_gwh.values()),
        "peak_discharge_gw": peak["discharge_gw"],
        "energy_swing_gwh": peak["energy_swing_gwh"],
    }
    opt_info, parts = {}, {}
    if optimum is not None:
        opt_info = {
            "evaluations": optimum.evaluations,
            "generations": optimum.generations,
            "converged": bool(optimum.converged),
            "stagnated": bool(optimum.stagnated),
            "best_fitness": optimum.history[-1] if optimum.history else None,
        }
        for rid, sub in optimum.parts.items():
            parts[rid] = {
                "lcoe": sub.fitness.lcoe,
                "unserved_fraction": sub.fitness.unserved_fraction,
                "storage_energy_gwh": sum(sub.portfolio.storage_energy_gwh.values()),
            }
    return RunSummary(
        scenario_id=scenario.id,
        seed=seed,
        input_digest=input_digest,
        portfolio=portfolio.to_dict(),
        breakdown=_breakdown_dict(bd),
        annual_costs=annual_costs,
        storage=storage,
        reliability={
            "unserved_fraction": rel.overall,
            "limit": scenario.reliability_limit,
            "worst_interval_gw": rel.worst_interval_gw,
            "unserved_gwh": rel.unserved_gwh,
            "by_year": rel.by_year,
        },
        generation_mix=mix,
        energy_twh={
            "delivered": energy.delivered / 1e6,
            "generated": energy.generated / 1e6,
            "spilled": energy.spilled / 1e6,
            "losses": energy.losses / 1e6,
        },
        optimizer=opt_info,
        parts=parts,
        runtime_s=runtime_s,
    )


def summary_json(rs: RunSummary) -> str:
    return json.dumps(rs.to_dict(), indent=2, allow_nan=False) + "\n"


def write_summary(rs: RunSummary, path) -> None:
    """Write ``rs`` as JSON with a fixed key order and rounded numbers."""
    Path(path).write_text(summary_json(rs), encoding="utf-8")


def read_summary(path) -> RunSummary:
    return RunSummary.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# dispatch traces


def _window_bounds(window, horizon: int):
    if window is None:
        return 0, horizon
    if isinstance(window, slice):
        start, stop, step = window.indices(horizon)
        if step != 1:
            raise DispatchError("dispatch window must be contiguous")
    else:
        start, stop = window
    if not 0 <= start < stop <= horizon:
        raise DispatchError(f"window {start}:{stop} outside horizon 0:{horizon}")
    return int(start), int(stop)


def dispatch_header(regions) -> list:
    return ["timestamp"] + [f"{r}:{COLUMN_NAMES[c]}" for r in regions for c in DISPATCH_COLUMNS]


def write_dispatch_csv(dr: DispatchResult, window, path) -> int:
    """Write one row per interval of ``window`` (start, stop) and return the row count.

    Each row carries the timestamp then, per region, VRE used, storage
    charge and discharge, hydro/bio, EV charge, net import, spill, unserved
    and inflexible demand, all in GW.
    """
    start, stop = _window_bounds(window, dr.horizon)
    block = dr.values[start:stop][:, :, list(DISPATCH_COLUMNS)].reshape(stop - start, -1)
    stamps = dr.timestamps[start:stop].astype("datetime64[m]").astype(str)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(dispatch_header(dr.regions))
        for stamp, row in zip(stamps, block):
            w.writerow([stamp] + [repr(float(v)) for v in row])
    return stop - start


def verify_dispatch_csv(path) -> tuple:
    """Largest per-region balance residual (GW) in a dispatch CSV, and the row count."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty dispatch file")
    header, body = rows[0], rows[1:]
    width = len(DISPATCH_COLUMNS)
    if header[0] != "timestamp" or (len(header) - 1) % width:
        raise ValueError(f"{path}: not a dispatch trace")
    if not body:
        return 0.0, 0
    values = np.array([[float(x) for x in r[1:]] for r in body]).reshape(len(body), -1, width)
    col = {c: i for i, c in enumerate(DISPATCH_COLUMNS)}
    residual = (
        values[..., col[VRE_USED]] + values[..., col[STORAGE_DISCHARGE]] + values[..., col[HYDRO_BIO]]
        + values[..., col[NET_IMPORT]] - values[..., col[STORAGE_CHARGE]] - values[..., col[EV_CHARGE]]
        - values[..., col[INFLEXIBLE]] + values[..., col[UNSERVED]]
    )
    return float(np.abs(residual).max()), len(body)


def format_report(rs: RunSummary) -> str:
    """Plain-text rendering of a summary."""
    b = rs.breakdown

    def num(x):
        return "n/a" if x is None else f"{x:.4g}"

    lines = [
        f"scenario          {rs.scenario_id}",
        f"seed              {rs.seed}",
        f"LCOE   $/MWh      {num(b['lcoe'])}",
        f"  LCOG            {num(b['lcog'])}",
        f"  storage         {num(b['lcob_storage'])}",
        f"  transmission    {num(b['lcob_transmission'])}",
        f"  spill and loss  {num(b['lcob_spill_loss'])}",
        f"storage           {num(rs.storage['power_gw'])} GW / {num(rs.storage['energy_gwh'])} GWh",
        f"unserved share    {num(rs.reliability['unserved_fraction'])} (limit {num(rs.reliability['limit'])})",
        "generation mix    " + ", ".join(f"{k} {100 * v:.1f}%" for k, v in rs.generation_mix.items() if v is not None),
    ]
    for field_name, values in rs.portfolio.items():
        if values:
            lines.append(f"{field_name:<20}" + ", ".join(f"{k} {num(v)}" for k, v in values.items()))
    for rid, part in rs.parts.items():
        lines.append(f"region {rid:<13}LCOE {num(part['lcoe'])}, storage {num(part['storage_energy_gwh'])} GWh")
    return "\n".join(lines) + "\n"


__all__ = [
    "RunSummary",
    "summarize",
    "summary_json",
    "write_summary",
    "read_summary",
    "write_dispatch_csv",
    "verify_dispatch_csv",
    "format_report",
    "sig",
]
