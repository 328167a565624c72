"""Annualised costs and the LCOE = LCOG + LCOB decomposition.

Capacities arrive in GW/GWh, unit costs in $/kW, $/kWh and $/MWh, and
annual energies in MWh. Levelised results are $/MWh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .scenario import TechCost, TechnologyCosts

MWH_PER_KW_YEAR = 8.760
KW_PER_GW = 1e6
KWH_PER_GWH = 1e6


class CostError(ValueError):
    """Raised when a levelised cost is undefined (e.g. nothing delivered)."""


def capital_recovery_factor(rate: float, lifetime: float) -> float:
    """Annuity factor r(1+r)^n / ((1+r)^n - 1); 1/n at zero rate.

    >>> round(capital_recovery_factor(0.05, 25), 6)
    0.070952
    """
    if rate < 0:
        raise ValueError("discount rate must be non-negative")
    if lifetime < 1:
        raise ValueError("lifetime must be at least one year")
    if rate == 0:
        return 1.0 / lifetime
    growth = (1.0 + rate) ** lifetime
    return rate * growth / (growth - 1.0)


def technology_lcoe(tech: TechCost, capacity_factor: float, discount_rate: float = 0.05) -> float:
    """Stand-alone levelised cost of a generator running at ``capacity_factor``."""
    if not 0 < capacity_factor <= 1:
        raise CostError("capacity factor must be in (0, 1]")
    annual = tech.capital * capital_recovery_factor(discount_rate, tech.lifetime) + tech.fom
    return annual / (MWH_PER_KW_YEAR * capacity_factor) + tech.vom


def annualized_capital(tech: TechCost, rate: float, *, power_gw=0.0, energy_gwh=0.0) -> float:
    """Capital plus fixed O&M of one asset, $/yr (power-rated and energy-rated parts)."""
    capital = tech.capital * power_gw * KW_PER_GW + tech.capital_energy * energy_gwh * KWH_PER_GWH
    return capital * capital_recovery_factor(rate, tech.lifetime) + tech.fom * power_gw * KW_PER_GW


def hydro_bio_purchase_cost(energy_twh: float, price: float = 50.0) -> float:
    """Purchase cost of existing hydro and bio energy, $/yr."""
    if energy_twh < 0:
        raise ValueError("energy must be non-negative")
    return price * energy_twh * 1e6


@dataclass
class AnnualCosts:
    """Annualised fixed costs by asset class, $/yr (variable costs excluded)."""

    pv: float = 0.0
    wind: float = 0.0
    storage: float = 0.0
    hvdc: float = 0.0
    hvac: float = 0.0
    by_link: dict = field(default_factory=dict)

    @property
    def generation(self) -> float:
        return self.pv + self.wind

    @property
    def transmission(self) -> float:
        return self.hvdc + self.hvac

    @property
    def total(self) -> float:
        return self.generation + self.storage + self.transmission

    def scaled(self, k: float) -> "AnnualCosts":
        return AnnualCosts(
            self.pv * k, self.wind * k, self.storage * k, self.hvdc * k, self.hvac * k,
            {key: v * k for key, v in self.by_link.items()},
        )


def annualize_portfolio(portfolio, scenario) -> AnnualCosts:
    """Annualised capital and fixed O&M of every asset in ``portfolio``."""
    from .network import hvac_connection_cost, interconnector_annual_cost

    costs: TechnologyCosts = scenario.costs
    rate = costs.discount_rate_real
    out = AnnualCosts()
    for z in scenario.zones:
        pv = portfolio.pv_gw.get(z.id, 0.0)
        wind = portfolio.wind_gw.get(z.id, 0.0)
        out.pv += annualized_capital(costs.pv, rate, power_gw=pv)
        out.wind += annualized_capital(costs.wind, rate, power_gw=wind)
        out.hvac += hvac_connection_cost(z, pv + wind, costs)
    for r in scenario.regions:
        power = portfolio.storage_power_gw.get(r.id, 0.0)
        energy = portfolio.storage_energy_gwh.get(r.id, 0.0)
        out.storage += annualized_capital(costs.storage, rate, power_gw=power, energy_gwh=energy)
        if costs.hvac_storage_share:
            share = costs.hvac_storage_share * power
            out.hvac += share * KW_PER_GW * costs.hvac.capital * capital_recovery_factor(rate, costs.hvac.lifetime)
    for ic in scenario.interconnectors:
        cap = portfolio.link_capacity_gw.get(ic.id, 0.0)
        cost = interconnector_annual_cost(ic, cap, costs)
        out.by_link[ic.id] = cost
        out.hvdc += cost
    return out


@dataclass
class AnnualEnergy:
    """Mean annual energies in MWh/yr used for levelising."""

    delivered: float
    generated: float
    hydro_bio: float = 0.0
    pv: float = 0.0
    wind: float = 0.0
    spilled: float = 0.0
    losses: float = 0.0


@dataclass
class CostBreakdown:
    lcog: float
    lcob_storage: float
    lcob_transmission: float
    lcob_spill_loss: float
    lcoe: float
    annual: dict = field(default_factory=dict)

    @property
    def lcob(self) -> float:
        return self.lcob_storage + self.lcob_transmission + self.lcob_spill_loss

    def identity_residual(self) -> float:
        return self.lcoe - (self.lcog + self.lcob_storage + self.lcob_transmission + self.lcob_spill_loss)


def lcoe_breakdown(annual: AnnualCosts, energy: AnnualEnergy, costs: TechnologyCosts) -> CostBreakdown:
    """Split LCOE into generation, storage, transmission and spill/loss parts.

    LCOG levels generation costs (including wind VOM and hydro/bio purchase)
    over dispatched generation; the storage and transmission components level
    their annual costs over delivered energy; spill and loss is the residual.
    """
    if energy.delivered <= 0:
        raise CostError("zero delivered energy")
    vom = costs.wind.vom * energy.wind + costs.pv.vom * energy.pv
    purchase = costs.hydro_bio_purchase_price * energy.hydro_bio
    gen_cost = annual.generation + vom + purchase
    total = gen_cost + annual.storage + annual.transmission
    lcoe = total / energy.delivered
    lcog = gen_cost / energy.generated if energy.generated > 0 else 0.0
    lcob_storage = annual.storage / energy.delivered
    lcob_transmission = annual.transmission / energy.delivered
    lcob_spill = lcoe - lcog - lcob_storage - lcob_transmission
    # residual construction: recompute lcoe from the parts so the identity is exact
    lcoe = lcog + lcob_storage + lcob_transmission + lcob_spill
    return CostBreakdown(
        lcog=lcog,
        lcob_storage=lcob_storage,
        lcob_transmission=lcob_transmission,
        lcob_spill_loss=lcob_spill,
        lcoe=lcoe,
        annual={
            "pv": annual.pv,
            "wind": annual.wind,
            "storage": annual.storage,
            "hvdc": annual.hvdc,
            "hvac": annual.hvac,
            "vom": vom,
            "hydro_bio_purchase": purchase,
            "total": total,
        },
    )
