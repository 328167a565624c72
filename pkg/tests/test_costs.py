import dataclasses
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridbalance.costs import (
    AnnualCosts,
    AnnualEnergy,
    CostError,
    annualize_portfolio,
    capital_recovery_factor,
    hydro_bio_purchase_cost,
    lcoe_breakdown,
    technology_lcoe,
)
from gridbalance.dispatch import Portfolio
from gridbalance.scenario import TechCost, TechnologyCosts

import helpers

COSTS = TechnologyCosts()


def crf_oracle(r, n):
    # present value of an n-year unit annuity, inverted
    return 1.0 / sum((1 + r) ** -k for k in range(1, int(n) + 1))


def test_crf_values():
    assert capital_recovery_factor(0.05, 25) == pytest.approx(0.070952, abs=5e-7)
    assert capital_recovery_factor(0.0, 10) == 0.1
    assert capital_recovery_factor(0.05, 50) == pytest.approx(0.054777, abs=5e-7)


@given(st.floats(0.001, 0.3), st.integers(1, 80))
def test_crf_matches_annuity_sum(r, n):
    assert capital_recovery_factor(r, n) == pytest.approx(crf_oracle(r, n), rel=1e-9)


def test_crf_zero_rate_limit():
    for n in (5, 25, 50):
        assert capital_recovery_factor(1e-9, n) * n == pytest.approx(1.0, abs=1e-6)


def test_crf_rejects_bad_inputs():
    with pytest.raises(ValueError):
        capital_recovery_factor(-0.01, 10)
    with pytest.raises(ValueError):
        capital_recovery_factor(0.05, 0.5)


def test_pv_lcoe_anchor():
    assert technology_lcoe(COSTS.pv, 0.30) == pytest.approx((1600 * 0.0709525 + 18) / (8.76 * 0.30), rel=1e-5)
    assert technology_lcoe(COSTS.pv, 0.30) == pytest.approx(50.0, rel=0.01)


def test_wind_lcoe_hand_value():
    assert technology_lcoe(COSTS.wind, 0.41) == pytest.approx(48.6, abs=0.05)


def test_lcoe_constructed_identity():
    crf = capital_recovery_factor(0.05, 25)
    tech = TechCost(capital=8.760 / crf, lifetime=25)
    assert technology_lcoe(tech, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_lcoe_zero_cf():
    with pytest.raises(CostError):
        technology_lcoe(COSTS.pv, 0.0)


def test_storage_annual_cost_hand_value():
    s = helpers.scenario(("A",))
    p = Portfolio(storage_power_gw={"A": 1.0}, storage_energy_gwh={"A": 10.0})
    annual = annualize_portfolio(p, s)
    capital = 800 * 1e6 + 70 * 1e7
    assert capital == 1.5e9
    assert annual.storage == pytest.approx(capital * capital_recovery_factor(0.05, 50) + 10 * 1e6)
    assert annual.storage == pytest.approx(92.2e6, rel=1e-3)


def test_empty_portfolio_costs_nothing():
    s = helpers.scenario(("A", "B"), [("A", "B", 500)])
    annual = annualize_portfolio(Portfolio.empty(s), s)
    assert annual.total == 0 and annual.by_link == {"A-B": 0.0}


@given(st.floats(0, 20), st.floats(0, 20), st.floats(0, 5), st.floats(0, 5), st.floats(0, 10), st.floats(0.1, 4))
def test_annual_cost_is_linear(pv, wind, power, extra_hours, link, k):
    s = helpers.scenario(("A", "B"), [("A", "B", 700)])
    p = Portfolio({"A1": pv}, {"B1": wind}, {"A": power}, {"A": power * (0.5 + extra_hours)}, {"A-B": link})
    one = annualize_portfolio(p, s)
    scaled = annualize_portfolio(p.scaled(k), s)
    for name in ("pv", "wind", "storage", "hvdc", "hvac"):
        assert getattr(scaled, name) == pytest.approx(k * getattr(one, name), rel=1e-12, abs=1e-6)


def test_hvac_applies_to_generation_only_by_default():
    s = helpers.scenario(("A",))
    p = Portfolio({"A1": 1.0}, {"A1": 1.0}, {"A": 5.0}, {"A": 50.0})
    annual = annualize_portfolio(p, s)
    assert annual.hvac == pytest.approx(1500 * 2e6 * capital_recovery_factor(0.05, 50))
    s2 = s.replace(costs=dataclasses.replace(s.costs, hvac_storage_share=1.0))
    assert annualize_portfolio(p, s2).hvac == pytest.approx(1500 * 7e6 * capital_recovery_factor(0.05, 50))


def test_hydro_purchase_values():
    assert hydro_bio_purchase_cost(20.0) == pytest.approx(1.0e9)
    assert hydro_bio_purchase_cost(0.0) == 0.0
    assert hydro_bio_purchase_cost(1e-6) == pytest.approx(50.0)


def test_breakdown_lossless_system():
    annual = AnnualCosts(pv=50.0 * 1000.0)
    energy = AnnualEnergy(delivered=1000.0, generated=1000.0, pv=1000.0)
    bd = lcoe_breakdown(annual, energy, COSTS)
    assert bd.lcoe == pytest.approx(50.0) and bd.lcog == pytest.approx(50.0)
    assert bd.lcob_storage == 0 and bd.lcob_transmission == 0
    assert bd.lcob_spill_loss == pytest.approx(0.0, abs=1e-12)


def test_breakdown_spill_component():
    # generation costs 50 $/MWh; a tenth of the generated energy is spilled
    annual = AnnualCosts(pv=50.0 * 1000.0)
    energy = AnnualEnergy(delivered=900.0, generated=1000.0, pv=1000.0, spilled=100.0)
    bd = lcoe_breakdown(annual, energy, COSTS)
    assert bd.lcob_spill_loss == pytest.approx(50 / 0.9 - 50)
    assert bd.lcob_spill_loss == pytest.approx(5.6, abs=0.05)


def test_breakdown_zero_delivery():
    with pytest.raises(CostError):
        lcoe_breakdown(AnnualCosts(pv=1.0), AnnualEnergy(delivered=0.0, generated=0.0), COSTS)


def test_breakdown_charges_vom_and_purchase():
    energy = AnnualEnergy(delivered=100.0, generated=100.0, wind=60.0, hydro_bio=40.0)
    bd = lcoe_breakdown(AnnualCosts(), energy, COSTS)
    assert bd.annual["vom"] == pytest.approx(3.0 * 60)
    assert bd.annual["hydro_bio_purchase"] == pytest.approx(50.0 * 40)
    assert bd.lcoe == pytest.approx((180 + 2000) / 100)


costs_st = st.builds(AnnualCosts, *(st.floats(0, 1e10) for _ in range(5)))


@given(costs_st, st.floats(1.0, 1e8), st.floats(0.5, 1.5), st.floats(0, 1), st.floats(0, 1))
def test_breakdown_identity_is_exact(annual, delivered, gen_ratio, wind_share, hydro_share):
    generated = delivered * gen_ratio
    energy = AnnualEnergy(delivered=delivered, generated=generated, wind=generated * wind_share * (1 - hydro_share),
                          hydro_bio=generated * hydro_share)
    bd = lcoe_breakdown(annual, energy, COSTS)
    assert bd.lcoe == bd.lcog + bd.lcob_storage + bd.lcob_transmission + bd.lcob_spill_loss
    assert bd.identity_residual() == 0.0


@given(costs_st, st.floats(1.0, 1e8), st.floats(1.0, 10.0))
def test_lcoe_non_increasing_in_delivered_energy(annual, delivered, factor):
    small = lcoe_breakdown(annual, AnnualEnergy(delivered, delivered), COSTS).lcoe
    large = lcoe_breakdown(annual, AnnualEnergy(delivered * factor, delivered), COSTS).lcoe
    assert large <= small * (1 + 1e-12) or math.isclose(large, small)
