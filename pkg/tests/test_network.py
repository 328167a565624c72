import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridbalance.network import (
    balance_flows,
    hvac_connection_capital,
    hvac_connection_cost,
    interconnector_annual_cost,
    interconnector_capital,
    line_loss_rate,
)
from gridbalance.costs import capital_recovery_factor
from gridbalance.scenario import Interconnector, TechnologyCosts, Zone, build_topology

import helpers

COSTS = TechnologyCosts()


def test_loss_rate_values():
    assert line_loss_rate(1000) == 0.03
    assert line_loss_rate(2400) == pytest.approx(0.072)
    assert line_loss_rate(0) == 0.0


def test_loss_rate_cap_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert line_loss_rate(50_000) == 0.5
    assert "capped" in caplog.text


def topology(ids, links):
    return build_topology(helpers.scenario(ids, links))


def test_two_region_hand_example():
    topo = topology(("A", "B"), [("A", "B", 1000)])
    res = balance_flows({"A": 1.0, "B": -0.9}, topo, {"A-B": 2.0})
    (flow,) = res.flows
    assert flow.send_gw == pytest.approx(0.9 / 0.97, abs=1e-9)
    assert flow.send_gw == pytest.approx(0.9278, abs=1e-4)
    assert flow.receive_gw == pytest.approx(0.9, abs=1e-12)
    assert res.positions["B"] == 0.0
    assert res.positions["A"] == pytest.approx(1.0 - 0.9 / 0.97)


def test_zero_capacity_leaves_positions():
    topo = topology(("A", "B", "C"), [("A", "B", 500), ("B", "C", 500)])
    res = balance_flows({"A": 2.0, "B": -1.0, "C": 0.5}, topo, {})
    assert res.flows == [] and res.positions == {"A": 2.0, "B": -1.0, "C": 0.5}


def test_reverse_direction_flow():
    topo = topology(("A", "B"), [("A", "B", 1000)])
    res = balance_flows({"A": -1.0, "B": 3.0}, topo, {"A-B": 0.5})
    (flow,) = res.flows
    assert flow.direction == -1 and flow.send_gw == pytest.approx(0.5)
    assert res.positions["A"] == pytest.approx(-1.0 + 0.5 * 0.97)


def test_existing_capacity_is_usable():
    topo = topology(("A", "B"), [("A", "B", 1000, 0.4)])
    res = balance_flows({"A": 1.0, "B": -1.0}, topo, {})
    assert sum(f.send_gw for f in res.flows) == pytest.approx(0.4)


def lexicographic(unserved, loss):
    return (round(unserved, 9), loss)


def brute_force_two_region(surplus, deficit, cap, eff):
    """Best single-link transfer by successive grid refinement."""
    lo, hi = 0.0, min(surplus, cap)
    best = 0.0
    for _ in range(12):
        grid = np.linspace(lo, hi, 201)
        scores = [lexicographic(max(0.0, deficit - s * eff), s * (1 - eff)) for s in grid]
        k = min(range(len(grid)), key=lambda i: scores[i])
        best = grid[k]
        step = (hi - lo) / 200
        lo, hi = max(0.0, best - step), min(min(surplus, cap), best + step)
    return best


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(1, 5000))
def test_two_region_matches_brute_force(surplus, deficit, cap, km):
    topo = topology(("A", "B"), [("A", "B", km)])
    res = balance_flows({"A": surplus, "B": -deficit}, topo, {"A-B": cap})
    sent = sum(f.send_gw for f in res.flows)
    expected = brute_force_two_region(surplus, deficit, cap, 1 - line_loss_rate(km))
    assert sent == pytest.approx(expected, abs=1e-6)


def test_line_fills_middle_from_nearer_end():
    # A -- B -- C with B short of power; A is closer than C
    topo = topology(("A", "B", "C"), [("A", "B", 400), ("B", "C", 1500)])
    res = balance_flows({"A": 1.0, "B": -1.5, "C": 1.0}, topo, {"A-B": 2.0, "B-C": 2.0})
    by_link = {f.interconnector_id: f for f in res.flows}
    assert by_link["A-B"].send_gw == pytest.approx(1.0)
    assert by_link["A-B"].direction == 1 and by_link["B-C"].direction == -1
    assert res.positions["B"] == pytest.approx(0.0, abs=1e-12)


def brute_force_line(pos_a, pos_b, pos_c, eff_ab, eff_bc, cap_ab, cap_bc, step=0.001):
    """Enumerate both end transfers at ``step`` GW; lexicographic (unserved, loss) optimum."""
    best = None
    for s1 in np.arange(0.0, min(pos_a, cap_ab) + step / 2, step):
        for s2 in np.arange(0.0, min(pos_c, cap_bc) + step / 2, step):
            got = s1 * eff_ab + s2 * eff_bc
            unserved = max(0.0, -pos_b - got)
            loss = s1 * (1 - eff_ab) + s2 * (1 - eff_bc)
            score = (round(unserved / step), loss)
            if best is None or score < best[0]:
                best = (score, unserved, loss)
    return best[1], best[2]


@pytest.mark.parametrize(
    "pos,km,cap",
    [
        ((1.0, -1.5, 1.0), (400, 1500), (2.0, 2.0)),
        ((0.6, -1.2, 2.0), (2000, 300), (2.0, 0.5)),
        ((0.8, -0.5, 0.8), (1000, 1000), (1.0, 1.0)),
        ((1.5, -2.5, 1.5), (800, 900), (0.7, 2.0)),
    ],
)
def test_line_matches_brute_force(pos, km, cap):
    topo = topology(("A", "B", "C"), [("A", "B", km[0]), ("B", "C", km[1])])
    res = balance_flows(dict(zip("ABC", pos)), topo, {"A-B": cap[0], "B-C": cap[1]})
    unserved = max(0.0, -res.positions["B"])
    loss = sum(f.loss_gw for f in res.flows)
    e1, e2 = 1 - line_loss_rate(km[0]), 1 - line_loss_rate(km[1])
    bf_unserved, bf_loss = brute_force_line(*pos, e1, e2, *cap)
    assert unserved <= bf_unserved + 1e-3
    assert loss <= bf_loss + 1e-3 * max(1 - e1, 1 - e2) + 1e-9


regions4 = ("A", "B", "C", "D")
mesh = [("A", "B", 300), ("B", "C", 900), ("C", "D", 1200), ("A", "D", 2000), ("A", "C", 1500)]


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=4, max_size=4),
    st.lists(st.floats(0, 4), min_size=5, max_size=5),
)
def test_flow_invariants(positions, caps):
    topo = topology(regions4, mesh)
    capacities = {f"{a}-{b}": c for (a, b, _), c in zip(mesh, caps)}
    before = dict(zip(regions4, positions))
    res = balance_flows(before, topo, capacities)
    # conservation: net import equals the change of each position
    for r in regions4:
        assert res.net_import[r] == pytest.approx(res.positions[r] - before[r], abs=1e-9)
    # capacity and sign
    used = {}
    for f in res.flows:
        assert f.send_gw >= 0 and f.loss_gw >= -1e-15
        assert f.receive_gw == pytest.approx(f.send_gw - f.loss_gw, abs=1e-12)
        used[f.interconnector_id] = used.get(f.interconnector_id, 0.0) + f.send_gw
    for lid, total in used.items():
        assert total <= capacities[lid] + 1e-9
    # unserved never grows, surplus never turns into deficit
    assert sum(max(0.0, -v) for v in res.positions.values()) <= sum(max(0.0, -v) for v in before.values()) + 1e-9
    for r in regions4:
        if before[r] >= 0:
            assert res.positions[r] >= -1e-12
        else:
            assert res.positions[r] <= 1e-12


def test_flows_are_deterministic():
    topo = topology(regions4, mesh)
    caps = {f"{a}-{b}": 1.0 for a, b, _ in mesh}
    pos = {"A": 2.0, "B": -1.0, "C": 1.0, "D": -2.0}
    a = balance_flows(pos, topo, caps)
    b = balance_flows(pos, topo, caps)
    assert [(f.interconnector_id, f.send_gw) for f in a.flows] == [(f.interconnector_id, f.send_gw) for f in b.flows]


def overhead(km=1000.0, reserve=0.25, kind="overhead"):
    return Interconnector("L", "A", "B", km, kind=kind, reserve_fraction=reserve)


def test_overhead_capital_hand_value():
    assert interconnector_capital(overhead(), 1.0, COSTS) == pytest.approx((320 * 1000 + 160_000) * 1000 * 1.25)
    assert interconnector_capital(overhead(), 1.0, COSTS) == pytest.approx(600e6)


def test_overhead_annual_cost():
    expected = 600e6 * capital_recovery_factor(0.05, 50)
    assert interconnector_annual_cost(overhead(), 1.0, COSTS) == pytest.approx(expected)


def test_zero_capacity_costs_nothing():
    assert interconnector_annual_cost(overhead(), 0.0, COSTS) == 0.0


def test_submarine_capital():
    assert interconnector_capital(overhead(300, kind="submarine"), 0.5, COSTS) == pytest.approx(4000 * 500_000 * 1.25)
    assert interconnector_capital(overhead(300, kind="submarine"), 0.5, COSTS) == pytest.approx(2.5e9)


def test_hvac_capital_and_linearity():
    zone = Zone("Z", "A")
    assert hvac_connection_capital(zone, 1.0, COSTS) == pytest.approx(1.5e9)
    assert hvac_connection_cost(zone, 0.0, COSTS) == 0.0
    assert 2 * hvac_connection_cost(zone, 0.5, COSTS) == pytest.approx(hvac_connection_cost(zone, 1.0, COSTS))
    assert hvac_connection_cost(zone, 1.0, COSTS) == pytest.approx(1.5e9 * capital_recovery_factor(0.05, 50))


def test_zone_specific_hvac_rate():
    assert hvac_connection_capital(Zone("Z", "A", hvac_connection_cost_rate=500.0), 2.0, COSTS) == pytest.approx(1e9)
