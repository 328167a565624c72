"""Lossy, capacitated inter-regional transport and transmission costing.

Links are treated as point-to-point pipes (no power-flow physics). A flow
of ``send`` GW into a link delivers ``send * (1 - loss_rate)`` at the far
end; the sending end is what the link capacity limits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._jit import jit
from .costs import KW_PER_GW, capital_recovery_factor
from .scenario import Interconnector, TechnologyCosts, Topology, Zone

logger = logging.getLogger(__name__)

LOSS_PER_1000_KM = 0.03
MAX_LOSS_RATE = 0.5
_EPS = 1e-12


def line_loss_rate(length_km: float) -> float:
    """Fractional loss of an HVDC link: 3% per 1,000 km, capped at 50%."""
    if length_km < 0:
        raise ValueError("length must be non-negative")
    rate = LOSS_PER_1000_KM * length_km / 1000.0
    if rate > MAX_LOSS_RATE:
        logger.warning("loss rate %.3f for %.0f km capped at %.2f", rate, length_km, MAX_LOSS_RATE)
        rate = MAX_LOSS_RATE
    return rate


@jit(refcount=False)
def _best_path_from(source, link_from, link_to, link_eff, cap_rem, best, pred):
    """Bellman-Ford for the most efficient (lowest-loss) path tree from ``source``.

    ``best[v]`` is the delivered fraction, ``pred[v]`` the signed link used
    to reach ``v`` (``+l+1`` along the link's direction, ``-l-1`` against).
    """
    n = best.shape[0]
    for v in range(n):
        best[v] = 0.0
        pred[v] = 0
    best[source] = 1.0
    for _ in range(n):
        changed = False
        for l in range(link_from.shape[0]):
            if cap_rem[l] <= _EPS:
                continue
            a = link_from[l]
            b = link_to[l]
            e = link_eff[l]
            if best[a] * e > best[b] + 1e-15:
                best[b] = best[a] * e
                pred[b] = l + 1
                changed = True
            if best[b] * e > best[a] + 1e-15:
                best[a] = best[b] * e
                pred[a] = -(l + 1)
                changed = True
        if not changed:
            break


@jit(refcount=False)
def _balance(pos, link_from, link_to, link_eff, cap_rem, sent_fwd, sent_bwd, loss, received, sent, best, pred, path):
    """Move surplus (pos > 0) toward deficit (pos < 0) in place.

    Repeatedly picks the surplus/deficit pair joined by the most efficient
    path with spare capacity and pushes as much as that path allows. Ties go
    to the lower region index and then the lower link index (links are
    pre-sorted by id). ``best``, ``pred`` and ``path`` are scratch arrays of
    one entry per region. Returns the number of pushes.
    """
    n = pos.shape[0]
    n_links = link_from.shape[0]
    if n_links == 0:
        return 0
    has_src = False
    has_dst = False
    for v in range(n):
        if pos[v] > _EPS:
            has_src = True
        elif pos[v] < -_EPS:
            has_dst = True
    if not (has_src and has_dst):
        return 0
    pushes = 0
    for _ in range(4 * (n + n_links) + 8):
        top = 0.0
        src = -1
        dst = -1
        for s in range(n):
            if pos[s] <= _EPS:
                continue
            _best_path_from(s, link_from, link_to, link_eff, cap_rem, best, pred)
            for t in range(n):
                if t != s and pos[t] < -_EPS and best[t] > top:
                    top = best[t]
                    src = s
                    dst = t
        if src < 0:
            break
        _best_path_from(src, link_from, link_to, link_eff, cap_rem, best, pred)
        # walk back from dst to src, then reverse into travel order
        k = 0
        v = dst
        while v != src:
            p = pred[v]
            path[k] = p
            k += 1
            l = abs(p) - 1
            v = link_from[l] if p > 0 else link_to[l]
        for i in range(k // 2):
            tmp = path[i]
            path[i] = path[k - 1 - i]
            path[k - 1 - i] = tmp
        amount = pos[src]
        limit = 1
        frac = 1.0
        for i in range(k):
            l = abs(path[i]) - 1
            cap_limit = cap_rem[l] / frac
            if cap_limit < amount:
                amount = cap_limit
                limit = 2
            frac *= link_eff[l]
        need = -pos[dst] / frac
        if need <= amount:
            amount = need
            limit = 3
        frac = 1.0
        for i in range(k):
            p = path[i]
            l = abs(p) - 1
            f = amount * frac
            cap_rem[l] -= f
            if cap_rem[l] < _EPS:
                cap_rem[l] = 0.0
            if p > 0:
                sent_fwd[l] += f
                a = link_from[l]
                b = link_to[l]
            else:
                sent_bwd[l] += f
                a = link_to[l]
                b = link_from[l]
            loss[l] += f * (1.0 - link_eff[l])
            sent[a] += f
            received[b] += f * link_eff[l]
            frac *= link_eff[l]
        pos[src] -= amount
        pos[dst] += amount * frac
        if limit == 1:
            pos[src] = 0.0
        elif limit == 3:
            pos[dst] = 0.0
        pushes += 1
    return pushes


@dataclass(frozen=True)
class LinkFlow:
    interconnector_id: str
    send_gw: float
    receive_gw: float
    loss_gw: float
    direction: int = 1  # +1 along from->to, -1 against


@dataclass
class FlowResult:
    flows: list
    positions: dict
    net_import: dict


def link_arrays(topology: Topology, capacities):
    """Index arrays (from, to, efficiency, capacity) for the topology's links."""
    index = {n: i for i, n in enumerate(topology.nodes)}
    link_from = np.array([index[ic.from_region] for ic in topology.links], dtype=np.int64)
    link_to = np.array([index[ic.to_region] for ic in topology.links], dtype=np.int64)
    eff = np.array([1.0 - line_loss_rate(ic.length_km) for ic in topology.links], dtype=float)
    cap = np.array([float(capacities.get(ic.id, 0.0)) + ic.existing_gw for ic in topology.links], dtype=float)
    return link_from, link_to, eff, cap


def balance_flows(positions, topology: Topology, capacities) -> FlowResult:
    """Transfer surplus to deficit regions over the lossy network.

    ``positions`` maps region -> GW (positive surplus, negative deficit);
    ``capacities`` maps interconnector id -> usable GW. Returns per-link
    flows, the updated positions and each region's net import.
    """
    nodes = topology.nodes
    pos = np.array([float(positions.get(n, 0.0)) for n in nodes])
    link_from, link_to, eff, cap = link_arrays(topology, capacities)
    n, m = len(nodes), len(topology.links)
    fwd, bwd, loss = np.zeros(m), np.zeros(m), np.zeros(m)
    received, sent = np.zeros(n), np.zeros(n)
    _balance(pos, link_from, link_to, eff, cap, fwd, bwd, loss, received, sent,
             np.empty(n), np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64))
    flows = []
    for i, ic in enumerate(topology.links):
        for amount, direction in ((fwd[i], 1), (bwd[i], -1)):
            if amount > 0:
                flows.append(LinkFlow(ic.id, amount, amount * eff[i], amount * (1 - eff[i]), direction))
    return FlowResult(
        flows=flows,
        positions={nodes[i]: float(pos[i]) for i in range(n)},
        net_import={nodes[i]: float(received[i] - sent[i]) for i in range(n)},
    )


def interconnector_annual_cost(spec: Interconnector, capacity_gw: float, costs: TechnologyCosts) -> float:
    """Annualised cost ($/yr) of ``capacity_gw`` of new HVDC capacity on ``spec``.

    The reserve fraction (N-1 redundancy) inflates the built capacity for
    costing only; transmission O&M is excluded.
    """
    if capacity_gw < 0:
        raise ValueError("capacity must be non-negative")
    capital = interconnector_capital(spec, capacity_gw, costs)
    tech = costs.hvdc_submarine if spec.kind == "submarine" else costs.hvdc_overhead
    return capital * capital_recovery_factor(costs.discount_rate_real, tech.lifetime)


def interconnector_capital(spec: Interconnector, capacity_gw: float, costs: TechnologyCosts) -> float:
    """Up-front capital ($) of an interconnector including reserve capacity."""
    mw = capacity_gw * 1000.0
    built = 1.0 + spec.reserve_fraction
    if spec.kind == "submarine":
        t = costs.hvdc_submarine
        per_mw = t.capital * 1000.0 + t.capital_per_mw + t.capital_per_mw_km * spec.length_km
    else:
        t = costs.hvdc_overhead
        per_mw = t.capital_per_mw_km * spec.length_km + t.capital_per_mw + t.capital * 1000.0
    return per_mw * mw * built


def hvac_connection_capital(zone: Zone, installed_gw: float, costs: TechnologyCosts) -> float:
    rate = zone.hvac_connection_cost_rate if zone.hvac_connection_cost_rate is not None else costs.hvac.capital
    return rate * installed_gw * KW_PER_GW


def hvac_connection_cost(zone: Zone, installed_gw: float, costs: TechnologyCosts) -> float:
    """Annualised HVAC spur cost ($/yr) connecting a zone's generation to its node."""
    if installed_gw < 0:
        raise ValueError("installed capacity must be non-negative")
    capital = hvac_connection_capital(zone, installed_gw, costs)
    return capital * capital_recovery_factor(costs.discount_rate_real, costs.hvac.lifetime)
