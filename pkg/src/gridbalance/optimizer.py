"""Differential Evolution capacity search and cost sensitivity sweeps."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .costs import CostBreakdown, CostError, annualize_portfolio, lcoe_breakdown
from .dispatch import DispatchResult, Portfolio, SystemInputs, prepare, reliability, simulate_prepared
from .scenario import Scenario, TechCost, build_topology
from .traces import TraceSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DEConfig:
    """Settings for DE/rand/1/bin. ``population`` 0 means ten per dimension."""

    lower: tuple
    upper: tuple
    population: int = 0
    generations: int = 100
    differential_weight: float = 0.8
    crossover_rate: float = 0.9
    seed: int = 0
    convergence_window: int = 25
    convergence_tol: float = 1e-7
    threads: int = 1
    max_evaluations: int | None = None

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper bounds differ in length")
        if any(hi < lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("upper bound below lower bound")
        if not 0 < self.differential_weight <= 2:
            raise ValueError("differential weight must be in (0, 2]")
        if not 0 <= self.crossover_rate <= 1:
            raise ValueError("crossover rate must be in [0, 1]")
        if self.population_size < 4:
            raise ValueError("population must be at least 4")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def population_size(self) -> int:
        return self.population if self.population > 0 else max(4, 10 * self.dimension)


@dataclass(frozen=True)
class Fitness:
    lcoe: float
    unserved_fraction: float
    penalty: float
    breakdown: CostBreakdown | None = field(default=None, compare=False)

    @property
    def total(self) -> float:
        return self.lcoe + self.penalty

    @property
    def feasible(self) -> bool:
        return self.penalty == 0.0


@dataclass
class DEResult:
    best_x: np.ndarray
    best: object
    history: list
    generations: int
    evaluations: int
    population: np.ndarray
    fitness: np.ndarray
    stagnated: bool = False
    converged: bool = False


def _total(value) -> float:
    return float(value.total if hasattr(value, "total") else value)


def reflect(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Fold out-of-bounds coordinates back into the box by mirror reflection."""
    width = upper - lower
    y = np.where(width > 0, np.mod(x - lower, 2 * np.where(width > 0, width, 1.0)), 0.0)
    y = np.where(y > width, 2 * width - y, y)
    return lower + y


def _save_checkpoint(path: Path, state: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(state), encoding="utf-8")
    os.replace(tmp, path)


def _load_checkpoint(path: Path, config: DEConfig) -> dict | None:
    if not path.exists():
        return None
    state = json.loads(path.read_text(encoding="utf-8"))
    pop = np.array(state["population"], dtype=float)
    if pop.shape != (config.population_size, config.dimension):
        raise ValueError(f"checkpoint {path} does not match the optimiser configuration")
    return state


def de_optimize(
    config: DEConfig,
    evaluate: Callable,
    repair: Callable | None = None,
    checkpoint: str | Path | None = None,
    progress: Callable | None = None,
) -> DEResult:
    """Minimise ``evaluate`` over the box with DE/rand/1/bin.

    ``evaluate`` maps a vector to a float or an object with ``.total``.
    Trial vectors are drawn sequentially from one seeded generator and then
    evaluated (possibly on several threads); selection runs in index order,
    so results do not depend on the thread count. ``repair`` may adjust a
    vector after bound handling (it must keep it inside the box).
    """
    lower = np.asarray(config.lower, dtype=float)
    upper = np.asarray(config.upper, dtype=float)
    n_pop, dim = config.population_size, config.dimension
    rng = np.random.default_rng(config.seed)
    fix = repair or (lambda v: v)
    ckpt = Path(checkpoint) if checkpoint else None

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None

    def run(batch):
        if pool is None:
            return [evaluate(v) for v in batch]
        return list(pool.map(evaluate, batch))

    state = _load_checkpoint(ckpt, config) if ckpt else None
    try:
        if state is not None:
            rng.bit_generator.state = state["rng_state"]
            pop = np.array(state["population"], dtype=float)
            results = run(list(pop))  # re-evaluate: deterministic, avoids storing rich fitness objects
            start_gen = state["generation"]
            history = list(state["history"])
            evaluations = state["evaluations"]
        else:
            pop = np.array([fix(v) for v in lower + rng.random((n_pop, dim)) * (upper - lower)])
            results = run(list(pop))
            start_gen = 0
            history = []
            evaluations = n_pop
        totals = np.array([_total(r) for r in results])
        if not history:
            history.append(float(totals.min()))

        stagnated = converged = False
        gen = start_gen
        while gen < config.generations:
            if config.max_evaluations is not None and evaluations + n_pop > config.max_evaluations:
                break
            if np.all(np.ptp(pop, axis=0) == 0.0):
                stagnated = True
                logger.info("population collapsed to one point at generation %d", gen)
                break
            trials = np.empty_like(pop)
            for i in range(n_pop):
                a, b, c = rng.choice(np.delete(np.arange(n_pop), i), 3, replace=False)
                mutant = pop[a] + config.differential_weight * (pop[b] - pop[c])
                cross = rng.random(dim) < config.crossover_rate
                cross[rng.integers(dim)] = True
                trial = np.where(cross, mutant, pop[i])
                trials[i] = fix(reflect(trial, lower, upper))
            trial_results = run(list(trials))
            evaluations += n_pop
            for i, res in enumerate(trial_results):
                t = _total(res)
                if t <= totals[i]:
                    pop[i] = trials[i]
                    totals[i] = t
                    results[i] = res
            gen += 1
            history.append(float(totals.min()))
            if progress:
                progress(gen, history[-1])
            if ckpt:
                _save_checkpoint(ckpt, {
                    "generation": gen,
                    "rng_state": rng.bit_generator.state,
                    "population": pop.tolist(),
                    "fitness": totals.tolist(),
                    "history": history,
                    "evaluations": evaluations,
                    "seed": config.seed,
                })
            w = config.convergence_window
            if w and len(history) > w and history[-w - 1] - history[-1] <= config.convergence_tol * max(1.0, abs(history[-1])):
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()

    best = int(np.argmin(totals))
    return DEResult(
        best_x=pop[best].copy(),
        best=results[best],
        history=history,
        generations=gen,
        evaluations=evaluations,
        population=pop,
        fitness=totals,
        stagnated=stagnated,
        converged=converged,
    )


# --------------------------------------------------------------------------
# portfolio evaluation


def portfolio_bounds(scenario: Scenario):
    """Lower and upper bounds in :meth:`Portfolio.layout` order.

    Zones without a trace and links that are not usable get an upper bound
    of zero.
    """
    b = scenario.bounds
    usable = {ic.id for ic in build_topology(scenario).links}
    zones = {z.id: z for z in scenario.zones}
    upper = []
    for f, key in Portfolio.layout(scenario):
        if f == "pv_gw":
            upper.append(b.pv_gw if zones[key].pv_trace_id else 0.0)
        elif f == "wind_gw":
            upper.append(b.wind_gw if zones[key].wind_trace_id else 0.0)
        elif f == "storage_power_gw":
            upper.append(b.storage_power_gw)
        elif f == "storage_energy_gwh":
            upper.append(b.storage_energy_gwh)
        else:
            upper.append(b.link_gw if key in usable else 0.0)
    return np.zeros(len(upper)), np.array(upper, dtype=float)


def storage_repair(scenario: Scenario, upper: np.ndarray) -> Callable:
    """Raise storage energy to at least one interval at full power."""
    layout = Portfolio.layout(scenario)
    power = [i for i, (f, _) in enumerate(layout) if f == "storage_power_gw"]
    energy = [i for i, (f, _) in enumerate(layout) if f == "storage_energy_gwh"]

    def fix(x):
        x = np.array(x, dtype=float)
        for p, e in zip(power, energy):
            if x[e] < 0.5 * x[p]:
                x[e] = min(0.5 * x[p], upper[e])
                x[p] = min(x[p], 2.0 * x[e])
        return x

    return fix


class Evaluator:
    """Callable fitness of decision vectors for one scenario and trace set."""

    def __init__(self, scenario: Scenario, traces: TraceSet | None = None, burn_in_years: int = 0, inputs: SystemInputs | None = None):
        self.scenario = scenario
        self.inputs = inputs if inputs is not None else prepare(scenario, traces)
        self.burn_in_years = burn_in_years

    def portfolio(self, x) -> Portfolio:
        return Portfolio.from_vector(self.scenario, x)

    def simulate(self, portfolio: Portfolio) -> DispatchResult:
        return simulate_prepared(self.inputs, portfolio, self.burn_in_years)

    def fitness(self, portfolio: Portfolio, dr: DispatchResult | None = None, scenario: Scenario | None = None) -> Fitness:
        s = scenario or self.scenario
        dr = dr if dr is not None else self.simulate(portfolio)
        rel = reliability(dr)
        annual = annualize_portfolio(portfolio, s)
        energy = dr.annual_energy()
        try:
            bd = lcoe_breakdown(annual, energy, s.costs)
            lcoe = bd.lcoe
        except CostError:
            bd = None
            lcoe = 0.0 if annual.total == 0 else math.inf
        excess = max(0.0, rel.overall - s.reliability_limit)
        return Fitness(lcoe=lcoe, unserved_fraction=rel.overall, penalty=s.optimizer.penalty_weight * excess, breakdown=bd)

    def __call__(self, x) -> Fitness:
        return self.fitness(self.portfolio(x))


def evaluate(portfolio: Portfolio, scenario: Scenario, traces: TraceSet, burn_in_years: int = 0) -> Fitness:
    """Simulate, levelise and score one portfolio."""
    return Evaluator(scenario, traces, burn_in_years)(portfolio.to_vector(scenario))


def de_config_for(scenario: Scenario, seed: int = 0, threads: int = 1, **overrides) -> DEConfig:
    lower, upper = portfolio_bounds(scenario)
    o = scenario.optimizer
    kw = dict(
        lower=tuple(lower),
        upper=tuple(upper),
        population=o.population,
        generations=o.generations,
        differential_weight=o.differential_weight,
        crossover_rate=o.crossover_rate,
        seed=seed,
        convergence_window=o.convergence_window,
        convergence_tol=o.convergence_tol,
        threads=threads,
    )
    kw.update(overrides)
    return DEConfig(**kw)


@dataclass
class Optimum:
    """Best portfolio found for a scenario, with the pieces used to report it."""

    scenario: Scenario
    portfolio: Portfolio
    fitness: Fitness
    history: list
    evaluations: int
    generations: int
    converged: bool = False
    stagnated: bool = False
    parts: dict = field(default_factory=dict)


def optimize_portfolio(
    scenario: Scenario,
    traces: TraceSet,
    seed: int = 0,
    threads: int = 1,
    checkpoint: str | Path | None = None,
    burn_in_years: int = 0,
    progress: Callable | None = None,
    independent_regions: bool | None = None,
    **overrides,
) -> Optimum:
    """Search for the cheapest portfolio meeting the reliability limit.

    Without interconnection a multi-region scenario splits into isolated
    sub-systems; by default each is optimised on its own (seeded from
    ``seed`` plus its index) and the results are merged.
    """
    split = independent_regions
    if split is None:
        split = not scenario.flags.interconnection_enabled and len(scenario.regions) > 1
    if split:
        return _optimize_regions(scenario, traces, seed, threads, checkpoint, burn_in_years, progress, **overrides)

    evaluator = Evaluator(scenario, traces, burn_in_years)
    config = de_config_for(scenario, seed, threads, **overrides)
    result = de_optimize(config, evaluator, storage_repair(scenario, np.asarray(config.upper)), checkpoint, progress)
    return Optimum(
        scenario=scenario,
        portfolio=evaluator.portfolio(result.best_x),
        fitness=result.best,
        history=result.history,
        evaluations=result.evaluations,
        generations=result.generations,
        converged=result.converged,
        stagnated=result.stagnated,
    )


def _optimize_regions(scenario, traces, seed, threads, checkpoint, burn_in_years, progress, **overrides) -> Optimum:
    merged = {f: {} for f in ("pv_gw", "wind_gw", "storage_power_gw", "storage_energy_gwh", "link_capacity_gw")}
    parts = {}
    histories = []
    evaluations = generations = 0
    converged = stagnated = True
    for k, rid in enumerate(scenario.region_ids):
        sub = scenario.single_region(rid)
        ck = f"{checkpoint}.{rid}" if checkpoint else None
        opt = optimize_portfolio(sub, traces, seed + k, threads, ck, burn_in_years, progress, independent_regions=False, **overrides)
        parts[rid] = opt
        for f in merged:
            merged[f].update(getattr(opt.portfolio, f))
        histories.append(opt.history)
        evaluations += opt.evaluations
        generations = max(generations, opt.generations)
        converged &= opt.converged
        stagnated &= opt.stagnated
    for ic in scenario.interconnectors:
        merged["link_capacity_gw"][ic.id] = 0.0
    portfolio = Portfolio(**merged)
    fitness = evaluate(portfolio, scenario, traces, burn_in_years)
    # the combined history is the sum of per-region best totals (weights unknown per generation)
    length = max(len(h) for h in histories)
    history = [float(sum(h[min(i, len(h) - 1)] for h in histories)) for i in range(length)]
    return Optimum(scenario, portfolio, fitness, history, evaluations, generations, converged, stagnated, parts)


# --------------------------------------------------------------------------
# sensitivity


SENSITIVITY_PARAMETERS = (
    "pv_capital",
    "wind_capital",
    "storage_capital",
    "hvdc_capital",
    "hvac_capital",
    "hydro_bio_price",
    "discount_rate",
)


def _scale_tech(t: TechCost, k: float) -> TechCost:
    return dataclasses.replace(
        t,
        capital=t.capital * k,
        capital_energy=t.capital_energy * k,
        capital_per_mw=t.capital_per_mw * k,
        capital_per_mw_km=t.capital_per_mw_km * k,
    )


def scale_parameter(scenario: Scenario, parameter: str, multiplier: float) -> Scenario:
    """Copy of ``scenario`` with one cost parameter multiplied."""
    c = scenario.costs
    if parameter == "pv_capital":
        c = dataclasses.replace(c, pv=_scale_tech(c.pv, multiplier))
    elif parameter == "wind_capital":
        c = dataclasses.replace(c, wind=_scale_tech(c.wind, multiplier))
    elif parameter == "storage_capital":
        c = dataclasses.replace(c, storage=_scale_tech(c.storage, multiplier))
    elif parameter == "hvdc_capital":
        c = dataclasses.replace(
            c,
            hvdc_overhead=_scale_tech(c.hvdc_overhead, multiplier),
            hvdc_submarine=_scale_tech(c.hvdc_submarine, multiplier),
        )
    elif parameter == "hvac_capital":
        c = dataclasses.replace(c, hvac=_scale_tech(c.hvac, multiplier))
    elif parameter == "hydro_bio_price":
        c = dataclasses.replace(c, hydro_bio_purchase_price=c.hydro_bio_purchase_price * multiplier)
    elif parameter == "discount_rate":
        c = dataclasses.replace(c, discount_rate_real=c.discount_rate_real * multiplier)
    else:
        raise ValueError(f"unknown sensitivity parameter {parameter!r}")
    return scenario.replace(costs=c)


@dataclass(frozen=True)
class SensitivityRow:
    parameter: str
    multiplier: float
    lcoe: float


def sensitivity_sweep(
    portfolio: Portfolio,
    scenario: Scenario,
    traces: TraceSet,
    parameters=SENSITIVITY_PARAMETERS,
    multipliers=(0.75, 1.0, 1.25),
    reoptimize: bool = False,
    seed: int = 0,
    threads: int = 1,
    burn_in_years: int = 0,
    **overrides,
) -> list:
    """LCOE with each parameter scaled in turn, in tornado order.

    With a fixed portfolio dispatch is independent of costs, so the system
    is simulated once and only re-levelised. Rows are grouped by parameter,
    widest LCOE swing first.
    """
    rows = []
    if not reoptimize:
        evaluator = Evaluator(scenario, traces, burn_in_years)
        dr = evaluator.simulate(portfolio)
    for p in parameters:
        for m in multipliers:
            s = scale_parameter(scenario, p, m)
            if reoptimize:
                lcoe = optimize_portfolio(s, traces, seed, threads, burn_in_years=burn_in_years, **overrides).fitness.lcoe
            else:
                lcoe = evaluator.fitness(portfolio, dr, s).lcoe
            rows.append(SensitivityRow(p, float(m), float(lcoe)))
    swing = {}
    for r in rows:
        lo, hi = swing.get(r.parameter, (math.inf, -math.inf))
        swing[r.parameter] = (min(lo, r.lcoe), max(hi, r.lcoe))
    order = sorted(swing, key=lambda p: (-(swing[p][1] - swing[p][0]), list(parameters).index(p)))
    return sorted(rows, key=lambda r: (order.index(r.parameter), r.multiplier))
