"""NSGA-II sizing with a surrogate or the MNA oracle as simulator.

Equality targets become objectives (weighted absolute error, phase errors
taken on the circle); inequality targets become constraints whose
violation is the distance to the feasible side.  Genomes live in [0, 1]^n
and are decoded through each parameter's declared scale.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import netlist as nl
from . import pipeline as pl
from .poi import POI_NAMES, poi_from_s, wrap_phase
from .twoport import TwoPortError, mna_two_port

log = logging.getLogger(__name__)

GOALS = ("eq", "lt", "gt")
PHASE_POIS = ("insertion_phase_deg",)


class SizingError(Exception):
    pass


# --- problem definition -----------------------------------------------------------

@dataclass(frozen=True)
class Target:
    """One requirement.  ``state`` sets independent switches for this target;
    ``tol`` is the pass band of an equality goal in the PoI's own units."""
    poi: str
    frequency: float
    goal: str
    value: float
    weight: float = 1.0
    tol: float = 1.0
    state: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.poi not in POI_NAMES:
            raise SizingError(f"unknown PoI {self.poi!r}")
        if self.goal not in GOALS:
            raise SizingError(f"goal must be one of {GOALS}, got {self.goal!r}")
        if self.weight <= 0 or self.tol < 0 or self.frequency <= 0:
            raise SizingError("weight and frequency must be positive, tol non-negative")

    def error(self, v: float) -> float:
        """Signed distance from the goal value (wrapped for phases)."""
        d = v - self.value
        return wrap_phase(d) if self.poi in PHASE_POIS else d

    def violation(self, v: float) -> float:
        if math.isnan(v):
            return math.inf
        if self.goal == "lt":
            return max(0.0, v - self.value)
        if self.goal == "gt":
            return max(0.0, self.value - v)
        return 0.0

    def satisfied(self, v: float) -> bool:
        if self.goal == "eq":
            return math.isfinite(v) and abs(self.error(v)) <= self.tol
        return self.violation(v) == 0.0

    def state_key(self) -> tuple:
        return tuple(sorted((k, float(v)) for k, v in self.state.items()))


@dataclass(frozen=True)
class Nsga2Config:
    population: int = 30
    generations: int = 30
    crossover_prob: float = 0.9
    mutation_prob: float | None = None     # None means 1 / genome length
    sbx_eta: float = 15.0
    pm_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise SizingError("population must be even and at least 2")
        if self.generations < 0:
            raise SizingError("generations must be non-negative")
        for p in (self.crossover_prob, self.mutation_prob):
            if p is not None and not 0.0 <= p <= 1.0:
                raise SizingError("probabilities must lie in [0, 1]")
        if self.sbx_eta < 0 or self.pm_eta < 0:
            raise SizingError("distribution indices must be non-negative")


@dataclass
class Individual:
    genome: np.ndarray
    objectives: np.ndarray
    violation: float
    values: dict = field(default_factory=dict)   # PoI per target index
    rank: int = 0
    crowding: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.violation == 0.0


class SizingProblem:
    """Netlist + design parameters + targets + simulator."""

    def __init__(self, net: nl.Netlist, targets: Sequence[Target], simulator,
                 ranges: dict | None = None):
        if not targets:
            raise SizingError("need at least one target")
        self.net = net
        self.params = nl.enumerate_parameters(net, ranges)
        if not self.params:
            raise SizingError(f"{net.name} has no sizable parameters")
        self.targets = list(targets)
        masters = set(pl.master_switches(net))
        for t in self.targets:
            unknown = set(t.state) - masters
            if unknown:
                raise SizingError(f"target state names unknown switches {sorted(unknown)}")
        self.simulator = simulator
        simulator.check(self.targets)
        self.objective_targets = [i for i, t in enumerate(self.targets) if t.goal == "eq"]

    @property
    def n_var(self) -> int:
        return len(self.params)

    @property
    def n_obj(self) -> int:
        return max(1, len(self.objective_targets))

    def decode(self, genome) -> dict:
        return {p.name: p.decode(float(np.clip(u, 0.0, 1.0))) for p, u in zip(self.params, genome)}

    def encode(self, values: dict) -> np.ndarray:
        return np.array([p.encode(values[p.name]) for p in self.params])

    def simulate(self, genomes) -> np.ndarray:
        """PoI value per (genome, target); nan where the simulator failed."""
        sizings = [self.decode(g) for g in genomes]
        out = np.full((len(sizings), len(self.targets)), np.nan)
        groups: dict = {}
        for k, t in enumerate(self.targets):
            groups.setdefault((t.state_key(), t.frequency), []).append(k)
        for (state, f), ks in groups.items():
            rows = [{**v, **dict(state)} for v in sizings]
            res = self.simulator.evaluate(self.net, rows, f, [self.targets[k].poi for k in ks])
            out[:, ks] = res
        return out

    def score(self, sim_row) -> tuple[np.ndarray, float]:
        if self.objective_targets:
            obj = np.array([self.targets[k].weight * abs(self.targets[k].error(sim_row[k]))
                            for k in self.objective_targets])
        else:
            obj = np.zeros(1)
        viol = sum(t.weight * t.violation(v) for t, v in zip(self.targets, sim_row))
        obj = np.where(np.isfinite(obj), obj, math.inf)
        return obj, float(viol)

    def scalar_error(self, ind: Individual) -> float:
        return float(np.sum(ind.objectives))


# --- simulators -----------------------------------------------------------------------

class OracleSimulator:
    """MNA on the flattened instance; counts solved instances."""

    name = "oracle"

    def __init__(self, z0: float = 50.0):
        self.z0 = z0
        self.calls = 0

    def check(self, targets):
        pass

    def evaluate(self, net, rows, f, pois) -> np.ndarray:
        out = np.full((len(rows), len(pois)), np.nan)
        for i, values in enumerate(rows):
            self.calls += 1
            try:
                p = poi_from_s(mna_two_port(net.with_values(values).subcircuit(), f, self.z0))
            except TwoPortError as exc:
                log.warning("oracle failed for %s: %s", values, exc)
                continue
            out[i] = [p[name] for name in pois]
        return out


class SurrogateSimulator:
    """Composed sub-models + main models; one main model per frequency."""

    name = "surrogate"

    def __init__(self, subs, mains):
        self.lib = pl.library(subs)
        self.mains = list(mains)
        self.calls = 0
        self._composed: dict = {}

    def _main_for(self, f: float, poi: str):
        for m in self.mains:
            mf = m.meta.get("frequency")
            if mf is not None and math.isclose(mf, f, rel_tol=1e-9) and poi in m.meta.get("pois", ()):
                return m
        return None

    def check(self, targets):
        missing = [(t.poi, t.frequency) for t in targets if self._main_for(t.frequency, t.poi) is None]
        if missing:
            raise SizingError(f"no main model covers {missing}; train one per target frequency")

    def evaluate(self, net, rows, f, pois) -> np.ndarray:
        out = np.empty((len(rows), len(pois)))
        for j, poi in enumerate(pois):
            main = self._main_for(f, poi)
            key = (id(main), nl.circuit_key(net))
            if key not in self._composed:
                self._composed[key] = pl.compose_for(net, self.lib, main)
            cm = self._composed[key]
            self.calls += len(rows)
            pred = pl.predict_instances(cm, net, rows)
            out[:, j] = pred[:, main.meta["pois"].index(poi)]
        return out


# --- NSGA-II operators --------------------------------------------------------------------

def constrained_dominates(oa, va, ob, vb) -> bool:
    """Deb's constraint-domination of a over b."""
    if va == 0.0 and vb > 0.0:
        return True
    if va > 0.0 and vb > 0.0:
        return va < vb
    if va > 0.0:
        return False
    oa, ob = np.asarray(oa), np.asarray(ob)
    return bool(np.all(oa <= ob) and np.any(oa < ob))


def fast_nondominated_sort(objectives, violations=None) -> list[list[int]]:
    """Fronts of indices, best first."""
    objectives = np.asarray(objectives, dtype=float)
    n = len(objectives)
    violations = np.zeros(n) if violations is None else np.asarray(violations, dtype=float)
    dominated_by = [[] for _ in range(n)]
    counts = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(i + 1, n):
            if constrained_dominates(objectives[i], violations[i], objectives[j], violations[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif constrained_dominates(objectives[j], violations[j], objectives[i], violations[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = [[i for i in range(n) if counts[i] == 0]]
    while fronts[-1]:
        nxt = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        fronts.append(sorted(nxt))
    return fronts[:-1]


def crowding_distance(objectives) -> np.ndarray:
    objectives = np.asarray(objectives, dtype=float)
    n = len(objectives)
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, math.inf)
    for m in range(objectives.shape[1]):
        col = objectives[:, m]
        order = np.argsort(col, kind="stable")
        dist[order[0]] = dist[order[-1]] = math.inf
        lo, hi = col[order[0]], col[order[-1]]
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            continue
        for k in range(1, n - 1):
            dist[order[k]] += (col[order[k + 1]] - col[order[k - 1]]) / (hi - lo)
    return dist


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sbx_crossover(p1, p2, eta: float, seed_or_rng=None, prob: float = 1.0):
    """Bounded simulated binary crossover on [0, 1]."""
    rng = _rng(seed_or_rng)
    c1, c2 = np.array(p1, dtype=float), np.array(p2, dtype=float)
    if rng.random() > prob:
        return c1, c2
    for i in range(len(c1)):
        if rng.random() > 0.5 or abs(c1[i] - c2[i]) < 1e-14:
            continue
        y1, y2 = min(c1[i], c2[i]), max(c1[i], c2[i])
        u = rng.random()
        kids = []
        for beta in (1.0 + 2.0 * y1 / (y2 - y1), 1.0 + 2.0 * (1.0 - y2) / (y2 - y1)):
            alpha = 2.0 - beta ** -(eta + 1.0)
            if u <= 1.0 / alpha:
                bq = (u * alpha) ** (1.0 / (eta + 1.0))
            else:
                bq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
            kids.append(bq)
        lo = 0.5 * ((y1 + y2) - kids[0] * (y2 - y1))
        hi = 0.5 * ((y1 + y2) + kids[1] * (y2 - y1))
        lo, hi = min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0)
        if c1[i] <= c2[i]:
            c1[i], c2[i] = lo, hi
        else:
            c1[i], c2[i] = hi, lo
    return c1, c2


def polynomial_mutation(genome, eta: float, prob: float, seed_or_rng=None) -> np.ndarray:
    """Bounded polynomial mutation on [0, 1]."""
    rng = _rng(seed_or_rng)
    g = np.array(genome, dtype=float)
    for i in range(len(g)):
        if rng.random() >= prob:
            continue
        y = g[i]
        d1, d2 = y, 1.0 - y
        u = rng.random()
        mpow = 1.0 / (eta + 1.0)
        if u < 0.5:
            val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
            dq = val ** mpow - 1.0
        else:
            val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
            dq = 1.0 - val ** mpow
        g[i] = min(max(y + dq, 0.0), 1.0)
    return g


def tournament(pop: Sequence[Individual], rng: np.random.Generator) -> Individual:
    """Binary tournament on (rank, crowding); ties broken by coin flip."""
    a, b = rng.choice(len(pop), size=2, replace=False) if len(pop) > 1 else (0, 0)
    x, y = pop[a], pop[b]
    if x.rank != y.rank:
        return x if x.rank < y.rank else y
    if x.crowding != y.crowding:
        return x if x.crowding > y.crowding else y
    return x if rng.random() < 0.5 else y


# --- evolution ------------------------------------------------------------------------------

@dataclass
class EvolveResult:
    population: list
    front: list
    history: list          # per-generation dicts
    evaluations: int
    seconds: float
    config: Nsga2Config

    def best(self, problem: SizingProblem) -> Individual:
        return min(self.population, key=lambda i: (i.violation, problem.scalar_error(i)))


def _evaluate(problem: SizingProblem, genomes) -> list[Individual]:
    sim = problem.simulate(genomes)
    out = []
    for g, row in zip(genomes, sim):
        if np.any(np.isnan(row)):
            log.warning("simulator failed for genome %s; assigning worst objectives", g)
            obj, viol = np.full(problem.n_obj, math.inf), math.inf
        else:
            obj, viol = problem.score(row)
        out.append(Individual(np.asarray(g, dtype=float), obj, viol,
                              {k: float(v) for k, v in enumerate(row)}))
    return out


def _rank(pop: list[Individual]) -> list[list[int]]:
    fronts = fast_nondominated_sort([p.objectives for p in pop], [p.violation for p in pop])
    for r, fr in enumerate(fronts):
        cd = crowding_distance([pop[i].objectives for i in fr])
        for i, d in zip(fr, cd):
            pop[i].rank, pop[i].crowding = r, float(d)
    return fronts


def _elite_index(pop, problem) -> int:
    return min(range(len(pop)), key=lambda i: (pop[i].violation, problem.scalar_error(pop[i])))


def _survive(pop: list[Individual], size: int, problem: SizingProblem) -> list[Individual]:
    fronts = _rank(pop)
    elite = _elite_index(pop, problem)
    pop[elite].crowding = math.inf    # never truncate the best scalarized individual
    chosen = []
    for fr in fronts:
        if len(chosen) + len(fr) <= size:
            chosen += fr
        else:
            rest = sorted(fr, key=lambda i: (-pop[i].crowding, i))
            chosen += rest[:size - len(chosen)]
            break
    survivors = [pop[i] for i in chosen]
    _rank(survivors)
    return survivors


def _stats(gen: int, pop: list[Individual], problem: SizingProblem, evaluations: int) -> dict:
    best = pop[_elite_index(pop, problem)]
    return {"generation": gen, "evaluations": evaluations,
            "feasible": sum(p.feasible for p in pop),
            "front_size": sum(p.rank == 0 for p in pop),
            "best_violation": best.violation, "best_error": problem.scalar_error(best)}


def evolve(problem: SizingProblem, cfg: Nsga2Config = Nsga2Config()) -> EvolveResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    pm = cfg.mutation_prob if cfg.mutation_prob is not None else 1.0 / problem.n_var
    pop = _evaluate(problem, rng.random((cfg.population, problem.n_var)))
    evaluations = len(pop)
    pop = _survive(pop, cfg.population, problem)
    history = [_stats(0, pop, problem, evaluations)]
    for gen in range(1, cfg.generations + 1):
        kids = []
        while len(kids) < cfg.population:
            a, b = tournament(pop, rng), tournament(pop, rng)
            c1, c2 = sbx_crossover(a.genome, b.genome, cfg.sbx_eta, rng, cfg.crossover_prob)
            kids.append(polynomial_mutation(c1, cfg.pm_eta, pm, rng))
            kids.append(polynomial_mutation(c2, cfg.pm_eta, pm, rng))
        children = _evaluate(problem, kids)
        evaluations += len(children)
        pop = _survive(pop + children, cfg.population, problem)
        history.append(_stats(gen, pop, problem, evaluations))
    front = [p for p in pop if p.rank == 0]
    return EvolveResult(pop, front, history, evaluations, time.perf_counter() - t0, cfg)


# --- verification ------------------------------------------------------------------------------

@dataclass
class TargetCheck:
    poi: str
    frequency: float
    goal: str
    value: float
    state: dict
    predicted: float
    verified: float
    predicted_ok: bool
    verified_ok: bool

    @property
    def gap(self) -> float:
        return self.verified - self.predicted


@dataclass
class VerifyReport:
    values: dict
    checks: list
    status: str            # pass | surrogate-optimism | fail

    @property
    def oracle_error(self) -> float:
        return sum(abs(wrap_phase(c.verified - c.value)) if c.poi in PHASE_POIS
                   else abs(c.verified - c.value)
                   for c in self.checks if c.goal == "eq")

    def to_json(self) -> dict:
        return {"values": self.values, "status": self.status,
                "checks": [{**asdict(c), "gap": c.gap} for c in self.checks]}


def verify(candidate: Individual, problem: SizingProblem, oracle: OracleSimulator | None = None
           ) -> VerifyReport:
    """Oracle PoIs of a candidate next to the values the simulator predicted."""
    oracle = oracle or OracleSimulator()
    sizing = problem.decode(candidate.genome)
    checks = []
    for k, t in enumerate(problem.targets):
        row = {**sizing, **t.state}
        got = float(oracle.evaluate(problem.net, [row], t.frequency, [t.poi])[0, 0])
        if math.isnan(got):
            raise SizingError(f"oracle failed while verifying target {k} ({t.poi})")
        pred = candidate.values.get(k, math.nan)
        checks.append(TargetCheck(t.poi, t.frequency, t.goal, t.value, dict(t.state),
                                  pred, got, t.satisfied(pred), t.satisfied(got)))
    if all(c.verified_ok for c in checks):
        status = "pass"
    elif all(c.predicted_ok for c in checks):
        status = "surrogate-optimism"
    else:
        status = "fail"
    return VerifyReport(sizing, checks, status)


def verify_front(result: EvolveResult, problem: SizingProblem, oracle: OracleSimulator | None = None
                 ) -> tuple[VerifyReport, list[VerifyReport]]:
    """Verify every Pareto member; pick the best by oracle status then oracle error."""
    oracle = oracle or OracleSimulator()
    cand = result.front or result.population
    reports = [verify(c, problem, oracle) for c in cand]
    rank = {"pass": 0, "surrogate-optimism": 1, "fail": 1}

    def key(r):
        viol = sum(max(0.0, c.verified - c.value) if c.goal == "lt" else
                   max(0.0, c.value - c.verified) if c.goal == "gt" else 0.0 for c in r.checks)
        return rank[r.status], viol, r.oracle_error
    return min(reports, key=key), reports


# --- files ----------------------------------------------------------------------------------------

def targets_from_json(items) -> list[Target]:
    return [Target(poi=d["poi"], frequency=float(d["frequency"]), goal=d["goal"],
                   value=float(d["value"]), weight=float(d.get("weight", 1.0)),
                   tol=float(d.get("tol", 1.0)),
                   state={k: float(v) for k, v in d.get("state", {}).items()})
            for d in items]


def config_from_json(d: dict | None) -> Nsga2Config:
    d = dict(d or {})
    allowed = set(Nsga2Config.__dataclass_fields__)
    bad = set(d) - allowed
    if bad:
        raise SizingError(f"unknown optimizer settings {sorted(bad)}")
    return Nsga2Config(**d)


def write_history_csv(path, history: list[dict]):
    cols = ["generation", "evaluations", "feasible", "front_size", "best_violation", "best_error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for h in history:
            w.writerow([h[c] if isinstance(h[c], int) else repr(float(h[c])) for c in cols])


def result_json(result: EvolveResult, problem: SizingProblem, chosen: VerifyReport | None,
                reports: Sequence[VerifyReport] = ()) -> dict:
    def ind(p):
        return {"genome": p.genome.tolist(), "values": problem.decode(p.genome),
                "objectives": p.objectives.tolist(), "violation": p.violation,
                "predicted": [p.values.get(k) for k in range(len(problem.targets))]}
    return {"netlist": problem.net.name,
            "simulator": problem.simulator.name,
            "config": asdict(result.config),
            "evaluations": result.evaluations,
            "simulator_calls": problem.simulator.calls,
            "targets": [asdict(t) for t in problem.targets],
            "pareto": [ind(p) for p in result.front],
            "verified": [r.to_json() for r in reports],
            "chosen": chosen.to_json() if chosen is not None else None}


def dumps(d) -> str:
    return json.dumps(d, indent=2, sort_keys=True, allow_nan=True) + "\n"
