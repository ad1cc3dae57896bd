"""Constrained two-objective NSGA-II over the full parametric space or a
latent subspace.

Objectives: maximize open-water efficiency, minimize suction-side
cavitation fraction.  The thrust coefficient must stay inside a band
around the reference propeller's value; feasibility-first (constrained)
dominance drives selection.  Designs whose decoded geometry fails the
validity checks are ranked worst without consuming an evaluator call.
Face-side cavitation is monitored throughout and applied as an
admissibility filter on the reported front: offending entries stay in the
archive but are excluded from the front.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hydro import HydroResult


@dataclass(frozen=True)
class GaConfig:
    population: int
    generations: int
    crossover_rate: float = 0.9
    crossover_eta: float = 15.0
    mutation_rate: float | None = None  # default 1/dim
    mutation_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and at least 4")
        if self.generations < 1:
            raise ValueError("need at least one generation")


def population_size_for(m: int, objectives_monitored: int = 3, factor: int = 10) -> int:
    """Default sizing 10 x dimension x monitored-objective count (efficiency
    plus both cavitation sides), giving 150 at m=5 and 180 at m=6."""
    return factor * m * objectives_monitored


@dataclass
class Entry:
    x: np.ndarray
    generation: int
    valid: bool
    result: HydroResult | None = None
    feasible: bool = False
    violation: float = np.inf
    index: int = -1

    @property
    def objectives(self) -> tuple[float, float]:
        """(efficiency to maximize, back cavitation to minimize)."""
        if self.result is None:
            return (-np.inf, np.inf)
        return (self.result.eta, self.result.a_cav_back)


def dominates(a: Entry, b: Entry) -> bool:
    """Pareto dominance on (maximize eta, minimize back cavitation)."""
    ea, aa = a.objectives
    eb, ab = b.objectives
    return (ea >= eb and aa <= ab) and (ea > eb or aa < ab)


def constrained_before(a: Entry, b: Entry) -> int:
    """Feasibility-first ordering: -1 if a wins, 1 if b wins, 0 if tied."""
    if a.feasible != b.feasible:
        return -1 if a.feasible else 1
    if not a.feasible:
        if a.violation == b.violation:
            return 0
        return -1 if a.violation < b.violation else 1
    if dominates(a, b):
        return -1
    if dominates(b, a):
        return 1
    return 0


class ParetoArchive:
    """Every evaluated design, plus the feasible non-dominated front."""

    def __init__(self, kt_min: float, kt_max: float):
        self.kt_min = kt_min
        self.kt_max = kt_max
        self.entries: list[Entry] = []

    def add(self, entry: Entry) -> Entry:
        entry.index = len(self.entries)
        if entry.valid and entry.result is not None:
            kt = entry.result.kt
            entry.violation = max(0.0, self.kt_min - kt, kt - self.kt_max)
            entry.feasible = entry.violation == 0.0
        else:
            entry.feasible = False
            entry.violation = np.inf
        self.entries.append(entry)
        return entry

    def feasible_entries(self) -> list[Entry]:
        return [e for e in self.entries if e.feasible]

    def front(self, require_face_free: bool = True) -> list[Entry]:
        """Feasible entries dominated by no feasible entry; optionally only
        those without face-side cavitation."""
        feas = self.feasible_entries()
        nd = [e for e in feas if not any(dominates(o, e) for o in feas)]
        if require_face_free:
            nd = [e for e in nd if e.result.a_cav_face <= 0.0]
        return sorted(nd, key=lambda e: -e.objectives[0])

    def best_eta_by_generation(self) -> np.ndarray:
        """Running best feasible efficiency after each generation."""
        if not self.entries:
            return np.array([])
        gens = max(e.generation for e in self.entries)
        best = np.full(gens + 1, -np.inf)
        for e in self.entries:
            if e.feasible:
                best[e.generation] = max(best[e.generation], e.objectives[0])
        return np.maximum.accumulate(best)


@dataclass
class OptimizationProblem:
    """Bounds plus an evaluation callable.

    evaluate_fn(x) returns (HydroResult | None, valid: bool); invalid
    decisions must come back as (None, False) without touching the
    hydrodynamic evaluator.
    """

    lower: np.ndarray
    upper: np.ndarray
    evaluate_fn: object
    kt_reference: float
    kt_band: float = 0.015
    label: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def kt_limits(self) -> tuple[float, float]:
        return (self.kt_reference * (1.0 - self.kt_band), self.kt_reference * (1.0 + self.kt_band))


def _sbx_pair(p1, p2, lower, upper, eta, rng):
    """Simulated binary crossover, one variable pair at a time (bounded)."""
    u = rng.random(len(p1))
    beta = np.where(
        u <= 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)),
        (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)),
    )
    c1 = 0.5 * ((1 + beta) * p1 + (1 - beta) * p2)
    c2 = 0.5 * ((1 - beta) * p1 + (1 + beta) * p2)
    swap = rng.random(len(p1)) < 0.5
    c1s = np.where(swap, c2, c1)
    c2s = np.where(swap, c1, c2)
    return np.clip(c1s, lower, upper), np.clip(c2s, lower, upper)


def _polynomial_mutation(x, lower, upper, rate, eta, rng):
    y = x.copy()
    span = upper - lower
    do = rng.random(len(x)) < rate
    u = rng.random(len(x))
    delta = np.where(
        u < 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0,
        1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0)),
    )
    y = np.where(do, y + delta * span, y)
    return np.clip(y, lower, upper)


def fast_nondominated_sort(entries: list[Entry]) -> list[list[int]]:
    """Front ranks under constrained dominance (indices into entries)."""
    n = len(entries)
    better_than = [[] for _ in range(n)]
    worse_count = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            cmp = constrained_before(entries[i], entries[j])
            if cmp < 0:
                better_than[i].append(j)
                worse_count[j] += 1
            elif cmp > 0:
                better_than[j].append(i)
                worse_count[i] += 1
    fronts = [[i for i in range(n) if worse_count[i] == 0]]
    while fronts[-1]:
        nxt = []
        for i in fronts[-1]:
            for j in better_than[i]:
                worse_count[j] -= 1
                if worse_count[j] == 0:
                    nxt.append(j)
        fronts.append(nxt)
    return fronts[:-1]


def crowding_distance(entries: list[Entry], front: list[int]) -> dict[int, float]:
    dist = {i: 0.0 for i in front}
    if len(front) <= 2:
        return {i: np.inf for i in front}
    for axis, sign in ((0, -1.0), (1, 1.0)):
        vals = {i: sign * entries[i].objectives[axis] for i in front}
        finite = [v for v in vals.values() if np.isfinite(v)]
        span = (max(finite) - min(finite)) if finite else 0.0
        order = sorted(front, key=lambda i: vals[i])
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        for prev, cur, nxt in zip(order, order[1:], order[2:]):
            dist[cur] += (vals[nxt] - vals[prev]) / span
    return dist


_WORKER_EVALUATE = None


def _worker_init(fn):
    global _WORKER_EVALUATE
    _WORKER_EVALUATE = fn


def _worker_call(x):
    try:
        return _WORKER_EVALUATE(x)
    except Exception:
        return None, False


def optimize(
    problem: OptimizationProblem, config: GaConfig, init_matrix=None, workers: int = 1
) -> ParetoArchive:
    """NSGA-II: Latin-hypercube initialization, binary tournament on
    constrained dominance + crowding, SBX crossover, polynomial mutation,
    elitist merge.  The archive records every evaluated design.

    With workers > 1 each generation's evaluations run in a process pool
    (evaluate_fn must be picklable); results are identical to the serial
    run because evaluation is pure and selection only uses returned values.
    """
    from . import sampling

    rng = np.random.Generator(np.random.Philox(key=config.seed))
    kt_min, kt_max = problem.kt_limits
    archive = ParetoArchive(kt_min, kt_max)
    mutation_rate = config.mutation_rate or 1.0 / problem.dim

    pool = None
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        # the evaluator ships to each worker once via the initializer; jobs
        # then carry only the decision vectors
        pool = ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(problem.evaluate_fn,)
        )

    def evaluate_one(x):
        try:
            return problem.evaluate_fn(x)
        except Exception:
            return None, False

    def evaluate_batch(xs, generation):
        xs = [np.asarray(x, float) for x in xs]
        if pool:
            chunk = max(1, len(xs) // (4 * workers))
            outcomes = list(pool.map(_worker_call, xs, chunksize=chunk))
        else:
            outcomes = [evaluate_one(x) for x in xs]
        return [
            archive.add(Entry(x=x, generation=generation, valid=valid, result=result))
            for x, (result, valid) in zip(xs, outcomes)
        ]

    if init_matrix is None:
        init_matrix = sampling.latin_hypercube(
            problem.lower, problem.upper, config.population, config.seed
        ).matrix
    population = evaluate_batch(init_matrix, 0)

    for gen in range(1, config.generations + 1):
        fronts = fast_nondominated_sort(population)
        rank = {}
        crowd = {}
        for level, fr in enumerate(fronts):
            d = crowding_distance(population, fr)
            for i in fr:
                rank[i] = level
                crowd[i] = d[i]

        def tournament():
            i, j = rng.integers(0, len(population), size=2)
            if rank[i] != rank[j]:
                return population[i] if rank[i] < rank[j] else population[j]
            if crowd[i] != crowd[j]:
                return population[i] if crowd[i] > crowd[j] else population[j]
            return population[min(i, j)]

        children = []
        while len(children) < config.population:
            p1, p2 = tournament(), tournament()
            if rng.random() < config.crossover_rate:
                c1, c2 = _sbx_pair(
                    p1.x, p2.x, problem.lower, problem.upper, config.crossover_eta, rng
                )
            else:
                c1, c2 = p1.x.copy(), p2.x.copy()
            for c in (c1, c2):
                children.append(
                    _polynomial_mutation(
                        c, problem.lower, problem.upper, mutation_rate, config.mutation_eta, rng
                    )
                )
        offspring = evaluate_batch(children[: config.population], gen)

        merged = population + offspring
        fronts = fast_nondominated_sort(merged)
        survivors: list[Entry] = []
        for fr in fronts:
            if len(survivors) + len(fr) <= config.population:
                survivors.extend(merged[i] for i in fr)
            else:
                d = crowding_distance(merged, fr)
                rest = sorted(fr, key=lambda i: -d[i])
                survivors.extend(merged[i] for i in rest[: config.population - len(survivors)])
                break
        population = survivors

    if pool is not None:
        pool.shutdown()
    return archive


def hypervolume(points, reference) -> float:
    """Exact 2-D hypervolume for (maximize eta, minimize area) fronts.

    reference must be dominated by every point (lower eta, higher area).
    """
    pts = [p for p in points]
    if not pts:
        return 0.0
    ref_eta, ref_area = reference
    for eta, area in pts:
        if eta < ref_eta or area > ref_area:
            raise ValueError("reference point must be dominated by the front")
    # keep only non-dominated points, sweep by decreasing area
    nd = [
        p
        for p in pts
        if not any((q[0] >= p[0] and q[1] <= p[1] and q != p) for q in pts)
    ]
    nd = sorted(set(nd), key=lambda p: -p[1])
    total = 0.0
    prev_area = ref_area
    for eta, area in nd:
        total += (eta - ref_eta) * (prev_area - area)
        prev_area = area
    return total
