"""Placement policies: history-seeded elitist GA plus two baselines.

An assignment maps each task of a request to one candidate actor.  Policies
search assignment space for the lowest estimated response time.  Individuals
are real-coded: gene i lives in [0, candidate_count_i) and decodes by floor.
The flagship policy seeds its initial population from past winners for the
same app and deduplicates on decoded assignments, which is what makes warm
starts converge in a handful of iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GENE_EPS = 1e-6
REFILL_STALL_LIMIT = 10


@dataclass
class GaParams:
    pop_size: int = 100
    hist_ratio: float = 4.0
    max_iteration_num: int = 100
    n_parents: int = 20
    n_offsprings: int = 40
    crossover_eta: float = 15.0
    mutation_eta: float = 20.0
    mutation_prob: float | None = None  # defaults to 1 / task count

    def validate(self):
        if self.pop_size < 1:
            raise ValueError("pop_size must be at least 1")
        if self.hist_ratio < 1:
            raise ValueError("hist_ratio must be at least 1")
        if self.max_iteration_num < 1:
            raise ValueError("max_iteration_num must be at least 1")
        if self.n_parents < 1 or self.n_offsprings < 1:
            raise ValueError("n_parents and n_offsprings must be at least 1")
        if self.crossover_eta <= 0 or self.mutation_eta <= 0:
            raise ValueError("distribution indices must be positive")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")

    def max_hist_individuals(self) -> int:
        return math.ceil(self.pop_size / self.hist_ratio)


@dataclass
class Individual:
    genes: np.ndarray
    assignment: tuple
    fitness: float


@dataclass
class PolicyResult:
    assignment: tuple
    genes: np.ndarray
    fitness: float
    series: list = field(default_factory=list)  # best fitness after each iteration
    evals: int = 0


class HistoryStore:
    """Winning individuals of past placements, best-first per app."""

    def __init__(self, keep: int = 64):
        self.keep = keep
        self._by_app: dict[str, list[tuple[np.ndarray, float]]] = {}

    def record(self, app: str, genes: np.ndarray, fitness: float):
        entries = self._by_app.setdefault(app, [])
        entries.append((np.array(genes, dtype=float), fitness))
        entries.sort(key=lambda entry: entry[1])
        del entries[self.keep:]

    def best_first(self, app: str) -> list[np.ndarray]:
        return [genes for genes, _ in self._by_app.get(app, [])]

    def __len__(self):
        return sum(len(entries) for entries in self._by_app.values())


def decode(genes: np.ndarray, counts: np.ndarray) -> tuple:
    """Floor each gene and clamp into its candidate range."""

    idx = np.floor(genes).astype(int)
    idx = np.clip(idx, 0, counts - 1)
    return tuple(int(i) for i in idx)


class _Evaluator:
    """Memoizes fitness per decoded assignment; misses count as evaluations."""

    def __init__(self, fitness, counts):
        self._fitness = fitness
        self._counts = counts
        self._cache: dict[tuple, float] = {}
        self.evals = 0

    def individual(self, genes: np.ndarray) -> Individual:
        assignment = decode(genes, self._counts)
        fitness = self._cache.get(assignment)
        if fitness is None:
            fitness = self._fitness(assignment)
            self._cache[assignment] = fitness
            self.evals += 1
        return Individual(genes=genes, assignment=assignment, fitness=fitness)


def _random_genes(rng, counts) -> np.ndarray:
    return rng.random(len(counts)) * counts


def tournament_select(pop: list, n_parents: int, rng) -> list:
    """Binary tournaments: two distinct entrants, the fitter one survives."""

    if len(pop) == 1:
        return [pop[0]] * n_parents
    chosen = []
    for _ in range(n_parents):
        i = int(rng.integers(0, len(pop)))
        j = int(rng.integers(0, len(pop) - 1))
        if j >= i:
            j += 1
        a, b = pop[i], pop[j]
        chosen.append(b if b.fitness < a.fitness else a)
    return chosen


def sbx_crossover(parents: list, n_offsprings: int, eta: float, counts, rng) -> list[np.ndarray]:
    """Simulated binary crossover over sequential parent pairs.

    Per gene: draw u in (0,1); beta = (2u)^(1/(eta+1)) for u <= 0.5, else
    (1/(2(1-u)))^(1/(eta+1)); the two children are 0.5*((1 +- beta)p1 +
    (1 -+ beta)p2), clamped into gene bounds.  Identical parents reproduce
    themselves exactly.
    """

    upper = counts - GENE_EPS
    out: list[np.ndarray] = []
    pair = 0
    n = len(parents)
    exponent = 1.0 / (eta + 1.0)
    while len(out) < n_offsprings:
        p1 = parents[(2 * pair) % n].genes
        p2 = parents[(2 * pair + 1) % n].genes
        pair += 1
        u = rng.random(len(counts))
        u = np.clip(u, 1e-12, 1.0 - 1e-12)
        beta = np.where(u <= 0.5, (2.0 * u) ** exponent, (1.0 / (2.0 * (1.0 - u))) ** exponent)
        c1 = 0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2)
        c2 = 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)
        out.append(np.clip(c1, 0.0, upper))
        if len(out) < n_offsprings:
            out.append(np.clip(c2, 0.0, upper))
    return out


def polynomial_mutation(genes: np.ndarray, prob: float, eta: float, counts, rng) -> np.ndarray:
    """Deb's polynomial mutation, applied per gene with the given probability."""

    upper = counts - GENE_EPS
    mask = rng.random(len(counts)) < prob
    u = np.clip(rng.random(len(counts)), 1e-12, 1.0 - 1e-12)
    exponent = 1.0 / (eta + 1.0)
    delta = np.where(u < 0.5, (2.0 * u) ** exponent - 1.0, 1.0 - (2.0 * (1.0 - u)) ** exponent)
    mutated = genes + mask * delta * upper
    return np.clip(mutated, 0.0, upper)


def _evolve(counts_list, fitness, params: GaParams, rng, seed_genes, dedup: bool) -> PolicyResult:
    """Shared GA skeleton; dedup and seeding are the two policy knobs."""

    params.validate()
    counts = np.array(counts_list, dtype=float)
    if (counts < 1).any():
        raise ValueError("every task needs at least one candidate actor")
    evaluator = _Evaluator(fitness, np.array(counts_list, dtype=int))
    mutation_prob = params.mutation_prob
    if mutation_prob is None:
        mutation_prob = 1.0 / len(counts_list)

    def fresh() -> Individual:
        return evaluator.individual(_random_genes(rng, counts))

    initial = [evaluator.individual(g) for g in seed_genes]
    while len(initial) < params.pop_size:
        initial.append(fresh())
    pop = _dedup(initial) if dedup else list(initial)
    pop.sort(key=lambda ind: ind.fitness)
    best = pop[0]

    series = []
    for _ in range(params.max_iteration_num):
        pool: list[Individual] = []
        seen: set[tuple] = set()
        stall = 0
        while len(pool) < params.pop_size and stall < REFILL_STALL_LIMIT:
            parents = tournament_select(pop, params.n_parents, rng)
            children = sbx_crossover(parents, params.n_offsprings, params.crossover_eta, counts, rng)
            children = [
                polynomial_mutation(child, mutation_prob, params.mutation_eta, counts, rng)
                for child in children
            ]
            offspring = [evaluator.individual(genes) for genes in children]
            added = 0
            for ind in parents + offspring:
                if dedup:
                    if ind.assignment in seen:
                        continue
                    seen.add(ind.assignment)
                pool.append(ind)
                added += 1
            stall = stall + 1 if added == 0 else 0
        while len(pool) < params.pop_size:
            pool.append(fresh())  # stalled refill: random padding, duplicates allowed
        merged = [best] + pool
        if dedup:
            merged = _dedup(merged)
        merged.sort(key=lambda ind: ind.fitness)
        pop = merged[: params.pop_size]
        best = pop[0]
        series.append(best.fitness)

    return PolicyResult(
        assignment=best.assignment,
        genes=best.genes,
        fitness=best.fitness,
        series=series,
        evals=evaluator.evals,
    )


def _dedup(individuals: list) -> list:
    """Keep the first individual per decoded assignment, preserving order."""

    seen: set[tuple] = set()
    out = []
    for ind in individuals:
        if ind.assignment in seen:
            continue
        seen.add(ind.assignment)
        out.append(ind)
    return out


def _history_seeds(history, app, params, counts_list) -> list[np.ndarray]:
    if history is None or app is None:
        return []
    counts = np.array(counts_list, dtype=float)
    seeds = []
    for genes in history.best_first(app)[: params.max_hist_individuals()]:
        if len(genes) != len(counts_list):
            continue  # app shape changed; entry is unusable
        seeds.append(np.clip(genes, 0.0, counts - GENE_EPS))
    return seeds


def ohnsga(counts, fitness, params: GaParams, rng, history: HistoryStore | None = None, app: str | None = None) -> PolicyResult:
    """History-seeded elitist GA with assignment-level deduplication.

    The initial population starts from up to ceil(pop_size / hist_ratio) past
    winners (re-clamped and re-evaluated against current profiles) and fills
    up with random individuals.  Every generation accumulates deduplicated
    tournament parents and SBX+mutation offspring until the population is
    full, folds the incumbent best back in, and keeps the fittest pop_size.
    The returned best-fitness series never increases.
    """

    seeds = _history_seeds(history, app, params, counts)
    result = _evolve(counts, fitness, params, rng, seeds, dedup=True)
    if history is not None and app is not None:
        history.record(app, result.genes, result.fitness)
    return result


def nsga2_baseline(counts, fitness, params: GaParams, rng, history: HistoryStore | None = None, app: str | None = None) -> PolicyResult:
    """Same evolutionary loop without history seeding or deduplication."""

    return _evolve(counts, fitness, params, rng, [], dedup=False)


def random_policy(counts, fitness, params: GaParams, rng, history: HistoryStore | None = None, app: str | None = None) -> PolicyResult:
    """Uniform random search: one fresh assignment per iteration, best kept."""

    params.validate()
    counts_arr = np.array(counts, dtype=float)
    if (counts_arr < 1).any():
        raise ValueError("every task needs at least one candidate actor")
    evaluator = _Evaluator(fitness, np.array(counts, dtype=int))
    best = None
    series = []
    for _ in range(params.max_iteration_num):
        candidate = evaluator.individual(_random_genes(rng, counts_arr))
        if best is None or candidate.fitness < best.fitness:
            best = candidate
        series.append(best.fitness)
    return PolicyResult(
        assignment=best.assignment,
        genes=best.genes,
        fitness=best.fitness,
        series=series,
        evals=evaluator.evals,
    )


POLICIES = {
    "ohnsga": ohnsga,
    "nsga2": nsga2_baseline,
    "random": random_policy,
}
