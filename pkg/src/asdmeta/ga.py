"""Genetic-algorithm optimizer over binary feature masks.

Fitness is the mean k-fold CV accuracy of a random forest on the masked
features. Selection is tournament, recombination is single-point crossover
of consecutive parent pairs, and mutation is independent bit-flip. All-zero
individuals are repaired by setting one uniformly random bit, so no evaluated
mask is ever empty.

Each chromosome's CV seed derives from (run seed, bit pattern), so a given
mask always scores the same within a run: evaluation order, parallelism, and
fitness caching can never change the result.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import cv, forest, parallel, streams, tabular

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GAConfig:
    """Optimizer hyperparameters; ``r_mut=None`` resolves to 4/d at run time."""

    n_iter: int = 30
    n_pop: int = 300
    r_cross: float = 0.9
    r_mut: float | None = None
    tournament_size: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.n_pop < 2 or self.n_pop % 2:
            raise ValueError("n_pop must be an even integer >= 2")
        if not 0 <= self.r_cross <= 1:
            raise ValueError("r_cross must be in [0, 1]")
        if self.r_mut is not None and not 0 <= self.r_mut <= 1:
            raise ValueError("r_mut must be in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")


@dataclass(frozen=True)
class GAResult:
    """Best mask found, its CV fitness, the running-best history per
    generation, and the total number of fitness queries issued."""

    best_mask: np.ndarray
    best_fitness: cv.CVResult
    history: tuple[float, ...]
    n_evaluations: int


def _repair_zero(bits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if not bits.any():
        bits[int(rng.integers(bits.shape[0]))] = 1
    return bits


def init_population(d: int, n_pop: int, seed: int) -> list[np.ndarray]:
    """n_pop chromosomes of i.i.d. fair-coin bits; all-zero ones repaired."""
    if d < 1 or n_pop < 2:
        raise ValueError("need d >= 1 and n_pop >= 2")
    rng = streams.spawn(seed, "init")
    pop = rng.integers(0, 2, size=(n_pop, d), dtype=np.uint8)
    return [_repair_zero(row, rng) for row in pop]


def tournament_select(
    population: list[np.ndarray],
    fitnesses: list[float],
    tournament_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw tournament_size members with replacement; best fitness wins,
    ties going to the earliest draw."""
    if not population or len(fitnesses) != len(population):
        raise ValueError("population and fitnesses must be parallel and non-empty")
    draws = rng.integers(0, len(population), size=tournament_size)
    best = draws[0]
    for j in draws[1:]:
        if fitnesses[j] > fitnesses[best]:
            best = j
    return population[best].copy()


def crossover_single_point(
    a: np.ndarray, b: np.ndarray, r_cross: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """With probability r_cross exchange suffixes at a uniform cut in 1..d-1."""
    if a.shape != b.shape:
        raise ValueError("parents must have equal length")
    d = a.shape[0]
    if d < 2:
        raise ValueError("crossover needs chromosomes of length >= 2")
    if rng.random() < r_cross:
        c = int(rng.integers(1, d))
        return (
            np.concatenate([a[:c], b[c:]]),
            np.concatenate([b[:c], a[c:]]),
        )
    return a.copy(), b.copy()


def mutate_bitflip(
    chromosome: np.ndarray, r_mut: float, rng: np.random.Generator
) -> np.ndarray:
    """Flip each bit independently with probability r_mut; repair all-zero."""
    flips = (rng.random(chromosome.shape[0]) < r_mut).astype(np.uint8)
    return _repair_zero(chromosome ^ flips, rng)


# -- fitness evaluation (optionally across processes) ---------------------

_CTX: dict = {}


def _init_fitness_worker(table, fcfg, k, stratified) -> None:
    _CTX["table"] = table
    _CTX["fcfg"] = fcfg
    _CTX["k"] = k
    _CTX["stratified"] = stratified
    forest.warmup()


def _fitness_task(args: tuple[bytes, int]) -> cv.CVResult:
    mask_bytes, seed = args
    mask = np.frombuffer(mask_bytes, dtype=np.uint8).copy()
    return cv.cv_accuracy(_CTX["table"], mask, _CTX["fcfg"], _CTX["k"], seed,
                          stratified=_CTX["stratified"])


def fitness_seed(run_seed: int, mask: np.ndarray) -> int:
    """CV seed for one chromosome: a function of the run seed and bit pattern."""
    return streams.derive(run_seed, "fitness", np.asarray(mask, dtype=np.uint8).tobytes())


def evolve(
    table: tabular.FeatureTable,
    gacfg: GAConfig,
    fcfg: forest.ForestConfig,
    k: int = 3,
    threads: int = 1,
    use_cache: bool = True,
    stratified: bool = False,
) -> GAResult:
    """Run the generational loop and return the best mask ever evaluated.

    Per generation: evaluate all individuals, select n_pop parents by
    tournament, pair consecutive parents, cross over, mutate. The global best
    is tracked outside the population (no elitism), so the reported result
    never regresses. ``use_cache=False`` re-evaluates duplicates instead of
    reusing the cached value; because seeds depend only on the bit pattern,
    the outcome is identical either way.
    """
    d = table.d
    r_mut = gacfg.r_mut if gacfg.r_mut is not None else 4.0 / d
    population = init_population(d, gacfg.n_pop, gacfg.seed)
    loop_rng = streams.spawn(gacfg.seed, "loop")
    cache: dict[bytes, cv.CVResult] = {}
    best_mask: np.ndarray | None = None
    best_fit: cv.CVResult | None = None
    history: list[float] = []
    n_queries = 0

    if threads > 1:
        forest.warmup()  # compile in the parent so forked workers inherit

    for gen in range(gacfg.n_iter):
        keys = [bits.tobytes() for bits in population]
        n_queries += len(keys)
        if use_cache:
            pending = [key for key in dict.fromkeys(keys) if key not in cache]
        else:
            pending = list(dict.fromkeys(keys))
        hits = len(keys) - len(pending)
        tasks = [(key, fitness_seed(gacfg.seed, np.frombuffer(key, dtype=np.uint8)))
                 for key in pending]
        results = parallel.pmap(
            _fitness_task, tasks, threads,
            initializer=_init_fitness_worker, initargs=(table, fcfg, k, stratified),
        )
        for key, result in zip(pending, results):
            cache[key] = result
        fitnesses = [cache[key].mean for key in keys]

        for i, key in enumerate(keys):
            result = cache[key]
            if best_fit is None or result.mean > best_fit.mean:
                best_fit = result
                best_mask = population[i].copy()
        history.append(best_fit.mean)
        log.info(
            "generation %d: best %.4f mean %.4f cache-hit %.2f",
            gen, best_fit.mean, float(np.mean(fitnesses)), hits / max(len(keys), 1),
        )
        if not use_cache:
            cache.clear()

        parents = [
            tournament_select(population, fitnesses, gacfg.tournament_size, loop_rng)
            for _ in range(gacfg.n_pop)
        ]
        next_population = []
        for i in range(0, gacfg.n_pop, 2):
            if d >= 2:
                child_a, child_b = crossover_single_point(
                    parents[i], parents[i + 1], gacfg.r_cross, loop_rng)
            else:
                child_a, child_b = parents[i].copy(), parents[i + 1].copy()
            next_population.append(mutate_bitflip(child_a, r_mut, loop_rng))
            next_population.append(mutate_bitflip(child_b, r_mut, loop_rng))
        population = next_population

    assert best_mask is not None and best_fit is not None
    return GAResult(
        best_mask=best_mask,
        best_fitness=best_fit,
        history=tuple(history),
        n_evaluations=n_queries,
    )
