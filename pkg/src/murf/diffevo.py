"""Differential evolution (DE/rand/1/bin) global optimizer.

Deterministic under a fixed seed.  Mutation v = a + F (b - c) over three
distinct population members, binomial crossover with rate CR and a forced
coordinate, greedy selection.  Out-of-bounds trial coordinates are
reflected back into the box.  Candidates whose objective evaluation fails
or returns a non-finite value are assigned +inf and never abort the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class DESettings:
    population: int
    max_generations: int
    f: float = 0.8
    cr: float = 0.9
    seed: int | None = None
    workers: int = 1
    memo_decimals: int = 9  # quantization for duplicate-evaluation caching
    stall_generations: int | None = None  # stop after this many gens without improvement
    stall_tol: float = 1e-10

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("DE/rand/1 needs a population of at least 4")
        if not (0 < self.f <= 2) or not (0 <= self.cr <= 1):
            raise ValueError("require 0 < F <= 2 and 0 <= CR <= 1")


@dataclass
class DEResult:
    x: np.ndarray
    fun: float
    history: np.ndarray  # best objective after initialization and each generation
    n_evaluations: int
    n_generations: int
    stalled: bool = False
    population: np.ndarray | None = None
    population_fun: np.ndarray | None = None


def default_population_size(dimension: int) -> int:
    return 15 * dimension


def _reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    out = x.copy()
    free = span > 0
    # fold into [lo, lo + 2 span) then mirror the upper half
    y = np.mod(out[free] - lo[free], 2.0 * span[free])
    y = np.where(y > span[free], 2.0 * span[free] - y, y)
    out[free] = lo[free] + y
    out[~free] = lo[~free]
    return out


class _Memo:
    def __init__(self, decimals: int):
        self.decimals = decimals
        self.store: dict[tuple, float] = {}
        self.hits = 0

    def key(self, x: np.ndarray) -> tuple:
        return tuple(np.round(x, self.decimals))

    def get(self, x: np.ndarray):
        val = self.store.get(self.key(x))
        if val is not None:
            self.hits += 1
        return val

    def put(self, x: np.ndarray, value: float) -> None:
        self.store[self.key(x)] = value


def _evaluate(objective: Callable, batch: list[np.ndarray], workers: int, pool=None) -> list[float]:
    def safe(v: float) -> float:
        try:
            v = float(v)
        except (TypeError, ValueError):
            return np.inf
        return v if np.isfinite(v) else np.inf

    if pool is not None and len(batch) > 1:
        try:
            return [safe(v) for v in pool.map(objective, batch)]
        except Exception:
            pass  # fall through to serial evaluation
    out = []
    for x in batch:
        try:
            out.append(safe(objective(x)))
        except Exception:
            out.append(np.inf)
    return out


def differential_evolution(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[tuple[float, float]],
    settings: DESettings,
) -> DEResult:
    """Minimize `objective` over a box via DE/rand/1/bin.

    Returns the best member with the per-generation best-objective history,
    which is non-increasing by construction (greedy selection).  With
    ``settings.workers > 1`` each generation's trial vectors are evaluated
    in a process pool; `objective` must then be picklable.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(hi < lo):
        raise ValueError("bounds must satisfy lo <= hi")
    if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
        raise ValueError("bounds must be finite")
    dim = len(bounds)
    rng = np.random.default_rng(settings.seed)
    np_ = settings.population

    pool = None
    if settings.workers > 1:
        import multiprocessing

        pool = multiprocessing.get_context("fork").Pool(settings.workers)

    memo = _Memo(settings.memo_decimals)

    def eval_batch(batch: list[np.ndarray]) -> tuple[list[float], int]:
        values: list[float | None] = [memo.get(x) for x in batch]
        todo: dict[tuple, int] = {}  # unique key -> representative index
        for k, v in enumerate(values):
            if v is None:
                todo.setdefault(memo.key(batch[k]), k)
        fresh = _evaluate(objective, [batch[k] for k in todo.values()], settings.workers, pool)
        for key, v in zip(todo, fresh):
            memo.store[key] = v
        for k, v in enumerate(values):
            if v is None:
                values[k] = memo.store[memo.key(batch[k])]
        return [float(v) for v in values], len(todo)

    try:
        pop = lo + rng.random((np_, dim)) * (hi - lo)
        fun, n_eval = eval_batch(list(pop))
        fun = np.array(fun)
        history = [float(fun.min())]
        stalled = False
        gen = 0
        for gen in range(1, settings.max_generations + 1):
            trials = []
            for i in range(np_):
                choices = [k for k in range(np_) if k != i]
                a, b, c = rng.choice(choices, size=3, replace=False)
                mutant = pop[a] + settings.f * (pop[b] - pop[c])
                cross = rng.random(dim) < settings.cr
                cross[rng.integers(dim)] = True  # forced coordinate
                trial = np.where(cross, mutant, pop[i])
                trials.append(_reflect(trial, lo, hi))
            trial_fun, n_new = eval_batch(trials)
            n_eval += n_new
            for i in range(np_):
                if trial_fun[i] <= fun[i]:
                    pop[i] = trials[i]
                    fun[i] = trial_fun[i]
            history.append(float(fun.min()))
            if settings.stall_generations is not None and len(history) > settings.stall_generations:
                recent = history[-(settings.stall_generations + 1):]
                if recent[0] - recent[-1] <= settings.stall_tol:
                    stalled = True
                    break
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    best = int(np.argmin(fun))
    return DEResult(
        x=pop[best].copy(),
        fun=float(fun[best]),
        history=np.array(history),
        n_evaluations=n_eval,
        n_generations=gen,
        stalled=stalled,
        population=pop,
        population_fun=fun,
    )
