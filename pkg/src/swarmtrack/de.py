"""DE/rand/1/bin maximizer over a box, with injected seed members."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class DEParams:
    population: int = 16
    generations: int = 30
    generations_joint: int = 60
    weight: float = 0.7
    crossover: float = 0.9


@dataclass(frozen=True)
class DEResult:
    x: np.ndarray
    value: float
    evaluations: int


def optimize_de(
    objective: Callable[[np.ndarray], np.ndarray],
    bounds,
    seeds: Sequence[Sequence[float]] = (),
    params: DEParams = DEParams(),
    rng: np.random.Generator | None = None,
    generations: int | None = None,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> DEResult:
    """Maximize ``objective`` over the box ``bounds`` (shape ``(dim, 2)``).

    ``objective`` is batched: it takes an ``(k, dim)`` array and returns ``k``
    values. Seeds overwrite the first population slots, so the result is never
    worse than the best seed. Exactly ``population * (generations + 1)``
    candidates are evaluated. ``project`` maps candidates onto the feasible
    set before they are evaluated or stored.
    """
    rng = np.random.default_rng() if rng is None else rng
    box = np.asarray(bounds, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    dim = len(lo)
    npop = params.population
    if npop < 4:
        raise ValueError("DE needs a population of at least 4")
    gens = params.generations if generations is None else generations
    seeds = np.asarray(seeds, dtype=float).reshape(-1, dim)
    if len(seeds) > npop:
        raise ValueError("more seeds than population slots")

    pop = lo + rng.random((npop, dim)) * (hi - lo)
    pop[: len(seeds)] = np.clip(seeds, lo, hi)
    if project is not None:
        pop = project(pop)
    fit = np.asarray(objective(pop), dtype=float)
    evals = npop
    best = int(np.argmax(fit))
    best_x, best_f = pop[best].copy(), float(fit[best])

    idx = np.arange(npop)
    for _ in range(gens):
        # three distinct donors per member, none equal to the member itself
        keys = rng.random((npop, npop))
        keys[idx, idx] = np.inf
        donors = np.argsort(keys, axis=1)[:, :3]
        mutant = pop[donors[:, 0]] + params.weight * (pop[donors[:, 1]] - pop[donors[:, 2]])
        mutant = np.clip(mutant, lo, hi)
        cross = rng.random((npop, dim)) < params.crossover
        cross[idx, rng.integers(dim, size=npop)] = True
        trial = np.where(cross, mutant, pop)
        if project is not None:
            trial = project(trial)
        trial_fit = np.asarray(objective(trial), dtype=float)
        evals += npop
        better = trial_fit >= fit
        pop[better] = trial[better]
        fit[better] = trial_fit[better]
        top = int(np.argmax(trial_fit))
        if trial_fit[top] > best_f:
            best_x, best_f = trial[top].copy(), float(trial_fit[top])
    return DEResult(x=best_x, value=best_f, evaluations=evals)
