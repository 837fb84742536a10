"""Temperature-scaled rank selection and the mutation/crossover dispatch choice."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .population import EmptyPopulationError, OperatorKind, PopulationDB
from .visibility import Scope

MAX_CROSSOVER_RESAMPLES = 16


class InvalidRanksError(ValueError):
    pass


class NonPositiveTemperatureError(ValueError):
    pass


@dataclass
class SelectionPolicy:
    temperature: float = 0.2
    crossover_prob: float = 0.15
    rng_stream: str = "selection"

    def __post_init__(self):
        if not self.temperature > 0:
            raise NonPositiveTemperatureError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError(f"crossover_prob must lie in [0, 1], got {self.crossover_prob}")


def selection_distribution(ranks, temperature: float) -> np.ndarray:
    """Selection probabilities for the given ranks (1 = best).

    Weight of rank ``r`` among ``n`` is ``(n - r + 1) ** (1 / T)``. Weights are
    formed in log space and shifted by their maximum before exponentiating, so
    ``T = 0.01`` with ``n = 1000`` neither overflows nor loses normalization.
    """
    if not temperature > 0:
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {temperature}")
    ranks = np.asarray(ranks)
    n = ranks.size
    if n == 0 or ranks.ndim != 1:
        raise InvalidRanksError("ranks must be a non-empty 1-D sequence")
    if not np.issubdtype(ranks.dtype, np.integer) or not np.array_equal(np.sort(ranks), np.arange(1, n + 1)):
        raise InvalidRanksError("ranks must be a permutation of 1..n")
    logw = np.log((n - ranks + 1).astype(float)) / temperature
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def parent_probabilities(
    db: PopulationDB, policy: SelectionPolicy, key: str = "search", higher_is_better: bool = True
) -> dict[str, float]:
    if len(db) == 0:
        raise EmptyPopulationError("cannot select from an empty population")
    view = db.ranked_view(key, Scope.ORCHESTRATOR, higher_is_better)
    probs = selection_distribution(np.array([r for r, _ in view]), policy.temperature)
    return {cid: float(p) for (_, cid), p in zip(view, probs)}


def sample_parent(
    db: PopulationDB,
    policy: SelectionPolicy,
    rng: np.random.Generator,
    key: str = "search",
    higher_is_better: bool = True,
    size: int | None = None,
):
    """Draw one parent id (or ``size`` ids, with replacement) by rank selection."""
    probs = parent_probabilities(db, policy, key, higher_is_better)
    ids = list(probs)
    p = np.fromiter(probs.values(), dtype=float, count=len(ids))
    if size is None:
        return ids[int(rng.choice(len(ids), p=p))]
    return [ids[i] for i in rng.choice(len(ids), size=size, p=p)]


def choose_operator(policy: SelectionPolicy, population_size: int, rng: np.random.Generator) -> OperatorKind:
    if population_size < 1:
        raise ValueError("population_size must be >= 1")
    # always draw so the stream advance does not depend on population size
    u = rng.random()
    if population_size < 2:
        return OperatorKind.MUTATION
    return OperatorKind.CROSSOVER if u < policy.crossover_prob else OperatorKind.MUTATION


def choose_parents(
    db: PopulationDB,
    policy: SelectionPolicy,
    rng: np.random.Generator,
    key: str = "search",
    higher_is_better: bool = True,
) -> tuple[OperatorKind, list[str]]:
    """Pick the operator and its parents for one dispatch.

    Crossover parents are drawn independently and must differ; the second is
    redrawn up to 16 times before falling back to a mutation of the first.
    """
    kind = choose_operator(policy, len(db), rng)
    probs = parent_probabilities(db, policy, key, higher_is_better)
    ids = list(probs)
    p = np.fromiter(probs.values(), dtype=float, count=len(ids))
    first = ids[int(rng.choice(len(ids), p=p))]
    if kind is OperatorKind.MUTATION:
        return kind, [first]
    for _ in range(MAX_CROSSOVER_RESAMPLES):
        second = ids[int(rng.choice(len(ids), p=p))]
        if second != first:
            return kind, [first, second]
    return OperatorKind.MUTATION, [first]
