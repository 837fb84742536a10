"""Hidden consistent evaluation: fixed splits, scope-gated scoring, self-reported ablation, final selection."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import tasks as _tasks
from .population import EmptyPopulationError, EvaluationRecord, MissingScoreError, PopulationDB
from .visibility import Scope, ScopeViolation, check

SPLIT_NAMES = ("train", "search", "val")


class PoolTooSmallError(ValueError):
    pass


class InvalidFractionsError(ValueError):
    pass


class MalformedGenomeError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    pool_size: int = 1000

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidFractionsError(f"fractions must be three positive reals summing to 1, got {self.fractions}")
        object.__setattr__(self, "fractions", fr)


def split_sizes(pool_size: int, fractions) -> tuple[int, int, int]:
    """Largest-remainder rounding; equal remainders favour the earlier split (train, search, val)."""
    raw = [pool_size * f for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    short = pool_size - sum(sizes)
    order = sorted(range(3), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return tuple(sizes)


def make_splits(pool_size: int, spec: SplitSpec) -> dict[str, np.ndarray]:
    """Partition ``range(pool_size)`` into sorted train/search/val index arrays, deterministically in the seed."""
    if pool_size < 10:
        raise PoolTooSmallError(f"pool_size must be >= 10, got {pool_size}")
    sizes = split_sizes(pool_size, spec.fractions)
    perm = np.random.default_rng(np.random.SeedSequence([spec.split_seed & 0xFFFFFFFFFFFFFFFF, 0x5EED])).permutation(
        pool_size
    )
    out, start = {}, 0
    for name, size in zip(SPLIT_NAMES, sizes):
        out[name] = np.sort(perm[start:start + size])
        start += size
    return out


def fingerprint(indices: np.ndarray) -> str:
    return hashlib.sha256(np.asarray(indices, dtype=np.int64).tobytes()).hexdigest()[:16]


class EvalKind(str, enum.Enum):
    HCE = "hce"
    SELF_REPORTED = "self_reported"


@dataclass(frozen=True)
class EvalMode:
    kind: EvalKind = EvalKind.HCE
    resplit: bool = True
    noise_sigma: float = 0.05
    corruption_prob: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EvalKind(self.kind))
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.corruption_prob <= 1.0:
            raise ValueError("corruption_prob must lie in [0, 1]")


class SelectionRule(str, enum.Enum):
    BY_VAL = "by_val"
    BY_SEARCH = "by_search"
    ORACLE_BY_TEST = "oracle_by_test"


# the role under which each split's score is computed and stored
_STORE_SCOPE = {"train": Scope.WORKER, "search": Scope.ORCHESTRATOR, "val": Scope.SELECTOR, "test": Scope.AUDITOR}


class Evaluator:
    """Isolated scoring service for one run.

    Holds the task, the fixed split partition and an append-only log of every
    score it hands out, tagged with the split fingerprint and the receiving
    scope. The test split has no index partition here (the task designates
    it); its fingerprint is derived from the split seed alone.
    """

    def __init__(self, task: _tasks.SyntheticTask, spec: SplitSpec | None = None):
        self.spec = spec if spec is not None else SplitSpec(split_seed=task.split_seed)
        self.task = task.with_overrides(split_seed=self.spec.split_seed)
        self.partition = make_splits(self.spec.pool_size, self.spec)
        self.fingerprints = {name: fingerprint(idx) for name, idx in self.partition.items()}
        self.fingerprints["test"] = hashlib.sha256(f"test:{self.spec.split_seed}".encode()).hexdigest()[:16]
        self.log: list[dict] = []

    def _check_genome(self, genome) -> np.ndarray:
        g = np.asarray(genome, dtype=float)
        if not self.task.in_domain(g):
            raise MalformedGenomeError(f"genome is not a finite {self.task.dim}-vector inside the task box")
        return g

    def evaluate(self, genome, split: str, scope: Scope | str, candidate_id: str | None = None, time: float | None = None) -> float:
        if split not in self.fingerprints:
            raise ValueError(f"unknown split {split!r}")
        check(scope, split)
        g = self._check_genome(genome)
        value = float(_tasks.score(self.task, g, split))
        self.log.append(
            {
                "candidate_id": candidate_id,
                "split": split,
                "split_fingerprint": self.fingerprints[split],
                "score": value,
                "scope": Scope(scope).value,
                "time": time,
            }
        )
        return value

    def evaluate_all(
        self, genome, candidate_id: str, time: float, splits=("search", "val", "test")
    ) -> EvaluationRecord:
        """Score every requested split, each under the role allowed to hold it."""
        rec = EvaluationRecord(evaluated_at=time)
        for split in splits:
            value = self.evaluate(genome, split, _STORE_SCOPE[split], candidate_id, time)
            if split == "test":
                rec.set_test(value)
            else:
                setattr(rec, f"{split}_score", value)
        return rec

    def train_score(self, genome) -> float:
        """Worker-visible training signal; not logged (called once per local-search step)."""
        return float(_tasks.score(self.task, self._check_genome(genome), "train"))

    def self_reported_evaluate(self, genome, mode: EvalMode, rng: np.random.Generator, candidate_id: str | None = None, time: float | None = None) -> float:
        return self_reported_evaluate(genome, mode, self.task, rng, log=self.log, candidate_id=candidate_id, time=time)


def self_reported_evaluate(
    genome,
    mode: EvalMode,
    task: _tasks.SyntheticTask,
    rng: np.random.Generator,
    log: list | None = None,
    candidate_id: str | None = None,
    time: float | None = None,
) -> float:
    """A worker's own metric: fresh random re-split, observation noise and an occasional silent bug.

    Three uniform-ish draws are always taken (corruption coin, re-split seed,
    noise) so the stream advances identically whatever the outcome.
    """
    if mode.kind is not EvalKind.SELF_REPORTED:
        raise ValueError("self_reported_evaluate requires a self_reported EvalMode")
    corrupt = rng.random() < mode.corruption_prob
    resplit_seed = int(rng.integers(0, 2**63 - 1))
    eps = rng.standard_normal()
    if corrupt:
        value = task.perfect_score
        fp = "corrupted"
    else:
        g = np.asarray(genome, dtype=float)
        base = task.true_fn(g)
        if task.gap_strength:
            seed = resplit_seed if mode.resplit else task.split_seed
            base = base + task.gap_strength * task.split_field("search", g, seed=seed)
        value = float(base + mode.noise_sigma * eps)
        fp = f"resplit:{resplit_seed:x}" if mode.resplit else "search"
    if log is not None:
        log.append(
            {
                "candidate_id": candidate_id,
                "split": "self_reported",
                "split_fingerprint": fp,
                "score": value,
                "scope": Scope.WORKER.value,
                "time": time,
            }
        )
    return value


_RULE_KEY = {SelectionRule.BY_VAL: "val", SelectionRule.ORACLE_BY_TEST: "test"}


def final_select(
    db: PopulationDB,
    rule: SelectionRule | str,
    scope: Scope | str = Scope.SELECTOR,
    search_key: str = "search",
    higher_is_better: bool = True,
) -> str:
    """Pick the final submission under ``rule``.

    ``by_val`` reads only validation scores; ``by_search`` reads the search
    signal (``search_key`` lets self-reported runs pass ``"self_reported"``);
    ``oracle_by_test`` is for offline analysis and needs auditor scope.
    Candidates lacking the score are not eligible.
    """
    rule = SelectionRule(rule)
    if rule is SelectionRule.ORACLE_BY_TEST and Scope(scope) is not Scope.AUDITOR:
        raise ScopeViolation(Scope(scope), "test")
    key = _RULE_KEY.get(rule, search_key)
    check(scope, key)
    if len(db) == 0:
        raise EmptyPopulationError("no candidates to select from")
    ids = db.eligible_ids(key)
    if not ids:
        raise MissingScoreError(f"no candidate has a {key} score")
    return db.ranked_view(key, scope, higher_is_better, ids=ids)[0][1]
