"""In-memory population database with per-split score bookkeeping and ranked views."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .visibility import Scope, check


class OperatorKind(str, enum.Enum):
    DRAFT = "draft"
    MUTATION = "mutation"
    CROSSOVER = "crossover"

    @property
    def n_parents(self) -> int:
        return {"draft": 0, "mutation": 1, "crossover": 2}[self.value]


class PopulationError(ValueError):
    pass


class DuplicateIdError(PopulationError):
    pass


class UnknownParentError(PopulationError):
    pass


class EmptyPopulationError(PopulationError):
    pass


class MissingScoreError(PopulationError):
    pass


@dataclass
class EvaluationRecord:
    """Per-split scores of one candidate.

    The test score is held privately and only comes out through
    :meth:`read` with auditor scope.
    """

    search_score: float | None = None
    val_score: float | None = None
    self_reported_score: float | None = None
    evaluated_at: float | None = None
    train_score: float | None = None
    _test_score: float | None = field(default=None, repr=False)

    def read(self, key: str, scope: Scope | str) -> float | None:
        check(scope, key)
        if key == "test":
            return self._test_score
        return getattr(self, f"{key}_score")

    def set_test(self, value: float | None) -> None:
        self._test_score = value

    def has(self, key: str) -> bool:
        if key == "test":
            return self._test_score is not None
        return getattr(self, f"{key}_score") is not None

    def to_dict(self) -> dict:
        return {
            "train_score": self.train_score,
            "search_score": self.search_score,
            "val_score": self.val_score,
            "test_score": self._test_score,
            "self_reported_score": self.self_reported_score,
            "evaluated_at": self.evaluated_at,
        }


@dataclass
class Candidate:
    id: str
    genome: Any
    operator_kind: OperatorKind = OperatorKind.DRAFT
    parent_ids: list[str] = field(default_factory=list)
    created_at: float = 0.0
    scores: EvaluationRecord = field(default_factory=EvaluationRecord)

    def __post_init__(self):
        self.operator_kind = OperatorKind(self.operator_kind)
        if len(self.parent_ids) != self.operator_kind.n_parents:
            raise PopulationError(
                f"{self.operator_kind.value} candidate needs {self.operator_kind.n_parents} parents, "
                f"got {len(self.parent_ids)}"
            )

    def to_dict(self) -> dict:
        genome = self.genome.tolist() if isinstance(self.genome, np.ndarray) else self.genome
        return {
            "id": self.id,
            "genome": genome,
            "operator_kind": self.operator_kind.value,
            "parent_ids": list(self.parent_ids),
            "created_at": self.created_at,
            "scores": self.scores.to_dict(),
        }


class PopulationDB:
    """Id-keyed candidate store plus an append-only insertion log.

    Only the orchestrator mutates a PopulationDB. Ranked queries read scores
    through the visibility rules, so asking for ``"test"`` under orchestrator
    scope raises :class:`~asyncevo.visibility.ScopeViolation`.
    """

    def __init__(self):
        self.candidates: dict[str, Candidate] = {}
        self.insertion_log: list[str] = []

    def __len__(self) -> int:
        return len(self.insertion_log)

    def __contains__(self, cid: str) -> bool:
        return cid in self.candidates

    def __iter__(self) -> Iterator[Candidate]:
        return (self.candidates[cid] for cid in self.insertion_log)

    def __getitem__(self, cid: str) -> Candidate:
        return self.candidates[cid]

    def insert(self, c: Candidate) -> str:
        if c.id in self.candidates:
            raise DuplicateIdError(f"candidate id {c.id!r} already present")
        for pid in c.parent_ids:
            if pid not in self.candidates:
                raise UnknownParentError(f"parent {pid!r} of {c.id!r} is not in the population")
            if self.candidates[pid].created_at > c.created_at:
                raise PopulationError(f"{c.id!r} is older than its parent {pid!r}")
        self.candidates[c.id] = c
        self.insertion_log.append(c.id)
        return c.id

    def snapshot(self) -> "PopulationDB":
        """Shallow read-only copy: same candidate objects, frozen membership."""
        snap = PopulationDB()
        snap.candidates = dict(self.candidates)
        snap.insertion_log = list(self.insertion_log)
        return snap

    def ranked_view(
        self,
        key: str = "search",
        scope: Scope | str = Scope.ORCHESTRATOR,
        higher_is_better: bool = True,
        ids: Sequence[str] | None = None,
    ) -> list[tuple[int, str]]:
        """Return ``(rank, id)`` pairs, rank 1 best; ties go to the earlier insertion."""
        order = list(self.insertion_log if ids is None else ids)
        if not order:
            raise EmptyPopulationError("cannot rank an empty population")
        values = []
        for cid in order:
            v = self.candidates[cid].scores.read(key, scope)
            if v is None:
                raise MissingScoreError(f"candidate {cid!r} has no {key} score")
            values.append(v)
        values = np.asarray(values, dtype=float)
        # stable sort on the oriented score keeps insertion order among ties
        oriented = -values if higher_is_better else values
        perm = np.argsort(oriented, kind="stable")
        return [(rank + 1, order[i]) for rank, i in enumerate(perm)]

    def best(self, key: str = "search", scope: Scope | str = Scope.ORCHESTRATOR, higher_is_better: bool = True) -> str:
        return self.ranked_view(key, scope, higher_is_better)[0][1]

    def eligible_ids(self, *keys: str) -> list[str]:
        return [cid for cid in self.insertion_log if all(self.candidates[cid].scores.has(k) for k in keys)]

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for c in self:
                fh.write(json.dumps(c.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "PopulationDB":
        db = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                s = rec["scores"]
                scores = EvaluationRecord(
                    search_score=s.get("search_score"),
                    val_score=s.get("val_score"),
                    self_reported_score=s.get("self_reported_score"),
                    evaluated_at=s.get("evaluated_at"),
                    train_score=s.get("train_score"),
                )
                scores.set_test(s.get("test_score"))
                genome = rec["genome"]
                db.insert(
                    Candidate(
                        id=rec["id"],
                        genome=np.asarray(genome, dtype=float) if isinstance(genome, list) else genome,
                        operator_kind=OperatorKind(rec["operator_kind"]),
                        parent_ids=list(rec["parent_ids"]),
                        created_at=rec["created_at"],
                        scores=scores,
                    )
                )
        return db


def insert(db: PopulationDB, c: Candidate) -> str:
    return db.insert(c)


def ranked_view(db: PopulationDB, key: str = "search", **kwargs) -> list[tuple[int, str]]:
    return db.ranked_view(key, **kwargs)


def best(db: PopulationDB, key: str = "search", **kwargs) -> str:
    return db.best(key, **kwargs)
