"""Simulated workers: task/result messages, operator models and the idle/busy pool."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import tasks as _tasks
from .population import OperatorKind
from .sim import EventQueue

FORBIDDEN_FEEDBACK_KEYS = frozenset({"val_score", "test_score", "val", "test", "labels"})


class MalformedTaskError(ValueError):
    pass


class NoIdleWorkerError(RuntimeError):
    pass


class OperatorType(str, enum.Enum):
    SINGLE_TURN = "single_turn"
    MULTI_STEP = "multi_step"


@dataclass(frozen=True)
class OperatorModel:
    """How a worker turns parents into a child and how long it takes.

    Durations are log-normal with the given median and log-sd, truncated at
    ``duration_cap``; a truncated run fails with probability
    ``timeout_failure_prob``.
    """

    kind: OperatorType = OperatorType.MULTI_STEP
    max_steps: int = 5
    step_scale: float | None = None
    failure_prob: float = 0.0
    duration_median: float = 1.0
    duration_sigma: float = 0.5
    duration_cap: float = 9.0
    timeout_failure_prob: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorType(self.kind))
        if self.kind is OperatorType.SINGLE_TURN and self.max_steps != 1:
            object.__setattr__(self, "max_steps", 1)
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= self.failure_prob <= 1.0:
            raise ValueError("failure_prob must lie in [0, 1]")
        if self.duration_median <= 0 or self.duration_sigma < 0 or self.duration_cap <= 0:
            raise ValueError("duration parameters must be positive")


@dataclass
class WorkerTask:
    task_id: str
    operator_kind: OperatorKind
    parent_genomes: list = field(default_factory=list)
    parent_ids: list[str] = field(default_factory=list)
    parent_feedback: list[dict] = field(default_factory=list)
    dispatched_at: float = 0.0

    def __post_init__(self):
        self.operator_kind = OperatorKind(self.operator_kind)

    def validate(self) -> None:
        if len(self.parent_genomes) != self.operator_kind.n_parents:
            raise MalformedTaskError(
                f"{self.operator_kind.value} task needs {self.operator_kind.n_parents} parent genomes, "
                f"got {len(self.parent_genomes)}"
            )
        for fb in self.parent_feedback:
            leaked = FORBIDDEN_FEEDBACK_KEYS.intersection(fb)
            if leaked:
                raise MalformedTaskError(f"parent feedback carries hidden fields {sorted(leaked)}")

    def summary(self) -> dict:
        return {
            "task_id": self.task_id,
            "operator_kind": self.operator_kind.value,
            "parent_ids": list(self.parent_ids),
            "parent_feedback": [dict(fb) for fb in self.parent_feedback],
            "dispatched_at": self.dispatched_at,
        }


@dataclass
class WorkerResult:
    task_id: str
    genome: Any
    steps_taken: int
    duration: float
    failed: bool = False
    timed_out: bool = False
    accepted: list[bool] = field(default_factory=list)
    train_trace: list[float] = field(default_factory=list)


def draw_duration(model: OperatorModel, rng: np.random.Generator) -> tuple[float, bool]:
    """Log-normal duration truncated at the cap; returns ``(duration, hit_cap)``."""
    d = model.duration_median * float(np.exp(model.duration_sigma * rng.standard_normal()))
    if d > model.duration_cap:
        return model.duration_cap, True
    return d, False


def execute(task: WorkerTask, model: OperatorModel, env, rng: np.random.Generator) -> WorkerResult:
    """Run one operator invocation.

    ``env`` provides ``task`` (a :class:`~asyncevo.tasks.SyntheticTask`) and
    ``train_score(genome)``. The first step applies the draft/mutation/
    crossover primitive; every further step of a multi-step operator proposes
    a local move and keeps it only if the training score improves.

    The stream is consumed in a fixed order (duration, timeout coin, failure
    coin, moves) and the genome is built even for failed runs, so later draws
    never depend on whether a run failed.
    """
    task.validate()
    landscape = env.task
    duration, hit_cap = draw_duration(model, rng)
    timeout_fail = rng.random() < model.timeout_failure_prob
    crashed = rng.random() < model.failure_prob
    failed = crashed or (hit_cap and timeout_fail)

    kind = task.operator_kind
    if kind is OperatorKind.DRAFT:
        g = _tasks.draft(landscape, rng)
    elif kind is OperatorKind.MUTATION:
        g = _tasks.mutate(landscape, task.parent_genomes[0], model.step_scale, rng)
    else:
        g = _tasks.crossover(landscape, task.parent_genomes[0], task.parent_genomes[1], rng)

    current = env.train_score(g)
    trace, accepted = [current], []
    for _ in range(model.max_steps - 1):
        proposal = _tasks.mutate(landscape, g, model.step_scale, rng)
        s = env.train_score(proposal)
        ok = s > current
        accepted.append(ok)
        if ok:
            g, current = proposal, s
        trace.append(current)

    return WorkerResult(
        task_id=task.task_id,
        genome=None if failed else g,
        steps_taken=model.max_steps,
        duration=duration,
        failed=failed,
        timed_out=hit_cap,
        accepted=accepted,
        train_trace=trace,
    )


class WorkerPool:
    """Idle/busy table for ``n`` simulated workers, owned by the orchestrator."""

    def __init__(self, n_workers: int):
        if n_workers < 1:
            raise ValueError("need at least one worker")
        self.busy: list[str | None] = [None] * n_workers
        self.transitions: list[dict] = []

    def __len__(self) -> int:
        return len(self.busy)

    def idle_ids(self) -> list[int]:
        return [w for w, t in enumerate(self.busy) if t is None]

    def n_busy(self) -> int:
        return sum(t is not None for t in self.busy)

    def dispatch(
        self,
        task: WorkerTask,
        queue: EventQueue,
        run: Callable[[int], WorkerResult],
        worker_id: int | None = None,
        extra_delay: float = 0.0,
    ) -> int:
        """Hand ``task`` to an idle worker (lowest id unless given) and schedule its completion.

        ``extra_delay`` keeps the worker busy past its own run, e.g. while the
        orchestrator evaluates the result in the foreground.
        """
        idle = self.idle_ids()
        if not idle:
            raise NoIdleWorkerError("no idle worker; wait for the next completion event")
        wid = idle[0] if worker_id is None else worker_id
        if self.busy[wid] is not None:
            raise NoIdleWorkerError(f"worker {wid} is busy")
        result = run(wid)
        self.busy[wid] = task.task_id
        now = queue.clock.now
        self.transitions.append({"time": now, "worker": wid, "to": "busy", "task_id": task.task_id})
        queue.at(
            now + result.duration + extra_delay,
            "worker_completed",
            worker=wid,
            task_id=task.task_id,
            duration=result.duration,
            failed=result.failed,
            result=result,
        )
        return wid

    def release(self, worker_id: int, now: float) -> None:
        if self.busy[worker_id] is None:
            raise RuntimeError(f"worker {worker_id} is already idle")
        self.transitions.append({"time": now, "worker": worker_id, "to": "idle", "task_id": self.busy[worker_id]})
        self.busy[worker_id] = None


def worker_pool_dispatch(pool: WorkerPool, task: WorkerTask, queue: EventQueue, run) -> int:
    return pool.dispatch(task, queue, run)
