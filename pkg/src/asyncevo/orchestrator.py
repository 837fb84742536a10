"""Steady-state evolutionary main loop over a simulated worker pool."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import selection as _selection
from .evaluation import EvalKind, EvalMode, Evaluator, SelectionRule, SplitSpec, final_select, self_reported_evaluate
from .population import Candidate, OperatorKind, PopulationDB
from .sim import EventQueue, RngRegistry, run_until, write_jsonl
from .tasks import SyntheticTask, make_task
from .visibility import Scope
from .workers import OperatorModel, WorkerPool, WorkerResult, WorkerTask, execute

TRAJECTORY_COLUMNS = ("time", "best_test_by_val", "best_test_by_search", "best_test_oracle", "best_search")


class InvalidConfigError(ValueError):
    pass


class SearchStrategy(str, enum.Enum):
    EVOLUTION = "evolution"
    BEST_OF_K = "best_of_k"


@dataclass
class RunConfig:
    """Everything one simulated run depends on.

    ``checkpoints`` is either a list of virtual times or an integer count of
    evenly spaced cuts ending at the budget. ``initial_population`` is the
    number of drafts dispatched before evolution starts; every worker gets a
    draft at ``t = 0`` regardless.
    """

    n_workers: int = 8
    budget: float = 72.0
    selection: _selection.SelectionPolicy = field(default_factory=_selection.SelectionPolicy)
    operator: OperatorModel = field(default_factory=OperatorModel)
    eval_mode: EvalMode = field(default_factory=EvalMode)
    search_strategy: SearchStrategy = SearchStrategy.EVOLUTION
    task: SyntheticTask = field(default_factory=lambda: make_task("gapped-rugged"))
    split_spec: SplitSpec = field(default_factory=SplitSpec)
    master_seed: int = 0
    checkpoints: int | list[float] = 12
    initial_population: int | None = None
    eval_duration: float = 0.0
    score_val: bool = True

    def __post_init__(self):
        self.search_strategy = SearchStrategy(self.search_strategy)
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.n_workers, int) or self.n_workers < 1:
            raise InvalidConfigError(f"n_workers must be a positive integer, got {self.n_workers!r}")
        if not self.budget > 0:
            raise InvalidConfigError(f"budget must be > 0, got {self.budget!r}")
        if self.eval_duration < 0:
            raise InvalidConfigError("eval_duration must be >= 0")
        if self.initial_population is not None and self.initial_population < 1:
            raise InvalidConfigError("initial_population must be >= 1")
        cps = self.checkpoint_times()
        if any(t < 0 or t > self.budget for t in cps) or list(cps) != sorted(cps):
            raise InvalidConfigError("checkpoints must be sorted times within [0, budget]")

    def checkpoint_times(self) -> list[float]:
        if isinstance(self.checkpoints, int):
            if self.checkpoints < 1:
                raise InvalidConfigError("checkpoint count must be >= 1")
            return [self.budget * (k + 1) / self.checkpoints for k in range(self.checkpoints)]
        return [float(t) for t in self.checkpoints]

    @property
    def fitness_key(self) -> str:
        return "self_reported" if self.eval_mode.kind is EvalKind.SELF_REPORTED else "search"


@dataclass
class RunReport:
    config: RunConfig
    trajectory: list[dict]
    final_selection: dict[str, str | None]
    final_test: dict[str, float | None]
    counts: list[dict]
    population: PopulationDB
    event_log: list[dict]
    dispatch_log: list[dict]
    evaluation_log: list[dict]
    failed_attempts: list[dict]
    transitions: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "n_candidates": len(self.population),
            "final_selection": self.final_selection,
            "final_test": self.final_test,
            "counts": self.counts,
            "n_failed": len(self.failed_attempts),
            "trajectory": self.trajectory,
        }

    def trajectory_csv(self) -> str:
        lines = [",".join(TRAJECTORY_COLUMNS)]
        for row in self.trajectory:
            lines.append(",".join("" if row[c] is None else repr(float(row[c])) for c in TRAJECTORY_COLUMNS))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "report": out / "report.json",
            "trajectory": out / "trajectory.csv",
            "events": out / "events.jsonl",
            "dispatches": out / "dispatches.jsonl",
            "evaluations": out / "evaluations.jsonl",
            "population": out / "population.jsonl",
            "workers": out / "workers.jsonl",
        }
        paths["report"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        paths["trajectory"].write_text(self.trajectory_csv())
        write_jsonl(self.event_log, paths["events"])
        write_jsonl(self.dispatch_log, paths["dispatches"])
        write_jsonl(self.evaluation_log, paths["evaluations"])
        self.population.to_jsonl(paths["population"])
        write_jsonl(self.transitions, paths["workers"])
        return paths


class Orchestrator:
    """Binds population, selection, evaluation and the worker pool for one run."""

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.rngs = RngRegistry(config.master_seed)
        self.queue = EventQueue()
        self.pool = WorkerPool(config.n_workers)
        self.db = PopulationDB()
        self.evaluator = Evaluator(config.task, config.split_spec)
        self.task = self.evaluator.task
        self.counts = [{"worker": w, "completed": 0, "failed": 0} for w in range(config.n_workers)]
        self.dispatch_log: list[dict] = []
        self.failed_attempts: list[dict] = []
        self._n_tasks = 0
        self._n_drafts = 0
        self._pending: dict[str, WorkerTask] = {}

    @property
    def now(self) -> float:
        return self.queue.clock.now

    def _next_task(self) -> WorkerTask:
        cfg = self.config
        tid = f"t{self._n_tasks:05d}"
        self._n_tasks += 1
        n_init = max(cfg.initial_population or cfg.n_workers, cfg.n_workers)
        if cfg.search_strategy is SearchStrategy.BEST_OF_K or self._n_drafts < n_init or len(self.db) == 0:
            self._n_drafts += 1
            return WorkerTask(tid, OperatorKind.DRAFT, dispatched_at=self.now)
        kind, parent_ids = _selection.choose_parents(
            self.db, cfg.selection, self.rngs.stream(cfg.selection.rng_stream), cfg.fitness_key, self.task.higher_is_better
        )
        parents = [self.db[pid] for pid in parent_ids]
        feedback = [
            {
                "id": p.id,
                f"{cfg.fitness_key}_score": p.scores.read(cfg.fitness_key, Scope.ORCHESTRATOR),
                "operator_kind": p.operator_kind.value,
                "created_at": p.created_at,
            }
            for p in parents
        ]
        return WorkerTask(
            tid,
            kind,
            parent_genomes=[p.genome for p in parents],
            parent_ids=parent_ids,
            parent_feedback=feedback,
            dispatched_at=self.now,
        )

    def _dispatch(self, worker_id: int) -> None:
        task = self._next_task()
        stream = self.rngs.stream(f"worker-{worker_id}")
        results = []

        def run(wid: int) -> WorkerResult:
            results.append(execute(task, self.config.operator, self.evaluator, stream))
            return results[-1]

        self.pool.dispatch(task, self.queue, run, worker_id=worker_id, extra_delay=self.config.eval_duration)
        self._pending[task.task_id] = task
        self.dispatch_log.append({**task.summary(), "worker": worker_id, "duration": results[0].duration})

    def _on_event(self, event) -> None:
        if event.kind != "worker_completed":
            return
        wid = event.data["worker"]
        result: WorkerResult = event.data["result"]
        task = self._pending.pop(result.task_id)
        self.pool.release(wid, self.now)
        self.counts[wid]["completed"] += 1
        if result.failed:
            self.counts[wid]["failed"] += 1
            self.failed_attempts.append(
                {"task_id": task.task_id, "worker": wid, "time": self.now, "timed_out": result.timed_out}
            )
        else:
            self._insert(task, result, wid)
        if self.now < self.config.budget:
            self._dispatch(wid)

    def _insert(self, task: WorkerTask, result: WorkerResult, wid: int) -> None:
        cfg = self.config
        cid = f"c{len(self.db):05d}"
        splits = ("search", "val", "test") if cfg.score_val else ("search", "test")
        record = self.evaluator.evaluate_all(result.genome, cid, self.now, splits=splits)
        record.train_score = result.train_trace[-1]
        if cfg.eval_mode.kind is EvalKind.SELF_REPORTED:
            record.self_reported_score = self_reported_evaluate(
                result.genome,
                cfg.eval_mode,
                self.task,
                self.rngs.stream(f"self_report-{wid}"),
                log=self.evaluator.log,
                candidate_id=cid,
                time=self.now,
            )
        self.db.insert(
            Candidate(
                id=cid,
                genome=result.genome,
                operator_kind=task.operator_kind,
                parent_ids=list(task.parent_ids),
                created_at=self.now,
                scores=record,
            )
        )

    def run(self) -> RunReport:
        cfg = self.config
        for w in range(cfg.n_workers):
            self._dispatch(w)
        self.queue.at(cfg.budget, "budget_expired")
        run_until(self.queue, cfg.budget, self._on_event)
        # in-flight work at the budget is discarded but logged
        for ev in self.queue.pending():
            if ev.kind == "worker_completed":
                self.failed_attempts.append(
                    {"task_id": ev.data["task_id"], "worker": ev.data["worker"], "time": ev.fire_at, "discarded": True}
                )
        return self._report()

    def _report(self) -> RunReport:
        cfg = self.config
        rules = [SelectionRule.BY_SEARCH, SelectionRule.ORACLE_BY_TEST]
        if cfg.score_val:
            rules.insert(0, SelectionRule.BY_VAL)
        selection, final_test = {}, {}
        for rule in rules:
            try:
                cid = final_select(self.db, rule, Scope.AUDITOR, cfg.fitness_key, self.task.higher_is_better)
            except ValueError:
                cid = None
            selection[rule.value] = cid
            final_test[rule.value] = None if cid is None else self.db[cid].scores.read("test", Scope.AUDITOR)
        return RunReport(
            config=cfg,
            trajectory=trajectory(self.db, cfg.checkpoint_times(), cfg.fitness_key, self.task.higher_is_better),
            final_selection=selection,
            final_test=final_test,
            counts=self.counts,
            population=self.db,
            event_log=list(self.queue.log),
            dispatch_log=self.dispatch_log,
            evaluation_log=self.evaluator.log,
            failed_attempts=self.failed_attempts,
            transitions=self.pool.transitions,
        )


def _prefix_pick(values: np.ndarray, higher_is_better: bool) -> np.ndarray:
    """Index of the running best (earliest on ties) for every prefix."""
    v = np.where(np.isnan(values), -np.inf, values if higher_is_better else -values)
    idx = np.zeros(len(v), dtype=int)
    cur = 0
    for i in range(len(v)):
        if v[i] > v[cur]:
            cur = i
        idx[i] = cur
    return idx


def trajectory(
    db: PopulationDB, times: Sequence[float], fitness_key: str = "search", higher_is_better: bool = True
) -> list[dict]:
    """Best-so-far table at each checkpoint time (offline, auditor scope).

    Columns give the test score of the candidate chosen by validation, by the
    search signal and by the test-set oracle among candidates created up to
    that time, plus the best search signal itself.
    """
    cands = list(db)
    created = np.array([c.created_at for c in cands], dtype=float)

    def column(key: str) -> np.ndarray:
        return np.array(
            [np.nan if (v := c.scores.read(key, Scope.AUDITOR)) is None else v for c in cands], dtype=float
        )

    test = column("test")
    fit = column(fitness_key)
    val = column("val")
    pick_val = _prefix_pick(val, higher_is_better)
    pick_fit = _prefix_pick(fit, higher_is_better)
    pick_test = _prefix_pick(test, higher_is_better)
    rows = []
    for t in times:
        n = int(np.searchsorted(created, t, side="right"))
        row = {"time": float(t), "n_candidates": n}
        if n == 0:
            row.update({c: None for c in TRAJECTORY_COLUMNS[1:]})
        else:
            last = n - 1
            row["best_test_by_val"] = None if np.isnan(val[: n]).all() else float(test[pick_val[last]])
            row["best_test_by_search"] = float(test[pick_fit[last]])
            row["best_test_oracle"] = float(test[pick_test[last]])
            row["best_search"] = float(fit[pick_fit[last]])
        rows.append(row)
    return rows


def run(config: RunConfig) -> RunReport:
    return Orchestrator(config).run()


@dataclass(frozen=True)
class MatrixPoint:
    n_agents: int
    time: float
    score: float
    per_seed: tuple[float, ...]


def run_matrix(
    base: RunConfig,
    n_values: Sequence[int],
    budgets: Sequence[float],
    seeds: Sequence[int],
    metric: str = "best_search",
    normalize: bool = True,
) -> list[MatrixPoint]:
    """One run per ``(N, seed)`` to ``max(budgets)``, cut at every budget; scores averaged over seeds.

    With ``normalize`` the metric is mapped onto the task's ``[0, 100)``
    normalized scale so the points can feed the scaling-law fit directly.
    """
    if not n_values or not budgets or not seeds:
        raise InvalidConfigError("run_matrix needs non-empty N, budget and seed grids")
    cuts = sorted(float(b) for b in budgets)
    horizon = cuts[-1]
    points = []
    for n in n_values:
        per_cut = [[] for _ in cuts]
        for seed in seeds:
            cfg = _replace(base, n_workers=int(n), budget=horizon, master_seed=int(seed), checkpoints=cuts)
            report = run(cfg)
            for k, row in enumerate(report.trajectory):
                v = row[metric]
                if v is None:
                    v = cfg.task.random_baseline() if normalize else math.nan
                per_cut[k].append(float(cfg.task.normalized(v)) if normalize else float(v))
        for t, vals in zip(cuts, per_cut):
            points.append(MatrixPoint(int(n), t, float(np.mean(vals)), tuple(vals)))
    return points


def _replace(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
