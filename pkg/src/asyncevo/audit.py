"""Post-hoc checks over a finished run's logs.

Each check returns a list of human-readable violations; an empty list means
the property held for the whole run.
"""

from __future__ import annotations

import json
from collections import defaultdict

from .orchestrator import RunReport
from .visibility import can_see
from .workers import FORBIDDEN_FEEDBACK_KEYS


def visibility_violations(report: RunReport) -> list[str]:
    """Scores handed to a role that may not see them, and hidden fields inside dispatched tasks."""
    bad = []
    for rec in report.evaluation_log:
        if not can_see(rec["scope"], rec["split"]):
            bad.append(f"{rec['scope']} received a {rec['split']} score for {rec['candidate_id']} at t={rec['time']}")
    for task in report.dispatch_log:
        text = json.dumps(task.get("parent_feedback", []))
        for fb in task.get("parent_feedback", []):
            leaked = FORBIDDEN_FEEDBACK_KEYS.intersection(fb)
            if leaked:
                bad.append(f"task {task['task_id']} carries {sorted(leaked)}")
        if '"val_score"' in text or '"test_score"' in text:
            bad.append(f"task {task['task_id']} payload mentions a hidden score")
    return bad


def split_instability(report: RunReport) -> list[str]:
    """Splits whose fingerprint changed during the run."""
    seen: dict[str, str] = {}
    bad = []
    for rec in report.evaluation_log:
        split = rec["split"]
        if split == "self_reported":
            continue
        fp = seen.setdefault(split, rec["split_fingerprint"])
        if fp != rec["split_fingerprint"]:
            bad.append(f"{split} fingerprint changed at t={rec['time']}")
    return bad


def idle_gaps(report: RunReport) -> list[str]:
    """Idle-to-busy transitions that happen neither at t=0 nor at that worker's release."""
    released_at: dict[int, float] = {}
    bad = []
    for tr in report.transitions:
        w = tr["worker"]
        if tr["to"] == "idle":
            released_at[w] = tr["time"]
        elif tr["time"] != 0.0 and released_at.get(w) != tr["time"]:
            bad.append(f"worker {w} went busy at t={tr['time']} after idling since {released_at.get(w)}")
    # a released worker left idle before the budget expired is also a gap
    busy_again = defaultdict(list)
    for tr in report.transitions:
        if tr["to"] == "busy":
            busy_again[tr["worker"]].append(tr["time"])
    for tr in report.transitions:
        if tr["to"] == "idle" and tr["time"] < report.config.budget and tr["time"] not in busy_again[tr["worker"]]:
            bad.append(f"worker {tr['worker']} released at t={tr['time']} and never re-dispatched")
    return bad


def lineage_violations(report: RunReport) -> list[str]:
    """Best-of-K runs must be pure drafts; every run's parents must predate their children."""
    bad = []
    bok = report.config.search_strategy.value == "best_of_k"
    for c in report.population:
        if bok and (c.operator_kind.value != "draft" or c.parent_ids):
            bad.append(f"{c.id} has lineage in a best_of_k run")
        for pid in c.parent_ids:
            if report.population[pid].created_at > c.created_at:
                bad.append(f"{c.id} is older than its parent {pid}")
    return bad


def full_audit(report: RunReport) -> dict[str, list[str]]:
    return {
        "visibility": visibility_violations(report),
        "split_stability": split_instability(report),
        "steady_state": idle_gaps(report),
        "lineage": lineage_violations(report),
    }
