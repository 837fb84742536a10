"""Role-based visibility rules for per-split scores."""

from __future__ import annotations

import enum


class Scope(str, enum.Enum):
    WORKER = "worker"
    ORCHESTRATOR = "orchestrator"
    SELECTOR = "selector"
    AUDITOR = "auditor"


SPLITS = ("train", "search", "val", "test")

# "self_reported" is the worker's own claim, so every role may read it.
_VISIBLE: dict[Scope, frozenset[str]] = {
    Scope.WORKER: frozenset({"train", "self_reported"}),
    Scope.ORCHESTRATOR: frozenset({"train", "search", "self_reported"}),
    Scope.SELECTOR: frozenset({"train", "search", "self_reported", "val"}),
    Scope.AUDITOR: frozenset({"train", "search", "self_reported", "val", "test"}),
}


class ScopeViolation(PermissionError):
    def __init__(self, scope: Scope, key: str):
        super().__init__(f"scope {Scope(scope).value!r} may not read {key!r} scores")
        self.scope = Scope(scope)
        self.key = key


def can_see(scope: Scope | str, key: str) -> bool:
    return key in _VISIBLE[Scope(scope)]


def check(scope: Scope | str, key: str) -> None:
    if not can_see(scope, key):
        raise ScopeViolation(Scope(scope), key)
