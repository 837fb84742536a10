"""Deterministic discrete-event backbone: virtual clock, event queue, seeded streams.

All concurrency in the modelled system is represented by event interleaving on
a single host thread. Nothing here reads the host wall clock.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np


class EventInPastError(ValueError):
    pass


class VirtualClock:
    def __init__(self, now: float = 0.0):
        if now < 0:
            raise ValueError("virtual time must be non-negative")
        self._now = float(now)

    @property
    def now(self) -> float:
        return self._now

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise EventInPastError(f"cannot move clock back from {self._now} to {t}")
        self._now = float(t)


@dataclass(order=True)
class SimEvent:
    """A scheduled event. Ordering is by ``(fire_at, sequence)`` only."""

    fire_at: float
    sequence: int = -1
    kind: str = field(default="checkpoint", compare=False)
    data: dict = field(default_factory=dict, compare=False)

    def summary(self) -> dict:
        return {"fire_at": self.fire_at, "sequence": self.sequence, "kind": self.kind, **_summarize(self.data)}


def _summarize(data: dict) -> dict:
    out = {}
    for key, value in data.items():
        if isinstance(value, (str, int, float, bool)) or value is None:
            out[key] = value
    return out


class EventQueue:
    """Priority queue of :class:`SimEvent` keyed by ``(fire_at, sequence)``.

    The sequence counter is owned by the queue so that events scheduled at the
    same virtual time pop in scheduling order.
    """

    def __init__(self, clock: VirtualClock | None = None):
        self.clock = clock if clock is not None else VirtualClock()
        self._heap: list[SimEvent] = []
        self._counter = itertools.count()
        self.log: list[dict] = []

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.fire_at < self.clock.now:
            raise EventInPastError(f"event at {event.fire_at} is before now={self.clock.now}")
        event.sequence = next(self._counter)
        heapq.heappush(self._heap, event)
        return event

    def at(self, fire_at: float, kind: str, **data: Any) -> SimEvent:
        return self.schedule(SimEvent(float(fire_at), kind=kind, data=data))

    def peek(self) -> SimEvent | None:
        return self._heap[0] if self._heap else None

    def pop(self) -> SimEvent:
        event = heapq.heappop(self._heap)
        self.clock.advance_to(event.fire_at)
        self.log.append(event.summary())
        return event

    def pending(self) -> list[SimEvent]:
        return sorted(self._heap)


def run_until(queue: EventQueue, horizon: float, handler: Callable[[SimEvent], None]) -> int:
    """Process every event with ``fire_at <= horizon`` in order, then set the clock to ``horizon``.

    The handler may schedule further events; those within the horizon are
    processed in the same call. Returns the number of events handled.
    """
    if horizon < queue.clock.now:
        raise EventInPastError(f"horizon {horizon} is before now={queue.clock.now}")
    handled = 0
    while queue.peek() is not None and queue.peek().fire_at <= horizon:
        handler(queue.pop())
        handled += 1
    queue.clock.advance_to(horizon)
    return handled


def _name_words(name: str) -> list[int]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


class RngRegistry:
    """Named random streams derived from ``(master_seed, name)``.

    Each stream is a ``numpy.random.Generator`` seeded from a ``SeedSequence``
    whose entropy mixes the master seed with a hash of the name, so streams
    do not depend on creation order or on how many other streams exist.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = self.fresh(name)
        return self._streams[name]

    def fresh(self, name: str) -> np.random.Generator:
        """A new generator at the start of the named stream (does not touch the cached one)."""
        seq = np.random.SeedSequence([self.master_seed & 0xFFFFFFFFFFFFFFFF, *_name_words(name)])
        return np.random.Generator(np.random.PCG64(seq))

    def names(self) -> list[str]:
        return sorted(self._streams)


def write_jsonl(records: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")
