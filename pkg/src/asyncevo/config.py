"""JSON experiment files: strict parsing into a RunConfig and a fully resolved echo.

A file mirrors :class:`~asyncevo.orchestrator.RunConfig` with nested objects
for the policy, operator, evaluation mode, task and splits, plus a few
experiment-level keys::

    {
      "name": "demo",
      "out_dir": "runs/demo",
      "seeds": [0, 1, 2],
      "n_workers": 8,
      "budget": 72,
      "checkpoints": 12,
      "selection": {"temperature": 0.2, "crossover_prob": 0.15},
      "operator": {"kind": "multi_step", "max_steps": 5},
      "eval_mode": {"kind": "hce"},
      "task": {"preset": "gapped-rugged", "dim": 6},
      "split_spec": {"fractions": [0.8, 0.1, 0.1]},
      "ablation": {"n_values": [1, 8]}
    }

Every key is optional; anything not listed in :data:`DEFAULTS` (or not a
field of the nested type) is rejected with an error naming the key.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .evaluation import EvalMode, SplitSpec
from .orchestrator import InvalidConfigError, RunConfig
from .selection import SelectionPolicy
from .tasks import PRESETS, SyntheticTask, make_task
from .workers import OperatorModel


class ConfigError(ValueError):
    """Unreadable, malformed or invalid experiment file."""


_RUN_SCALARS = ("n_workers", "budget", "master_seed", "checkpoints", "initial_population", "eval_duration", "score_val", "search_strategy")

ABLATION_DEFAULTS: dict[str, Any] = {
    "n_values": [1, 8],
    "self_reported": {"kind": "self_reported", "resplit": True, "noise_sigma": 0.05, "corruption_prob": 0.02},
    "operator_kind": "single_turn",
}

DEFAULTS: dict[str, Any] = {
    "name": "experiment",
    "out_dir": "runs/experiment",
    "seeds": [0, 1, 2],
    "n_workers": 8,
    "budget": 72.0,
    "master_seed": 0,
    "checkpoints": 12,
    "initial_population": None,
    "eval_duration": 0.0,
    "score_val": True,
    "search_strategy": "evolution",
    "selection": {},
    "operator": {},
    "eval_mode": {},
    "task": {"preset": "gapped-rugged"},
    "split_spec": {},
    "ablation": {},
}


@dataclass
class Experiment:
    name: str
    out_dir: str
    seeds: list[int]
    run: RunConfig
    ablation: dict = field(default_factory=lambda: dict(ABLATION_DEFAULTS))

    def resolved(self) -> dict:
        """Every setting with defaults filled in; loading this back gives the same experiment."""
        cfg = self.run
        out = {
            "name": self.name,
            "out_dir": self.out_dir,
            "seeds": list(self.seeds),
            **{k: _plain(getattr(cfg, k)) for k in _RUN_SCALARS},
            "selection": _plain(asdict(cfg.selection)),
            "operator": _plain(asdict(cfg.operator)),
            "eval_mode": _plain(asdict(cfg.eval_mode)),
            "task": {"preset": _preset_of(cfg.task), **_plain(cfg.task.to_dict())},
            "split_spec": _plain(asdict(cfg.split_spec)),
            "ablation": _plain(self.ablation),
        }
        return out

    def write_resolved(self, out_dir) -> Path:
        path = Path(out_dir) / "resolved_config.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.resolved(), indent=2, sort_keys=True) + "\n")
        return path


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, enum.Enum):
        return value.value
    return value


def _preset_of(task: SyntheticTask) -> str:
    return task.name if task.name in PRESETS else "gapped-rugged"


def _check_keys(section: str, given: dict, allowed) -> None:
    if not isinstance(given, dict):
        raise ConfigError(f"{section or 'config'} must be a JSON object")
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        where = f" in {section!r}" if section else ""
        raise ConfigError(f"unknown config key{'s' if len(unknown) > 1 else ''}{where}: {', '.join(unknown)}")


def _build(section: str, cls, given: dict, skip=()):
    names = [f.name for f in fields(cls) if f.name not in skip]
    _check_keys(section, given, names)
    kwargs = dict(given)
    if cls is SplitSpec and "fractions" in kwargs:
        kwargs["fractions"] = tuple(kwargs["fractions"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section}: {exc}") from exc


def experiment_from_dict(doc: dict) -> Experiment:
    _check_keys("", doc, DEFAULTS)
    merged = {**DEFAULTS, **doc}

    task_doc = dict(merged["task"])
    preset = task_doc.pop("preset", "gapped-rugged")
    if preset not in PRESETS:
        raise ConfigError(f"unknown task preset {preset!r}; choose from {sorted(PRESETS)}")
    _check_keys("task", task_doc, [f.name for f in fields(SyntheticTask)])
    try:
        task = make_task(preset, **task_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid task: {exc}") from exc

    ablation = {**ABLATION_DEFAULTS, **merged["ablation"]}
    _check_keys("ablation", merged["ablation"], ABLATION_DEFAULTS)
    _build("ablation.self_reported", EvalMode, ablation["self_reported"])

    seeds = merged["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers")

    try:
        run = RunConfig(
            selection=_build("selection", SelectionPolicy, merged["selection"]),
            operator=_build("operator", OperatorModel, merged["operator"]),
            eval_mode=_build("eval_mode", EvalMode, merged["eval_mode"]),
            task=task,
            split_spec=_build("split_spec", SplitSpec, merged["split_spec"]),
            **{k: merged[k] for k in _RUN_SCALARS},
        )
    except (InvalidConfigError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid run settings: {exc}") from exc
    return Experiment(name=str(merged["name"]), out_dir=str(merged["out_dir"]), seeds=list(seeds), run=run, ablation=ablation)


def load_experiment(path) -> Experiment:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return experiment_from_dict(doc)
