"""Synthetic fitness landscapes with a controllable generalization gap.

A genome is a real vector inside the box ``[lower, upper] ** dim``. Its score
on a split is

    score(x, split) = true(x) + gap_strength * field(split, x)

where ``true`` is a smooth quadratic basin plus a cosine ripple centred on the
task optimum, and ``field`` is seeded value noise: pseudo-random values on an
integer lattice of spacing ``field_cell``, hashed from ``(split_seed, split,
lattice point)`` and blended with smoothstep weights. Each split gets its own
field, so the same genome always receives the same score on the same split
while different splits disagree in a controlled way.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, fields, replace

import numpy as np

SPLIT_IDS = {"train": 1, "search": 2, "val": 3, "test": 4}

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(h: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps
    h = (h ^ (h >> np.uint64(30))) * _M1
    h = (h ^ (h >> np.uint64(27))) * _M2
    return h ^ (h >> np.uint64(31))


def _split_key(split: str | int) -> int:
    if isinstance(split, (int, np.integer)):
        return int(split)
    return SPLIT_IDS.get(split, zlib.crc32(split.encode("utf-8")) + 16)


def lattice_values(seed: int, split: str | int, points: np.ndarray) -> np.ndarray:
    """Hash integer lattice points (``(..., dim)`` int array) to values uniform on ``[-sqrt 3, sqrt 3]``."""
    points = np.asarray(points, dtype=np.int64)
    with np.errstate(over="ignore"):
        base = _mix64(np.array([(int(seed) & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64) ^ (np.uint64(_split_key(split)) * _GOLDEN))
        h = np.broadcast_to(base, points.shape[:-1]).copy()
        for j in range(points.shape[-1]):
            coord = points[..., j].view(np.uint64)
            h = _mix64(h ^ (coord + np.uint64(j + 1) * _GOLDEN))
    u = (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    return np.sqrt(3.0) * (2.0 * u - 1.0)


def _corner_offsets(dim: int) -> np.ndarray:
    return ((np.arange(2**dim)[:, None] >> np.arange(dim)[None, :]) & 1).astype(np.int64)


def value_noise(seed: int, split: str | int, x: np.ndarray, cell: float) -> np.ndarray:
    """Smoothly interpolated lattice noise at ``x`` (shape ``(dim,)`` or ``(n, dim)``).

    Zero mean and unit variance when averaged over positions within a cell.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x) / cell
    base = np.floor(xs)
    frac = xs - base
    s = frac * frac * (3.0 - 2.0 * frac)
    offsets = _corner_offsets(xs.shape[1])
    corners = base.astype(np.int64)[:, None, :] + offsets[None, :, :]
    vals = lattice_values(seed, split, corners)
    weights = np.prod(np.where(offsets[None, :, :] == 1, s[:, None, :], 1.0 - s[:, None, :]), axis=2)
    # each smoothstep blend keeps 26/35 of the corner variance; rescale to unit variance
    out = np.sum(weights * vals, axis=1) / (26.0 / 35.0) ** (0.5 * xs.shape[1])
    return out[0] if single else out


@dataclass(frozen=True)
class SyntheticTask:
    """A parameterized landscape. All fields are plain numbers so presets serialize to JSON."""

    name: str = "custom"
    dim: int = 6
    lower: float = -5.0
    upper: float = 5.0
    optimum_coord: float = 1.5
    optimum_score: float = 1.0
    # ceiling of the metric itself, reported by a corrupted evaluation; above anything a genome reaches
    perfect_score: float = 2.0
    smooth_weight: float = 0.05
    rugged_weight: float = 0.0
    rugged_period: float = 1.0
    gap_strength: float = 0.0
    field_cell: float = 1.0
    split_seed: int = 0
    mutation_scale: float = 0.3
    higher_is_better: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.lower < self.optimum_coord < self.upper:
            raise ValueError("optimum must lie inside the box")
        if self.gap_strength < 0:
            raise ValueError("gap_strength must be >= 0")

    @property
    def optimum(self) -> np.ndarray:
        return np.full(self.dim, self.optimum_coord)

    @property
    def box_center(self) -> np.ndarray:
        return np.full(self.dim, 0.5 * (self.lower + self.upper))

    def in_domain(self, genome) -> bool:
        g = np.asarray(genome, dtype=float)
        return g.shape == (self.dim,) and bool(np.all(np.isfinite(g))) and bool(
            np.all((g >= self.lower) & (g <= self.upper))
        )

    def true_fn(self, genome) -> np.ndarray | float:
        z = np.asarray(genome, dtype=float) - self.optimum_coord
        smooth = np.mean(z * z, axis=-1)
        rugged = np.mean(1.0 - np.cos(2.0 * np.pi * z / self.rugged_period), axis=-1)
        return self.optimum_score - self.smooth_weight * smooth - self.rugged_weight * rugged

    def random_baseline(self) -> float:
        """Expected true score of a uniform draw from the box (closed form)."""
        lo, hi, p = self.lower - self.optimum_coord, self.upper - self.optimum_coord, self.rugged_period
        width = hi - lo
        mean_sq = (hi**3 - lo**3) / (3.0 * width)
        mean_cos = p / (2.0 * np.pi * width) * (np.sin(2.0 * np.pi * hi / p) - np.sin(2.0 * np.pi * lo / p))
        return float(self.optimum_score - self.smooth_weight * mean_sq - self.rugged_weight * (1.0 - mean_cos))

    def normalized(self, value):
        """Map a score onto ``[0, 100)``: 0 at the random-draft baseline, 100 at the optimum."""
        base = self.random_baseline()
        pct = 100.0 * (np.asarray(value, dtype=float) - base) / (self.optimum_score - base)
        return np.clip(pct, 0.0, np.nextafter(100.0, 0.0))

    def split_field(self, split: str, genome, seed: int | None = None):
        return value_noise(self.split_seed if seed is None else seed, split, genome, self.field_cell)

    def with_overrides(self, **kwargs) -> "SyntheticTask":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PRESETS: dict[str, SyntheticTask] = {
    "smooth-unimodal": SyntheticTask(name="smooth-unimodal", dim=4, smooth_weight=0.05),
    # wider mutations so a lone lineage can hop between ripple basins
    "rugged-multimodal": SyntheticTask(
        name="rugged-multimodal", dim=6, smooth_weight=0.05, rugged_weight=0.5, rugged_period=1.0, mutation_scale=0.5
    ),
    # a small gap: splits disagree mostly between near-tied candidates
    "gapped-rugged": SyntheticTask(
        name="gapped-rugged", dim=6, smooth_weight=0.05, rugged_weight=0.5, rugged_period=1.0, gap_strength=0.005
    ),
}


def make_task(preset: str = "gapped-rugged", **overrides) -> SyntheticTask:
    if preset not in PRESETS:
        raise KeyError(f"unknown task preset {preset!r}; choose from {sorted(PRESETS)}")
    return PRESETS[preset].with_overrides(**overrides) if overrides else PRESETS[preset]


def draft(task: SyntheticTask, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the task box."""
    return rng.uniform(task.lower, task.upper, size=task.dim)


def mutate(task: SyntheticTask, genome, step_scale: float | None, rng: np.random.Generator) -> np.ndarray:
    """Isotropic Gaussian move of scale ``step_scale`` (task default if None), clamped to the box."""
    scale = task.mutation_scale if step_scale is None else step_scale
    g = np.asarray(genome, dtype=float)
    return np.clip(g + scale * rng.standard_normal(task.dim), task.lower, task.upper)


def crossover(task: SyntheticTask, genome_a, genome_b, rng: np.random.Generator) -> np.ndarray:
    """Per-coordinate uniform convex blend of two parents."""
    a = np.asarray(genome_a, dtype=float)
    b = np.asarray(genome_b, dtype=float)
    w = rng.random(task.dim)
    return w * a + (1.0 - w) * b


def score(task: SyntheticTask, genome, split: str):
    """Deterministic score of ``genome`` on ``split``; accepts a batch of genomes."""
    base = task.true_fn(genome)
    if task.gap_strength == 0.0:
        return base
    return base + task.gap_strength * task.split_field(split, genome)
