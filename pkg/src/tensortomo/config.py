"""Experiment configuration read from a flat ``key = value`` text file.

Blank lines and text after ``#`` are ignored.  Every key corresponds to a
field of :class:`ExperimentConfig`; unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .field import Grid, PhantomSpec
from .scalar_radon import DEFAULT_CUTOFF, DirectionSet, PGrid

PIPELINES = ("lrt", "trt", "both")


class ConfigError(ValueError):
    """The configuration is malformed or internally inconsistent."""


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


@dataclass(frozen=True)
class ExperimentConfig:
    """All numerical settings of a run.

    ``directions = 0`` selects twice the grid size (its square for n = 3)
    and ``p_count = 0`` the smallest odd count covering the grid
    circumradius at the grid spacing.
    """

    n: int = 2
    m: int = 1
    grid: int = 128
    half_width: float = 1.0
    directions: int = 0
    p_count: int = 0
    phantom_kind: str = "gaussian_poly"
    phantom_bumps: int = 2
    phantom_width: float = 0.1
    phantom_radius: float = 0.15
    seed: int = 0
    pipeline: str = "lrt"
    noise: float = 0.0
    cutoff: float = DEFAULT_CUTOFF
    interp_order: int = 3
    decompose_tol: float = 1e-4
    error_tol: float = 0.0
    verify_grid: int = 128
    verify_directions: int = 180
    tolerance_scale: float = 1.0
    sweep: tuple[int, ...] = (64, 128, 256)
    out: str = "out"
    preview: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n not in (2, 3):
            raise ConfigError(f"n must be 2 or 3, got {self.n}")
        if self.m < 0:
            raise ConfigError(f"m must be non-negative, got {self.m}")
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if self.grid < 8 or any(g < 8 for g in self.sweep) or self.verify_grid < 8:
            raise ConfigError("grids need at least 8 nodes per axis")
        if self.half_width <= 0 or self.directions < 0 or self.p_count < 0:
            raise ConfigError("half_width must be positive and counts non-negative")
        if not 0 < self.cutoff <= 1:
            raise ConfigError(f"cutoff must lie in (0, 1], got {self.cutoff}")
        if self.noise < 0 or self.error_tol < 0 or self.tolerance_scale <= 0:
            raise ConfigError("noise and tolerances must be non-negative")
        if self.interp_order not in (1, 3):
            raise ConfigError("interp_order must be 1 or 3")
        try:
            self.phantom_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.p_count:
            g = self.make_grid()
            extent = (self.p_count - 1) / 2 * min(g.spacing)
            if extent < g.circumradius:
                raise ConfigError(
                    f"p_count {self.p_count} covers |p| <= {extent:.3f}, below the grid circumradius {g.circumradius:.3f}"
                )

    def require_pipeline(self) -> None:
        if self.n != 2:
            raise ConfigError("the reconstruction pipelines require n = 2")

    # --- derived geometry ---

    def make_grid(self, size: int | None = None) -> Grid:
        return Grid.centered(self.n, size or self.grid, self.half_width)

    def make_directions(self, size: int | None = None) -> DirectionSet:
        size = size or self.grid
        return DirectionSet.uniform(self.n, self.directions or (2 * size if self.n == 2 else size * size))

    def make_pgrid(self, grid: Grid) -> PGrid:
        if self.p_count and grid.shape[0] == self.grid:
            return PGrid(self.p_count, min(grid.spacing))
        return PGrid.covering(grid)

    def phantom_spec(self) -> PhantomSpec:
        return PhantomSpec(
            kind=self.phantom_kind,
            bumps=self.phantom_bumps,
            width=self.phantom_width,
            radius=self.phantom_radius,
            seed=self.seed,
        )

    def pipelines(self) -> tuple[str, ...]:
        return ("lrt", "trt") if self.pipeline == "both" else (self.pipeline,)

    # --- text form ---

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(str(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> ExperimentConfig:
        try:
            return dataclasses.replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _convert(name: str, kind, text: str):
    kind = str(kind)
    try:
        if kind.startswith("bool"):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            val = float(text)
            if not math.isfinite(val):
                raise ValueError(text)
            return val
        if kind.startswith("tuple"):
            return _int_list(text)
        return text
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {text!r}") from None


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``overrides`` win over file values."""
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, kinds[key], val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read a config file (or start from defaults when ``path`` is None)."""
    text = "" if path is None else Path(path).read_text()
    return parse_config(text, **overrides)
