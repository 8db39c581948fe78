"""Run configuration shared by the ``analyze`` and ``causality`` commands."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .basis import MAX_DEGREE
from .errors import ConfigError
from .normalize import PNormConfig

FORMATS = ("json", "csv", "svg")


@dataclass
class RunConfig:
    input: str | None = None
    output: str = "hcrlag-out"
    channels: list[str] | None = None
    id_column: str | None = None
    sample_rate: float | None = None
    m: int = 10
    r: int = 3
    max_lag_seconds: float = 1.0
    pooling: str = "interior"
    center: bool = True
    marginal_removal: bool = True
    autocorrelation: bool = True
    ar_order: int = 10
    nu_grid: list[float] = field(default_factory=lambda: [4, 6, 8, 10, 12, 16, 20, 30])
    ema_grid: list[float] = field(default_factory=lambda: [0.002, 0.005, 0.01, 0.02, 0.05])
    # causality: delays (samples) reported as panels; PCA runs over 0..max_delay_seconds
    delays: list[int] = field(default_factory=lambda: [0, 50, 100, 200])
    max_delay_seconds: float | None = None
    grid_resolution: int = 101
    normalized_display: bool = False
    max_pairs: int = 50
    workers: int = 1
    seed: int = 0
    formats: list[str] = field(default_factory=lambda: list(FORMATS))

    DEFAULT_RATE = 500.0

    def validate(self) -> "RunConfig":
        def bad(msg: str) -> None:
            raise ConfigError(msg)

        if not 1 <= self.m <= MAX_DEGREE:
            bad(f"m must lie in [1, {MAX_DEGREE}]")
        dim = self.m * self.m if self.pooling == "interior" else (self.m + 1) ** 2
        if self.pooling not in ("interior", "full"):
            bad("pooling must be 'interior' or 'full'")
        if not 1 <= self.r <= dim:
            bad(f"r must lie in [1, {dim}] for m={self.m} and {self.pooling} pooling")
        if not self.max_lag_seconds > 0:
            bad("max_lag_seconds must be positive")
        if self.max_delay_seconds is not None and not self.max_delay_seconds > 0:
            bad("max_delay_seconds must be positive")
        if self.sample_rate is not None and not self.sample_rate > 0:
            bad("sample_rate must be positive")
        if self.ar_order < 1:
            bad("ar_order must be positive")
        if not self.nu_grid or any(nu <= 2 for nu in self.nu_grid):
            bad("nu_grid must be nonempty with every value > 2")
        if not self.ema_grid or any(not 0 < e < 1 for e in self.ema_grid):
            bad("ema_grid must be nonempty with values in (0, 1)")
        if not self.delays or any(int(d) < 0 for d in self.delays):
            bad("delays must be nonnegative sample counts")
        if self.grid_resolution < 2:
            bad("grid_resolution must be at least 2")
        if self.max_pairs < 1 or self.workers < 1:
            bad("max_pairs and workers must be positive")
        unknown = set(self.formats) - set(FORMATS)
        if unknown:
            bad(f"unknown formats {sorted(unknown)}; choose from {FORMATS}")
        return self

    @property
    def rate(self) -> float:
        return float(self.sample_rate) if self.sample_rate is not None else self.DEFAULT_RATE

    def pnorm(self) -> PNormConfig:
        return PNormConfig(ar_order=self.ar_order, nu_grid=tuple(self.nu_grid), ema_rate_grid=tuple(self.ema_grid))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            with Path(path).open() as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
