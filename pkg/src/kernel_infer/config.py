"""Experiment configuration (a single JSON document) and worker fan-out."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .dynamics import Kernel, get_kernel


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    d: int = 2
    L: float = 3.0
    T: float = 0.5
    m: int = 50
    substeps: int = 10
    kernel: dict = field(default_factory=lambda: {"name": "trunc_lj"})
    N: int | None = None
    N_list: list | None = None
    D: int | str = "2N"
    M: float = 100.0
    M_list: list | None = None
    theta: int = 5
    runs: list | None = None
    seed: int = 0
    out: str = "out"
    trajectory: str | None = None
    fixture: str | None = None
    grid_points: int = 400

    def __post_init__(self):
        for name in ("d", "m", "substeps", "theta", "grid_points"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("L", "T"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.M < 0:
            raise ConfigError("M must be nonnegative")
        if self.M_list is not None:
            if not self.M_list or any(b < a for a, b in zip(self.M_list, self.M_list[1:])):
                raise ConfigError("M_list must be a nonempty ascending list")
            if any(x <= 0 for x in self.M_list):
                raise ConfigError("M_list entries must be positive")
        if not isinstance(self.kernel, dict) or "name" not in self.kernel:
            raise ConfigError("kernel must be an object with a 'name'")
        unknown = set(self.kernel) - {"name", "params"}
        if unknown:
            raise ConfigError(f"unknown kernel keys: {sorted(unknown)}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        for N in self.N_values():
            if N < 1:
                raise ConfigError("particle counts must be positive")
            if self.D_for(N) < 2:
                raise ConfigError(f"D rule {self.D!r} gives D < 2 for N={N}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def N_values(self) -> list[int]:
        if self.N_list is not None:
            return [int(n) for n in self.N_list]
        return [int(self.N)] if self.N is not None else []

    def D_for(self, N: int) -> int:
        rule = self.D
        if isinstance(rule, int):
            return rule
        key = str(rule).replace(" ", "").replace("−", "-").upper()
        if key == "2N":
            return 2 * N
        if key == "3N-5":
            return 3 * N - 5
        try:
            return int(key)
        except ValueError:
            raise ConfigError(f"unknown D rule {rule!r}") from None

    def make_kernel(self) -> Kernel:
        try:
            return get_kernel(self.kernel["name"], **self.kernel.get("params", {}))
        except (LookupError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def worker_count() -> int:
    raw = os.environ.get("KERNEL_INFER_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """map() over independent runs; results come back in input order."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
