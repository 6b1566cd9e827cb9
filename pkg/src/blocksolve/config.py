"""Solver configuration shared by the engines and the validator."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Regime", "SolverConfig", "ConfigError"]


class ConfigError(ValueError):
    """Invalid or unreadable solver configuration."""


class Regime(str, enum.Enum):
    """Problem structure the parameter rules are taken from."""

    NO_Y = "no-y"          # no y variable
    SINGLE_Y = "single-y"  # all y blocks updated every iteration
    MULTI_XY = "multi-xy"  # n/N == m/M

    @classmethod
    def parse(cls, value) -> "Regime":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        aliases = {"noy": "no-y", "singley": "single-y", "multixy": "multi-xy"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown regime {value!r}") from None


@dataclass
class SolverConfig:
    """Penalties, sample sizes and per-block proximal weights.

    ``eta_x[i]`` is the scalar of the block weight ``eta_i * I``; the
    per-iteration proximal matrix is that weight minus ``rho_x A_I'A_I``.
    ``rho`` is the multiplier step.
    """

    regime: Regime
    n: int
    rho_x: float
    rho: float
    eta_x: np.ndarray
    m: int = 0
    rho_y: float = 0.0
    eta_y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_iters: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.regime = Regime.parse(self.regime)
        self.eta_x = np.asarray(self.eta_x, dtype=np.float64).reshape(-1)
        self.eta_y = np.asarray(self.eta_y, dtype=np.float64).reshape(-1)
        for name in ("rho_x", "rho", "rho_y"):
            v = float(getattr(self, name))
            if not v >= 0:
                raise ConfigError(f"{name} must be nonnegative, got {v}")
            setattr(self, name, v)
        if np.any(~(self.eta_x > 0)) or np.any(~(self.eta_y > 0)):
            raise ConfigError("proximal weights must be positive")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.m < 0 or self.max_iters < 0:
            raise ConfigError("m and max_iters must be nonnegative")
        self.n, self.m, self.max_iters, self.seed = (
            int(self.n), int(self.m), int(self.max_iters), int(self.seed))

    @property
    def N(self) -> int:
        return self.eta_x.shape[0]

    @property
    def M(self) -> int:
        return self.eta_y.shape[0]

    @property
    def theta(self) -> float:
        return self.n / self.N

    def replace(self, **changes) -> "SolverConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return SolverConfig(**d)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value, "n": self.n, "m": self.m,
            "rhoX": self.rho_x, "rhoY": self.rho_y, "rho": self.rho,
            "etaX": self.eta_x.tolist(), "etaY": self.eta_y.tolist(),
            "maxIters": self.max_iters, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "SolverConfig":
        try:
            return cls(regime=d["regime"], n=d["n"], m=d.get("m", 0), rho_x=d["rhoX"],
                       rho_y=d.get("rhoY", 0.0), rho=d["rho"], eta_x=d["etaX"],
                       eta_y=d.get("etaY", []), max_iters=d.get("maxIters", 1000),
                       seed=d.get("seed", 0))
        except KeyError as exc:
            raise ConfigError(f"missing field {exc.args[0]!r}") from None

    def save(self, path) -> None:
        from .io import dumps_json
        Path(path).write_text(dumps_json(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SolverConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(d)
