"""Experiment configuration: one JSON document describing a grid of runs.

Example::

    {
      "name": "synthetic-diverse",
      "environment": {"kind": "synthetic", "mode": "diverse", "data_seed": 0},
      "algorithms": ["squarecb_ug", "squarecb", "greedy", "trivial"],
      "epsilons": [0.04, 0.02],
      "gamma_scales": [1.0],
      "T": 5000,
      "seeds": [0, 1, 2, 3]
    }

Optional keys: ``loss_lr``, ``graph_lr``, ``feedback_mode``, ``policy_mode``,
``reg_bound`` and ``out``.  A ``csv`` environment takes ``path`` plus
optional ``max_rows``, ``price_window`` and ``data_seed``.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..algorithms import ALGORITHMS, CLOSED_FORM, DEC_SOLVER, FULL, PARTIAL
from ..environments import DIVERSE, JOINT, MAX_ROWS, POOR, PRICE_WINDOW, SEPARATE
from ..graphs import BidGrid
from ..oracles import DEFAULT_GRAPH_LR, DEFAULT_LOSS_LR

OUT_ENV_VAR = "GRAPHBAND_OUT"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class EnvironmentSpec:
    kind: str = "synthetic"
    mode: str = DIVERSE
    data_seed: int = 0
    normalization: str = JOINT
    path: str | None = None
    max_rows: int = MAX_ROWS
    price_window: tuple = PRICE_WINDOW

    def validate(self):
        if self.kind == "synthetic":
            if self.mode not in (DIVERSE, POOR):
                raise ConfigError(f"synthetic mode must be {DIVERSE!r} or {POOR!r}, got {self.mode!r}")
            if self.normalization not in (JOINT, SEPARATE):
                raise ConfigError(f"normalization must be {JOINT!r} or {SEPARATE!r}")
        elif self.kind == "csv":
            if not self.path:
                raise ConfigError("csv environment needs a 'path'")
            if len(self.price_window) != 2 or self.price_window[0] > self.price_window[1]:
                raise ConfigError(f"bad price_window {self.price_window}")
        else:
            raise ConfigError(f"environment kind must be 'synthetic' or 'csv', got {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "synthetic":
            return f"synthetic-{self.mode}"
        return f"csv-{Path(self.path).stem}"


@dataclass
class ExperimentConfig:
    environment: EnvironmentSpec = field(default_factory=EnvironmentSpec)
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS[:1]))
    epsilons: list = field(default_factory=lambda: [0.04])
    gamma_scales: list = field(default_factory=lambda: [1.0])
    T: int = 1000
    seeds: list = field(default_factory=lambda: [0])
    loss_lr: float = DEFAULT_LOSS_LR
    graph_lr: float = DEFAULT_GRAPH_LR
    feedback_mode: str = PARTIAL
    policy_mode: str = CLOSED_FORM
    reg_bound: float | None = None
    name: str | None = None
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        self.environment.validate()
        if not self.algorithms:
            raise ConfigError("nothing to run: algorithm list is empty")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; expected a subset of {list(ALGORITHMS)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("duplicate algorithm names")
        if not self.epsilons or not self.seeds or not self.gamma_scales:
            raise ConfigError("nothing to run: epsilons, seeds and gamma_scales must be non-empty")
        for eps in self.epsilons:
            try:
                BidGrid(eps)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if any(c <= 0 for c in self.gamma_scales):
            raise ConfigError("gamma_scales must be positive")
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T!r}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds")
        if self.loss_lr <= 0 or self.graph_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.feedback_mode not in (PARTIAL, FULL):
            raise ConfigError(f"feedback_mode must be {PARTIAL!r} or {FULL!r}")
        if self.policy_mode not in (CLOSED_FORM, DEC_SOLVER):
            raise ConfigError(f"policy_mode must be {CLOSED_FORM!r} or {DEC_SOLVER!r}")
        if self.reg_bound is not None and self.reg_bound <= 0:
            raise ConfigError("reg_bound must be positive")
        return self

    @property
    def label(self) -> str:
        return self.name or self.environment.label

    def to_dict(self) -> dict:
        d = asdict(self)
        d["environment"]["price_window"] = list(self.environment.price_window)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        env = data.pop("environment", {})
        if not isinstance(env, dict):
            raise ConfigError("'environment' must be an object")
        env_extra = set(env) - set(EnvironmentSpec.__dataclass_fields__)
        if env_extra:
            raise ConfigError(f"unknown environment keys: {sorted(env_extra)}")
        env = dict(env)
        if "price_window" in env:
            env["price_window"] = tuple(env["price_window"])
        try:
            cfg = cls(environment=EnvironmentSpec(**env), **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        env = data.get("environment") if isinstance(data, dict) else None
        if isinstance(env, dict) and env.get("path") and not Path(env["path"]).is_absolute():
            # data paths are relative to the config file
            env["path"] = str((Path(path).parent / env["path"]).resolve())
        return cls.from_dict(data)

    def output_dir(self, override: str | None = None) -> Path:
        """CLI flag beats the environment variable, which beats the config file."""
        return Path(override or os.environ.get(OUT_ENV_VAR) or self.out)


@dataclass(frozen=True)
class Cell:
    algorithm: str
    epsilon: float
    gamma_scale: float
    seed: int

    @property
    def cell_id(self) -> str:
        k = BidGrid(self.epsilon).k
        return f"{self.algorithm}__K{k}__c{self.gamma_scale:g}__s{self.seed}"


def cells(config: ExperimentConfig) -> list[Cell]:
    return [Cell(a, e, c, s) for a in config.algorithms for e in config.epsilons
            for c in config.gamma_scales for s in config.seeds]
