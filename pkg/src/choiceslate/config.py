"""Run configuration: an INI file with one section per stage.

Every key is optional.  The defaults are 12-hour periods, 14 periods, T=4,
H=20, lr=1e-5, batch 32, 50 epochs, n=5, a 20-tweet user filter and
retweet engagement.  Environment
variables are never consulted.

Example::

    [run]
    seed = 7

    [data]
    engagement_kind = retweet
    period_hours = 12
    num_periods = 14
    history = 4

    [train]
    lr = 1e-3
    epochs = 10
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .gsdmm import ClusteringConfig
from .logit import LogitConfig
from .net import ModelConfig, TrainConfig
from .pipeline import ENGAGEMENT_KINDS, PeriodGrid
from .simulator import SimConfig


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(" ", "").split(",") if x)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


@dataclass
class RunConfig:
    seed: int = 0
    log_path: str = ""
    corpus_path: str = ""
    # data
    engagement_kind: str = "retweet"
    period_hours: float = 12.0
    num_periods: int = 14
    origin_timestamp: int = 0
    history: int = 4
    min_tweets_per_user: int = 20
    num_topics: int = 0  # 0: infer from the log
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    # model
    filters: int = 20
    bottleneck: int = 8
    leaky_slope: float = 0.01
    # training
    lr: float = 1e-5
    batch_size: int = 32
    epochs: int = 50
    ridge: float = 1e-4
    # optimisation
    slate_size: int = 5
    slate_method: str = "greedy"
    # clustering
    max_clusters: int = 40
    alpha: float = 0.1
    beta: float = 0.1
    iterations: int = 30
    # simulation
    sim_users: int = 2000
    sim_topics: int = 30
    sim_exposure_rate: float = 0.4
    sim_substitution: float = 1.0
    sim_group_size: int = 5
    sim_archetypes: int = 4
    # sweep grids
    sweep_filters: tuple[int, ...] = (5, 10, 15, 20, 30)
    sweep_batch_sizes: tuple[int, ...] = (16, 32, 64, 128)
    sweep_learning_rates: tuple[float, ...] = (1e-3, 1e-4, 5e-5, 1e-5, 1e-6)
    source: dict = field(default_factory=dict, repr=False, compare=False)

    def validate(self) -> None:
        if self.engagement_kind not in ENGAGEMENT_KINDS:
            raise ConfigError(f"engagement_kind must be one of {ENGAGEMENT_KINDS}")
        if self.slate_method not in ("greedy", "exhaustive", "top_n"):
            raise ConfigError("slate_method must be greedy, exhaustive or top_n")
        if len(self.split) != 3 or min(self.split) <= 0:
            raise ConfigError("split needs three positive ratios")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        self.grid.validate(self.history)

    @property
    def grid(self) -> PeriodGrid:
        return PeriodGrid(int(round(self.period_hours * 3600)), self.num_periods, self.origin_timestamp)

    def model_config(self, J: int, **overrides) -> ModelConfig:
        kw = dict(J=J, T=self.history, H=self.filters, L=self.bottleneck, leaky_slope=self.leaky_slope, seed=self.seed)
        kw.update(overrides)
        return ModelConfig(**kw)

    def train_config(self, **overrides) -> TrainConfig:
        kw = dict(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs)
        kw.update(overrides)
        return TrainConfig(**kw)

    def logit_config(self) -> LogitConfig:
        return LogitConfig(ridge=self.ridge, seed=self.seed)

    def clustering_config(self) -> ClusteringConfig:
        return ClusteringConfig(self.max_clusters, self.alpha, self.beta, self.iterations, self.seed)

    def sim_config(self) -> SimConfig:
        return SimConfig(
            num_users=self.sim_users,
            num_topics=self.sim_topics,
            num_periods=self.num_periods,
            period_length_seconds=self.grid.period_length_seconds,
            origin_timestamp=self.origin_timestamp,
            exposure_rate=self.sim_exposure_rate,
            num_archetypes=self.sim_archetypes,
            recency_weights=(0.8, 0.4, 0.2, 0.1)[: self.history],
            substitution_strength=self.sim_substitution,
            group_size=self.sim_group_size,
            seed=self.seed,
        )

    def digest(self, *keys: str) -> str:
        """Hash of the named settings (all settings when none are named)."""
        names = keys or tuple(f.name for f in fields(self) if f.name != "source")
        text = "\n".join(f"{k}={getattr(self, k)!r}" for k in names)
        return hashlib.sha256(text.encode()).hexdigest()


# INI (section, key) -> RunConfig attribute and parser
_KEYS = {
    ("run", "seed"): ("seed", int),
    ("paths", "log"): ("log_path", str),
    ("paths", "corpus"): ("corpus_path", str),
    ("data", "engagement_kind"): ("engagement_kind", str),
    ("data", "period_hours"): ("period_hours", float),
    ("data", "num_periods"): ("num_periods", int),
    ("data", "origin_timestamp"): ("origin_timestamp", int),
    ("data", "history"): ("history", int),
    ("data", "min_tweets_per_user"): ("min_tweets_per_user", int),
    ("data", "num_topics"): ("num_topics", int),
    ("data", "split"): ("split", _floats),
    ("model", "filters"): ("filters", int),
    ("model", "bottleneck"): ("bottleneck", int),
    ("model", "leaky_slope"): ("leaky_slope", float),
    ("train", "lr"): ("lr", float),
    ("train", "batch_size"): ("batch_size", int),
    ("train", "epochs"): ("epochs", int),
    ("logit", "ridge"): ("ridge", float),
    ("optimize", "slate_size"): ("slate_size", int),
    ("optimize", "method"): ("slate_method", str),
    ("cluster", "max_clusters"): ("max_clusters", int),
    ("cluster", "alpha"): ("alpha", float),
    ("cluster", "beta"): ("beta", float),
    ("cluster", "iterations"): ("iterations", int),
    ("simulate", "users"): ("sim_users", int),
    ("simulate", "topics"): ("sim_topics", int),
    ("simulate", "exposure_rate"): ("sim_exposure_rate", float),
    ("simulate", "substitution"): ("sim_substitution", float),
    ("simulate", "group_size"): ("sim_group_size", int),
    ("simulate", "archetypes"): ("sim_archetypes", int),
    ("sweep", "filters"): ("sweep_filters", _ints),
    ("sweep", "batch_sizes"): ("sweep_batch_sizes", _ints),
    ("sweep", "learning_rates"): ("sweep_learning_rates", _floats),
}


def load_config(path: str | Path | None = None, seed: int | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path, encoding="utf-8")
        updates = {}
        for section in parser.sections():
            for key, value in parser.items(section):
                try:
                    attr, conv = _KEYS[(section, key)]
                except KeyError:
                    raise ConfigError(f"{path}: unknown setting [{section}] {key}") from None
                try:
                    updates[attr] = conv(value)
                except ValueError as exc:
                    raise ConfigError(f"{path}: bad value for [{section}] {key}: {value!r}") from exc
        cfg = replace(cfg, **updates, source={"path": str(path)})
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    cfg.validate()
    return cfg
