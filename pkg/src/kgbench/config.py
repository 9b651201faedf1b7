"""Flat ``key = value`` pipeline configuration.

One pair per line, lines starting with ``#`` are comments, unknown keys are errors.
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import os
import shlex
from dataclasses import dataclass, fields
from importlib import resources

from .embed import EarlyStopping, Hyperparams, KINDS
from .errors import ConfigError
from .ingest import LEVELS, GraphOptions
from .split import SplitSpec

STAGES = ("create-graph", "split", "train", "evaluate")
PATH_KEYS = ("edges", "edges_new", "schema", "thresholds", "out")


@dataclass
class PipelineConfig:
    stages: str = ",".join(STAGES)
    dataset: str = ""
    edges: str = ""
    edges_new: str = ""
    schema: str = ""
    thresholds: str = ""
    quality: str = "all"
    directed: bool = False
    exclude_sources: str = ""
    exclude_relations: str = ""
    split_mode: str = "random"
    ratios: str = "0.9,0.05,0.05"
    negative_ratio: float = 1.0
    seed: int = 0
    max_corruption_attempts: int = 100
    model: str = "transE"
    dim: int = 50
    margin: float = 1.0
    lr: float = 0.01
    p: int = 2
    epochs: int = 100
    batch_size: int = 128
    early_stopping: bool = True
    eval_every: int = 10
    patience: int = 3
    ks: str = "1,3,10"
    filtered: bool = True
    typed_candidates: bool = True
    scorer_cmd: str = ""
    scorer_timeout: float = 60.0
    dump_ranks: bool = True
    threads: int = 1
    out: str = "kgbench-out"

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def update(self, pairs: dict[str, str], base_dir: str | None = None) -> "PipelineConfig":
        types = {f.name: f.type for f in fields(self)}
        for key, raw in pairs.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(self, key, _convert(key, raw, types[key]))
            if key in PATH_KEYS and base_dir and getattr(self, key) and not os.path.isabs(getattr(self, key)):
                setattr(self, key, os.path.normpath(os.path.join(base_dir, getattr(self, key))))
        return self

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = os.fspath(path)
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls().update(parse_pairs(text, path), os.path.dirname(os.path.abspath(path)))

    def resolve(self) -> "PipelineConfig":
        """Fill bundled dataset paths and validate every field."""
        if self.dataset:
            if self.dataset != "toy":
                raise ConfigError(f"unknown bundled dataset {self.dataset!r}")
            root = resources.files("kgbench") / "data" / "toy"
            for key in ("edges", "schema", "thresholds"):
                if not getattr(self, key):
                    setattr(self, key, str(root / f"{key}.tsv"))
        self.stage_list()
        if self.quality not in LEVELS:
            raise ConfigError(f"quality must be one of {LEVELS}")
        if self.model not in KINDS:
            raise ConfigError(f"model must be one of {KINDS}")
        self.split_spec()
        self.hyperparams()
        self.k_list()
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        return self

    def stage_list(self) -> list[str]:
        stages = [s.strip() for s in self.stages.split(",") if s.strip()]
        for s in stages:
            if s not in STAGES:
                raise ConfigError(f"unknown stage {s!r}; expected some of {STAGES}")
        return [s for s in STAGES if s in stages]

    def graph_options(self, thresholds) -> GraphOptions:
        return GraphOptions(
            quality=self.quality,
            thresholds=thresholds,
            directed=self.directed,
            excluded_sources=frozenset(_list(self.exclude_sources)),
            excluded_relations=frozenset(_list(self.exclude_relations)),
        )

    def split_spec(self) -> SplitSpec:
        try:
            ratios = tuple(float(x) for x in _list(self.ratios))
        except ValueError:
            raise ConfigError(f"bad ratios {self.ratios!r}") from None
        return SplitSpec(self.split_mode, ratios, self.negative_ratio, self.seed, self.max_corruption_attempts)

    def hyperparams(self) -> Hyperparams:
        try:
            return Hyperparams(self.dim, self.margin, self.lr, self.p, self.epochs, self.batch_size, self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def early_stop(self) -> EarlyStopping:
        return EarlyStopping(self.eval_every, self.patience, self.early_stopping)

    def k_list(self) -> tuple[int, ...]:
        try:
            ks = tuple(int(k) for k in _list(self.ks))
        except ValueError:
            raise ConfigError(f"bad k list {self.ks!r}") from None
        if not ks or min(ks) < 1:
            raise ConfigError("k list must hold positive integers")
        return ks

    def scorer_command(self) -> list[str]:
        return shlex.split(self.scorer_cmd)

    def format(self) -> str:
        lines = ["# resolved kgbench configuration\n"]
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}\n")
        return "".join(lines)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _convert(key, raw: str, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key} ({typ})") from None
    return raw.strip()


def parse_pairs(text: str, path="<config>") -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs
