"""Experiment configuration: one INI file with a section per concern.

::

    [dataset]
    path = data/uci.txt          ; or: synthetic = true (plus generator keys)
    format = auto
    mode = equal-duration
    num_steps = 50
    split = 35, 5, 10

    [run]
    model = hawkes-gat
    hidden = 64
    ...

    [experiment]
    seeds = 0, 1, 2
    output_dir = runs/uci

    [bench]
    windows = 1, 5, 10, 20

``TEMPFUSE_CACHE`` overrides the cache directory.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .training import RunConfig

CACHE_ENV = "TEMPFUSE_CACHE"


def _ints(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(kind, text):
    if kind in (bool, "bool"):
        return _bool(text)
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    if kind in (tuple, "tuple"):
        return _ints(text)
    return str(text)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def _fill(cls, section: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(section) - set(known)
    if unknown:
        raise ValueError(f"[{where}] unknown keys: {', '.join(sorted(unknown))}")
    kw = {}
    for key, text in section.items():
        f = known[key]
        kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "str")
        kw[key] = _coerce(kind.split("|")[0].strip(), text)
    return cls(**kw)


@dataclass
class DatasetConfig:
    name: str = "dataset"
    path: str = ""
    format: str = "auto"
    mode: str = "equal-duration"
    num_steps: int = 50
    split: tuple = (35, 5, 10)
    neg_seed: int = 0
    synthetic: bool = False
    num_nodes: int = 200
    base_pairs: int = 600
    delta_true: float = 0.5
    generator_seed: int = 7

    def __post_init__(self):
        self.split = _ints(self.split)
        if len(self.split) != 3:
            raise ValueError(f"split needs three counts (train, val, test), got {self.split}")
        if not self.synthetic and not self.path:
            raise ValueError("[dataset] needs either path or synthetic = true")


@dataclass
class BenchConfig:
    windows: tuple = (1, 5, 10, 20)
    num_nodes: int = 100_000
    edges_per_step: int = 5000
    model: str = "hawkes-gcn"
    hidden: int = 16
    batch_size: int = 256
    fanout: int = 10
    seed: int = 0

    def __post_init__(self):
        self.windows = _ints(self.windows)


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig
    run: RunConfig = field(default_factory=RunConfig)
    seeds: tuple = (0,)
    output_dir: str = "runs"
    cache_dir: str = ""
    parallel_seeds: bool = False
    bench: BenchConfig = field(default_factory=BenchConfig)
    source: str = ""

    def __post_init__(self):
        self.seeds = _ints(self.seeds)
        if not self.seeds:
            raise ValueError("[experiment] seeds must not be empty")

    # -- paths ---------------------------------------------------------
    def _resolve(self, p) -> Path:
        p = Path(p)
        if not p.is_absolute() and self.source:
            p = Path(self.source).parent / p
        return p

    @property
    def output_path(self) -> Path:
        return self._resolve(self.output_dir)

    @property
    def cache_path(self) -> Path:
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        return self._resolve(self.cache_dir) if self.cache_dir else self.output_path / "cache"

    @property
    def dataset_path(self) -> Path:
        return self._resolve(self.dataset.path)

    def dataset_key(self) -> str:
        """Hash of everything the snapshot cache depends on."""
        d = asdict(self.dataset)
        d["k_eval"] = self.run.k_eval
        h = hashlib.sha256(json.dumps(d, sort_keys=True).encode())
        if not self.dataset.synthetic:
            h.update(self.dataset_path.read_bytes())
        return h.hexdigest()

    # -- serialization -------------------------------------------------
    def to_parser(self) -> configparser.ConfigParser:
        cp = configparser.ConfigParser()
        cp["dataset"] = {k: _format(v) for k, v in asdict(self.dataset).items()}
        cp["run"] = {k: _format(v) for k, v in asdict(self.run).items() if k != "seed"}
        cp["experiment"] = {"seeds": _format(self.seeds), "output_dir": self.output_dir,
                            "cache_dir": self.cache_dir,
                            "parallel_seeds": _format(self.parallel_seeds)}
        cp["bench"] = {k: _format(v) for k, v in asdict(self.bench).items()}
        return cp

    def dumps(self) -> str:
        buf = io.StringIO()
        self.to_parser().write(buf)
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, source: str = "") -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.read_string(text)
        extra = set(cp.sections()) - {"dataset", "run", "experiment", "bench"}
        if extra:
            raise ValueError(f"unknown config sections: {', '.join(sorted(extra))}")
        if not cp.has_section("dataset"):
            raise ValueError("config needs a [dataset] section")
        dataset = _fill(DatasetConfig, dict(cp["dataset"]), "dataset")
        run_sec = dict(cp["run"]) if cp.has_section("run") else {}
        if "seed" in run_sec:
            raise ValueError("[run] seed is set per run; list seeds under [experiment]")
        run = _fill(RunConfig, run_sec, "run")
        exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
        unknown = set(exp) - {"seeds", "output_dir", "cache_dir", "parallel_seeds"}
        if unknown:
            raise ValueError(f"[experiment] unknown keys: {', '.join(sorted(unknown))}")
        bench = _fill(BenchConfig, dict(cp["bench"]) if cp.has_section("bench") else {}, "bench")
        return cls(dataset=dataset, run=run, seeds=_ints(exp.get("seeds", "0")),
                   output_dir=exp.get("output_dir", "runs"), cache_dir=exp.get("cache_dir", ""),
                   parallel_seeds=_bool(exp.get("parallel_seeds", "false")), bench=bench,
                   source=source)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.loads(path.read_text(), source=str(path))

    def __eq__(self, other):
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return self.dumps() == other.dumps()
