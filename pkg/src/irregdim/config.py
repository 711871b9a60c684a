"""Experiment configuration: one YAML file per run, command-line flags override it."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ValidationError
from .interval_maps import BranchMap, map_from_descriptor
from .measures import MarkovMeasure, measure_from_descriptor
from .potentials import AlmostAdditivePotential, potential_from_descriptor

STOCHASTIC = {"spectrum", "irregular", "oscillation"}


@dataclass(frozen=True)
class SpectrumParams:
    alphas: tuple[float, ...] = ()
    sup: bool = False
    order: int = 1
    starts: int = 16


@dataclass(frozen=True)
class IrregularParams:
    mu: dict = field(default_factory=lambda: {"bernoulli": [0.5, 0.5]})
    nu: dict = field(default_factory=lambda: {"bernoulli": [0.9, 0.1]})
    stages: int = 6
    base_length: int = 20
    growth: float = 4.0
    eps0: float = 0.4
    delta: float = 0.1
    symmetric: bool = False
    budget: int = 4096
    points: int = 50
    point_length: int = 30000
    cloud: int = 10000
    cloud_length: int = 64


@dataclass(frozen=True)
class BoxdimParams:
    depth: int = 10
    scales: int = 12
    ratio: float = 0.7
    start: float = 0.2
    budget: int = 1_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    map: dict
    potential: dict | None = None
    seed: int | None = None
    threads: int = 1
    out: str | None = None
    spectrum: SpectrumParams = SpectrumParams()
    irregular: IrregularParams = IrregularParams()
    boxdim: BoxdimParams = BoxdimParams()

    def build_map(self) -> BranchMap:
        return map_from_descriptor(self.map)

    def build_potential(self, map: BranchMap) -> AlmostAdditivePotential:
        if self.potential is None:
            raise ValidationError("config needs a 'potential' descriptor")
        return potential_from_descriptor(self.potential, map)

    def build_measures(self, map: BranchMap) -> tuple[MarkovMeasure, MarkovMeasure]:
        return (measure_from_descriptor(self.irregular.mu, map.m),
                measure_from_descriptor(self.irregular.nu, map.m))

    def require_seed(self, command: str) -> int:
        if command in STOCHASTIC and self.seed is None:
            raise ValidationError(f"command {command!r} is stochastic and needs a seed")
        return int(self.seed or 0)


def _section(cls, raw, name):
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ValidationError(f"section {name!r} must be a mapping")
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown keys in {name!r}: {sorted(unknown)}")
    vals = dict(raw)
    if "alphas" in vals:
        vals["alphas"] = tuple(float(a) for a in vals["alphas"])
    return cls(**vals)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping")
    if "map" not in raw:
        raise ValidationError("config needs a 'map' descriptor")
    allowed = {"map", "potential", "seed", "threads", "out", "spectrum", "irregular", "boxdim"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(
            map=raw["map"],
            potential=raw.get("potential"),
            seed=raw.get("seed"),
            threads=int(raw.get("threads", 1)),
            out=raw.get("out"),
            spectrum=_section(SpectrumParams, raw.get("spectrum"), "spectrum"),
            irregular=_section(IrregularParams, raw.get("irregular"), "irregular"),
            boxdim=_section(BoxdimParams, raw.get("boxdim"), "boxdim"),
        )
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(raw)
