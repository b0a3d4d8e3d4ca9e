"""
Experiment configuration: strict JSON parsing and object builders.

Configs are JSON documents with an explicit format_version. Unknown keys are
rejected at every level so typos in sweep scripts fail fast instead of
silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .engine import StepsizePlan
from .errors import ConfigError
from .mrp import (
    FeatureMap,
    InstanceParams,
    MarkovRewardProcess,
    generate_instance,
    load_instance,
)
from .network import (
    GraphSchedule,
    complete_schedule,
    random_connected_schedule,
    ring_schedule,
    split_ring_schedule,
)

CONFIG_FORMAT_VERSION = "1"


def _check_keys(doc: dict, required: set[str], optional: set[str], where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object, got {type(doc).__name__}")
    unknown = set(doc) - required - optional
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


@dataclass(frozen=True)
class InstanceSpec:
    """Either generation parameters or a path to a serialized instance."""

    n: int = 20
    K: int = 5
    N: int = 5
    gamma: float = 0.9
    C: float = 1.0
    seed: int = 20260810
    orthonormal: bool = False
    path: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "InstanceSpec":
        if "path" in doc:
            _check_keys(doc, {"path"}, set(), "instance")
            return cls(path=str(doc["path"]))
        _check_keys(
            doc,
            set(),
            {"n", "K", "N", "gamma", "C", "seed", "orthonormal"},
            "instance",
        )
        base = cls()
        return cls(
            n=int(doc.get("n", base.n)),
            K=int(doc.get("K", base.K)),
            N=int(doc.get("N", base.N)),
            gamma=float(doc.get("gamma", base.gamma)),
            C=float(doc.get("C", base.C)),
            seed=int(doc.get("seed", base.seed)),
            orthonormal=bool(doc.get("orthonormal", base.orthonormal)),
        )

    def build(self) -> tuple[MarkovRewardProcess, FeatureMap, int]:
        if self.path is not None:
            return load_instance(self.path)
        params = InstanceParams(
            n=self.n,
            K=self.K,
            N=self.N,
            gamma=self.gamma,
            reward_scale=self.C,
            orthonormal_features=self.orthonormal,
        )
        mrp, feats = generate_instance(params, self.seed)
        return mrp, feats, self.seed


SCHEDULE_TYPES = ("complete", "ring", "split_ring", "random", "explicit")


@dataclass(frozen=True)
class ScheduleSpec:
    """Declarative schedule: {type, N, period, B, lazy, edge_sets, seed, p}."""

    type: str = "ring"
    N: int = 5
    period: int = 1
    B: int | None = None
    lazy: float = 0.25
    seed: int = 0
    p: float = 0.5
    edge_sets: tuple | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ScheduleSpec":
        _check_keys(
            doc,
            {"type"},
            {"N", "period", "B", "lazy", "seed", "p", "edge_sets"},
            "schedule",
        )
        if doc["type"] not in SCHEDULE_TYPES:
            raise ConfigError(
                f"schedule type must be one of {SCHEDULE_TYPES}, got {doc['type']!r}"
            )
        base = cls()
        edge_sets = doc.get("edge_sets")
        if edge_sets is not None:
            edge_sets = tuple(tuple(tuple(e) for e in es) for es in edge_sets)
        return cls(
            type=str(doc["type"]),
            N=int(doc.get("N", base.N)),
            period=int(doc.get("period", base.period)),
            B=None if doc.get("B") is None else int(doc["B"]),
            lazy=float(doc.get("lazy", base.lazy)),
            seed=int(doc.get("seed", base.seed)),
            p=float(doc.get("p", base.p)),
            edge_sets=edge_sets,
        )

    def build(self) -> GraphSchedule:
        if self.type == "complete":
            sched = complete_schedule(self.N)
        elif self.type == "ring":
            sched = ring_schedule(self.N)
        elif self.type == "split_ring":
            sched = split_ring_schedule(self.N, self.period)
        elif self.type == "random":
            sched = random_connected_schedule(self.N, seed=self.seed, p=self.p)
        else:
            if self.edge_sets is None:
                raise ConfigError("explicit schedule requires edge_sets")
            sched = GraphSchedule(
                N=self.N, edge_sets=self.edge_sets, B=self.B or len(self.edge_sets)
            )
        if self.B is not None and self.type != "explicit":
            sched = GraphSchedule(N=sched.N, edge_sets=sched.edge_sets, B=self.B)
        return sched


def plan_from_dict(doc: dict) -> StepsizePlan:
    kind = doc.get("kind")
    if kind == "constant":
        _check_keys(doc, {"kind", "alpha"}, set(), "plan")
        return StepsizePlan.constant(float(doc["alpha"]))
    if kind == "inv_sqrt":
        _check_keys(doc, {"kind"}, set(), "plan")
        return StepsizePlan.inv_sqrt()
    if kind == "harmonic":
        _check_keys(doc, {"kind", "alpha0"}, set(), "plan")
        return StepsizePlan.harmonic(float(doc["alpha0"]))
    raise ConfigError(f"unknown plan kind {kind!r}")


def plan_to_dict(plan: StepsizePlan) -> dict:
    if plan.kind == "constant":
        return {"kind": "constant", "alpha": plan.param}
    if plan.kind == "inv_sqrt":
        return {"kind": "inv_sqrt"}
    return {"kind": "harmonic", "alpha0": plan.param}


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceSpec = field(default_factory=InstanceSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    plan: StepsizePlan = field(default_factory=lambda: StepsizePlan.constant(0.05))
    projection_radius: float | None = None
    iterations: int = 5000
    record_every: int = 10
    replications: int = 20
    seed: int = 20260810
    out: str | None = None
    checks: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.projection_radius is not None and self.projection_radius <= 0:
            raise ConfigError("projection_radius must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        _check_keys(
            doc,
            {"format_version"},
            {
                "instance",
                "schedule",
                "plan",
                "projection_radius",
                "iterations",
                "record_every",
                "replications",
                "seed",
                "out",
                "checks",
            },
            "config",
        )
        if doc["format_version"] != CONFIG_FORMAT_VERSION:
            raise ConfigError(
                f"unsupported format_version {doc['format_version']!r}; "
                f"expected {CONFIG_FORMAT_VERSION!r}"
            )
        base = cls()
        try:
            plan = (
                plan_from_dict(doc["plan"]) if "plan" in doc else base.plan
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            instance=(
                InstanceSpec.from_dict(doc["instance"])
                if "instance" in doc
                else base.instance
            ),
            schedule=(
                ScheduleSpec.from_dict(doc["schedule"])
                if "schedule" in doc
                else base.schedule
            ),
            plan=plan,
            projection_radius=doc.get("projection_radius"),
            iterations=int(doc.get("iterations", base.iterations)),
            record_every=int(doc.get("record_every", base.record_every)),
            replications=int(doc.get("replications", base.replications)),
            seed=int(doc.get("seed", base.seed)),
            out=doc.get("out"),
            checks=tuple(doc["checks"]) if "checks" in doc else None,
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        inst = (
            {"path": self.instance.path}
            if self.instance.path is not None
            else {
                "n": self.instance.n,
                "K": self.instance.K,
                "N": self.instance.N,
                "gamma": self.instance.gamma,
                "C": self.instance.C,
                "seed": self.instance.seed,
                "orthonormal": self.instance.orthonormal,
            }
        )
        sched = {
            "type": self.schedule.type,
            "N": self.schedule.N,
            "period": self.schedule.period,
            "B": self.schedule.B,
            "lazy": self.schedule.lazy,
            "seed": self.schedule.seed,
            "p": self.schedule.p,
        }
        if self.schedule.edge_sets is not None:
            sched["edge_sets"] = [
                [list(e) for e in es] for es in self.schedule.edge_sets
            ]
        return {
            "format_version": CONFIG_FORMAT_VERSION,
            "instance": inst,
            "schedule": sched,
            "plan": plan_to_dict(self.plan),
            "projection_radius": self.projection_radius,
            "iterations": self.iterations,
            "record_every": self.record_every,
            "replications": self.replications,
            "seed": self.seed,
        }
