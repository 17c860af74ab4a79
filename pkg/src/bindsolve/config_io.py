"""Config file loading and emission.

Files are plain key-value trees: TOML in, TOML out (a minimal writer keeps us
dependency-light; tomli only reads), with JSON accepted anywhere TOML is.
Keys mirror the config dataclasses 1:1; the similarity regularizer uses the
key ``lambda`` in files (a keyword in Python, so the attribute is
``reg_lambda``).
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import tomli

from .baselines import BaselineConfig
from .bench import (ExperimentConfig, PriorConfig, ScheduleConfig, SweepSpec)
from .guidance import CouplingConfig
from .sampler import SamplerConfig


class ConfigError(ValueError):
    pass


def load_toml(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError:
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid TOML or JSON: {exc}") from exc


def _pick(d: dict, cls, key_map: dict[str, str] | None = None):
    key_map = key_map or {}
    fields = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    kwargs = {}
    for key, value in d.items():
        name = key_map.get(key, key)
        if name not in fields:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {cls.__name__}: {exc}") from exc


_COUPLING_KEYS = {"lambda": "reg_lambda"}


def config_from_dict(tree: dict) -> ExperimentConfig:
    tree = dict(tree)
    exp = dict(tree.pop("experiment", {}))
    exp["schedule"] = _pick(tree.pop("schedule", {}), ScheduleConfig)
    exp["prior"] = _pick(tree.pop("prior", {}), PriorConfig)
    exp["coupling"] = _pick(tree.pop("coupling", {}), CouplingConfig,
                            _COUPLING_KEYS)
    exp["sampler"] = _pick(tree.pop("sampler", {}), SamplerConfig)
    exp["baseline"] = _pick(tree.pop("baseline", {}), BaselineConfig)
    if tree:
        raise ConfigError(f"unknown config sections: {sorted(tree)}")
    try:
        return _pick(exp, ExperimentConfig).normalized()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    exp = {k: v for k, v in asdict(cfg).items()
           if k not in ("schedule", "prior", "coupling", "sampler", "baseline")}
    coupling = asdict(cfg.coupling)
    coupling["lambda"] = coupling.pop("reg_lambda")
    return {
        "experiment": exp,
        "schedule": asdict(cfg.schedule),
        "prior": asdict(cfg.prior),
        "coupling": coupling,
        "sampler": asdict(cfg.sampler),
        "baseline": asdict(cfg.baseline),
    }


def sweep_from_dict(tree: dict) -> SweepSpec:
    tree = dict(tree)
    head = dict(tree.pop("sweep", {}))
    kind = head.pop("kind", None)
    if kind is None:
        raise ConfigError("sweep file needs [sweep] kind = ...")
    solvers = tuple(head.pop("solvers", ()))
    if not solvers:
        raise ConfigError("sweep file needs a nonempty solvers list")
    values = head.pop("values", ())
    if kind == "restarts":
        values = tuple((float(v[0]), int(v[1])) for v in values)
    else:
        values = tuple(values)
    prefix = head.pop("out_prefix", "sweep")
    if head:
        raise ConfigError(f"unknown sweep keys: {sorted(head)}")
    base = config_from_dict(tree) if tree else ExperimentConfig()
    try:
        return SweepSpec(kind=kind, solvers=solvers, values=values, base=base,
                         out_prefix=prefix)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    if v is None:
        raise ConfigError("TOML has no null; drop the key instead")
    raise ConfigError(f"cannot emit {type(v).__name__} to TOML")


def dump_toml(tree: dict) -> str:
    lines = []
    for section, body in tree.items():
        lines.append(f"[{section}]")
        for key, value in body.items():
            if value is None:
                continue
            lines.append(f"{key} = {_toml_scalar(value)}")
        lines.append("")
    return "\n".join(lines)


def emit_config(cfg: ExperimentConfig) -> str:
    return dump_toml(config_to_dict(cfg))
