"""Experiment configuration: a JSON file with fixed sections, validated
against a schema that rejects unknown keys. The resolved config is written
next to every run's outputs so any artifact can be regenerated from it
alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .bootstrap import (ResidualTrainConfig, residual_config_from_dict,
                        train_config_from_dict)
from .errors import ConfigError
from .linops import (GridShape, ViewOperator, make_downsample_operator,
                     make_patch_tiling)
from .neural.train import TrainConfig
from .schedule import DiffusionSchedule
from .synthdata import DataSpec, random_spec, spec_from_json

# schema: section -> {key: type or nested dict}; None means "any JSON value"
_TRAIN_KEYS = {"epochs": int, "batch_size": int, "optimizer": str,
               "lr": float, "betas": list, "eps": float, "seed": int,
               "hidden": list, "activation": str, "max_steps": (int,
               type(None)), "shards": int}

_SCHEMA = {
    "seed": int,
    "out_dir": str,
    "spec": {"preset": str, "spec_json": dict, "height": int, "width": int,
             "channels": int, "U": float, "n_components": int,
             "rho_g": float, "rank": int, "seed": int, "mean_scale": float,
             "var_range": list},
    "views": list,
    "sizes": {"n0": int, "view": (int, list), "calib": int},
    "train": {"views": dict(_TRAIN_KEYS),
              "residual": {"lam": float, "hard_cap": (float, type(None)),
                           "mode": str, "inner": dict(_TRAIN_KEYS)}},
    "schedule": {"sigma_min": float, "sigma_max": float, "Q": int,
                 "rule": str},
    "eval": {"n_mc": int, "bins": int, "kl_n_mc": int},
    "bounds": {"N": int, "K": int, "m": int, "U": float, "delta_b": float,
               "delta_v": float, "rho": float, "gamma": float,
               "epsilon": float, "EV": float, "rademacher": float,
               "cover": {"L_bar": float, "W": float, "C": float,
                         "epsilon": float, "N": int}},
    "flags": {"calibrate_on_s0": bool, "parallel": bool,
              "n_weight_bins": int, "n_adapter_bins": int},
}

_VIEW_KEYS = {"kind": str, "patch_h": int, "patch_w": int, "factor": int,
              "operator_json": dict}


def _check(doc, schema, path: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    for key, val in doc.items():
        if key not in schema:
            raise ConfigError(f"{path}.{key}: unknown key")
        want = schema[key]
        if isinstance(want, dict):
            _check(val, want, f"{path}.{key}")
        elif want is list:
            if not isinstance(val, list):
                raise ConfigError(f"{path}.{key}: expected a list")
        elif want is float:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"{path}.{key}: expected a number")
        elif isinstance(want, tuple):
            ok = any((isinstance(val, (int, float)) and not
                      isinstance(val, bool)) if t is float else
                     isinstance(val, t) for t in want)
            if not ok:
                raise ConfigError(f"{path}.{key}: wrong type")
        elif not isinstance(val, want) or (want is int and
                                           isinstance(val, bool)):
            raise ConfigError(f"{path}.{key}: expected {want.__name__}")


@dataclass(eq=False)
class ExperimentConfig:
    raw: dict
    spec: DataSpec
    operators: list[ViewOperator]
    view_sizes: list[int]
    n0: int
    calib_size: int
    schedule: DiffusionSchedule
    view_cfg: TrainConfig
    residual_cfg: ResidualTrainConfig
    seed: int
    out_dir: str
    eval_cfg: dict = field(default_factory=dict)
    bounds_cfg: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.raw, indent=1, sort_keys=True))


def _build_spec(section: dict) -> DataSpec:
    if "spec_json" in section:
        return spec_from_json(json.dumps(section["spec_json"]))
    grid = GridShape(section.get("height", 4), section.get("width", 4),
                     section.get("channels", 1))
    return random_spec(
        spec_id=section.get("preset", "random"), grid=grid,
        U=section.get("U", 1.0),
        n_components=section.get("n_components", 1),
        rho_g=section.get("rho_g", 0.0), rank=section.get("rank", 2),
        seed=section.get("seed", 0),
        mean_scale=section.get("mean_scale", 0.2),
        var_range=tuple(section.get("var_range", (0.005, 0.015))))


def _build_views(items: list, grid: GridShape) -> list[ViewOperator]:
    ops: list[ViewOperator] = []
    for i, item in enumerate(items):
        _check(item, _VIEW_KEYS, f"views[{i}]")
        kind = item.get("kind")
        if kind == "patch_tiling":
            ops.extend(make_patch_tiling(grid, item["patch_h"],
                                         item["patch_w"]))
        elif kind == "downsample":
            ops.append(make_downsample_operator(grid, item["factor"]))
        elif kind == "operator":
            ops.append(ViewOperator.from_json(
                json.dumps(item["operator_json"])))
        else:
            raise ConfigError(f"views[{i}].kind: unknown view kind {kind!r}")
    return ops


def parse_config(doc: dict) -> ExperimentConfig:
    _check(doc, _SCHEMA, "config")
    spec = _build_spec(doc.get("spec", {}))
    operators = _build_views(doc.get("views", []), spec.grid)
    sizes = doc.get("sizes", {})
    n0 = sizes.get("n0", 64)
    view_size = sizes.get("view", 5000)
    view_sizes = list(view_size) if isinstance(view_size, list) \
        else [view_size] * len(operators)
    if len(view_sizes) != len(operators):
        raise ConfigError("sizes.view: length must match the view count")

    sched_doc = doc.get("schedule", {})
    schedule = DiffusionSchedule(
        sigma_min=sched_doc.get("sigma_min", 0.002),
        sigma_max=sched_doc.get("sigma_max", 2.0),
        Q=sched_doc.get("Q", 100), rule=sched_doc.get("rule", "log"))

    train_doc = doc.get("train", {})
    view_cfg = train_config_from_dict(
        {**{"betas": [0.9, 0.999], "hidden": [256, 256]},
         **train_doc.get("views", {})})
    res_doc = dict(train_doc.get("residual", {}))
    res_doc.setdefault("inner", {})
    res_doc["inner"] = {**{"betas": [0.9, 0.999], "hidden": [256, 256]},
                        **res_doc["inner"]}
    residual_cfg = residual_config_from_dict(res_doc)

    return ExperimentConfig(
        raw=doc, spec=spec, operators=operators, view_sizes=view_sizes,
        n0=n0, calib_size=sizes.get("calib", 256), schedule=schedule,
        view_cfg=view_cfg, residual_cfg=residual_cfg,
        seed=doc.get("seed", 0), out_dir=doc.get("out_dir", "out"),
        eval_cfg=doc.get("eval", {}), bounds_cfg=doc.get("bounds", {}),
        flags=doc.get("flags", {}))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: {e.msg}") from e
    return parse_config(doc)
