"""One structured run configuration covering every tunable constant in the
pipeline. JSON documents validate strictly: unknown keys are rejected."""

import dataclasses
import json
from dataclasses import dataclass, field

from .crf import CrfParams
from .network import BackboneConfig
from .training import TrainConfig


@dataclass
class SuperpixelConfig:
    scales: tuple = (200, 150, 50)
    compactness: float = 10.0
    max_iters: int = 10
    change_tol: float = 0.01


@dataclass
class RunConfig:
    seed: int = 0
    width_scale: float = 1.0
    input_mean: tuple = (0.5, 0.5, 0.5)
    top_channels: int = 4096
    branch_channels: int = 128
    pool_grid: tuple = (2, 2)
    regressor_hidden: int = 300
    gt_threshold: float = 0.5       # continuous ground truths binarize here
    loss_clamp: float = 1e-8
    train: TrainConfig = field(default_factory=TrainConfig)
    crf: CrfParams = field(default_factory=CrfParams)
    superpixels: SuperpixelConfig = field(default_factory=SuperpixelConfig)

    def backbone_config(self):
        return BackboneConfig(
            width_scale=self.width_scale,
            top_channels=self.top_channels,
            branch_channels=self.branch_channels,
            input_mean=tuple(self.input_mean),
        )


def _from_dict(cls, doc, path="config"):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(fields)
    if unknown:
        raise ValueError(f"unknown keys in {path}: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        ftype = fields[key].type
        if dataclasses.is_dataclass(_resolve(ftype)):
            if not isinstance(value, dict):
                raise ValueError(f"{path}.{key} must be an object")
            kwargs[key] = _from_dict(_resolve(ftype), value, f"{path}.{key}")
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _resolve(ftype):
    if isinstance(ftype, str):
        return {"TrainConfig": TrainConfig, "CrfParams": CrfParams,
                "SuperpixelConfig": SuperpixelConfig}.get(ftype, type(None))
    return ftype


def load_config(path=None, overrides=None):
    """RunConfig from an optional JSON file plus dotted-key overrides like
    {'train.alternations': 2}."""
    doc = {}
    if path is not None:
        with open(path) as f:
            doc = json.load(f)
    cfg = _from_dict(RunConfig, doc)
    for key, value in (overrides or {}).items():
        obj = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            obj = getattr(obj, part)
        if not hasattr(obj, parts[-1]):
            raise ValueError(f"unknown config key: {key}")
        setattr(obj, parts[-1], value)
    return cfg


def dump_config(cfg, path):
    with open(path, "w") as f:
        json.dump(dataclasses.asdict(cfg), f, indent=1, default=list)
