"""Configuration schema: strict validation, overrides, round-trips, and the
coverage guarantee that pipeline constants are reachable from RunConfig."""

import dataclasses
import json

import pytest

from deepcontrast.config import (
    RunConfig,
    SuperpixelConfig,
    dump_config,
    load_config,
)
from deepcontrast.crf import CrfParams
from deepcontrast.training import TrainConfig


def test_defaults_match_reference_protocol():
    cfg = RunConfig()
    assert cfg.superpixels.scales == (200, 150, 50)
    assert cfg.pool_grid == (2, 2)
    assert cfg.regressor_hidden == 300
    assert (cfg.train.lr_new, cfg.train.lr_base) == (0.01, 0.001)
    assert cfg.train.momentum == 0.9
    assert cfg.train.weight_decay == 0.0005
    assert cfg.train.alternations == 8
    assert cfg.train.input_size == 321
    assert (cfg.crf.w1, cfg.crf.w2) == (3.0, 5.0)
    assert (cfg.crf.sigma_alpha, cfg.crf.sigma_beta,
            cfg.crf.sigma_gamma) == (3.0, 50.0, 3.0)


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 1, "learning_rate": 0.1}))
    with pytest.raises(ValueError, match="unknown keys"):
        load_config(str(p))


def test_unknown_nested_key_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"train": {"lr_fast": 0.1}}))
    with pytest.raises(ValueError, match="config.train"):
        load_config(str(p))


def test_nested_must_be_object(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"train": 5}))
    with pytest.raises(ValueError, match="must be an object"):
        load_config(str(p))


def test_file_values_and_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 7, "train": {"alternations": 2},
                             "superpixels": {"scales": [20, 10]}}))
    cfg = load_config(str(p), overrides={"train.momentum": 0.5})
    assert cfg.seed == 7
    assert cfg.train.alternations == 2
    assert cfg.superpixels.scales == (20, 10)
    assert cfg.train.momentum == 0.5


def test_unknown_override_rejected():
    with pytest.raises(ValueError, match="unknown config key"):
        load_config(None, overrides={"train.does_not_exist": 1})


def test_dump_load_roundtrip(tmp_path):
    cfg = RunConfig(seed=3, width_scale=0.5)
    cfg.crf.iterations = 4
    p = tmp_path / "c.json"
    dump_config(cfg, str(p))
    back = load_config(str(p))
    assert back == cfg


def all_field_paths(cls, prefix=""):
    paths = set()
    for f in dataclasses.fields(cls):
        name = f"{prefix}{f.name}"
        ftype = f.type if not isinstance(f.type, str) else {
            "TrainConfig": TrainConfig, "CrfParams": CrfParams,
            "SuperpixelConfig": SuperpixelConfig}.get(f.type)
        if ftype is not None and dataclasses.is_dataclass(ftype):
            paths |= all_field_paths(ftype, name + ".")
        else:
            paths.add(name)
    return paths


def test_config_coverage():
    """Every pipeline constant is reachable from RunConfig; none hides in a
    module. The list enumerates the constants the modules consume."""
    paths = all_field_paths(RunConfig)
    required = {
        "seed", "width_scale", "input_mean", "top_channels",
        "branch_channels", "pool_grid", "regressor_hidden", "gt_threshold",
        "loss_clamp",
        "train.lr_new", "train.lr_base", "train.momentum",
        "train.weight_decay", "train.alternations",
        "train.epochs_per_alternation", "train.pretrain_epochs",
        "train.batch_size", "train.input_size", "train.seed",
        "crf.w1", "crf.w2", "crf.sigma_alpha", "crf.sigma_beta",
        "crf.sigma_gamma", "crf.iterations",
        "superpixels.scales", "superpixels.compactness",
        "superpixels.max_iters", "superpixels.change_tol",
    }
    assert required <= paths, sorted(required - paths)
