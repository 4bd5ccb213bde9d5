"""Model facade: prediction outputs, checkpoint round-trips, and the
sklearn-style estimator."""

import numpy as np
import pytest

from deepcontrast.blobio import read_blob, write_blob
from deepcontrast.config import RunConfig
from deepcontrast.estimator import DeepContrastSaliency
from deepcontrast.model import DeepContrastModel
from deepcontrast.synth import make_corpus


def tiny_config():
    cfg = RunConfig(seed=0, width_scale=1 / 64, top_channels=128,
                    branch_channels=64)
    cfg.superpixels.scales = (12, 8)
    cfg.train.alternations = 1
    cfg.train.epochs_per_alternation = 1
    cfg.train.pretrain_epochs = 1
    return cfg


def test_blob_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    for shape in [(3,), (2, 5), (2, 3, 4), (1, 2, 3, 4)]:
        arr = rng.standard_normal(shape)
        p = tmp_path / "a.bin"
        write_blob(str(p), arr)
        back = read_blob(str(p))
        assert np.array_equal(back.reshape(shape), arr)


def test_predict_output_contract():
    model = DeepContrastModel(tiny_config())
    img = np.random.default_rng(1).random((33, 33, 3))
    out = model.predict(img)
    for key in ("s", "s1", "s2"):
        assert out[key].shape == (33, 33)
        assert out[key].min() >= 0.0 and out[key].max() <= 1.0
    assert "s_crf" not in out


def test_predict_with_crf():
    cfg = tiny_config()
    cfg.crf.iterations = 2
    model = DeepContrastModel(cfg)
    img = np.random.default_rng(2).random((17, 17, 3))
    out = model.predict(img, crf=True)
    assert out["s_crf"].shape == (17, 17)


def test_checkpoint_roundtrip(tmp_path):
    model = DeepContrastModel(tiny_config())
    img = np.random.default_rng(3).random((33, 33, 3))
    before = model.predict(img)
    model.save(str(tmp_path / "ckpt"))
    back = DeepContrastModel.load(str(tmp_path / "ckpt"))
    after = back.predict(img)
    for key in ("s", "s1", "s2"):
        assert np.array_equal(before[key], after[key])
    assert back.config == model.config


def test_checkpoint_rejects_bad_format(tmp_path):
    d = tmp_path / "ckpt"
    d.mkdir()
    (d / "manifest.json").write_text('{"format": "something-else"}')
    with pytest.raises(ValueError, match="unrecognized"):
        DeepContrastModel.load(str(d))


def test_estimator_fit_predict_score():
    pairs = make_corpus(2, size=(33, 33), seed=5)
    X = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    est = DeepContrastSaliency(width_scale=1 / 64, alternations=1,
                               pretrain_epochs=1, scales=(12, 8))
    est.fit(X, y)
    maps = est.predict(X)
    assert len(maps) == 2
    assert maps[0].shape == (33, 33)
    assert 0.0 <= est.score(X, y) <= 1.0
    assert len(est.loss_trace_) == 3  # pretrain B + alt-0 A + alt-0 B


def test_estimator_get_params_roundtrip():
    est = DeepContrastSaliency(width_scale=0.25, seed=9)
    params = est.get_params()
    assert params["width_scale"] == 0.25
    clone = DeepContrastSaliency(**params)
    assert clone.get_params() == params


def test_estimator_validates_inputs():
    est = DeepContrastSaliency()
    with pytest.raises(ValueError, match="expected"):
        est.fit([np.zeros((4, 4))], [np.zeros((4, 4))])
    with pytest.raises(ValueError, match="lie in"):
        est.fit([np.full((4, 4, 3), 2.0)], [np.zeros((4, 4))])
    with pytest.raises(RuntimeError, match="not fitted"):
        est.predict([np.zeros((4, 4, 3))])
