"""The full two-stream model: backbone + scale branches, segment regressor,
and fusion layer, with checkpoint save/load (a JSON manifest plus one binary
blob per parameter tensor)."""

import dataclasses
import json
import os

import numpy as np

from . import blobio
from .config import RunConfig, _from_dict
from .crf import mean_field_infer
from .network import MsFcn
from .segments import SegmentRegressor
from .superpixels import segment_image
from .training import FusionLayer, predict_fused


class DeepContrastModel:
    """Everything needed to map an image to a saliency map."""

    def __init__(self, config=None):
        self.config = config or RunConfig()
        cfg = self.config
        self.net = MsFcn(cfg.backbone_config(), seed=cfg.seed)
        grid = cfg.pool_grid
        feat_dim = 3 * grid[0] * grid[1] * self.net.conv5_channels
        self.regressor = SegmentRegressor(feat_dim, hidden=cfg.regressor_hidden,
                                          seed=cfg.seed + 1)
        self.fusion = FusionLayer()

    # -- inference --------------------------------------------------------

    def segmentations(self, image):
        sp = self.config.superpixels
        return [segment_image(image, k, sp.max_iters, sp.compactness)
                for k in sp.scales]

    def predict(self, image, crf=False, crf_radius=None):
        """Returns dict with fused map 's', streams 's1'/'s2', and 's_crf'
        when requested."""
        segs = self.segmentations(image)
        s, s1, s2 = predict_fused(self.net, self.regressor, self.fusion,
                                  image, segs, self.config.pool_grid)
        out = {"s": s, "s1": s1, "s2": s2}
        if crf:
            out["s_crf"] = mean_field_infer(s, image, self.config.crf,
                                            radius=crf_radius)
        return out

    # -- parameters -------------------------------------------------------

    def param_layers(self):
        layers = list(self.net.param_layers())
        layers += [(f"regressor.{n}", l) for n, l in self.regressor.param_layers()]
        layers.append(("fusion", self.fusion))
        return layers

    # -- checkpoints ------------------------------------------------------

    def save(self, ckpt_dir):
        os.makedirs(ckpt_dir, exist_ok=True)
        entries = []
        for name, layer in self.param_layers():
            files = {}
            for pname, arr in layer.params().items():
                fname = f"{name}.{pname}.bin"
                blobio.write_blob(os.path.join(ckpt_dir, fname), arr)
                files[pname] = fname
            entries.append({"name": name, "shapes":
                            {k: list(np.shape(v)) for k, v in layer.params().items()},
                            "files": files})
        manifest = {
            "format": "deepcontrast-checkpoint-v1",
            "config": dataclasses.asdict(self.config),
            "layers": entries,
        }
        with open(os.path.join(ckpt_dir, "manifest.json"), "w") as f:
            json.dump(manifest, f, indent=1, default=list)

    @classmethod
    def load(cls, ckpt_dir):
        with open(os.path.join(ckpt_dir, "manifest.json")) as f:
            manifest = json.load(f)
        if manifest.get("format") != "deepcontrast-checkpoint-v1":
            raise ValueError(f"unrecognized checkpoint format in {ckpt_dir}")
        config = _from_dict(RunConfig, manifest["config"])
        model = cls(config)
        layers = dict(model.param_layers())
        for entry in manifest["layers"]:
            layer = layers.get(entry["name"])
            if layer is None:
                raise ValueError(f"checkpoint layer {entry['name']} not in model")
            for pname, fname in entry["files"].items():
                blob = blobio.read_blob(os.path.join(ckpt_dir, fname))
                target = layer.params()[pname]
                target[...] = blob.reshape(target.shape)
        return model
