"""Multi-scale fully convolutional stream (stream 1).

A VGG16-shaped backbone (13 convolutions, five pooling stages) with
subsampling skipped in the last two pools so the final feature map keeps an
8-pixel stride; the convolutions after those pools use dilation 2 and 4 to
retain their receptive fields. Four scale branches hang off the first four
pooling stages, their single-channel outputs are stacked with the converted-top
map, and a 1x1 convolution plus sigmoid produces the low-resolution saliency
map, bilinearly upsampled to input resolution as S1.

All channel widths scale by ``width_scale`` for desk-scale runs; the geometry
(strides, receptive fields) is unaffected.
"""

from dataclasses import dataclass, field

import numpy as np

from .layers import (
    Affine,
    Conv,
    ConvSpec,
    MaxPool,
    ReLU,
    ShapeError,
    Sigmoid,
    bilinear_upsample,
    bilinear_upsample_backward,
)

BRANCH_STRIDES = {1: 4, 2: 2, 3: 1, 4: 1}


@dataclass
class BackboneConfig:
    width_scale: float = 1.0
    base_widths: tuple = (64, 128, 256, 512, 512)
    convs_per_stage: tuple = (2, 2, 3, 3, 3)
    top_channels: int = 4096
    branch_channels: int = 128
    skip_subsampling: bool = True
    input_mean: tuple = (0.5, 0.5, 0.5)

    def width(self, base):
        return max(1, round(base * self.width_scale))


def _backbone_plan(config):
    """Per-layer geometry plan up to conv5_3, then the pool5/top tail.

    Returns (layers, conv5_3_index) where each entry is
    (name, kind, spec-or-pool-args).
    """
    plan = []
    in_ch = 3
    for stage in range(5):
        ch = config.width(config.base_widths[stage])
        dil = 2 if (stage == 4 and config.skip_subsampling) else 1
        for i in range(config.convs_per_stage[stage]):
            spec = ConvSpec(in_ch, ch, kernel=(3, 3), stride=(1, 1),
                            pad=(dil, dil), dilation=(dil, dil))
            plan.append((f"conv{stage + 1}_{i + 1}", "conv", spec))
            in_ch = ch
        skip = config.skip_subsampling and stage >= 3
        if skip:
            plan.append((f"pool{stage + 1}", "pool", ((3, 3), (1, 1), (1, 1))))
        else:
            plan.append((f"pool{stage + 1}", "pool", ((2, 2), (2, 2), (0, 0))))
    return plan, in_ch


def receptive_field_center(geometry, pos):
    """Map a feature-map position to the input-pixel center of its receptive
    field. geometry lists (kernel, stride, pad, dilation) from input to the
    layer in question; pos may be a scalar or array (one spatial axis)."""
    c = np.asarray(pos, dtype=np.float64)
    for k, s, p, d in reversed(geometry):
        keff = (k - 1) * d + 1
        c = s * c + ((keff - 1) / 2.0 - p)
    return c


class MsFcn:
    """Stream 1 network. Build once from a config and seed; forward returns an
    MsFcnOutput, backward consumes the gradient on s1."""

    def __init__(self, config=None, seed=0):
        self.config = config or BackboneConfig()
        self.seed = seed
        rng = np.random.default_rng(seed)
        cfg = self.config

        self.layers = {}
        plan, c5_ch = _backbone_plan(cfg)
        self.backbone_plan = plan
        self.conv5_channels = c5_ch
        for name, kind, args in plan:
            if kind == "conv":
                self.layers[name] = Conv(args, rng=rng)
            else:
                self.layers[name] = MaxPool(*args, ceil_mode=True)

        top_ch = cfg.width(cfg.top_channels)
        self.layers["top1"] = Conv(
            ConvSpec(c5_ch, top_ch, kernel=(1, 1), dilation=(4, 4)), rng=rng)
        self.layers["top2"] = Conv(
            ConvSpec(top_ch, 1, kernel=(1, 1), dilation=(4, 4)), rng=rng,
            lr_group="new")

        bch = cfg.width(cfg.branch_channels)
        for bi in range(1, 5):
            s = BRANCH_STRIDES[bi]
            in_ch = cfg.width(cfg.base_widths[bi - 1])
            self.layers[f"branch{bi}_1"] = Conv(
                ConvSpec(in_ch, bch, kernel=(3, 3), stride=(s, s), pad=(1, 1)),
                rng=rng)
            self.layers[f"branch{bi}_2"] = Conv(
                ConvSpec(bch, bch, kernel=(1, 1)), rng=rng)
            self.layers[f"branch{bi}_3"] = Conv(
                ConvSpec(bch, 1, kernel=(1, 1)), rng=rng, lr_group="new")

        stack = Conv(ConvSpec(5, 1, kernel=(1, 1)), lr_group="new")
        stack.w[...] = 0.2  # initial S1 is a plain average of the five scales
        self.layers["stack"] = stack

        self._relu = {name: ReLU() for name in self.layers}
        self._sigmoid = Sigmoid()
        self._cache = None

    # -- geometry ---------------------------------------------------------

    def conv5_3_geometry(self):
        """(kernel, stride, pad, dilation) per layer from input to conv5_3."""
        geom = []
        for name, kind, args in self.backbone_plan:
            if kind == "conv":
                geom.append((args.kernel[0], args.stride[0], args.pad[0],
                             args.dilation[0]))
            else:
                (k, _), (s, _), (p, _) = args
                geom.append((k, s, p, 1))
            if name == "conv5_3" or (name.startswith("conv5") and
                                     name == f"conv5_{self.config.convs_per_stage[4]}"):
                break
        return geom

    # -- forward / backward ----------------------------------------------

    def normalize(self, image):
        """(H, W, 3) image in [0,1] -> (1, 3, H, W) mean-subtracted input."""
        mean = np.asarray(self.config.input_mean)
        return np.ascontiguousarray(
            (image - mean).transpose(2, 0, 1)[None], dtype=np.float64)

    def forward(self, image):
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeError(f"expected (H, W, 3) image, got {image.shape}")
        H, W = image.shape[:2]
        x = self.normalize(image)

        pool_outs = {}
        conv5_3 = None
        for name, kind, _ in self.backbone_plan:
            layer = self.layers[name]
            if kind == "conv":
                x = self._relu[name].forward(layer.forward(x))
                if name == "conv5_3":
                    conv5_3 = x
            else:
                x, _ = layer.forward(x)
                pool_outs[name] = x

        t = self.layers["top1"].forward(x)
        t = self._relu["top1"].forward(t)
        top_map = self.layers["top2"].forward(t)

        branch_maps = []
        for bi in range(1, 5):
            b = pool_outs[f"pool{bi}"]
            b = self._relu[f"branch{bi}_1"].forward(
                self.layers[f"branch{bi}_1"].forward(b))
            b = self._relu[f"branch{bi}_2"].forward(
                self.layers[f"branch{bi}_2"].forward(b))
            b = self.layers[f"branch{bi}_3"].forward(b)
            branch_maps.append(b)

        dims = {m.shape[2:] for m in branch_maps} | {top_map.shape[2:]}
        if len(dims) != 1:
            raise ShapeError(
                f"scale-branch maps do not align spatially: {sorted(dims)}")

        stack_in = np.concatenate(branch_maps + [top_map], axis=1)
        raw = self.layers["stack"].forward(stack_in)
        raw_s1 = self._sigmoid.forward(raw)
        s1 = bilinear_upsample(raw_s1, H, W)

        self._cache = {"input_dims": (H, W), "raw_dims": raw_s1.shape[2:]}
        return MsFcnOutput(
            s1=s1[0, 0],
            raw_s1=raw_s1[0, 0],
            conv5_3=conv5_3[0],
            branch_maps=np.concatenate(branch_maps, axis=1)[0],
        )

    def backward(self, d_s1):
        """Backpropagate a gradient on s1 (H, W); accumulates parameter
        gradients and returns the gradient on the normalized input."""
        hf, wf = self._cache["raw_dims"]
        d = bilinear_upsample_backward(d_s1[None, None], hf, wf)
        d = self._sigmoid.backward(d)
        d = self.layers["stack"].backward(d)

        d_branches = [d[:, i:i + 1] for i in range(4)]
        d_top = d[:, 4:5]

        # top path down to pool5 input
        d_t = self.layers["top2"].backward(d_top)
        d_t = self._relu["top1"].backward(d_t)
        d_x = self.layers["top1"].backward(d_t)

        d_pool = {}
        for bi in range(4, 0, -1):
            g = self.layers[f"branch{bi}_3"].backward(d_branches[bi - 1])
            g = self._relu[f"branch{bi}_2"].backward(g)
            g = self.layers[f"branch{bi}_2"].backward(g)
            g = self._relu[f"branch{bi}_1"].backward(g)
            d_pool[f"pool{bi}"] = self.layers[f"branch{bi}_1"].backward(g)

        for name, kind, _ in reversed(self.backbone_plan):
            layer = self.layers[name]
            if kind == "pool":
                if name in d_pool:
                    d_x = d_x + d_pool[name]
                d_x = layer.backward(d_x)
            else:
                d_x = self._relu[name].backward(d_x)
                d_x = layer.backward(d_x)
        return d_x

    # -- parameter access -------------------------------------------------

    def param_layers(self):
        """Ordered (name, layer) pairs for layers that carry parameters."""
        return [(n, l) for n, l in self.layers.items() if l.params()]

    def zero_grad(self):
        for _, layer in self.param_layers():
            layer.zero_grad()


@dataclass
class MsFcnOutput:
    s1: np.ndarray          # (H, W) in [0,1], input resolution
    raw_s1: np.ndarray      # (hf, wf) 1/8-resolution map
    conv5_3: np.ndarray     # (C, hf, wf) last backbone feature map
    branch_maps: np.ndarray  # (4, hf, wf)
