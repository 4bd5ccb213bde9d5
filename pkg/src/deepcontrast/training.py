"""Fusion of the two streams and the alternating training schedule.

The fused map is a learned 1x1 combination S = sigmoid(w1*S1 + w2*S2 + b)
trained against class-balanced cross entropy; the segment stream trains
against squared error on per-segment labels. SGD uses momentum and weight
decay with a higher learning rate for the newly added single-channel layers.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .layers import sigmoid
from .segments import (
    FeatureGeometry,
    all_segment_features,
    render_s2,
    segment_labels_from_gt,
)
from .superpixels import segment_image

log = logging.getLogger(__name__)

EPS = 1e-8


@dataclass
class TrainConfig:
    lr_new: float = 0.01        # newly added single-channel layers
    lr_base: float = 0.001      # everything else
    momentum: float = 0.9
    weight_decay: float = 0.0005
    alternations: int = 8
    epochs_per_alternation: int = 1
    pretrain_epochs: int = 2    # stream-2 warmup before alternation
    batch_size: int = 1
    input_size: int = 321
    seed: int = 0

    def __post_init__(self):
        if self.lr_new <= 0 or self.lr_base <= 0:
            raise ValueError("learning rates must be positive")
        if self.alternations < 0:
            raise ValueError("alternations must be >= 0")


class FusionLayer:
    """1x1 fusion of the two saliency maps with a sigmoid output.

    Default parameters are chosen so two neutral streams (s1 = s2 = 0.5)
    fuse to exactly 0.5: w1*0.5 + w2*0.5 + b = 0. Starting the fused map at
    the output sigmoid's midpoint avoids a uniform drift of the stream-1
    logits into saturation during the first training epochs.
    """

    lr_group = "new"

    def __init__(self, w1=2.0, w2=2.0, b=-2.0):
        self.w = np.array([w1, w2], dtype=np.float64)
        self.b = np.array([b], dtype=np.float64)
        self.dw = np.zeros(2)
        self.db = np.zeros(1)

    def forward(self, s1, s2):
        if s1.shape != s2.shape:
            raise ValueError(f"map shapes differ: {s1.shape} vs {s2.shape}")
        self._s1, self._s2 = s1, s2
        self._out = sigmoid(self.w[0] * s1 + self.w[1] * s2 + self.b[0])
        return self._out

    def backward(self, dout):
        dz = dout * self._out * (1.0 - self._out)
        self.dw[0] += np.sum(dz * self._s1)
        self.dw[1] += np.sum(dz * self._s2)
        self.db[0] += np.sum(dz)
        return self.w[0] * dz, self.w[1] * dz

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}

    def zero_grad(self):
        self.dw[...] = 0.0
        self.db[...] = 0.0


@dataclass
class LossReport:
    loss: float
    beta: float
    n_pixels: int
    n_pos: int
    n_neg: int
    grad: np.ndarray  # dL/dS, same shape as the fused map


def balanced_cross_entropy(s, g, eps=EPS):
    """Class-balanced cross entropy between fused map s and binary ground
    truth g. The salient term is weighted by the background fraction and vice
    versa, so all-salient or all-background images give zero loss and
    gradient."""
    if s.shape != g.shape:
        raise ValueError(f"map shape {s.shape} != ground truth shape {g.shape}")
    g = np.asarray(g, dtype=np.float64)
    n = g.size
    n_pos = int(np.count_nonzero(g))
    n_neg = n - n_pos
    beta = n_neg / n
    sc = np.clip(s, eps, 1.0 - eps)
    loss = -beta * np.sum(g * np.log(sc)) \
        - (1.0 - beta) * np.sum((1.0 - g) * np.log(1.0 - sc))
    grad = -beta * g / sc + (1.0 - beta) * (1.0 - g) / (1.0 - sc)
    return LossReport(float(loss), beta, n, n_pos, n_neg, grad)


def stream2_loss(scores, labels):
    """Mean squared error over segments; gradient is 2*(score-label)/N."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape} scores vs {labels.shape} labels")
    diff = scores - labels
    return float(np.mean(diff ** 2)), 2.0 * diff / scores.size


class SgdOptimizer:
    """SGD with momentum and weight decay:
    v <- mu*v - lr*(g + wd*w); w <- w + v. Learning rate picked per layer
    group ('new' vs 'base')."""

    def __init__(self, layers, config):
        self.layers = list(layers)
        self.config = config
        self.velocity = [
            {k: np.zeros_like(v) for k, v in layer.params().items()}
            for _, layer in self.layers
        ]

    def step(self):
        cfg = self.config
        for (name, layer), vel in zip(self.layers, self.velocity):
            lr = cfg.lr_new if layer.lr_group == "new" else cfg.lr_base
            params, grads = layer.params(), layer.grads()
            for k in params:
                v = vel[k]
                v *= cfg.momentum
                v -= lr * (grads[k] + cfg.weight_decay * params[k])
                params[k] += v

    def zero_grad(self):
        for _, layer in self.layers:
            layer.zero_grad()


@dataclass
class ImageRecord:
    """Cached per-image training state (segmentations never change)."""
    image: np.ndarray
    gt: np.ndarray
    segs: list
    seg_labels: list


def prepare_dataset(images, gts, scales, slic_iters=10, compactness=10.0):
    records = []
    for img, gt in zip(images, gts):
        segs = [segment_image(img, k, slic_iters, compactness) for k in scales]
        labels = [segment_labels_from_gt(s, gt) for s in segs]
        records.append(ImageRecord(img, gt, segs, labels))
    return records


def forward_streams(net, regressor, record, grid=(2, 2)):
    """One backbone pass, then both stream outputs for an image record.
    Returns (msfcn output, per-scale features, per-scale scores, s2)."""
    out = net.forward(record.image)
    geom = FeatureGeometry.from_network(net, record.image.shape[:2],
                                        out.conv5_3.shape[1:])
    feats = [all_segment_features(out.conv5_3, seg, geom, grid)
             for seg in record.segs]
    scores = [regressor.forward(f) for f in feats]
    s2 = render_s2(scores, record.segs)
    return out, feats, scores, s2


def predict_fused(net, regressor, fusion, image, segs, grid=(2, 2)):
    """Inference: fused map S plus the per-stream maps."""
    out = net.forward(image)
    geom = FeatureGeometry.from_network(net, image.shape[:2],
                                        out.conv5_3.shape[1:])
    scores = [regressor.forward(
        all_segment_features(out.conv5_3, seg, geom, grid)) for seg in segs]
    s2 = render_s2(scores, segs)
    s = fusion.forward(out.s1, s2)
    return s, out.s1, s2


def alternate_train(records, net, regressor, fusion, config, grid=(2, 2),
                    on_epoch=None):
    """Alternating two-stream schedule.

    Phase B warmup for pretrain_epochs, then `alternations` rounds of
    (phase A: stream 1 + fusion against balanced cross entropy with stream 2
    frozen) and (phase B: segment regressor against squared error with
    stream 1 frozen). Returns the loss trace as (alternation, phase, loss).
    """
    if not records:
        raise ValueError("empty training set")
    trace = []
    opt_a = SgdOptimizer(net.param_layers() + [("fusion", fusion)], config)
    opt_b = SgdOptimizer(regressor.param_layers(), config)

    def phase_b_epoch():
        total = 0.0
        for rec in records:
            out = net.forward(rec.image)
            geom = FeatureGeometry.from_network(net, rec.image.shape[:2],
                                                out.conv5_3.shape[1:])
            for seg, labels in zip(rec.segs, rec.seg_labels):
                feats = all_segment_features(out.conv5_3, seg, geom, grid)
                opt_b.zero_grad()
                scores = regressor.forward(feats)
                loss, dscores = stream2_loss(scores, labels)
                regressor.backward(dscores)
                opt_b.step()
                total += loss
        return total / (len(records) * len(records[0].segs))

    def phase_a_epoch():
        total, used = 0.0, 0
        for rec in records:
            if rec.gt.min() == rec.gt.max():
                log.warning("skipping image with uniform ground truth "
                            "(zero balanced-cross-entropy gradient)")
                continue
            out, _, _, s2 = forward_streams(net, regressor, rec, grid)
            opt_a.zero_grad()
            s = fusion.forward(out.s1, s2)
            report = balanced_cross_entropy(s, rec.gt)
            if not np.isfinite(report.loss):
                raise FloatingPointError("non-finite training loss")
            # Seed backprop with the per-pixel mean gradient so learning
            # rates are independent of image size (pure rescale of the loss,
            # absorbed into lr). Stream 2 is held constant in this phase.
            ds1, _ = fusion.backward(report.grad / report.n_pixels)
            net.backward(ds1)
            opt_a.step()
            total += report.loss
            used += 1
        return total / max(1, used)

    for epoch in range(config.pretrain_epochs):
        loss = phase_b_epoch()
        trace.append(("pretrain", "B", loss))
        if on_epoch:
            on_epoch(trace[-1])
    for alt in range(config.alternations):
        for _ in range(config.epochs_per_alternation):
            loss = phase_a_epoch()
            trace.append((alt, "A", loss))
            if on_epoch:
                on_epoch(trace[-1])
        for _ in range(config.epochs_per_alternation):
            loss = phase_b_epoch()
            trace.append((alt, "B", loss))
            if on_epoch:
                on_epoch(trace[-1])
    return trace
