"""Segment-wise spatial pooling stream (stream 2).

Each superpixel is backprojected onto the last backbone feature map through
receptive-field centers, pooled over a fixed grid inside three nested windows
(own bounding box, bounding box including immediate neighbors, and the whole
map with the segment zeroed out), and the concatenated vector is regressed to
a per-segment saliency score. Scores rendered over the 3 segmentation scales
average into the map S2.
"""

from dataclasses import dataclass

import numpy as np

from .layers import Affine, ReLU, sigmoid
from .network import receptive_field_center
from .superpixels import segment_neighbors


@dataclass
class FeatureGeometry:
    input_dims: tuple      # (H, W)
    feature_dims: tuple    # (Hf, Wf)
    centers_y: np.ndarray  # receptive-field centers of feature rows, in input px
    centers_x: np.ndarray

    @classmethod
    def from_network(cls, net, input_dims, feature_dims):
        geom = net.conv5_3_geometry()
        hf, wf = feature_dims
        return cls(
            input_dims=tuple(input_dims),
            feature_dims=(hf, wf),
            centers_y=receptive_field_center(geom, np.arange(hf)),
            centers_x=receptive_field_center(geom, np.arange(wf)),
        )

    def pixel_to_cell(self):
        """Maps (row -> feature row, col -> feature col) by nearest
        receptive-field center; exact midpoints go to the smaller index."""
        h, w = self.input_dims

        def nearest(centers, n):
            mids = (centers[:-1] + centers[1:]) / 2.0
            return np.searchsorted(mids, np.arange(n), side="left")

        return nearest(self.centers_y, h), nearest(self.centers_x, w)


def backproject_fractions(seg, sid, geom):
    """Fraction of each activation's nearest-center pixels that lie inside
    segment sid: the 'averaged' stage of the mask rule."""
    hf, wf = geom.feature_dims
    rows, cols = geom.pixel_to_cell()
    inside = (seg.labels == sid).astype(np.float64)
    num = np.zeros((hf, wf))
    den = np.zeros((hf, wf))
    idx = (rows[:, None] * wf + cols[None, :]).ravel()
    num = np.bincount(idx, weights=inside.ravel(), minlength=hf * wf)
    den = np.bincount(idx, minlength=hf * wf).astype(np.float64)
    frac = np.zeros(hf * wf)
    covered = den > 0
    frac[covered] = num[covered] / den[covered]
    return frac.reshape(hf, wf)


def backproject_mask(seg, sid, geom):
    """Binary activation mask of a segment: per-activation averaged binary
    labels thresholded at 0.5 (strictly greater). An empty result falls back
    to the single activation nearest the segment centroid."""
    frac = backproject_fractions(seg, sid, geom)
    mask = frac > 0.5
    if not mask.any():
        ys, xs = np.nonzero(seg.labels == sid)
        cy, cx = ys.mean(), xs.mean()
        iy = int(np.argmin(np.abs(geom.centers_y - cy)))
        ix = int(np.argmin(np.abs(geom.centers_x - cx)))
        mask[iy, ix] = True
    return mask


def _cell_slices(length, cells):
    """Split `length` positions into `cells` ranges; the last cell absorbs the
    remainder. Degenerate windows (length < cells) repeat the last position."""
    if length >= cells:
        base = length // cells
        starts = [i * base for i in range(cells)]
        ends = starts[1:] + [length]
    else:
        starts = [min(i, length - 1) for i in range(cells)]
        ends = [s + 1 for s in starts]
    return list(zip(starts, ends))


def spatial_pool(featmap, window, grid, mask=None):
    """Max-pool a window of featmap (C, Hf, Wf) over a fixed grid.

    window is (y0, x0, y1, x1) inclusive on the feature grid; grid is (h, w).
    When a mask (Hf, Wf bool) is given, activations outside it contribute 0.
    Returns a vector of length h*w*C, cell-major.
    """
    y0, x0, y1, x1 = window
    if y1 < y0 or x1 < x0:
        raise ValueError(f"empty pooling window {window}")
    sub = featmap[:, y0:y1 + 1, x0:x1 + 1]
    if mask is not None:
        sub = sub * mask[y0:y1 + 1, x0:x1 + 1]
    c = featmap.shape[0]
    gh, gw = grid
    out = np.empty((gh, gw, c))
    for ci, (ra, rb) in enumerate(_cell_slices(sub.shape[1], gh)):
        for cj, (ca, cb) in enumerate(_cell_slices(sub.shape[2], gw)):
            out[ci, cj] = sub[:, ra:rb, ca:cb].max(axis=(1, 2))
    return out.ravel()


def _mask_bbox(mask):
    ys, xs = np.nonzero(mask)
    return int(ys.min()), int(xs.min()), int(ys.max()), int(xs.max())


def segment_feature(conv5_3, seg, sid, geom, grid=(2, 2)):
    """Concatenated pooled features of three nested windows:
    (a) the segment's own bounding box on the feature grid,
    (b) the union bounding box of the segment and its immediate neighbors,
    (c) the entire feature map with the segment's activations zeroed out.
    Length is always 3 * grid_h * grid_w * C."""
    hf, wf = geom.feature_dims
    mask = backproject_mask(seg, sid, geom)
    bbox_a = _mask_bbox(mask)
    union = mask.copy()
    for nid in segment_neighbors(seg, sid):
        union |= backproject_mask(seg, nid, geom)
    bbox_b = _mask_bbox(union)
    fa = spatial_pool(conv5_3, bbox_a, grid)
    fb = spatial_pool(conv5_3, bbox_b, grid)
    fc = spatial_pool(conv5_3, (0, 0, hf - 1, wf - 1), grid, mask=~mask)
    return np.concatenate([fa, fb, fc])


def all_segment_features(conv5_3, seg, geom, grid=(2, 2)):
    """Feature matrix (num_segments, 3*gh*gw*C) for one segmentation scale."""
    return np.stack([segment_feature(conv5_3, seg, sid, geom, grid)
                     for sid in range(seg.num_segments)])


class SegmentRegressor:
    """Two 300-unit fully connected layers with rectifier nonlinearities,
    then a sigmoid logistic-regression output."""

    def __init__(self, in_dim, hidden=300, seed=0):
        rng = np.random.default_rng(seed)
        self.fc1 = Affine(in_dim, hidden, rng=rng)
        self.fc2 = Affine(hidden, hidden, rng=rng)
        self.out = Affine(hidden, 1, rng=rng, lr_group="new")
        self.r1 = ReLU()
        self.r2 = ReLU()

    def forward(self, feats):
        """feats (n, in_dim) -> scores (n,) in (0, 1)."""
        h = self.r1.forward(self.fc1.forward(feats))
        h = self.r2.forward(self.fc2.forward(h))
        self._z = self.out.forward(h)[:, 0]
        self._s = sigmoid(self._z)
        return self._s

    def backward(self, dscores):
        dz = (dscores * self._s * (1.0 - self._s))[:, None]
        dh = self.out.backward(dz)
        dh = self.fc2.backward(self.r2.backward(dh))
        return self.fc1.backward(self.r1.backward(dh))

    def param_layers(self):
        return [("fc1", self.fc1), ("fc2", self.fc2), ("out", self.out)]

    def zero_grad(self):
        for _, layer in self.param_layers():
            layer.zero_grad()


def render_s2(scores_per_scale, segmentations):
    """Per pixel, the mean over scales of the enclosing segment's score."""
    if len(scores_per_scale) != len(segmentations):
        raise ValueError("need one score vector per segmentation scale")
    acc = None
    for scores, seg in zip(scores_per_scale, segmentations):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape[0] != seg.num_segments:
            raise ValueError(
                f"{scores.shape[0]} scores for {seg.num_segments} segments")
        m = scores[seg.labels]
        acc = m if acc is None else acc + m
    return acc / len(segmentations)


def segment_labels_from_gt(seg, gt):
    """A segment is salient iff more than half of its pixels are salient."""
    gt = np.asarray(gt, dtype=np.float64)
    counts = np.bincount(seg.labels.ravel(), minlength=seg.num_segments)
    pos = np.bincount(seg.labels.ravel(), weights=gt.ravel(),
                      minlength=seg.num_segments)
    return (pos / counts > 0.5).astype(np.float64)
