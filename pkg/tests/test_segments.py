"""Segment stream: backprojection, nested-window pooling, feature dimension,
regressor behavior, and S2 rendering."""

import numpy as np
import pytest

from deepcontrast.network import BackboneConfig, MsFcn
from deepcontrast.segments import (
    FeatureGeometry,
    SegmentRegressor,
    _cell_slices,
    all_segment_features,
    backproject_fractions,
    backproject_mask,
    render_s2,
    segment_feature,
    segment_labels_from_gt,
    spatial_pool,
)
from deepcontrast.superpixels import Segmentation


def grid_segmentation(labels):
    labels = np.asarray(labels)
    num = labels.max() + 1
    bboxes, adjacency = [], [set() for _ in range(num)]
    for sid in range(num):
        ys, xs = np.nonzero(labels == sid)
        bboxes.append((ys.min(), xs.min(), ys.max(), xs.max()))
    for (a, b) in [(labels[1:], labels[:-1]), (labels[:, 1:], labels[:, :-1])]:
        for u, v in zip(a[a != b], b[a != b]):
            adjacency[u].add(int(v))
            adjacency[v].add(int(u))
    return Segmentation(labels, num, bboxes, adjacency)


def toy_geometry(h=16, w=16, hf=4, wf=4):
    """Uniform centers: 16 input px onto 4 activations, centers 1.5,5.5,..."""
    return FeatureGeometry(
        input_dims=(h, w), feature_dims=(hf, wf),
        centers_y=np.arange(hf) * (h / hf) + (h / hf - 1) / 2.0,
        centers_x=np.arange(wf) * (w / wf) + (w / wf - 1) / 2.0)


def test_pixel_to_cell_nearest_center():
    geom = toy_geometry()
    rows, cols = geom.pixel_to_cell()
    # centers 1.5, 5.5, 9.5, 13.5 -> pixels 0..3 to cell 0, 4..7 to cell 1...
    assert np.array_equal(rows, np.repeat(np.arange(4), 4))
    assert np.array_equal(cols, rows)


def test_pixel_to_cell_midpoint_goes_to_smaller():
    geom = FeatureGeometry((5, 5), (2, 2), np.array([1.0, 3.0]),
                           np.array([1.0, 3.0]))
    rows, _ = geom.pixel_to_cell()
    # pixel 2 is equidistant from centers 1 and 3 -> cell 0
    assert list(rows) == [0, 0, 0, 1, 1]


def test_backproject_fractions_exact():
    geom = toy_geometry()
    labels = np.zeros((16, 16), dtype=int)
    labels[:8] = 0
    labels[8:] = 1
    labels[6:8, :] = 1  # rows 6,7 flip: cell row 1 is half segment 1
    seg = grid_segmentation(labels)
    frac = backproject_fractions(seg, 1, geom)
    assert np.allclose(frac[0], 0.0)
    assert np.allclose(frac[1], 0.5)  # rows 4-7: rows 6,7 of 4 in segment 1
    assert np.allclose(frac[2:], 1.0)


def test_backproject_mask_strict_threshold():
    """Exactly half inside -> excluded (threshold is strictly > 0.5)."""
    geom = toy_geometry()
    labels = np.zeros((16, 16), dtype=int)
    labels[6:, :] = 1
    seg = grid_segmentation(labels)
    mask = backproject_mask(seg, 1, geom)
    assert not mask[1].any()  # 0.5 fraction rows excluded
    assert mask[2:].all()


def test_backproject_mask_empty_fallback():
    """A segment too small to claim any activation gets its centroid cell."""
    geom = toy_geometry()
    labels = np.zeros((16, 16), dtype=int)
    labels[5, 5] = 1  # single pixel, fraction 1/16 in its cell
    seg = grid_segmentation(labels)
    mask = backproject_mask(seg, 1, geom)
    assert mask.sum() == 1
    assert mask[1, 1]  # centroid (5,5) nearest centers (5.5, 5.5)


def test_cell_slices():
    assert _cell_slices(4, 2) == [(0, 2), (2, 4)]
    assert _cell_slices(5, 2) == [(0, 2), (2, 5)]  # last absorbs remainder
    assert _cell_slices(1, 2) == [(0, 1), (0, 1)]  # degenerate repeats


def test_spatial_pool_max_per_cell():
    fm = np.arange(16, dtype=float).reshape(1, 4, 4)
    v = spatial_pool(fm, (0, 0, 3, 3), (2, 2))
    assert np.array_equal(v, [5, 7, 13, 15])


def test_spatial_pool_mask_zeroes():
    fm = np.ones((1, 4, 4))
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, 0] = True
    v = spatial_pool(fm, (0, 0, 3, 3), (2, 2), mask=mask)
    assert np.array_equal(v, [1, 0, 0, 0])


def test_spatial_pool_rejects_empty_window():
    with pytest.raises(ValueError):
        spatial_pool(np.ones((1, 4, 4)), (2, 0, 1, 3), (2, 2))


def test_segment_feature_length_and_windows():
    rng = np.random.default_rng(0)
    geom = toy_geometry()
    fm = rng.random((3, 4, 4))
    labels = np.repeat(np.repeat(np.arange(4).reshape(2, 2), 8, 0), 8, 1)
    seg = grid_segmentation(labels)
    f = segment_feature(fm, seg, 0, geom, grid=(2, 2))
    assert f.shape == (3 * 2 * 2 * 3,)
    # window (a): segment 0 occupies feature rows/cols 0-1
    fa = spatial_pool(fm, (0, 0, 1, 1), (2, 2))
    assert np.array_equal(f[:12], fa)
    # window (c): whole map with segment 0's activations zeroed
    mask = np.zeros((4, 4), dtype=bool)
    mask[:2, :2] = True
    fc = spatial_pool(fm, (0, 0, 3, 3), (2, 2), mask=~mask)
    assert np.array_equal(f[24:], fc)


def test_feature_dimension_at_paper_width():
    """512-channel conv5_3 with a 2x2 grid gives 3*2*2*512 = 6144 dims."""
    c = 512
    fm = np.zeros((c, 4, 4))
    geom = toy_geometry()
    labels = np.zeros((16, 16), dtype=int)
    labels[:, 8:] = 1
    seg = grid_segmentation(labels)
    feats = all_segment_features(fm, seg, geom)
    assert feats.shape == (2, 6144)


def test_regressor_shapes_and_range():
    reg = SegmentRegressor(24, hidden=10, seed=0)
    scores = reg.forward(np.random.default_rng(1).standard_normal((7, 24)))
    assert scores.shape == (7,)
    assert np.all((scores > 0) & (scores < 1))


def test_regressor_hidden_default_is_300():
    reg = SegmentRegressor(48)
    assert reg.fc1.w.shape == (300, 48)
    assert reg.fc2.w.shape == (300, 300)
    assert reg.out.w.shape == (1, 300)


def test_render_s2_mean_over_scales():
    seg_a = grid_segmentation(np.array([[0, 1]]))
    seg_b = grid_segmentation(np.array([[0, 0]]))
    s2 = render_s2([[0.2, 0.8], [0.6]], [seg_a, seg_b])
    assert np.allclose(s2, [[0.4, 0.7]])


def test_render_s2_validates_counts():
    seg = grid_segmentation(np.array([[0, 1]]))
    with pytest.raises(ValueError):
        render_s2([[0.5]], [seg])


def test_segment_labels_from_gt_majority():
    labels = np.repeat(np.arange(3), 4).reshape(3, 4)
    seg = grid_segmentation(labels)
    gt = np.zeros((3, 4))
    gt[0] = 1.0          # all salient
    gt[1, :2] = 1.0      # exactly half -> not salient (strict majority)
    assert np.array_equal(segment_labels_from_gt(seg, gt), [1.0, 0.0, 0.0])


def test_geometry_from_network_matches_stride():
    net = MsFcn(BackboneConfig(width_scale=1 / 64, top_channels=128,
                               branch_channels=64))
    out = net.forward(np.full((81, 81, 3), 0.5))
    geom = FeatureGeometry.from_network(net, (81, 81), out.conv5_3.shape[1:])
    assert np.allclose(np.diff(geom.centers_y), 8.0)
    assert np.allclose(np.diff(geom.centers_x), 8.0)
