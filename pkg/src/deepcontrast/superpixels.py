"""Superpixel segmentation: SLIC-style K-means in CIELab space where pixels
are assigned to the nearest seed by geodesic image distance (shortest path on
the 4-connected pixel grid, edge weight = Lab difference plus a small spatial
term). Shortest-path assignment keeps every cluster connected.
"""

import heapq
import json
from dataclasses import dataclass

import numpy as np

# 4-connectivity offsets
_OFFS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def rgb_to_cielab(image):
    """sRGB in [0,1], shape (H, W, 3) -> CIELab via linear RGB and XYZ (D65)."""
    rgb = np.asarray(image, dtype=np.float64)
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    m = np.array([
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ])
    xyz = lin @ m.T
    white = np.array([0.95047, 1.0, 1.08883])
    t = xyz / white
    eps = (6 / 29) ** 3
    f = np.where(t > eps, np.cbrt(t), t / (3 * (6 / 29) ** 2) + 4 / 29)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


@dataclass
class Segmentation:
    labels: np.ndarray        # (H, W) int32 segment ids in [0, num_segments)
    num_segments: int
    bboxes: list              # per segment (y0, x0, y1, x1), inclusive
    adjacency: list           # per segment, set of 4-connected neighbor ids

    @property
    def shape(self):
        return self.labels.shape


def segment_neighbors(seg, sid):
    """Ids of segments sharing a 4-connected pixel border with sid."""
    if not 0 <= sid < seg.num_segments:
        raise ValueError(f"segment id {sid} out of range [0, {seg.num_segments})")
    return set(seg.adjacency[sid])


def _seed_grid(h, w, k):
    """Regular seed grid with roughly k cells, spacing ~ sqrt(HW/k)."""
    s = np.sqrt(h * w / k)
    rows = max(1, round(h / s))
    cols = max(1, round(k / rows))
    ys = (np.arange(rows) + 0.5) * h / rows - 0.5
    xs = (np.arange(cols) + 0.5) * w / cols - 0.5
    seeds = [(float(y), float(x)) for y in ys for x in xs]
    return seeds, s


def _edge_weights(lab, eps_s):
    """Per-direction step costs: Lab distance to the 4-neighbors plus eps_s."""
    dv = np.linalg.norm(lab[1:] - lab[:-1], axis=-1) + eps_s   # (H-1, W)
    dh = np.linalg.norm(lab[:, 1:] - lab[:, :-1], axis=-1) + eps_s  # (H, W-1)
    return dv, dh


def _geodesic_assign(shape, seeds_px, centers, dv, dh):
    """Multi-source Dijkstra over the pixel grid. Every pixel gets the label
    of the seed with the smallest geodesic distance; near-exact ties go to
    the seed whose continuous center is Euclidean-closest, then to the lower
    seed id. Returns (labels, dist)."""
    h, w = shape
    dist = np.full((h, w), np.inf)
    labels = np.full((h, w), -1, dtype=np.int32)
    heap = []
    for k, (y, x) in enumerate(seeds_px):
        if dist[y, x] == np.inf:
            dist[y, x] = 0.0
            labels[y, x] = k
            heapq.heappush(heap, (0.0, k, y, x))

    def closer(k_new, k_old, y, x):
        cy, cx = centers[k_new]
        oy, ox = centers[k_old]
        dn = (y - cy) ** 2 + (x - cx) ** 2
        do = (y - oy) ** 2 + (x - ox) ** 2
        return dn < do or (dn == do and k_new < k_old)

    while heap:
        d, k, y, x = heapq.heappop(heap)
        if d > dist[y, x] or labels[y, x] != k:
            continue
        for dy, dx in _OFFS:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            if dy:
                wgt = dv[min(y, ny), x]
            else:
                wgt = dh[y, min(x, nx)]
            nd = d + wgt
            cur = dist[ny, nx]
            tie = np.isfinite(cur) and abs(nd - cur) <= 1e-12 * (1.0 + cur)
            if (nd < cur and not tie) or (tie and labels[ny, nx] != k
                                          and closer(k, labels[ny, nx], ny, nx)):
                nd = min(nd, cur)
                dist[ny, nx] = nd
                labels[ny, nx] = k
                heapq.heappush(heap, (nd, k, ny, nx))
    return labels, dist


def _connected_components(labels):
    """4-connected components of a label map; returns (comp map, count)."""
    h, w = labels.shape
    comp = np.full((h, w), -1, dtype=np.int32)
    count = 0
    for sy in range(h):
        for sx in range(w):
            if comp[sy, sx] != -1:
                continue
            lab = labels[sy, sx]
            stack = [(sy, sx)]
            comp[sy, sx] = count
            while stack:
                y, x = stack.pop()
                for dy, dx in _OFFS:
                    ny, nx = y + dy, x + dx
                    if (0 <= ny < h and 0 <= nx < w and comp[ny, nx] == -1
                            and labels[ny, nx] == lab):
                        comp[ny, nx] = count
                        stack.append((ny, nx))
            count += 1
    return comp, count


def _absorb_orphans(labels):
    """Keep the largest component of each label; merge every other component
    into its largest adjacent component. Relabels to consecutive ids."""
    h, w = labels.shape
    comp, n = _connected_components(labels)
    sizes = np.bincount(comp.ravel(), minlength=n)
    comp_label = np.full(n, -1, dtype=np.int64)
    flat_c, flat_l = comp.ravel(), labels.ravel()
    comp_label[flat_c] = flat_l
    # largest component per original label wins; the rest are orphans
    keep = {}
    for c in range(n):
        lab = comp_label[c]
        if lab not in keep or sizes[c] > sizes[keep[lab]]:
            keep[lab] = c
    kept = set(keep.values())
    order = sorted(np.argsort(-sizes), key=lambda c: sizes[c], reverse=True)
    for c in order:
        if c in kept:
            continue
        # merge into the adjacent component with the largest size
        mask = comp == c
        ys, xs = np.nonzero(mask)
        best, best_size = None, -1
        for y, x in zip(ys, xs):
            for dy, dx in _OFFS:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and comp[ny, nx] != c:
                    cn = comp[ny, nx]
                    if sizes[cn] > best_size:
                        best, best_size = cn, sizes[cn]
        if best is not None:
            comp[mask] = best
            sizes[best] += sizes[c]
            sizes[c] = 0
    # relabel surviving components consecutively
    uniq, new = np.unique(comp, return_inverse=True)
    return new.reshape(h, w).astype(np.int32), len(uniq)


def _finalize(labels, num):
    h, w = labels.shape
    bboxes = []
    for sid in range(num):
        ys, xs = np.nonzero(labels == sid)
        bboxes.append((int(ys.min()), int(xs.min()), int(ys.max()), int(xs.max())))
    adjacency = [set() for _ in range(num)]
    a, b = labels[1:], labels[:-1]
    for u, v in zip(a[a != b].ravel(), b[a != b].ravel()):
        adjacency[u].add(int(v))
        adjacency[v].add(int(u))
    a, b = labels[:, 1:], labels[:, :-1]
    for u, v in zip(a[a != b].ravel(), b[a != b].ravel()):
        adjacency[u].add(int(v))
        adjacency[v].add(int(u))
    return Segmentation(labels, num, bboxes, adjacency)


def slic_geodesic(lab, k, max_iters=10, compactness=10.0, change_tol=0.01):
    """Segment a CIELab image (H, W, 3) into about k connected superpixels.

    Seeds start on a regular grid with spacing S = sqrt(HW/k); each iteration
    assigns pixels to seeds by geodesic distance and moves each seed to the
    rounded mean position of its members. Stops early when fewer than
    change_tol of pixels change label.
    """
    lab = np.asarray(lab, dtype=np.float64)
    h, w = lab.shape[:2]
    if k < 1 or k > h * w:
        raise ValueError(f"k={k} must be in [1, {h * w}]")
    seeds, s = _seed_grid(h, w, k)
    eps_s = 0.5 * (compactness / s)
    dv, dh = _edge_weights(lab, eps_s)
    seeds_px = [(min(h - 1, max(0, round(y))), min(w - 1, max(0, round(x))))
                for y, x in seeds]
    centers = list(seeds)
    labels = None
    for _ in range(max_iters):
        new_labels, _ = _geodesic_assign((h, w), seeds_px, centers, dv, dh)
        if labels is not None:
            changed = np.count_nonzero(new_labels != labels)
            labels = new_labels
            if changed < change_tol * h * w:
                break
        else:
            labels = new_labels
        # recenter seeds on their members
        nxt, nxt_centers = [], []
        for kk, (sy, sx) in enumerate(seeds_px):
            ys, xs = np.nonzero(labels == kk)
            if ys.size == 0:
                nxt.append((sy, sx))
                nxt_centers.append(centers[kk])
            else:
                cy, cx = float(ys.mean()), float(xs.mean())
                nxt.append((int(round(cy)), int(round(cx))))
                nxt_centers.append((cy, cx))
        seeds_px, centers = nxt, nxt_centers
    labels, num = _absorb_orphans(labels)
    return _finalize(labels, num)


def segment_image(image, k, max_iters=10, compactness=10.0):
    """Convenience wrapper: sRGB image -> Segmentation."""
    return slic_geodesic(rgb_to_cielab(image), k, max_iters, compactness)


def save_segmentation(seg, png_path, sidecar_path):
    """16-bit grayscale label PNG plus a JSON sidecar with count, bboxes and
    adjacency, for debugging and golden tests."""
    from PIL import Image

    arr = seg.labels.astype(np.uint16)
    Image.fromarray(arr).save(png_path)
    doc = {
        "num_segments": seg.num_segments,
        "bboxes": [list(b) for b in seg.bboxes],
        "adjacency": [sorted(a) for a in seg.adjacency],
    }
    with open(sidecar_path, "w") as f:
        json.dump(doc, f, indent=1)
