"""Self-contained synthetic corpus: colored geometric shapes on textured
backgrounds with exact binary masks. Keeps every acceptance test independent
of external datasets."""

import numpy as np


def _textured_background(rng, size):
    """Low-frequency color gradient plus mild pixel noise."""
    h, w = size
    base = rng.uniform(0.1, 0.45, 3)
    gy = rng.uniform(-0.15, 0.15, 3)
    gx = rng.uniform(-0.15, 0.15, 3)
    yy = np.linspace(0, 1, h)[:, None, None]
    xx = np.linspace(0, 1, w)[None, :, None]
    img = base + gy * yy + gx * xx
    img = img + rng.normal(0, 0.02, (h, w, 3))
    return np.clip(img, 0, 1)


def _shape_mask(rng, size):
    h, w = size
    kind = rng.integers(0, 3)
    cy = rng.uniform(0.3, 0.7) * h
    cx = rng.uniform(0.3, 0.7) * w
    r = rng.uniform(0.15, 0.3) * min(h, w)
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == 0:  # disc
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r ** 2
    if kind == 1:  # rectangle
        ry = rng.uniform(0.6, 1.4) * r
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= r)
    # isoceles triangle
    return (yy >= cy - r) & (yy <= cy + r) & \
        (np.abs(xx - cx) <= (yy - (cy - r)) / 2)


def make_image(rng, size=(81, 81)):
    """One (image, mask) pair: a bright contrasting shape on texture."""
    img = _textured_background(rng, size)
    mask = _shape_mask(rng, size)
    fg = rng.uniform(0.55, 1.0, 3)
    fg[rng.integers(0, 3)] = rng.uniform(0.85, 1.0)
    img[mask] = np.clip(fg + rng.normal(0, 0.02, (int(mask.sum()), 3)), 0, 1)
    return img, mask.astype(np.float64)


def make_corpus(n, size=(81, 81), seed=0):
    """n seeded (image, mask) pairs."""
    rng = np.random.default_rng(seed)
    return [make_image(rng, size) for _ in range(n)]
