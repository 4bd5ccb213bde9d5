"""sklearn-style facade over the two-stream pipeline so it composes with the
wider ecosystem (get_params/set_params, fit/predict on lists of images)."""

import numpy as np
from sklearn.base import BaseEstimator

from .config import RunConfig
from .model import DeepContrastModel
from .training import TrainConfig, alternate_train, prepare_dataset


def _check_images(X):
    imgs = []
    for i, img in enumerate(X):
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image {i}: expected (H, W, 3), got {arr.shape}")
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError(f"image {i}: values must lie in [0, 1]")
        imgs.append(arr)
    return imgs


def _check_masks(y, imgs, threshold):
    masks = []
    for i, (gt, img) in enumerate(zip(y, imgs)):
        arr = np.asarray(gt, dtype=np.float64)
        if arr.shape != img.shape[:2]:
            raise ValueError(
                f"mask {i}: shape {arr.shape} != image {img.shape[:2]}")
        masks.append((arr > threshold).astype(np.float64))
    return masks


class DeepContrastSaliency(BaseEstimator):
    """Salient-object detector with a fit/predict interface.

    X is a list of (H, W, 3) float images in [0, 1]; y a matching list of
    masks (binary or continuous; continuous masks binarize at gt_threshold).
    predict returns one (H, W) saliency map in [0, 1] per image.
    """

    def __init__(self, width_scale=1.0, seed=0, alternations=8,
                 epochs_per_alternation=1, pretrain_epochs=2,
                 lr_new=0.01, lr_base=0.001, momentum=0.9,
                 weight_decay=0.0005, scales=(200, 150, 50),
                 gt_threshold=0.5, use_crf=False):
        self.width_scale = width_scale
        self.seed = seed
        self.alternations = alternations
        self.epochs_per_alternation = epochs_per_alternation
        self.pretrain_epochs = pretrain_epochs
        self.lr_new = lr_new
        self.lr_base = lr_base
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.scales = scales
        self.gt_threshold = gt_threshold
        self.use_crf = use_crf

    def _run_config(self):
        cfg = RunConfig(seed=self.seed, width_scale=self.width_scale,
                        gt_threshold=self.gt_threshold)
        cfg.superpixels.scales = tuple(self.scales)
        cfg.train = TrainConfig(
            lr_new=self.lr_new, lr_base=self.lr_base,
            momentum=self.momentum, weight_decay=self.weight_decay,
            alternations=self.alternations,
            epochs_per_alternation=self.epochs_per_alternation,
            pretrain_epochs=self.pretrain_epochs, seed=self.seed)
        return cfg

    def fit(self, X, y):
        imgs = _check_images(X)
        masks = _check_masks(y, imgs, self.gt_threshold)
        cfg = self._run_config()
        self.model_ = DeepContrastModel(cfg)
        records = prepare_dataset(imgs, masks, cfg.superpixels.scales,
                                  cfg.superpixels.max_iters,
                                  cfg.superpixels.compactness)
        self.loss_trace_ = alternate_train(
            records, self.model_.net, self.model_.regressor,
            self.model_.fusion, cfg.train, cfg.pool_grid)
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")
        return [self.model_.predict(img, crf=self.use_crf)
                ["s_crf" if self.use_crf else "s"]
                for img in _check_images(X)]

    def score(self, X, y):
        """Maximum F-measure on the given set (higher is better)."""
        from .metrics import max_f_measure
        imgs = _check_images(X)
        masks = _check_masks(y, imgs, self.gt_threshold)
        return max_f_measure(self.predict(imgs), masks)
