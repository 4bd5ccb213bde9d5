"""Saliency evaluation protocol: PR curves over 256 thresholds, F-measure
with beta^2 = 0.3, maximum F-measure from the dataset-averaged curve,
adaptive-threshold precision/recall/F (threshold = twice the map mean), and
mean absolute error.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

THRESHOLDS = np.arange(256) / 256.0
BETA2 = 0.3
EPS = 1e-8


class EmptyGroundTruth(ValueError):
    """Ground truth with no salient pixels: recall is undefined."""


def pr_at_threshold(saliency, gt, t):
    """Precision and recall of (saliency > t) against a binary ground truth.
    An empty prediction scores (0, 0) by convention."""
    if saliency.shape != gt.shape:
        raise ValueError(f"map {saliency.shape} vs gt {gt.shape}")
    gt = np.asarray(gt).astype(bool)
    if not gt.any():
        raise EmptyGroundTruth("ground truth has no salient pixels")
    pred = saliency > t
    tp = np.count_nonzero(pred & gt)
    fp = np.count_nonzero(pred & ~gt)
    fn = np.count_nonzero(~pred & gt)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn)
    return precision, recall


def f_measure(precision, recall, beta2=BETA2):
    """(1 + b2) * p * r / (b2 * p + r), zero when the denominator vanishes."""
    denom = beta2 * precision + recall
    if denom == 0:
        return 0.0
    return (1 + beta2) * precision * recall / denom


@dataclass
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    def max_f(self, beta2=BETA2):
        return max(f_measure(p, r, beta2)
                   for p, r in zip(self.precision, self.recall))


def _valid_pairs(maps, gts):
    pairs = []
    for m, g in zip(maps, gts):
        if not np.asarray(g).astype(bool).any():
            warnings.warn("excluding image with empty ground truth")
            continue
        pairs.append((m, g))
    if not pairs:
        raise ValueError("no images with non-empty ground truth")
    return pairs


def pr_curve(maps, gts):
    """Dataset PR curve: precision/recall averaged over images at each of the
    256 thresholds."""
    pairs = _valid_pairs(maps, gts)
    ps = np.zeros(len(THRESHOLDS))
    rs = np.zeros(len(THRESHOLDS))
    for m, g in pairs:
        for i, t in enumerate(THRESHOLDS):
            p, r = pr_at_threshold(m, g, t)
            ps[i] += p
            rs[i] += r
    return PRCurve(THRESHOLDS.copy(), ps / len(pairs), rs / len(pairs))


def max_f_measure(maps, gts):
    """Maximum F over the dataset-averaged PR curve."""
    return pr_curve(maps, gts).max_f()


def adaptive_prf(saliency, gt):
    """Metrics at the adaptive threshold min(2 * mean(map), 1 - eps)."""
    t = min(2.0 * float(np.mean(saliency)), 1.0 - EPS)
    p, r = pr_at_threshold(saliency, gt, t)
    return p, r, f_measure(p, r)


def mae(saliency, gt):
    """Mean absolute per-pixel difference."""
    if saliency.shape != np.shape(gt):
        raise ValueError(f"map {saliency.shape} vs gt {np.shape(gt)}")
    return float(np.mean(np.abs(saliency - np.asarray(gt, dtype=np.float64))))


@dataclass
class EvalReport:
    max_f: float
    adaptive_precision: float
    adaptive_recall: float
    adaptive_f: float
    mae: float
    curve: PRCurve
    n_images: int
    n_excluded: int


def evaluate_dataset(maps, gts):
    """Full protocol: curve-level maxF, per-image-averaged adaptive metrics
    and MAE. Images with empty ground truth are excluded with a warning."""
    pairs = _valid_pairs(maps, gts)
    curve = pr_curve([m for m, _ in pairs], [g for _, g in pairs])
    ap, ar, af, maes = [], [], [], []
    for m, g in pairs:
        p, r, f = adaptive_prf(m, g)
        ap.append(p)
        ar.append(r)
        af.append(f)
        maes.append(mae(m, g))
    return EvalReport(
        max_f=curve.max_f(),
        adaptive_precision=float(np.mean(ap)),
        adaptive_recall=float(np.mean(ar)),
        adaptive_f=float(np.mean(af)),
        mae=float(np.mean(maes)),
        curve=curve,
        n_images=len(pairs),
        n_excluded=len(list(maps)) - len(pairs),
    )


def write_report_csv(report, path):
    """One row per threshold (t, P, R, F) plus a trailing summary row."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "precision", "recall", "f_measure"])
        for t, p, r in zip(report.curve.thresholds, report.curve.precision,
                           report.curve.recall):
            w.writerow([f"{t:.6f}", f"{p:.6f}", f"{r:.6f}",
                        f"{f_measure(p, r):.6f}"])
        w.writerow(["summary",
                    f"maxF={report.max_f:.6f}",
                    f"adaptiveF={report.adaptive_f:.6f}",
                    f"MAE={report.mae:.6f}"])
