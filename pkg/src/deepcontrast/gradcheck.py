"""Central finite-difference checking of analytic gradients.

The checker perturbs every coordinate of every parameter array (and
optionally the input) and compares against the analytic gradient, reporting
the worst-offending coordinate.
"""

import numpy as np


def numeric_grad(f, arr, eps=1e-5):
    """Central differences of scalar-valued f with respect to arr, in place."""
    g = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def max_rel_error(analytic, numeric):
    """max |a - n| / max(1e-8, |a| + |n|), coordinate-wise."""
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(loss_fn, tensors, eps=1e-5):
    """Check analytic gradients of a scalar loss.

    loss_fn() -> (loss, {name: analytic_grad}) recomputed from current tensor
    values; tensors is {name: array} of the arrays being perturbed. Returns
    (worst relative error, report dict name -> (rel err, worst coordinate)).
    """
    _, analytic = loss_fn()
    analytic = {k: np.array(v, copy=True) for k, v in analytic.items()}
    report = {}
    worst = 0.0
    for name, arr in tensors.items():
        num = numeric_grad(lambda: loss_fn()[0], arr, eps)
        a = analytic[name]
        denom = np.maximum(1e-8, np.abs(a) + np.abs(num))
        rel = np.abs(a - num) / denom
        idx = np.unravel_index(np.argmax(rel), rel.shape)
        report[name] = (float(rel.max()), idx)
        worst = max(worst, float(rel.max()))
    return worst, report
