"""Dense layer engine: atrous convolution via sparse im2col sampling, max
pooling with argmax routing, affine layers, sigmoid/relu, and align-corners
bilinear upsampling. Everything is float64 and every layer has a hand-written
backward pass.

Layout convention: 4-D activations are (batch, channels, height, width).
Convolution is cross-correlation (no kernel flip), used consistently in both
directions.
"""

from dataclasses import dataclass

import numpy as np

# Global forward-convolution counter; lets tests prove that segment feature
# extraction reuses one backbone pass instead of re-convolving per segment.
CONV_CALLS = 0


def reset_conv_counter():
    global CONV_CALLS
    CONV_CALLS = 0


def conv_calls():
    return CONV_CALLS


class ShapeError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


def _require_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one convolution. dilation d samples input taps d apart,
    equivalent to inserting d-1 zeros between kernel taps."""

    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    pad: tuple = (0, 0)
    dilation: tuple = (1, 1)

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("channel counts must be >= 1")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.dilation) < 1:
            raise ShapeError("kernel, stride, dilation must all be >= 1")
        if min(self.pad) < 0:
            raise ShapeError("pad must be >= 0")

    @property
    def effective_kernel(self):
        kh, kw = self.kernel
        dh, dw = self.dilation
        return ((kh - 1) * dh + 1, (kw - 1) * dw + 1)

    def out_dims(self, h, w):
        keh, kew = self.effective_kernel
        oh = (h + 2 * self.pad[0] - keh) // self.stride[0] + 1
        ow = (w + 2 * self.pad[1] - kew) // self.stride[1] + 1
        if oh < 1 or ow < 1:
            raise ShapeError(
                f"input {h}x{w} too small for effective kernel {keh}x{kew} "
                f"with pad {self.pad}"
            )
        return oh, ow


def _im2col_indices(spec, h, w):
    kh, kw = spec.kernel
    dh, dw = spec.dilation
    sh, sw = spec.stride
    oh, ow = spec.out_dims(h, w)
    # row index of tap ki at output row r, within the padded input
    i = (np.arange(kh) * dh)[:, None] + (np.arange(oh) * sh)[None, :]
    j = (np.arange(kw) * dw)[:, None] + (np.arange(ow) * sw)[None, :]
    return i, j, oh, ow


def im2col_atrous(x, spec):
    """Unfold x (n, c, h, w) into patch columns of shape
    (n, c*kh*kw, out_h*out_w). Column j is the dilated receptive-field window
    of output position j, channel-major then kernel row-major."""
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"input has {c} channels, spec expects {spec.in_channels}")
    ph, pw = spec.pad
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    i, j, oh, ow = _im2col_indices(spec, h, w)
    # (n, c, kh, oh, kw, ow) -> (n, c, kh, kw, oh, ow)
    cols = xp[:, :, i[:, None, :, None], j[None, :, None, :]]
    return cols.reshape(n, c * spec.kernel[0] * spec.kernel[1], oh * ow)


def col2im_atrous(dcols, spec, h, w):
    """Adjoint of im2col_atrous: scatter-add patch-column gradients back onto
    an (n, c, h, w) input gradient."""
    n = dcols.shape[0]
    c = spec.in_channels
    kh, kw = spec.kernel
    ph, pw = spec.pad
    i, j, oh, ow = _im2col_indices(spec, h, w)
    dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
    d = dcols.reshape(n, c, kh, kw, oh, ow)
    np.add.at(dxp, (slice(None), slice(None), i[:, None, :, None], j[None, :, None, :]), d)
    return dxp[:, :, ph:ph + h, pw:pw + w]


def conv2d_forward(x, weights, bias, spec):
    """Dilated cross-correlation of x with weights (out_c, in_c, kh, kw) plus
    per-channel bias. Returns (output, cols); cols is kept for backward."""
    global CONV_CALLS
    _require_finite("conv input", x)
    n, c, h, w = x.shape
    oh, ow = spec.out_dims(h, w)
    cols = im2col_atrous(x, spec)
    wmat = weights.reshape(spec.out_channels, -1)
    out = wmat @ cols + bias[:, None]
    CONV_CALLS += 1
    return out.reshape(n, spec.out_channels, oh, ow), cols


def conv2d_backward(dout, x_shape, cols, weights, spec):
    """Gradients of the convolution: returns (dx, dweights, dbias)."""
    n, c, h, w = x_shape
    oh, ow = spec.out_dims(h, w)
    if dout.shape != (n, spec.out_channels, oh, ow):
        raise ShapeError(
            f"output grad shape {dout.shape} != {(n, spec.out_channels, oh, ow)}"
        )
    dmat = dout.reshape(n, spec.out_channels, oh * ow)
    wmat = weights.reshape(spec.out_channels, -1)
    dw = np.einsum("nol,nkl->ok", dmat, cols).reshape(weights.shape)
    db = dmat.sum(axis=(0, 2))
    dcols = np.einsum("ok,nol->nkl", wmat, dmat)
    dx = col2im_atrous(dcols, spec, h, w)
    return dx, dw, db


def zero_inserted_kernel(weights, dilation):
    """Explicitly expand a kernel by inserting dilation-1 zeros between taps;
    test oracle for the sparse-sampling path."""
    oc, ic, kh, kw = weights.shape
    dh, dw = dilation
    keh, kew = (kh - 1) * dh + 1, (kw - 1) * dw + 1
    big = np.zeros((oc, ic, keh, kew))
    big[:, :, ::dh, ::dw] = weights
    return big


class Layer:
    """Base class: layers cache what backward needs and accumulate parameter
    gradients in-place."""

    lr_group = "base"

    def params(self):
        return {}

    def grads(self):
        return {}

    def zero_grad(self):
        for g in self.grads().values():
            g[...] = 0.0


class Conv(Layer):
    def __init__(self, spec, rng=None, lr_group="base"):
        self.spec = spec
        kh, kw = spec.kernel
        fan_in = spec.in_channels * kh * kw
        bound = np.sqrt(6.0 / fan_in)
        if rng is None:
            self.w = np.zeros((spec.out_channels, spec.in_channels, kh, kw))
        else:
            self.w = rng.uniform(-bound, bound, (spec.out_channels, spec.in_channels, kh, kw))
        self.b = np.zeros(spec.out_channels)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.lr_group = lr_group
        self._cache = None

    def forward(self, x):
        out, cols = conv2d_forward(x, self.w, self.b, self.spec)
        self._cache = (x.shape, cols)
        return out

    def backward(self, dout):
        x_shape, cols = self._cache
        dx, dw, db = conv2d_backward(dout, x_shape, cols, self.w, self.spec)
        self.dw += dw
        self.db += db
        return dx

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}


class MaxPool(Layer):
    """Max pooling with recorded argmax for backward routing. Ties break at
    the first position in row-major scan order. ceil_mode pads the bottom and
    right with -inf so no input column is dropped."""

    def __init__(self, kernel, stride, pad=(0, 0), ceil_mode=False):
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.ceil_mode = ceil_mode
        self._cache = None

    def out_dims(self, h, w):
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.pad
        if self.ceil_mode:
            oh = -(-(h + 2 * ph - kh) // sh) + 1
            ow = -(-(w + 2 * pw - kw) // sw) + 1
        else:
            oh = (h + 2 * ph - kh) // sh + 1
            ow = (w + 2 * pw - kw) // sw + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"input {h}x{w} too small for pool window {self.kernel}")
        return oh, ow

    def forward(self, x):
        n, c, h, w = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.pad
        oh, ow = self.out_dims(h, w)
        # extra bottom/right padding so every window is fully in bounds
        hp = (oh - 1) * sh + kh
        wp = (ow - 1) * sw + kw
        xp = np.full((n, c, hp, wp), -np.inf)
        xp[:, :, ph:ph + h, pw:pw + w] = x
        i = np.arange(kh)[:, None] + (np.arange(oh) * sh)[None, :]
        j = np.arange(kw)[:, None] + (np.arange(ow) * sw)[None, :]
        win = xp[:, :, i[:, None, :, None], j[None, :, None, :]]
        win = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c, oh, ow, kh * kw)
        arg = win.argmax(axis=-1)
        out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, (hp, wp), arg)
        return out, arg

    def backward(self, dout):
        (n, c, h, w), (hp, wp), arg = self._cache
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.pad
        oh, ow = dout.shape[2:]
        dxp = np.zeros((n, c, hp, wp))
        ki, kj = np.divmod(arg, kw)
        oi = np.arange(oh)[None, None, :, None] * sh
        oj = np.arange(ow)[None, None, None, :] * sw
        rows = (oi + ki).ravel()
        cols = (oj + kj).ravel()
        nn, cc = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
        nn = np.repeat(nn.ravel(), oh * ow)
        cc = np.repeat(cc.ravel(), oh * ow)
        np.add.at(dxp, (nn, cc, rows, cols), dout.ravel())
        return dxp[:, :, ph:ph + h, pw:pw + w]


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Sigmoid(Layer):
    def forward(self, x):
        self._out = sigmoid(x)
        return self._out

    def backward(self, dout):
        return dout * self._out * (1.0 - self._out)


def sigmoid(x):
    """Overflow-safe logistic function."""
    out = np.empty_like(np.asarray(x, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Affine(Layer):
    """Fully connected layer: out = x @ w.T + b with x of shape (n, in_dim)."""

    def __init__(self, in_dim, out_dim, rng=None, lr_group="base"):
        bound = np.sqrt(6.0 / in_dim)
        if rng is None:
            self.w = np.zeros((out_dim, in_dim))
        else:
            self.w = rng.uniform(-bound, bound, (out_dim, in_dim))
        self.b = np.zeros(out_dim)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.lr_group = lr_group

    def forward(self, x):
        if x.shape[1] != self.w.shape[1]:
            raise ShapeError(f"input dim {x.shape[1]} != weight dim {self.w.shape[1]}")
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, dout):
        self.dw += dout.T @ self._x
        self.db += dout.sum(axis=0)
        return dout @ self.w

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}


def _bilinear_weights(in_len, out_len):
    """Align-corners source coordinates: src = dst * (in-1) / (out-1)."""
    if out_len == 1 or in_len == 1:
        lo = np.zeros(out_len, dtype=int)
        return lo, np.minimum(lo, in_len - 1), np.zeros(out_len)
    src = np.arange(out_len) * (in_len - 1) / (out_len - 1)
    lo = np.minimum(src.astype(int), in_len - 2)
    t = src - lo
    return lo, lo + 1, t


def bilinear_upsample(x, target_h, target_w):
    """Align-corners bilinear interpolation of (n, c, h, w) to the target
    size. Constant maps stay constant; corners are preserved exactly."""
    n, c, h, w = x.shape
    if target_h < h or target_w < w:
        raise ShapeError("bilinear_upsample target must not shrink the input")
    ilo, ihi, ti = _bilinear_weights(h, target_h)
    jlo, jhi, tj = _bilinear_weights(w, target_w)
    ti = ti[:, None]
    tj = tj[None, :]
    tl = x[:, :, ilo[:, None], jlo[None, :]]
    tr = x[:, :, ilo[:, None], jhi[None, :]]
    bl = x[:, :, ihi[:, None], jlo[None, :]]
    br = x[:, :, ihi[:, None], jhi[None, :]]
    top = tl * (1 - tj) + tr * tj
    bot = bl * (1 - tj) + br * tj
    return top * (1 - ti) + bot * ti


def bilinear_upsample_backward(dout, in_h, in_w):
    """Adjoint of bilinear_upsample for an (n, c, th, tw) output gradient."""
    n, c, th, tw = dout.shape
    ilo, ihi, ti = _bilinear_weights(in_h, th)
    jlo, jhi, tj = _bilinear_weights(in_w, tw)
    dx = np.zeros((n, c, in_h, in_w))
    wi = np.stack([1 - ti, ti])  # (2, th)
    wj = np.stack([1 - tj, tj])  # (2, tw)
    rows = np.stack([ilo, ihi])
    cols = np.stack([jlo, jhi])
    for a in range(2):
        for b in range(2):
            wgt = wi[a][:, None] * wj[b][None, :]
            np.add.at(
                dx,
                (slice(None), slice(None), rows[a][:, None], cols[b][None, :]),
                dout * wgt,
            )
    return dx
