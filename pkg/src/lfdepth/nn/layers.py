"""Differentiable kernels: valid 2x2 convolution, ReLU, batch
normalization, channel concat, masked MAE loss.

All tensors are (batch, channels, height, width) contiguous float
arrays; single precision by default, double for gradient checks.
Forward methods cache what backward needs when ``train=True``; backward
returns the input gradient and stores parameter gradients on the layer
(``dw``, ``db``, ``dgamma``, ``dbeta``).

The convolution has two forward paths.  The fast path multiplies an
im2col patch matrix with BLAS.  The exact path accumulates the 2x2 taps
in a fixed (channel, dy, dx) order, so the floating-point op sequence
per output element does not depend on the spatial extent or batch size;
this is what makes tiled patch inference bitwise equal to full-image
inference.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..exceptions import DataError


def he_uniform_limit(fan_in: int) -> float:
    return float(np.sqrt(6.0 / fan_in))


class Conv2x2:
    """Valid 2x2 convolution, stride 1, no padding.

    y[b,o,i,j] = sum_{c,p,q} w[o,c,p,q] * x[b,c,i+p,j+q] + bias[o];
    output spatial dims shrink by one.  Weights are He-uniform
    initialized with fan_in = 4 * in_ch.
    """

    def __init__(self, in_ch: int, out_ch: int, rng=None, dtype=np.float32):
        self.in_ch = in_ch
        self.out_ch = out_ch
        limit = he_uniform_limit(4 * in_ch)
        if rng is None:
            rng = np.random.default_rng()
        self.w = rng.uniform(-limit, limit, (out_ch, in_ch, 2, 2)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.skip_input_grad = False  # first layer of a net can skip dx
        self._cols = None
        self._buffers = {}

    def params(self):
        return [("w", self.w, self.dw), ("b", self.b, self.db)]

    def _buffer(self, key, shape, dtype):
        buf = self._buffers.get(key)
        if buf is None or buf.shape != shape or buf.dtype != dtype:
            buf = np.empty(shape, dtype=dtype)
            self._buffers[key] = buf
        return buf

    def _im2col(self, x, key):
        b, c, h, w = x.shape
        ho, wo = h - 1, w - 1
        s0, s1, s2, s3 = x.strides
        win = as_strided(x, (b, c, 2, 2, ho, wo), (s0, s1, s2, s3, s2, s3))
        out = self._buffer(key, (b, c, 2, 2, ho, wo), x.dtype)
        np.copyto(out, win)
        return out.reshape(b, c * 4, ho * wo)

    def forward(self, x, train: bool = False):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise DataError(f"conv input must be (B,{self.in_ch},H,W), got {x.shape}")
        if x.shape[2] < 2 or x.shape[3] < 2:
            raise DataError(f"conv needs spatial dims >= 2, got {x.shape[2:]}")
        b, _, h, w = x.shape
        cols = self._im2col(x, "cols")
        y = np.matmul(self.w.reshape(self.out_ch, -1), cols)
        y += self.b[:, None]
        if train:
            self._cols = cols
            self._x_shape = x.shape
        return y.reshape(b, self.out_ch, h - 1, w - 1)

    def forward_exact(self, x):
        """Deterministic path with shape-independent per-element op order.

        Each output element accumulates bias + taps in fixed (channel,
        tap-row, tap-col) order regardless of batch or spatial shape, so
        tiled and whole-image runs agree bitwise.  Output channels are
        vectorized; that broadcasts the same elementwise multiply-add
        sequence and leaves the per-element float op order unchanged.
        """
        if x.shape[2] < 2 or x.shape[3] < 2:
            raise DataError(f"conv needs spatial dims >= 2, got {x.shape[2:]}")
        b, c, h, w = x.shape
        ho, wo = h - 1, w - 1
        y = np.empty((b, self.out_ch, ho, wo), dtype=x.dtype)
        y[:] = self.b.reshape(1, -1, 1, 1)
        tmp = np.empty((b, self.out_ch, ho, wo), dtype=x.dtype)
        for ci in range(c):
            for p in range(2):
                for q in range(2):
                    np.multiply(x[:, None, ci, p:p + ho, q:q + wo],
                                self.w[None, :, ci, p, q, None, None], out=tmp)
                    y += tmp
        return y

    def backward(self, dy):
        if self._cols is None:
            raise DataError("conv backward before forward(train=True)")
        b, _, ho, wo = dy.shape
        s = ho * wo
        cols = self._cols
        dyf = np.ascontiguousarray(dy).reshape(b, self.out_ch, s)
        ksz = self.in_ch * 4
        np.sum(np.matmul(dyf, cols.reshape(b, ksz, s).transpose(0, 2, 1)),
               axis=0, out=self.dw.reshape(self.out_ch, ksz))
        np.sum(dyf, axis=(0, 2), out=self.db)
        if self.skip_input_grad:
            return None
        # dx = full correlation of dy with the flipped kernel
        h, w = ho + 1, wo + 1
        pad = self._buffer("pad", (b, self.out_ch, ho + 2, wo + 2), dy.dtype)
        pad[:, :, 0, :] = 0
        pad[:, :, -1, :] = 0
        pad[:, :, :, 0] = 0
        pad[:, :, :, -1] = 0
        pad[:, :, 1:-1, 1:-1] = dy
        pcols = self._im2col(pad, "pcols")
        wf = np.ascontiguousarray(
            self.w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)).reshape(self.in_ch, -1)
        dx = np.matmul(wf, pcols)
        return dx.reshape(b, self.in_ch, h, w)


class ReLU:
    def __init__(self, inplace: bool = False):
        # inplace is only safe when the input buffer has no other consumer
        self.inplace = inplace

    def forward(self, x, train: bool = False):
        if train:
            self._mask = x > 0
        if self.inplace:
            return np.maximum(x, 0, out=x)
        return np.maximum(x, 0)

    forward_exact = forward

    def backward(self, dy):
        if self.inplace:
            return np.multiply(dy, self._mask, out=dy)
        return np.where(self._mask, dy, 0)

    def params(self):
        return []


class BatchNorm:
    """Per-channel batch normalization over (batch, height, width).

    Train mode normalizes by batch statistics (biased variance) and
    updates running estimates with momentum 0.9; infer mode applies the
    running estimates, which makes the op purely elementwise and safe
    for the bitwise patch/full equivalence.
    """

    def __init__(self, ch: int, momentum: float = 0.9, eps: float = 1e-5,
                 dtype=np.float32):
        self.ch = ch
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(ch, dtype=dtype)
        self.beta = np.zeros(ch, dtype=dtype)
        self.running_mean = np.zeros(ch, dtype=dtype)
        self.running_var = np.ones(ch, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)

    def params(self):
        return [("gamma", self.gamma, self.dgamma), ("beta", self.beta, self.dbeta)]

    def forward(self, x, train: bool = False):
        if x.shape[1] != self.ch:
            raise DataError(f"batchnorm expects {self.ch} channels, got {x.shape[1]}")
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))  # biased
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[:, None, None]) * inv[:, None, None]
            self._xhat = xhat
            self._inv = inv
            m = self.momentum
            self.running_mean[:] = m * self.running_mean + (1 - m) * mean
            self.running_var[:] = m * self.running_var + (1 - m) * var
            return (self.gamma[:, None, None] * xhat + self.beta[:, None, None]).astype(
                x.dtype, copy=False)
        scale = self.gamma / np.sqrt(self.running_var + self.eps)
        shift = self.beta - self.running_mean * scale
        return x * scale[:, None, None] + shift[:, None, None]

    forward_exact = forward

    def backward(self, dy):
        xhat = self._xhat
        inv = self._inv
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        np.sum(dy * xhat, axis=(0, 2, 3), out=self.dgamma)
        np.sum(dy, axis=(0, 2, 3), out=self.dbeta)
        g = self.gamma[:, None, None]
        # standard reduction of the normalization graph
        dxhat = dy * g
        t1 = dxhat.sum(axis=(0, 2, 3))[:, None, None]
        t2 = (dxhat * xhat).sum(axis=(0, 2, 3))[:, None, None]
        return inv[:, None, None] / m * (m * dxhat - t1 - xhat * t2)

    def set_stats(self, mean, var):
        self.running_mean[:] = mean
        self.running_var[:] = var


def concat_channels(xs):
    """Concatenate along the channel axis, preserving input order."""
    if not xs:
        raise DataError("concat of an empty list")
    ref = xs[0].shape
    for x in xs[1:]:
        if x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
            raise DataError(f"concat shape mismatch: {ref} vs {x.shape}")
    return np.concatenate(xs, axis=1)


def split_channels(dy, widths):
    """Inverse of concat_channels for the backward pass."""
    out = []
    at = 0
    for w in widths:
        out.append(dy[:, at:at + w])
        at += w
    return out


def mae_loss(pred, target, valid_mask=None):
    """Mean absolute error over valid entries; returns (loss, grad).

    The subgradient at zero is defined as 0; invalid entries get zero
    gradient and do not count toward the mean.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DataError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    if valid_mask is not None:
        valid = np.broadcast_to(np.asarray(valid_mask, dtype=bool), pred.shape)
        count = int(valid.sum())
        if count == 0:
            raise DataError("mae_loss: empty valid mask")
        loss = float(np.abs(diff[valid]).sum() / count)
        grad = np.where(valid, np.sign(diff), 0).astype(pred.dtype) / count
    else:
        count = diff.size
        if count == 0:
            raise DataError("mae_loss: empty input")
        loss = float(np.abs(diff).mean())
        grad = np.sign(diff).astype(pred.dtype) / count
    return loss, grad
