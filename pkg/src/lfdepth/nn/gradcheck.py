"""Finite-difference gradient verification for every kernel.

Checks run in double precision with central differences.  A random
linear readout r reduces the layer output to a scalar, so the analytic
gradient of sum(r * y) comes from backward(r) and each checked
coordinate needs two forward evaluations.  Coordinates too close to a
non-differentiable kink (ReLU threshold, |0| of the MAE) are nudged
away before checking.

Error metric per configuration: max |analytic - numeric| over the
probed coordinates divided by max(1, max |analytic|, max |numeric|).
"""

import time

import numpy as np

from .layers import BatchNorm, Conv2x2, ReLU, concat_channels, mae_loss, split_channels

STEP = 1e-5
LINEAR_TOL = 1e-6
NONLINEAR_TOL = 1e-4


def _rel_err(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(1.0, float(np.abs(analytic).max(initial=0.0)),
                float(np.abs(numeric).max(initial=0.0)))
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def _probe(rng, arr, k=6):
    """Indices of up to k random coordinates of arr."""
    flat = arr.size
    take = min(k, flat)
    return rng.choice(flat, size=take, replace=False)


def _fd_grad(f, arr, idx, step=STEP):
    """Central differences of scalar f with respect to arr at flat indices."""
    out = np.empty(len(idx))
    flat = arr.reshape(-1)
    for j, i in enumerate(idx):
        keep = flat[i]
        flat[i] = keep + step
        hi = f()
        flat[i] = keep - step
        lo = f()
        flat[i] = keep
        out[j] = (hi - lo) / (2 * step)
    return out


def _check_op(rng, forward, backward, tensors, k=6):
    """Generic check: forward() -> y, backward(r) -> grads matching tensors.

    Returns the worst relative error over all tensors."""
    y = forward()
    r = rng.standard_normal(y.shape)
    loss = lambda: float(np.sum(forward() * r))
    grads = backward(r)
    worst = 0.0
    for arr, grad in zip(tensors, grads):
        idx = _probe(rng, arr, k)
        numeric = _fd_grad(loss, arr, idx)
        analytic = grad.reshape(-1)[idx]
        worst = max(worst, _rel_err(analytic, numeric))
    return worst


def check_conv(rng):
    b = int(rng.integers(1, 4))
    cin = int(rng.integers(1, 5))
    cout = int(rng.integers(1, 5))
    h = int(rng.integers(2, 7))
    w = int(rng.integers(2, 7))
    layer = Conv2x2(cin, cout, rng=rng, dtype=np.float64)
    x = rng.standard_normal((b, cin, h, w))

    def forward():
        return layer.forward(x, train=True)

    def backward(r):
        dx = layer.backward(r)
        return [dx, layer.dw, layer.db]

    return _check_op(rng, forward, backward, [x, layer.w, layer.b])


def check_relu(rng):
    shape = (int(rng.integers(1, 4)), int(rng.integers(1, 5)),
             int(rng.integers(1, 6)), int(rng.integers(1, 6)))
    layer = ReLU()
    x = rng.standard_normal(shape)
    # keep every coordinate away from the kink at 0
    x = np.where(np.abs(x) < 10 * STEP, 0.5, x)

    def forward():
        return layer.forward(x, train=True)

    def backward(r):
        return [layer.backward(r)]

    return _check_op(rng, forward, backward, [x])


def check_bn(rng):
    b = int(rng.integers(2, 5))
    c = int(rng.integers(1, 5))
    h = int(rng.integers(2, 6))
    w = int(rng.integers(2, 6))
    layer = BatchNorm(c, dtype=np.float64)
    layer.gamma[:] = rng.uniform(0.5, 1.5, c)
    layer.beta[:] = rng.standard_normal(c)
    x = rng.standard_normal((b, c, h, w))

    def forward():
        return layer.forward(x, train=True)

    def backward(r):
        dx = layer.backward(r)
        return [dx, layer.dgamma, layer.dbeta]

    return _check_op(rng, forward, backward, [x, layer.gamma, layer.beta])


def check_concat(rng):
    b = int(rng.integers(1, 4))
    h = int(rng.integers(1, 5))
    w = int(rng.integers(1, 5))
    widths = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(2, 5)))]
    xs = [rng.standard_normal((b, c, h, w)) for c in widths]

    def forward():
        return concat_channels(xs)

    def backward(r):
        return split_channels(r, widths)

    return _check_op(rng, forward, backward, xs)


def check_mae(rng):
    shape = (int(rng.integers(1, 5)), 1, int(rng.integers(1, 5)), 1)
    pred = rng.standard_normal(shape)
    target = rng.standard_normal(shape)
    # keep away from the |.| kink
    close = np.abs(pred - target) < 10 * STEP
    pred = np.where(close, target + 0.5, pred)
    mask = rng.random(shape) < 0.8
    if not mask.any():
        mask[(0,) * 4] = True

    def forward():
        return np.array([mae_loss(pred, target, mask)[0]])

    def backward(r):
        _, g = mae_loss(pred, target, mask)
        return [g * r[0]]

    return _check_op(rng, forward, backward, [pred])


# (check, is_linear, configurations) - 100 configurations total
SUITE = (
    ("conv2x2", check_conv, True, 24),
    ("relu", check_relu, True, 19),
    ("concat", check_concat, True, 19),
    ("mae", check_mae, True, 19),
    ("batchnorm", check_bn, False, 19),
)


def run_suite(seed: int = 0):
    """Run the full gradient suite; returns a report dict.

    report = {"ok": bool, "max_rel_err": float, "elapsed_s": float,
              "layers": {name: {"max_rel_err", "tol", "configs"}}}
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    layers = {}
    ok = True
    overall = 0.0
    for name, fn, linear, count in SUITE:
        tol = LINEAR_TOL if linear else NONLINEAR_TOL
        worst = 0.0
        for _ in range(count):
            worst = max(worst, fn(rng))
        layers[name] = {"max_rel_err": worst, "tol": tol, "configs": count}
        overall = max(overall, worst)
        ok = ok and worst < tol
    return {
        "ok": ok,
        "max_rel_err": overall,
        "elapsed_s": time.perf_counter() - t0,
        "configs": sum(c for _, _, _, c in SUITE),
        "layers": layers,
    }
