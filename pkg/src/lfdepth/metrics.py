"""Evaluation metrics and post-processing: bad-pixel ratios, scaled MSE,
an edge-aware weighted median filter, and error-map rendering."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DataError
from .lightfield import DisparityMap

BADPIX_THRESHOLDS = (0.01, 0.03, 0.07)


def _as_array(x):
    return x.data if isinstance(x, DisparityMap) else np.asarray(x)


def _masked_error(pred, gt, eval_mask):
    pred = _as_array(pred).astype(np.float64)
    gt = _as_array(gt).astype(np.float64)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    err = pred - gt
    if eval_mask is not None:
        m = np.asarray(eval_mask, dtype=bool)
        if m.shape != pred.shape:
            raise DataError(f"eval mask shape {m.shape} != {pred.shape}")
        err = err[m]
    if err.size == 0:
        raise DataError("empty evaluation mask")
    return err


def badpix(pred, gt, threshold: float = 0.07, eval_mask=None) -> float:
    """Percentage of evaluated pixels with |error| strictly above the
    threshold.

    Computed as 100 * count / total so the value is bit-identical to a
    per-pixel counting loop.
    """
    err = _masked_error(pred, gt, eval_mask)
    return float(100.0 * np.count_nonzero(np.abs(err) > threshold) / err.size)


def mse100(pred, gt, eval_mask=None) -> float:
    """Mean squared error over the evaluated pixels, times 100."""
    err = _masked_error(pred, gt, eval_mask)
    return float(100.0 * np.mean(err * err))


def evaluate(pred, gt, eval_mask=None) -> dict:
    """The standard metric row: BadPix at 0.01/0.03/0.07 plus mse100."""
    out = {}
    for t in BADPIX_THRESHOLDS:
        key = f"badpix{str(t).replace('0.', '0')}"
        out[key] = badpix(pred, gt, t, eval_mask)
    out["mse100"] = mse100(pred, gt, eval_mask)
    return out


def center_crop(arr, shape):
    """Center-crop a 2-d array to ``shape`` (for aligning full-size gt
    with crop-mode predictions); borders must be even."""
    arr = np.asarray(arr)
    dy = arr.shape[0] - shape[0]
    dx = arr.shape[1] - shape[1]
    if dy < 0 or dx < 0 or dy % 2 or dx % 2:
        raise DataError(f"cannot center-crop {arr.shape} to {shape}")
    return arr[dy // 2:arr.shape[0] - dy // 2, dx // 2:arr.shape[1] - dx // 2]


def weighted_median(disparity, guide, radius: int = 5,
                    sigma_guide: float = 0.1, sigma_spatial: float = 3.0,
                    chunk_rows: int = 64):
    """Edge-preserving weighted median of each (2r+1)^2 window.

    Weights are bilateral: exp(-(g(p)-g(c))^2 / 2*sigma_guide^2) times
    exp(-dist^2 / 2*sigma_spatial^2).  The output is the smallest window
    value whose cumulative weight reaches half the total, which breaks
    exact-half ties toward the smaller disparity.  Windows are clipped
    at the border (outside pixels carry zero weight), so every output
    value is an actual input value from its own window.
    """
    d = _as_array(disparity).astype(np.float64)
    g = np.asarray(guide, dtype=np.float64)
    if d.ndim != 2:
        raise DataError(f"disparity must be 2-d, got {d.shape}")
    if g.shape != d.shape:
        raise DataError(f"guide shape {g.shape} != disparity shape {d.shape}")
    if radius < 0:
        raise DataError("radius must be >= 0")
    if radius == 0:
        return DisparityMap(d.copy(), disparity_range=None)
    r = radius
    k = 2 * r + 1
    h, w = d.shape
    dp = np.pad(d, r)  # padded values are never selected: weight 0
    gp = np.pad(g, r)
    valid = np.pad(np.ones((h, w)), r)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    spatial = np.exp(-(yy ** 2 + xx ** 2) /
                     (2.0 * sigma_spatial ** 2)).reshape(-1)
    out = np.empty_like(d)
    for y0 in range(0, h, chunk_rows):
        y1 = min(y0 + chunk_rows, h)
        rows = slice(y0, y1 + 2 * r)
        dwin = sliding_window_view(dp[rows], (k, k)).reshape(y1 - y0, w, -1)
        gwin = sliding_window_view(gp[rows], (k, k)).reshape(y1 - y0, w, -1)
        vwin = sliding_window_view(valid[rows], (k, k)).reshape(y1 - y0, w, -1)
        dg = gwin - g[y0:y1, :, None]
        wgt = np.exp(-dg * dg / (2.0 * sigma_guide ** 2)) * spatial * vwin
        order = np.argsort(dwin, axis=-1, kind="stable")
        wsort = np.take_along_axis(wgt, order, axis=-1)
        cum = np.cumsum(wsort, axis=-1)
        half = 0.5 * cum[..., -1:]
        idx = np.argmax(cum >= half, axis=-1)
        dsort = np.take_along_axis(dwin, order, axis=-1)
        out[y0:y1] = np.take_along_axis(dsort, idx[..., None], axis=-1)[..., 0]
    return DisparityMap(out, disparity_range=None)


def error_map(pred, gt, threshold: float = 0.07):
    """Grayscale error visualization in [0, 1], white = low error.

    Absolute error is scaled by the threshold and inverted, so exact
    pixels render white and errors at or beyond the threshold black.
    """
    pred = _as_array(pred).astype(np.float64)
    gt = _as_array(gt).astype(np.float64)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    err = np.minimum(np.abs(pred - gt) / threshold, 1.0)
    return 1.0 - err
