"""Scikit-learn style wrapper around the disparity network.

Samples are direction-stack patches shaped (n, 4, views, patch, patch)
with scalar disparity targets, so the estimator slots into sklearn
model-selection tooling; whole light fields go through ``infer``.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError
from .lightfield import LightField
from .model import (NetConfig, build, infer_ensemble, infer_full, load_model,
                    save_model, train_model)


class DisparityRegressor(RegressorMixin, BaseEstimator):
    """Patch-to-disparity regressor with the multi-stream architecture.

    Parameters mirror the network/training configuration; ``fit`` expects
    X of shape (n_samples, 4, views, patch, patch) in stack order
    H, V, LD, RD and y of shape (n_samples,).
    """

    def __init__(self, n_streams: int = 4, stream_width: int = 16,
                 views: int = 7, iters: int = 1000, batch_size: int = 16,
                 lr: float = 1e-5, seed: int = 0,
                 disparity_range: float = 4.0):
        self.n_streams = n_streams
        self.stream_width = stream_width
        self.views = views
        self.iters = iters
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.disparity_range = disparity_range

    def _config(self) -> NetConfig:
        return NetConfig(n_streams=self.n_streams,
                         views_per_stack=self.views,
                         stream_width=self.stream_width,
                         merge_width=self.n_streams * self.stream_width,
                         disparity_range=self.disparity_range)

    def _check_X(self, X, config):
        X = check_array(X, allow_nd=True, dtype=np.float32)
        if X.ndim != 5 or X.shape[1] != 4 or X.shape[2] != config.views_per_stack:
            raise DataError(
                f"X must be (n, 4, {config.views_per_stack}, p, p), got {X.shape}")
        return X

    def fit(self, X, y):
        config = self._config()
        X = self._check_X(X, config)
        y = check_array(y, ensure_2d=False, dtype=np.float32)
        if y.ndim != 1 or len(y) != len(X):
            raise DataError(f"y must be (n,) matching X, got {y.shape}")
        self.model_ = build(config, seed=self.seed)
        self.loss_curve_ = train_model(
            self.model_, X, y, iters=self.iters, batch_size=self.batch_size,
            lr=self.lr, seed=self.seed)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = self._check_X(X, self.model_.config)
        out = []
        for i in range(0, len(X), 256):
            pred = self.model_.forward(X[i:i + 256])
            out.append(pred.reshape(len(pred), -1).mean(axis=1))
        return np.concatenate(out).astype(np.float64)

    def infer(self, lf: LightField, pad: str = "crop", ensemble: bool = False,
              deterministic: bool = False):
        """Whole-image disparity for a light field; returns a DisparityMap."""
        check_is_fitted(self, "model_")
        if ensemble:
            return infer_ensemble(self.model_, lf,
                                  deterministic=deterministic).disparity
        return infer_full(self.model_, lf, pad=pad,
                          deterministic=deterministic).disparity

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_model(self.model_, path)

    @classmethod
    def from_file(cls, path) -> "DisparityRegressor":
        net = load_model(path)
        cfg = net.config
        est = cls(n_streams=cfg.n_streams, stream_width=cfg.stream_width,
                  views=cfg.views_per_stack,
                  disparity_range=cfg.disparity_range)
        est.model_ = net
        est.loss_curve_ = []
        return est
