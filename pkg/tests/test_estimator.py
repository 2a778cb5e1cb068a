import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lfdepth import DataError, DisparityRegressor
from lfdepth.lightfield import DisparityMap


@pytest.fixture(scope="module")
def tiny_fit():
    rng = np.random.default_rng(3)
    X = rng.random((24, 4, 7, 23, 23), dtype=np.float32)
    y = rng.uniform(-1, 1, 24).astype(np.float32)
    est = DisparityRegressor(stream_width=4, iters=8, seed=1)
    return est.fit(X, y), X, y


class TestSklearnContract:
    def test_get_set_params_roundtrip(self):
        est = DisparityRegressor(stream_width=8, iters=50)
        p = est.get_params()
        assert p["stream_width"] == 8 and p["iters"] == 50
        est2 = DisparityRegressor().set_params(**p)
        assert est2.get_params() == p

    def test_clone(self):
        est = DisparityRegressor(n_streams=2, lr=3e-5)
        c = clone(est)
        assert c.get_params() == est.get_params()

    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            DisparityRegressor().predict(np.zeros((1, 4, 7, 23, 23)))

    def test_fit_returns_self_and_exposes_state(self, tiny_fit):
        est, X, y = tiny_fit
        assert isinstance(est, DisparityRegressor)
        assert est.model_.config.stream_width == 4
        assert len(est.loss_curve_) >= 1


class TestFitPredict:
    def test_predict_shape_and_dtype(self, tiny_fit):
        est, X, y = tiny_fit
        pred = est.predict(X[:5])
        assert pred.shape == (5,)
        assert pred.dtype == np.float64

    def test_predict_deterministic(self, tiny_fit):
        est, X, y = tiny_fit
        assert np.array_equal(est.predict(X[:4]), est.predict(X[:4]))

    def test_same_seed_same_fit(self):
        rng = np.random.default_rng(0)
        X = rng.random((16, 4, 7, 23, 23), dtype=np.float32)
        y = rng.uniform(-1, 1, 16).astype(np.float32)
        a = DisparityRegressor(stream_width=4, iters=5, seed=2).fit(X, y)
        b = DisparityRegressor(stream_width=4, iters=5, seed=2).fit(X, y)
        assert np.array_equal(a.predict(X), b.predict(X))

    def test_bad_shapes_rejected(self):
        est = DisparityRegressor(stream_width=4, iters=1)
        rng = np.random.default_rng(0)
        with pytest.raises(DataError):
            est.fit(rng.random((4, 3, 7, 23, 23)), np.zeros(4))
        with pytest.raises(DataError):
            est.fit(rng.random((4, 4, 7, 23, 23)), np.zeros(5))

    def test_score_is_r2(self, tiny_fit):
        # RegressorMixin contract: score on training data is finite r2
        est, X, y = tiny_fit
        assert np.isfinite(est.score(X[:8], y[:8]))


class TestInferAndPersistence:
    def test_infer_modes(self, tiny_fit, slant_scene):
        est, X, y = tiny_fit
        _, lf, gt, _ = slant_scene
        crop = est.infer(lf, pad="crop")
        assert isinstance(crop, DisparityMap)
        assert crop.data.shape == (48 - 22, 48 - 22)
        refl = est.infer(lf, pad="reflect")
        assert refl.data.shape == (48, 48)
        ens = est.infer(lf, ensemble=True)
        assert ens.data.shape == (48, 48)

    def test_save_and_from_file(self, tiny_fit, tmp_path):
        est, X, y = tiny_fit
        p = tmp_path / "est.lfp"
        est.save(p)
        est2 = DisparityRegressor.from_file(p)
        assert est2.get_params()["stream_width"] == 4
        assert np.array_equal(est2.predict(X[:6]), est.predict(X[:6]))

    def test_unfitted_save_raises(self, tmp_path):
        with pytest.raises(NotFittedError):
            DisparityRegressor().save(tmp_path / "x.lfp")
