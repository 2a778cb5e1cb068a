"""Light-field depth estimation toolkit.

Core pieces: a 4D light-field data model with epipolar geometry
(:mod:`lfdepth.lightfield`), a synthetic scene renderer with exact
ground truth (:mod:`lfdepth.synth`), geometry-preserving augmentations
(:mod:`lfdepth.augment`), a from-scratch differentiable kernel library
(:mod:`lfdepth.nn`), the multi-stream disparity network
(:mod:`lfdepth.model`), patch sampling (:mod:`lfdepth.sampler`),
evaluation metrics (:mod:`lfdepth.metrics`), and a scikit-learn style
estimator facade (:mod:`lfdepth.estimator`).
"""

from .lightfield import (
    Direction,
    DisparityMap,
    LightField,
    STREAM_ORDER,
    ViewStack,
    extract_epi,
    extract_stacks,
    extract_view,
    to_gray,
    warp_center,
)
from .exceptions import (
    AngularIndexError,
    ConfigError,
    DataError,
    FormatError,
    LfError,
    SamplingError,
    SceneError,
)

__version__ = "0.1.0"


def __getattr__(name):
    # lazy: keeps `import lfdepth` fast by deferring the sklearn import
    if name == "DisparityRegressor":
        from .estimator import DisparityRegressor
        return DisparityRegressor
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = [
    "DisparityRegressor",
    "AngularIndexError",
    "ConfigError",
    "DataError",
    "Direction",
    "DisparityMap",
    "FormatError",
    "LfError",
    "LightField",
    "STREAM_ORDER",
    "SamplingError",
    "SceneError",
    "ViewStack",
    "extract_epi",
    "extract_stacks",
    "extract_view",
    "to_gray",
    "warp_center",
]
