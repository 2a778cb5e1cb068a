"""4D light-field data model and epipolar geometry.

A light field L(x, y, u, v) is stored as a 5D array indexed
``data[u + N, v + N, y, x, channel]`` where the angular coordinates
(u, v) run over a square odd-sized grid [-N, N] x [-N, N].  Axis
conventions, fixed project-wide: x and u point right, y and v point
down, the center view sits at (u, v) = (0, 0).

The generative model relating views to the center view is

    view_{u,v}(x, y) = center(x - d(x, y) * u, y - d(x, y) * v)

where d is the disparity map in pixels per unit angular step.
Equivalently, resampling view (u, v) at (x + d*u, y + d*v) recovers
the center view, which is the round-trip property the tests pin.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import AngularIndexError, DataError

# ITU-R 601 luma coefficients
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class Direction(Enum):
    """One of the four angular lines through the center view.

    The value is the unit angular step (du, dv) along the line.
    """

    HORIZONTAL = (1, 0)        # 0 degrees
    RIGHT_DIAGONAL = (1, 1)    # 45 degrees
    VERTICAL = (0, 1)          # 90 degrees
    LEFT_DIAGONAL = (-1, 1)    # 135 degrees

    @property
    def step(self) -> tuple:
        return self.value


# Fixed ordering of stacks wherever they feed the network (concat order).
STREAM_ORDER = (
    Direction.HORIZONTAL,
    Direction.VERTICAL,
    Direction.LEFT_DIAGONAL,
    Direction.RIGHT_DIAGONAL,
)


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


class LightField:
    """Immutable 4D light field with ground-truth-friendly invariants.

    Parameters
    ----------
    data : array, shape (2N+1, 2N+1, H, W) or (2N+1, 2N+1, H, W, C)
        Intensities in [0, 1], indexed (u+N, v+N, y, x[, channel]),
        C in {1, 3}.
    """

    def __init__(self, data):
        data = np.asarray(data)
        if data.ndim == 4:
            data = data[..., None]
        if data.ndim != 5:
            raise DataError(f"light field must be 4D or 5D, got ndim={data.ndim}")
        a0, a1, h, w, c = data.shape
        if a0 != a1 or a0 % 2 == 0 or a0 < 3:
            raise DataError(f"angular grid must be square and odd-sized >= 3x3, got {a0}x{a1}")
        if c not in (1, 3):
            raise DataError(f"channels must be 1 or 3, got {c}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise DataError("light field contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise DataError("intensities must lie in [0, 1]")
        self.data = _freeze(data)

    @property
    def angular_extent(self) -> int:
        return self.data.shape[0] // 2

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def channels(self) -> int:
        return self.data.shape[4]

    def __repr__(self):
        n = self.angular_extent
        return (f"LightField(views {2*n+1}x{2*n+1}, "
                f"{self.height}x{self.width}x{self.channels})")


class DisparityMap:
    """Per-pixel disparity in pixels per unit angular step.

    ``disparity_range`` declares the admissible magnitude (default 4).
    Pass ``disparity_range=None`` for unbounded maps such as raw
    network predictions.
    """

    DEFAULT_RANGE = 4.0

    def __init__(self, data, disparity_range: float | None = DEFAULT_RANGE):
        data = np.asarray(data)
        if data.ndim != 2:
            raise DataError(f"disparity map must be 2D, got ndim={data.ndim}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise DataError("disparity map contains non-finite values")
        if disparity_range is not None and data.size:
            m = float(np.abs(data).max())
            if m > disparity_range:
                raise DataError(
                    f"disparity magnitude {m:.4g} exceeds declared range {disparity_range:g}")
        self.data = _freeze(data)
        self.disparity_range = disparity_range

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __repr__(self):
        return f"DisparityMap({self.height}x{self.width}, range={self.disparity_range})"


@dataclass(frozen=True)
class ViewStack:
    """Grayscale views along one angular line, center view at index N."""

    direction: Direction
    views: np.ndarray  # (2N+1, H, W), ordered by increasing angular index

    def __post_init__(self):
        v = np.asarray(self.views)
        if v.ndim != 3 or v.shape[0] % 2 == 0:
            raise DataError(f"view stack must be (2N+1, H, W), got {v.shape}")
        object.__setattr__(self, "views", _freeze(v))

    @property
    def center_index(self) -> int:
        return self.views.shape[0] // 2


def to_gray(image: np.ndarray) -> np.ndarray:
    """Convert an (H, W[, C]) image to (H, W) luma. Idempotent on 2D input."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 1:
        return image[..., 0]
    if image.ndim == 3 and image.shape[2] == 3:
        w = np.asarray(LUMA_WEIGHTS, dtype=image.dtype)
        return image @ w
    raise DataError(f"cannot convert shape {image.shape} to grayscale")


def extract_view(lf: LightField, u: int, v: int) -> np.ndarray:
    """Return the sub-aperture view at angular (u, v), no copy promised."""
    n = lf.angular_extent
    if abs(u) > n or abs(v) > n:
        raise AngularIndexError(f"(u={u}, v={v}) outside angular extent {n}")
    view = lf.data[u + n, v + n]
    return view[..., 0] if lf.channels == 1 else view


def _gray_grid(lf: LightField) -> np.ndarray:
    """All views as grayscale, shape (2N+1, 2N+1, H, W)."""
    if lf.channels == 1:
        return lf.data[..., 0]
    w = np.asarray(LUMA_WEIGHTS, dtype=lf.data.dtype)
    return lf.data @ w


def extract_stacks(lf: LightField) -> dict:
    """Extract the four directional view stacks (grayscale).

    Horizontal = views (u, 0) ordered by u; Vertical = (0, v) ordered
    by v; RightDiagonal = (u, u) ordered by u; LeftDiagonal = (-v, v)
    ordered by v.  Index N is always the center view.
    """
    g = _gray_grid(lf)
    n = lf.angular_extent
    a = 2 * n + 1
    idx = np.arange(a)
    return {
        Direction.HORIZONTAL: ViewStack(Direction.HORIZONTAL, g[:, n]),
        Direction.VERTICAL: ViewStack(Direction.VERTICAL, g[n, :]),
        Direction.RIGHT_DIAGONAL: ViewStack(Direction.RIGHT_DIAGONAL, g[idx, idx]),
        Direction.LEFT_DIAGONAL: ViewStack(Direction.LEFT_DIAGONAL, g[a - 1 - idx, idx]),
    }


def warp_center(center: np.ndarray, d, u: int, v: int,
                interp: str = "nearest") -> np.ndarray:
    """Synthesize the view at (u, v) by resampling the center view.

    Output pixel (x, y) samples the center at (x - d(x,y)*u, y - d(x,y)*v),
    so that resampling the result back at (x + d*u, y + d*v) recovers the
    center view (exactly so for constant d).  Samples falling outside the
    image take the nearest border value (clamp-to-edge).

    This is the ground-truth generator used by the synthesizer and the
    geometry tests.
    """
    center = np.asarray(center)
    d = d.data if isinstance(d, DisparityMap) else np.asarray(d)
    if not np.all(np.isfinite(d)):
        raise DataError("disparity map contains non-finite values")
    if d.shape != center.shape[:2]:
        raise DataError(f"disparity shape {d.shape} does not match image {center.shape[:2]}")
    if interp not in ("nearest", "bilinear"):
        raise DataError(f"unknown interpolation {interp!r}")

    h, w = center.shape[:2]
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    sx = xs - d * u
    sy = ys - d * v

    def gather(iy, ix):
        iy = np.clip(iy, 0, h - 1)
        ix = np.clip(ix, 0, w - 1)
        return center[iy, ix]

    if interp == "nearest":
        return gather(np.rint(sy).astype(np.intp), np.rint(sx).astype(np.intp))

    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = (sx - x0).astype(center.dtype, copy=False)
    fy = (sy - y0).astype(center.dtype, copy=False)
    if center.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = gather(y0, x0) * (1 - fx) + gather(y0, x0 + 1) * fx
    bot = gather(y0 + 1, x0) * (1 - fx) + gather(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bot * fy


def extract_epi(lf: LightField, direction: Direction, index: int) -> np.ndarray:
    """Slice an epipolar plane image along ``direction`` (grayscale).

    For Horizontal the slice fixes y = index and is (2N+1, W); for
    Vertical it fixes x = index and is (2N+1, H).  For the diagonals the
    invariant spatial lines are x - y = index (RightDiagonal, index in
    [-(H-1), W-1]) and x + y = index (LeftDiagonal, index in [0, H+W-2]);
    the slice samples each view of the stack along that line.  In every
    case scene points trace lines whose slope equals their disparity.
    """
    stacks = extract_stacks(lf)
    views = stacks[direction].views
    h, w = views.shape[1:]
    if direction is Direction.HORIZONTAL:
        if not 0 <= index < h:
            raise DataError(f"epi row index {index} outside [0, {h})")
        return views[:, index, :]
    if direction is Direction.VERTICAL:
        if not 0 <= index < w:
            raise DataError(f"epi column index {index} outside [0, {w})")
        return views[:, :, index].copy()
    if direction is Direction.RIGHT_DIAGONAL:
        # line x - y = index
        if not -(h - 1) <= index <= w - 1:
            raise DataError(f"epi diagonal index {index} outside [{-(h-1)}, {w-1}]")
        ts = np.arange(max(0, -index), min(h, w - index))
        return views[:, ts, ts + index]
    # LEFT_DIAGONAL: line x + y = index
    if not 0 <= index <= h + w - 2:
        raise DataError(f"epi anti-diagonal index {index} outside [0, {h + w - 2}]")
    ts = np.arange(max(0, index - w + 1), min(h, index + 1))
    return views[:, ts, index - ts]
