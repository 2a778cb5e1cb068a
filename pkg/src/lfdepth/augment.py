"""Geometry-preserving light-field augmentations.

Every geometric transform here maps a valid (LightField, DisparityMap)
pair to a pair that still satisfies the view/center round-trip
relation.  The orientation conventions are fixed by that requirement
and pinned mechanically by the tests:

* rotation by 90 degrees: each view rotates clockwise on screen
  (x right, y down), angular coordinates map (u, v) -> (-v, u),
  disparity values unchanged;
* horizontal flip: each view mirrors in x, angular coordinates mirror
  in v, the disparity map mirrors in x and its values are negated;
* transpose: x and y swap in every view, u and v swap angularly,
  disparity transposes with values unchanged.

The v-mirror under flip is forced: mirroring u instead breaks the
round-trip relation for every view with nonzero v once the disparity
sign is reversed.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import AngularIndexError, DataError
from .lightfield import (
    Direction,
    DisparityMap,
    LightField,
    ViewStack,
    _gray_grid,
    warp_center,
)

ROTATIONS = (0, 90, 180, 270)
SCALES = (1, 2, 3, 4)
GAIN_RANGE = (0.5, 2.0)
GRAY_MIX_RANGE = (0.0, 1.0)
GAMMA_RANGE = (0.8, 1.2)


@dataclass(frozen=True)
class AugmentationSpec:
    """One point in the augmentation product.

    Geometric members are enumerable; photometric members default to the
    identity and are drawn randomly rather than enumerated.
    """

    view_shift: tuple = (0, 0)
    n_dst: int | None = None  # angular extent after the shift crop
    rotation: int = 0
    flip: bool = False
    transpose: bool = False
    scale: int = 1
    color_gain: float = 1.0
    gray_mix: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.rotation not in ROTATIONS:
            raise DataError(f"rotation must be one of {ROTATIONS}, got {self.rotation}")
        if self.scale not in SCALES:
            raise DataError(f"scale divisor must be in {SCALES}, got {self.scale}")
        if not GAIN_RANGE[0] <= self.color_gain <= GAIN_RANGE[1]:
            raise DataError(f"color_gain outside {GAIN_RANGE}: {self.color_gain}")
        if not GRAY_MIX_RANGE[0] <= self.gray_mix <= GRAY_MIX_RANGE[1]:
            raise DataError(f"gray_mix outside {GRAY_MIX_RANGE}: {self.gray_mix}")
        if not GAMMA_RANGE[0] <= self.gamma <= GAMMA_RANGE[1]:
            raise DataError(f"gamma outside {GAMMA_RANGE}: {self.gamma}")
        if self.view_shift != (0, 0) and self.n_dst is None:
            raise DataError("view_shift needs an explicit n_dst")


# ---------------------------------------------------------------------------
# geometric transforms

def view_shift(lf: LightField, d: DisparityMap, du: int, dv: int,
               n_dst: int, shifted_gt: DisparityMap | None = None):
    """Re-center the angular grid at (du, dv) and crop to extent n_dst.

    Disparity values are unchanged (pixels per unit angular step do not
    depend on the reference view), but the map itself belongs to the new
    center view: for a nonzero shift the caller must supply
    ``shifted_gt`` (synthetic scenes re-render it, see
    :func:`lfdepth.synth.render_disparity`).
    """
    n_src = lf.angular_extent
    if n_dst < 1 or n_dst > n_src:
        raise AngularIndexError(f"n_dst={n_dst} outside [1, {n_src}]")
    limit = n_src - n_dst
    if abs(du) > limit or abs(dv) > limit:
        raise AngularIndexError(
            f"shift ({du}, {dv}) exceeds bound {limit} for extent {n_src}->{n_dst}")
    lo_u = du + n_src - n_dst
    lo_v = dv + n_src - n_dst
    side = 2 * n_dst + 1
    data = lf.data[lo_u:lo_u + side, lo_v:lo_v + side]
    if (du, dv) == (0, 0):
        new_gt = d if shifted_gt is None else shifted_gt
    else:
        if shifted_gt is None:
            raise DataError(
                "nonzero view shift changes the center view; ground truth for "
                "the new center is required")
        new_gt = shifted_gt
    if new_gt.data.shape != (lf.height, lf.width):
        raise DataError("shifted ground truth has wrong spatial size")
    return LightField(data), new_gt


def _rot90_once(data: np.ndarray) -> np.ndarray:
    # angular (u,v) -> (-v,u); spatially clockwise on screen
    return np.rot90(data.transpose(1, 0, 2, 3, 4)[::-1], k=-1, axes=(2, 3))


def rotate_lf(lf: LightField, d: DisparityMap, angle: int):
    """Rotate the whole light field by 90/180/270 degrees.

    Views rotate spatially, the angular grid permutes consistently
    ((u, v) -> (-v, u) per 90-degree step), the disparity map rotates
    with values unchanged.
    """
    if angle not in (90, 180, 270):
        raise DataError(f"rotation angle must be 90, 180 or 270, got {angle}")
    if angle in (90, 270) and lf.height != lf.width:
        raise DataError("90/270 degree rotation needs square spatial dims")
    k = angle // 90
    data = lf.data
    for _ in range(k):
        data = _rot90_once(data)
    d_new = np.rot90(d.data, k=-k)
    return LightField(np.ascontiguousarray(data)), DisparityMap(
        np.ascontiguousarray(d_new), disparity_range=d.disparity_range)


def flip_lf(lf: LightField, d: DisparityMap):
    """Horizontal flip: x-mirror views, v-mirror the angular grid,
    x-mirror the disparity map and negate its values."""
    data = lf.data[:, ::-1, :, ::-1, :]
    d_new = -d.data[:, ::-1]
    return LightField(np.ascontiguousarray(data)), DisparityMap(
        np.ascontiguousarray(d_new), disparity_range=d.disparity_range)


def transpose_lf(lf: LightField, d: DisparityMap):
    """Swap x and y in every view and u and v angularly; disparity
    transposes, values unchanged."""
    data = lf.data.transpose(1, 0, 3, 2, 4)
    return LightField(np.ascontiguousarray(data)), DisparityMap(
        np.ascontiguousarray(d.data.T), disparity_range=d.disparity_range)


def scale_lf(lf: LightField, d: DisparityMap, factor: int):
    """Downsample spatially by 1/factor with box averaging.

    Views and disparity are averaged over factor x factor cells (after a
    center crop to divisible dims); disparity values are additionally
    multiplied by 1/factor, since one pixel now spans `factor` old ones.
    """
    if factor not in SCALES:
        raise DataError(f"scale divisor must be in {SCALES}, got {factor}")
    if factor == 1:
        return lf, d
    h2 = (lf.height // factor) * factor
    w2 = (lf.width // factor) * factor
    if h2 == 0 or w2 == 0:
        raise DataError("image smaller than the scale divisor")
    ty = (lf.height - h2) // 2
    tx = (lf.width - w2) // 2
    a = lf.data.shape[0]
    c = lf.data.shape[4]
    cropped = lf.data[:, :, ty:ty + h2, tx:tx + w2, :]
    pooled = cropped.reshape(a, a, h2 // factor, factor, w2 // factor, factor, c)
    pooled = pooled.mean(axis=(3, 5), dtype=np.float64).astype(np.float32)
    dc = d.data[ty:ty + h2, tx:tx + w2]
    dp = dc.reshape(h2 // factor, factor, w2 // factor, factor)
    dp = (dp.mean(axis=(1, 3), dtype=np.float64) / factor).astype(np.float32)
    rng = None if d.disparity_range is None else d.disparity_range
    return LightField(pooled), DisparityMap(dp, disparity_range=rng)


def photometric(lf: LightField, gain: float = 1.0, gray_mix: float = 0.0,
                gamma: float = 1.0) -> LightField:
    """Photometric jitter, identical for every view: intensity gain, mix
    toward luma gray, gamma curve; result clipped to [0, 1].
    Disparity is untouched by construction."""
    if not GAIN_RANGE[0] <= gain <= GAIN_RANGE[1]:
        raise DataError(f"gain outside {GAIN_RANGE}: {gain}")
    if not GRAY_MIX_RANGE[0] <= gray_mix <= GRAY_MIX_RANGE[1]:
        raise DataError(f"gray_mix outside {GRAY_MIX_RANGE}: {gray_mix}")
    if not GAMMA_RANGE[0] <= gamma <= GAMMA_RANGE[1]:
        raise DataError(f"gamma outside {GAMMA_RANGE}: {gamma}")
    out = lf.data.astype(np.float64) * gain
    if gray_mix > 0 and lf.channels == 3:
        luma = _gray_grid(LightField(np.clip(lf.data, 0, 1)))
        out = (1.0 - gray_mix) * out + gray_mix * gain * luma[..., None]
    if gamma != 1.0:
        out = np.power(out, gamma)
    return LightField(np.clip(out, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# composition and enumeration

def apply_augmentation(lf: LightField, d: DisparityMap, spec: AugmentationSpec,
                       gt_provider=None):
    """Apply one AugmentationSpec.

    Order: view shift, rotation, flip, transpose, scale, photometric.
    ``gt_provider(du, dv) -> DisparityMap`` supplies the new center's
    ground truth when the spec shifts the viewpoint.
    """
    if spec.view_shift != (0, 0) or spec.n_dst is not None:
        du, dv = spec.view_shift
        shifted = None
        if (du, dv) != (0, 0):
            if gt_provider is None:
                raise DataError("spec shifts the viewpoint but no gt_provider given")
            shifted = gt_provider(du, dv)
        lf, d = view_shift(lf, d, du, dv, spec.n_dst, shifted)
    if spec.rotation:
        lf, d = rotate_lf(lf, d, spec.rotation)
    if spec.flip:
        lf, d = flip_lf(lf, d)
    if spec.transpose:
        lf, d = transpose_lf(lf, d)
    if spec.scale != 1:
        lf, d = scale_lf(lf, d, spec.scale)
    if (spec.color_gain, spec.gray_mix, spec.gamma) != (1.0, 0.0, 1.0):
        lf = photometric(lf, spec.color_gain, spec.gray_mix, spec.gamma)
    return lf, d


def enumerate_product(n_src: int = 4, n_dst: int = 3):
    """Enumerate the geometric augmentation product for an angular crop
    n_src -> n_dst: every view shift x 4 rotations x 2 flips x 4 scales.

    For the 9x9 -> 7x7 case this is 9 * 4 * 2 * 4 = 288 distinct specs.
    Transpose is excluded from the product (available separately);
    photometric parameters are sampled per draw, not enumerated.
    """
    limit = n_src - n_dst
    if limit < 0:
        raise AngularIndexError(f"n_dst={n_dst} exceeds n_src={n_src}")
    shifts = [(du, dv)
              for du in range(-limit, limit + 1)
              for dv in range(-limit, limit + 1)]
    return [
        AugmentationSpec(view_shift=s, n_dst=n_dst, rotation=r, flip=f, scale=sc)
        for s in shifts
        for r in ROTATIONS
        for f in (False, True)
        for sc in SCALES
    ]


def sample_photometric(rng: np.random.Generator, spec: AugmentationSpec = None):
    """Draw random photometric parameters (uniform over the valid ranges)
    onto a spec (or a fresh identity spec)."""
    gain = float(rng.uniform(*GAIN_RANGE))
    mix = float(rng.uniform(*GRAY_MIX_RANGE))
    gamma = float(rng.uniform(*GAMMA_RANGE))
    base = spec if spec is not None else AugmentationSpec()
    return replace(base, color_gain=gain, gray_mix=mix, gamma=gamma)


# ---------------------------------------------------------------------------
# orientation bookkeeping for stacks and predictions

_STEPS = {dd: np.array(dd.step) for dd in Direction}


def _angular_matrix(rotation: int, flip: bool) -> np.ndarray:
    """Angular action of (rotate after optional flip) as a 2x2 matrix on
    column vectors (u, v)."""
    m = np.eye(2, dtype=int)
    if flip:
        m = np.array([[1, 0], [0, -1]]) @ m  # v-mirror
    r90 = np.array([[0, -1], [1, 0]])        # (u,v) -> (-v,u)
    for _ in range(rotation // 90):
        m = r90 @ m
    return m


def stack_permutation(rotation: int, flip: bool) -> dict:
    """How stacks rearrange under an orientation change.

    Returns {new_direction: (source_direction, reversed)} derived from
    the angular action, never hand-coded per case: the new stack along
    step s' takes its views from the old line along +/- inv(F) s'.
    """
    f = _angular_matrix(rotation, flip)
    inv = np.linalg.inv(f).round().astype(int)
    out = {}
    for new_dir in Direction:
        src = inv @ _STEPS[new_dir]
        for old_dir in Direction:
            if np.array_equal(src, _STEPS[old_dir]):
                out[new_dir] = (old_dir, False)
                break
            if np.array_equal(src, -_STEPS[old_dir]):
                out[new_dir] = (old_dir, True)
                break
        else:
            raise AssertionError("angular step did not map onto a stack line")
    return out


def _spatial_op(images: np.ndarray, rotation: int, flip: bool) -> np.ndarray:
    """Apply the per-view spatial action of (rotate after optional flip)
    to a (V, H, W) array."""
    out = images
    if flip:
        out = out[:, :, ::-1]
    if rotation:
        out = np.rot90(out, k=-(rotation // 90), axes=(1, 2))
    return np.ascontiguousarray(out)


def permuted_stacks(stacks: dict, rotation: int, flip: bool) -> dict:
    """Stacks of the transformed light field, computed from the original
    stacks by pure rearrangement (no pixel interpolation).

    This is the exact data-path identity the ensemble relies on:
    ``permuted_stacks(extract_stacks(lf), r, f) ==
    extract_stacks(rotate(flip(lf)))``.
    """
    table = stack_permutation(rotation, flip)
    out = {}
    for new_dir, (src_dir, rev) in table.items():
        views = stacks[src_dir].views
        if rev:
            views = views[::-1]
        out[new_dir] = ViewStack(new_dir, _spatial_op(views, rotation, flip))
    return out


def invert_orientation(pred: np.ndarray, rotation: int, flip: bool) -> np.ndarray:
    """Map a disparity prediction made in a transformed frame back to the
    original frame: undo the rotation, undo the flip, and negate values
    if a flip was involved (the flip sign rule)."""
    out = pred
    if rotation:
        out = np.rot90(out, k=rotation // 90)
    if flip:
        out = -out[:, ::-1]
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# round-trip validation

def roundtrip_residual(lf: LightField, d: DisparityMap, exclude=None,
                       interp: str = "nearest", border: int | None = None) -> float:
    """Largest |center - view resampled at (x + d u, y + d v)| over all
    views on the four angular lines.

    ``exclude`` masks pixels (for example occlusions) that are not
    required to match; a border margin of ceil(max|d| * step) pixels is
    dropped per view unless ``border`` overrides it.  This is the
    mechanical check behind the geometry suite and `augment --validate`.
    """
    grid = _gray_grid(lf)
    n = lf.angular_extent
    center = grid[n, n]
    dd = d.data.astype(np.float64)
    dmax = float(np.abs(dd).max()) if dd.size else 0.0
    worst = 0.0
    seen = set()
    for direction in Direction:
        du_, dv_ = direction.step
        for k in range(-n, n + 1):
            u, v = k * du_, k * dv_
            if (u, v) == (0, 0) or (u, v) in seen:
                continue
            seen.add((u, v))
            view = grid[u + n, v + n]
            recon = warp_center(view, -dd, u, v, interp=interp)
            m = border if border is not None else math.ceil(dmax * max(abs(u), abs(v)))
            valid = np.ones_like(center, dtype=bool)
            if m > 0:
                if 2 * m >= min(center.shape):
                    continue
                valid[:] = False
                valid[m:-m, m:-m] = True
            if exclude is not None:
                valid &= ~np.asarray(exclude, dtype=bool)
            if valid.any():
                worst = max(worst, float(np.abs(recon - center)[valid].max()))
    return worst
