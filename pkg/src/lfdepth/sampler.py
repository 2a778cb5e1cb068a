"""Training-sample construction: textureless rejection, exclusion masks,
and random 23x23 patch extraction with window-level screening.

A patch is only emitted when its full window stays inside the image and
touches no rejected pixel (textureless or excluded), so every sample the
trainer sees is clean end to end rather than merely clean at its center.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import DataError, SamplingError
from .lightfield import DisparityMap, LightField, STREAM_ORDER, extract_stacks, to_gray

TEXTURELESS_LIMIT = 0.02


def textureless_mask(gray, patch: int = 23):
    """Flag pixels whose surroundings carry almost no intensity contrast.

    A pixel is rejected (True) when the mean absolute difference between
    it and the other pixels of its patch-sized window is below 0.02,
    strictly; a window hitting exactly 0.02 is kept.  Windows are
    clipped at the image border, the mean running over the valid part.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise DataError(f"expected a 2-d grayscale image, got shape {gray.shape}")
    if patch % 2 == 0 or patch < 1:
        raise DataError(f"patch must be odd positive, got {patch}")
    r = patch // 2
    h, w = gray.shape
    acc = np.zeros_like(gray)
    cnt = np.zeros_like(gray)
    for dy in range(-r, r + 1):
        ys = slice(max(0, -dy), min(h, h - dy))
        yd = slice(max(0, dy), min(h, h + dy))
        for dx in range(-r, r + 1):
            xs = slice(max(0, -dx), min(w, w - dx))
            xd = slice(max(0, dx), min(w, w + dx))
            acc[ys, xs] += np.abs(gray[yd, xd] - gray[ys, xs])
            cnt[ys, xs] += 1.0
    return acc / cnt < TEXTURELESS_LIMIT


@dataclass(frozen=True)
class Sample:
    """One training example: the four direction stacks of a 23x23 window
    (STREAM_ORDER slots) and the ground-truth disparity at its center."""

    stacks: np.ndarray  # (4, views, patch, patch) float32
    target: float
    center: tuple  # (y, x) in the source view
    scene: str = ""


def _rejection_mask(lf: LightField, exclusion_mask=None, patch: int = 23):
    center = to_gray(lf.data[lf.angular_extent, lf.angular_extent])
    reject = textureless_mask(center, patch=patch)
    if exclusion_mask is not None:
        em = np.asarray(exclusion_mask)
        if em.shape != reject.shape:
            raise DataError(
                f"exclusion mask shape {em.shape} != image shape {reject.shape}")
        reject |= em.astype(bool)
    return reject


def eligible_centers(lf: LightField, exclusion_mask=None, patch: int = 23):
    """(y, x) arrays of centers whose window is fully inside the image
    and intersects no rejected pixel."""
    reject = _rejection_mask(lf, exclusion_mask, patch)
    r = patch // 2
    h, w = reject.shape
    if h < patch or w < patch:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    # windowed any() of the rejection mask = dilation by the window
    dilated = ndimage.maximum_filter(reject, size=patch, mode="constant",
                                     cval=False)
    ok = ~dilated[r:h - r, r:w - r]
    ys, xs = np.nonzero(ok)
    return ys + r, xs + r


def _stack_array(lf: LightField) -> np.ndarray:
    stacks = extract_stacks(lf)
    return np.stack([stacks[d].views for d in STREAM_ORDER]).astype(
        np.float32, copy=False)


def sample_patches(lf: LightField, gt: DisparityMap, count: int, seed: int = 0,
                   exclusion_mask=None, patch: int = 23, scene: str = ""):
    """Draw ``count`` samples uniformly (with replacement) from the
    eligible centers of one scene.  Deterministic under ``seed``."""
    if gt.data.shape != (lf.height, lf.width):
        raise DataError(
            f"gt shape {gt.data.shape} != spatial shape {(lf.height, lf.width)}")
    ys, xs = eligible_centers(lf, exclusion_mask, patch)
    if len(ys) == 0:
        raise SamplingError("no eligible patch centers after masking")
    full = _stack_array(lf)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(ys), size=count)
    r = patch // 2
    out = []
    for i in idx:
        y, x = int(ys[i]), int(xs[i])
        window = full[:, :, y - r:y + r + 1, x - r:x + r + 1]
        out.append(Sample(np.ascontiguousarray(window),
                          float(gt.data[y, x]), (y, x), scene))
    return out


def sample_dataset(entries, count: int, seed: int = 0, patch: int = 23):
    """Sample uniformly over the union of eligible centers of several
    scenes.

    ``entries`` is a sequence of (lf, gt, exclusion_mask_or_None) or
    (lf, gt, mask, name) tuples.  Scenes with more eligible area
    contribute proportionally more samples.
    """
    pools = []
    for e in entries:
        lf, gt, mask = e[0], e[1], e[2]
        name = e[3] if len(e) > 3 else ""
        ys, xs = eligible_centers(lf, mask, patch)
        if gt.data.shape != (lf.height, lf.width):
            raise DataError(f"gt shape mismatch in scene {name!r}")
        pools.append((lf, gt, name, ys, xs))
    total = sum(len(p[3]) for p in pools)
    if total == 0:
        raise SamplingError("no eligible patch centers in any scene")
    rng = np.random.default_rng(seed)
    scene_of = np.concatenate(
        [np.full(len(p[3]), si) for si, p in enumerate(pools)])
    flat = rng.integers(0, total, size=count)
    r = patch // 2
    out = []
    offsets = np.cumsum([0] + [len(p[3]) for p in pools])
    cache = {}
    for f in flat:
        si = int(scene_of[f])
        lf, gt, name, ys, xs = pools[si]
        if si not in cache:
            cache[si] = _stack_array(lf)
        j = int(f - offsets[si])
        y, x = int(ys[j]), int(xs[j])
        window = cache[si][:, :, y - r:y + r + 1, x - r:x + r + 1]
        out.append(Sample(np.ascontiguousarray(window),
                          float(gt.data[y, x]), (y, x), name))
    return out


def collate(samples):
    """Pack Samples into ((N, 4, views, patch, patch) float32, (N,) float32)
    ready for the training loop."""
    if not samples:
        raise DataError("empty sample list")
    stacks = np.stack([s.stacks for s in samples])
    targets = np.asarray([s.target for s in samples], dtype=np.float32)
    return stacks, targets
