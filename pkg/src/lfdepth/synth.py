"""Synthetic light-field renderer with exact ground-truth disparity.

Scenes are ordered stacks of fronto-parallel layers living on the
center-view plane.  A layer's disparity is either constant or linear in
x (a slanted surface); its texture is procedural and can be evaluated
at any real coordinate, so every view is rendered analytically rather
than by resampling the center image.  For view (u, v) and view pixel
(X, Y) the source point on a layer solves

    X = x + d(x) * u,  Y = y + d(x) * v

which for d(x) = a + b*x gives x = (X - a*u) / (1 + b*u) exactly.
Front layers occlude back layers; the per-view front-most layer id also
yields the occlusion mask.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import SceneError
from .lightfield import Direction, DisparityMap, LightField

_NOISE_TAG = 101
_LATTICE_TAG = 202


# ---------------------------------------------------------------------------
# procedural textures

@dataclass(frozen=True)
class Checker:
    period: float = 8.0
    lo: float = 0.15
    hi: float = 0.85


@dataclass(frozen=True)
class SineGrating:
    fx: float = 0.05
    fy: float = 0.0
    amplitude: float = 0.4
    offset: float = 0.5
    phase: float = 0.0


@dataclass(frozen=True)
class ValueNoise:
    cell: float = 8.0
    octaves: int = 3

    def __post_init__(self):
        if self.octaves < 1 or self.cell <= 0:
            raise SceneError("value noise needs octaves >= 1 and cell > 0")


@dataclass(frozen=True)
class Ramp:
    gx: float = 0.002
    gy: float = 0.0
    offset: float = 0.5


Texture = Union[Checker, SineGrating, ValueNoise, Ramp]


def _hash01(ix, iy, seed: int):
    """Deterministic lattice hash -> [0, 1); splitmix-style integer mixing."""
    seed_mix = np.uint64((seed * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF)
    h = (ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
         + iy.astype(np.uint64) * np.uint64(0xBF58476D1CE4E5B9)
         + seed_mix)
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return h.astype(np.float64) / 2.0**64


def _value_noise(x, y, cell: float, seed: int):
    """Smoothstep-interpolated lattice noise, C1 continuous, range [0, 1)."""
    gx = x / cell
    gy = y / cell
    ix = np.floor(gx)
    iy = np.floor(gy)
    tx = gx - ix
    ty = gy - iy
    # bias avoids negative lattice indices for any plausible domain
    ix = ix.astype(np.int64) + (1 << 20)
    iy = iy.astype(np.int64) + (1 << 20)
    sx = tx * tx * (3.0 - 2.0 * tx)
    sy = ty * ty * (3.0 - 2.0 * ty)
    v00 = _hash01(ix, iy, seed)
    v10 = _hash01(ix + 1, iy, seed)
    v01 = _hash01(ix, iy + 1, seed)
    v11 = _hash01(ix + 1, iy + 1, seed)
    top = v00 + (v10 - v00) * sx
    bot = v01 + (v11 - v01) * sx
    return top + (bot - top) * sy


def sample_texture(tex: Texture, x, y, seed: int = 0):
    """Evaluate a procedural texture at real coordinates (vectorized)."""
    if isinstance(tex, Checker):
        k = np.floor(x / tex.period) + np.floor(y / tex.period)
        return np.where(k % 2 == 0, tex.lo, tex.hi)
    if isinstance(tex, SineGrating):
        v = tex.offset + tex.amplitude * np.sin(
            2.0 * np.pi * (tex.fx * x + tex.fy * y) + tex.phase)
        return v
    if isinstance(tex, Ramp):
        return tex.offset + tex.gx * x + tex.gy * y
    if isinstance(tex, ValueNoise):
        total = np.zeros(np.broadcast(x, y).shape, dtype=np.float64)
        norm = 0.0
        amp = 1.0
        for k in range(tex.octaves):
            total += amp * _value_noise(x, y, tex.cell / (1 << k), (seed << 8) + k)
            norm += amp
            amp *= 0.5
        return total / norm
    raise SceneError(f"unknown texture {tex!r}")


# ---------------------------------------------------------------------------
# scene description

@dataclass(frozen=True)
class Layer:
    """One fronto-parallel (or x-slanted) textured layer.

    ``disparity`` is a constant or an (a, b) pair meaning d(x) = a + b*x.
    ``region`` is (x0, y0, x1, y1) half-open in center-view coordinates,
    or None for a full-frame layer of unbounded extent.
    """

    texture: Texture
    disparity: Union[float, tuple] = 0.0
    region: tuple | None = None

    def coefficients(self) -> tuple:
        if isinstance(self.disparity, tuple):
            a, b = self.disparity
            return float(a), float(b)
        return float(self.disparity), 0.0


@dataclass(frozen=True)
class SceneSpec:
    """Back-to-front layer stack plus imaging noise."""

    layers: tuple
    noise_sigma: float = 0.0
    seed: int = 0
    disparity_range: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise SceneError("scene needs at least one layer")
        if self.layers[0].region is not None:
            raise SceneError("back layer must be full-frame so every pixel is covered")
        if self.noise_sigma < 0:
            raise SceneError("noise_sigma must be nonnegative")


def _check_scene(scene: SceneSpec, n: int, width: int):
    """Validate disparity bounds over the rendered domain."""
    for i, layer in enumerate(scene.layers):
        a, b = layer.coefficients()
        if abs(b) * n >= 1.0:
            raise SceneError(
                f"layer {i}: slant {b:g} too steep for angular extent {n} "
                f"(needs |b|*N < 1)")
        if layer.region is None:
            x_lo, x_hi = 0.0, float(width - 1)
        else:
            x_lo, x_hi = float(layer.region[0]), float(layer.region[2])
        worst = max(abs(a + b * x_lo), abs(a + b * x_hi))
        if worst > scene.disparity_range:
            raise SceneError(
                f"layer {i}: disparity reaches {worst:.3g}, outside declared "
                f"range {scene.disparity_range:g}")


def _layer_query(scene: SceneSpec, xq, yq, u: float, v: float):
    """Front-most layer at real view coordinates (xq, yq) of view (u, v).

    Returns (layer_id, source_x, source_y, disparity) arrays; layer_id is
    the index into scene.layers (back layer guarantees full coverage).
    """
    shape = np.broadcast(xq, yq).shape
    lid = np.zeros(shape, dtype=np.int32)
    src_x = np.zeros(shape, dtype=np.float64)
    src_y = np.zeros(shape, dtype=np.float64)
    disp = np.zeros(shape, dtype=np.float64)
    for i, layer in enumerate(scene.layers):
        a, b = layer.coefficients()
        x = (xq - a * u) / (1.0 + b * u)
        d = a + b * x
        y = yq - d * v
        if layer.region is None:
            hit = np.ones(shape, dtype=bool)
        else:
            x0, y0, x1, y1 = layer.region
            hit = (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        # back-to-front order: later (front) layers overwrite
        lid = np.where(hit, i, lid)
        src_x = np.where(hit, x, src_x)
        src_y = np.where(hit, y, src_y)
        disp = np.where(hit, d, disp)
    return lid, src_x, src_y, disp


def render_view(scene: SceneSpec, n: int, height: int, width: int,
                u: float, v: float, with_noise: bool = True):
    """Render one view; returns (image float64 in [0,1], layer_id map)."""
    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing="ij")
    lid, sx, sy, _ = _layer_query(scene, xs, ys, u, v)
    img = np.zeros((height, width), dtype=np.float64)
    for i, layer in enumerate(scene.layers):
        sel = lid == i
        if not sel.any():
            continue
        img[sel] = sample_texture(layer.texture, sx[sel], sy[sel],
                                  seed=scene.seed * 1000 + _LATTICE_TAG + i)
    if with_noise and scene.noise_sigma > 0:
        rng = np.random.default_rng(
            np.random.SeedSequence((scene.seed, _NOISE_TAG, int(u) + n, int(v) + n)))
        img = img + rng.normal(0.0, scene.noise_sigma, img.shape)
    return np.clip(img, 0.0, 1.0), lid


def render_disparity(scene: SceneSpec, height: int, width: int,
                     u: float = 0.0, v: float = 0.0) -> DisparityMap:
    """Ground-truth disparity as seen from view (u, v) as its own center."""
    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing="ij")
    _, _, _, disp = _layer_query(scene, xs, ys, u, v)
    return DisparityMap(disp.astype(np.float32), disparity_range=scene.disparity_range)


def render(scene: SceneSpec, n: int, height: int, width: int):
    """Render the full light field.

    Returns (LightField, DisparityMap, occlusion_mask).  The disparity
    map is the front-most layer's disparity per center pixel; the
    occlusion mask marks center pixels whose matching ray is blocked by
    a nearer layer in at least one view on the four angular lines.
    """
    if n < 1 or height < 1 or width < 1:
        raise SceneError("render needs n >= 1 and positive spatial dims")
    _check_scene(scene, n, width)
    side = 2 * n + 1
    data = np.empty((side, side, height, width, 1), dtype=np.float32)
    for u in range(-n, n + 1):
        for v in range(-n, n + 1):
            img, _ = render_view(scene, n, height, width, u, v)
            data[u + n, v + n, :, :, 0] = img

    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing="ij")
    lid0, _, _, disp0 = _layer_query(scene, xs, ys, 0.0, 0.0)

    occluded = np.zeros((height, width), dtype=bool)
    seen = set()
    for direction in Direction:
        du, dv = direction.step
        for k in range(-n, n + 1):
            u, v = k * du, k * dv
            if (u, v) == (0, 0) or (u, v) in seen:
                continue
            seen.add((u, v))
            lid_uv, _, _, _ = _layer_query(scene, xs + disp0 * u, ys + disp0 * v, u, v)
            occluded |= lid_uv != lid0

    lf = LightField(data)
    gt = DisparityMap(disp0.astype(np.float32), disparity_range=scene.disparity_range)
    return lf, gt, occluded


# ---------------------------------------------------------------------------
# presets

def preset_scene(name: str, height: int, width: int, seed: int = 0) -> SceneSpec:
    """Named scene presets exposed by the CLI: flat0, slant, occluder, noisy."""
    if name == "flat0":
        return SceneSpec(layers=(Layer(ValueNoise(cell=9.0, octaves=3)),), seed=seed)
    if name == "slant":
        # disparity sweeps -1.5 .. +1.5 left to right
        b = 3.0 / max(width - 1, 1)
        return SceneSpec(
            layers=(Layer(ValueNoise(cell=11.0, octaves=3), disparity=(-1.5, b)),),
            seed=seed)
    if name == "occluder":
        fg = (round(width * 0.3), round(height * 0.3),
              round(width * 0.7), round(height * 0.7))
        return SceneSpec(
            layers=(
                Layer(ValueNoise(cell=10.0, octaves=3), disparity=0.0),
                Layer(Checker(period=5.0), disparity=2.0, region=fg),
            ),
            seed=seed)
    if name == "noisy":
        base = preset_scene("occluder", height, width, seed=seed)
        return SceneSpec(layers=base.layers, noise_sigma=0.01, seed=seed)
    raise SceneError(f"unknown preset {name!r} (have flat0, slant, occluder, noisy)")
