"""File formats: PNG view grids, PFM disparity maps, parameter
containers, and the flat key-value run configuration.

View grids on disk follow the naming ``view_{v}_{u}.png`` with signed
angular indices; the row-major ``input_Cam{idx:03d}.png`` convention of
the HCI benchmark is accepted as an alternative.  Disparity travels as
PFM (single channel, bottom-up rows, scale sign encodes endianness).
"""

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import ConfigError, DataError, FormatError
from .lightfield import DisparityMap, LightField

_VIEW_RE = re.compile(r"^view_(-?\d+)_(-?\d+)\.png$")
_HCI_RE = re.compile(r"^input_Cam(\d+)\.png$")

PARAMS_MAGIC = b"LFPARAMS 1\n"

# Documented run-configuration keys and their parsers.
CONFIG_KEYS = {
    "angular_extent": int,
    "patch_size": int,
    "stream_width": int,
    "merge_width": int,
    "lr": float,
    "batch": int,
    "iters": int,
    "seed": int,
    "disparity_range": float,
}


# ---------------------------------------------------------------------------
# images

def read_image(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG as float in [0, 1]; (H, W) or (H, W, 3)."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / 255.0
    if arr.dtype == np.uint16 or arr.dtype == np.int32:
        # PIL reads 16-bit gray as mode I (int32) on some paths
        return arr.astype(np.float32) / 65535.0
    raise FormatError(f"{path}: unsupported image dtype {arr.dtype}")


def write_image(path, image: np.ndarray, bit_depth: int = 16) -> None:
    """Write a float image in [0, 1] as PNG. Color is always 8-bit."""
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[..., 0]
    q = np.clip(image, 0.0, 1.0)
    if image.ndim == 3:
        Image.fromarray(np.rint(q * 255).astype(np.uint8), mode="RGB").save(path)
    elif bit_depth == 8:
        Image.fromarray(np.rint(q * 255).astype(np.uint8), mode="L").save(path)
    elif bit_depth == 16:
        Image.fromarray(np.rint(q * 65535).astype(np.uint16)).save(path)
    else:
        raise DataError(f"bit_depth must be 8 or 16, got {bit_depth}")


def read_mask(path) -> np.ndarray:
    """Read a binary exclusion mask PNG; nonzero = excluded."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return arr != 0


def write_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(np.asarray(mask), 255, 0).astype(np.uint8), mode="L").save(path)


# ---------------------------------------------------------------------------
# dataset entries

@dataclass
class DatasetEntry:
    """One scene on disk: view grid plus optional ground truth and mask."""

    scene_name: str
    view_paths: dict = field(repr=False)  # (u, v) -> Path
    gt_disparity: Path | None = None
    exclusion_mask: Path | None = None

    @property
    def angular_extent(self) -> int:
        count = len(self.view_paths)
        side = round(count ** 0.5)
        return side // 2


def scan_scene(directory) -> DatasetEntry:
    """Build a DatasetEntry from a scene directory.

    Views are matched by ``view_{v}_{u}.png`` or ``input_Cam{idx}.png``
    (row-major by (v, u)).  Ground truth is ``gt.pfm`` or
    ``gt_disp_lowres.pfm`` if present, the exclusion mask ``mask.png``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    named = {}
    hci = {}
    for p in sorted(directory.iterdir()):
        m = _VIEW_RE.match(p.name)
        if m:
            named[(int(m.group(2)), int(m.group(1)))] = p  # file order is (v, u)
            continue
        m = _HCI_RE.match(p.name)
        if m:
            hci[int(m.group(1))] = p
    if named and hci:
        raise FormatError(f"{directory}: mixed view naming conventions")
    if named:
        views = named
    elif hci:
        count = len(hci)
        side = round(count ** 0.5)
        if side * side != count or side % 2 == 0:
            raise FormatError(f"{directory}: {count} views do not form an odd square grid")
        n = side // 2
        if sorted(hci) != list(range(count)):
            raise FormatError(f"{directory}: non-contiguous camera indices")
        views = {}
        for idx, p in hci.items():
            v, u = divmod(idx, side)
            views[(u - n, v - n)] = p
    else:
        raise FormatError(f"{directory}: no view images found")

    count = len(views)
    side = round(count ** 0.5)
    if side * side != count or side % 2 == 0:
        raise FormatError(f"{directory}: {count} views do not form an odd square grid")
    n = side // 2
    expect = {(u, v) for u in range(-n, n + 1) for v in range(-n, n + 1)}
    if set(views) != expect:
        missing = sorted(expect - set(views))[:3]
        raise FormatError(f"{directory}: angular grid incomplete, missing {missing}")

    gt = None
    for cand in ("gt.pfm", "gt_disp_lowres.pfm"):
        if (directory / cand).exists():
            gt = directory / cand
            break
    mask = directory / "mask.png" if (directory / "mask.png").exists() else None
    return DatasetEntry(directory.name, views, gt, mask)


def load_lightfield(entry: DatasetEntry) -> LightField:
    """Assemble the angular grid of a DatasetEntry into a LightField."""
    n = entry.angular_extent
    side = 2 * n + 1
    if side * side != len(entry.view_paths):
        raise FormatError(f"{entry.scene_name}: {len(entry.view_paths)} views, need odd square")
    data = None
    for (u, v), path in sorted(entry.view_paths.items()):
        if not Path(path).exists():
            raise FormatError(f"missing view file {path}")
        img = read_image(path)
        if img.ndim == 2:
            img = img[:, :, None]
        if data is None:
            h, w, c = img.shape
            data = np.empty((side, side, h, w, c), dtype=np.float32)
        if img.shape != data.shape[2:]:
            raise DataError(
                f"{path}: view size {img.shape} differs from {data.shape[2:]}")
        data[u + n, v + n] = img
    return LightField(data)


def load_scene(directory):
    """Convenience: (LightField, DisparityMap | None, mask | None)."""
    entry = scan_scene(directory)
    lf = load_lightfield(entry)
    gt = None
    if entry.gt_disparity is not None:
        gt = DisparityMap(read_pfm(entry.gt_disparity), disparity_range=None)
    mask = read_mask(entry.exclusion_mask) if entry.exclusion_mask else None
    return lf, gt, mask


def write_scene(directory, lf: LightField, gt=None, mask=None, bit_depth: int = 16):
    """Write a LightField (plus optional ground truth and mask) as a
    DatasetEntry directory; returns the created entry."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = lf.angular_extent
    paths = {}
    for u in range(-n, n + 1):
        for v in range(-n, n + 1):
            p = directory / f"view_{v}_{u}.png"
            view = lf.data[u + n, v + n]
            write_image(p, view, bit_depth=bit_depth)
            paths[(u, v)] = p
    gt_path = None
    if gt is not None:
        gt_path = directory / "gt.pfm"
        write_pfm(gt, gt_path)
    mask_path = None
    if mask is not None:
        mask_path = directory / "mask.png"
        write_mask(mask_path, mask)
    return DatasetEntry(directory.name, paths, gt_path, mask_path)


# ---------------------------------------------------------------------------
# PFM

def read_pfm(path, allow_nan: bool = False) -> np.ndarray:
    """Read a single-channel PFM file; returns (H, W) float32, row 0 at top.

    Header is three tokens: ``Pf``, ``width height``, ``scale``; negative
    scale means little-endian floats.  Rows are stored bottom-up.
    """
    with open(path, "rb") as f:
        def token():
            t = b""
            c = f.read(1)
            while c and c.isspace():
                c = f.read(1)
            while c and not c.isspace():
                t += c
                c = f.read(1)
            if not t:
                raise FormatError(f"{path}: truncated PFM header")
            return t

        kind = token()
        if kind == b"PF":
            raise FormatError(f"{path}: color PFM not supported, single channel expected")
        if kind != b"Pf":
            raise FormatError(f"{path}: not a PFM file (header {kind!r})")
        try:
            w = int(token())
            h = int(token())
            scale = float(token())
        except ValueError as e:
            raise FormatError(f"{path}: malformed PFM header") from e
        if w <= 0 or h <= 0 or scale == 0.0:
            raise FormatError(f"{path}: invalid PFM dimensions or scale")
        endian = "<" if scale < 0 else ">"
        payload = f.read(4 * w * h)
        if len(payload) != 4 * w * h:
            raise FormatError(f"{path}: truncated PFM payload")
        data = np.frombuffer(payload, dtype=endian + "f4").reshape(h, w)
    data = data[::-1].copy()  # stored bottom-up
    if not allow_nan and not np.all(np.isfinite(data)):
        raise DataError(f"{path}: PFM contains non-finite values")
    return data


def write_pfm(data, path, scale: float = -1.0) -> None:
    """Write (H, W) float32 as PFM, bottom-up rows, default little-endian."""
    arr = data.data if isinstance(data, DisparityMap) else np.asarray(data)
    if arr.ndim != 2:
        raise DataError(f"PFM writer needs a 2D array, got shape {arr.shape}")
    if scale == 0.0:
        raise DataError("PFM scale must be nonzero")
    endian = "<" if scale < 0 else ">"
    arr = arr.astype(endian + "f4", copy=False)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(f"{scale:.6f}\n".encode("ascii"))
        f.write(arr[::-1].tobytes())


# ---------------------------------------------------------------------------
# parameter container

def save_params(path, tensors, config: dict | None = None) -> None:
    """Save named float32 arrays plus a config snapshot.

    ``tensors`` is an ordered mapping name -> array.  Layout: magic line,
    ASCII header length, JSON header (tensor table + config), then raw
    little-endian float32 blocks in table order.  Round trip is bit-exact.
    """
    table = []
    blocks = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        table.append({"name": name, "shape": list(arr.shape)})
        blocks.append(arr.tobytes())
    header = json.dumps({"config": config or {}, "tensors": table},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(PARAMS_MAGIC)
        f.write(f"{len(header)}\n".encode("ascii"))
        f.write(header)
        for b in blocks:
            f.write(b)


def load_params(path):
    """Load a parameter container; returns (config dict, {name: array})."""
    with open(path, "rb") as f:
        magic = f.read(len(PARAMS_MAGIC))
        if magic != PARAMS_MAGIC:
            raise FormatError(f"{path}: not a parameter container")
        line = f.readline()
        try:
            hlen = int(line)
        except ValueError as e:
            raise FormatError(f"{path}: malformed header length") from e
        raw = f.read(hlen)
        if len(raw) != hlen:
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: malformed header JSON") from e
        tensors = {}
        for item in header.get("tensors", []):
            shape = tuple(item["shape"])
            count = int(np.prod(shape)) if shape else 1
            payload = f.read(4 * count)
            if len(payload) != 4 * count:
                raise FormatError(f"{path}: truncated tensor {item['name']!r}")
            tensors[item["name"]] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return header.get("config", {}), tensors


# ---------------------------------------------------------------------------
# run configuration

def read_config(path) -> dict:
    """Parse a flat key-value config file (``key = value`` lines, ``#``
    comments).  Only documented keys are accepted."""
    cfg = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in CONFIG_KEYS:
                known = ", ".join(sorted(CONFIG_KEYS))
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r} (known: {known})")
            try:
                cfg[key] = CONFIG_KEYS[key](value)
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from e
    return cfg


def write_config(path, cfg: dict) -> None:
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    with open(path, "w", encoding="utf-8") as f:
        for key in CONFIG_KEYS:
            if key in cfg:
                f.write(f"{key} = {cfg[key]}\n")
