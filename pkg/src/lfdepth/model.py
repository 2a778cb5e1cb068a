"""The multi-stream disparity network: architecture, training loop,
full-image inference, and the orientation ensemble.

One stream per view-stack direction, each three 'Conv-ReLU-Conv-BN-ReLU'
blocks of 2x2 valid convolutions; streams concatenate (order H, V, LD,
RD) into a merge tower of seven more such blocks plus a final
'Conv-ReLU-Conv' head that regresses one channel with no BN or ReLU
tail, keeping the output a signed sub-pixel disparity.  22 convolutions
each shrinking the map by one pixel give a 23x23 receptive field, so a
23x23 patch maps to exactly one prediction and any H x W input to
(H-22) x (W-22).
"""

from dataclasses import dataclass, replace

import numpy as np

from .augment import invert_orientation, permuted_stacks
from .exceptions import ConfigError, DataError
from .io import load_params, save_params
from .lightfield import Direction, DisparityMap, LightField, STREAM_ORDER, extract_stacks
from .nn import BatchNorm, Conv2x2, ReLU, RmsProp, concat_channels, mae_loss, split_channels
from .nn.optim import schedule_lr

_STREAM_SETS = {
    1: (Direction.HORIZONTAL,),
    2: (Direction.HORIZONTAL, Direction.VERTICAL),
    4: STREAM_ORDER,
}


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyperparameters.

    The default widths (70 per stream, 280 merged) land near the
    reference 5.1M parameter budget; the desk profile (16/64) is for
    CPU-scale experiments and CI.
    """

    n_streams: int = 4
    views_per_stack: int = 7
    stream_blocks: int = 3
    merge_blocks: int = 8  # last one is the Conv-ReLU-Conv head
    stream_width: int = 70
    merge_width: int = 280
    patch: int = 23
    disparity_range: float = 4.0

    def __post_init__(self):
        if self.n_streams not in _STREAM_SETS:
            raise ConfigError(f"n_streams must be 1, 2 or 4, got {self.n_streams}")
        if self.views_per_stack < 3 or self.views_per_stack % 2 == 0:
            raise ConfigError(
                f"views_per_stack must be odd >= 3, got {self.views_per_stack}")
        if self.merge_width != self.n_streams * self.stream_width:
            raise ConfigError(
                f"merge_width must be n_streams * stream_width "
                f"({self.n_streams} * {self.stream_width}), got {self.merge_width}")
        if self.stream_blocks < 1 or self.merge_blocks < 2:
            raise ConfigError("need >= 1 stream block and >= 2 merge blocks")
        if self.patch != self.shrink + 1:
            raise ConfigError(
                f"patch must equal 2*(stream_blocks+merge_blocks)+1 = "
                f"{self.shrink + 1}, got {self.patch}")

    @property
    def shrink(self) -> int:
        """Total spatial shrink: one pixel per convolution."""
        return 2 * (self.stream_blocks + self.merge_blocks)

    @property
    def directions(self) -> tuple:
        return _STREAM_SETS[self.n_streams]

    def to_dict(self) -> dict:
        return {
            "n_streams": self.n_streams,
            "views_per_stack": self.views_per_stack,
            "stream_blocks": self.stream_blocks,
            "merge_blocks": self.merge_blocks,
            "stream_width": self.stream_width,
            "merge_width": self.merge_width,
            "patch": self.patch,
            "disparity_range": self.disparity_range,
        }


DESK_CONFIG = NetConfig(stream_width=16, merge_width=64)

HEAD_INIT_SCALE = 0.01  # final conv init damping, see DepthNet.__init__


def _block(in_ch, width, rng):
    # inplace ReLU is safe here: each one consumes a conv/BN output that
    # has no other reader
    return [Conv2x2(in_ch, width, rng), ReLU(inplace=True),
            Conv2x2(width, width, rng), BatchNorm(width), ReLU(inplace=True)]


class DepthNet:
    """Network instance: layers plus a stable parameter naming scheme."""

    def __init__(self, config: NetConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
        v = config.views_per_stack
        s = config.stream_width
        m = config.merge_width
        self.streams = []
        for _ in config.directions:
            chain = []
            in_ch = v
            for _ in range(config.stream_blocks):
                chain.extend(_block(in_ch, s, rng))
                in_ch = s
            chain[0].skip_input_grad = True
            self.streams.append(chain)
        self.merge = []
        in_ch = m
        for _ in range(config.merge_blocks - 1):
            self.merge.extend(_block(in_ch, m, rng))
        self.head = [Conv2x2(m, m, rng), ReLU(inplace=True), Conv2x2(m, 1, rng)]
        # regression head starts near zero output so short training runs
        # fit the disparity signal instead of unlearning init noise; the
        # RMSprop normalizer makes upstream step sizes scale-invariant
        self.head[-1].w *= HEAD_INIT_SCALE
        self._dir_index = [STREAM_ORDER.index(d) for d in config.directions]

    # -- naming ------------------------------------------------------------

    def _named_layers(self):
        for si, chain in enumerate(self.streams):
            for li, layer in enumerate(chain):
                yield f"stream{si}.layer{li}", layer
        for li, layer in enumerate(self.merge):
            yield f"merge.layer{li}", layer
        for li, layer in enumerate(self.head):
            yield f"head.layer{li}", layer

    def params(self):
        """Stable-order (name, param, grad) triples of learnable arrays."""
        out = []
        for prefix, layer in self._named_layers():
            for pname, p, g in layer.params():
                out.append((f"{prefix}.{pname}", p, g))
        return out

    def named_state(self) -> dict:
        """All persistent arrays: parameters plus BN running statistics."""
        state = {}
        for prefix, layer in self._named_layers():
            for pname, p, _ in layer.params():
                state[f"{prefix}.{pname}"] = p
            if isinstance(layer, BatchNorm):
                state[f"{prefix}.running_mean"] = layer.running_mean
                state[f"{prefix}.running_var"] = layer.running_var
        return state

    def load_state(self, tensors: dict) -> None:
        expected = self.named_state()
        for name, target in expected.items():
            if name not in tensors:
                raise ConfigError(f"parameter container missing tensor {name!r}")
            src = tensors[name]
            if tuple(src.shape) != tuple(target.shape):
                raise ConfigError(
                    f"shape mismatch at {name!r}: expected {tuple(target.shape)}, "
                    f"got {tuple(src.shape)}")
            target[:] = src

    # -- forward / backward ------------------------------------------------

    def _run(self, chain, x, train, exact):
        for layer in chain:
            x = layer.forward_exact(x) if exact else layer.forward(x, train=train)
        return x

    def forward(self, stacks, train: bool = False, exact: bool = False):
        """Forward pass on a (B, 4, views, H, W) stack batch.

        The four stack slots always follow STREAM_ORDER (H, V, LD, RD);
        narrower configurations read the slots they use.  Returns
        (B, 1, H - shrink, W - shrink).
        """
        stacks = np.asarray(stacks)
        if stacks.ndim != 5 or stacks.shape[1] != len(STREAM_ORDER):
            raise DataError(
                f"stack batch must be (B, 4, views, H, W), got {stacks.shape}")
        if stacks.shape[2] != self.config.views_per_stack:
            raise DataError(
                f"expected {self.config.views_per_stack} views per stack, "
                f"got {stacks.shape[2]}")
        if min(stacks.shape[3], stacks.shape[4]) < self.config.patch:
            raise DataError(
                f"spatial dims {stacks.shape[3:]} smaller than the "
                f"{self.config.patch}x{self.config.patch} receptive field")
        feats = []
        for chain, di in zip(self.streams, self._dir_index):
            x = np.ascontiguousarray(stacks[:, di])
            feats.append(self._run(chain, x, train, exact))
        x = concat_channels(feats)
        x = self._run(self.merge, x, train, exact)
        return self._run(self.head, x, train, exact)

    def backward(self, dloss) -> None:
        """Backpropagate from the loss gradient; parameter gradients land
        on the layers."""
        g = dloss
        for layer in reversed(self.head):
            g = layer.backward(g)
        for layer in reversed(self.merge):
            g = layer.backward(g)
        parts = split_channels(
            g, [self.config.stream_width] * len(self.streams))
        for chain, gi in zip(self.streams, parts):
            gg = np.ascontiguousarray(gi)
            for layer in reversed(chain):
                gg = layer.backward(gg)


def build(config: NetConfig, seed: int = 0) -> DepthNet:
    return DepthNet(config, seed=seed)


# ---------------------------------------------------------------------------
# parameter accounting

def param_count(net: DepthNet) -> int:
    return sum(p.size for _, p, _ in net.params())


def closed_form_param_count(config: NetConfig) -> int:
    """Layer-shape sum computed without instantiating the network."""
    v = config.views_per_stack
    s = config.stream_width
    m = config.merge_width

    def conv(cin, cout):
        return cout * (4 * cin + 1)

    stream = conv(v, s) + conv(s, s) + 2 * s
    stream += (config.stream_blocks - 1) * (2 * conv(s, s) + 2 * s)
    total = config.n_streams * stream
    total += (config.merge_blocks - 1) * (2 * conv(m, m) + 2 * m)
    total += conv(m, m) + conv(m, 1)
    return total


def equal_param_config(base: NetConfig, n_streams: int) -> NetConfig:
    """Solve the stream width so an n_streams variant matches ``base``'s
    parameter count to within 2%, mirroring the equal-budget ablation."""
    target = closed_form_param_count(base)
    best = None
    for s in range(1, 4096):
        cand = replace(base, n_streams=n_streams, stream_width=s,
                       merge_width=n_streams * s)
        diff = abs(closed_form_param_count(cand) - target)
        if best is None or diff < best[0]:
            best = (diff, cand)
    diff, cand = best
    if diff / target > 0.02:
        raise ConfigError(
            f"no {n_streams}-stream width within 2% of {target} parameters")
    return cand


# ---------------------------------------------------------------------------
# training

def train_model(net: DepthNet, stacks, targets, iters: int,
                batch_size: int = 16, lr: float = 1e-5, seed: int = 0,
                log_every: int = 100):
    """MAE/RMSprop training on a fixed patch pool.

    ``stacks`` is (N, 4, views, patch, patch) float32, ``targets`` (N,).
    Batches are drawn uniformly with replacement from the pool; the
    learning rate drops to a tenth at 80% of the run.  Deterministic
    under (seed, pool) in single-threaded mode.  Returns the loss curve
    as a list of (iteration, batch_loss).
    """
    stacks = np.asarray(stacks, dtype=np.float32)
    targets = np.asarray(targets, dtype=np.float32)
    if len(stacks) == 0:
        raise DataError("empty training pool")
    if len(stacks) != len(targets):
        raise DataError("stacks and targets disagree in length")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    opt = RmsProp(net.params(), lr=lr)
    curve = []
    for it in range(iters):
        idx = rng.integers(0, len(stacks), size=batch_size)
        xb = stacks[idx]
        yb = targets[idx].reshape(-1, 1, 1, 1)
        pred = net.forward(xb, train=True)
        loss, dloss = mae_loss(pred, yb)
        net.backward(dloss)
        opt.lr = schedule_lr(it, iters, base_lr=lr)
        opt.step()
        if it % log_every == 0 or it == iters - 1:
            curve.append((it, loss))
    return curve


# ---------------------------------------------------------------------------
# inference

@dataclass(frozen=True)
class InferenceResult:
    disparity: DisparityMap
    mode: str
    border: int  # crop: pixels removed per side; reflect: extrapolated margin


def stacks_to_batch(stacks: dict, pad: int = 0) -> np.ndarray:
    """Arrange a direction->ViewStack dict as a (1, 4, V, H, W) batch in
    STREAM_ORDER, optionally reflect-padded spatially."""
    arrs = []
    for d in STREAM_ORDER:
        a = stacks[d].views.astype(np.float32, copy=False)
        if pad:
            a = np.pad(a, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
        arrs.append(a)
    return np.stack(arrs)[None]

def infer_full(net: DepthNet, lf: LightField, pad: str = "crop",
               deterministic: bool = False) -> InferenceResult:
    """Fully convolutional whole-image inference.

    crop mode: the output is (H - shrink) x (W - shrink) and the
    metadata records the shrink/2 undefined border.  reflect mode:
    views are reflect-padded by shrink/2 first, so the output matches
    the input size (border pixels rest on reflected content).
    ``deterministic=True`` routes convolutions through the fixed-order
    accumulation path, making tiled and whole-image inference bitwise
    identical.
    """
    if pad not in ("crop", "reflect"):
        raise DataError(f"pad must be 'crop' or 'reflect', got {pad!r}")
    cfg = net.config
    if 2 * lf.angular_extent + 1 != cfg.views_per_stack:
        raise DataError(
            f"light field has {2 * lf.angular_extent + 1} views per stack, "
            f"model wants {cfg.views_per_stack}")
    border = cfg.shrink // 2
    margin = border if pad == "reflect" else 0
    if min(lf.height, lf.width) < cfg.patch and pad == "crop":
        raise DataError(
            f"spatial dims {lf.height}x{lf.width} below patch size {cfg.patch}")
    batch = stacks_to_batch(extract_stacks(lf), pad=margin)
    out = net.forward(batch, train=False, exact=deterministic)
    pred = out[0, 0]
    return InferenceResult(DisparityMap(pred, disparity_range=None), pad, border)


@dataclass(frozen=True)
class EnsembleResult:
    disparity: DisparityMap
    variance: np.ndarray  # per-pixel variance across the 8 variants


ALL_VARIANTS = tuple((r, f) for r in (0, 90, 180, 270) for f in (False, True))


def infer_ensemble(net: DepthNet, lf: LightField, pad: str = "reflect",
                   deterministic: bool = False,
                   variants=ALL_VARIANTS) -> EnsembleResult:
    """Average of orientation variants (4 rotations x optional flip).

    Each variant permutes the stacks exactly as the corresponding
    light-field transform would, infers, then maps the prediction back
    (inverse rotation, unflip, and sign negation for flipped variants).
    ``variants`` is a sequence of (rotation_degrees, flip) pairs; the
    default runs all 8.  A single identity variant reduces to
    ``infer_full``.
    """
    if lf.height != lf.width:
        raise DataError("orientation ensemble needs square spatial dims")
    variants = tuple(variants)
    if not variants:
        raise DataError("ensemble needs at least one orientation variant")
    base = extract_stacks(lf)
    preds = []
    for rotation, flip in variants:
        stacks = permuted_stacks(base, rotation, flip)
        batch = stacks_to_batch(
            stacks, pad=net.config.shrink // 2 if pad == "reflect" else 0)
        out = net.forward(batch, train=False, exact=deterministic)[0, 0]
        preds.append(invert_orientation(out, rotation, flip))
    arr = np.stack(preds)
    mean = arr.mean(axis=0)
    var = arr.var(axis=0)
    return EnsembleResult(DisparityMap(mean, disparity_range=None), var)


# ---------------------------------------------------------------------------
# persistence

def save_model(net: DepthNet, path) -> None:
    save_params(path, net.named_state(), config=net.config.to_dict())


def load_model(path) -> DepthNet:
    cfg_dict, tensors = load_params(path)
    try:
        config = NetConfig(**cfg_dict)
    except TypeError as e:
        raise ConfigError(f"{path}: bad architecture config: {e}") from e
    net = DepthNet(config, seed=0)
    net.load_state(tensors)
    return net
