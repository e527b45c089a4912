"""DenseNet feature extractor producing the annotation grid the decoder attends over."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .nn import BatchNorm2d, Conv2d, Module
from .tensor import ConfigurationError, Tensor


@dataclass(frozen=True)
class EncoderConfig:
    init_channels: int = 48
    growth_rate: int = 96
    block_depth: int = 4
    n_blocks: int = 3
    compression: float = 0.5
    bottleneck_width: int | None = None  # defaults to 4 * growth_rate

    def __post_init__(self):
        for name in ("init_channels", "growth_rate", "block_depth", "n_blocks"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"encoder {name} must be positive")
        if not 0.0 < self.compression <= 1.0:
            raise ConfigurationError("compression must lie in (0, 1]")
        if self.bottleneck_width is not None and self.bottleneck_width < 1:
            raise ConfigurationError("bottleneck_width must be positive")

    @property
    def bottleneck(self) -> int:
        return self.bottleneck_width or 4 * self.growth_rate

    @property
    def downsample(self) -> int:
        """Total spatial reduction: the stem max-pool plus one pool per transition."""
        return 2**self.n_blocks

    @classmethod
    def desk(cls) -> EncoderConfig:
        return cls(init_channels=24, growth_rate=24, block_depth=4)

    @classmethod
    def toy(cls) -> EncoderConfig:
        return cls(init_channels=6, growth_rate=4, block_depth=2)

    def to_dict(self) -> dict:
        return asdict(self)


def channel_trace(cfg: EncoderConfig) -> list[int]:
    """Channel count after the stem, then after every block and transition."""
    c = cfg.init_channels
    trace = [c]
    for b in range(cfg.n_blocks):
        c += cfg.block_depth * cfg.growth_rate
        trace.append(c)
        if b < cfg.n_blocks - 1:
            c = math.floor(c * cfg.compression)
            trace.append(c)
    return trace


@dataclass
class AnnotationGrid:
    """Encoder output flattened to L = height * width annotation vectors per image.

    ``mask[n, j]`` is True where position ``j`` of image ``n`` comes only from
    batch padding; those positions receive zero attention.
    """

    vectors: Tensor  # N x L x C
    mask: np.ndarray  # N x L, bool
    height: int
    width: int

    @property
    def channels(self) -> int:
        return self.vectors.shape[2]

    @property
    def length(self) -> int:
        return self.height * self.width

    @property
    def batch(self) -> int:
        return self.vectors.shape[0]

    def select(self, n: int) -> AnnotationGrid:
        return AnnotationGrid(self.vectors[n : n + 1], self.mask[n : n + 1], self.height, self.width)


def valid_columns(width: int, halvings: int) -> int:
    """Columns of the final grid that see at least one unpadded input column."""
    for _ in range(halvings):
        width = -(-width // 2)
    return width


def flatten_annotations(featuremap: Tensor, valid_widths=None, halvings: int = 3) -> AnnotationGrid:
    n, c, h, w = featuremap.shape
    vectors = T.reshape(T.transpose(featuremap, (0, 2, 3, 1)), (n, h * w, c))
    mask = np.zeros((n, h, w), dtype=bool)
    if valid_widths is not None:
        for i, vw in enumerate(valid_widths):
            mask[i, :, valid_columns(int(vw), halvings) :] = True
    return AnnotationGrid(vectors, mask.reshape(n, h * w), h, w)


class DenseLayer(Module):
    """BN -> ReLU -> 1x1 bottleneck -> BN -> ReLU -> 3x3 conv, emitting ``growth_rate`` maps."""

    def __init__(self, in_ch: int, cfg: EncoderConfig, rng):
        super().__init__()
        self.bn1 = BatchNorm2d(in_ch)
        self.conv1 = Conv2d(in_ch, cfg.bottleneck, 1, rng)
        self.bn3 = BatchNorm2d(cfg.bottleneck)
        self.conv3 = Conv2d(cfg.bottleneck, cfg.growth_rate, 3, rng, padding=1)

    def __call__(self, x: Tensor) -> Tensor:
        y = self.conv1(T.relu(self.bn1(x)))
        return self.conv3(T.relu(self.bn3(y)))


class DenseBlock(Module):
    def __init__(self, in_ch: int, cfg: EncoderConfig, rng):
        super().__init__()
        self.depth = cfg.block_depth
        for i in range(cfg.block_depth):
            setattr(self, f"layer{i}", DenseLayer(in_ch + i * cfg.growth_rate, cfg, rng))

    def __call__(self, x: Tensor) -> Tensor:
        features = [x]
        for i in range(self.depth):
            layer = getattr(self, f"layer{i}")
            features.append(layer(T.concat(features, axis=1) if len(features) > 1 else x))
        return T.concat(features, axis=1)


class Transition(Module):
    def __init__(self, in_ch: int, out_ch: int, rng):
        super().__init__()
        self.bn = BatchNorm2d(in_ch)
        self.conv = Conv2d(in_ch, out_ch, 1, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return T.avgpool2d(self.conv(T.relu(self.bn(x))))


class DenseNetEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        trace = channel_trace(cfg)
        self.stem = Conv2d(1, cfg.init_channels, 3, rng, padding=1)
        c = cfg.init_channels
        for b in range(1, cfg.n_blocks + 1):
            setattr(self, f"block{b}", DenseBlock(c, cfg, rng))
            c += cfg.block_depth * cfg.growth_rate
            if b < cfg.n_blocks:
                out = math.floor(c * cfg.compression)
                setattr(self, f"trans{b}", Transition(c, out, rng))
                c = out
        assert c == trace[-1]
        self.out_channels = c

    def features(self, images: Tensor) -> Tensor:
        """Raw N x C x H/2^n x W/2^n feature map."""
        if images.ndim != 4 or images.shape[1] != 1:
            raise ConfigurationError(f"encoder expects N x 1 x H x W images, got {images.shape}")
        f = self.cfg.downsample
        h, w = images.shape[2:]
        if h % f or w % f:
            raise ConfigurationError(f"image extents {h}x{w} must be divisible by {f}")
        x = T.maxpool2d(self.stem(images))
        for b in range(1, self.cfg.n_blocks + 1):
            x = getattr(self, f"block{b}")(x)
            if b < self.cfg.n_blocks:
                x = getattr(self, f"trans{b}")(x)
        return x

    def __call__(self, images: Tensor, valid_widths=None) -> AnnotationGrid:
        return flatten_annotations(self.features(images), valid_widths, halvings=self.cfg.n_blocks)
