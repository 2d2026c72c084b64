"""Context networks, estimator heads and the joint objective.

Three context networks map time (one-hot month x hour), location (unit
ECEF) and image to 128-d sigmoid features. Four estimator heads predict
location or time bins from the image feature alone or from the image feature
concatenated with the other modality's feature.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import geotime
from . import ndgrad as nd
from .ndgrad import Tensor


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    image_size: int = 28
    in_channels: int = 3
    trunk_widths: tuple[int, ...] = (8, 16, 32)
    kernel_size: int = 3
    pool: int = 2
    hidden_widths: tuple[int, int] = (256, 512)
    feature_dim: int = 128
    dtype: str = "float64"
    trunk_batch_norm: bool = True

    def __post_init__(self):
        self.trunk_widths = tuple(int(w) for w in self.trunk_widths)
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if len(self.hidden_widths) != 2 or min(self.hidden_widths) < 1:
            raise ConfigError(f"hidden_widths must be two positive ints, got {self.hidden_widths}")
        if not self.trunk_widths or min(self.trunk_widths) < 1:
            raise ConfigError(f"trunk_widths must be positive, got {self.trunk_widths}")
        if self.feature_dim < 1 or self.in_channels < 1:
            raise ConfigError("feature_dim and in_channels must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.trunk_output_hw() < 1:
            raise ConfigError(f"image_size {self.image_size} too small for {len(self.trunk_widths)} conv blocks")

    def trunk_output_hw(self) -> int:
        hw = self.image_size
        for i in range(len(self.trunk_widths)):
            hw = hw - self.kernel_size + 1
            if i < len(self.trunk_widths) - 1:
                hw //= self.pool
        return hw

    @property
    def trunk_dim(self) -> int:
        return self.trunk_widths[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trunk_widths"] = list(self.trunk_widths)
        d["hidden_widths"] = list(self.hidden_widths)
        return d


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Minimal parameter container: named parameters and batch-norm buffers."""

    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for i, m in enumerate(value):
                    yield f"{name}{i}", m

    def _own_params(self) -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._own_params():
            yield prefix + name, p
        for name, child in self.named_children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_bn_states(self, prefix: str = "") -> Iterator[tuple[str, nd.BatchNormState]]:
        for name, value in vars(self).items():
            if isinstance(value, nd.BatchNormState):
                yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_bn_states(f"{prefix}{name}.")


class Affine(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype):
        self.weight = Tensor(xavier_uniform(rng, n_in, n_out, (n_in, n_out), dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return nd.linear(x, self.weight, self.bias)


class BatchNorm(Module):
    def __init__(self, channels: int, dtype):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.state = nd.BatchNormState(channels, dtype=dtype)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return nd.batch_norm(x, self.gamma, self.beta, self.state, train)


class FcStack(Module):
    """affine-BN-ReLU, affine-BN-ReLU, affine (+ optional sigmoid)."""

    def __init__(self, n_in: int, widths: tuple[int, int], n_out: int, rng, dtype, sigmoid_out: bool):
        w1, w2 = widths
        self.fc0 = Affine(n_in, w1, rng, dtype)
        self.bn0 = BatchNorm(w1, dtype)
        self.fc1 = Affine(w1, w2, rng, dtype)
        self.bn1 = BatchNorm(w2, dtype)
        self.fc2 = Affine(w2, n_out, rng, dtype)
        self.sigmoid_out = sigmoid_out

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        h = nd.relu(self.bn0(self.fc0(x), train))
        h = nd.relu(self.bn1(self.fc1(h), train))
        out = self.fc2(h)
        return nd.sigmoid(out) if self.sigmoid_out else out


class ConvTrunk(Module):
    """conv/BN/ReLU/maxpool blocks ending in conv/BN/ReLU and global average pooling."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype):
        self.pool = cfg.pool
        c_in, k = cfg.in_channels, cfg.kernel_size
        for i, c_out in enumerate(cfg.trunk_widths):
            # He-uniform for the ReLU trunk
            bound = np.sqrt(6.0 / (c_in * k * k))
            w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(dtype)
            setattr(self, f"conv{i}", Tensor(w, requires_grad=True))
            setattr(self, f"conv{i}_bias", Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True))
            if cfg.trunk_batch_norm:
                setattr(self, f"bn{i}", BatchNorm(c_out, dtype))
            c_in = c_out
        self.depth = len(cfg.trunk_widths)
        self.batch_norm = cfg.trunk_batch_norm

    def __call__(self, images: Tensor, train: bool = False) -> Tensor:
        h = images
        for i in range(self.depth):
            h = nd.conv2d(h, getattr(self, f"conv{i}"), getattr(self, f"conv{i}_bias"))
            if self.batch_norm:
                h = getattr(self, f"bn{i}")(h, train)
            h = nd.relu(h)
            if i < self.depth - 1:
                h = nd.maxpool2d(h, self.pool)
        return nd.global_avg_pool(h)


class ImageEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype):
        self.trunk = ConvTrunk(cfg, rng, dtype)
        self.head = FcStack(cfg.trunk_dim, cfg.hidden_widths, cfg.feature_dim, rng, dtype, sigmoid_out=True)

    def __call__(self, images: Tensor, train: bool) -> Tensor:
        return self.head(self.trunk(images, train), train)


class ForwardOutputs(NamedTuple):
    image_feature: Tensor
    time_feature: Tensor
    location_feature: Tensor
    loc_logits: Tensor
    time_logits: Tensor
    loc_given_time_logits: Tensor
    time_given_loc_logits: Tensor


HEADS = ("loc", "time", "loc_given_time", "time_given_loc")


class GeoTempModel(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.config = cfg
        dt = np.dtype(cfg.dtype)
        D, hw = cfg.feature_dim, cfg.hidden_widths
        self.time_net = FcStack(geotime.TIME_BINS, hw, D, rng, dt, sigmoid_out=True)
        self.location_net = FcStack(3, hw, D, rng, dt, sigmoid_out=True)
        self.image_net = ImageEncoder(cfg, rng, dt)
        self.loc_head = FcStack(D, hw, geotime.LOC_BINS, rng, dt, sigmoid_out=False)
        self.time_head = FcStack(D, hw, geotime.TIME_BINS, rng, dt, sigmoid_out=False)
        self.loc_given_time_head = FcStack(2 * D, hw, geotime.LOC_BINS, rng, dt, sigmoid_out=False)
        self.time_given_loc_head = FcStack(2 * D, hw, geotime.TIME_BINS, rng, dt, sigmoid_out=False)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.config.dtype)

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def bn_states(self) -> dict[str, nd.BatchNormState]:
        return dict(self.named_bn_states())

    def _check(self, images: Tensor, times: Tensor, locations: Tensor):
        B = images.shape[0]
        if images.data.ndim != 4 or images.shape[1] != self.config.in_channels:
            raise nd.DimensionError(f"images must be (B, {self.config.in_channels}, H, W), got {images.shape}")
        if times.shape != (B, geotime.TIME_BINS):
            raise nd.DimensionError(f"times must be ({B}, {geotime.TIME_BINS}), got {times.shape}")
        if locations.shape != (B, 3):
            raise nd.DimensionError(f"locations must be ({B}, 3), got {locations.shape}")

    def forward(self, images, times, locations, train: bool = True) -> ForwardOutputs:
        images, times, locations = (self._cast(x) for x in (images, times, locations))
        self._check(images, times, locations)
        f_img = self.image_net(images, train)
        f_time = self.time_net(times, train)
        f_loc = self.location_net(locations, train)
        return ForwardOutputs(
            f_img,
            f_time,
            f_loc,
            self.loc_head(f_img, train),
            self.time_head(f_img, train),
            self.loc_given_time_head(nd.concat([f_img, f_time]), train),
            self.time_given_loc_head(nd.concat([f_img, f_loc]), train),
        )

    __call__ = forward

    def _cast(self, x) -> Tensor:
        if isinstance(x, Tensor):
            return x
        return Tensor(np.asarray(x, dtype=self.dtype))

    def image_feature(self, images, train: bool = False) -> Tensor:
        return self.image_net(self._cast(images), train)

    def location_feature(self, locations, train: bool = False) -> Tensor:
        return self.location_net(self._cast(locations), train)

    def time_feature(self, times, train: bool = False) -> Tensor:
        return self.time_net(self._cast(times), train)

    def trunk_feature(self, images) -> np.ndarray:
        """Global-average-pooled conv feature (B, trunk_dim); no batch norm involved."""
        return self.image_net.trunk(self._cast(images)).data


def init_model(cfg: ModelConfig | None = None, seed: int = 0) -> GeoTempModel:
    return GeoTempModel(cfg or ModelConfig(), np.random.default_rng(seed))


def head_losses(out: ForwardOutputs, true_time_bin, true_loc_bin) -> dict[str, Tensor]:
    return {
        "loc": nd.softmax_cross_entropy(out.loc_logits, true_loc_bin),
        "time": nd.softmax_cross_entropy(out.time_logits, true_time_bin),
        "loc_given_time": nd.softmax_cross_entropy(out.loc_given_time_logits, true_loc_bin),
        "time_given_loc": nd.softmax_cross_entropy(out.time_given_loc_logits, true_time_bin),
    }


def joint_loss(out: ForwardOutputs, true_time_bin, true_loc_bin) -> Tensor:
    """Unweighted sum of the four estimator cross-entropies (batch means)."""
    parts = head_losses(out, true_time_bin, true_loc_bin)
    total = parts["loc"]
    for name in HEADS[1:]:
        total = total + parts[name]
    return total


def uniform_joint_loss() -> float:
    return 2 * np.log(geotime.TIME_BINS) + 2 * np.log(geotime.LOC_BINS)


@dataclass
class Batch:
    """Model-ready arrays for one mini-batch."""

    images: np.ndarray
    times: np.ndarray
    locations: np.ndarray
    time_bins: np.ndarray
    loc_bins: np.ndarray
    extra: dict = field(default_factory=dict)
