"""Training: Adam with step-halving learning rate, coupled L2 decay, random crops, checkpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numba
import numpy as np

from . import geotime, net
from . import ndgrad as nd
from .net import ConfigError, GeoTempModel, ModelConfig
from .synthworld import GeoTempDataset

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"GTFCKPT1"
CHECKPOINT_VERSION = 1


class DataError(ValueError):
    pass


class CheckpointError(RuntimeError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class TrainConfig:
    base_lr: float = 0.001
    halving_interval: int = 8000
    weight_decay: float = 0.0001
    batch_size: int = 32
    iterations: int = 20000
    crop: int = 28
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.base_lr <= 0 or self.halving_interval <= 0 or self.batch_size <= 0 or self.crop <= 0:
            raise ConfigError("base_lr, halving_interval, batch_size and crop must be positive")
        if self.weight_decay < 0 or self.iterations < 0 or self.checkpoint_every < 0:
            raise ConfigError("weight_decay, iterations and checkpoint_every must be non-negative")


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    return cfg.base_lr * 0.5 ** (iteration // cfg.halving_interval)


# ---------------------------------------------------------------------------
# Adam


# numpy error model: the divisor is always positive, and skipping the zero check lets the loop vectorize
@numba.njit(cache=True, error_model="numpy")
def _adam_kernel(p, g, m, v, step_size, b1, b2, eps_hat, wd):
    # bias corrections are folded into step_size and eps_hat by the caller
    one = p.dtype.type(1)
    for i in range(p.size):
        gi = g[i] + wd * p[i]
        mi = b1 * m[i] + (one - b1) * gi
        vi = b2 * v[i] + (one - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= step_size * mi / (np.sqrt(vi) + eps_hat)


def _corrected(lr: float, state: "AdamState") -> tuple[float, float]:
    """Adam bias correction as (step size, epsilon) at ``state.step``."""
    c1 = 1 - state.beta1**state.step
    c2 = 1 - state.beta2**state.step
    return lr * np.sqrt(c2) / c1, state.eps * np.sqrt(c2)


def decays(name: str) -> bool:
    """Weight decay applies to weight matrices and conv kernels only."""
    leaf = name.rsplit(".", 1)[-1]
    return leaf == "weight" or (leaf.startswith("conv") and not leaf.endswith("_bias"))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: list[np.ndarray], grads: list[np.ndarray | None], state: AdamState, lr: float,
              weight_decay: float, decay_mask: list[bool] | None = None) -> None:
    """In-place Adam update of contiguous ``params``.

    ``state.m``/``state.v`` are flat arrays laid out over all params in order.
    Decay is added to the gradient (``g + decay * theta``) for params whose
    mask entry is true; a ``None`` gradient counts as zero.
    """
    decay_mask = [True] * len(params) if decay_mask is None else decay_mask
    if len(grads) != len(params) or len(decay_mask) != len(params):
        raise nd.DimensionError(f"{len(params)} params but {len(grads)} grads / {len(decay_mask)} mask entries")
    if state.m.size != sum(p.size for p in params):
        raise nd.DimensionError(f"optimizer state has {state.m.size} slots for {sum(p.size for p in params)} values")
    state.step += 1
    step_size, eps_hat = _corrected(lr, state)
    off = 0
    for p, g, dm in zip(params, grads, decay_mask):
        if g is None:
            g = np.zeros_like(p)
        if p.shape != g.shape:
            raise nd.DimensionError(f"param shape {p.shape} != grad shape {g.shape}")
        if not p.flags.c_contiguous:
            raise ValueError("parameters must be C-contiguous")
        n = p.size
        dt = p.dtype.type
        _adam_kernel(p.reshape(-1), np.ascontiguousarray(g, dtype=p.dtype).reshape(-1), state.m[off : off + n],
                     state.v[off : off + n], dt(step_size), dt(state.beta1), dt(state.beta2), dt(eps_hat),
                     dt(weight_decay if dm else 0.0))
        off += n


class Adam:
    """Adam over every parameter of a model, moments stored flat in parameter order."""

    def __init__(self, model: GeoTempModel, cfg: TrainConfig):
        self.cfg = cfg
        named = list(model.named_parameters())
        self.names = [n for n, _ in named]
        self.params = [p for _, p in named]
        self.decay_mask = [decays(n) for n in self.names]
        total = sum(p.data.size for p in self.params)
        self.state = AdamState(np.zeros(total, dtype=model.dtype), np.zeros(total, dtype=model.dtype), 0,
                               cfg.beta1, cfg.beta2, cfg.eps)

    def step(self, lr: float) -> None:
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state, lr,
                  self.cfg.weight_decay, self.decay_mask)


# ---------------------------------------------------------------------------
# data


def augment(image: np.ndarray, crop: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``crop`` x ``crop`` window of a (C, H, W) image; values untouched."""
    _, H, W = image.shape
    if crop > H or crop > W:
        raise ConfigError(f"crop {crop} larger than image {H}x{W}")
    y = int(rng.integers(0, H - crop + 1))
    x = int(rng.integers(0, W - crop + 1))
    return image[:, y : y + crop, x : x + crop]


def crop_batch(images: np.ndarray, crop: int, rng: np.random.Generator) -> np.ndarray:
    B, C, H, W = images.shape
    if crop > H or crop > W:
        raise ConfigError(f"crop {crop} larger than image {H}x{W}")
    ys = rng.integers(0, H - crop + 1, size=B)
    xs = rng.integers(0, W - crop + 1, size=B)
    out = np.empty((B, C, crop, crop), dtype=images.dtype)
    for b in range(B):
        out[b] = images[b, :, ys[b] : ys[b] + crop, xs[b] : xs[b] + crop]
    return out


def center_crop(images: np.ndarray, crop: int) -> np.ndarray:
    H, W = images.shape[-2:]
    y, x = (H - crop) // 2, (W - crop) // 2
    return images[..., y : y + crop, x : x + crop]


def model_inputs(data: GeoTempDataset, idx: np.ndarray, dtype, crop: int | None = None,
                 rng: np.random.Generator | None = None) -> net.Batch:
    images = data.images[idx]
    if crop is not None:
        images = crop_batch(images, crop, rng) if rng is not None else center_crop(images, crop)
    tb = data.time_bins[idx]
    return net.Batch(
        images=np.ascontiguousarray(images, dtype=dtype),
        times=geotime.onehot_time_bins(tb, dtype),
        locations=geotime.latlon_to_ecef(data.lat[idx], data.lon[idx]).astype(dtype),
        time_bins=tb,
        loc_bins=data.loc_bins[idx],
    )


class BatchSchedule:
    """Counter-based batch order: epoch permutations and crop draws derive from (seed, counter)."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n, self.batch_size, self.seed = n, batch_size, seed
        self._epoch = -1
        self._perm: np.ndarray | None = None

    def _permutation(self, epoch: int) -> np.ndarray:
        if epoch != self._epoch:
            self._perm = np.random.default_rng([self.seed, 101, epoch]).permutation(self.n)
            self._epoch = epoch
        return self._perm

    def indices(self, iteration: int) -> np.ndarray:
        start = iteration * self.batch_size
        out = np.empty(self.batch_size, dtype=np.int64)
        for j in range(self.batch_size):
            pos = start + j
            out[j] = self._permutation(pos // self.n)[pos % self.n]
        return out

    def crop_rng(self, iteration: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, 202, iteration])


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    model: GeoTempModel
    losses: list[float]
    iteration: int
    optimizer: Adam
    seconds: float = 0.0
    head_losses: list[dict] = field(default_factory=list)


def train(model: GeoTempModel, data: GeoTempDataset, cfg: TrainConfig, *,
          optimizer: Adam | None = None, start_iteration: int = 0,
          checkpoint_path: str | os.PathLike | None = None,
          callback: Callable[[int, float], None] | None = None,
          log_every: int = 500) -> TrainResult:
    """Minimize the joint loss over shuffled mini-batches of ``data``.

    Resuming passes the optimizer and iteration restored from a checkpoint;
    batch order and crops depend only on (seed, iteration), so a resumed run
    follows the same trajectory as an uninterrupted one.
    """
    if len(data) == 0:
        raise DataError("training set is empty")
    opt = optimizer or Adam(model, cfg)
    sched = BatchSchedule(len(data), cfg.batch_size, cfg.seed)
    dtype = model.dtype
    crop = cfg.crop if cfg.crop < data.images.shape[-1] else None
    losses: list[float] = []
    t0 = time.perf_counter()
    it = start_iteration
    for it in range(start_iteration, cfg.iterations):
        idx = sched.indices(it)
        batch = model_inputs(data, idx, dtype, crop, sched.crop_rng(it))
        out = model.forward(batch.images, batch.times, batch.locations, train=True)
        loss = net.joint_loss(out, batch.time_bins, batch.loc_bins)
        nd.backward(loss)
        opt.step(lr_at(it, cfg))
        value = float(loss.data)
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        losses.append(value)
        if callback is not None:
            callback(it, value)
        if log_every and (it + 1) % log_every == 0:
            recent = np.mean(losses[-log_every:])
            log.info("iter %d  loss %.4f  lr %.2e  %.1fs", it + 1, recent, lr_at(it, cfg), time.perf_counter() - t0)
        if checkpoint_path and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, model, opt, it + 1, cfg)
    done = max(start_iteration, cfg.iterations)
    return TrainResult(model, losses, done, opt, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# checkpoints
#
# layout: 8-byte magic, u64 little-endian header length, UTF-8 JSON header,
# then raw little-endian tensor payloads in directory order.


def _tensor_table(model: GeoTempModel, opt: Adam | None) -> list[tuple[str, np.ndarray]]:
    table = [(f"param/{n}", p.data) for n, p in model.named_parameters()]
    for n, st in model.named_bn_states():
        table.append((f"bn/{n}/running_mean", st.running_mean))
        table.append((f"bn/{n}/running_var", st.running_var))
    if opt is not None:
        table.append(("adam/m", opt.state.m))
        table.append(("adam/v", opt.state.v))
    return table


def save_checkpoint(path: str | os.PathLike, model: GeoTempModel, opt: Adam | None = None, iteration: int = 0,
                    train_cfg: TrainConfig | None = None, storage: str = "exact", meta: dict | None = None) -> None:
    """Write a checkpoint; ``storage="float32"`` downcasts payloads (not bit-exact for float64 models)."""
    if storage not in ("exact", "float32"):
        raise ValueError(f"unknown storage {storage!r}")
    entries, payloads, offset = [], [], 0
    for name, arr in _tensor_table(model, opt):
        out = arr.astype(np.float32) if storage == "float32" else arr
        le = out.astype(out.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": le.dtype.str, "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    body = b"".join(payloads)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "train_config": asdict(train_cfg) if train_cfg else None,
        "iteration": iteration,
        "adam": None if opt is None else {"step": opt.state.step, "order": opt.names},
        "rng": {"kind": "counter", "seed": train_cfg.seed if train_cfg else None, "iteration": iteration},
        "storage": storage,
        "payload_sha256": hashlib.sha256(body).hexdigest(),
        "tensors": entries,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        fh.write(body)
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    model: GeoTempModel
    optimizer: Adam | None
    iteration: int
    train_config: TrainConfig | None
    header: dict


def read_checkpoint_header(path: str | os.PathLike) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic or truncated)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if 16 + hlen > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    body = raw[16 + hlen :]
    expected = sum(e["nbytes"] for e in header["tensors"])
    if len(body) != expected:
        raise CheckpointError(f"{path}: payload has {len(body)} bytes, header declares {expected}")
    if hashlib.sha256(body).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    return header, body


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    header, body = read_checkpoint_header(path)
    arrays = {}
    for e in header["tensors"]:
        a = np.frombuffer(body, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                          offset=e["offset"])
        arrays[e["name"]] = a.reshape(e["shape"])
    mcfg = ModelConfig(**header["model_config"])
    model = net.init_model(mcfg, seed=0)
    dtype = model.dtype
    for n, p in model.named_parameters():
        key = f"param/{n}"
        if key not in arrays or tuple(arrays[key].shape) != p.shape:
            raise CheckpointError(f"{path}: missing or misshaped tensor {key}")
        p.data = arrays[key].astype(dtype)
    for n, st in model.named_bn_states():
        st.running_mean = arrays[f"bn/{n}/running_mean"].astype(dtype)
        st.running_var = arrays[f"bn/{n}/running_var"].astype(dtype)
    tcfg = TrainConfig(**header["train_config"]) if header.get("train_config") else None
    opt = None
    if header.get("adam") is not None:
        opt = Adam(model, tcfg or TrainConfig())
        if opt.names != header["adam"]["order"]:
            raise CheckpointError(f"{path}: optimizer parameter order mismatch")
        opt.state.m[:] = arrays["adam/m"]
        opt.state.v[:] = arrays["adam/v"]
        opt.state.step = int(header["adam"]["step"])
    return Checkpoint(model, opt, int(header["iteration"]), tcfg, header)
