"""The three networks and their on-disk parameter format.

F maps an RGB image to per-class scores at input resolution through a
stride-2 encoder and a nearest-upsampling decoder. G maps pre-softmax
scores back to an RGB image in [0, 1]. D is a fully convolutional patch
discriminator: stacked stride-2 convolutions scoring overlapping image
patches, so its output grid grows with input size. D looks at images
only; it never sees score tensors.

All weights and biases initialize uniformly in +-1/sqrt(fan_in) from a
seeded generator, so two builds with the same seed are identical and two
seeds differ.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import fileio
from .diffcore import Tensor, conv2d, leaky_relu, sigmoid, upsample_nearest2x
from .errors import CheckpointError, ConfigurationError

LEAKY_SLOPE = 0.2

CHECKPOINT_MAGIC = b"SADPT1"
CHECKPOINT_VERSION = 1
_META_ITERATION = "__iteration__"
_META_DIGEST = "__config_digest__"


def _init_conv(rng, params, name, cout, cin, k):
    bound = 1.0 / np.sqrt(cin * k * k)
    params[name + ".w"] = Tensor(
        rng.uniform(-bound, bound, (cout, cin, k, k)).astype(np.float32), requires_grad=True)
    params[name + ".b"] = Tensor(
        rng.uniform(-bound, bound, cout).astype(np.float32), requires_grad=True)


def _conv(params, name, x, stride, padding):
    return conv2d(x, params[name + ".w"], params[name + ".b"], stride, padding)


@dataclass
class SegNetF:
    """Encoder-decoder segmentation network emitting [B, C, H, W] scores."""

    c_classes: int
    width: int
    depth: int
    params: dict[str, Tensor]

    def forward(self, x: Tensor) -> Tensor:
        b, c, h, w = x.shape
        factor = 2 ** self.depth
        if c != 3:
            raise ConfigurationError(f"segmentation input must have 3 channels, got {c}")
        if h % factor or w % factor:
            raise ConfigurationError(
                f"input {h}x{w} is not divisible by the encoder stride product {factor}")
        for i in range(self.depth):
            x = leaky_relu(_conv(self.params, f"enc{i}", x, 2, 1), LEAKY_SLOPE)
        for i in range(self.depth):
            x = upsample_nearest2x(x)
            x = leaky_relu(_conv(self.params, f"dec{i}", x, 1, 1), LEAKY_SLOPE)
        return _conv(self.params, "head", x, 1, 0)


@dataclass
class GeneratorG:
    """Reconstructs an RGB image in [0, 1] from pre-softmax class scores."""

    c_classes: int
    width: int
    params: dict[str, Tensor]

    def forward(self, scores: Tensor) -> Tensor:
        if scores.shape[1] != self.c_classes:
            raise ConfigurationError(
                f"generator expects {self.c_classes} score channels, got {scores.shape[1]}")
        x = leaky_relu(_conv(self.params, "g0", scores, 1, 1), LEAKY_SLOPE)
        x = leaky_relu(_conv(self.params, "g1", x, 1, 1), LEAKY_SLOPE)
        return sigmoid(_conv(self.params, "g2", x, 1, 1))


@dataclass
class DiscriminatorD:
    """Patch discriminator: raw per-patch scores on a coarse output grid."""

    width: int
    params: dict[str, Tensor]
    conv_specs = ((3, 2), (3, 2), (3, 2), (1, 1))

    def forward(self, image: Tensor) -> Tensor:
        if image.shape[1] != 3:
            raise ConfigurationError(
                f"discriminator judges RGB images, got {image.shape[1]} channels")
        x = image
        for i in range(3):
            x = leaky_relu(_conv(self.params, f"d{i}", x, 2, 1), LEAKY_SLOPE)
        return _conv(self.params, "patch", x, 1, 0)


def build_f(c_classes: int, width: int = 16, depth: int = 3, seed: int = 0) -> SegNetF:
    if c_classes < 2 or width < 1 or depth < 1:
        raise ConfigurationError(
            f"invalid segmentation net size: classes={c_classes} width={width} depth={depth}")
    rng = np.random.default_rng((seed, 0xF))
    params: dict[str, Tensor] = {}
    enc_out = [width * (2 ** i) for i in range(depth)]
    cin = 3
    for i, cout in enumerate(enc_out):
        _init_conv(rng, params, f"enc{i}", cout, cin, 3)
        cin = cout
    for i in range(depth):
        cout = max(width, cin // 2)
        _init_conv(rng, params, f"dec{i}", cout, cin, 3)
        cin = cout
    _init_conv(rng, params, "head", c_classes, cin, 1)
    return SegNetF(c_classes, width, depth, params)


def build_g(c_classes: int, width: int = 16, seed: int = 0) -> GeneratorG:
    if c_classes < 2 or width < 1:
        raise ConfigurationError(f"invalid generator size: classes={c_classes} width={width}")
    rng = np.random.default_rng((seed, 0x6))
    params: dict[str, Tensor] = {}
    _init_conv(rng, params, "g0", width, c_classes, 3)
    _init_conv(rng, params, "g1", width, width, 3)
    _init_conv(rng, params, "g2", 3, width, 3)
    return GeneratorG(c_classes, width, params)


def build_d(width: int = 16, seed: int = 0) -> DiscriminatorD:
    if width < 1:
        raise ConfigurationError(f"invalid discriminator width {width}")
    rng = np.random.default_rng((seed, 0xD))
    params: dict[str, Tensor] = {}
    cin = 3
    for i in range(3):
        cout = width * (2 ** i)
        _init_conv(rng, params, f"d{i}", cout, cin, 3)
        cin = cout
    _init_conv(rng, params, "patch", 1, cin, 1)
    return DiscriminatorD(width, params)


def receptive_field(net_or_specs) -> int:
    """Input pixels feeding one output cell of a stack of (kernel, stride)."""
    specs = getattr(net_or_specs, "conv_specs", net_or_specs)
    r, jump = 1, 1
    for k, s in specs:
        r += (k - 1) * jump
        jump *= s
    return r


# ------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    iteration: int
    config_digest: str


def _digest_to_array(digest: str) -> np.ndarray:
    return np.frombuffer(digest.encode("ascii"), dtype=np.uint8).astype(np.float32)


def _array_to_digest(arr: np.ndarray) -> str:
    return bytes(int(v) for v in arr).decode("ascii")


def save_checkpoint(params: dict[str, Tensor | np.ndarray], path: str,
                    iteration: int = 0, config_digest: str = "") -> None:
    """Serialize named float32 parameters plus run metadata, atomically."""
    entries: dict[str, np.ndarray] = {}
    for name, p in params.items():
        if name.startswith("__"):
            raise ConfigurationError(f"parameter name {name!r} collides with metadata entries")
        data = p.data if isinstance(p, Tensor) else np.asarray(p)
        entries[name] = data.astype(np.float32, copy=False)
    entries[_META_ITERATION] = np.asarray([float(iteration)], dtype=np.float32)
    entries[_META_DIGEST] = _digest_to_array(config_digest)

    chunks = [CHECKPOINT_MAGIC, struct.pack("<H", CHECKPOINT_VERSION),
              struct.pack("<I", len(entries))]
    for name, data in entries.items():
        encoded = name.encode("utf-8")
        shape = data.shape
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", len(shape)))
        chunks.append(struct.pack(f"<{len(shape)}I", *shape))
        chunks.append(data.astype("<f4", copy=False).tobytes())
    fileio.atomic_write_bytes(path, b"".join(chunks))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()

    view = memoryview(raw)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(len(CHECKPOINT_MAGIC))) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<H", take(2))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack("<I", take(4))

    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        n_values = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(take(4 * n_values), dtype="<f4").astype(np.float32)
        entries[name] = data.reshape(shape)
    if pos != len(view):
        raise CheckpointError(f"{path}: {len(view) - pos} trailing bytes after last entry")

    iteration = int(entries.pop(_META_ITERATION, np.zeros(1))[0])
    digest = _array_to_digest(entries.pop(_META_DIGEST, np.zeros(0)))
    return Checkpoint(entries, iteration, digest)


def load_params(params: dict[str, Tensor], state: dict[str, np.ndarray],
                prefix: str = "") -> None:
    """Copy checkpoint arrays into a model's parameter tensors."""
    for name, p in params.items():
        key = prefix + name
        if key not in state:
            raise CheckpointError(f"checkpoint is missing parameter {key!r}")
        arr = state[key]
        if arr.shape != p.data.shape:
            raise CheckpointError(
                f"parameter {key!r} has shape {arr.shape}, expected {p.data.shape}")
        p.data = arr.astype(np.float32, copy=True)


def f_from_state(state: dict[str, np.ndarray], prefix: str = "F.") -> SegNetF:
    """Rebuild the segmentation net whose architecture the shapes imply."""
    enc_keys = [k for k in state if k.startswith(prefix + "enc") and k.endswith(".w")]
    head_key = prefix + "head.w"
    if not enc_keys or head_key not in state:
        raise CheckpointError(f"checkpoint holds no segmentation net under prefix {prefix!r}")
    depth = len(enc_keys)
    width = int(state[prefix + "enc0.w"].shape[0])
    c_classes = int(state[head_key].shape[0])
    net = build_f(c_classes, width, depth, seed=0)
    load_params(net.params, state, prefix)
    return net
