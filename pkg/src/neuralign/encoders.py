"""Per-modality encoders: a per-subject affine alignment stage followed by a
shared feed-forward network mapping aligned features into the image-embedding
space.

An encoder for one modality owns one alignment affine per subject plus the
shared layer stack; every subject of a modality lands in the same embedding
space of dimension ``embed_dim``. Parameters live in a flat, ordered
name -> array dict so the optimizer and checkpoints can treat them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import kernel
from .errors import ConfigError, DimensionError

FLAT_MODALITIES = ("fmri",)
SEQUENCE_MODALITIES = ("eeg", "meg")


@dataclass(frozen=True)
class ModalityKind:
    """A recording modality plus the native per-sample feature shape.

    Flat modalities (fmri) carry a 1-axis feature vector; sequence modalities
    (eeg, meg) carry a channels x time array.
    """

    name: str
    native_shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "native_shape", tuple(int(d) for d in self.native_shape))
        if self.name not in FLAT_MODALITIES + SEQUENCE_MODALITIES:
            raise ConfigError(f"unknown modality {self.name!r}")
        if any(d <= 0 for d in self.native_shape):
            raise ConfigError(f"native shape {self.native_shape} has non-positive dims")
        want = 1 if self.name in FLAT_MODALITIES else 2
        if len(self.native_shape) != want:
            raise ConfigError(
                f"{self.name} expects a {want}-axis native shape, got {self.native_shape}")

    @property
    def is_flat(self) -> bool:
        return self.name in FLAT_MODALITIES


# ---------------------------------------------------------------------------
# shared-network layer specs


@dataclass(frozen=True)
class Linear:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Conv1d:
    in_channels: int
    out_channels: int
    width: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class Activation:
    mode: str = "gelu"


@dataclass(frozen=True)
class Pool1d:
    window: int
    mode: str = "mean"


@dataclass(frozen=True)
class GlobalMeanPool:
    """Mean over the remaining time axis, collapsing (B,C,T) to (B,C)."""


LayerSpec = Union[Linear, Conv1d, Activation, Pool1d, GlobalMeanPool]


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of one modality encoder.

    ``align_out`` is the common-space width the per-subject alignment maps
    into: a flat width for fmri, a channel count (shared across time steps)
    for eeg/meg. ``layers`` is the shared network applied after alignment.
    """

    align_out: int
    layers: tuple[LayerSpec, ...]
    embed_dim: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.align_out < 1:
            raise ConfigError(f"align_out must be >= 1, got {self.align_out}")
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")


def default_config(kind: ModalityKind, embed_dim: int = 512) -> EncoderConfig:
    """Smallest member of each architecture family at production widths:
    an MLP for flat inputs, a strided temporal conv stack for sequences."""
    if kind.is_flat:
        hidden = 1024
        return EncoderConfig(
            align_out=hidden,
            layers=(Linear(hidden, 1024), Activation("gelu"), Linear(1024, embed_dim)),
            embed_dim=embed_dim)
    channels = 64
    width = 9
    return EncoderConfig(
        align_out=channels,
        layers=(
            Conv1d(channels, 128, width, stride=2, padding=(width - 1) // 2),
            Activation("gelu"),
            Conv1d(128, 128, width, stride=2, padding=(width - 1) // 2),
            Activation("gelu"),
            GlobalMeanPool(),
            Linear(128, embed_dim),
        ),
        embed_dim=embed_dim)


def small_config(kind: ModalityKind, embed_dim: int,
                 hidden: int = 64, channels: int = 16, width: int = 3) -> EncoderConfig:
    """Desk-scale variant of default_config for tests and synthetic runs."""
    if kind.is_flat:
        return EncoderConfig(
            align_out=hidden,
            layers=(Linear(hidden, hidden), Activation("gelu"), Linear(hidden, embed_dim)),
            embed_dim=embed_dim)
    out_ch = 2 * channels
    return EncoderConfig(
        align_out=channels,
        layers=(
            Conv1d(channels, out_ch, width, stride=1, padding=(width - 1) // 2),
            Activation("gelu"),
            GlobalMeanPool(),
            Linear(out_ch, embed_dim),
        ),
        embed_dim=embed_dim)


def _aligned_state(kind: ModalityKind, config: EncoderConfig):
    """Symbolic shape entering the shared network: ('vec', n) or ('seq', c, t)."""
    if kind.is_flat:
        return ("vec", config.align_out)
    return ("seq", config.align_out, kind.native_shape[1])


def validate_config(kind: ModalityKind, config: EncoderConfig) -> None:
    """Walk the layer stack symbolically; raise ConfigError on any shape break."""
    state = _aligned_state(kind, config)
    for i, layer in enumerate(config.layers):
        where = f"layer {i} ({type(layer).__name__})"
        if isinstance(layer, Linear):
            if state[0] != "vec":
                raise ConfigError(f"{where}: needs a flat input, have {state}")
            if state[1] != layer.in_dim:
                raise ConfigError(f"{where}: in_dim {layer.in_dim} != incoming {state[1]}")
            state = ("vec", layer.out_dim)
        elif isinstance(layer, Conv1d):
            if state[0] != "seq":
                raise ConfigError(f"{where}: needs a (C,T) input, have {state}")
            if state[1] != layer.in_channels:
                raise ConfigError(
                    f"{where}: in_channels {layer.in_channels} != incoming {state[1]}")
            try:
                t_out = kernel.conv1d_output_length(state[2], layer.width, layer.stride, layer.padding)
            except DimensionError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
            state = ("seq", layer.out_channels, t_out)
        elif isinstance(layer, Activation):
            if layer.mode not in ("relu", "gelu"):
                raise ConfigError(f"{where}: unknown mode {layer.mode!r}")
        elif isinstance(layer, Pool1d):
            if state[0] != "seq":
                raise ConfigError(f"{where}: needs a (C,T) input, have {state}")
            if layer.window < 1 or layer.window > state[2]:
                raise ConfigError(f"{where}: window {layer.window} invalid for length {state[2]}")
            state = ("seq", state[1], state[2] // layer.window)
        elif isinstance(layer, GlobalMeanPool):
            if state[0] != "seq":
                raise ConfigError(f"{where}: needs a (C,T) input, have {state}")
            state = ("vec", state[1])
        else:
            raise ConfigError(f"{where}: unsupported layer spec")
    if state != ("vec", config.embed_dim):
        raise ConfigError(
            f"shared network ends at {state}, expected ('vec', {config.embed_dim})")


# ---------------------------------------------------------------------------
# parameter layout


def _align_param_shapes(kind: ModalityKind, config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    if kind.is_flat:
        v = kind.native_shape[0]
        return {"weight": (v, config.align_out), "bias": (config.align_out,)}
    c = kind.native_shape[0]
    return {"weight": (c, config.align_out), "bias": (config.align_out,)}


def param_shapes(kind: ModalityKind, config: EncoderConfig,
                 subjects: Sequence[str]) -> dict[str, tuple[int, ...]]:
    """Canonical ordered name -> shape map for every trainable parameter."""
    shapes: dict[str, tuple[int, ...]] = {}
    align = _align_param_shapes(kind, config)
    for sid in subjects:
        for pname, shape in align.items():
            shapes[f"align/{sid}/{pname}"] = shape
    for i, layer in enumerate(config.layers):
        if isinstance(layer, Linear):
            shapes[f"layer{i}/weight"] = (layer.in_dim, layer.out_dim)
            shapes[f"layer{i}/bias"] = (layer.out_dim,)
        elif isinstance(layer, Conv1d):
            shapes[f"layer{i}/weight"] = (layer.out_channels, layer.in_channels, layer.width)
            shapes[f"layer{i}/bias"] = (layer.out_channels,)
    return shapes


def _fan_in(weight_shape: tuple[int, ...]) -> int:
    if len(weight_shape) == 3:   # conv kernels (K, C, W)
        return weight_shape[1] * weight_shape[2]
    return weight_shape[0]       # linear / alignment weight (in, out)


class ModalityEncoder:
    """Trainable encoder for one modality: per-subject alignment + shared net."""

    def __init__(self, kind: ModalityKind, config: EncoderConfig,
                 subjects: Sequence[str], params: dict[str, np.ndarray]):
        validate_config(kind, config)
        self.kind = kind
        self.config = config
        self.subjects = tuple(subjects)
        self.params = params

    @property
    def embed_dim(self) -> int:
        return self.config.embed_dim

    def has_subject(self, subject_id: str) -> bool:
        return subject_id in self.subjects


def init_encoder(kind: ModalityKind, subjects: Sequence[str], config: EncoderConfig,
                 seed: int) -> ModalityEncoder:
    """Build an encoder with scaled-uniform fan-in init, fully seed-determined.

    Parameters are drawn in declaration order (subjects as given, then shared
    layers), each from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    """
    subjects = tuple(subjects)
    if not subjects:
        raise ConfigError("at least one subject is required")
    if len(set(subjects)) != len(subjects):
        raise ConfigError("duplicate subject ids")
    validate_config(kind, config)
    rng = np.random.default_rng(int(seed))
    shapes = param_shapes(kind, config, subjects)
    params: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        ref = name[:-len("/bias")] + "/weight" if name.endswith("/bias") else name
        bound = 1.0 / np.sqrt(_fan_in(shapes[ref]))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return ModalityEncoder(kind, config, subjects, params)


# ---------------------------------------------------------------------------
# forward / backward


def native_features(kind: ModalityKind, features: np.ndarray) -> np.ndarray:
    """Coerce one sample's feature array to the declared native shape.

    Sequence modalities also accept a 3-axis spectrogram laid out as
    (freq, time, channel); it is folded to (channel*freq, time) so a single
    temporal-conv pathway serves both raw and time-frequency inputs.
    """
    arr = np.asarray(features)
    if arr.shape == kind.native_shape:
        return arr
    if (not kind.is_flat) and arr.ndim == 3:
        f, t, c = arr.shape
        if (c * f, t) == kind.native_shape:
            return arr.transpose(2, 0, 1).reshape(c * f, t)
    raise DimensionError(
        f"sample features of shape {arr.shape} do not match {kind.name} "
        f"native shape {kind.native_shape}")


def _check_sample(encoder: ModalityEncoder, sample) -> np.ndarray:
    modality = getattr(sample, "modality", encoder.kind.name)
    if modality != encoder.kind.name:
        raise DimensionError(
            f"sample modality {modality!r} does not match encoder {encoder.kind.name!r}")
    if not encoder.has_subject(sample.subject_id):
        raise KeyError(f"no alignment registered for subject {sample.subject_id!r}")
    return native_features(encoder.kind, sample.features)


def _align_batch(encoder: ModalityEncoder, x: np.ndarray, subject_id: str) -> np.ndarray:
    w = encoder.params[f"align/{subject_id}/weight"]
    b = encoder.params[f"align/{subject_id}/bias"]
    if encoder.kind.is_flat:
        return x @ w + b
    # per-time-step channel mixing, shared across the time axis
    return np.einsum("bct,cd->bdt", x, w) + b[None, :, None]


@dataclass
class _ForwardCache:
    order: list[tuple[str, np.ndarray, np.ndarray]]  # (subject, row idx, native batch)
    layer_inputs: list[np.ndarray] = field(default_factory=list)


def _forward(encoder: ModalityEncoder, samples: Sequence) -> tuple[np.ndarray, _ForwardCache]:
    feats = [_check_sample(encoder, s) for s in samples]
    batch = len(samples)
    cache = _ForwardCache(order=[])
    if encoder.kind.is_flat:
        aligned = np.zeros((batch, encoder.config.align_out))
    else:
        aligned = np.zeros((batch, encoder.config.align_out, encoder.kind.native_shape[1]))
    for sid in encoder.subjects:
        idx = np.array([i for i, s in enumerate(samples) if s.subject_id == sid], dtype=np.intp)
        if idx.size == 0:
            continue
        x = np.stack([feats[i] for i in idx])
        aligned[idx] = _align_batch(encoder, x, sid)
        cache.order.append((sid, idx, x))

    out = aligned
    for i, layer in enumerate(encoder.config.layers):
        cache.layer_inputs.append(out)
        out = _layer_forward(encoder, i, layer, out)
    return out, cache


def _layer_forward(encoder: ModalityEncoder, i: int, layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    if isinstance(layer, Linear):
        return kernel.linear_forward(x, encoder.params[f"layer{i}/weight"],
                                     encoder.params[f"layer{i}/bias"])
    if isinstance(layer, Conv1d):
        return kernel.conv1d_forward(x, encoder.params[f"layer{i}/weight"],
                                     encoder.params[f"layer{i}/bias"],
                                     layer.stride, layer.padding)
    if isinstance(layer, Activation):
        return kernel.activation(x, layer.mode)
    if isinstance(layer, Pool1d):
        return kernel.pool1d(x, layer.window, layer.mode)
    if isinstance(layer, GlobalMeanPool):
        return x.mean(axis=2)
    raise ConfigError(f"unsupported layer spec {layer!r}")


def _backward(encoder: ModalityEncoder, cache: _ForwardCache,
              d_out: np.ndarray) -> dict[str, np.ndarray]:
    grads = {name: np.zeros_like(arr) for name, arr in encoder.params.items()}
    d = d_out
    for i in reversed(range(len(encoder.config.layers))):
        layer = encoder.config.layers[i]
        x = cache.layer_inputs[i]
        if isinstance(layer, Linear):
            lg = kernel.linear_backward(x, encoder.params[f"layer{i}/weight"], d)
            for pname, g in lg.d_params:
                grads[f"layer{i}/{pname}"] += g
            d = lg.d_input
        elif isinstance(layer, Conv1d):
            lg = kernel.conv1d_backward(x, encoder.params[f"layer{i}/weight"], d,
                                        layer.stride, layer.padding)
            for pname, g in lg.d_params:
                grads[f"layer{i}/{pname}"] += g
            d = lg.d_input
        elif isinstance(layer, Activation):
            d = kernel.activation_backward(x, d, layer.mode)
        elif isinstance(layer, Pool1d):
            d = kernel.pool1d_backward(x, layer.window, layer.mode, d)
        elif isinstance(layer, GlobalMeanPool):
            t = x.shape[2]
            d = np.repeat(d[:, :, None] / t, t, axis=2)
    for sid, idx, x in cache.order:
        dy = d[idx]
        if encoder.kind.is_flat:
            grads[f"align/{sid}/weight"] += x.reshape(len(idx), -1).T @ dy
            grads[f"align/{sid}/bias"] += dy.sum(axis=0)
        else:
            grads[f"align/{sid}/weight"] += np.einsum("bct,bdt->cd", x, dy)
            grads[f"align/{sid}/bias"] += dy.sum(axis=(0, 2))
    return grads


def align_forward(encoder: ModalityEncoder, sample) -> np.ndarray:
    """Apply only the sample's subject alignment, landing in the common space."""
    x = _check_sample(encoder, sample)
    return _align_batch(encoder, x[None], sample.subject_id)[0]


def encode(encoder: ModalityEncoder, sample) -> np.ndarray:
    """Project one sample to its raw (un-normalized) embedding of length D."""
    z, _ = _forward(encoder, [sample])
    return z[0]


def encode_batch(encoder: ModalityEncoder, samples: Sequence) -> np.ndarray:
    """Project samples to a (B, D) embedding matrix, preserving row order."""
    if not samples:
        return np.zeros((0, encoder.embed_dim))
    z, _ = _forward(encoder, samples)
    return z


def encoder_backward(encoder: ModalityEncoder, samples: Sequence,
                     d_z: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(d_z * encode_batch(samples)) for every parameter.

    Alignments of subjects absent from the batch get zero gradients.
    """
    if d_z.shape != (len(samples), encoder.embed_dim):
        raise DimensionError(
            f"d_z shape {d_z.shape} != ({len(samples)}, {encoder.embed_dim})")
    if not samples:
        return {name: np.zeros_like(arr) for name, arr in encoder.params.items()}
    _, cache = _forward(encoder, samples)
    return _backward(encoder, cache, d_z)


def forward_with_cache(encoder: ModalityEncoder, samples: Sequence):
    """One forward pass returning (Z, cache); pair with backward_from_cache
    to avoid recomputing the forward inside a training step."""
    return _forward(encoder, samples)


def backward_from_cache(encoder: ModalityEncoder, cache: _ForwardCache,
                        d_z: np.ndarray) -> dict[str, np.ndarray]:
    return _backward(encoder, cache, d_z)


# ---------------------------------------------------------------------------
# config (de)serialization for checkpoints


def layer_to_dict(layer: LayerSpec) -> dict:
    if isinstance(layer, Linear):
        return {"kind": "linear", "in_dim": layer.in_dim, "out_dim": layer.out_dim}
    if isinstance(layer, Conv1d):
        return {"kind": "conv1d", "in_channels": layer.in_channels,
                "out_channels": layer.out_channels, "width": layer.width,
                "stride": layer.stride, "padding": layer.padding}
    if isinstance(layer, Activation):
        return {"kind": "activation", "mode": layer.mode}
    if isinstance(layer, Pool1d):
        return {"kind": "pool1d", "window": layer.window, "mode": layer.mode}
    if isinstance(layer, GlobalMeanPool):
        return {"kind": "global_mean_pool"}
    raise ConfigError(f"unsupported layer spec {layer!r}")


def layer_from_dict(d: dict) -> LayerSpec:
    kind = d.get("kind")
    if kind == "linear":
        return Linear(int(d["in_dim"]), int(d["out_dim"]))
    if kind == "conv1d":
        return Conv1d(int(d["in_channels"]), int(d["out_channels"]), int(d["width"]),
                      int(d.get("stride", 1)), int(d.get("padding", 0)))
    if kind == "activation":
        return Activation(str(d["mode"]))
    if kind == "pool1d":
        return Pool1d(int(d["window"]), str(d["mode"]))
    if kind == "global_mean_pool":
        return GlobalMeanPool()
    raise ConfigError(f"unknown layer kind {kind!r}")


def config_to_dict(config: EncoderConfig) -> dict:
    return {"align_out": config.align_out, "embed_dim": config.embed_dim,
            "layers": [layer_to_dict(l) for l in config.layers]}


def config_from_dict(d: dict) -> EncoderConfig:
    return EncoderConfig(align_out=int(d["align_out"]),
                         layers=tuple(layer_from_dict(l) for l in d["layers"]),
                         embed_dim=int(d["embed_dim"]))


def kind_to_dict(kind: ModalityKind) -> dict:
    return {"name": kind.name, "native_shape": list(kind.native_shape)}


def kind_from_dict(d: dict) -> ModalityKind:
    return ModalityKind(str(d["name"]), tuple(int(x) for x in d["native_shape"]))
