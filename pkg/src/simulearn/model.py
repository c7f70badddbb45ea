"""Layered model definition, parameter storage, and whole-model passes.

A model is a linear sequence of layer descriptors ending in a softmax head.
Head outputs are split into ``k`` target classes plus an optional block of
``m`` auxiliary classes; a single softmax spans all of them, so the two
groups are never normalized independently.  ``extend_multi_group`` widens a
k-way head by m auxiliary outputs (adding exactly ``m * (fan_in + 1)``
parameters) and ``strip_auxiliary_head`` removes them again.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidStateError, ShapeError
from .ops import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    gap_backward,
    gap_forward,
    glorot_uniform_init,
    relu_backward,
    relu_forward,
    softmax,
    softmax_backward,
)


@dataclass(frozen=True)
class Conv2D:
    filters: int
    kernel_size: int
    stride: int = 1
    kind = "conv"

    def __post_init__(self):
        if self.filters < 1 or self.kernel_size < 1 or self.stride < 1:
            raise ValueError(f"invalid conv layer {self}")


@dataclass(frozen=True)
class Relu:
    kind = "relu"


@dataclass(frozen=True)
class GlobalAvgPool:
    kind = "gap"


@dataclass(frozen=True)
class Dense:
    units: int
    kind = "dense"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError(f"dense layer needs units >= 1, got {self.units}")


@dataclass(frozen=True)
class Dropout:
    rate: float
    kind = "dropout"

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class SoftmaxHead:
    """Final dense layer followed by a softmax over all its outputs."""

    outputs: int
    aux_outputs: int = 0
    kind = "head"

    def __post_init__(self):
        if self.outputs < 1:
            raise ValueError(f"head needs outputs >= 1, got {self.outputs}")
        if not 0 <= self.aux_outputs < self.outputs:
            raise ValueError(
                f"aux_outputs must lie in [0, outputs), got {self.aux_outputs}"
            )


LayerSpec = Union[Conv2D, Relu, GlobalAvgPool, Dense, Dropout, SoftmaxHead]

TRAINABLE_KINDS = ("conv", "dense", "head")


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer sequence; exactly one head, placed last."""

    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("model needs at least one layer")
        heads = [i for i, l in enumerate(layers) if l.kind == "head"]
        if len(heads) != 1 or heads[0] != len(layers) - 1:
            raise ValueError("model must have exactly one head layer, placed last")

    @property
    def head(self) -> SoftmaxHead:
        return self.layers[-1]

    @property
    def head_outputs(self) -> int:
        return self.head.outputs

    @property
    def target_outputs(self) -> int:
        return self.head.outputs - self.head.aux_outputs

    @property
    def aux_outputs(self) -> int:
        return self.head.aux_outputs

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(f"{layer.kind}{i}" for i, layer in enumerate(self.layers))

    @property
    def conv_layer_names(self) -> tuple[str, ...]:
        return tuple(n for n, l in zip(self.layer_names, self.layers) if l.kind == "conv")

    @property
    def dense_units(self) -> tuple[int, ...]:
        return tuple(l.units for l in self.layers if l.kind == "dense")

    @property
    def n1(self) -> int | None:
        units = self.dense_units
        return units[0] if units else None

    @property
    def n2(self) -> int | None:
        units = self.dense_units
        return units[-1] if units else None

    @property
    def has_dropout(self) -> bool:
        return any(l.kind == "dropout" for l in self.layers)

    def layer_by_name(self, name: str) -> LayerSpec:
        try:
            return self.layers[self.layer_names.index(name)]
        except ValueError:
            raise KeyError(f"no layer named {name!r}") from None


@dataclass
class ParameterStore:
    """Named weight/bias arrays for every trainable layer, plus the input shape
    the shapes were derived from."""

    arrays: dict[str, np.ndarray]
    input_shape: tuple[int, ...]

    @property
    def total_count(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "ParameterStore":
        return ParameterStore(
            {k: v.copy() for k, v in self.arrays.items()}, tuple(self.input_shape)
        )

    def __getitem__(self, key: str) -> np.ndarray:
        return self.arrays[key]


def _shape_walk(spec: ModelSpec, input_shape: tuple[int, ...]):
    """Yield (name, layer, in_shape, out_shape) through the network."""
    shape = tuple(input_shape)
    for name, layer in zip(spec.layer_names, spec.layers):
        in_shape = shape
        if layer.kind == "conv":
            if len(shape) != 3:
                raise ShapeError(f"conv layer {name} needs (H, W, C) input, got {shape}")
            h, w, c = shape
            kk, s = layer.kernel_size, layer.stride
            if kk > h or kk > w:
                raise ValueError(f"kernel {kk}x{kk} larger than input {h}x{w} at {name}")
            shape = ((h - kk) // s + 1, (w - kk) // s + 1, layer.filters)
        elif layer.kind == "gap":
            if len(shape) != 3:
                raise ShapeError(f"gap layer {name} needs (H, W, C) input, got {shape}")
            shape = (shape[2],)
        elif layer.kind in ("dense", "head"):
            if len(shape) != 1:
                raise ShapeError(
                    f"{layer.kind} layer {name} needs flat input, got {shape}; "
                    "add a pooling layer first"
                )
            shape = (layer.units if layer.kind == "dense" else layer.outputs,)
        yield name, layer, in_shape, shape


def init_params(
    spec: ModelSpec,
    input_shape: tuple[int, ...],
    rng: np.random.Generator,
    dtype=np.float64,
    *,
    bias_fill: float = 0.0,
) -> ParameterStore:
    """Glorot-uniform weights for every trainable layer.

    Biases are zero by default; ``bias_fill`` sets the hidden-layer biases
    (conv and dense, not the head) to a small constant, which keeps relu
    units alive early in training.
    """
    arrays: dict[str, np.ndarray] = {}
    for name, layer, in_shape, _ in _shape_walk(spec, input_shape):
        if layer.kind == "conv":
            kk, c = layer.kernel_size, in_shape[2]
            fan_in = kk * kk * c
            fan_out = kk * kk * layer.filters
            arrays[f"{name}.w"] = glorot_uniform_init(
                fan_in, fan_out, rng, shape=(kk, kk, c, layer.filters)
            ).astype(dtype)
            arrays[f"{name}.b"] = np.full(layer.filters, bias_fill, dtype=dtype)
        elif layer.kind == "dense":
            p = in_shape[0]
            arrays[f"{name}.w"] = glorot_uniform_init(p, layer.units, rng).astype(dtype)
            arrays[f"{name}.b"] = np.full(layer.units, bias_fill, dtype=dtype)
        elif layer.kind == "head":
            p = in_shape[0]
            arrays[f"{name}.w"] = glorot_uniform_init(p, layer.outputs, rng).astype(dtype)
            arrays[f"{name}.b"] = np.zeros(layer.outputs, dtype=dtype)
    return ParameterStore(arrays, tuple(input_shape))


def model_forward(
    spec: ModelSpec,
    params: ParameterStore,
    x: np.ndarray,
    *,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list[dict]]:
    """Run the network; returns (probabilities, cache).

    The cache holds one entry per layer with the tensors the backward pass
    and the interpretability tools need: layer input ``x``, output ``out``,
    dropout ``mask``, and head ``logits``.
    """
    x = np.asarray(x)
    if x.shape[1:] != params.input_shape:
        raise ShapeError(
            f"input shape {x.shape[1:]} != model input shape {params.input_shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("model input contains non-finite values")
    cache: list[dict] = []
    out = x
    for name, layer in zip(spec.layer_names, spec.layers):
        entry = {"name": name, "kind": layer.kind, "x": out}
        if layer.kind == "conv":
            out = conv2d_forward(out, params[f"{name}.w"], params[f"{name}.b"], layer.stride)
        elif layer.kind == "relu":
            out = relu_forward(out)
        elif layer.kind == "gap":
            out = gap_forward(out)
        elif layer.kind == "dense":
            out = dense_forward(out, params[f"{name}.w"], params[f"{name}.b"])
        elif layer.kind == "dropout":
            out, mask = dropout_forward(out, layer.rate, rng, training)
            entry["mask"] = mask
        elif layer.kind == "head":
            logits = dense_forward(out, params[f"{name}.w"], params[f"{name}.b"])
            entry["logits"] = logits
            out = softmax(logits)
        entry["out"] = out
        cache.append(entry)
    return out, cache


def model_backward_logits(
    spec: ModelSpec,
    params: ParameterStore,
    cache: list[dict],
    dlogits: np.ndarray,
    *,
    want_layer_grads: bool = False,
):
    """Backpropagate a gradient on the head's pre-softmax logits.

    Returns ``(param_grads, input_grad)``, or with ``want_layer_grads`` also
    a dict mapping layer name to the gradient at that layer's output.
    """
    grads: dict[str, np.ndarray] = {}
    layer_grads: dict[str, np.ndarray] = {}
    g = np.asarray(dlogits)
    for entry, layer in zip(reversed(cache), reversed(spec.layers)):
        name = entry["name"]
        if layer.kind == "head":
            # g arrives as the gradient at the logits
            g, dw, db = dense_backward(g, entry["x"], params[f"{name}.w"])
            grads[f"{name}.w"] = dw
            grads[f"{name}.b"] = db
        elif layer.kind == "dense":
            g, dw, db = dense_backward(g, entry["x"], params[f"{name}.w"])
            grads[f"{name}.w"] = dw
            grads[f"{name}.b"] = db
        elif layer.kind == "conv":
            g, dk, db = conv2d_backward(g, entry["x"], params[f"{name}.w"], layer.stride)
            grads[f"{name}.w"] = dk
            grads[f"{name}.b"] = db
        elif layer.kind == "relu":
            g = relu_backward(g, entry["x"])
        elif layer.kind == "gap":
            g = gap_backward(g, entry["x"].shape)
        elif layer.kind == "dropout":
            g = dropout_backward(g, entry["mask"], layer.rate)
        if want_layer_grads:
            # gradient at this layer's *input*, i.e. the previous layer's output
            layer_grads[name] = g
    if want_layer_grads:
        out_grads = {}
        names = spec.layer_names
        for i, name in enumerate(names[:-1]):
            out_grads[name] = layer_grads[names[i + 1]]
        return grads, g, out_grads
    return grads, g


def model_backward(
    spec: ModelSpec,
    params: ParameterStore,
    cache: list[dict],
    dprobs: np.ndarray,
):
    """Backpropagate a gradient on the output probabilities."""
    probs = cache[-1]["out"]
    dlogits = softmax_backward(np.asarray(dprobs), probs)
    return model_backward_logits(spec, params, cache, dlogits)


def extend_multi_group(
    spec: ModelSpec,
    params: ParameterStore,
    m: int,
    rng: np.random.Generator,
) -> tuple[ModelSpec, ParameterStore]:
    """Widen the k-way head by m auxiliary outputs.

    The existing k output columns are preserved bitwise; the new weight
    columns and bias entries are Glorot-initialized for the widened layer.
    Parameter count grows by exactly ``m * (fan_in + 1)``.
    """
    if m < 1:
        raise ValueError(f"need m >= 1 auxiliary outputs, got {m}")
    head = spec.head
    if head.aux_outputs != 0:
        raise InvalidStateError("head already carries auxiliary outputs")
    head_name = spec.layer_names[-1]
    w = params[f"{head_name}.w"]
    b = params[f"{head_name}.b"]
    fan_in = w.shape[0]
    k = head.outputs
    limit_fans = (fan_in, k + m)
    new_w = glorot_uniform_init(*limit_fans, rng, shape=(fan_in, m)).astype(w.dtype)
    new_b = glorot_uniform_init(*limit_fans, rng, shape=(m,)).astype(b.dtype)
    new_head = SoftmaxHead(outputs=k + m, aux_outputs=m)
    new_spec = ModelSpec(spec.layers[:-1] + (new_head,))
    new_params = params.copy()
    new_params.arrays[f"{head_name}.w"] = np.concatenate([w, new_w], axis=1)
    new_params.arrays[f"{head_name}.b"] = np.concatenate([b, new_b])
    return new_spec, new_params


def strip_auxiliary_head(
    spec: ModelSpec, params: ParameterStore
) -> tuple[ModelSpec, ParameterStore]:
    """Drop the auxiliary output block, keeping only the k target outputs."""
    head = spec.head
    if head.aux_outputs == 0:
        raise InvalidStateError("model has no auxiliary outputs to strip")
    k = head.outputs - head.aux_outputs
    head_name = spec.layer_names[-1]
    new_spec = ModelSpec(spec.layers[:-1] + (SoftmaxHead(outputs=k),))
    new_params = params.copy()
    new_params.arrays[f"{head_name}.w"] = params[f"{head_name}.w"][:, :k].copy()
    new_params.arrays[f"{head_name}.b"] = params[f"{head_name}.b"][:k].copy()
    return new_spec, new_params


def build_cnn_spec(
    k: int,
    *,
    conv_filters: tuple[int, ...] = (8, 16),
    kernel_size: int = 3,
    conv_stride: int = 2,
    n1: int = 32,
    n2: int = 16,
    dropout_rate: float = 0.0,
) -> ModelSpec:
    """Small image classifier: conv/relu blocks, global average pooling,
    two relu dense layers (optionally with dropout), and a k-way head."""
    layers: list[LayerSpec] = []
    for f in conv_filters:
        layers.append(Conv2D(filters=f, kernel_size=kernel_size, stride=conv_stride))
        layers.append(Relu())
    layers.append(GlobalAvgPool())
    for units in (n1, n2):
        layers.append(Dense(units))
        layers.append(Relu())
        if dropout_rate > 0.0:
            layers.append(Dropout(dropout_rate))
    layers.append(SoftmaxHead(outputs=k))
    return ModelSpec(tuple(layers))
