"""Versioned binary checkpoint files.

Layout (all multi-byte integers little-endian):

    bytes 0..7    magic ``b"SLCHKPT1"`` (the trailing digit is the format
                  version)
    bytes 8..15   uint64 length of the JSON header
    next          UTF-8 JSON header
    rest          raw array payload

The header holds the model spec as structured text, the input shape, an
ordered array manifest of ``{"name", "shape"}`` entries, and optional
training state (completed epochs, optimizer step counter).  Every array is
stored as little-endian float64 in C order, concatenated in manifest order.
Parameter arrays keep their own names; optimizer accumulators are prefixed
with ``optimizer.accum.``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import (
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    ModelSpec,
    ParameterStore,
    Relu,
    SoftmaxHead,
)
from .optim import AdaGradState

MAGIC = b"SLCHKPT1"
_OPT_PREFIX = "optimizer.accum."


def spec_to_dict(spec: ModelSpec) -> list[dict]:
    out = []
    for layer in spec.layers:
        d = {"kind": layer.kind}
        if layer.kind == "conv":
            d.update(filters=layer.filters, kernel_size=layer.kernel_size, stride=layer.stride)
        elif layer.kind == "dense":
            d.update(units=layer.units)
        elif layer.kind == "dropout":
            d.update(rate=layer.rate)
        elif layer.kind == "head":
            d.update(outputs=layer.outputs, aux_outputs=layer.aux_outputs)
        out.append(d)
    return out


def spec_from_dict(layers: list[dict]) -> ModelSpec:
    built = []
    for d in layers:
        kind = d.get("kind")
        if kind == "conv":
            built.append(Conv2D(d["filters"], d["kernel_size"], d["stride"]))
        elif kind == "relu":
            built.append(Relu())
        elif kind == "gap":
            built.append(GlobalAvgPool())
        elif kind == "dense":
            built.append(Dense(d["units"]))
        elif kind == "dropout":
            built.append(Dropout(d["rate"]))
        elif kind == "head":
            built.append(SoftmaxHead(d["outputs"], d.get("aux_outputs", 0)))
        else:
            raise CheckpointError(f"unknown layer kind {kind!r} in checkpoint")
    return ModelSpec(tuple(built))


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: ParameterStore
    optimizer_state: AdaGradState | None = None
    epoch: int = 0
    meta: dict | None = None


def save_checkpoint(
    path: str | Path,
    spec: ModelSpec,
    params: ParameterStore,
    *,
    optimizer_state: AdaGradState | None = None,
    epoch: int = 0,
    meta: dict | None = None,
) -> Path:
    path = Path(path)
    arrays: list[tuple[str, np.ndarray]] = list(params.arrays.items())
    opt_header = None
    if optimizer_state is not None:
        opt_header = {"kind": "adagrad", "step": optimizer_state.step}
        arrays += [
            (_OPT_PREFIX + name, arr) for name, arr in optimizer_state.accumulators.items()
        ]
    header = {
        "format_version": 1,
        "model": spec_to_dict(spec),
        "input_shape": list(params.input_shape),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "epoch": epoch,
        "optimizer": opt_header,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    try:
        header = json.loads(raw[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    if header.get("format_version") != 1:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')!r}"
        )
    spec = spec_from_dict(header["model"])
    offset = start + hlen
    loaded: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated array payload at {entry['name']}")
        loaded[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    params = ParameterStore(
        {n: a for n, a in loaded.items() if not n.startswith(_OPT_PREFIX)},
        tuple(header["input_shape"]),
    )
    opt_state = None
    if header.get("optimizer"):
        opt_state = AdaGradState(
            {
                n[len(_OPT_PREFIX):]: a
                for n, a in loaded.items()
                if n.startswith(_OPT_PREFIX)
            },
            int(header["optimizer"]["step"]),
        )
    return Checkpoint(spec, params, opt_state, int(header.get("epoch", 0)), header.get("meta") or {})
