"""Feature-quality and attribution tooling for trained models.

Layer correlation summarizes how redundant a convolutional layer's
features are across classes: feed every test image of one class through
the model, sum the positive activations of each channel over space and
images to get one vector per class, then average the absolute Pearson
coefficient over all class pairs.  Lower values mean the layer produces
more class-specific information.

Grad-CAM highlights the input regions that drive selected head outputs.
It works on the logits (pre-softmax), so adding a constant to the selected
outputs leaves the map unchanged.  ``top_activating_aux`` ranks auxiliary
classes by how much target-group probability mass their samples attract,
which is where Grad-CAM is most interesting to point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Sample, stack_features
from .errors import InvalidStateError
from .groups import GroupLayout
from .model import ModelSpec, ParameterStore, model_backward_logits, model_forward


class DegenerateVectorWarning(UserWarning):
    """A zero-variance vector entered a correlation computation."""


@dataclass
class ClassChannelVector:
    """Per-channel sums of positive activations for one class at one layer."""

    class_index: int
    layer: str
    values: np.ndarray


def class_channel_vector(
    spec: ModelSpec,
    params: ParameterStore,
    samples: Sequence[Sample],
    layer: str,
    *,
    batch_size: int = 64,
) -> ClassChannelVector:
    """Sum max(0, activation) over space and over all given images, per channel."""
    if layer not in spec.conv_layer_names:
        raise ValueError(f"layer {layer!r} is not a convolutional layer")
    if not samples:
        raise ValueError("need at least one sample")
    layer_pos = spec.layer_names.index(layer)
    filters = spec.layers[layer_pos].filters
    total = np.zeros(filters)
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        _, cache = model_forward(spec, params, stack_features(chunk))
        act = cache[layer_pos]["out"]
        total += np.maximum(act, 0.0).sum(axis=(0, 1, 2))
    return ClassChannelVector(samples[0].class_index, layer, total)


def pearson(u: np.ndarray, v: np.ndarray) -> float:
    """Sample Pearson coefficient; 0.0 (with a warning) on zero variance."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size < 2:
        raise ValueError(
            f"need two equal-length vectors of size >= 2, got {u.shape} and {v.shape}"
        )
    du = u - u.mean()
    dv = v - v.mean()
    su = float(np.sqrt(np.sum(du * du)))
    sv = float(np.sqrt(np.sum(dv * dv)))
    if su == 0.0 or sv == 0.0:
        warnings.warn("zero-variance vector in correlation", DegenerateVectorWarning)
        return 0.0
    return float(np.sum(du * dv)) / (su * sv)


@dataclass
class LayerCorrelationReport:
    layers: tuple[str, ...]
    mean_abs: dict[str, float]
    pair_matrices: dict[str, np.ndarray]
    class_indices: tuple[int, ...]
    degenerate: dict[str, tuple[int, ...]]
    skipped_classes: tuple[int, ...] = ()


def layer_correlation(
    spec: ModelSpec,
    params: ParameterStore,
    samples: Sequence[Sample],
    layout: GroupLayout,
    layers: Sequence[str] | None = None,
) -> LayerCorrelationReport:
    """Mean absolute pairwise Pearson coefficient per layer over the
    class channel vectors of the given target samples.

    Classes with no samples are skipped (and flagged); at least two classes
    must remain.  ``layers`` defaults to every convolutional layer.
    """
    layer_list = tuple(layers) if layers is not None else spec.conv_layer_names
    for layer in layer_list:
        if layer not in spec.conv_layer_names:
            raise ValueError(f"layer {layer!r} is not a convolutional layer")
    by_class: dict[int, list[Sample]] = {c: [] for c in range(layout.k)}
    for s in samples:
        by_class[s.class_index].append(s)
    present = [c for c in range(layout.k) if by_class[c]]
    skipped = tuple(c for c in range(layout.k) if not by_class[c])
    if len(present) < 2:
        raise ValueError("layer correlation needs samples from at least two classes")

    mean_abs: dict[str, float] = {}
    matrices: dict[str, np.ndarray] = {}
    degenerate: dict[str, tuple[int, ...]] = {}
    for layer in layer_list:
        vectors = [
            class_channel_vector(spec, params, by_class[c], layer).values
            for c in present
        ]
        degen = tuple(
            present[i] for i, v in enumerate(vectors) if float(np.ptp(v)) == 0.0
        )
        mat = np.eye(len(present))
        coeffs = []
        with warnings.catch_warnings():
            if degen:
                warnings.simplefilter("ignore", DegenerateVectorWarning)
            for i in range(len(present)):
                for j in range(i + 1, len(present)):
                    r = pearson(vectors[i], vectors[j])
                    mat[i, j] = mat[j, i] = r
                    coeffs.append(abs(r))
        mean_abs[layer] = float(np.mean(coeffs))
        matrices[layer] = mat
        degenerate[layer] = degen
    return LayerCorrelationReport(
        layers=layer_list,
        mean_abs=mean_abs,
        pair_matrices=matrices,
        class_indices=tuple(present),
        degenerate=degenerate,
        skipped_classes=skipped,
    )


@dataclass
class Heatmap:
    """Non-negative attribution map normalized to [0, 1]."""

    values: np.ndarray
    source_id: str | int | None = None
    score: float = 0.0


def _nearest_resize(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    rows = (np.arange(height) * grid.shape[0]) // height
    cols = (np.arange(width) * grid.shape[1]) // width
    return grid[np.ix_(rows, cols)]


def grad_cam(
    spec: ModelSpec,
    params: ParameterStore,
    image: np.ndarray,
    output_indices: Sequence[int],
    *,
    source_id: str | int | None = None,
) -> Heatmap:
    """Class activation map on the last convolutional layer.

    Channel weights are the spatial means of the gradient of the summed
    selected logits; the map is the ReLU of the weighted channel sum,
    normalized to [0, 1] (an all-zero map stays zero) and resized to the
    input resolution by nearest neighbor.
    """
    conv_names = spec.conv_layer_names
    if not conv_names:
        raise InvalidStateError("model has no convolutional layer")
    indices = np.asarray(list(output_indices), dtype=np.intp)
    if indices.size == 0 or indices.min() < 0 or indices.max() >= spec.head_outputs:
        raise ValueError(
            f"output indices must be non-empty and within [0, {spec.head_outputs})"
        )
    image = np.asarray(image, dtype=np.float64)
    x = image[None, ...]
    _, cache = model_forward(spec, params, x)
    logits = cache[-1]["logits"]
    dlogits = np.zeros_like(logits)
    dlogits[0, indices] = 1.0
    _, _, out_grads = model_backward_logits(
        spec, params, cache, dlogits, want_layer_grads=True
    )
    last_conv = conv_names[-1]
    conv_pos = spec.layer_names.index(last_conv)
    activations = cache[conv_pos]["out"][0]
    grad = out_grads[last_conv][0]
    channel_weights = grad.mean(axis=(0, 1))
    cam = np.maximum((activations * channel_weights).sum(axis=-1), 0.0)
    peak = cam.max()
    if peak > 0.0:
        cam = cam / peak
    cam = _nearest_resize(cam, image.shape[0], image.shape[1])
    return Heatmap(cam, source_id, float(logits[0, indices].sum()))


@dataclass
class AuxClassActivation:
    """One auxiliary class ranked by mean target-group probability mass."""

    class_index: int
    mean_score: float
    instances: tuple[tuple[int, float], ...]
    truncated: bool = False


def top_activating_aux(
    spec: ModelSpec,
    params: ParameterStore,
    aux_samples: Sequence[Sample],
    layout: GroupLayout,
    *,
    top_classes: int = 10,
    top_instances: int = 10,
    batch_size: int = 64,
) -> list[AuxClassActivation]:
    """Rank auxiliary classes by how strongly their samples activate the
    target outputs.

    The per-sample score is the summed softmax mass on the target group;
    each returned class carries its highest-scoring instances as
    ``(sample_position, score)`` pairs.  Classes smaller than
    ``top_instances`` return everything, flagged as truncated.
    """
    if not aux_samples:
        return []
    scores = np.empty(len(aux_samples))
    for start in range(0, len(aux_samples), batch_size):
        chunk = aux_samples[start : start + batch_size]
        probs, _ = model_forward(spec, params, stack_features(chunk))
        scores[start : start + len(chunk)] = probs[:, : layout.k].sum(axis=1)
    by_class: dict[int, list[int]] = {}
    for pos, s in enumerate(aux_samples):
        by_class.setdefault(s.class_index, []).append(pos)
    ranked = sorted(
        by_class,
        key=lambda c: (-float(np.mean(scores[by_class[c]])), c),
    )
    out = []
    for c in ranked[:top_classes]:
        positions = by_class[c]
        order = sorted(positions, key=lambda p: (-scores[p], p))
        chosen = order[:top_instances]
        out.append(
            AuxClassActivation(
                class_index=c,
                mean_score=float(np.mean(scores[positions])),
                instances=tuple((p, float(scores[p])) for p in chosen),
                truncated=len(positions) < top_instances,
            )
        )
    return out


def heatmap_to_image(heatmap: Heatmap) -> np.ndarray:
    """8-bit grayscale rendering of a heatmap."""
    return (np.clip(heatmap.values, 0.0, 1.0) * 255).round().astype(np.uint8)


def overlay_heatmap(image: np.ndarray, heatmap: Heatmap, strength: float = 0.6) -> np.ndarray:
    """Blend a red-tinted heatmap over a grayscale or RGB image (uint8 RGB out)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[-1] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        rgb = np.stack([img, img, img], axis=-1)
    else:
        rgb = img
    heat = np.clip(heatmap.values, 0.0, 1.0)[..., None]
    red = np.zeros_like(rgb)
    red[..., 0] = 1.0
    blended = rgb * (1.0 - strength * heat) + red * (strength * heat)
    return (np.clip(blended, 0.0, 1.0) * 255).round().astype(np.uint8)


def write_heatmap_png(heatmap: Heatmap, path: str | Path) -> Path:
    from PIL import Image

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(heatmap_to_image(heatmap), "L").save(path)
    return path


def write_overlay_png(image: np.ndarray, heatmap: Heatmap, path: str | Path) -> Path:
    from PIL import Image

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(overlay_heatmap(image, heatmap), "RGB").save(path)
    return path
