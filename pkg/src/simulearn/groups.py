"""Class-group bookkeeping shared across the library.

The classifier head produces a single probability vector of length
``k + m``.  Positions ``0..k-1`` belong to the target group and positions
``k..k+m-1`` to the auxiliary group; labels are one-hot over the full
vector.  All class indices in this library are zero-based within their
group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

TARGET = "target"
AUXILIARY = "auxiliary"
GROUPS = (TARGET, AUXILIARY)


@dataclass(frozen=True)
class GroupLayout:
    """Partition of the head outputs into k target and m auxiliary classes."""

    k: int
    m: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"need at least one target class, got k={self.k}")
        if self.m < 0:
            raise ValueError(f"auxiliary class count must be >= 0, got m={self.m}")

    @property
    def n(self) -> int:
        """Total head width."""
        return self.k + self.m

    @property
    def target_slice(self) -> slice:
        return slice(0, self.k)

    @property
    def aux_slice(self) -> slice:
        return slice(self.k, self.k + self.m)

    def group_slice(self, group: str) -> slice:
        if group == TARGET:
            return self.target_slice
        if group == AUXILIARY:
            return self.aux_slice
        raise ValueError(f"unknown group {group!r}")

    def class_count(self, group: str) -> int:
        return self.k if group == TARGET else self.m


@dataclass(frozen=True)
class Hyperparameters:
    """Loss hyperparameters: group weight ``lam`` and penalty factors.

    ``lam`` weights the target-group cross-entropy term and ``1 - lam``
    the auxiliary one; ``alpha`` scales the penalty for target samples
    whose prediction mass leaks into the auxiliary group, ``beta`` the
    converse.
    """

    lam: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    @property
    def group_weights(self) -> tuple[float, float]:
        """Weights applied to the (target, auxiliary) cross-entropy terms."""
        return (self.lam, 1.0 - self.lam)


def encode_label(layout: GroupLayout, group: str, class_index: int) -> np.ndarray:
    """One-hot label of length ``layout.n`` for a class in the given group."""
    if group not in GROUPS:
        raise ValueError(f"unknown group {group!r}")
    count = layout.class_count(group)
    if not 0 <= class_index < count:
        raise ValueError(
            f"class index {class_index} out of range for {group} group of size {count}"
        )
    label = np.zeros(layout.n, dtype=np.float64)
    offset = 0 if group == TARGET else layout.k
    label[offset + class_index] = 1.0
    return label


def decode_label(layout: GroupLayout, label: np.ndarray) -> tuple[str, int]:
    """Inverse of :func:`encode_label`; validates the one-hot structure."""
    label = np.asarray(label)
    if label.shape != (layout.n,):
        raise ShapeError(f"expected label of shape ({layout.n},), got {label.shape}")
    hot = np.flatnonzero(label == 1.0)
    if hot.size != 1 or np.count_nonzero(label) != 1:
        raise ValueError("label is not one-hot")
    idx = int(hot[0])
    if idx < layout.k:
        return TARGET, idx
    return AUXILIARY, idx - layout.k


def label_group(layout: GroupLayout, label: np.ndarray) -> str:
    """Group of a one-hot label, without full validation."""
    return TARGET if int(np.argmax(label)) < layout.k else AUXILIARY
