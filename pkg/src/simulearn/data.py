"""Group-tagged datasets, mixed-batch composition, and dataset sources.

Training batches in joint mode always hold exactly half target and half
auxiliary samples.  Auxiliary samples are drawn per step by shuffling the
pool and taking a prefix, so there is never a duplicate within one step,
while repeats across steps are allowed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DatasetError
from .groups import AUXILIARY, GROUPS, TARGET, GroupLayout, encode_label


@dataclass
class Sample:
    """One image (or feature vector) tagged with its group and class."""

    features: np.ndarray
    group: str
    class_index: int

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown group {self.group!r}")
        if self.class_index < 0:
            raise ValueError(f"class index must be >= 0, got {self.class_index}")


@dataclass
class GroupedDataset:
    """Target split plus the auxiliary sample pool."""

    layout: GroupLayout
    target_train: list[Sample]
    target_val: list[Sample] = field(default_factory=list)
    target_test: list[Sample] = field(default_factory=list)
    aux_pool: list[Sample] = field(default_factory=list)

    def __post_init__(self):
        for name in ("target_train", "target_val", "target_test"):
            for s in getattr(self, name):
                if s.group != TARGET:
                    raise DatasetError(f"{name} contains a non-target sample")
        for s in self.aux_pool:
            if s.group != AUXILIARY:
                raise DatasetError("aux_pool contains a non-auxiliary sample")


@dataclass
class Batch:
    """Stacked inputs and one-hot labels plus per-sample provenance.

    ``provenance`` holds ``(group, source_index)`` pairs; for auxiliary
    samples the index points into the pool, which makes within-step
    duplicate checks direct.
    """

    inputs: np.ndarray
    labels: np.ndarray
    provenance: tuple[tuple[str, int], ...]


def stack_features(samples: Sequence[Sample]) -> np.ndarray:
    return np.stack([s.features for s in samples])


def stack_labels(layout: GroupLayout, samples: Sequence[Sample]) -> np.ndarray:
    return np.stack([encode_label(layout, s.group, s.class_index) for s in samples])


def compose_batch(
    layout: GroupLayout,
    target_slice: Sequence[Sample],
    aux_pool: Sequence[Sample],
    batch_size: int,
    rng: np.random.Generator,
) -> Batch:
    """Build one mixed batch: the given target slice plus a same-sized
    prefix of a fresh shuffle of the auxiliary pool."""
    if batch_size % 2 != 0 or batch_size < 2:
        raise ValueError(f"batch size must be even and >= 2, got {batch_size}")
    half = batch_size // 2
    if len(target_slice) != half:
        raise ValueError(
            f"target slice has {len(target_slice)} samples, need exactly {half}"
        )
    if len(aux_pool) < half:
        raise ValueError(
            f"auxiliary pool has {len(aux_pool)} samples, need at least {half}"
        )
    picks = rng.permutation(len(aux_pool))[:half]
    aux_samples = [aux_pool[i] for i in picks]
    samples = list(target_slice) + aux_samples
    provenance = tuple(
        [(TARGET, i) for i in range(half)] + [(AUXILIARY, int(i)) for i in picks]
    )
    return Batch(
        inputs=stack_features(samples),
        labels=stack_labels(layout, samples),
        provenance=provenance,
    )


def epoch_plan(
    dataset: GroupedDataset,
    batch_size: int,
    rng: np.random.Generator,
    *,
    shuffle: bool = True,
) -> list[np.ndarray]:
    """Slice the target training set into the epoch's per-step halves.

    Returns ``S = floor(len(target_train) / (batch_size / 2))`` index arrays
    of ``batch_size / 2`` consecutive positions of a fresh shuffle; the
    remainder is dropped for that epoch.
    """
    if batch_size % 2 != 0 or batch_size < 2:
        raise ValueError(f"batch size must be even and >= 2, got {batch_size}")
    half = batch_size // 2
    n = len(dataset.target_train)
    if n < half:
        raise ValueError(
            f"target training set has {n} samples, need at least {half} per step"
        )
    order = rng.permutation(n) if shuffle else np.arange(n)
    steps = n // half
    return [order[s * half : (s + 1) * half] for s in range(steps)]


def _counts(value, classes: int, what: str) -> list[int]:
    if isinstance(value, int):
        counts = [value] * classes
    else:
        counts = [int(v) for v in value]
        if len(counts) != classes:
            raise ValueError(f"{what} needs {classes} entries, got {len(counts)}")
    if any(c < 0 for c in counts):
        raise ValueError(f"{what} entries must be >= 0")
    return counts


AUX_FAMILIES = ("rings", "gratings")


@dataclass(frozen=True)
class SyntheticConfig:
    """Procedural grouped image dataset.

    Target classes are oriented sinusoidal gratings (one angle per class).
    The auxiliary family is configurable: ``rings`` (concentric rings, one
    radial frequency per class) is visually unrelated to the target
    patterns, while ``gratings`` (a higher spatial frequency, offset
    angles) shares the target's orientation structure and so transfers
    strongly, like a related-domain helper dataset.  Pixel noise is
    additive Gaussian, clipped to [0, 1]; ``phase_jitter`` adds per-image
    phase variation in units of a full cycle.
    """

    k: int = 6
    m: int = 20
    image_size: int = 32
    train_per_class: int | tuple[int, ...] = 40
    val_per_class: int | tuple[int, ...] = 10
    test_per_class: int | tuple[int, ...] = 10
    aux_per_class: int | tuple[int, ...] = 12
    noise: float = 0.25
    phase_jitter: float = 0.0
    aux_family: str = "rings"

    def __post_init__(self):
        if self.k < 1 or self.m < 0:
            raise ValueError(f"need k >= 1 and m >= 0, got k={self.k}, m={self.m}")
        if self.image_size < 4:
            raise ValueError("image_size must be >= 4")
        if self.noise < 0 or self.phase_jitter < 0:
            raise ValueError("noise and phase_jitter must be >= 0")
        if self.aux_family not in AUX_FAMILIES:
            raise ValueError(f"aux_family must be one of {AUX_FAMILIES}")


def _grating(size: int, angle: float, phase: float, freq: float = 3.0) -> np.ndarray:
    u = np.linspace(0.0, 1.0, size)
    xx, yy = np.meshgrid(u, u, indexing="ij")
    t = xx * np.cos(angle) + yy * np.sin(angle)
    return 0.5 + 0.4 * np.sin(2.0 * np.pi * (freq * t + phase))


def _rings(size: int, freq: float, phase: float) -> np.ndarray:
    u = np.linspace(-1.0, 1.0, size)
    xx, yy = np.meshgrid(u, u, indexing="ij")
    r = np.sqrt(xx * xx + yy * yy)
    return 0.5 + 0.4 * np.cos(2.0 * np.pi * (freq * r + phase))


def _synth_image(cfg: SyntheticConfig, group: str, cls: int, rng: np.random.Generator) -> np.ndarray:
    phase = cfg.phase_jitter * rng.random() if cfg.phase_jitter > 0 else 0.0
    if group == TARGET:
        img = _grating(cfg.image_size, np.pi * cls / cfg.k, phase)
    elif cfg.aux_family == "gratings":
        # same frequency, offset angles: every auxiliary class sits between
        # target orientations, so the families share structure but no class
        img = _grating(cfg.image_size, np.pi * (cls + 0.5) / cfg.m, phase)
    else:
        img = _rings(cfg.image_size, 1.0 + 0.5 * cls, phase)
    if cfg.noise > 0:
        img = img + cfg.noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)[..., None]


def synth_generate(cfg: SyntheticConfig, seed: int) -> GroupedDataset:
    """Generate a grouped dataset; bitwise deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    layout = GroupLayout(k=cfg.k, m=cfg.m)

    def make(group, cls, count):
        return [
            Sample(_synth_image(cfg, group, cls, rng), group, cls) for _ in range(count)
        ]

    train_counts = _counts(cfg.train_per_class, cfg.k, "train_per_class")
    val_counts = _counts(cfg.val_per_class, cfg.k, "val_per_class")
    test_counts = _counts(cfg.test_per_class, cfg.k, "test_per_class")
    aux_counts = _counts(cfg.aux_per_class, cfg.m, "aux_per_class") if cfg.m else []

    target_train = [s for c in range(cfg.k) for s in make(TARGET, c, train_counts[c])]
    target_val = [s for c in range(cfg.k) for s in make(TARGET, c, val_counts[c])]
    target_test = [s for c in range(cfg.k) for s in make(TARGET, c, test_counts[c])]
    aux_pool = [s for c in range(cfg.m) for s in make(AUXILIARY, c, aux_counts[c])]
    return GroupedDataset(layout, target_train, target_val, target_test, aux_pool)


def _load_png(path: Path, image_size: int, grayscale: bool) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as img:
            img = img.convert("L" if grayscale else "RGB")
            img = img.resize((image_size, image_size), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except OSError as exc:
        raise OSError(f"cannot read image file {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr


def _load_group_dir(
    group_dir: Path, group: str, image_size: int, grayscale: bool
) -> dict[int, list[Sample]]:
    classes = sorted(p for p in group_dir.iterdir() if p.is_dir())
    if not classes:
        raise DatasetError(f"group directory {group_dir} has no class directories")
    per_class: dict[int, list[Sample]] = {}
    for cls, cls_dir in enumerate(classes):
        samples = []
        for f in sorted(cls_dir.iterdir()):
            if not f.is_file():
                continue
            if f.suffix.lower() != ".png":
                warnings.warn(f"skipping non-image file {f}")
                continue
            samples.append(Sample(_load_png(f, image_size, grayscale), group, cls))
        if not samples:
            raise DatasetError(f"class directory {cls_dir} holds no readable images")
        per_class[cls] = samples
    return per_class


def load_image_dir(
    root: str | Path,
    *,
    image_size: int = 32,
    grayscale: bool = True,
    split: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
    require_aux: bool = False,
) -> GroupedDataset:
    """Load ``<root>/<group>/<class>/*.png`` into a grouped dataset.

    Target samples are split per class into train/val/test using the given
    fractions after a seeded shuffle (train and val sizes are floored, the
    remainder goes to test).  The auxiliary directory is optional unless
    ``require_aux`` is set.
    """
    root = Path(root)
    if abs(sum(split) - 1.0) > 1e-9 or any(f < 0 for f in split):
        raise ValueError(f"split fractions must be >= 0 and sum to 1, got {split}")
    target_dir = root / TARGET
    if not target_dir.is_dir():
        raise DatasetError(f"missing target group directory {target_dir}")
    target_by_class = _load_group_dir(target_dir, TARGET, image_size, grayscale)

    aux_dir = root / AUXILIARY
    if aux_dir.is_dir():
        aux_by_class = _load_group_dir(aux_dir, AUXILIARY, image_size, grayscale)
    elif require_aux:
        raise DatasetError(
            f"missing auxiliary group directory {aux_dir} (required for joint training)"
        )
    else:
        aux_by_class = {}

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cls in sorted(target_by_class):
        samples = target_by_class[cls]
        order = rng.permutation(len(samples))
        n_train = int(len(samples) * split[0])
        n_val = int(len(samples) * split[1])
        for pos, idx in enumerate(order):
            if pos < n_train:
                train.append(samples[idx])
            elif pos < n_train + n_val:
                val.append(samples[idx])
            else:
                test.append(samples[idx])
    aux_pool = [s for cls in sorted(aux_by_class) for s in aux_by_class[cls]]
    layout = GroupLayout(k=len(target_by_class), m=len(aux_by_class))
    return GroupedDataset(layout, train, val, test, aux_pool)


def save_image_dir(dataset: GroupedDataset, root: str | Path) -> Path:
    """Write a dataset as ``<root>/<group>/<class>/*.png`` (8-bit grayscale
    or RGB).  Target splits are merged; the loader re-splits on read."""
    from PIL import Image

    root = Path(root)
    groups = {
        TARGET: dataset.target_train + dataset.target_val + dataset.target_test,
        AUXILIARY: dataset.aux_pool,
    }
    for group, samples in groups.items():
        if not samples:
            continue
        counters: dict[int, int] = {}
        for s in samples:
            idx = counters.get(s.class_index, 0)
            counters[s.class_index] = idx + 1
            cls_dir = root / group / f"class_{s.class_index:03d}"
            cls_dir.mkdir(parents=True, exist_ok=True)
            arr = np.clip(s.features, 0.0, 1.0)
            if arr.shape[-1] == 1:
                img = Image.fromarray((arr[..., 0] * 255).round().astype(np.uint8), "L")
            else:
                img = Image.fromarray((arr * 255).round().astype(np.uint8), "RGB")
            img.save(cls_dir / f"img_{idx:04d}.png")
    return root
