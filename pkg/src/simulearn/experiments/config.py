"""Experiment configuration files.

Configs are INI-style key-value text, parsed with :mod:`configparser`.
One file fully determines an experiment; re-running the same config with
the same seeds reproduces every output byte for byte.  The schema is
versioned through the required ``schema_version`` key.

Schema (see the README for the full annotated example)::

    [experiment]
    schema_version = 1          ; required, must be 1
    name = demo                 ; run label, used in file names
    seeds = 0, 1, 2             ; one training run per (mode, seed)
    modes = baseline, dropout:0.5, sl   ; sl uses [train] lam, sl:0.3 overrides
    workers = 1                 ; parallel runs
    reduce = 1.0                ; stratified fraction of target train kept

    [dataset]
    source = synthetic          ; or "directory"
    ...synthetic keys: k, m, image_size, train_per_class, val_per_class,
       test_per_class, aux_per_class, noise, phase_jitter, dataset_seed
    ...directory keys: path, image_size, grayscale, split_seed

    [model]
    conv_filters = 8, 16
    kernel_size = 3
    conv_stride = 2
    n1 = 32
    n2 = 16

    [train]
    learning_rate = 0.01
    epochs = 30
    batch_size = 32
    optimizer = adagrad
    lam = 0.7
    alpha = 1.0
    beta = 1.0
    shuffle_target = true

    [sweep]
    lambdas = 0.1, 0.2, ..., 1.0 (explicit list)

    [interpret]
    layers =                    ; blank means every conv layer
    top_classes = 5
    top_instances = 5
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from ..data import SyntheticConfig
from ..errors import ConfigError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ModeSpec:
    """One experiment arm: baseline, dropout(rate), or sl(lam)."""

    kind: str
    dropout: float = 0.0
    lam: float | None = None

    @property
    def label(self) -> str:
        if self.kind == "dropout":
            return f"dropout{self.dropout:g}"
        if self.kind == "sl":
            return f"sl_lam{self.lam:g}" if self.lam is not None else "sl"
        return "baseline"


@dataclass(frozen=True)
class DirectoryConfig:
    path: Path
    image_size: int = 32
    grayscale: bool = True
    split_seed: int = 0


@dataclass(frozen=True)
class ModelConfig:
    conv_filters: tuple[int, ...] = (8, 16)
    kernel_size: int = 3
    conv_stride: int = 2
    n1: int = 32
    n2: int = 16


@dataclass(frozen=True)
class TrainParams:
    learning_rate: float = 0.01
    epochs: int = 30
    batch_size: int = 32
    optimizer: str = "adagrad"
    lam: float = 0.7
    alpha: float = 1.0
    beta: float = 1.0
    shuffle_target: bool = True


@dataclass(frozen=True)
class InterpretParams:
    layers: tuple[str, ...] = ()
    top_classes: int = 5
    top_instances: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seeds: tuple[int, ...]
    modes: tuple[ModeSpec, ...]
    dataset: SyntheticConfig | DirectoryConfig
    dataset_seed: int | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainParams = field(default_factory=TrainParams)
    sweep_lambdas: tuple[float, ...] = ()
    interpret: InterpretParams = field(default_factory=InterpretParams)
    workers: int = 1
    reduce: float = 1.0


def _parse_mode(token: str) -> ModeSpec:
    token = token.strip()
    if token == "baseline":
        return ModeSpec("baseline")
    if token == "sl":
        return ModeSpec("sl")
    if token.startswith("sl:"):
        lam = _parse_float("experiment", "modes", token.split(":", 1)[1])
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(f"sl lambda {lam} outside [0, 1]", section="experiment", field="modes")
        return ModeSpec("sl", lam=lam)
    if token.startswith("dropout:"):
        rate = _parse_float("experiment", "modes", token.split(":", 1)[1])
        if not 0.0 < rate < 1.0:
            raise ConfigError(
                f"dropout rate {rate} outside (0, 1)", section="experiment", field="modes"
            )
        return ModeSpec("dropout", dropout=rate)
    raise ConfigError(f"unknown mode token {token!r}", section="experiment", field="modes")


def _parse_float(section, field_, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"not a number: {raw!r}", section=section, field=field_) from None


def _parse_int(section, field_, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"not an integer: {raw!r}", section=section, field=field_) from None


def _parse_bool(section, field_, raw):
    value = raw.strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}", section=section, field=field_)


def _split_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _int_or_tuple(section, field_, raw):
    items = _split_list(raw)
    if len(items) == 1:
        return _parse_int(section, field_, items[0])
    return tuple(_parse_int(section, field_, item) for item in items)


class _Section:
    """Typed accessors over one config section with error locations."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.data = dict(parser[name]) if parser.has_section(name) else {}

    def get(self, key, default=None):
        return self.data.get(key, default)

    def floatv(self, key, default):
        raw = self.data.get(key)
        return default if raw is None else _parse_float(self.name, key, raw)

    def intv(self, key, default):
        raw = self.data.get(key)
        return default if raw is None else _parse_int(self.name, key, raw)

    def boolv(self, key, default):
        raw = self.data.get(key)
        return default if raw is None else _parse_bool(self.name, key, raw)

    def counts(self, key, default):
        raw = self.data.get(key)
        return default if raw is None else _int_or_tuple(self.name, key, raw)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc

    exp = _Section(parser, "experiment")
    version = exp.intv("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {version}",
            section="experiment",
            field="schema_version",
        )
    name = exp.get("name", path.stem)
    seeds = tuple(
        _parse_int("experiment", "seeds", s) for s in _split_list(exp.get("seeds", "0"))
    )
    if not seeds:
        raise ConfigError("need at least one seed", section="experiment", field="seeds")
    modes = tuple(_parse_mode(tok) for tok in _split_list(exp.get("modes", "baseline")))
    if not modes:
        raise ConfigError("need at least one mode", section="experiment", field="modes")
    workers = exp.intv("workers", 1)
    if workers < 1:
        raise ConfigError("workers must be >= 1", section="experiment", field="workers")
    reduce_ = exp.floatv("reduce", 1.0)
    if not 0.0 < reduce_ <= 1.0:
        raise ConfigError(
            f"reduce must lie in (0, 1], got {reduce_}", section="experiment", field="reduce"
        )

    ds = _Section(parser, "dataset")
    source = ds.get("source", "synthetic")
    dataset_seed = ds.intv("dataset_seed", None)
    if source == "synthetic":
        try:
            dataset = SyntheticConfig(
                k=ds.intv("k", 6),
                m=ds.intv("m", 20),
                image_size=ds.intv("image_size", 32),
                train_per_class=ds.counts("train_per_class", 40),
                val_per_class=ds.counts("val_per_class", 10),
                test_per_class=ds.counts("test_per_class", 10),
                aux_per_class=ds.counts("aux_per_class", 12),
                noise=ds.floatv("noise", 0.25),
                phase_jitter=ds.floatv("phase_jitter", 0.0),
                aux_family=ds.get("aux_family", "rings"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), section="dataset") from exc
    elif source == "directory":
        raw_path = ds.get("path")
        if not raw_path:
            raise ConfigError("directory source needs a path", section="dataset", field="path")
        dataset = DirectoryConfig(
            path=Path(raw_path),
            image_size=ds.intv("image_size", 32),
            grayscale=ds.boolv("grayscale", True),
            split_seed=ds.intv("split_seed", 0),
        )
    else:
        raise ConfigError(
            f"unknown dataset source {source!r}", section="dataset", field="source"
        )

    mdl = _Section(parser, "model")
    filters = mdl.counts("conv_filters", (8, 16))
    if isinstance(filters, int):
        filters = (filters,)
    model = ModelConfig(
        conv_filters=tuple(filters),
        kernel_size=mdl.intv("kernel_size", 3),
        conv_stride=mdl.intv("conv_stride", 2),
        n1=mdl.intv("n1", 32),
        n2=mdl.intv("n2", 16),
    )

    tr = _Section(parser, "train")
    train = TrainParams(
        learning_rate=tr.floatv("learning_rate", 0.01),
        epochs=tr.intv("epochs", 30),
        batch_size=tr.intv("batch_size", 32),
        optimizer=tr.get("optimizer", "adagrad"),
        lam=tr.floatv("lam", 0.7),
        alpha=tr.floatv("alpha", 1.0),
        beta=tr.floatv("beta", 1.0),
        shuffle_target=tr.boolv("shuffle_target", True),
    )
    if train.optimizer not in ("sgd", "adagrad"):
        raise ConfigError(
            f"unknown optimizer {train.optimizer!r}", section="train", field="optimizer"
        )
    if not 0.0 <= train.lam <= 1.0:
        raise ConfigError(f"lam must lie in [0, 1], got {train.lam}", section="train", field="lam")

    sw = _Section(parser, "sweep")
    lambdas = tuple(
        _parse_float("sweep", "lambdas", item)
        for item in _split_list(sw.get("lambdas", ""))
    )
    for lam in lambdas:
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(
                f"sweep lambda {lam} outside [0, 1]", section="sweep", field="lambdas"
            )

    it = _Section(parser, "interpret")
    interpret = InterpretParams(
        layers=tuple(_split_list(it.get("layers", ""))),
        top_classes=it.intv("top_classes", 5),
        top_instances=it.intv("top_instances", 5),
    )

    return ExperimentConfig(
        name=name,
        seeds=seeds,
        modes=modes,
        dataset=dataset,
        dataset_seed=dataset_seed,
        model=model,
        train=train,
        sweep_lambdas=lambdas,
        interpret=interpret,
        workers=workers,
        reduce=reduce_,
    )
