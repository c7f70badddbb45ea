"""Training loops for the base (target-only) and joint (mixed-batch) modes.

Joint mode follows the mixed-batch procedure: every step takes the next
half-batch of target samples plus a freshly shuffled half-batch from the
auxiliary pool, computes the grouped loss on the combined batch, and
updates all parameters.  Base mode is the same loop with target-only
batches and the loss pinned to plain cross-entropy.

All per-epoch randomness (target shuffle, auxiliary draws, dropout masks)
comes from one stream seeded with ``(seed, epoch)``, so a run resumed from
a checkpoint at an epoch boundary reproduces the uninterrupted run
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Batch, GroupedDataset, compose_batch, epoch_plan, stack_features, stack_labels
from .errors import TrainingDivergence
from .groups import GroupLayout, Hyperparameters
from .losses import sll_batch, sll_grad_logits
from .metrics import dacc
from .model import ModelSpec, ParameterStore, model_backward_logits, model_forward
from .optim import AdaGradState, adagrad_step, sgd_step

MODES = ("baseline", "dropout", "simultaneous")
OPTIMIZERS = ("sgd", "adagrad")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 500
    batch_size: int = 32
    optimizer: str = "adagrad"
    lam: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    mode: str = "baseline"
    dropout_rate: float = 0.0
    seed: int = 0
    shuffle_target: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ValueError(f"batch size must be even and >= 2, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "dropout" and not 0.0 < self.dropout_rate < 1.0:
            raise ValueError(
                f"dropout mode needs a rate in (0, 1), got {self.dropout_rate}"
            )
        Hyperparameters(self.lam, self.alpha, self.beta)  # range checks

    @property
    def hyperparameters(self) -> Hyperparameters:
        if self.mode == "simultaneous":
            return Hyperparameters(self.lam, self.alpha, self.beta)
        # target-only training is plain cross-entropy
        return Hyperparameters(lam=1.0, alpha=0.0, beta=0.0)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_dacc: float


@dataclass
class TrainResult:
    spec: ModelSpec
    params: ParameterStore
    best_params: ParameterStore
    best_epoch: int
    history: list[EpochStats]
    step_losses: list[float]
    optimizer_state: AdaGradState | None = None
    batch_provenance: list[tuple] = field(default_factory=list)


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def train(
    spec: ModelSpec,
    params: ParameterStore,
    dataset: GroupedDataset,
    config: TrainConfig,
    *,
    start_epoch: int = 0,
    optimizer_state: AdaGradState | None = None,
    keep_batch_provenance: bool = False,
) -> TrainResult:
    """Run ``config.epochs`` total epochs (resuming from ``start_epoch``).

    Records mean training loss and validation delimited accuracy per epoch
    and returns both the final parameters and the epoch-best checkpoint by
    validation dacc (earliest epoch wins ties).  Aborts with
    :class:`TrainingDivergence` if the loss becomes non-finite.
    """
    joint = config.mode == "simultaneous"
    layout = dataset.layout if joint else GroupLayout(k=dataset.layout.k, m=0)
    if joint:
        if spec.aux_outputs != dataset.layout.m or dataset.layout.m < 1:
            raise ValueError(
                f"joint mode needs a head with m={dataset.layout.m} auxiliary outputs, "
                f"model has {spec.aux_outputs}"
            )
        if not dataset.aux_pool:
            raise ValueError("joint mode needs a non-empty auxiliary pool")
    else:
        if spec.aux_outputs != 0:
            raise ValueError("target-only modes need a head without auxiliary outputs")
    if spec.target_outputs != dataset.layout.k:
        raise ValueError(
            f"head has {spec.target_outputs} target outputs, dataset has {dataset.layout.k} classes"
        )

    h = config.hyperparameters
    params = params.copy()
    if config.optimizer == "adagrad" and optimizer_state is None:
        optimizer_state = AdaGradState.for_params(params)

    val_x = stack_features(dataset.target_val) if dataset.target_val else None
    val_y = stack_labels(layout, dataset.target_val) if dataset.target_val else None

    history: list[EpochStats] = []
    step_losses: list[float] = []
    provenance: list[tuple] = []
    best_params = params.copy()
    best_epoch = start_epoch
    best_dacc = -np.inf

    for epoch in range(start_epoch, config.epochs):
        rng = _epoch_rng(config.seed, epoch)
        epoch_losses = []
        for step, batch in enumerate(_epoch_batches(dataset, layout, config, rng, joint)):
            probs, cache = model_forward(
                spec, params, batch.inputs, training=True, rng=rng
            )
            logits = cache[-1]["logits"]
            loss = sll_batch(batch.labels, probs, h, layout=layout)
            if not np.isfinite(loss):
                raise TrainingDivergence(epoch, step, loss)
            dlogits = sll_grad_logits(batch.labels, logits, h, layout=layout)
            dlogits /= batch.labels.shape[0]
            grads, _ = model_backward_logits(spec, params, cache, dlogits)
            if config.optimizer == "sgd":
                params = sgd_step(params, grads, config.learning_rate)
            else:
                params, optimizer_state = adagrad_step(
                    params, grads, optimizer_state, config.learning_rate
                )
            epoch_losses.append(loss)
            if keep_batch_provenance:
                provenance.append((epoch, step, batch.provenance))
        step_losses.extend(epoch_losses)

        if val_x is not None:
            val_probs, _ = model_forward(spec, params, val_x)
            val_dacc = dacc(val_probs, val_y, layout)
        else:
            val_dacc = float("nan")
        history.append(EpochStats(epoch, float(np.mean(epoch_losses)), val_dacc))
        if np.isfinite(val_dacc) and val_dacc > best_dacc:
            best_dacc = val_dacc
            best_params = params.copy()
            best_epoch = epoch

    if not np.isfinite(best_dacc):
        best_params = params.copy()
        best_epoch = config.epochs - 1
    return TrainResult(
        spec=spec,
        params=params,
        best_params=best_params,
        best_epoch=best_epoch,
        history=history,
        step_losses=step_losses,
        optimizer_state=optimizer_state,
        batch_provenance=provenance,
    )


def _epoch_batches(dataset, layout, config, rng, joint):
    if joint:
        for idx in epoch_plan(dataset, config.batch_size, rng, shuffle=config.shuffle_target):
            target_slice = [dataset.target_train[i] for i in idx]
            yield compose_batch(layout, target_slice, dataset.aux_pool, config.batch_size, rng)
    else:
        n = len(dataset.target_train)
        if n < config.batch_size:
            raise ValueError(
                f"target training set has {n} samples, need at least {config.batch_size}"
            )
        order = rng.permutation(n) if config.shuffle_target else np.arange(n)
        steps = n // config.batch_size
        for s in range(steps):
            idx = order[s * config.batch_size : (s + 1) * config.batch_size]
            samples = [dataset.target_train[i] for i in idx]
            yield Batch(
                inputs=stack_features(samples),
                labels=stack_labels(layout, samples),
                provenance=tuple(("target", int(i)) for i in idx),
            )
