"""Regularization by joint training over target and auxiliary class groups.

A classifier head is widened with extra outputs for an auxiliary dataset
and trained on mixed half-and-half batches under a grouped loss: a
lambda-weighted cross-entropy per group plus a penalty on prediction mass
that crosses groups.  After training, the auxiliary outputs can be ignored
(delimited accuracy) or stripped entirely.

Main entry points: :class:`MultiGroupImageClassifier` for the estimator
API, :func:`train` for the raw loop, and ``simulearn.experiments`` plus the
``simulearn`` CLI for full experiment protocols.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    Batch,
    GroupedDataset,
    Sample,
    SyntheticConfig,
    compose_batch,
    epoch_plan,
    load_image_dir,
    save_image_dir,
    synth_generate,
)
from .estimator import MultiGroupImageClassifier
from .groups import AUXILIARY, TARGET, GroupLayout, Hyperparameters, decode_label, encode_label
from .interpret import (
    AuxClassActivation,
    ClassChannelVector,
    Heatmap,
    LayerCorrelationReport,
    class_channel_vector,
    grad_cam,
    layer_correlation,
    pearson,
    top_activating_aux,
)
from .losses import cce, group_penalty, sll, sll_batch, sll_grad_logits, weighted_group_loss, wgcc
from .metrics import (
    EvaluationReport,
    accuracy,
    confusion_matrix,
    dacc,
    evaluate_predictions,
    inter_group_error_rate,
    roc_auc_ovr,
    roc_curve,
)
from .model import (
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    ModelSpec,
    ParameterStore,
    Relu,
    SoftmaxHead,
    build_cnn_spec,
    extend_multi_group,
    init_params,
    model_backward,
    model_backward_logits,
    model_forward,
    strip_auxiliary_head,
)
from .optim import AdaGradState, adagrad_step, sgd_step
from .training import EpochStats, TrainConfig, TrainResult, train

__version__ = "0.1.0"
