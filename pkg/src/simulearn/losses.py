"""Loss functions for joint training over target and auxiliary class groups.

Per-sample definitions, for a one-hot label ``y`` and a softmax prediction
``p`` of length ``n = k + m``:

* ``cce``               -sum_i y_i log p_i over the whole vector
* ``weighted_group_loss``  sum over groups G_i of w_i * cce restricted to G_i
* ``wgcc``              the two-group case with weights (lam, 1 - lam)
* ``group_penalty``     alpha * (sum_T y)(sum_A p) + beta * (sum_T p)(sum_A y),
                        which charges prediction mass placed in the group
                        the label does not belong to
* ``sll``               wgcc + group_penalty

Probabilities are clamped below at ``LOG_EPS`` before every log.  The
analytic logit gradient needs no clamp: its division by ``p`` cancels
symbolically (see :func:`sll_grad_logits`).  Batch reductions are
arithmetic means over samples.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError
from .groups import GroupLayout, Hyperparameters
from .ops import softmax

LOG_EPS = 1e-12


def _group_cce(label: np.ndarray, probs: np.ndarray) -> float:
    """Cross-entropy over one slice of the output vector."""
    return float(-np.sum(label * np.log(np.maximum(probs, LOG_EPS))))


def cce(label: np.ndarray, probs: np.ndarray) -> float:
    """Categorical cross-entropy over the full output vector."""
    label = np.asarray(label, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if label.shape != probs.shape:
        raise ShapeError(f"label shape {label.shape} != prediction shape {probs.shape}")
    return _group_cce(label, probs)


def weighted_group_loss(
    label: np.ndarray,
    probs: np.ndarray,
    groups: Sequence[Sequence[int]],
    weights: Sequence[float],
) -> float:
    """Weighted sum of per-group cross-entropies.

    ``groups`` must partition the output indices ``0..n-1``; ``weights`` has
    one non-negative entry per group.
    """
    label = np.asarray(label, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if label.shape != probs.shape:
        raise ShapeError(f"label shape {label.shape} != prediction shape {probs.shape}")
    if len(groups) != len(weights):
        raise ValueError(
            f"got {len(groups)} groups but {len(weights)} weights"
        )
    index_groups = [np.asarray(g, dtype=np.intp) for g in groups]
    flat = np.concatenate([g for g in index_groups]) if index_groups else np.array([], dtype=np.intp)
    if not np.array_equal(np.sort(flat), np.arange(label.shape[-1])):
        raise ValueError("groups must partition the output indices exactly once each")
    total = 0.0
    for idx, weight in zip(index_groups, weights):
        w = float(weight)
        if w < 0.0:
            raise ValueError(f"group weights must be >= 0, got {w}")
        total += w * _group_cce(label[idx], probs[idx])
    return total


def wgcc(label: np.ndarray, probs: np.ndarray, lam: float, *, layout: GroupLayout) -> float:
    """Group-weighted cross-entropy: lam on the target term, 1-lam on the auxiliary."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    label = np.asarray(label, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if label.shape != probs.shape or label.shape[-1] != layout.n:
        raise ShapeError(
            f"label/prediction shapes {label.shape}/{probs.shape} do not match layout n={layout.n}"
        )
    t, a = layout.target_slice, layout.aux_slice
    total = 0.0
    total += float(lam) * _group_cce(label[t], probs[t])
    total += (1.0 - float(lam)) * _group_cce(label[a], probs[a])
    return total


def group_penalty(
    label: np.ndarray,
    probs: np.ndarray,
    alpha: float,
    beta: float,
    *,
    layout: GroupLayout,
) -> float:
    """Cross-group penalty on misplaced prediction mass.

    For a target-group sample this reduces to ``alpha`` times the prediction
    mass assigned to auxiliary outputs; for an auxiliary-group sample, to
    ``beta`` times the mass assigned to target outputs.  Setting ``beta = 0``
    therefore penalizes only target-sample leakage, and vice versa.
    """
    if alpha < 0.0 or beta < 0.0:
        raise ValueError(f"alpha and beta must be >= 0, got {alpha}, {beta}")
    label = np.asarray(label, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    t, a = layout.target_slice, layout.aux_slice
    y_t = float(np.sum(label[t]))
    y_a = float(np.sum(label[a]))
    p_t = float(np.sum(probs[t]))
    p_a = float(np.sum(probs[a]))
    return float(alpha) * (y_t * p_a) + float(beta) * (p_t * y_a)


def sll(
    label: np.ndarray,
    probs: np.ndarray,
    h: Hyperparameters,
    *,
    layout: GroupLayout,
) -> float:
    """Full training loss: group-weighted cross-entropy plus group penalty."""
    return wgcc(label, probs, h.lam, layout=layout) + group_penalty(
        label, probs, h.alpha, h.beta, layout=layout
    )


def sll_batch(
    labels: np.ndarray,
    probs: np.ndarray,
    h: Hyperparameters,
    *,
    layout: GroupLayout,
) -> float:
    """Mean per-sample loss over a batch (vectorized)."""
    labels = np.asarray(labels, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if labels.shape != probs.shape or labels.ndim != 2 or labels.shape[1] != layout.n:
        raise ShapeError(
            f"expected matching (B, {layout.n}) arrays, got {labels.shape} and {probs.shape}"
        )
    t, a = layout.target_slice, layout.aux_slice
    logp = np.log(np.maximum(probs, LOG_EPS))
    ce = -h.lam * np.sum(labels[:, t] * logp[:, t], axis=1)
    ce -= (1.0 - h.lam) * np.sum(labels[:, a] * logp[:, a], axis=1)
    y_t = labels[:, t].sum(axis=1)
    y_a = labels[:, a].sum(axis=1)
    p_t = probs[:, t].sum(axis=1)
    p_a = probs[:, a].sum(axis=1)
    gp = h.alpha * y_t * p_a + h.beta * p_t * y_a
    return float(np.mean(ce + gp))


def sll_grad_logits(
    labels: np.ndarray,
    logits: np.ndarray,
    h: Hyperparameters,
    *,
    layout: GroupLayout,
) -> np.ndarray:
    """Exact gradient of the per-sample loss with respect to the logits.

    Accepts a single sample ``(n,)`` or a batch ``(B, n)`` and returns the
    same shape; batch entries are per-sample gradients (callers average).

    The cross-entropy term is contracted through the softmax Jacobian in
    the form where the division by ``p`` cancels analytically,

        dCE/dz_i = p_i * (lam * Y_T + (1 - lam) * Y_A) - lam_i * y_i,

    which stays finite even where softmax saturates to an exact one-hot
    (the clamped loss is flat there, but this unclamped gradient keeps
    pushing mass back instead of silently zeroing).  It agrees with finite
    differences of the clamped loss everywhere the clamp is inactive.
    """
    labels = np.asarray(labels, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    if labels.shape != logits.shape or labels.shape[-1] != layout.n:
        raise ShapeError(
            f"label shape {labels.shape} and logit shape {logits.shape} must both end in n={layout.n}"
        )
    p = softmax(logits)
    t, a = layout.target_slice, layout.aux_slice
    y_t = labels[..., t].sum(axis=-1, keepdims=True)
    y_a = labels[..., a].sum(axis=-1, keepdims=True)

    weighted_label = np.empty_like(labels)
    weighted_label[..., t] = h.lam * labels[..., t]
    weighted_label[..., a] = (1.0 - h.lam) * labels[..., a]
    label_mass = h.lam * y_t + (1.0 - h.lam) * y_a
    grad = p * label_mass - weighted_label

    # penalty term: dGP/dp is constant per group, contract normally
    w_gp = np.empty_like(p)
    w_gp[..., t] = h.beta * y_a
    w_gp[..., a] = h.alpha * y_t
    inner = np.sum(w_gp * p, axis=-1, keepdims=True)
    grad += p * (w_gp - inner)
    return grad
