"""Difficulty scoring via a linear layer trained on concept similarities.

The score of a sample is the area under its margin curve: a single linear
layer maps visual-to-concept similarity rows to class scores, is trained
with mini-batch SGD on cross-entropy, and after every epoch the margin of
each sample (likelihood of its assigned class minus the best other class)
is recorded. Averaging those margins over all epochs gives the per-sample
AUM. In label-free mode the assigned class is a zero-shot pseudo-label
computed from class prompt embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bottleneck import Bottleneck
from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptyTrajectory,
    InvalidSpec,
    NonFiniteLoss,
)
from .tensor_io import EmbeddingMatrix, LabelVector, ScoreEntry, ScoreTable

LIKELIHOOD_MODES = ("softmax", "logit")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the bottleneck-layer trainer."""

    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0
    likelihood: str = "softmax"

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidSpec(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidSpec(f"batch_size must be >= 1, got {self.batch_size}")
        if self.likelihood not in LIKELIHOOD_MODES:
            raise InvalidSpec(f"likelihood must be one of {LIKELIHOOD_MODES}")


@dataclass(frozen=True)
class BottleneckLayer:
    """Trained linear layer: weights of shape (num_classes, bottleneck_size)."""

    weights: np.ndarray
    config: TrainConfig

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise InvalidSpec(f"weights must be 2-D, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise InvalidSpec("weights contain NaN or Inf")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def logits(self, sim: np.ndarray) -> np.ndarray:
        return np.asarray(sim, dtype=np.float64) @ self.weights.T


@dataclass(frozen=True)
class TrainResult:
    layer: BottleneckLayer
    margins: np.ndarray  # (n, epochs)
    snapshots: tuple[np.ndarray, ...] | None = None


def concept_similarity(visual: EmbeddingMatrix, ec: EmbeddingMatrix) -> np.ndarray:
    """Dot products between every visual row and every bottleneck concept row."""
    if visual.cols != ec.cols:
        raise DimensionMismatch(
            f"visual dim {visual.cols} != concept dim {ec.cols}"
        )
    sim = visual.data.astype(np.float64) @ ec.data.astype(np.float64).T
    if not np.isfinite(sim).all():
        raise InvalidSpec("similarity matrix contains NaN or Inf")
    return sim


def zero_shot_pseudo_labels(
    visual: EmbeddingMatrix, class_prompt_embeddings: EmbeddingMatrix
) -> LabelVector:
    """Assign each sample the class whose prompt embedding it aligns with best.

    Ties break toward the smallest class index.
    """
    if visual.cols != class_prompt_embeddings.cols:
        raise DimensionMismatch(
            f"visual dim {visual.cols} != prompt dim {class_prompt_embeddings.cols}"
        )
    scores = visual.data.astype(np.float64) @ class_prompt_embeddings.data.astype(np.float64).T
    labels = np.argmax(scores, axis=1).astype(np.uint32)
    return LabelVector(labels=labels, num_classes=class_prompt_embeddings.rows)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ce_loss_and_grad(
    W: np.ndarray, sim: np.ndarray, labels: np.ndarray, weight_decay: float = 0.0
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of ``softmax(sim @ W.T)`` plus coupled L2, and its W-gradient.

    The L2 term is ``weight_decay/2 * ||W||^2`` so the analytic gradient is
    the classical "weight decay added to the gradient" update.
    """
    n = sim.shape[0]
    logits = sim @ W.T
    rows = np.arange(n)
    # log-softmax via logsumexp: stays finite for any finite logits
    shift = logits.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    loss = float(np.mean(lse - logits[rows, labels]))
    loss += 0.5 * weight_decay * float(np.sum(W * W))
    p = softmax(logits)
    p[rows, labels] -= 1.0
    grad = (p.T @ sim) / n + weight_decay * W
    return loss, grad


def _margins(logits: np.ndarray, labels: np.ndarray, mode: str) -> np.ndarray:
    """Likelihood of the assigned class minus the best competing class."""
    h = softmax(logits) if mode == "softmax" else logits
    n = h.shape[0]
    if h.shape[1] < 2:
        raise InvalidSpec("margins need at least 2 classes")
    rows = np.arange(n)
    assigned = h[rows, labels]
    rival = h.copy()
    rival[rows, labels] = -np.inf
    return assigned - rival.max(axis=1)


def train_bottleneck(
    sim: np.ndarray,
    labels: LabelVector,
    cfg: TrainConfig = TrainConfig(),
    record_snapshots: bool = False,
) -> TrainResult:
    """Mini-batch SGD (momentum + coupled weight decay) from a zero-initialized W.

    Indices are reshuffled each epoch with a generator seeded from
    ``cfg.seed``; the last partial batch is kept. After every epoch a full
    evaluation pass records each sample's margin, so the trajectory does not
    depend on batch order. Zero init means the epoch-0 state has uniform
    likelihoods and an exact margin of 0 everywhere.
    """
    sim = np.asarray(sim, dtype=np.float64)
    n = sim.shape[0]
    if n == 0:
        raise EmptyDataset("cannot train on an empty similarity matrix")
    if len(labels) != n:
        raise DimensionMismatch(f"{len(labels)} labels for {n} samples")
    y = labels.labels.astype(np.int64)
    num_classes = labels.num_classes
    if num_classes < 2:
        raise InvalidSpec("training needs at least 2 classes")

    W = np.zeros((num_classes, sim.shape[1]), dtype=np.float64)
    velocity = np.zeros_like(W)
    rng = np.random.default_rng(cfg.seed)
    margins = np.empty((n, cfg.epochs), dtype=np.float64)
    snapshots: list[np.ndarray] = []

    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = perm[start : start + cfg.batch_size]
                loss, grad = ce_loss_and_grad(W, sim[batch], y[batch], cfg.weight_decay)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(epoch)
                velocity = cfg.momentum * velocity + grad
                W = W - cfg.lr * velocity
            epoch_margins = _margins(sim @ W.T, y, cfg.likelihood)
            if not np.isfinite(epoch_margins).all():
                raise NonFiniteLoss(epoch, f"weights diverged by epoch {epoch}")
            margins[:, epoch] = epoch_margins
            if record_snapshots:
                snapshots.append(W.copy())

    layer = BottleneckLayer(weights=W, config=cfg)
    return TrainResult(
        layer=layer,
        margins=margins,
        snapshots=tuple(snapshots) if record_snapshots else None,
    )


def compute_aum(margins: np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    """Arithmetic mean margin per sample over the recorded epochs."""
    m = np.asarray(margins, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2 or m.shape[1] == 0:
        raise EmptyTrajectory("margin trajectory is empty")
    return m.mean(axis=1)


def score_dataset(
    visual: EmbeddingMatrix,
    bottleneck: Bottleneck,
    cfg: TrainConfig = TrainConfig(),
    labels: LabelVector | None = None,
    prompt_embeddings: EmbeddingMatrix | None = None,
    keep_margins: bool = False,
) -> ScoreTable:
    """Full scoring pass: similarities, bottleneck-layer training, AUM per sample.

    Exactly one of ``labels`` (labeled mode) or ``prompt_embeddings``
    (label-free mode) must be given; label-free rows carry the pseudo-label
    used for the margin and a null label.
    """
    if (labels is None) == (prompt_embeddings is None):
        raise InvalidSpec("provide exactly one of labels or prompt_embeddings")
    if bottleneck.ec is None:
        raise InvalidSpec("bottleneck has no embedding matrix; assemble it first")
    if visual.rows == 0:
        raise EmptyDataset("no samples to score")

    pseudo = None
    if prompt_embeddings is not None:
        if prompt_embeddings.rows != len(bottleneck.classes):
            raise DimensionMismatch(
                f"{prompt_embeddings.rows} prompt rows for "
                f"{len(bottleneck.classes)} classes"
            )
        pseudo = zero_shot_pseudo_labels(visual, prompt_embeddings)
        train_labels = pseudo
    else:
        train_labels = labels

    sim = concept_similarity(visual, bottleneck.ec)
    result = train_bottleneck(sim, train_labels, cfg)
    aum = compute_aum(result.margins)

    entries = []
    for i in range(visual.rows):
        entries.append(
            ScoreEntry(
                index=i,
                aum=float(aum[i]),
                label=int(labels.labels[i]) if labels is not None else None,
                pseudo_label=int(pseudo.labels[i]) if pseudo is not None else None,
                margins=tuple(result.margins[i]) if keep_margins else None,
            )
        )
    return ScoreTable(entries=tuple(entries))
