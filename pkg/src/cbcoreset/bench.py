"""Desk-scale benchmark harness.

Real datasets and deep downstream models are out of reach for the test
suite, so this module fabricates embedding datasets with known geometry
(class centers on a sphere, Gaussian sample noise, concept vectors jittered
around the centers, an optional fraction of deliberately flipped labels)
and evaluates coresets by training the same linear probe used for scoring
and measuring held-out accuracy against the uncorrupted labels.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .bottleneck import Bottleneck, ConceptCatalog, assemble_bottleneck, select_discriminative
from .errors import EmptyCoreset, InvalidSpec
from .sampler import SelectionSpec, ccs_select, random_select
from .scorer import TrainConfig, concept_similarity, score_dataset, train_bottleneck
from .tensor_io import Coreset, EmbeddingMatrix, LabelVector, ScoreTable


@dataclass(frozen=True)
class SyntheticSpec:
    """Geometry of a fabricated embedding dataset."""

    num_classes: int = 10
    per_class: int = 100
    dim: int = 64
    separation: float = 1.0
    noise_sigma: float = 0.15
    mislabel_fraction: float = 0.0
    concepts_per_class: int = 5
    concept_jitter: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if min(self.num_classes, self.per_class, self.dim, self.concepts_per_class) < 1:
            raise InvalidSpec("all synthetic counts must be >= 1")
        if self.num_classes < 2:
            raise InvalidSpec("synthetic data needs at least 2 classes")
        if not 0.0 <= self.mislabel_fraction < 1.0:
            raise InvalidSpec(f"mislabel fraction must be in [0, 1), got {self.mislabel_fraction}")
        if self.noise_sigma < 0 or self.concept_jitter < 0 or self.separation <= 0:
            raise InvalidSpec("separation must be positive and sigmas non-negative")

    @property
    def n(self) -> int:
        return self.num_classes * self.per_class


@dataclass(frozen=True)
class SyntheticDataset:
    spec: SyntheticSpec
    visual: EmbeddingMatrix
    labels: LabelVector  # after mislabel injection
    true_labels: np.ndarray
    flipped: np.ndarray  # indices whose label was reassigned
    catalog: ConceptCatalog
    concept_embeddings: dict
    prompt_embeddings: EmbeddingMatrix

    def build_bottleneck(self, k: int | None = None, normalize: bool = True) -> Bottleneck:
        k = self.spec.concepts_per_class if k is None else k
        return assemble_bottleneck(
            select_discriminative(self.catalog, k), self.concept_embeddings, normalize=normalize
        )


def _unit_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    """Fabricate embeddings, concept catalog and labels with recorded flips."""
    rng = np.random.default_rng(spec.seed)
    d, N = spec.dim, spec.num_classes

    centers = _unit_rows(rng.standard_normal((N, d)))
    true_labels = np.repeat(np.arange(N, dtype=np.int64), spec.per_class)
    n = true_labels.size

    visual = spec.separation * centers[true_labels]
    visual = visual + spec.noise_sigma * rng.standard_normal((n, d))
    visual = _unit_rows(visual).astype(np.float32)

    class_names = [f"class_{c:02d}" for c in range(N)]
    catalog_map = {}
    concept_embeddings = {}
    for c, name in enumerate(class_names):
        attrs = [f"{name}_attr_{j}" for j in range(1, spec.concepts_per_class)]
        catalog_map[name] = attrs
        for concept in [name] + attrs:
            vec = spec.separation * centers[c] + spec.concept_jitter * rng.standard_normal(d)
            concept_embeddings[concept] = vec / np.linalg.norm(vec)

    labels = true_labels.copy()
    flip_count = round(spec.mislabel_fraction * n)
    flipped = np.sort(rng.choice(n, size=flip_count, replace=False)) if flip_count else np.empty(0, dtype=np.int64)
    if flip_count:
        offsets = rng.integers(1, N, size=flip_count)
        labels[flipped] = (labels[flipped] + offsets) % N

    return SyntheticDataset(
        spec=spec,
        visual=EmbeddingMatrix(visual, normalized=True),
        labels=LabelVector(labels.astype(np.uint32), N),
        true_labels=true_labels,
        flipped=flipped.astype(np.int64),
        catalog=ConceptCatalog.from_mapping(catalog_map),
        concept_embeddings=concept_embeddings,
        prompt_embeddings=EmbeddingMatrix(centers.astype(np.float32), normalized=True),
    )


def stratified_split(
    true_labels: np.ndarray, heldout_fraction: float = 0.2, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class split into (pool, heldout) index arrays, both sorted."""
    if not 0.0 < heldout_fraction < 1.0:
        raise InvalidSpec(f"heldout fraction must be in (0, 1), got {heldout_fraction}")
    rng = np.random.default_rng(seed)
    heldout = []
    for c in np.unique(true_labels):
        cls_idx = np.flatnonzero(true_labels == c)
        take = max(1, round(heldout_fraction * cls_idx.size))
        heldout.append(rng.choice(cls_idx, size=take, replace=False))
    heldout = np.sort(np.concatenate(heldout))
    pool = np.setdiff1d(np.arange(true_labels.size), heldout)
    return pool, heldout


@dataclass(frozen=True)
class EvalConfig:
    """How to turn a coreset into a held-out accuracy number."""

    ec: EmbeddingMatrix
    trainer: TrainConfig = TrainConfig()
    true_labels: np.ndarray | None = None  # falls back to the training labels
    heldout: np.ndarray | None = None  # generated from the split when absent
    heldout_fraction: float = 0.2
    split_seed: int = 0


def evaluate_coreset(
    visual: EmbeddingMatrix, labels: LabelVector, coreset: Coreset, cfg: EvalConfig
) -> float:
    """Train the linear probe on the coreset rows, report held-out accuracy.

    Held-out rows are excluded from training even if the coreset contains
    them, and accuracy is measured against the true labels.
    """
    if len(coreset) == 0:
        raise EmptyCoreset("cannot evaluate an empty coreset")
    truth = labels.labels.astype(np.int64) if cfg.true_labels is None else np.asarray(cfg.true_labels)
    if cfg.heldout is None:
        _, heldout = stratified_split(truth, cfg.heldout_fraction, cfg.split_seed)
    else:
        heldout = np.asarray(cfg.heldout)

    train_idx = np.setdiff1d(np.asarray(coreset.indices, dtype=np.int64), heldout)
    if train_idx.size == 0:
        raise EmptyCoreset("coreset is empty after removing held-out rows")

    sim = concept_similarity(visual, cfg.ec)
    result = train_bottleneck(
        sim[train_idx],
        LabelVector(labels.labels[train_idx], labels.num_classes),
        cfg.trainer,
    )
    predictions = np.argmax(result.layer.logits(sim[heldout]), axis=1)
    return float(np.mean(predictions == truth[heldout]))


def mislabeled_capture_rate(scores: ScoreTable, flips, beta: float) -> float:
    """Fraction of flipped samples that fall inside the bottom-beta hardest set.

    Returns NaN when no flips were recorded.
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidSpec(f"beta must be in [0, 1], got {beta}")
    flips = np.asarray(list(flips), dtype=np.int64)
    if flips.size == 0:
        return float("nan")
    n = len(scores)
    order = np.argsort(scores.aums(), kind="stable")
    bottom = set(int(i) for i in order[: int(np.floor(n * beta))])
    return float(np.mean([int(f) in bottom for f in flips]))


def separation_auc(scores: np.ndarray, is_positive: np.ndarray) -> float:
    """Probability that a random positive sample outscores a random negative one.

    Mann-Whitney statistic with midranks for ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_positive = np.asarray(is_positive, dtype=bool)
    n_pos = int(is_positive.sum())
    n_neg = int((~is_positive).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvalidSpec("AUC needs both positive and negative samples")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[is_positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class BenchmarkConfig:
    """Grid for the coreset-vs-random comparison on synthetic data.

    Scoring uses the stock trainer; the evaluation probe instead runs hot
    and unregularized until it converges on the coreset, which is what a
    fully trained downstream model would do and is where poisoned labels
    actually cost accuracy.
    """

    spec: SyntheticSpec = SyntheticSpec(per_class=200, mislabel_fraction=0.1)
    alpha: float = 0.9
    beta: float = 0.3
    bins: int = 50
    seeds: tuple[int, ...] = (0, 1, 2)
    k: int | None = None
    scorer: TrainConfig = TrainConfig()
    eval_trainer: TrainConfig = TrainConfig(lr=0.2, epochs=1000, weight_decay=0.0)
    heldout_fraction: float = 0.2


@dataclass(frozen=True)
class BenchmarkResult:
    rows: tuple[dict, ...]
    summary: dict

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["method", "alpha", "beta", "seed", "accuracy"]
            )
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row[k] for k in writer.fieldnames})

    def to_json(self, path) -> None:
        payload = {"rows": list(self.rows), "summary": self.summary}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def to_markdown(self) -> str:
        s = self.summary
        lines = [
            "# Synthetic coreset benchmark",
            "",
            f"- pruning rate alpha: {s['alpha']}, cutoff beta: {s['beta']}, seeds: {s['seeds']}",
            f"- dataset: {s['num_classes']} classes x {s['per_class']}/class, "
            f"dim {s['dim']}, mislabel fraction {s['mislabel_fraction']}",
            "",
            "| method | mean accuracy | std |",
            "|---|---|---|",
            f"| concept AUM + CCS | {s['ccs_mean']:.4f} | {s['ccs_std']:.4f} |",
            f"| random | {s['random_mean']:.4f} | {s['random_std']:.4f} |",
            "",
            f"Accuracy gap (CCS - random): **{s['gap']:+.4f}**",
            f"Mean mislabel capture rate at beta={s['beta']}: **{s['capture_mean']:.4f}**",
            "",
        ]
        return "\n".join(lines)


def run_benchmark(cfg: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkResult:
    """Score, select and evaluate CCS and random coresets over several seeds."""
    rows = []
    captures = []
    for seed in cfg.seeds:
        ds = generate_synthetic(replace(cfg.spec, seed=seed))
        bneck = ds.build_bottleneck(cfg.k)
        pool, heldout = stratified_split(ds.true_labels, cfg.heldout_fraction, seed)

        pool_visual = EmbeddingMatrix(ds.visual.data[pool], normalized=True)
        pool_labels = LabelVector(ds.labels.labels[pool], ds.labels.num_classes)
        table = score_dataset(
            pool_visual, bneck, replace(cfg.scorer, seed=seed), labels=pool_labels
        )

        spec = SelectionSpec(alpha=cfg.alpha, beta=cfg.beta, bins=cfg.bins, seed=seed)
        ccs_pool = ccs_select(table, spec)
        rand_pool = random_select(pool.size, spec.budget(pool.size), seed=seed)

        eval_cfg = EvalConfig(
            ec=bneck.ec,
            trainer=replace(cfg.eval_trainer, seed=seed),
            true_labels=ds.true_labels,
            heldout=heldout,
        )
        for method, pool_coreset in (("ccs", ccs_pool), ("random", rand_pool)):
            full_indices = tuple(int(i) for i in pool[list(pool_coreset.indices)])
            acc = evaluate_coreset(
                ds.visual, ds.labels, Coreset(indices=full_indices), eval_cfg
            )
            rows.append(
                {
                    "method": method,
                    "alpha": cfg.alpha,
                    "beta": cfg.beta if method == "ccs" else 0.0,
                    "seed": seed,
                    "accuracy": acc,
                }
            )

        pool_pos = {int(full): i for i, full in enumerate(pool)}
        flips_in_pool = [pool_pos[int(f)] for f in ds.flipped if int(f) in pool_pos]
        captures.append(mislabeled_capture_rate(table, flips_in_pool, cfg.beta))

    ccs_acc = np.array([r["accuracy"] for r in rows if r["method"] == "ccs"])
    rand_acc = np.array([r["accuracy"] for r in rows if r["method"] == "random"])
    summary = {
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "seeds": list(cfg.seeds),
        "num_classes": cfg.spec.num_classes,
        "per_class": cfg.spec.per_class,
        "dim": cfg.spec.dim,
        "mislabel_fraction": cfg.spec.mislabel_fraction,
        "ccs_mean": float(ccs_acc.mean()),
        "ccs_std": float(ccs_acc.std()),
        "random_mean": float(rand_acc.mean()),
        "random_std": float(rand_acc.std()),
        "gap": float(ccs_acc.mean() - rand_acc.mean()),
        "capture_mean": float(np.mean(captures)),
    }
    return BenchmarkResult(rows=tuple(rows), summary=summary)
