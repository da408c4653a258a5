"""Concept-bottleneck difficulty scoring and coverage-centric coreset selection."""

from .bottleneck import Bottleneck, ConceptCatalog, assemble_bottleneck, select_discriminative
from .sampler import SelectionSpec, ccs_select, lookup_cutoff, random_select
from .scorer import (
    BottleneckLayer,
    TrainConfig,
    compute_aum,
    concept_similarity,
    score_dataset,
    train_bottleneck,
    zero_shot_pseudo_labels,
)
from .tensor_io import (
    Coreset,
    EmbeddingMatrix,
    LabelVector,
    ScoreEntry,
    ScoreTable,
    read_coreset,
    read_embeddings,
    read_labels,
    read_scores,
    write_coreset,
    write_embeddings,
    write_labels,
    write_scores,
)

__version__ = "0.1.0"

__all__ = [
    "Bottleneck",
    "BottleneckLayer",
    "ConceptCatalog",
    "Coreset",
    "EmbeddingMatrix",
    "LabelVector",
    "ScoreEntry",
    "ScoreTable",
    "SelectionSpec",
    "TrainConfig",
    "assemble_bottleneck",
    "ccs_select",
    "compute_aum",
    "concept_similarity",
    "lookup_cutoff",
    "random_select",
    "read_coreset",
    "read_embeddings",
    "read_labels",
    "read_scores",
    "score_dataset",
    "select_discriminative",
    "train_bottleneck",
    "write_coreset",
    "write_embeddings",
    "write_labels",
    "write_scores",
    "zero_shot_pseudo_labels",
    "__version__",
]
