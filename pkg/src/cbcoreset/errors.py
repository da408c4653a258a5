"""Exception hierarchy shared across the toolkit.

Every error carries a stable machine-readable ``code`` plus the process
exit code the CLI maps it to (1 = configuration, 2 = file I/O or format,
3 = numerical failure).
"""

from __future__ import annotations


class CbcError(Exception):
    """Base class for all toolkit errors."""

    code = "error"
    exit_code = 1

    def to_json(self) -> dict:
        return {"error": self.code, "message": str(self)}


# --- configuration / validation (exit code 1) ---

class ConfigError(CbcError):
    code = "config_error"


class InvalidK(ConfigError):
    code = "invalid_k"


class EmptyCatalog(ConfigError):
    code = "empty_catalog"


class MissingConceptEmbedding(ConfigError):
    code = "missing_concept_embedding"

    def __init__(self, concepts):
        self.concepts = list(concepts)
        super().__init__(
            "no embedding provided for concept(s): " + ", ".join(repr(c) for c in self.concepts)
        )


class DimensionMismatch(ConfigError):
    code = "dimension_mismatch"


class EmptyDataset(ConfigError):
    code = "empty_dataset"


class EmptyTrajectory(ConfigError):
    code = "empty_trajectory"


class EmptyCoreset(ConfigError):
    code = "empty_coreset"


class InvalidSpec(ConfigError):
    code = "invalid_spec"


class BudgetExceedsPool(ConfigError):
    code = "budget_exceeds_pool"


class UnknownConfig(ConfigError):
    code = "unknown_config"


# --- file format / I/O (exit code 2) ---

class FormatError(CbcError):
    code = "format_error"
    exit_code = 2


class BadMagic(FormatError):
    code = "bad_magic"


class VersionMismatch(FormatError):
    code = "version_mismatch"


class TruncatedPayload(FormatError):
    code = "truncated_payload"


class NonFiniteValues(FormatError):
    code = "non_finite_values"


class OutOfRangeLabel(FormatError):
    code = "out_of_range_label"


# --- numerical failures (exit code 3) ---

class NumericalError(CbcError):
    code = "numerical_error"
    exit_code = 3


class NonFiniteLoss(NumericalError):
    code = "non_finite_loss"

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
