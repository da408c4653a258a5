"""Coverage-centric coreset selection.

Given per-sample difficulty scores, drop the hardest (lowest-scoring)
fraction, split the surviving score range into equal-width bins, and fill
the budget by visiting bins smallest-first so that sparse score regions are
never starved. An optional top-up pass draws any floor-induced remainder
uniformly from the unselected survivors so the requested size is hit
exactly. All tie-breaks (bin size, equal scores, cutoff boundary) go to the
smaller index, which makes the output a pure function of (scores, spec).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceedsPool, InvalidSpec, UnknownConfig
from .tensor_io import Coreset, ScoreTable

DEFAULT_BINS = 50

LABELED = "labeled"
LABEL_FREE = "label-free"

# (dataset, pruning-rate%) -> cutoff rate, for both scoring modes.
CUTOFF_TABLE = {
    LABELED: {
        "cifar10": {30: 0.0, 50: 0.0, 70: 0.10, 90: 0.30},
        "cifar100": {30: 0.10, 50: 0.20, 70: 0.20, 90: 0.50},
        "imagenet": {30: 0.0, 50: 0.10, 70: 0.20, 90: 0.30},
    },
    LABEL_FREE: {
        "cifar10": {30: 0.0, 50: 0.0, 70: 0.20, 90: 0.40},
        "cifar100": {30: 0.0, 50: 0.20, 70: 0.40, 90: 0.50},
        "imagenet": {30: 0.0, 50: 0.10, 70: 0.20, 90: 0.30},
    },
}

for _mode_table in CUTOFF_TABLE.values():
    for _dataset_table in _mode_table.values():
        assert all(0.0 <= b <= 0.5 for b in _dataset_table.values())


@dataclass(frozen=True)
class SelectionSpec:
    """Pruning rate alpha (fraction removed), cutoff rate beta, bin count, seed."""

    alpha: float
    beta: float = 0.0
    bins: int = DEFAULT_BINS
    seed: int = 0
    topup: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidSpec(f"alpha must be in [0, 1), got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            raise InvalidSpec(f"beta must be in [0, 1), got {self.beta}")
        if self.bins < 1:
            raise InvalidSpec(f"bins must be >= 1, got {self.bins}")

    def budget(self, n: int) -> int:
        m = round(n * (1.0 - self.alpha))
        if m < 1:
            raise InvalidSpec(
                f"budget round({n} * (1 - {self.alpha})) = {m}; nothing to select"
            )
        return m

    def to_meta(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "bins": self.bins,
            "seed": self.seed,
            "topup": self.topup,
        }


def _bin_index(scores: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    """Equal-width interval index per score over [lo, hi], last interval right-closed."""
    if hi == lo:
        return np.zeros(len(scores), dtype=np.int64)
    width = (hi - lo) / bins
    idx = np.floor((scores - lo) / width).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def ccs_select(scores: ScoreTable, spec: SelectionSpec, meta: dict | None = None) -> Coreset:
    """Stratified selection over the score distribution after a hardness cutoff.

    Returns the selected sample indices sorted ascending, with the spec and
    selection counters recorded in the coreset metadata.
    """
    n = len(scores)
    if n < 1:
        raise InvalidSpec("cannot select from an empty score table")
    m = spec.budget(n)
    aum = scores.aums()

    order = np.argsort(aum, kind="stable")  # ascending score, ties by index
    prune_count = math.floor(n * spec.beta)
    retained = order[prune_count:]
    if m > retained.size:
        raise BudgetExceedsPool(
            f"budget {m} exceeds the {retained.size} samples left after the cutoff"
        )

    retained_scores = aum[retained]
    lo = float(retained_scores.min())
    hi = float(retained_scores.max())
    bin_of = _bin_index(retained_scores, lo, hi, spec.bins)

    members: dict[int, np.ndarray] = {}
    for b in np.unique(bin_of):
        members[int(b)] = np.sort(retained[bin_of == b])

    rng = np.random.default_rng(spec.seed)
    remaining = sorted(members)  # interval indices of non-empty bins
    selected: list[int] = []
    m_rem = m
    while remaining:
        b = min(remaining, key=lambda i: (members[i].size, i))
        budget_b = min(members[b].size, m_rem // len(remaining))
        if budget_b > 0:
            pick = rng.choice(members[b], size=budget_b, replace=False)
            selected.extend(int(i) for i in pick)
            m_rem -= budget_b
        remaining.remove(b)

    pre_topup = len(selected)
    if spec.topup and m_rem > 0:
        pool = np.setdiff1d(retained, np.asarray(selected, dtype=np.int64))
        extra = rng.choice(pool, size=m_rem, replace=False)
        selected.extend(int(i) for i in extra)

    out_meta = {"method": "ccs", "n": n, "m": m, "pruned": prune_count, "pre_topup": pre_topup}
    out_meta.update(spec.to_meta())
    if meta:
        out_meta.update(meta)
    return Coreset(indices=tuple(sorted(selected)), meta=out_meta)


def random_select(n: int, m: int, seed: int = 0, meta: dict | None = None) -> Coreset:
    """Uniform sample of m indices from [0, n) without replacement, sorted."""
    if n < 0 or m < 0:
        raise InvalidSpec(f"n and m must be non-negative, got n={n}, m={m}")
    if m > n:
        raise BudgetExceedsPool(f"cannot draw {m} samples from a pool of {n}")
    rng = np.random.default_rng(seed)
    picked = sorted(int(i) for i in rng.choice(n, size=m, replace=False))
    out_meta = {"method": "random", "n": n, "m": m, "seed": seed}
    if meta:
        out_meta.update(meta)
    return Coreset(indices=tuple(picked), meta=out_meta)


def lookup_cutoff(dataset_tag: str, alpha: float, mode: str = LABELED, table=None) -> float:
    """Cutoff rate for a (dataset, pruning rate) pair; raises UnknownConfig if absent."""
    table = CUTOFF_TABLE if table is None else table
    tag = dataset_tag.strip().lower().replace("-", "")
    pct = round(alpha * 100)
    try:
        return table[mode][tag][pct]
    except KeyError:
        raise UnknownConfig(
            f"no cutoff rate recorded for ({dataset_tag}, alpha={alpha}, {mode}); "
            "pass beta explicitly"
        ) from None
