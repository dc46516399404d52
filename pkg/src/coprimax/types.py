"""Core domain types: similarity matrices, thresholds, estimates, study config.

All types are immutable after construction and safe to share across threads.
Stochastic operations elsewhere in the package take an explicit
``numpy.random.Generator``; the same seed with the same inputs reproduces
results bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyModelSet, NonBinaryEntry

DISEASED = "diseased"
HEALTHY = "healthy"


@dataclass(frozen=True)
class SimilarityMatrix:
    """Binary correct-prediction indicators for one class.

    Rows are subjects of the declared class, columns are candidate models,
    and an entry is 1 exactly when the model predicted that subject
    correctly.
    """

    entries: np.ndarray
    class_label: str

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def n_models(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class Threshold:
    """Co-primary performance thresholds (se0, sp0) with delta0 = se0 - sp0."""

    se0: float
    sp0: float
    delta0: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.se0 < 1.0 and 0.0 < self.sp0 < 1.0):
            raise ValueError("thresholds must lie strictly inside (0, 1)")
        object.__setattr__(self, "delta0", self.se0 - self.sp0)


@dataclass(frozen=True)
class CoPrimaryEstimate:
    """Paired sensitivity/specificity means with per-class covariances."""

    se_mean: np.ndarray
    sp_mean: np.ndarray
    se_cov: np.ndarray
    sp_cov: np.ndarray
    n1: int
    n0: int

    @property
    def n_models(self) -> int:
        return self.se_mean.shape[0]


@dataclass(frozen=True)
class StudyConfig:
    """Study-level settings: thresholds, level, planned size, seed, MC tolerance."""

    threshold: Threshold
    alpha: float = 0.025
    n_eval: int = 0
    seed: int = 0
    mc_tolerance: float = 1e-4

    def __post_init__(self):
        if not (0.0 < self.alpha < 0.5):
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.mc_tolerance <= 0:
            raise ValueError("mc_tolerance must be positive")


def validate_similarity(matrix, class_label: str = DISEASED) -> SimilarityMatrix:
    """Validate a raw integer matrix as a similarity matrix.

    Raises NonBinaryEntry for values outside {0, 1} and EmptyModelSet when
    there are no model columns. Zero rows are allowed.
    """
    arr = np.asarray(matrix)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {arr.shape}")
    if arr.shape[1] == 0:
        raise EmptyModelSet("similarity matrix has zero model columns")
    if arr.size and not np.isin(arr, (0, 1)).all():
        bad = arr[~np.isin(arr, (0, 1))].ravel()[0]
        raise NonBinaryEntry(f"similarity entries must be 0 or 1, found {bad!r}")
    if class_label not in (DISEASED, HEALTHY):
        raise ValueError(f"unknown class label {class_label!r}")
    out = arr.astype(np.int8, copy=True)
    out.setflags(write=False)
    return SimilarityMatrix(entries=out, class_label=class_label)


def build_similarity(predictions, labels) -> tuple[SimilarityMatrix, SimilarityMatrix]:
    """Split predictions into per-class similarity matrices.

    ``predictions`` is n x S binary, ``labels`` a length-n binary vector with
    1 = diseased. Returns (Q_se over diseased rows, Q_sp over healthy rows):
    a Q_se entry is 1 iff prediction == 1 for a diseased subject, a Q_sp
    entry is 1 iff prediction == 0 for a healthy subject.
    """
    preds = np.asarray(predictions)
    y = np.asarray(labels).ravel()
    if preds.ndim != 2:
        raise DimensionMismatch(f"predictions must be 2-d, got shape {preds.shape}")
    if preds.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"{preds.shape[0]} prediction rows vs {y.shape[0]} labels"
        )
    if preds.shape[1] == 0:
        raise EmptyModelSet("prediction matrix has zero model columns")
    if preds.size and not np.isin(preds, (0, 1)).all():
        raise NonBinaryEntry("predictions must be 0 or 1")
    if y.size and not np.isin(y, (0, 1)).all():
        raise NonBinaryEntry("labels must be 0 or 1")
    q_se = (preds[y == 1] == 1).astype(np.int8)
    q_sp = (preds[y == 0] == 0).astype(np.int8)
    return (
        validate_similarity(q_se, DISEASED),
        validate_similarity(q_sp, HEALTHY),
    )
