"""Design-matrix preparation: TR grouping, delay stacking, normalization.

Word-aligned feature rows are averaged within each TR, stacked at a set
of positive TR delays to absorb the hemodynamic lag, and normalized to
zero mean and unit standard deviation per column. Rows earlier than the
first delay are zero-padded (rather than dropped) so row alignment with
the brain matrix is preserved for the chunk classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import FeatureMatrix
from .errors import DimensionMismatchError, FormatError

# below this population stddev a column counts as constant
CONSTANT_EPS = 1e-10


@dataclass(frozen=True)
class DelayedDesign:
    """Feature matrix stacked at several TR delays.

    Column block ``j`` holds the TR-aggregated features shifted down by
    ``delays[j]`` rows; shifted-out rows are zero.
    """

    values: np.ndarray
    delays: tuple[int, ...]
    source_meta: object  # FeatureMeta of the input matrix

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormalizationStats:
    """Per-column mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool mask of columns with stddev below eps


def group_by_tr(features: FeatureMatrix, onsets: np.ndarray,
                n_trs: int) -> FeatureMatrix:
    """Average word-aligned feature rows within each TR.

    Row ``t`` of the result is the arithmetic mean of the feature rows of
    all words with onset TR ``t``; TRs containing no words get the zero
    vector.
    """
    if features.alignment != "word":
        raise FormatError("group_by_tr requires word-aligned features")
    onsets = np.asarray(onsets, dtype=np.int64)
    if onsets.shape[0] != features.n_rows:
        raise DimensionMismatchError(
            f"{onsets.shape[0]} onsets for {features.n_rows} feature rows"
        )
    if onsets.size and (onsets.min() < 0 or onsets.max() >= n_trs):
        raise FormatError("word onset outside TR range")
    sums = np.zeros((n_trs, features.n_cols), dtype=np.float64)
    np.add.at(sums, onsets, features.values)
    counts = np.bincount(onsets, minlength=n_trs).astype(np.float64)
    nonempty = counts > 0
    sums[nonempty] /= counts[nonempty, None]
    return FeatureMatrix(values=sums, alignment="tr", meta=features.meta)


def build_delayed(features: FeatureMatrix,
                  delays: tuple[int, ...] = (1, 2, 3, 4)) -> DelayedDesign:
    """Stack TR-aligned features at the given positive TR delays."""
    if features.alignment != "tr":
        raise FormatError("build_delayed requires tr-aligned features")
    delays = tuple(int(d) for d in delays)
    if not delays:
        raise FormatError("delays must be non-empty")
    if any(d <= 0 for d in delays):
        raise FormatError(f"delays must be positive, got {delays}")
    if any(b >= a for b, a in zip(delays, delays[1:])):
        raise FormatError(f"delays must be strictly increasing, got {delays}")
    n, d = features.values.shape
    out = np.zeros((n, d * len(delays)), dtype=np.float64)
    for j, delay in enumerate(delays):
        if delay < n:
            out[delay:, j * d:(j + 1) * d] = features.values[:n - delay]
    return DelayedDesign(values=out, delays=delays, source_meta=features.meta)


def normalize_fit(matrix: np.ndarray) -> tuple[np.ndarray, NormalizationStats]:
    """Normalize columns to mean 0 / population stddev 1.

    Columns with stddev below ``CONSTANT_EPS`` are zeroed and flagged.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatchError("normalize_fit expects a 2-D matrix")
    if matrix.shape[0] < 2:
        raise FormatError("normalization needs at least 2 rows")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # population (1/N) stddev, pinned
    constant = std < CONSTANT_EPS
    safe_std = np.where(constant, 1.0, std)
    out = (matrix - mean) / safe_std
    out[:, constant] = 0.0
    return out, NormalizationStats(mean=mean, std=std, constant=constant)


def normalize_with(matrix: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Apply previously fitted normalization stats (leakage-free variant)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != stats.mean.shape[0]:
        raise DimensionMismatchError("matrix does not match normalization stats")
    safe_std = np.where(stats.constant, 1.0, stats.std)
    out = (matrix - stats.mean) / safe_std
    out[:, stats.constant] = 0.0
    return out
