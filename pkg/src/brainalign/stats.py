"""Empirical FDR control, shared-accuracy decomposition and task tests.

The significance sweep assumes chance accuracies are symmetric around
0.5 and uses the sub-0.5 tail to estimate how many of the above-0.5
outputs are chance hits:

    FDP(delta) = (1 + #{acc <= 0.5 - delta}) / max(1, #{acc >= 0.5 + delta})

The sweep starts at delta = 0.001, grows in 0.001 increments and stops
at the first delta with FDP(delta) <= q, or at 0.499 (both tail sets are
degenerate at 0.5). All outputs with accuracy >= 0.5 + delta are then
rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as spstats

from .datamodel import ROI_LABELS, AccuracyMap, RoiLabels, SignificanceResult
from .errors import ConfigError, DimensionMismatchError, FormatError

DELTA_STEP = 0.001
DELTA_LIMIT = 0.499


def _accuracy_values(acc) -> np.ndarray:
    if isinstance(acc, AccuracyMap):
        return acc.flat
    values = np.asarray(acc, dtype=np.float64).reshape(-1)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise FormatError("accuracy values outside [0, 1]")
    return values


def fdp_threshold(acc, q: float = 0.05) -> SignificanceResult:
    """Sweep the symmetric-tail FDP estimate and threshold the map.

    Returns the first margin with estimated FDP <= q; when no margin
    qualifies, nothing is rejected and ``threshold_found`` is False.
    """
    if not 0 < q < 1:
        raise ConfigError(f"q must be in (0, 1), got {q}")
    values = _accuracy_values(acc)
    n_steps = int(round(DELTA_LIMIT / DELTA_STEP))
    deltas = np.arange(1, n_steps + 1) / 1000.0
    sorted_vals = np.sort(values)
    low = np.searchsorted(sorted_vals, 0.5 - deltas, side="right")
    high = values.size - np.searchsorted(sorted_vals, 0.5 + deltas, side="left")
    fdp = (1.0 + low) / np.maximum(1, high)
    hits = np.nonzero(fdp <= q)[0]
    if hits.size:
        stop = hits[0]
        delta_final = deltas[stop]
        rejected = values >= 0.5 + delta_final
        found = True
    else:
        stop = n_steps - 1
        delta_final = DELTA_LIMIT
        rejected = np.zeros(values.size, dtype=bool)
        found = False
    trace = np.column_stack([deltas[:stop + 1], fdp[:stop + 1]])
    return SignificanceResult(delta_final=float(delta_final), rejected=rejected,
                              q=q, fdp_trace=trace, threshold_found=found)


@dataclass(frozen=True)
class SharedAccuracy:
    """Accuracy attributable jointly to two feature sets: A + B - (A u B)."""

    values: np.ndarray


def shared_accuracy(acc_a: AccuracyMap, acc_b: AccuracyMap,
                    acc_ab: AccuracyMap) -> SharedAccuracy:
    """Elementwise A + B - (A u B), where A u B used concatenated features."""
    for name, other in (("B", acc_b), ("A u B", acc_ab)):
        if other.values.shape != acc_a.values.shape:
            raise DimensionMismatchError(f"accuracy map {name} has a different shape")
        if other.n_repeats != acc_a.n_repeats:
            raise DimensionMismatchError(f"accuracy map {name} has different n_repeats")
    return SharedAccuracy(values=acc_a.values + acc_b.values - acc_ab.values)


@dataclass(frozen=True)
class RegionRow:
    """Fraction of a region's voxels above threshold, per map and pooled."""

    label: str
    n_voxels: int
    fractions: tuple[float, ...]  # one entry per supplied map (subject)
    mean: float  # NaN for empty regions
    stderr: float  # NaN with fewer than 2 maps


def region_summary(maps, rois: RoiLabels, threshold: float = 0.7) -> list[RegionRow]:
    """Per-ROI fraction of voxels at/above threshold (or with mask = True).

    ``maps`` is one array/AccuracyMap/boolean mask or a list of them
    (one per subject); fractions are averaged across maps with the
    standard error reported. Empty regions report NaN.
    """
    if not isinstance(maps, (list, tuple)):
        maps = [maps]
    per_map = []
    for m in maps:
        values = m.flat if isinstance(m, AccuracyMap) else np.asarray(m).reshape(-1)
        if values.shape[0] != rois.n_voxels:
            raise DimensionMismatchError(
                f"map covers {values.shape[0]} voxels, labels cover {rois.n_voxels}"
            )
        if values.dtype == bool:
            per_map.append(values)
        else:
            per_map.append(np.asarray(values, dtype=np.float64) >= threshold)
    rows = []
    for label in ROI_LABELS:
        member = rois.labels == label
        n = int(np.count_nonzero(member))
        if n == 0:
            fractions = tuple(math.nan for _ in per_map)
            mean = stderr = math.nan
        else:
            fractions = tuple(float(np.count_nonzero(m[member]) / n)
                              for m in per_map)
            mean = float(np.mean(fractions))
            stderr = (float(np.std(fractions, ddof=1) / math.sqrt(len(fractions)))
                      if len(fractions) > 1 else math.nan)
        rows.append(RegionRow(label=label, n_voxels=n, fractions=fractions,
                              mean=mean, stderr=stderr))
    return rows


@dataclass(frozen=True)
class TaskComparison:
    """Paired comparison of one task between a variant and the baseline."""

    task: str
    n_items: int
    mean_variant: float
    mean_base: float
    t_stat: float  # NaN when differences are all zero
    p_value: float
    significant: bool


def benjamini_hochberg(p_values, q: float = 0.05) -> np.ndarray:
    """Step-up BH rejection mask at level q."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return np.zeros(0, dtype=bool)
    if (p < 0).any() or (p > 1).any():
        raise ConfigError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order]
    below = np.nonzero(ranked <= (np.arange(1, m + 1) / m) * q)[0]
    mask = np.zeros(m, dtype=bool)
    if below.size:
        mask[order[:below[-1] + 1]] = True
    return mask


def paired_outcome_test(variant: np.ndarray, base: np.ndarray) -> tuple[float, float]:
    """Two-sided paired t-test on per-item binary outcomes.

    All-identical outcomes give (NaN, 1.0); zero variance with nonzero
    mean difference reports p = 0 exactly.
    """
    variant = np.asarray(variant, dtype=np.float64)
    base = np.asarray(base, dtype=np.float64)
    if variant.shape != base.shape or variant.ndim != 1:
        raise DimensionMismatchError("paired outcomes must be equal-length vectors")
    d = variant - base
    n = d.shape[0]
    if n < 2:
        raise ConfigError("paired test needs at least 2 items")
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return math.nan, 1.0
        return math.inf if mean > 0 else -math.inf, 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * spstats.t.sf(abs(t), df=n - 1)
    return float(t), float(p)


def paired_test_bh(outcomes_variant: dict, outcomes_base: dict,
                   alpha: float = 0.01, q: float = 0.05) -> list[TaskComparison]:
    """Per-task paired t-tests with BH correction across tasks.

    ``outcomes_*`` map task name -> per-item 0/1 outcome vector; items
    must be aligned between variant and base. A task is significant when
    its p-value survives BH at level q and is below alpha.
    """
    tasks = list(outcomes_variant)
    if set(tasks) != set(outcomes_base):
        raise ConfigError("variant and base cover different task sets")
    stats_rows = []
    for task in tasks:
        v = np.asarray(outcomes_variant[task], dtype=np.float64)
        b = np.asarray(outcomes_base[task], dtype=np.float64)
        if v.shape != b.shape:
            raise DimensionMismatchError(f"task {task!r}: item counts differ")
        t, p = paired_outcome_test(v, b)
        stats_rows.append((task, v, b, t, p))
    rejected = benjamini_hochberg([row[4] for row in stats_rows], q=q)
    out = []
    for (task, v, b, t, p), rej in zip(stats_rows, rejected):
        out.append(TaskComparison(
            task=task, n_items=v.shape[0],
            mean_variant=float(v.mean()), mean_base=float(b.mean()),
            t_stat=t, p_value=p, significant=bool(rej and p < alpha),
        ))
    return out
