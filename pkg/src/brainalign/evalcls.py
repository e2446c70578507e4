"""Classification-based evaluation of encoding-model predictions.

fMRI: for every voxel, a cortical-searchlight task distinguishes the
predicted data chunk for a contiguous 20-TR stretch of real data from
the prediction for a different stretch, using Euclidean distance over
the voxel's 2-hop neighborhood on the cortical sheet. MEG: the same
binary matching over sets of 20 randomly sampled words, per sensor
location (3 sensors each) and timebin.

Randomness is drawn from counter-based Philox streams keyed by
(seed, stage, fold, block, repeat), so results are bit-identical no
matter how many workers execute the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .datamodel import AccuracyMap, AdjacencyGraph
from .errors import ConfigError, DimensionMismatchError, FormatError

_STAGE_FMRI = 1
_STAGE_MEG = 2


@dataclass(frozen=True)
class NeighborhoodMap:
    """Closed 2-hop neighborhoods in CSR layout (row i holds N(i), sorted)."""

    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n_voxels(self) -> int:
        return self.indptr.shape[0] - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def members(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]


@dataclass(frozen=True)
class ClassifierConfig:
    """Knobs of the binary matching task.

    ``chunk_len`` is the contiguous chunk length in TRs (fMRI) and the
    word-set size (MEG). Distractor chunks are disjoint from the true
    chunk by default; the (true, distractor) pair is drawn uniformly
    over disjoint ordered start pairs by rejection. Exact distance ties
    score 0.5. ``block_size`` fixes the voxel blocks that define the
    RNG streams, so it affects the drawn chunks (and belongs in any
    reproducibility hash) but never depends on worker count.
    """

    chunk_len: int = 20
    n_repeats: int = 1000
    seed: int = 0
    disjoint_distractors: bool = True
    block_size: int = 1024

    def __post_init__(self):
        if self.chunk_len < 1:
            raise ConfigError("chunk_len must be >= 1")
        if self.n_repeats < 1:
            raise ConfigError("n_repeats must be >= 1")
        if self.block_size < 1:
            raise ConfigError("block_size must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def build_neighborhoods(graph: AdjacencyGraph) -> NeighborhoodMap:
    """Exact closed 2-hop neighborhoods on the cortical adjacency."""
    n = graph.n_voxels
    e = graph.edges
    ones = np.ones(2 * e.shape[0] + n, dtype=np.int8)
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    hop1 = sp.csr_matrix((ones, (rows, cols)), shape=(n, n))
    hop2 = (hop1 @ hop1).tocsr()
    hop2.sort_indices()
    return NeighborhoodMap(indptr=hop2.indptr.astype(np.int64),
                           indices=hop2.indices.astype(np.int64))


def _stream(seed: int, stage: int, fold: int, block: int,
            repeat: int) -> np.random.Generator:
    """Counter-based stream; draws inside it advance only the low word."""
    bitgen = np.random.Philox(key=[seed, stage], counter=[0, repeat, block, fold])
    return np.random.Generator(bitgen)


def _draw_start_pair(gen: np.random.Generator, n_starts: int, chunk_len: int,
                     disjoint: bool) -> tuple[int, int]:
    """Uniform (true, distractor) chunk-start pair; rejection keeps them disjoint."""
    while True:
        s = int(gen.integers(0, n_starts))
        s2 = int(gen.integers(0, n_starts))
        if not disjoint or abs(s - s2) >= chunk_len:
            return s, s2


def classify_fmri(true: np.ndarray, pred: np.ndarray, nbhd: NeighborhoodMap,
                  cfg: ClassifierConfig, fold: int = 0,
                  n_workers: int = 1) -> AccuracyMap:
    """Searchlight chunk matching; per-voxel accuracy over repeats.

    Each repeat draws a true chunk and a distractor chunk, restricts
    both brain and prediction matrices to a voxel's neighborhood columns
    and picks the predicted chunk closer to the real one. Accuracy is
    attributed to the neighborhood's center voxel.
    """
    true = np.asarray(true, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if true.shape != pred.shape or true.ndim != 2:
        raise DimensionMismatchError(
            f"true {true.shape} and predicted {pred.shape} must be equal 2-D"
        )
    n_trs, n_voxels = true.shape
    if nbhd.n_voxels != n_voxels:
        raise DimensionMismatchError(
            f"neighborhoods cover {nbhd.n_voxels} voxels, data has {n_voxels}"
        )
    L = cfg.chunk_len
    min_trs = 2 * L if cfg.disjoint_distractors else L + 1
    if n_trs < min_trs:
        raise ConfigError(
            f"{n_trs} rows is too few for chunk_len {L} "
            f"(need >= {min_trs})"
        )
    n_starts = n_trs - L + 1
    accuracy = np.zeros(n_voxels, dtype=np.float64)
    blocks = [(b, min(b + cfg.block_size, n_voxels))
              for b in range(0, n_voxels, cfg.block_size)]

    def run_block(block_id: int, v0: int, v1: int) -> None:
        row_idx = nbhd.indices[nbhd.indptr[v0]:nbhd.indptr[v1]]
        cols = np.unique(row_idx)
        local = np.searchsorted(cols, row_idx)
        indptr = nbhd.indptr[v0:v1 + 1] - nbhd.indptr[v0]
        member = sp.csr_matrix(
            (np.ones(local.shape[0]), local, indptr),
            shape=(v1 - v0, cols.shape[0]),
        )
        t_loc = np.ascontiguousarray(true[:, cols])
        p_loc = np.ascontiguousarray(pred[:, cols])
        batch = np.empty((cols.shape[0], min(128, cfg.n_repeats)))
        filled = 0
        wins = np.zeros(v1 - v0, dtype=np.float64)
        for r in range(cfg.n_repeats):
            gen = _stream(cfg.seed, _STAGE_FMRI, fold, block_id, r)
            s, s2 = _draw_start_pair(gen, n_starts, L, cfg.disjoint_distractors)
            d_true = t_loc[s:s + L] - p_loc[s:s + L]
            d_dist = t_loc[s:s + L] - p_loc[s2:s2 + L]
            batch[:, filled] = np.einsum("tc,tc->c", d_true, d_true)
            batch[:, filled] -= np.einsum("tc,tc->c", d_dist, d_dist)
            filled += 1
            if filled == batch.shape[1] or r == cfg.n_repeats - 1:
                scores = member @ batch[:, :filled]
                wins += (scores < 0).sum(axis=1)
                wins += 0.5 * (scores == 0).sum(axis=1)
                filled = 0
        accuracy[v0:v1] = wins / cfg.n_repeats

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(run_block, b, v0, v1)
                       for b, (v0, v1) in enumerate(blocks)]
            for f in futures:
                f.result()
    else:
        for b, (v0, v1) in enumerate(blocks):
            run_block(b, v0, v1)

    return AccuracyMap(values=accuracy, n_repeats=cfg.n_repeats,
                       granularity="voxel")


def _location_sensors(sensor_locations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted location ids and the (n_locations, 3) sensor index table."""
    locations = np.unique(sensor_locations)
    table = np.empty((locations.shape[0], 3), dtype=np.int64)
    for k, loc in enumerate(locations):
        sensors = np.nonzero(sensor_locations == loc)[0]
        if sensors.shape[0] != 3:
            raise FormatError(
                f"location {loc} has {sensors.shape[0]} sensors, expected 3"
            )
        table[k] = sensors
    return locations, table


def classify_meg(true: np.ndarray, pred: np.ndarray,
                 sensor_locations: np.ndarray, cfg: ClassifierConfig,
                 fold: int = 0, n_workers: int = 1) -> AccuracyMap:
    """Word-set matching per (sensor location, timebin).

    Each repeat draws two disjoint word sets of size ``chunk_len`` from a
    fresh permutation; the three sensors at a location are concatenated
    per word. One draw is shared across the timebins of a location
    (streams are keyed per location), keeping the 102 x 20 grid cheap.
    """
    true = np.asarray(true, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if true.shape != pred.shape or true.ndim != 3:
        raise DimensionMismatchError(
            f"true {true.shape} and predicted {pred.shape} must be equal 3-D"
        )
    n_words, n_sensors, n_bins = true.shape
    sensor_locations = np.asarray(sensor_locations, dtype=np.int64)
    if sensor_locations.shape != (n_sensors,):
        raise DimensionMismatchError("sensor_locations does not match sensor axis")
    k = cfg.chunk_len
    if n_words < 2 * k:
        raise ConfigError(f"{n_words} words is too few for set size {k}")
    locations, table = _location_sensors(sensor_locations)
    accuracy = np.zeros((locations.shape[0], n_bins), dtype=np.float64)

    def run_location(li: int) -> None:
        t_loc = np.ascontiguousarray(true[:, table[li], :])
        p_loc = np.ascontiguousarray(pred[:, table[li], :])
        wins = np.zeros(n_bins, dtype=np.float64)
        for r in range(cfg.n_repeats):
            gen = _stream(cfg.seed, _STAGE_MEG, fold, li, r)
            perm = gen.permutation(n_words)
            w_true, w_dist = perm[:k], perm[k:2 * k]
            d_true = t_loc[w_true] - p_loc[w_true]
            d_dist = t_loc[w_true] - p_loc[w_dist]
            d1 = np.einsum("wsb,wsb->b", d_true, d_true)
            d2 = np.einsum("wsb,wsb->b", d_dist, d_dist)
            wins += d1 < d2
            wins += 0.5 * (d1 == d2)
        accuracy[li] = wins / cfg.n_repeats

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(run_location, li)
                       for li in range(locations.shape[0])]
            for f in futures:
                f.result()
    else:
        for li in range(locations.shape[0]):
            run_location(li)

    return AccuracyMap(values=accuracy, n_repeats=cfg.n_repeats,
                       granularity="sensor_location_timebin")
