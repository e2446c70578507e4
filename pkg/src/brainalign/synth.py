"""Synthetic dataset generation for calibration and acceptance runs.

Signal voxels follow y = z . w* + noise at a controlled per-voxel SNR
(std of signal over std of noise), where z is the delayed design built
from the generated word-level features, so an end-to-end run recovers
exactly the planted relationship. Null voxels are pure noise. Signal
voxels are planted as contiguous blobs on the voxel graph: the
searchlight attributes neighborhood signal to center voxels, so
scattered planting would make ground-truth bookkeeping meaningless at
blob boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .datamodel import (
    AdjacencyGraph,
    BrainDataset,
    FeatureMatrix,
    FeatureMeta,
    write_adjacency,
    write_brain_dataset,
    write_feature_matrix,
)
from .errors import ConfigError
from .evalcls import NeighborhoodMap, build_neighborhoods
from .featprep import build_delayed, group_by_tr

GRAPH_TYPES = ("lattice", "random_geometric")

_TARGET_BLOB_SIZE = 400  # voxels per planted blob, roughly


@dataclass(frozen=True)
class SynthData:
    """Generated dataset plus the planted ground truth."""

    features: FeatureMatrix  # word-aligned
    brain: BrainDataset
    graph: AdjacencyGraph
    planted: np.ndarray  # bool, voxels carrying signal
    word_onsets: np.ndarray


def _lattice_graph(n_voxels: int) -> tuple[AdjacencyGraph, np.ndarray]:
    """2-D grid adjacency; returns the graph and (n, 2) cell coordinates."""
    rows = max(1, int(math.floor(math.sqrt(n_voxels))))
    cols = int(math.ceil(n_voxels / rows))
    coords = np.array([(i // cols, i % cols) for i in range(n_voxels)],
                      dtype=np.float64)
    edges = []
    for i in range(n_voxels):
        r, c = divmod(i, cols)
        if c + 1 < cols and i + 1 < n_voxels:
            edges.append((i, i + 1))
        if (r + 1) * cols + c < n_voxels:
            edges.append((i, (r + 1) * cols + c))
    graph = AdjacencyGraph(n_voxels=n_voxels,
                           edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    return graph, coords


def _random_geometric_graph(n_voxels: int, rng: np.random.Generator,
                            mean_degree: float = 6.0
                            ) -> tuple[AdjacencyGraph, np.ndarray]:
    coords = rng.uniform(0.0, 1.0, size=(n_voxels, 2))
    radius = math.sqrt(mean_degree / (math.pi * max(n_voxels - 1, 1)))
    pairs = cKDTree(coords).query_pairs(radius, output_type="ndarray")
    graph = AdjacencyGraph(n_voxels=n_voxels, edges=pairs.astype(np.int64))
    return graph, coords


def _plant_blobs(coords: np.ndarray, n_signal: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Mark the n_signal voxels nearest to a few random blob centers."""
    n = coords.shape[0]
    mask = np.zeros(n, dtype=bool)
    if n_signal == 0:
        return mask
    n_blobs = max(1, int(round(n_signal / _TARGET_BLOB_SIZE)))
    centers = coords[rng.choice(n, size=n_blobs, replace=False)]
    dist = np.min(np.linalg.norm(coords[:, None, :] - centers[None, :, :], axis=2),
                  axis=1)
    order = np.argsort(dist, kind="stable")
    mask[order[:n_signal]] = True
    return mask


def dilate_mask(mask: np.ndarray, nbhd: NeighborhoodMap) -> np.ndarray:
    """Voxels whose closed 2-hop neighborhood touches the mask.

    This is the detection resolution of the searchlight: a center voxel
    legitimately classifies above chance whenever any neighbor carries
    signal, so end-to-end false-discovery bookkeeping uses the dilated
    mask as ground truth.
    """
    out = np.zeros_like(mask)
    for i in np.nonzero(mask)[0]:
        out[nbhd.members(i)] = True
    out |= mask
    return out


def synth_generate(n_trs: int, n_voxels: int, d: int, frac_signal: float,
                   snr: float, graph_type: str = "lattice", seed: int = 0,
                   words_per_tr: int = 4, tr_seconds: float = 2.0,
                   delays: tuple[int, ...] = (1, 2, 3, 4)) -> SynthData:
    """Generate word-level features, an fMRI matrix and a voxel graph."""
    if not 0.0 <= frac_signal <= 1.0:
        raise ConfigError(f"frac_signal must be in [0, 1], got {frac_signal}")
    if min(n_trs, n_voxels, d, words_per_tr) < 1:
        raise ConfigError("degenerate synthetic dataset size")
    if graph_type not in GRAPH_TYPES:
        raise ConfigError(f"unknown graph type {graph_type!r}")
    if snr < 0:
        raise ConfigError("snr must be non-negative")
    rng = np.random.default_rng(seed)

    if graph_type == "lattice":
        graph, coords = _lattice_graph(n_voxels)
    else:
        graph, coords = _random_geometric_graph(n_voxels, rng)

    n_words = n_trs * words_per_tr
    word_features = rng.standard_normal((n_words, d))
    onsets = np.repeat(np.arange(n_trs), words_per_tr)
    meta = FeatureMeta(model_name="synthetic", layer=0, context_length=1,
                       dataset_id=f"synth-{seed}")
    features = FeatureMatrix(values=word_features, alignment="word", meta=meta)

    n_signal = int(round(frac_signal * n_voxels))
    planted = _plant_blobs(coords, n_signal, rng)

    noise = rng.standard_normal((n_trs, n_voxels))
    brain_values = noise
    if n_signal:
        design = build_delayed(group_by_tr(features, onsets, n_trs), delays)
        w_star = rng.standard_normal((design.n_cols, n_signal))
        signal = design.values @ w_star
        std = signal.std(axis=0)
        std[std == 0] = 1.0
        signal = signal / std
        if math.isinf(snr):
            brain_values[:, planted] = signal
        else:
            brain_values[:, planted] = snr * signal + noise[:, planted]

    brain = BrainDataset(modality="fmri", values=brain_values,
                         tr_seconds=tr_seconds, word_onsets=onsets)
    return SynthData(features=features, brain=brain, graph=graph,
                     planted=planted, word_onsets=onsets)


def write_synth(data: SynthData, out_dir: Path | str) -> dict[str, Path]:
    """Write the generated dataset in interchange formats; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "features": out / "features.bafm",
        "brain": out / "brain.babd",
        "adjacency": out / "adjacency.txt",
        "ground_truth": out / "ground_truth.csv",
    }
    write_feature_matrix(data.features, paths["features"])
    write_brain_dataset(data.brain, paths["brain"])
    write_adjacency(data.graph, paths["adjacency"])
    lines = ["voxel_index,planted\n"]
    lines += [f"{i},{int(p)}\n" for i, p in enumerate(data.planted)]
    paths["ground_truth"].write_text("".join(lines))
    return paths


def read_ground_truth(path: Path | str) -> np.ndarray:
    rows = Path(path).read_text().splitlines()
    return np.array([bool(int(r.split(",")[1])) for r in rows[1:]], dtype=bool)


def detectable_mask(data: SynthData) -> np.ndarray:
    """Planted mask dilated to the searchlight's 2-hop resolution."""
    return dilate_mask(data.planted, build_neighborhoods(data.graph))
