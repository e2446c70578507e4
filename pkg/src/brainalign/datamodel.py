"""Core domain types and interchange file formats.

Binary matrix container (shared by feature matrices and accuracy maps)::

    magic    4 bytes   "BAFM" (features) / "BAAM" (accuracy maps)
    version  u32 LE    currently 1
    dtype    u8        0 = f32, 1 = f64
    n_rows   u64 LE
    n_cols   u64 LE
    payload  row-major little-endian floats

Brain recordings ("BABD")::

    magic    4 bytes   "BABD"
    version  u32 LE
    modality u8        0 = fMRI, 1 = MEG
    dtype    u8        0 = f32, 1 = f64
    dims     u64 LE x2 (fMRI: TRs, voxels) or x3 (MEG: words, sensors, timebins)
    payload  row-major little-endian floats

Every binary file has a JSON sidecar ``<stem>.meta.json`` carrying the
non-numeric metadata. Cortical adjacency is a plain text edge list (one
``i,j`` per line, 0-indexed, undirected, no self-loops); ROI labels are a
two-column CSV ``voxel_index,label``.

Loaders never silently coerce: NaN/Inf payloads, size mismatches and
unknown versions all raise a distinct :mod:`brainalign.errors` type.
All loaded arrays are marked read-only so they can be shared freely
across parallel workers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    FormatError,
    NonFiniteError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

FORMAT_VERSION = 1

MAGIC_FEATURES = b"BAFM"
MAGIC_BRAIN = b"BABD"
MAGIC_ACCURACY = b"BAAM"

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_FLAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}

ROI_LABELS = ("1a", "1b", "2a", "2b", "2c", "2d", "2e", "none")


def _require_finite(values: np.ndarray, what: str) -> None:
    if values.size and not np.isfinite(values).all():
        raise NonFiniteError(f"{what}: payload contains NaN or Inf")


def _freeze(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


def sidecar_path(path: Path | str) -> Path:
    """Return the ``<stem>.meta.json`` path next to a binary file."""
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _write_sidecar(path: Path, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    sidecar_path(path).write_text(text)


def _read_sidecar(path: Path) -> dict:
    sc = sidecar_path(path)
    if not sc.exists():
        raise FormatError(f"{path}: missing sidecar {sc.name}")
    try:
        return json.loads(sc.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sc}: invalid JSON sidecar: {exc}") from exc


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureMeta:
    """Provenance of a feature matrix: which model, layer and context."""

    model_name: str
    layer: int
    context_length: int
    dataset_id: str

    def __post_init__(self):
        if self.layer < 0:
            raise FormatError(f"layer must be >= 0, got {self.layer}")
        if self.context_length < 1:
            raise FormatError(
                f"context_length must be >= 1, got {self.context_length}"
            )


@dataclass(frozen=True)
class FeatureMatrix:
    """Network-derived feature rows aligned to words or TRs."""

    values: np.ndarray
    alignment: str  # "word" | "tr"
    meta: FeatureMeta

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DimensionMismatchError(
                f"feature matrix must be 2-D, got shape {self.values.shape}"
            )
        if self.alignment not in ("word", "tr"):
            raise FormatError(f"unknown alignment {self.alignment!r}")
        _require_finite(self.values, "feature matrix")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BrainDataset:
    """fMRI (TR x voxel) or MEG (word x sensor x timebin) recordings."""

    modality: str  # "fmri" | "meg"
    values: np.ndarray
    tr_seconds: float | None = None
    word_onsets: np.ndarray | None = None  # per-word TR index (fMRI)
    bin_ms: float | None = None
    sensor_locations: np.ndarray | None = None  # per-sensor location id (MEG)

    def __post_init__(self):
        _require_finite(self.values, "brain dataset")
        if self.modality == "fmri":
            if self.values.ndim != 2:
                raise DimensionMismatchError(
                    f"fMRI data must be 2-D, got shape {self.values.shape}"
                )
            if self.tr_seconds is None or self.word_onsets is None:
                raise FormatError("fMRI dataset requires tr_seconds and word_onsets")
            onsets = np.asarray(self.word_onsets)
            if onsets.size and (onsets.min() < 0 or onsets.max() >= self.n_trs):
                raise FormatError("word onset outside TR range")
            object.__setattr__(self, "word_onsets", onsets.astype(np.int64))
        elif self.modality == "meg":
            if self.values.ndim != 3:
                raise DimensionMismatchError(
                    f"MEG data must be 3-D, got shape {self.values.shape}"
                )
            if self.bin_ms is None or self.sensor_locations is None:
                raise FormatError("MEG dataset requires bin_ms and sensor_locations")
            locs = np.asarray(self.sensor_locations, dtype=np.int64)
            if locs.shape != (self.n_sensors,):
                raise DimensionMismatchError(
                    f"sensor_locations has {locs.shape[0]} entries "
                    f"for {self.n_sensors} sensors"
                )
            object.__setattr__(self, "sensor_locations", locs)
        else:
            raise FormatError(f"unknown modality {self.modality!r}")

    # fMRI accessors
    @property
    def n_trs(self) -> int:
        return self.values.shape[0]

    @property
    def n_voxels(self) -> int:
        return self.values.shape[1]

    # MEG accessors
    @property
    def n_words(self) -> int:
        return self.values.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.values.shape[1]

    @property
    def n_timebins(self) -> int:
        return self.values.shape[2]


def validate_fixed_rate(dataset: BrainDataset, word_seconds: float) -> None:
    """Check the fixed-rate presentation invariant for fMRI data.

    At fixed-rate presentation each TR holds exactly
    ``tr_seconds / word_seconds`` words (4 for a 2 s TR at 0.5 s/word).
    Stored explicitly via ``word_onsets`` so non-uniform presentations
    stay representable; this is a validator, not an assumption.
    """
    if dataset.modality != "fmri":
        raise FormatError("fixed-rate validation applies to fMRI datasets")
    expected = dataset.tr_seconds / word_seconds
    if abs(expected - round(expected)) > 1e-9:
        raise FormatError(
            f"tr_seconds/word_seconds = {expected} is not a whole number of words"
        )
    counts = np.bincount(dataset.word_onsets, minlength=dataset.n_trs)
    bad = np.nonzero(counts != round(expected))[0]
    if bad.size:
        raise FormatError(
            f"TR {bad[0]} holds {counts[bad[0]]} words, expected {round(expected)}"
        )


def validate_presentation(dataset: BrainDataset, word_ms: float) -> None:
    """Check that MEG timebins tile the word presentation window."""
    if dataset.modality != "meg":
        raise FormatError("presentation validation applies to MEG datasets")
    total = dataset.n_timebins * dataset.bin_ms
    if abs(total - word_ms) > 1e-9:
        raise FormatError(
            f"{dataset.n_timebins} bins x {dataset.bin_ms} ms = {total} ms, "
            f"expected {word_ms} ms"
        )


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected voxel adjacency on the cortical sheet.

    Edges are stored once each as canonical (i, j) with i < j.
    """

    n_voxels: int
    edges: np.ndarray  # (E, 2) int64

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if (edges[:, 0] == edges[:, 1]).any():
                raise FormatError("adjacency contains a self-loop")
            if edges.min() < 0 or edges.max() >= self.n_voxels:
                raise FormatError("adjacency edge index out of range")
            edges = np.sort(edges, axis=1)
            edges = np.unique(edges, axis=0)
        object.__setattr__(self, "edges", _freeze(edges))

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted direct neighbors of voxel ``i``."""
        e = self.edges
        out = np.concatenate([e[e[:, 0] == i, 1], e[e[:, 1] == i, 0]])
        return np.sort(out)

    def adjacency_lists(self) -> list[np.ndarray]:
        """Per-voxel sorted neighbor arrays."""
        lists: list[list[int]] = [[] for _ in range(self.n_voxels)]
        for i, j in self.edges:
            lists[i].append(j)
            lists[j].append(i)
        return [np.array(sorted(l), dtype=np.int64) for l in lists]


@dataclass(frozen=True)
class FoldFit:
    """Weights and regularization selected on one outer fold."""

    weights: np.ndarray  # (design_cols, outputs)
    lambdas: np.ndarray  # (outputs,)
    train_rows: np.ndarray  # row indices used for fitting
    val_range: tuple[int, int]  # [start, stop) of the held-out block

    def __post_init__(self):
        lambdas = np.asarray(self.lambdas, dtype=np.float64)
        if lambdas.ndim != 1 or (lambdas <= 0).any():
            raise FormatError("fold lambdas must be strictly positive")
        if self.weights.ndim != 2 or self.weights.shape[1] != lambdas.shape[0]:
            raise DimensionMismatchError(
                "weight columns must match the number of outputs"
            )
        object.__setattr__(self, "lambdas", lambdas)


@dataclass(frozen=True)
class EncodingFit:
    """Per-outer-fold ridge fits; folds partition the rows."""

    folds: tuple[FoldFit, ...]
    n_rows: int

    def __post_init__(self):
        covered = np.zeros(self.n_rows, dtype=bool)
        for f in self.folds:
            start, stop = f.val_range
            if covered[start:stop].any():
                raise FormatError("fold validation ranges overlap")
            covered[start:stop] = True
        if not covered.all():
            raise FormatError("fold validation ranges do not partition the rows")

    def save(self, path: Path | str) -> None:
        arrays = {"n_rows": np.int64(self.n_rows), "n_folds": np.int64(len(self.folds))}
        for k, f in enumerate(self.folds):
            arrays[f"weights_{k}"] = f.weights
            arrays[f"lambdas_{k}"] = f.lambdas
            arrays[f"train_rows_{k}"] = f.train_rows
            arrays[f"val_range_{k}"] = np.asarray(f.val_range, dtype=np.int64)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: Path | str) -> "EncodingFit":
        with np.load(path) as z:
            folds = tuple(
                FoldFit(
                    weights=z[f"weights_{k}"],
                    lambdas=z[f"lambdas_{k}"],
                    train_rows=z[f"train_rows_{k}"],
                    val_range=tuple(z[f"val_range_{k}"]),
                )
                for k in range(int(z["n_folds"]))
            )
            return cls(folds=folds, n_rows=int(z["n_rows"]))


GRANULARITIES = ("voxel", "sensor_location_timebin")


@dataclass(frozen=True)
class AccuracyMap:
    """Mean classification accuracy per voxel or per (location, timebin)."""

    values: np.ndarray
    n_repeats: int
    granularity: str = "voxel"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise FormatError(f"unknown granularity {self.granularity!r}")
        values = np.asarray(self.values, dtype=np.float64)
        expected_ndim = 1 if self.granularity == "voxel" else 2
        if values.ndim != expected_ndim:
            raise DimensionMismatchError(
                f"{self.granularity} accuracy map must be {expected_ndim}-D"
            )
        _require_finite(values, "accuracy map")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise FormatError("accuracy values outside [0, 1]")
        if self.n_repeats <= 0:
            raise FormatError("n_repeats must be positive")
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class SignificanceResult:
    """Outcome of the empirical FDP threshold sweep."""

    delta_final: float
    rejected: np.ndarray  # boolean mask over outputs
    q: float
    fdp_trace: np.ndarray  # (n_steps, 2) of (delta, estimated FDP)
    threshold_found: bool

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(self.rejected))

    def to_json(self) -> dict:
        return {
            "delta_final": self.delta_final,
            "q": self.q,
            "threshold_found": self.threshold_found,
            "n_outputs": int(self.rejected.size),
            "n_rejected": self.n_rejected,
        }


@dataclass(frozen=True)
class RoiLabels:
    """Per-voxel region-of-interest label."""

    labels: np.ndarray  # unicode array of ROI_LABELS entries

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype="U8")
        unknown = set(np.unique(labels)) - set(ROI_LABELS)
        if unknown:
            raise FormatError(f"unknown ROI labels {sorted(unknown)}")
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n_voxels(self) -> int:
        return self.labels.shape[0]


# ---------------------------------------------------------------------------
# binary matrix container (BAFM / BAAM)
# ---------------------------------------------------------------------------

_MATRIX_HEADER = struct.Struct("<4sIBQQ")


def _write_matrix_file(path: Path, magic: bytes, values: np.ndarray) -> None:
    dtype = np.dtype(values.dtype)
    if dtype not in _DTYPE_FLAGS:
        raise FormatError(f"unsupported payload dtype {dtype}")
    header = _MATRIX_HEADER.pack(
        magic, FORMAT_VERSION, _DTYPE_FLAGS[dtype], values.shape[0], values.shape[1]
    )
    payload = np.ascontiguousarray(values, dtype=dtype.newbyteorder("<"))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def _read_matrix_file(path: Path, magic: bytes) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _MATRIX_HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    got_magic, version, dtype_flag, n_rows, n_cols = _MATRIX_HEADER.unpack_from(raw)
    if got_magic != magic:
        raise BadMagicError(f"{path}: expected magic {magic!r}, got {got_magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if dtype_flag not in _DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype flag {dtype_flag}")
    dtype = _DTYPE_CODES[dtype_flag]
    expected = n_rows * n_cols * dtype.itemsize
    actual = len(raw) - _MATRIX_HEADER.size
    if actual < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {actual} bytes, header implies {expected}"
        )
    if actual > expected:
        raise DimensionMismatchError(
            f"{path}: payload has {actual} bytes, header implies {expected}"
        )
    values = np.frombuffer(raw, dtype=dtype, count=n_rows * n_cols,
                           offset=_MATRIX_HEADER.size).reshape(n_rows, n_cols)
    _require_finite(values, str(path))
    return _freeze(values.copy())


def write_feature_matrix(matrix: FeatureMatrix, path: Path | str) -> None:
    """Write a feature matrix as a BAFM file plus JSON sidecar."""
    path = Path(path)
    _write_matrix_file(path, MAGIC_FEATURES, matrix.values)
    _write_sidecar(path, {
        "alignment": matrix.alignment,
        "model_name": matrix.meta.model_name,
        "layer": matrix.meta.layer,
        "context_length": matrix.meta.context_length,
        "dataset_id": matrix.meta.dataset_id,
    })


def read_feature_matrix(path: Path | str) -> FeatureMatrix:
    """Load a BAFM file; fails loudly on any malformed content."""
    path = Path(path)
    values = _read_matrix_file(path, MAGIC_FEATURES)
    meta = _read_sidecar(path)
    try:
        return FeatureMatrix(
            values=values,
            alignment=meta["alignment"],
            meta=FeatureMeta(
                model_name=meta["model_name"],
                layer=int(meta["layer"]),
                context_length=int(meta["context_length"]),
                dataset_id=meta["dataset_id"],
            ),
        )
    except KeyError as exc:
        raise FormatError(f"{path}: sidecar missing field {exc}") from exc


def write_accuracy_map(acc: AccuracyMap, path: Path | str) -> None:
    """Write an accuracy map as a BAAM file plus JSON sidecar."""
    path = Path(path)
    stored = acc.values if acc.values.ndim == 2 else acc.values.reshape(1, -1)
    _write_matrix_file(path, MAGIC_ACCURACY, stored.astype(np.float64))
    _write_sidecar(path, {
        "granularity": acc.granularity,
        "n_repeats": acc.n_repeats,
        "extra": acc.extra,
    })


def read_accuracy_map(path: Path | str) -> AccuracyMap:
    path = Path(path)
    values = _read_matrix_file(path, MAGIC_ACCURACY)
    meta = _read_sidecar(path)
    try:
        granularity = meta["granularity"]
        n_repeats = int(meta["n_repeats"])
    except KeyError as exc:
        raise FormatError(f"{path}: sidecar missing field {exc}") from exc
    if granularity == "voxel":
        if values.shape[0] != 1:
            raise DimensionMismatchError(
                f"{path}: voxel map stored with {values.shape[0]} rows"
            )
        values = values.reshape(-1)
    return AccuracyMap(values=values, n_repeats=n_repeats,
                       granularity=granularity, extra=meta.get("extra", {}))


# ---------------------------------------------------------------------------
# brain datasets (BABD)
# ---------------------------------------------------------------------------

_BRAIN_PREFIX = struct.Struct("<4sIBB")
_MODALITY_FLAGS = {"fmri": 0, "meg": 1}
_MODALITY_NAMES = {v: k for k, v in _MODALITY_FLAGS.items()}


def write_brain_dataset(ds: BrainDataset, path: Path | str) -> None:
    """Write recordings as a BABD file plus JSON sidecar."""
    path = Path(path)
    dtype = np.dtype(ds.values.dtype)
    if dtype not in _DTYPE_FLAGS:
        raise FormatError(f"unsupported payload dtype {dtype}")
    header = _BRAIN_PREFIX.pack(
        MAGIC_BRAIN, FORMAT_VERSION, _MODALITY_FLAGS[ds.modality], _DTYPE_FLAGS[dtype]
    )
    dims = struct.pack(f"<{ds.values.ndim}Q", *ds.values.shape)
    payload = np.ascontiguousarray(ds.values, dtype=dtype.newbyteorder("<"))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(payload.tobytes())
    if ds.modality == "fmri":
        meta = {
            "modality": "fmri",
            "tr_seconds": ds.tr_seconds,
            "word_onsets": [int(o) for o in ds.word_onsets],
        }
    else:
        meta = {
            "modality": "meg",
            "bin_ms": ds.bin_ms,
            "sensor_locations": [int(s) for s in ds.sensor_locations],
        }
    _write_sidecar(path, meta)


def read_brain_dataset(path: Path | str) -> BrainDataset:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _BRAIN_PREFIX.size:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    magic, version, modality_flag, dtype_flag = _BRAIN_PREFIX.unpack_from(raw)
    if magic != MAGIC_BRAIN:
        raise BadMagicError(f"{path}: expected magic {MAGIC_BRAIN!r}, got {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if modality_flag not in _MODALITY_NAMES:
        raise FormatError(f"{path}: unknown modality flag {modality_flag}")
    if dtype_flag not in _DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype flag {dtype_flag}")
    modality = _MODALITY_NAMES[modality_flag]
    ndim = 2 if modality == "fmri" else 3
    dims_size = 8 * ndim
    if len(raw) < _BRAIN_PREFIX.size + dims_size:
        raise TruncatedPayloadError(f"{path}: file shorter than dimension block")
    dims = struct.unpack_from(f"<{ndim}Q", raw, _BRAIN_PREFIX.size)
    dtype = _DTYPE_CODES[dtype_flag]
    expected = int(np.prod(dims)) * dtype.itemsize
    actual = len(raw) - _BRAIN_PREFIX.size - dims_size
    if actual < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {actual} bytes, header implies {expected}"
        )
    if actual > expected:
        raise DimensionMismatchError(
            f"{path}: payload has {actual} bytes, header implies {expected}"
        )
    values = np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)),
                           offset=_BRAIN_PREFIX.size + dims_size).reshape(dims)
    _require_finite(values, str(path))
    values = _freeze(values.copy())
    meta = _read_sidecar(path)
    if meta.get("modality") != modality:
        raise FormatError(
            f"{path}: sidecar modality {meta.get('modality')!r} "
            f"does not match binary flag {modality!r}"
        )
    try:
        if modality == "fmri":
            onsets = np.asarray(meta["word_onsets"], dtype=np.int64)
            return BrainDataset(modality="fmri", values=values,
                                tr_seconds=float(meta["tr_seconds"]),
                                word_onsets=onsets)
        locs = np.asarray(meta["sensor_locations"], dtype=np.int64)
        return BrainDataset(modality="meg", values=values,
                            bin_ms=float(meta["bin_ms"]),
                            sensor_locations=locs)
    except KeyError as exc:
        raise FormatError(f"{path}: sidecar missing field {exc}") from exc


# ---------------------------------------------------------------------------
# adjacency and ROI labels
# ---------------------------------------------------------------------------


def write_adjacency(graph: AdjacencyGraph, path: Path | str) -> None:
    lines = [f"{i},{j}\n" for i, j in graph.edges]
    Path(path).write_text("".join(lines))


def read_adjacency(path: Path | str, n_voxels: int | None = None) -> AdjacencyGraph:
    """Parse a text edge list; rejects self-loops and out-of-range indices.

    ``n_voxels`` bounds the index range; inferred as max index + 1 when
    omitted.
    """
    path = Path(path)
    edges = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        try:
            i, j = (int(p) for p in parts)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: malformed edge {line!r}") from exc
        if i == j:
            raise FormatError(f"{path}:{lineno}: self-loop {i},{j}")
        if i < 0 or j < 0:
            raise FormatError(f"{path}:{lineno}: negative voxel index")
        edges.append((i, j))
    edges_arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if n_voxels is None:
        n_voxels = int(edges_arr.max()) + 1 if edges_arr.size else 0
    elif edges_arr.size and edges_arr.max() >= n_voxels:
        raise FormatError(
            f"{path}: edge index {edges_arr.max()} out of range for "
            f"{n_voxels} voxels"
        )
    return AdjacencyGraph(n_voxels=n_voxels, edges=edges_arr)


def write_rois(rois: RoiLabels, path: Path | str) -> None:
    lines = ["voxel_index,label\n"]
    lines += [f"{i},{label}\n" for i, label in enumerate(rois.labels)]
    Path(path).write_text("".join(lines))


def read_rois(path: Path | str, n_voxels: int | None = None) -> RoiLabels:
    """Parse the ``voxel_index,label`` CSV; unlisted voxels default to none."""
    path = Path(path)
    entries: dict[int, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line == "voxel_index,label":
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: malformed row {line!r}")
        try:
            idx = int(parts[0])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad voxel index") from exc
        label = parts[1].strip()
        if label not in ROI_LABELS:
            raise FormatError(f"{path}:{lineno}: unknown label {label!r}")
        if idx in entries:
            raise FormatError(f"{path}:{lineno}: duplicate voxel index {idx}")
        if idx < 0:
            raise FormatError(f"{path}:{lineno}: negative voxel index")
        entries[idx] = label
    if n_voxels is None:
        n_voxels = max(entries) + 1 if entries else 0
    elif entries and max(entries) >= n_voxels:
        raise FormatError(f"{path}: voxel index {max(entries)} out of range")
    labels = np.full(n_voxels, "none", dtype="U8")
    for idx, label in entries.items():
        labels[idx] = label
    return RoiLabels(labels=labels)
