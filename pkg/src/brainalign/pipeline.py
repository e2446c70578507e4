"""End-to-end orchestration: fit -> classify -> threshold -> report.

A run owns its output directory exclusively and serializes its full
configuration (every knob that touches numerics) plus the config hash
into it, so a run directory is reproducible from its own config.json.
"""

from __future__ import annotations

import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .datamodel import (
    AccuracyMap,
    RoiLabels,
    SignificanceResult,
    read_accuracy_map,
    read_adjacency,
    read_brain_dataset,
    read_feature_matrix,
    read_rois,
    write_accuracy_map,
)
from .errors import AlignError, ConfigError, DimensionMismatchError
from .evalcls import ClassifierConfig, build_neighborhoods, classify_fmri, classify_meg
from .featprep import build_delayed, group_by_tr
from .ridge import FoldPlan, LambdaGrid, fit_eval_folds
from .stats import RegionRow, fdp_threshold, region_summary

DEFAULT_LAMBDA_GRID = tuple(np.logspace(0, 4, 10))


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; fully serialized for reproducibility."""

    features: str
    brain: str
    out: str
    adjacency: str | None = None
    rois: str | None = None
    seed: int = 0
    n_outer: int = 4
    n_nested: int = 10
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    delays: tuple[int, ...] = (1, 2, 3, 4)
    chunk_len: int = 20
    n_repeats: int = 1000
    q: float = 0.05
    threshold: float = 0.7
    norm: str = "independent"
    workers: int = 1
    disjoint_distractors: bool = True
    block_size: int = 1024
    save_weights: bool = True

    def to_json(self) -> dict:
        data = asdict(self)
        data["lambda_grid"] = list(self.lambda_grid)
        data["delays"] = list(self.delays)
        return data

    def config_hash(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        data = dict(data)
        data.pop("config_hash", None)
        data.pop("version", None)
        data["lambda_grid"] = tuple(data["lambda_grid"])
        data["delays"] = tuple(data["delays"])
        return cls(**data)


@contextmanager
def _stage(name: str, profile: dict):
    """Tag module errors with the pipeline stage and record wall time."""
    t0 = time.perf_counter()
    try:
        yield
    except AlignError as exc:
        exc.args = (f"[{name}] {exc}",)
        raise
    finally:
        profile[name] = round(time.perf_counter() - t0, 3)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_mask_csv(mask: np.ndarray, path: Path) -> None:
    lines = ["index,rejected\n"]
    lines += [f"{i},{int(m)}\n" for i, m in enumerate(mask.reshape(-1))]
    path.write_text("".join(lines))


def read_mask_csv(path: Path | str) -> np.ndarray:
    rows = Path(path).read_text().splitlines()
    return np.array([bool(int(r.split(",")[1])) for r in rows[1:]], dtype=bool)


def write_significance(sig: SignificanceResult, out_dir: Path,
                       extra: dict | None = None) -> None:
    payload = sig.to_json()
    payload.update(extra or {})
    _write_json(out_dir / "significance.json", payload)
    write_mask_csv(sig.rejected, out_dir / "rejected.csv")
    lines = ["delta,fdp_hat\n"]
    lines += [f"{float(d)!r},{float(f)!r}\n" for d, f in sig.fdp_trace]
    (out_dir / "fdp_trace.csv").write_text("".join(lines))


def write_region_table(rows_acc: list[RegionRow], rows_rej: list[RegionRow] | None,
                       path: Path) -> None:
    header = "label,n_voxels,frac_above_threshold,frac_rejected,mean,stderr\n"
    lines = [header]
    rej_by_label = {r.label: r for r in rows_rej} if rows_rej else {}
    for row in rows_acc:
        rej = rej_by_label.get(row.label)
        frac_rej = rej.mean if rej else float("nan")
        lines.append(
            f"{row.label},{row.n_voxels},{row.mean!r},{frac_rej!r},"
            f"{row.mean!r},{row.stderr!r}\n"
        )
    path.write_text("".join(lines))


def _prepare_design(cfg: RunConfig, features, brain):
    """Build the regression design and 2-D target matrix per modality."""
    if brain.modality == "fmri":
        if features.alignment == "word":
            if features.n_rows != brain.word_onsets.shape[0]:
                raise DimensionMismatchError(
                    f"{features.n_rows} feature rows for "
                    f"{brain.word_onsets.shape[0]} word onsets"
                )
            features = group_by_tr(features, brain.word_onsets, brain.n_trs)
        if features.n_rows != brain.n_trs:
            raise DimensionMismatchError(
                f"{features.n_rows} feature rows for {brain.n_trs} TRs"
            )
        design = build_delayed(features, cfg.delays).values
        targets = brain.values.astype(np.float64)
        return design, targets
    # MEG: word-aligned features predict each (sensor, timebin) directly
    if features.alignment != "word":
        raise ConfigError("MEG runs require word-aligned features")
    if features.n_rows != brain.n_words:
        raise DimensionMismatchError(
            f"{features.n_rows} feature rows for {brain.n_words} words"
        )
    design = features.values.astype(np.float64)
    targets = brain.values.reshape(brain.n_words, -1).astype(np.float64)
    return design, targets


def run_pipeline(cfg: RunConfig) -> Path:
    """Execute a full run; returns the output directory."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    profile: dict = {}
    config_hash = cfg.config_hash()
    payload = cfg.to_json()
    payload["config_hash"] = config_hash
    payload["version"] = __version__
    _write_json(out / "config.json", payload)

    with _stage("load", profile):
        features = read_feature_matrix(cfg.features)
        brain = read_brain_dataset(cfg.brain)
        graph = None
        if brain.modality == "fmri":
            if cfg.adjacency is None:
                raise ConfigError("fMRI runs require --adjacency")
            graph = read_adjacency(cfg.adjacency, n_voxels=brain.n_voxels)
        rois = None
        if cfg.rois is not None and brain.modality == "fmri":
            rois = read_rois(cfg.rois, n_voxels=brain.n_voxels)

    with _stage("featprep", profile):
        design, targets = _prepare_design(cfg, features, brain)

    with _stage("ridge", profile):
        plan = FoldPlan(n_rows=design.shape[0], n_outer=cfg.n_outer,
                        n_nested=cfg.n_nested)
        grid = LambdaGrid(np.asarray(cfg.lambda_grid))
        fit, fold_preds = fit_eval_folds(design, targets, plan, grid,
                                         norm=cfg.norm,
                                         weights_dtype=np.float32)
        if cfg.save_weights:
            fit.save(out / "encoding_fit.npz")
        pred_arrays = {}
        for fp in fold_preds:
            pred_arrays[f"pred_{fp.fold}"] = fp.predictions.astype(np.float32)
            pred_arrays[f"val_range_{fp.fold}"] = np.asarray(fp.val_range)
        np.savez(out / "fold_predictions.npz", **pred_arrays)

    with _stage("classify", profile):
        ccfg = ClassifierConfig(chunk_len=cfg.chunk_len, n_repeats=cfg.n_repeats,
                                seed=cfg.seed,
                                disjoint_distractors=cfg.disjoint_distractors,
                                block_size=cfg.block_size)
        nbhd = build_neighborhoods(graph) if brain.modality == "fmri" else None
        fold_maps = []
        for fp in fold_preds:
            if brain.modality == "fmri":
                fold_maps.append(classify_fmri(
                    fp.val_targets, fp.predictions, nbhd, ccfg,
                    fold=fp.fold, n_workers=cfg.workers))
            else:
                shape = (-1, brain.n_sensors, brain.n_timebins)
                fold_maps.append(classify_meg(
                    fp.val_targets.reshape(shape), fp.predictions.reshape(shape),
                    brain.sensor_locations, ccfg,
                    fold=fp.fold, n_workers=cfg.workers))
        mean_values = np.mean([m.values for m in fold_maps], axis=0)
        acc = AccuracyMap(values=mean_values, n_repeats=cfg.n_repeats,
                          granularity=fold_maps[0].granularity,
                          extra={"config_hash": config_hash,
                                 "n_folds": len(fold_maps), "seed": cfg.seed})
        write_accuracy_map(acc, out / "accuracy.baam")

    with _stage("significance", profile):
        sig = fdp_threshold(acc, q=cfg.q)
        write_significance(sig, out, extra={"config_hash": config_hash})

    with _stage("report", profile):
        if rois is not None and acc.granularity == "voxel":
            rows_acc = region_summary(acc, rois, threshold=cfg.threshold)
            rows_rej = region_summary(sig.rejected, rois, threshold=cfg.threshold)
            write_region_table(rows_acc, rows_rej, out / "roi_summary.csv")

    profile["total"] = round(sum(profile.values()), 3)
    profile["n_rows"] = int(design.shape[0])
    profile["n_design_cols"] = int(design.shape[1])
    profile["n_outputs"] = int(targets.shape[1])
    _write_json(out / "profile.json", profile)
    return out


# ---------------------------------------------------------------------------
# sweep reports: layer x context curves, baseline-adjusted and paired deltas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepEntry:
    """One swept representation: which layer/context produced which map."""

    layer: int
    context: int
    accuracy: str  # path to a BAAM file


@dataclass(frozen=True)
class SweepSpec:
    entries: tuple[SweepEntry, ...]
    baseline_layer: int | None = None
    mask_mode: str = "union"  # union | all | file
    mask_path: str | None = None
    q: float = 0.05

    @classmethod
    def from_manifest(cls, path: Path | str, baseline_layer: int | None = None,
                      mask_mode: str = "union", mask_path: str | None = None,
                      q: float = 0.05) -> "SweepSpec":
        data = json.loads(Path(path).read_text())
        entries = tuple(SweepEntry(layer=int(e["layer"]), context=int(e["context"]),
                                   accuracy=e["accuracy"])
                        for e in data["entries"])
        if not entries:
            raise ConfigError(f"{path}: empty sweep manifest")
        return cls(entries=entries, baseline_layer=baseline_layer,
                   mask_mode=mask_mode, mask_path=mask_path, q=q)


@dataclass(frozen=True)
class SweepResult:
    curves: dict  # (layer, context) -> mean accuracy over mask
    adjusted: dict | None  # minus the baseline layer's curve
    deltas: dict | None  # minus a paired run's map means
    mask: np.ndarray
    mask_mode: str


def _load_sweep_maps(spec: SweepSpec) -> dict[tuple[int, int], AccuracyMap]:
    maps = {}
    n = None
    for e in spec.entries:
        m = read_accuracy_map(e.accuracy)
        if n is None:
            n = m.flat.size
        elif m.flat.size != n:
            raise DimensionMismatchError(
                f"{e.accuracy}: map size {m.flat.size} differs from {n}"
            )
        maps[(e.layer, e.context)] = m
    return maps


def _sweep_mask(spec: SweepSpec, maps: dict) -> np.ndarray:
    n = next(iter(maps.values())).flat.size
    if spec.mask_mode == "all":
        return np.ones(n, dtype=bool)
    if spec.mask_mode == "file":
        if spec.mask_path is None:
            raise ConfigError("mask_mode=file requires a mask path")
        mask = read_mask_csv(spec.mask_path)
        if mask.size != n:
            raise DimensionMismatchError("mask size does not match the maps")
        return mask
    if spec.mask_mode == "union":
        mask = np.zeros(n, dtype=bool)
        for m in maps.values():
            mask |= fdp_threshold(m, q=spec.q).rejected
        return mask
    raise ConfigError(f"unknown mask mode {spec.mask_mode!r}")


def sweep_report(spec: SweepSpec, paired: SweepSpec | None = None) -> SweepResult:
    """Mean accuracy over the voxel mask per (layer, context).

    Adjusted curves subtract the baseline layer's curve at each context;
    delta curves subtract a paired run's means (entry minus paired) for
    matching (layer, context) keys.
    """
    maps = _load_sweep_maps(spec)
    mask = _sweep_mask(spec, maps)
    if not mask.any():
        raise ConfigError("sweep mask is empty; no voxels to aggregate")
    curves = {key: float(m.flat[mask].mean()) for key, m in maps.items()}

    adjusted = None
    if spec.baseline_layer is not None:
        base = {ctx: val for (layer, ctx), val in curves.items()
                if layer == spec.baseline_layer}
        missing = {ctx for (_, ctx) in curves} - set(base)
        if missing:
            raise ConfigError(
                f"baseline layer {spec.baseline_layer} missing contexts {sorted(missing)}"
            )
        adjusted = {(layer, ctx): val - base[ctx]
                    for (layer, ctx), val in curves.items()}

    deltas = None
    if paired is not None:
        paired_maps = _load_sweep_maps(paired)
        missing = set(maps) - set(paired_maps)
        if missing:
            raise ConfigError(f"paired sweep missing entries {sorted(missing)}")
        deltas = {key: float(maps[key].flat[mask].mean()
                             - paired_maps[key].flat[mask].mean())
                  for key in maps}
    return SweepResult(curves=curves, adjusted=adjusted, deltas=deltas,
                       mask=mask, mask_mode=spec.mask_mode)


def write_sweep_outputs(result: SweepResult, out_dir: Path | str) -> None:
    from ._plots import layer_context_plot

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def write_curve_csv(name: str, data: dict, col: str) -> None:
        lines = [f"layer,context,{col}\n"]
        for (layer, ctx) in sorted(data):
            lines.append(f"{layer},{ctx},{data[(layer, ctx)]!r}\n")
        (out / name).write_text("".join(lines))

    write_curve_csv("curves.csv", result.curves, "mean_accuracy")
    layer_context_plot(result.curves, out / "curves.svg",
                       ylabel="mean accuracy over mask")
    if result.adjusted is not None:
        write_curve_csv("adjusted.csv", result.adjusted, "adjusted_accuracy")
        layer_context_plot(result.adjusted, out / "adjusted.svg",
                           ylabel="accuracy minus baseline layer")
    if result.deltas is not None:
        write_curve_csv("deltas.csv", result.deltas, "delta_accuracy")
        layer_context_plot(result.deltas, out / "deltas.svg",
                           ylabel="accuracy delta vs paired run")
    _write_json(out / "sweep_meta.json", {
        "mask_mode": result.mask_mode,
        "mask_size": int(result.mask.sum()),
        "n_voxels": int(result.mask.size),
    })
    write_mask_csv(result.mask, out / "sweep_mask.csv")


# ---------------------------------------------------------------------------
# long-context vs word-embedding comparison
# ---------------------------------------------------------------------------

PARTITION_CATEGORIES = ("both", "long-only", "word-only", "neither")


@dataclass(frozen=True)
class ComparisonResult:
    categories: np.ndarray  # unicode array over voxels
    counts: dict
    crosstab: list[tuple[str, dict]] | None  # per ROI label


def compare_context_vs_word(mask_long: np.ndarray, mask_word: np.ndarray,
                            rois: RoiLabels | None = None) -> ComparisonResult:
    """Partition voxels by which significance mask covers them."""
    mask_long = np.asarray(mask_long, dtype=bool)
    mask_word = np.asarray(mask_word, dtype=bool)
    if mask_long.shape != mask_word.shape:
        raise DimensionMismatchError("significance masks differ in shape")
    categories = np.full(mask_long.shape[0], "neither", dtype="U9")
    categories[mask_long & mask_word] = "both"
    categories[mask_long & ~mask_word] = "long-only"
    categories[~mask_long & mask_word] = "word-only"
    counts = {c: int(np.count_nonzero(categories == c))
              for c in PARTITION_CATEGORIES}
    crosstab = None
    if rois is not None:
        if rois.n_voxels != mask_long.shape[0]:
            raise DimensionMismatchError("ROI labels do not cover the voxel range")
        crosstab = []
        for label in np.unique(rois.labels):
            member = rois.labels == label
            crosstab.append((str(label), {
                c: int(np.count_nonzero(member & (categories == c)))
                for c in PARTITION_CATEGORIES
            }))
    return ComparisonResult(categories=categories, counts=counts, crosstab=crosstab)


def write_comparison(result: ComparisonResult, out_dir: Path | str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["voxel_index,category\n"]
    lines += [f"{i},{c}\n" for i, c in enumerate(result.categories)]
    (out / "partition.csv").write_text("".join(lines))
    _write_json(out / "partition_counts.json", result.counts)
    if result.crosstab is not None:
        header = "label," + ",".join(PARTITION_CATEGORIES) + "\n"
        lines = [header]
        for label, row in result.crosstab:
            lines.append(label + "," +
                         ",".join(str(row[c]) for c in PARTITION_CATEGORIES) + "\n")
        (out / "roi_crosstab.csv").write_text("".join(lines))


# ---------------------------------------------------------------------------
# task-comparison table (variant vs base probe outcomes)
# ---------------------------------------------------------------------------


def read_task_outcomes(path: Path | str) -> dict[str, np.ndarray]:
    """Parse a probe outcome CSV: condition,item_id,outcome[,...]."""
    rows = Path(path).read_text().splitlines()
    if not rows:
        raise ConfigError(f"{path}: empty outcome file")
    header = rows[0].split(",")
    try:
        cond_col = header.index("condition")
        item_col = header.index("item_id")
        out_col = header.index("outcome")
    except ValueError as exc:
        raise ConfigError(f"{path}: missing column: {exc}") from exc
    by_task: dict[str, dict[str, int]] = {}
    for row in rows[1:]:
        if not row.strip():
            continue
        parts = row.split(",")
        task = parts[cond_col]
        by_task.setdefault(task, {})[parts[item_col]] = int(parts[out_col])
    return {
        task: np.array([items[k] for k in sorted(items)], dtype=np.float64)
        for task, items in by_task.items()
    }


def write_task_table(comparisons, path: Path | str) -> None:
    lines = ["condition,variant,base,count,t_stat,p_value,significant\n"]
    for c in comparisons:
        lines.append(
            f"{c.task},{c.mean_variant:.4f},{c.mean_base:.4f},{c.n_items},"
            f"{c.t_stat!r},{c.p_value!r},{int(c.significant)}\n"
        )
    Path(path).write_text("".join(lines))
