"""Per-output ridge regression with nested cross-validated penalties.

Every output (voxel, or MEG sensor/timebin pair) shares one design
matrix but carries its own penalty. The cost driver at ~30000 outputs is
therefore a factorization of the train design that can be reused across
all grid penalties and all outputs:

    rows >= cols:  Z'Z = V L V'   ->  w = V (L + lam)^-1 V' Z' y
    rows <  cols:  ZZ' = U L U'   ->  w = Z' U (L + lam)^-1 U' y

:func:`ridge_solve` is the SVD reference path (also the only one that
accepts ``lam = 0``); :class:`RidgeFactorization` is the shared fast path
used by nested CV and the fold driver, and is validated against the
reference in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import EncodingFit, FoldFit
from .errors import ConfigError, DimensionMismatchError, NonFiniteError, NumericError
from .featprep import normalize_fit, normalize_with

NORM_MODES = ("independent", "train-stats", "none")


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly increasing grid of positive penalties."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ConfigError("lambda grid needs at least 2 values")
        if (values <= 0).any():
            raise ConfigError("lambda grid values must be positive")
        if (np.diff(values) <= 0).any():
            raise ConfigError("lambda grid must be strictly increasing")
        object.__setattr__(self, "values", values)

    @classmethod
    def log_spaced(cls, lo: float = 1.0, hi: float = 1e4,
                   n: int = 10) -> "LambdaGrid":
        return cls(np.logspace(np.log10(lo), np.log10(hi), n))


@dataclass(frozen=True)
class FoldPlan:
    """Contiguous-in-time outer and nested fold layout.

    Folds are contiguous row blocks, never shuffled: fMRI noise is
    temporally autocorrelated and the chunk classifier needs contiguous
    held-out stretches.
    """

    n_rows: int
    n_outer: int = 4
    n_nested: int = 10

    def __post_init__(self):
        if self.n_outer < 2 or self.n_nested < 2:
            raise ConfigError("need at least 2 outer and 2 nested folds")
        if self.n_rows < self.n_outer:
            raise ConfigError(
                f"{self.n_rows} rows cannot be split into {self.n_outer} folds"
            )

    def val_ranges(self) -> list[tuple[int, int]]:
        """[start, stop) of each outer validation block."""
        return _contiguous_blocks(self.n_rows, self.n_outer)

    def outer_folds(self):
        """Yield (fold, train_indices, val_range) per outer fold."""
        all_rows = np.arange(self.n_rows)
        for k, (start, stop) in enumerate(self.val_ranges()):
            train = np.concatenate([all_rows[:start], all_rows[stop:]])
            yield k, train, (start, stop)


def _contiguous_blocks(n: int, k: int) -> list[tuple[int, int]]:
    """Split [0, n) into k contiguous blocks; earlier blocks absorb the remainder."""
    base, extra = divmod(n, k)
    ranges, start = [], 0
    for i in range(k):
        stop = start + base + (1 if i < extra else 0)
        ranges.append((start, stop))
        start = stop
    return ranges


def _check_finite(name, arr):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} contains NaN or Inf")


def _as_lambda_vector(lambdas, n_outputs: int) -> np.ndarray:
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.ndim == 0:
        lambdas = np.full(n_outputs, float(lambdas))
    if lambdas.shape != (n_outputs,):
        raise DimensionMismatchError(
            f"{lambdas.shape[0]} penalties for {n_outputs} outputs"
        )
    if (lambdas < 0).any():
        raise ConfigError("penalties must be non-negative")
    return lambdas


def ridge_solve(Z: np.ndarray, Y: np.ndarray, lambdas) -> np.ndarray:
    """Solve (Z'Z + lam_i I) w_i = Z' y_i per output column via SVD.

    ``lam = 0`` falls back to the pseudoinverse solution (testing only).
    No intercept: callers guarantee zero-mean columns.
    """
    Z = np.asarray(Z, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Z.ndim != 2 or Y.ndim != 2 or Z.shape[0] != Y.shape[0]:
        raise DimensionMismatchError(
            f"design {Z.shape} incompatible with targets {Y.shape}"
        )
    if Z.shape[0] < 1:
        raise DimensionMismatchError("design needs at least one row")
    _check_finite("design", Z)
    _check_finite("targets", Y)
    lambdas = _as_lambda_vector(lambdas, Y.shape[1])

    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    UtY = U.T @ Y
    W = np.empty((Z.shape[1], Y.shape[1]), dtype=np.float64)
    cutoff = s[0] * max(Z.shape) * np.finfo(np.float64).eps if s.size else 0.0
    for lam in np.unique(lambdas):
        cols = np.nonzero(lambdas == lam)[0]
        if lam == 0.0:
            d = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
        else:
            d = s / (s**2 + lam)
        W[:, cols] = Vt.T @ (d[:, None] * UtY[:, cols])
    return W


class RidgeFactorization:
    """One symmetric eigendecomposition shared across penalties and outputs.

    Constructed once per train split; `weights`, `predict` and
    `grid_val_errors` then cost one small matmul per distinct penalty.
    Requires strictly positive penalties (the zero-penalty case belongs
    to :func:`ridge_solve`).
    """

    def __init__(self, Z: np.ndarray, Y: np.ndarray):
        Z = np.asarray(Z, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Z.shape[0] != Y.shape[0]:
            raise DimensionMismatchError(
                f"design {Z.shape} incompatible with targets {Y.shape}"
            )
        _check_finite("design", Z)
        _check_finite("targets", Y)
        self.Z = Z
        self.n, self.p = Z.shape
        self.n_outputs = Y.shape[1]
        self.dual = self.n < self.p
        if self.dual:
            gram = Z @ Z.T
        else:
            gram = Z.T @ Z
        eigvals, basis = np.linalg.eigh(gram)
        self.eigvals = np.maximum(eigvals, 0.0)
        self.basis = basis  # U (dual) or V (primal)
        if self.dual:
            self.coef = basis.T @ Y  # U'Y, (n, v)
        else:
            self.coef = basis.T @ (Z.T @ Y)  # V'Z'Y, (p, v)
        self._zt_basis = None  # Z'U, built on demand for dual weights

    def _shrink(self, lam: float) -> np.ndarray:
        if lam <= 0:
            raise NumericError("factorization path requires positive penalties")
        return 1.0 / (self.eigvals + lam)

    def weights(self, lambdas) -> np.ndarray:
        """Train weights (p, v) for per-output penalties."""
        lambdas = _as_lambda_vector(lambdas, self.n_outputs)
        W = np.empty((self.p, self.n_outputs), dtype=np.float64)
        if self.dual and self._zt_basis is None:
            self._zt_basis = self.Z.T @ self.basis
        proj = self._zt_basis if self.dual else self.basis
        for lam in np.unique(lambdas):
            cols = np.nonzero(lambdas == lam)[0]
            W[:, cols] = proj @ (self._shrink(lam)[:, None] * self.coef[:, cols])
        return W

    def _val_basis(self, Z_val: np.ndarray) -> np.ndarray:
        Z_val = np.asarray(Z_val, dtype=np.float64)
        if Z_val.shape[1] != self.p:
            raise DimensionMismatchError("validation design has wrong column count")
        if self.dual:
            return (Z_val @ self.Z.T) @ self.basis
        return Z_val @ self.basis

    def predict(self, Z_val: np.ndarray, lambdas) -> np.ndarray:
        """Validation predictions (m, v) for per-output penalties."""
        lambdas = _as_lambda_vector(lambdas, self.n_outputs)
        M = self._val_basis(Z_val)
        P = np.empty((M.shape[0], self.n_outputs), dtype=np.float64)
        for lam in np.unique(lambdas):
            cols = np.nonzero(lambdas == lam)[0]
            P[:, cols] = M @ (self._shrink(lam)[:, None] * self.coef[:, cols])
        return P

    def grid_val_errors(self, Z_val: np.ndarray, Y_val: np.ndarray,
                        grid: np.ndarray) -> np.ndarray:
        """Summed squared validation error, shape (grid, outputs)."""
        Y_val = np.asarray(Y_val, dtype=np.float64)
        M = self._val_basis(Z_val)
        errors = np.empty((len(grid), self.n_outputs), dtype=np.float64)
        for g, lam in enumerate(grid):
            P = M @ (self._shrink(lam)[:, None] * self.coef)
            P -= Y_val
            errors[g] = np.einsum("ij,ij->j", P, P)
        return errors


def _normalize_pair(train, val, mode: str):
    if mode == "independent":
        return normalize_fit(train)[0], normalize_fit(val)[0]
    if mode == "train-stats":
        train_n, stats = normalize_fit(train)
        return train_n, normalize_with(val, stats)
    if mode == "none":
        return (np.asarray(train, dtype=np.float64),
                np.asarray(val, dtype=np.float64))
    raise ConfigError(f"unknown normalization mode {mode!r}")


def nested_cv_lambda(Z_train: np.ndarray, Y_train: np.ndarray, grid,
                     n_folds: int = 10, norm: str = "independent") -> np.ndarray:
    """Pick a penalty per output by contiguous nested cross-validation.

    Nested validation error is *summed* (not averaged) across folds; ties
    break toward the larger penalty for reproducibility. ``grid`` may be
    any positive sequence; a :class:`LambdaGrid` adds strictness checks.
    """
    grid = grid.values if isinstance(grid, LambdaGrid) else \
        np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ConfigError("empty lambda grid")
    if (grid <= 0).any():
        raise ConfigError("nested CV penalties must be positive")
    Z_train = np.asarray(Z_train, dtype=np.float64)
    Y_train = np.asarray(Y_train, dtype=np.float64)
    if Y_train.ndim == 1:
        Y_train = Y_train[:, None]
    n = Z_train.shape[0]
    if n < n_folds:
        raise ConfigError(f"{n} train rows cannot form {n_folds} nested folds")

    errors = np.zeros((grid.size, Y_train.shape[1]), dtype=np.float64)
    for start, stop in _contiguous_blocks(n, n_folds):
        if stop - start == 0:
            raise ConfigError("nested fold with zero rows")
        keep = np.concatenate([np.arange(0, start), np.arange(stop, n)])
        Z_tr, Z_val = _normalize_pair(Z_train[keep], Z_train[start:stop], norm)
        Y_tr, Y_val = _normalize_pair(Y_train[keep], Y_train[start:stop], norm)
        fact = RidgeFactorization(Z_tr, Y_tr)
        errors += fact.grid_val_errors(Z_val, Y_val, grid)
    # last index attaining the minimum = larger penalty on ties
    best = (grid.size - 1) - np.argmin(errors[::-1], axis=0)
    return grid[best]


@dataclass(frozen=True)
class FoldPrediction:
    """Held-out predictions for one outer fold, plus the matching targets."""

    fold: int
    val_range: tuple[int, int]
    predictions: np.ndarray  # (m, v)
    val_targets: np.ndarray  # (m, v), normalized like the fit saw them


def fit_eval_folds(design: np.ndarray, targets: np.ndarray, plan: FoldPlan,
                   grid: LambdaGrid, norm: str = "independent",
                   weights_dtype=np.float64,
                   ) -> tuple[EncodingFit, list[FoldPrediction]]:
    """Outer-CV driver: per fold, nested-CV penalties, fit, predict.

    Train and validation matrices are normalized per ``norm``
    ("independent" normalizes each split with its own stats). Predictions
    for fold k never see fold k's rows during fitting.
    """
    design = np.asarray(design, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if design.shape[0] != targets.shape[0]:
        raise DimensionMismatchError(
            f"design has {design.shape[0]} rows, targets {targets.shape[0]}"
        )
    if plan.n_rows != design.shape[0]:
        raise DimensionMismatchError(
            f"fold plan covers {plan.n_rows} rows, design has {design.shape[0]}"
        )
    if norm not in NORM_MODES:
        raise ConfigError(f"unknown normalization mode {norm!r}")

    folds, predictions = [], []
    for k, train_idx, (start, stop) in plan.outer_folds():
        Z_tr_raw, Z_val_raw = design[train_idx], design[start:stop]
        Y_tr_raw, Y_val_raw = targets[train_idx], targets[start:stop]
        lambdas = nested_cv_lambda(Z_tr_raw, Y_tr_raw, grid,
                                   n_folds=plan.n_nested, norm=norm)
        Z_tr, Z_val = _normalize_pair(Z_tr_raw, Z_val_raw, norm)
        Y_tr, Y_val = _normalize_pair(Y_tr_raw, Y_val_raw, norm)
        fact = RidgeFactorization(Z_tr, Y_tr)
        W = fact.weights(lambdas)
        pred = Z_val @ W
        folds.append(FoldFit(weights=W.astype(weights_dtype, copy=False),
                             lambdas=lambdas, train_rows=train_idx,
                             val_range=(start, stop)))
        predictions.append(FoldPrediction(fold=k, val_range=(start, stop),
                                          predictions=pred, val_targets=Y_val))
    fit = EncodingFit(folds=tuple(folds), n_rows=plan.n_rows)
    return fit, predictions
