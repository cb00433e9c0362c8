"""Hyperparameter grid search on a held-out validation split.

Feature scale and the ridge regularizer are searched on log10-spaced grids
for every family; the RBF width gets its own grid built around the 1/d
heuristic, and the optical and linear families can additionally search an
input bias and a binarization threshold. Scale commutes with the random
projection, so each (threshold, bias, gamma) combination projects once and
the (scale, alpha) sub-grid reuses the projected features; results are
identical to projecting per grid point.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np

from .projection import FeatureMapSpec, binarize, build_features
from .ridge import LabeledDataset, SolverError, encode_labels, solve_regularized


def accuracy(predicted, labels) -> float:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape:
        raise ValueError("prediction/label shape mismatch")
    return float(np.mean(predicted == labels))


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive train/validation index sets, deterministic in seed."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n_val = int(round(n * fraction))
    if n_val < 1 or n_val > n - 1:
        raise ValueError(
            f"split of {n} rows at fraction {fraction} leaves a degenerate side "
            f"({n - n_val} train / {n_val} validation)"
        )
    perm = np.random.default_rng(seed).permutation(n)
    val = np.sort(perm[:n_val])
    train = np.sort(perm[n_val:])
    return train, val


def split(dataset: LabeledDataset, fraction: float, seed: int):
    """Split a dataset into (train, validation) parts."""
    train_idx, val_idx = split_indices(dataset.n, fraction, seed)
    return dataset.subset(train_idx), dataset.subset(val_idx)


def gamma_heuristic(d: int) -> float:
    """Default RBF width 1/d for d input features."""
    if not isinstance(d, (int, np.integer)) or isinstance(d, bool) or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    return 1.0 / d


def gamma_grid_around(d: int, num: int = 9) -> list[float]:
    """Log-spaced gamma grid spanning the decade below and above 1/d."""
    center = gamma_heuristic(d)
    return [float(g) for g in center * np.logspace(-1.0, 1.0, num)]


def _default_scale_grid() -> list[float]:
    return [float(v) for v in np.logspace(-3, 3, 7)]


def _default_alpha_grid() -> list[float]:
    return [float(v) for v in np.logspace(-6, 3, 10)]


def _default_bias_grid() -> list[float]:
    return [0.0] + [float(v) for v in np.logspace(-2, 2, 5)]


@dataclass(frozen=True)
class GridSearchConfig:
    """Grids and split policy for :func:`grid_search`.

    gamma_grid of None means "build one from the input dimension" for the
    RBF family; threshold_grid of None disables binarization entirely.
    """

    split_seed: int
    projection_seed: int
    scale_grid: list[float] = field(default_factory=_default_scale_grid)
    alpha_grid: list[float] = field(default_factory=_default_alpha_grid)
    gamma_grid: list[float] | None = None
    bias_grid: list[float] = field(default_factory=_default_bias_grid)
    threshold_grid: list[float] | None = None
    validation_fraction: float = 0.2
    metric: str = "accuracy"  # or "neg_mse"

    def __post_init__(self):
        if not self.scale_grid or not self.alpha_grid:
            raise ValueError("scale and alpha grids must be non-empty")
        if self.gamma_grid is not None and not self.gamma_grid:
            raise ValueError("gamma_grid, when given, must be non-empty")
        if self.threshold_grid is not None and not self.threshold_grid:
            raise ValueError("threshold_grid, when given, must be non-empty")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must be in (0, 1)")
        if self.metric not in ("accuracy", "neg_mse"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class GridPoint:
    params: dict
    validation_accuracy: float
    failed: bool = False


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    best_validation_accuracy: float
    rows: list[GridPoint]

    @property
    def cardinality(self) -> int:
        return len(self.rows)

    def to_dict(self) -> dict:
        return {
            "type": "grid_search_result",
            "best_params": self.best_params,
            "best_validation_accuracy": self.best_validation_accuracy,
            "rows": [asdict(r) for r in self.rows],
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, payload: dict) -> "GridSearchResult":
        rows = [GridPoint(**r) for r in payload["rows"]]
        return cls(payload["best_params"], payload["best_validation_accuracy"], rows)

    @classmethod
    def from_json(cls, path) -> "GridSearchResult":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_csv(self, path):
        keys = sorted({k for r in self.rows for k in r.params})
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(keys + ["validation_accuracy", "failed"])
            for r in self.rows:
                writer.writerow(
                    [r.params.get(k, "") for k in keys]
                    + [repr(r.validation_accuracy), int(r.failed)]
                )


def _metric_value(scores, val_labels, Y_val, metric):
    if metric == "accuracy":
        return accuracy(np.argmax(scores, axis=1), val_labels)
    return -float(np.mean((scores - Y_val) ** 2))


def _evaluate_combo(
    combo,
    dataset_train,
    dataset_val,
    template: FeatureMapSpec,
    cfg: GridSearchConfig,
    solver,
    cg_rtol,
    cg_maxiter,
    block_rows,
):
    """All (scale, alpha) points for one fixed (threshold, bias, gamma) choice."""
    threshold, bias_nu, gamma = combo
    Xtr = dataset_train.features
    Xval = dataset_val.features
    if threshold is not None:
        Xtr = binarize(Xtr, threshold).astype(np.float64)
        Xval = binarize(Xval, threshold).astype(np.float64)

    overrides = {"scale": 1.0}
    if bias_nu is not None:
        overrides["bias_nu"] = bias_nu
    if gamma is not None:
        overrides["gamma"] = gamma
    spec = replace(template, **overrides)

    Y_tr = encode_labels(dataset_train.labels, dataset_train.num_classes)
    Y_val = encode_labels(dataset_val.labels, dataset_val.num_classes)

    rows = []
    try:
        Phi_tr = build_features(spec, Xtr, cfg.projection_seed, block_rows=block_rows)
        Phi_val = build_features(spec, Xval, cfg.projection_seed, block_rows=block_rows)
        n, D = Phi_tr.shape
        primal = D <= n
        if primal:
            G = Phi_tr.T @ Phi_tr
            b = Phi_tr.T @ Y_tr
        else:
            G = Phi_tr @ Phi_tr.T
            K_val = Phi_val @ Phi_tr.T
        feature_fail = None
    except (ValueError, MemoryError) as err:
        feature_fail = err

    for scale in cfg.scale_grid:
        for alpha in cfg.alpha_grid:
            params = {"scale": scale, "alpha": alpha}
            if threshold is not None:
                params["threshold"] = threshold
            if bias_nu is not None:
                params["bias_nu"] = bias_nu
            if gamma is not None:
                params["gamma"] = gamma
            if feature_fail is not None:
                rows.append(GridPoint(params, 0.0, failed=True))
                continue
            s2 = scale * scale
            try:
                if primal:
                    W, _ = solve_regularized(s2 * G, alpha, scale * b, solver, cg_rtol, cg_maxiter)
                    scores = scale * (Phi_val @ W)
                else:
                    C, _ = solve_regularized(s2 * G, alpha, Y_tr, solver, cg_rtol, cg_maxiter)
                    scores = s2 * (K_val @ C)
                value = _metric_value(scores, dataset_val.labels, Y_val, cfg.metric)
                rows.append(GridPoint(params, value))
            except SolverError:
                rows.append(GridPoint(params, 0.0, failed=True))
    return rows


def grid_search(
    dataset: LabeledDataset,
    template: FeatureMapSpec,
    cfg: GridSearchConfig,
    solver: str = "cholesky",
    cg_rtol: float = 1e-6,
    cg_maxiter: int | None = None,
    workers: int = 1,
    block_rows: int = 1024,
) -> GridSearchResult:
    """Exhaustive search over the active grids, argmax by validation metric.

    Every grid point uses the same projection seed and the same split. The
    result table follows grid declaration order (threshold, bias, gamma,
    scale, alpha), ties go to the first point encountered, and a solver
    failure records the point with zero accuracy instead of aborting.
    """
    train_ds, val_ds = split(dataset, cfg.validation_fraction, cfg.split_seed)
    if len(np.unique(train_ds.labels)) < 2 or len(np.unique(val_ds.labels)) < 2:
        raise ValueError("both splits must contain at least two classes")

    thresholds = list(cfg.threshold_grid) if cfg.threshold_grid is not None else [None]
    if template.family == "rbf_fourier":
        gammas = list(cfg.gamma_grid) if cfg.gamma_grid is not None else gamma_grid_around(dataset.d)
        biases = [None]
    else:
        gammas = [None]
        biases = list(cfg.bias_grid) if cfg.bias_grid else [None]

    combos = [(t, b, g) for t in thresholds for b in biases for g in gammas]

    def run(combo):
        return _evaluate_combo(
            combo, train_ds, val_ds, template, cfg, solver, cg_rtol, cg_maxiter, block_rows
        )

    if workers > 1 and len(combos) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, combos))
    else:
        blocks = [run(c) for c in combos]

    rows = [row for block in blocks for row in block]
    best = max(range(len(rows)), key=lambda i: (rows[i].validation_accuracy, -i))
    return GridSearchResult(
        best_params=dict(rows[best].params),
        best_validation_accuracy=rows[best].validation_accuracy,
        rows=rows,
    )


def threshold_search(
    dataset: LabeledDataset,
    threshold_grid: list[float],
    template: FeatureMapSpec,
    alpha: float,
    split_seed: int,
    projection_seed: int,
    validation_fraction: float = 0.2,
    scale: float = 1.0,
    solver: str = "cholesky",
) -> tuple[float, GridSearchResult]:
    """Pick the binarization threshold maximizing downstream validation accuracy.

    The downstream pipeline (feature family, scale, regularizer) is held
    fixed; only the threshold varies. Returns the winning threshold and
    the full table.
    """
    if not threshold_grid:
        raise ValueError("threshold_grid must be non-empty")
    cfg = GridSearchConfig(
        split_seed=split_seed,
        projection_seed=projection_seed,
        scale_grid=[scale],
        alpha_grid=[alpha],
        threshold_grid=list(threshold_grid),
        bias_grid=[template.bias_nu] if template.bias_nu > 0 else [0.0],
        validation_fraction=validation_fraction,
    )
    result = grid_search(dataset, template, cfg, solver=solver)
    return float(result.best_params["threshold"]), result
