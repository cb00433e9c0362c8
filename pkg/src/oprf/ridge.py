"""Ridge regression in primal and dual form, with direct and iterative solvers.

Multiclass classification is reduced to multi-output regression on +/-1
label encodings. The primal form solves (Phi' Phi + alpha I) W = Phi' Y,
the dual form (K + alpha I) C = Y; both accept a Cholesky factorization or
conjugate gradients. When the feature dimension exceeds the sample count
the two forms are algebraically equivalent (K = Phi Phi'), which
``fit_features`` exploits to always solve the smaller system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import GramMatrix
from .projection import _as_matrix

CHOLESKY_RESIDUAL_TOL = 1e-8
CG_DEFAULT_RTOL = 1e-6
MAX_JITTER_RETRIES = 3


class SolverError(RuntimeError):
    """A linear solve did not meet its residual contract."""


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with integer class labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-d array, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError("labels must be 1-d and aligned with feature rows")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(self.features[indices], self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class SolverStats:
    """How a model's linear system was actually solved."""

    method: str
    iterations: int
    residual: float
    effective_alpha: float
    jittered: bool


@dataclass(frozen=True)
class RidgeModel:
    mode: str  # "primal" or "dual"
    alpha: float
    solver: str
    stats: SolverStats
    weights: np.ndarray | None = None  # D x C, primal only
    dual_coef: np.ndarray | None = None  # n x C, dual only
    train_features: np.ndarray | None = None  # retained for dual prediction on features


def encode_labels(labels, num_classes: int) -> np.ndarray:
    """Per-class +/-1 targets: entry (i, c) is +1 iff labels[i] == c, else -1."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-d")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    Y = np.full((labels.shape[0], num_classes), -1.0)
    Y[np.arange(labels.shape[0]), labels] = 1.0
    return Y


def solve_regularized(
    G: np.ndarray,
    alpha: float,
    B: np.ndarray,
    solver: str = "cholesky",
    cg_rtol: float = CG_DEFAULT_RTOL,
    cg_maxiter: int | None = None,
) -> tuple[np.ndarray, SolverStats]:
    """Solve (G + alpha I) X = B for symmetric positive semidefinite G.

    The Cholesky path verifies the relative residual afterwards and, if the
    factorization fails or the check misses, retries with alpha scaled up
    tenfold (at most three retries); such runs are flagged as jittered. The
    conjugate gradient path iterates until every column's relative residual
    drops below ``cg_rtol`` and raises with the final residual otherwise.
    """
    if solver == "cholesky":
        return _solve_cholesky(G, alpha, B)
    if solver == "conjugate_gradient":
        return _solve_cg(G, alpha, B, rtol=cg_rtol, maxiter=cg_maxiter)
    raise ValueError(f"unknown solver {solver!r}")


def _solve_cholesky(G, alpha, B):
    bnorm = np.linalg.norm(B)
    if bnorm == 0.0:
        stats = SolverStats("cholesky", 0, 0.0, alpha, False)
        return np.zeros_like(B), stats
    eff_alpha = alpha
    last_residual = np.inf
    for attempt in range(MAX_JITTER_RETRIES + 1):
        A = G + eff_alpha * np.eye(G.shape[0])
        try:
            cf = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
            X = scipy.linalg.cho_solve(cf, B, check_finite=False)
        except np.linalg.LinAlgError:
            eff_alpha *= 10.0
            continue
        except scipy.linalg.LinAlgError:  # pragma: no cover - alias on some scipy versions
            eff_alpha *= 10.0
            continue
        last_residual = np.linalg.norm(A @ X - B) / bnorm
        if last_residual <= CHOLESKY_RESIDUAL_TOL:
            stats = SolverStats("cholesky", 0, float(last_residual), eff_alpha, attempt > 0)
            return X, stats
        eff_alpha *= 10.0
    raise SolverError(
        f"cholesky failed to meet residual {CHOLESKY_RESIDUAL_TOL:g} even after "
        f"{MAX_JITTER_RETRIES} jitter retries (final relative residual {last_residual:.3e})"
    )


def _solve_cg(G, alpha, B, rtol=CG_DEFAULT_RTOL, maxiter=None):
    n = G.shape[0]
    if maxiter is None:
        maxiter = 10 * max(n, B.shape[0])
    X = np.zeros_like(B)
    R = B.copy()
    P = R.copy()
    bnorm = np.linalg.norm(B, axis=0)
    active = bnorm > 0.0
    rs = np.einsum("ij,ij->j", R, R)
    iterations = 0
    for iterations in range(1, maxiter + 1):
        resid = np.sqrt(rs[active])
        if np.all(resid <= rtol * bnorm[active]):
            iterations -= 1
            break
        AP = G @ P + alpha * P
        denom = np.einsum("ij,ij->j", P, AP)
        step = np.where(denom > 0.0, rs / np.where(denom > 0.0, denom, 1.0), 0.0)
        X += step * P
        R -= step * AP
        rs_new = np.einsum("ij,ij->j", R, R)
        beta = np.where(rs > 0.0, rs_new / np.where(rs > 0.0, rs, 1.0), 0.0)
        P = R + beta * P
        rs = rs_new
    final = float(np.max(np.sqrt(rs[active]) / bnorm[active])) if active.any() else 0.0
    if final > rtol:
        raise SolverError(
            f"conjugate gradients did not converge in {maxiter} iterations "
            f"(relative residual {final:.3e} > {rtol:g})"
        )
    return X, SolverStats("conjugate_gradient", iterations, final, alpha, False)


def _check_fit_inputs(Y, alpha):
    Y = _as_matrix(Y, "Y")
    if not np.isfinite(alpha) or alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return Y


def fit_primal(
    Phi,
    Y,
    alpha: float,
    solver: str = "cholesky",
    cg_rtol: float = CG_DEFAULT_RTOL,
    cg_maxiter: int | None = None,
) -> RidgeModel:
    """Fit ridge weights W solving (Phi' Phi + alpha I) W = Phi' Y."""
    Phi = _as_matrix(Phi, "Phi")
    Y = _check_fit_inputs(Y, alpha)
    if Phi.shape[0] != Y.shape[0]:
        raise ValueError(f"Phi and Y row counts differ: {Phi.shape[0]} vs {Y.shape[0]}")
    G = Phi.T @ Phi
    b = Phi.T @ Y
    if cg_maxiter is None:
        cg_maxiter = 10 * max(Phi.shape)
    W, stats = solve_regularized(G, alpha, b, solver, cg_rtol, cg_maxiter)
    return RidgeModel(mode="primal", alpha=alpha, solver=solver, stats=stats, weights=W)


def fit_dual(
    K,
    Y,
    alpha: float,
    solver: str = "cholesky",
    cg_rtol: float = CG_DEFAULT_RTOL,
    cg_maxiter: int | None = None,
    train_features: np.ndarray | None = None,
) -> RidgeModel:
    """Fit dual coefficients C solving (K + alpha I) C = Y.

    K may be a GramMatrix or a plain symmetric array. Asymmetric inputs are
    rejected; tiny round-off asymmetry is folded away.
    """
    if isinstance(K, GramMatrix):
        K = K.values
    K = _as_matrix(K, "K")
    Y = _check_fit_inputs(Y, alpha)
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"K must be square, got {K.shape}")
    if K.shape[0] != Y.shape[0]:
        raise ValueError(f"K and Y row counts differ: {K.shape[0]} vs {Y.shape[0]}")
    scale = np.abs(K).max()
    if scale > 0 and np.abs(K - K.T).max() > 1e-8 * scale:
        raise ValueError("K must be symmetric")
    K = 0.5 * (K + K.T)
    C, stats = solve_regularized(K, alpha, Y, solver, cg_rtol, cg_maxiter)
    return RidgeModel(
        mode="dual", alpha=alpha, solver=solver, stats=stats,
        dual_coef=C, train_features=train_features,
    )


def fit_features(
    Phi,
    Y,
    alpha: float,
    solver: str = "cholesky",
    mode: str = "auto",
    cg_rtol: float = CG_DEFAULT_RTOL,
    cg_maxiter: int | None = None,
) -> RidgeModel:
    """Fit on explicit features, choosing the cheaper of the two forms.

    mode "auto" picks primal when D <= n and otherwise the dual on the
    feature Gram Phi Phi', retaining the training features for prediction.
    Predictions agree between the two up to solver tolerance.
    """
    Phi = _as_matrix(Phi, "Phi")
    n, D = Phi.shape
    if mode == "auto":
        mode = "primal" if D <= n else "dual"
    if mode == "primal":
        return fit_primal(Phi, Y, alpha, solver, cg_rtol, cg_maxiter)
    if mode == "dual":
        K = Phi @ Phi.T
        return fit_dual(K, Y, alpha, solver, cg_rtol, cg_maxiter, train_features=Phi)
    raise ValueError(f"unknown mode {mode!r}")


def predict(model: RidgeModel, M) -> np.ndarray:
    """Score matrix for new data.

    For a primal model M is a feature matrix (n_test x D); for a dual model
    M is the cross-kernel matrix against the training points (n_test x n).
    """
    M = _as_matrix(M, "M")
    if model.mode == "primal":
        if M.shape[1] != model.weights.shape[0]:
            raise ValueError(
                f"feature dimension {M.shape[1]} does not match weights {model.weights.shape[0]}"
            )
        return M @ model.weights
    if M.shape[1] != model.dual_coef.shape[0]:
        raise ValueError(
            f"cross-kernel width {M.shape[1]} does not match {model.dual_coef.shape[0]} training points"
        )
    return M @ model.dual_coef


def predict_features(model: RidgeModel, Phi_test) -> np.ndarray:
    """Scores from raw test features, for models fitted with :func:`fit_features`."""
    Phi_test = _as_matrix(Phi_test, "Phi_test")
    if model.mode == "primal":
        return predict(model, Phi_test)
    if model.train_features is None:
        raise ValueError("dual model lacks retained training features")
    return predict(model, Phi_test @ model.train_features.T)


def classify(scores) -> np.ndarray:
    """Per-row argmax with ties resolved to the lowest class index."""
    scores = _as_matrix(scores, "scores")
    return np.argmax(scores, axis=1).astype(np.int64)
