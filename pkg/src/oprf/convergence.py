"""Empirical convergence measurements for the optical feature estimator.

For even exponents the estimator phi(x)'phi(y) has an exact limit kernel,
so its relative error can be measured directly: over a set of input pairs
and replicate projections, :func:`error_curve` tracks the error as the
feature dimension grows and :func:`tail_probability` estimates exceedance
probabilities P{|estimate - k| >= t}. Higher exponents converge more
slowly; the theory predicts tails decaying like exp(-(D t)^(1/m)), which
:func:`tail_bound` lets you compare against (with an empirically fitted
constant, the bound being loose by design).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as _sstats

from .kernels import k2s
from .projection import optical_features, sample_projection

MIN_TAIL_REPLICATES = 100


def sample_unit_pairs(seed: int, n_pairs: int, d: int = 20) -> np.ndarray:
    """(n_pairs, 2, d) array of independent uniform unit vectors."""
    if n_pairs < 1 or d < 1:
        raise ValueError("n_pairs and d must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_pairs, 2, d))
    X /= np.linalg.norm(X, axis=2, keepdims=True)
    return X


def _check_even_exponent(m) -> int:
    if not np.isfinite(m) or m <= 0 or m != int(m) or int(m) % 2 != 0:
        raise ValueError(
            f"exponent m={m} has no closed-form reference; m must be a positive even integer"
        )
    return int(m) // 2


def _check_pairs(pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim != 3 or pairs.shape[1] != 2:
        raise ValueError(f"pairs must have shape (P, 2, d), got {pairs.shape}")
    return pairs


def _pair_references(pairs: np.ndarray, s: int) -> np.ndarray:
    refs = np.array([k2s(x, y, s) for x, y in pairs])
    if np.any(refs == 0.0):
        raise ValueError("pairs with a zero kernel value are not measurable in relative error")
    return refs


def _pair_estimates(pairs: np.ndarray, m: int, D: int, seed: int) -> np.ndarray:
    """phi(x)'phi(y) for every pair under one shared projection."""
    P, _, d = pairs.shape
    X = pairs.reshape(2 * P, d)
    proj = sample_projection(seed, d, D)
    phi = optical_features(proj, X, float(m), block_rows=2 * P)
    return np.einsum("ij,ij->i", phi[0::2], phi[1::2])


def _replicate_estimates(pairs, m, D, base_seed, replicates, workers):
    """Estimates for every replicate, shaped (replicates, n_pairs).

    Replicate r always uses seed base_seed + r, so the output does not
    depend on the worker count.
    """
    if workers > 1 and replicates > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(lambda r: _pair_estimates(pairs, m, D, base_seed + r), range(replicates))
            )
    else:
        rows = [_pair_estimates(pairs, m, D, base_seed + r) for r in range(replicates)]
    return np.vstack(rows)


@dataclass(frozen=True)
class ConvergenceReport:
    """Relative-error statistics of the optical estimator across dimensions.

    records holds one row per (D, pair, replicate) as a tuple
    (D, pair_id, replicate, estimate, reference, rel_error); per_dim_stats
    aggregates mean/median/max relative error for each D.
    """

    family: str
    exponent_m: int
    dims: list[int]
    n_pairs: int
    replicates: int
    base_seed: int
    pairs_seed: int | None
    per_dim_stats: dict[int, dict[str, float]]
    records: list[tuple] = field(repr=False)

    @property
    def replicate_seeds(self) -> list[int]:
        return [self.base_seed + r for r in range(self.replicates)]

    def rel_errors(self, D: int) -> np.ndarray:
        """Relative errors at one dimension, shaped (replicates, n_pairs)."""
        vals = [rec[5] for rec in self.records if rec[0] == D]
        return np.asarray(vals).reshape(self.replicates, self.n_pairs)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["family", "m", "D", "pair_id", "replicate", "estimate", "reference", "rel_error"]
            )
            for D, pair_id, rep, est, ref, rel in self.records:
                writer.writerow([self.family, self.exponent_m, D, pair_id, rep,
                                 repr(est), repr(ref), repr(rel)])

    def summary(self) -> dict:
        return {
            "type": "convergence_report",
            "family": self.family,
            "exponent_m": self.exponent_m,
            "dims": list(self.dims),
            "n_pairs": self.n_pairs,
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "pairs_seed": self.pairs_seed,
            "per_dim_stats": {str(D): st for D, st in self.per_dim_stats.items()},
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True))


def error_curve(
    exponent_m: float,
    dims,
    pairs,
    replicates: int,
    base_seed: int,
    pairs_seed: int | None = None,
    workers: int = 1,
) -> ConvergenceReport:
    """Relative error of the optical estimator at each dimension in ``dims``.

    Replicate r uses projection seed base_seed + r at every dimension, so
    reports are bit-reproducible and identical for any worker count. Only
    even exponents are accepted since the reference value is the
    closed-form kernel.
    """
    s = _check_even_exponent(exponent_m)
    pairs = _check_pairs(pairs)
    dims = [int(D) for D in dims]
    if not dims or any(D < 1 for D in dims):
        raise ValueError("dims must be positive integers")
    if any(b >= a for a, b in zip(dims[1:], dims)):
        raise ValueError(f"dims must be strictly increasing, got {dims}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")

    refs = _pair_references(pairs, s)
    records = []
    per_dim = {}
    for D in dims:
        ests = _replicate_estimates(pairs, 2 * s, D, base_seed, replicates, workers)
        errs = np.abs(ests - refs) / refs
        for r in range(replicates):
            for pid in range(pairs.shape[0]):
                records.append(
                    (D, pid, r, float(ests[r, pid]), float(refs[pid]), float(errs[r, pid]))
                )
        per_dim[D] = {
            "mean": float(errs.mean()),
            "median": float(np.median(errs)),
            "max": float(errs.max()),
        }
    return ConvergenceReport(
        family="optical",
        exponent_m=2 * s,
        dims=dims,
        n_pairs=pairs.shape[0],
        replicates=replicates,
        base_seed=base_seed,
        pairs_seed=pairs_seed,
        per_dim_stats=per_dim,
        records=records,
    )


@dataclass(frozen=True)
class TailEstimate:
    """Empirical exceedance frequency at one (t, D) cell."""

    t: float
    D: int
    probability: float
    half_width: float  # normal-approximation 95% binomial half-width
    trials: int


def tail_probability(
    exponent_m: float,
    D: int,
    t_values,
    pairs,
    replicates: int,
    base_seed: int,
    workers: int = 1,
) -> list[TailEstimate]:
    """Empirical P{|estimate - k| >= t} pooled over pairs and replicates.

    Needs at least 100 replicates; below that the frequencies are noise.
    """
    s = _check_even_exponent(exponent_m)
    pairs = _check_pairs(pairs)
    if replicates < MIN_TAIL_REPLICATES:
        raise ValueError(
            f"tail estimation needs >= {MIN_TAIL_REPLICATES} replicates, got {replicates}"
        )
    t_values = [float(t) for t in t_values]
    if any(t < 0 for t in t_values):
        raise ValueError("t values must be nonnegative")

    refs = _pair_references(pairs, s)
    ests = _replicate_estimates(pairs, 2 * s, int(D), base_seed, replicates, workers)
    deviations = np.abs(ests - refs)

    trials = deviations.size
    out = []
    for t in t_values:
        p = float(np.mean(deviations >= t))
        half = 1.96 * math.sqrt(p * (1.0 - p) / trials)
        out.append(TailEstimate(t=t, D=int(D), probability=p, half_width=half, trials=trials))
    return out


def tail_bound(D: int, t: float, m: float, constant: float) -> float:
    """Shape of the theoretical tail bound, D * exp(-c (D t)^(1/m))."""
    return float(D * math.exp(-constant * (D * t) ** (1.0 / m)))


def fit_tail_constant(estimates: list[TailEstimate], m: float) -> float:
    """Fit the bound constant on measured tails (typically at the smallest D).

    Uses the most conservative (smallest) constant over cells with a
    nonzero frequency, so the fitted bound envelopes the data it was fitted
    on. The value is empirical, not a theoretical constant, and the
    resulting envelope is only meaningful for t past the estimator's bulk
    spread: at small t the central-limit regime governs and extrapolating
    the tail shape underestimates the true frequencies.
    """
    consts = []
    for e in estimates:
        if 0.0 < e.probability and e.t > 0.0:
            consts.append(-math.log(e.probability / e.D) / (e.D * e.t) ** (1.0 / m))
    if not consts:
        raise ValueError("no usable (t, probability) cells to fit on")
    return min(consts)


def sign_test_pvalue(successes: int, trials: int) -> float:
    """One-sided sign test: P[Binomial(trials, 1/2) >= successes]."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials with trials >= 1")
    return float(_sstats.binom.sf(successes - 1, trials, 0.5))
