"""Complex Gaussian random projections and random feature maps.

The optical feature map sends an input x through a fixed complex Gaussian
matrix U = A + iB and measures squared magnitudes channel by channel:

    phi(x)_j = ((A x)_j**2 + (B x)_j**2)**(m/2) / sqrt(D)

with exponent m >= 0. The default m = 2 is the plain squared-magnitude
map; other nonnegative exponents are applied numerically. Entries of U
are complex standard normal: real and imaginary parts are independent
N(0, 1/2), so each complex entry has unit variance.

Random Fourier features and a linear map are provided as baselines,
together with the two input transforms used by the pipeline: threshold
binarization (hardware accepts binary frames only) and bias appending.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_BLOCK_ROWS = 1024

# Refuse to allocate projection matrices past this size (bytes, both parts).
_MAX_PROJECTION_BYTES = 1 << 41

_FAMILIES = ("optical", "rbf_fourier", "linear")


def _check_seed(seed) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def _check_dim(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
    return value


def _as_matrix(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite entries")
    return X


@dataclass(frozen=True)
class ComplexProjection:
    """Fixed complex Gaussian random matrix U = A + iB, stored as real parts.

    Both parts are D x d with i.i.d. N(0, 1/2) entries so that each complex
    entry has unit variance. Regenerating with the same (seed, d, D) yields
    bit-identical matrices. Instances are immutable and safe to share
    across workers.
    """

    real_part: np.ndarray
    imag_part: np.ndarray
    seed: int

    def __post_init__(self):
        if self.real_part.shape != self.imag_part.shape:
            raise ValueError(
                f"real/imaginary parts must have equal shape, got "
                f"{self.real_part.shape} vs {self.imag_part.shape}"
            )
        if self.real_part.ndim != 2:
            raise ValueError("projection parts must be 2-d arrays")

    @property
    def D(self) -> int:
        return self.real_part.shape[0]

    @property
    def d(self) -> int:
        return self.real_part.shape[1]


def sample_projection(seed: int, d: int, D: int) -> ComplexProjection:
    """Draw the fixed complex Gaussian projection for (seed, d, D).

    Deterministic: the same arguments always reproduce the same matrix.
    Dimensions must be positive and small enough to allocate.
    """
    seed = _check_seed(seed)
    d = _check_dim(d, "d")
    D = _check_dim(D, "D")
    nbytes = 2 * D * d * 8
    if nbytes > _MAX_PROJECTION_BYTES:
        raise ValueError(
            f"projection of shape {D}x{d} needs {nbytes} bytes, over the "
            f"{_MAX_PROJECTION_BYTES} byte cap"
        )
    rng = np.random.default_rng(seed)
    scale = math.sqrt(0.5)
    real = rng.standard_normal((D, d)) * scale
    imag = rng.standard_normal((D, d)) * scale
    real.flags.writeable = False
    imag.flags.writeable = False
    return ComplexProjection(real_part=real, imag_part=imag, seed=seed)


def optical_features(
    P: ComplexProjection,
    X,
    m: float = 2.0,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> np.ndarray:
    """Apply the optical feature map to the rows of X.

    Returns the n x D matrix with entries
    ((A x_i)_j**2 + (B x_i)_j**2)**(m/2) / sqrt(D). Entries are nonnegative
    and finite for finite inputs. Rows are processed in blocks of
    ``block_rows`` to bound peak memory; the result does not depend on the
    block size beyond floating point round-off of the underlying matrix
    products.
    """
    X = _as_matrix(X)
    if X.shape[1] != P.d:
        raise ValueError(f"X has {X.shape[1]} columns but projection expects {P.d}")
    if not np.isfinite(m) or m < 0:
        raise ValueError(f"exponent m must be a nonnegative real, got {m}")
    block_rows = _check_dim(block_rows, "block_rows")

    n = X.shape[0]
    out = np.empty((n, P.D), dtype=np.float64)
    At = P.real_part.T
    Bt = P.imag_part.T
    inv_sqrt_d = 1.0 / math.sqrt(P.D)
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        Xb = X[start:stop]
        G = Xb @ At
        H = Xb @ Bt
        Z = G * G + H * H
        if m == 2.0:
            F = Z
        elif m == 0.0:
            F = np.ones_like(Z)
        else:
            F = np.power(Z, 0.5 * m)
        out[start:stop] = F * inv_sqrt_d
    return out


def rbf_fourier_features(
    seed: int,
    X,
    gamma: float,
    D: int,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> np.ndarray:
    """Random Fourier features whose inner products estimate exp(-gamma ||x-y||^2).

    Features are sqrt(2/D) * cos(w_j . x + b_j) with w_j drawn N(0, 2*gamma*I)
    and b_j uniform on [0, 2*pi). The estimator is unbiased and deterministic
    in the seed.
    """
    seed = _check_seed(seed)
    X = _as_matrix(X)
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    D = _check_dim(D, "D")
    block_rows = _check_dim(block_rows, "block_rows")

    d = X.shape[1]
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((d, D)) * math.sqrt(2.0 * gamma)
    b = rng.uniform(0.0, 2.0 * np.pi, D)
    amp = math.sqrt(2.0 / D)

    n = X.shape[0]
    out = np.empty((n, D), dtype=np.float64)
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        out[start:stop] = amp * np.cos(X[start:stop] @ W + b)
    return out


@dataclass(frozen=True)
class BinarizerConfig:
    """Threshold binarizer: an entry maps to 1 iff it strictly exceeds the threshold."""

    threshold: float = 0.5

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold}")


def binarize(X, config: BinarizerConfig | float) -> np.ndarray:
    """Apply the strict threshold binarizer, returning a {0, 1} uint8 matrix."""
    if not isinstance(config, BinarizerConfig):
        config = BinarizerConfig(threshold=float(config))
    X = np.asarray(X)
    return (X > config.threshold).astype(np.uint8)


def append_bias(X, nu: float) -> np.ndarray:
    """Prepend the constant column sqrt(nu), so that x'.y' = nu + x.y exactly."""
    X = _as_matrix(X)
    if not np.isfinite(nu) or nu < 0:
        raise ValueError(f"bias nu must be nonnegative, got {nu}")
    col = np.full((X.shape[0], 1), math.sqrt(nu))
    return np.concatenate([col, X], axis=1)


def is_binary(X) -> bool:
    """True if every entry of X is 0 or 1 (any numeric dtype)."""
    X = np.asarray(X)
    return bool(np.isin(X, (0, 1)).all())


@dataclass(frozen=True)
class FeatureMapSpec:
    """Which random feature family to build, and with what knobs.

    family       one of "optical", "rbf_fourier", "linear"
    exponent_m   magnitude exponent of the optical map (m = 2 is the default
                 hardware nonlinearity; any m >= 0 is simulated)
    gamma        RBF width, required for rbf_fourier
    D            output dimension (ignored by the linear map)
    scale        multiplier applied to the finished features
    bias_nu      when positive, sqrt(bias_nu) is prepended to every input row
                 before projecting, shifting all inner products by bias_nu
    """

    family: str
    D: int | None = None
    exponent_m: float = 2.0
    gamma: float | None = None
    scale: float = 1.0
    bias_nu: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}, got {self.family!r}")
        if self.family != "linear":
            if self.D is None:
                raise ValueError(f"family {self.family!r} requires a feature dimension D")
            _check_dim(self.D, "D")
        if self.family == "optical":
            if not np.isfinite(self.exponent_m) or self.exponent_m < 0:
                raise ValueError(f"exponent_m must be nonnegative, got {self.exponent_m}")
        if self.family == "rbf_fourier":
            if self.gamma is None or not np.isfinite(self.gamma) or self.gamma <= 0:
                raise ValueError(f"rbf_fourier requires gamma > 0, got {self.gamma}")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not np.isfinite(self.bias_nu) or self.bias_nu < 0:
            raise ValueError(f"bias_nu must be nonnegative, got {self.bias_nu}")


def build_features(
    spec: FeatureMapSpec,
    X,
    seed: int,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> np.ndarray:
    """Build the feature matrix for ``spec``; pure function of (seed, X, spec)."""
    X = _as_matrix(X)
    if spec.bias_nu > 0:
        X = append_bias(X, spec.bias_nu)
    if spec.family == "optical":
        P = sample_projection(seed, X.shape[1], spec.D)
        F = optical_features(P, X, spec.exponent_m, block_rows=block_rows)
    elif spec.family == "rbf_fourier":
        F = rbf_fourier_features(seed, X, spec.gamma, spec.D, block_rows=block_rows)
    else:
        F = X.copy()
    if spec.scale != 1.0:
        F *= spec.scale
    return F


def warn_if_not_binary(X, family: str) -> bool:
    """Warn when the optical family is fed non-binary inputs.

    The physical device only accepts binary frames; the simulation accepts
    anything, so this is advisory. Returns True if a warning was issued.
    """
    if family == "optical" and not is_binary(X):
        warnings.warn(
            "optical feature family given non-binary inputs; the hardware "
            "this simulates accepts binary frames only (simulation proceeds)",
            stacklevel=2,
        )
        return True
    return False
