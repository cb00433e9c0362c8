"""Closed-form limit kernels and Gram matrix construction.

These kernels are the exact large-D limits of the random feature inner
products in :mod:`oprf.projection` and serve as oracles for them. The
optical map with even exponent m = 2s converges to the dot-product kernel

    k_2s(x, y) = ||x||^m ||y||^m * sum_{i=0}^{s} (s!)^2 C(s,i)^2 cos(theta)^(2i)

where theta is the angle between x and y. At s = 1 this is
||x||^2 ||y||^2 + <x, y>^2. The polynomial, RBF and linear kernels are the
usual closed forms used as baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .projection import FeatureMapSpec, append_bias, _as_matrix

# Coefficient magnitudes overflow float64 past this order.
_MAX_S = 64


def _check_vector_pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"vectors must have equal length, got {x.size} vs {y.size}")
    if x.size == 0:
        raise ValueError("vectors must be non-empty")
    return x, y


@lru_cache(maxsize=None)
def _squared_cosine_coefficients(s: int) -> tuple[float, ...]:
    """Coefficients (s!)^2 * C(s, i)^2 of the degree-2s kernel polynomial.

    Computed with exact integer arithmetic and converted to float64, so
    small orders (for example the value 24 at s = 2) are exact.
    """
    fact_sq = math.factorial(s) ** 2
    return tuple(float(fact_sq * math.comb(s, i) ** 2) for i in range(s + 1))


def _check_order(s) -> int:
    if not isinstance(s, (int, np.integer)) or isinstance(s, bool):
        raise ValueError(f"order s must be an integer, got {s!r}")
    s = int(s)
    if s < 1:
        raise ValueError(f"order s must be >= 1, got {s}")
    if s > _MAX_S:
        raise ValueError(f"order s={s} exceeds the supported maximum {_MAX_S}")
    return s


def k2(x, y) -> float:
    """Degree-2 optical limit kernel: ||x||^2 ||y||^2 + <x, y>^2."""
    x, y = _check_vector_pair(x, y)
    nx2 = float(x @ x)
    ny2 = float(y @ y)
    dot = float(x @ y)
    return nx2 * ny2 + dot * dot


def k2s(x, y, s: int) -> float:
    """Optical limit kernel for even exponent m = 2s.

    Reduces to :func:`k2` at s = 1 and to (2s)! * ||x||^(4s) at x = y.
    """
    s = _check_order(s)
    x, y = _check_vector_pair(x, y)
    nx2 = float(x @ x)
    ny2 = float(y @ y)
    norm_prod = nx2 * ny2
    if norm_prod == 0.0:
        return 0.0
    dot = float(x @ y)
    cos2 = dot * dot / norm_prod
    coefs = _squared_cosine_coefficients(s)
    # Horner in cos^2(theta), highest order first.
    acc = coefs[-1]
    for c in reversed(coefs[:-1]):
        acc = acc * cos2 + c
    return norm_prod**s * acc


def polynomial_kernel(x, y, nu: float, p: int) -> float:
    """Inhomogeneous polynomial kernel (nu + <x, y>)^p."""
    x, y = _check_vector_pair(x, y)
    if not np.isfinite(nu) or nu < 0:
        raise ValueError(f"nu must be nonnegative, got {nu}")
    if not isinstance(p, (int, np.integer)) or isinstance(p, bool) or p < 1:
        raise ValueError(f"degree p must be a positive integer, got {p!r}")
    return float(nu + x @ y) ** int(p)


def rbf_kernel(x, y, gamma: float) -> float:
    """Gaussian kernel exp(-gamma ||x - y||^2)."""
    x, y = _check_vector_pair(x, y)
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    diff = x - y
    return float(np.exp(-gamma * (diff @ diff)))


def linear_kernel(x, y) -> float:
    """Plain inner product <x, y>."""
    x, y = _check_vector_pair(x, y)
    return float(x @ y)


@dataclass(frozen=True)
class KernelSpec:
    """Identity of a closed-form kernel.

    kind is one of "optical_even" (order s, exponent m = 2s), "polynomial"
    (bias nu, degree p), "rbf" (width gamma) or "linear".
    """

    kind: str
    s: int | None = None
    nu: float = 0.0
    p: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.kind == "optical_even":
            _check_order(self.s)
        elif self.kind == "polynomial":
            if self.p is None or not isinstance(self.p, (int, np.integer)) or self.p < 1:
                raise ValueError(f"polynomial kernel requires integer degree p >= 1, got {self.p!r}")
            if not np.isfinite(self.nu) or self.nu < 0:
                raise ValueError(f"polynomial kernel requires nu >= 0, got {self.nu}")
        elif self.kind == "rbf":
            if self.gamma is None or not np.isfinite(self.gamma) or self.gamma <= 0:
                raise ValueError(f"rbf kernel requires gamma > 0, got {self.gamma}")
        elif self.kind != "linear":
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def optical_even(cls, s: int) -> "KernelSpec":
        return cls(kind="optical_even", s=s)

    @classmethod
    def polynomial(cls, nu: float, p: int) -> "KernelSpec":
        return cls(kind="polynomial", nu=nu, p=p)

    @classmethod
    def rbf(cls, gamma: float) -> "KernelSpec":
        return cls(kind="rbf", gamma=gamma)

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(kind="linear")

    def evaluate(self, x, y) -> float:
        if self.kind == "optical_even":
            return k2s(x, y, self.s)
        if self.kind == "polynomial":
            return polynomial_kernel(x, y, self.nu, self.p)
        if self.kind == "rbf":
            return rbf_kernel(x, y, self.gamma)
        return linear_kernel(x, y)


@dataclass(frozen=True)
class GramMatrix:
    """Dense kernel matrix together with the KernelSpec that produced it.

    Square self-Gram matrices are symmetrized on construction, so symmetry
    holds exactly; they are positive semidefinite up to round-off.
    """

    values: np.ndarray
    spec: KernelSpec

    @property
    def shape(self):
        return self.values.shape


def _optical_even_gram(X: np.ndarray, Y: np.ndarray, s: int) -> np.ndarray:
    nx2 = np.einsum("ij,ij->i", X, X)
    ny2 = np.einsum("ij,ij->i", Y, Y)
    G = X @ Y.T
    outer = np.outer(nx2, ny2)
    if s == 1:
        # norms outer product plus squared inner products; no division needed
        return outer + G * G
    coefs = _squared_cosine_coefficients(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos2 = np.where(outer > 0.0, (G * G) / outer, 0.0)
    acc = np.full_like(cos2, coefs[-1])
    for c in reversed(coefs[:-1]):
        acc = acc * cos2 + c
    return outer**s * acc


def gram(X, Y=None, spec: KernelSpec = KernelSpec.linear()) -> GramMatrix:
    """Pairwise kernel matrix K[i, j] = k(X[i], Y[j]).

    With Y omitted the square self-Gram of X is built and symmetrized.
    """
    X = _as_matrix(X, "X")
    square = Y is None
    Y = X if square else _as_matrix(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(
            f"X and Y must share the input dimension, got {X.shape[1]} vs {Y.shape[1]}"
        )

    if spec.kind == "optical_even":
        K = _optical_even_gram(X, Y, spec.s)
    elif spec.kind == "polynomial":
        K = (spec.nu + X @ Y.T) ** spec.p
    elif spec.kind == "rbf":
        nx2 = np.einsum("ij,ij->i", X, X)
        ny2 = np.einsum("ij,ij->i", Y, Y)
        sq = nx2[:, None] + ny2[None, :] - 2.0 * (X @ Y.T)
        np.clip(sq, 0.0, None, out=sq)
        K = np.exp(-spec.gamma * sq)
    else:
        K = X @ Y.T

    if square:
        K = 0.5 * (K + K.T)
    return GramMatrix(values=K, spec=spec)


def limit_kernel_spec(feature_spec: FeatureMapSpec) -> KernelSpec:
    """The exact kernel a feature family converges to as D grows.

    Only even optical exponents have a closed form; odd or fractional
    exponents are rejected.
    """
    if feature_spec.family == "optical":
        m = feature_spec.exponent_m
        s = m / 2.0
        if s < 1 or s != int(s):
            raise ValueError(
                f"no closed-form kernel for optical exponent m={m}; m must be a "
                "positive even integer"
            )
        return KernelSpec.optical_even(int(s))
    if feature_spec.family == "rbf_fourier":
        return KernelSpec.rbf(feature_spec.gamma)
    return KernelSpec.linear()


def limit_gram(feature_spec: FeatureMapSpec, X, Y=None) -> GramMatrix:
    """Exact-kernel Gram for a feature spec, honoring its bias append."""
    spec = limit_kernel_spec(feature_spec)
    if feature_spec.bias_nu > 0:
        X = append_bias(X, feature_spec.bias_nu)
        Y = None if Y is None else append_bias(Y, feature_spec.bias_nu)
    return gram(X, Y, spec)
