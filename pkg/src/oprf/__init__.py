"""Optical random features, their exact limit kernels, and a desk-scale
kernel ridge regression pipeline.

The core object is the simulated optical feature map phi(x) = |Ux|^m / sqrt(D)
with a fixed complex Gaussian matrix U. For even exponents its inner products
converge to a closed-form dot-product kernel, so the estimators here come with
exact oracles: :mod:`oprf.projection` builds the features,
:mod:`oprf.kernels` the limits, :mod:`oprf.ridge` fits ridge regression on
either, :mod:`oprf.model_selection` grid-searches hyperparameters,
:mod:`oprf.convergence` measures estimator error and tail decay, and
:mod:`oprf.data_io` plus :mod:`oprf.cli` handle persistence and manifest runs.
"""

__version__ = "0.1.0"

from .projection import (
    BinarizerConfig,
    ComplexProjection,
    FeatureMapSpec,
    append_bias,
    binarize,
    build_features,
    is_binary,
    optical_features,
    rbf_fourier_features,
    sample_projection,
)
from .kernels import (
    GramMatrix,
    KernelSpec,
    gram,
    k2,
    k2s,
    limit_gram,
    limit_kernel_spec,
    linear_kernel,
    polynomial_kernel,
    rbf_kernel,
)
from .ridge import (
    LabeledDataset,
    RidgeModel,
    SolverError,
    SolverStats,
    classify,
    encode_labels,
    fit_dual,
    fit_features,
    fit_primal,
    predict,
    predict_features,
)
from .model_selection import (
    GridSearchConfig,
    GridSearchResult,
    accuracy,
    gamma_grid_around,
    gamma_heuristic,
    grid_search,
    split,
    split_indices,
    threshold_search,
)
from .convergence import (
    ConvergenceReport,
    TailEstimate,
    error_curve,
    fit_tail_constant,
    sample_unit_pairs,
    sign_test_pvalue,
    tail_bound,
    tail_probability,
)
from .data_io import (
    ChecksumError,
    ContainerFormatError,
    DownloadError,
    ExperimentManifest,
    ManifestError,
    fetch_dataset,
    fetch_fashion_mnist_subset,
    load_csv,
    load_manifest,
    load_matrix,
    save_matrix,
    synthetic_blobs,
)

__all__ = [name for name in dir() if not name.startswith("_")]
