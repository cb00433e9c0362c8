"""Dataset ingestion, matrix persistence, and experiment manifests.

Large dense matrices travel in a small binary container: the 8-byte magic
"OPRFMAT1", one dtype byte (1 = float64, 2 = uint8), row and column counts
as little-endian unsigned 64-bit integers, then the row-major payload.
Round trips are bit-exact. CSV is supported for small inputs and outputs,
and experiment manifests are plain JSON documents with explicit seeds.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ridge import LabeledDataset

MAGIC = b"OPRFMAT1"
_DTYPE_CODES = {1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODES_BY_DTYPE = {np.dtype(np.float64): 1, np.dtype(np.uint8): 2}
_HEADER = struct.Struct("<8sBQQ")

# Refuse payloads past this size before any allocation happens.
MAX_CONTAINER_BYTES = 1 << 40

MANIFEST_SCHEMA_VERSION = 1


class ContainerFormatError(ValueError):
    """Malformed or oversized matrix container."""


class ManifestError(ValueError):
    """Invalid experiment manifest."""


class DownloadError(RuntimeError):
    """A dataset file could not be fetched."""


class ChecksumError(RuntimeError):
    """A fetched dataset file does not match its pinned checksum."""


def save_matrix(path, matrix) -> None:
    """Write a float64 or uint8 matrix to the binary container format."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ContainerFormatError(f"only 2-d matrices are supported, got shape {matrix.shape}")
    code = _CODES_BY_DTYPE.get(matrix.dtype.newbyteorder("="))
    if code is None:
        raise ContainerFormatError(f"unsupported dtype {matrix.dtype}; use float64 or uint8")
    rows, cols = matrix.shape
    payload = np.ascontiguousarray(matrix, dtype=_DTYPE_CODES[code])
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, code, rows, cols))
        fh.write(payload.tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    """Read a container written by :func:`save_matrix`, validating the header first."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ContainerFormatError(f"{path}: truncated header")
        magic, code, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ContainerFormatError(f"{path}: bad magic {magic!r}")
        dtype = _DTYPE_CODES.get(code)
        if dtype is None:
            raise ContainerFormatError(f"{path}: unknown dtype code {code}")
        nbytes = rows * cols * dtype.itemsize
        if rows == 0 or cols == 0 or nbytes > MAX_CONTAINER_BYTES:
            raise ContainerFormatError(
                f"{path}: declared shape {rows}x{cols} is empty or too large"
            )
        payload = fh.read(nbytes)
        if len(payload) != nbytes:
            raise ContainerFormatError(
                f"{path}: truncated payload, expected {nbytes} bytes got {len(payload)}"
            )
        if fh.read(1):
            raise ContainerFormatError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype=dtype).reshape(rows, cols).copy()


def load_csv(path, has_labels: bool = False):
    """Parse a rectangular numeric CSV.

    Returns a float64 matrix, or a :class:`LabeledDataset` when
    ``has_labels`` marks the final column as integer class ids. Parse
    problems report their 1-based row and column.
    """
    rows = []
    width = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ValueError(
                    f"{path}: ragged row {lineno}: expected {width} cells, got {len(cells)}"
                )
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: parse error at row {lineno} column {col}: {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: empty file")
    data = np.asarray(rows, dtype=np.float64)
    if not has_labels:
        return data
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column besides labels")
    raw_labels = data[:, -1]
    labels = raw_labels.astype(np.int64)
    if not np.array_equal(labels, raw_labels):
        raise ValueError(f"{path}: label column contains non-integer values")
    if labels.min() < 0:
        raise ValueError(f"{path}: labels must be nonnegative")
    return LabeledDataset(
        features=data[:, :-1], labels=labels, num_classes=int(labels.max()) + 1
    )


def save_labels(path, labels) -> None:
    """Persist integer labels as a single-column float64 container."""
    labels = np.asarray(labels, dtype=np.int64)
    save_matrix(path, labels.astype(np.float64).reshape(-1, 1))


def load_labels(path) -> np.ndarray:
    raw = load_matrix(path).ravel()
    labels = raw.astype(np.int64)
    if not np.array_equal(labels, raw):
        raise ContainerFormatError(f"{path}: label container holds non-integer values")
    return labels


# ---------------------------------------------------------------------------
# datasets


def synthetic_blobs(
    seed: int,
    n: int,
    d: int,
    num_classes: int,
    separation: float = 3.0,
) -> LabeledDataset:
    """Gaussian class clusters with positive-orthant means, fully seeded.

    Class centers are separation * Uniform(0.5, 1.5) per coordinate, so all
    clusters sit away from the origin and no two are antipodal (the optical
    map cannot tell x from -x).
    """
    if n < 1 or d < 1 or num_classes < 1:
        raise ValueError("n, d and num_classes must be positive")
    rng = np.random.default_rng(seed)
    centers = separation * rng.uniform(0.5, 1.5, size=(num_classes, d))
    labels = rng.integers(0, num_classes, size=n)
    features = centers[labels] + rng.standard_normal((n, d))
    return LabeledDataset(features=features, labels=labels, num_classes=num_classes)


FASHION_MNIST_MIRRORS = [
    "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
]

# (filename, md5) of the canonical distribution files.
FASHION_MNIST_RESOURCES = {
    "train": (
        ("train-images-idx3-ubyte.gz", "8d4fb7e6c68d591d4c3dfef9ec88bf0d"),
        ("train-labels-idx1-ubyte.gz", "25c81989df183df01b3e8a0aad5dffbe"),
    ),
    "test": (
        ("t10k-images-idx3-ubyte.gz", "bef4ecab320f06d8554ea6380940ec79"),
        ("t10k-labels-idx1-ubyte.gz", "bb300cfdad3c16e7a12a480ee83cd310"),
    ),
}

CACHE_ENV_VAR = "OPRF_CACHE_DIR"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "oprf"


def _md5(path: Path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _download(url: str, dest: Path, timeout: float = 30.0) -> None:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp, open(dest, "wb") as out:
            while True:
                chunk = resp.read(1 << 20)
                if not chunk:
                    break
                out.write(chunk)
    except (urllib.error.URLError, OSError) as err:
        raise DownloadError(f"failed to download {url}: {err}") from err


def _ensure_file(
    filename: str,
    md5: str,
    cache_dir: Path,
    mirrors,
    downloader,
) -> Path:
    dest = cache_dir / filename
    if dest.exists():
        actual = _md5(dest)
        if actual == md5:
            return dest
        dest.unlink()
    cache_dir.mkdir(parents=True, exist_ok=True)
    last_err = None
    for mirror in mirrors:
        try:
            downloader(mirror + filename, dest)
            break
        except DownloadError as err:
            last_err = err
    else:
        raise last_err or DownloadError(f"no mirror provided for {filename}")
    actual = _md5(dest)
    if actual != md5:
        dest.unlink()
        raise ChecksumError(f"{filename}: expected md5 {md5}, got {actual}")
    return dest


def _read_idx_images(path: Path) -> np.ndarray:
    with gzip.open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise ValueError(f"{path}: truncated image file")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != 2051:
        raise ValueError(f"{path}: bad image magic {magic}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    if pixels.size != n * rows * cols:
        raise ValueError(f"{path}: image payload size mismatch")
    return pixels.reshape(n, rows * cols)


def _read_idx_labels(path: Path) -> np.ndarray:
    with gzip.open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise ValueError(f"{path}: truncated label file")
    magic, n = struct.unpack(">II", data[:8])
    if magic != 2049:
        raise ValueError(f"{path}: bad label magic {magic}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if labels.size != n:
        raise ValueError(f"{path}: label payload size mismatch")
    return labels.astype(np.int64)


def fetch_fashion_mnist_subset(
    cache_dir=None,
    split: str = "train",
    n: int | None = None,
    mirrors=None,
    resources=None,
    downloader=_download,
) -> LabeledDataset:
    """First ``n`` items of a Fashion MNIST split, pixel values scaled to [0, 1].

    Files are cached under ``cache_dir`` (the OPRF_CACHE_DIR environment
    variable or ~/.cache/oprf by default) and verified against pinned md5
    checksums; a failed download and a checksum mismatch raise distinct
    errors. Cached calls touch no network.
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    mirrors = list(mirrors) if mirrors is not None else list(FASHION_MNIST_MIRRORS)
    resources = resources if resources is not None else FASHION_MNIST_RESOURCES
    (img_name, img_md5), (lab_name, lab_md5) = resources[split]
    img_path = _ensure_file(img_name, img_md5, cache_dir, mirrors, downloader)
    lab_path = _ensure_file(lab_name, lab_md5, cache_dir, mirrors, downloader)
    images = _read_idx_images(img_path)
    labels = _read_idx_labels(lab_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError("image/label count mismatch")
    if n is not None:
        if not 1 <= n <= images.shape[0]:
            raise ValueError(f"subset size {n} out of range [1, {images.shape[0]}]")
        images = images[:n]
        labels = labels[:n]
    return LabeledDataset(
        features=images.astype(np.float64) / 255.0,
        labels=labels,
        num_classes=10,
    )


def fetch_dataset(name: str, cache_dir=None, **params) -> LabeledDataset:
    """Named dataset dispatch.

    "synthetic_blobs" takes seed, n, d, num_classes and optional separation
    and is generated locally; "fashion_mnist_subset" takes split and n and
    goes through the download cache.
    """
    if name == "synthetic_blobs":
        return synthetic_blobs(**params)
    if name == "fashion_mnist_subset":
        return fetch_fashion_mnist_subset(cache_dir=cache_dir, **params)
    raise ValueError(f"unknown dataset {name!r}")


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ExperimentManifest:
    """A single declarative run description, parsed from JSON.

    Seeds are explicit: commands refuse to run when a seed they need is
    absent. Relative paths inside the manifest resolve against the manifest
    file's directory.
    """

    seeds: dict
    output_dir: str
    sections: dict
    path: Path | None = None

    def seed(self, name: str) -> int:
        if name not in self.seeds:
            raise ManifestError(
                f"manifest is missing required seed {name!r}; runs without explicit "
                "seeds are rejected"
            )
        return int(self.seeds[name])

    def section(self, name: str) -> dict:
        if name not in self.sections:
            raise ManifestError(f"manifest is missing required section {name!r}")
        value = self.sections[name]
        if not isinstance(value, dict):
            raise ManifestError(f"manifest section {name!r} must be an object")
        return value

    def optional_section(self, name: str) -> dict | None:
        return self.sections.get(name)

    def resolve_path(self, relative) -> Path:
        base = self.path.parent if self.path is not None else Path.cwd()
        p = Path(relative)
        return p if p.is_absolute() else base / p

    def resolve_existing(self, relative, what: str) -> Path:
        p = self.resolve_path(relative)
        if not p.exists():
            raise ManifestError(f"{what} path {p} does not exist")
        return p

    def echo(self) -> dict:
        payload = dict(self.sections)
        payload["schema_version"] = MANIFEST_SCHEMA_VERSION
        payload["seeds"] = dict(self.seeds)
        payload["output_dir"] = self.output_dir
        return payload


def parse_manifest(payload: dict, path: Path | None = None) -> ExperimentManifest:
    if not isinstance(payload, dict):
        raise ManifestError("manifest must be a JSON object")
    version = payload.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(
            f"unsupported schema_version {version!r}; expected {MANIFEST_SCHEMA_VERSION}"
        )
    seeds = payload.get("seeds")
    if not isinstance(seeds, dict) or not seeds:
        raise ManifestError("manifest must declare a non-empty 'seeds' object")
    for key, value in seeds.items():
        if not isinstance(value, int) or isinstance(value, bool):
            raise ManifestError(f"seed {key!r} must be an integer, got {value!r}")
    output_dir = payload.get("output_dir")
    if not isinstance(output_dir, str) or not output_dir:
        raise ManifestError("manifest must declare a non-empty 'output_dir' string")
    sections = {
        k: v for k, v in payload.items() if k not in ("schema_version", "seeds", "output_dir")
    }
    return ExperimentManifest(
        seeds=dict(seeds), output_dir=output_dir, sections=sections, path=path
    )


def load_manifest(path) -> ExperimentManifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as err:
        raise ManifestError(f"cannot read manifest {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ManifestError(f"manifest {path} is not valid JSON: {err}") from err
    return parse_manifest(payload, path=path)
