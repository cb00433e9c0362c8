"""Manifest-driven command line for the feature/kernel/ridge pipeline.

Every subcommand takes a JSON manifest describing one reproducible run:
explicit seeds, dataset, feature map, solver settings and an output
directory. Reruns of the same manifest produce byte-identical matrix
containers and identical reports up to the timing fields. Commands exit 0
only when every stage succeeds; failures print the stage name and the
underlying error verbatim.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .convergence import error_curve, sample_unit_pairs, tail_probability
from .data_io import (
    ChecksumError,
    ContainerFormatError,
    DownloadError,
    ExperimentManifest,
    ManifestError,
    fetch_fashion_mnist_subset,
    load_csv,
    load_manifest,
    load_labels,
    load_matrix,
    save_labels,
    save_matrix,
    synthetic_blobs,
)
from .kernels import KernelSpec, gram, limit_gram
from .model_selection import (
    GridSearchConfig,
    GridSearchResult,
    accuracy,
    grid_search,
    split,
)
from .projection import (
    BinarizerConfig,
    FeatureMapSpec,
    binarize,
    build_features,
    is_binary,
    warn_if_not_binary,
)
from .ridge import (
    LabeledDataset,
    SolverError,
    classify,
    encode_labels,
    fit_dual,
    fit_features,
    predict,
    predict_features,
)


class StageError(RuntimeError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(str(err))
        self.stage = stage
        self.err = err


@contextmanager
def _stage(timings: dict, name: str):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as err:
        raise StageError(name, err) from err
    finally:
        timings[name] = time.perf_counter() - start


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _merge_flag(section: dict, key: str, flag_value, flag_name: str) -> None:
    """Flags mirror manifest fields; the manifest wins on conflict."""
    if flag_value is None:
        return
    if key in section and section[key] != flag_value:
        _warn(
            f"flag {flag_name}={flag_value!r} conflicts with manifest value "
            f"{section[key]!r}; manifest wins"
        )
        return
    section[key] = flag_value


def _manifest_from_args(args) -> ExperimentManifest:
    manifest = load_manifest(args.manifest)
    if getattr(args, "output_dir", None):
        if str(manifest.output_dir) != args.output_dir:
            _warn(
                f"flag --output-dir={args.output_dir!r} conflicts with manifest value "
                f"{manifest.output_dir!r}; manifest wins"
            )
    return manifest


def _output_dir(manifest: ExperimentManifest) -> Path:
    out = manifest.resolve_path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _feature_spec(section: dict) -> FeatureMapSpec:
    known = {"family", "D", "exponent_m", "gamma", "scale", "bias_nu"}
    section = {k: v for k, v in section.items() if k != "require_binary"}
    unknown = set(section) - known
    if unknown:
        raise ManifestError(f"unknown feature fields {sorted(unknown)}")
    try:
        return FeatureMapSpec(
            family=section.get("family", "optical"),
            D=section.get("D"),
            exponent_m=float(section.get("exponent_m", 2.0)),
            gamma=section.get("gamma"),
            scale=float(section.get("scale", 1.0)),
            bias_nu=float(section.get("bias_nu", 0.0)),
        )
    except (TypeError, ValueError) as err:
        raise ManifestError(f"invalid features section: {err}") from err


def _kernel_spec(section: dict) -> KernelSpec:
    kind = section.get("kind")
    try:
        if kind == "optical_even":
            return KernelSpec.optical_even(int(section["s"]))
        if kind == "polynomial":
            return KernelSpec.polynomial(float(section.get("nu", 0.0)), int(section["p"]))
        if kind == "rbf":
            return KernelSpec.rbf(float(section["gamma"]))
        if kind == "linear":
            return KernelSpec.linear()
    except KeyError as err:
        raise ManifestError(f"kernel section missing field {err}") from err
    except (TypeError, ValueError) as err:
        raise ManifestError(f"invalid kernel section: {err}") from err
    raise ManifestError(f"unknown kernel kind {kind!r}")


def _load_input_matrix(manifest: ExperimentManifest, section: dict) -> np.ndarray:
    kind = section.get("kind")
    if kind == "csv":
        path = manifest.resolve_existing(section["path"], "dataset")
        data = load_csv(path, has_labels=bool(section.get("has_labels", False)))
        return data.features if isinstance(data, LabeledDataset) else data
    if kind == "container":
        path = manifest.resolve_existing(section["path"], "dataset")
        return load_matrix(path).astype(np.float64)
    if kind == "synthetic_blobs":
        ds = _synthetic_from(manifest, section)
        return ds.features
    raise ManifestError(f"unsupported dataset kind {kind!r} for a matrix input")


def _synthetic_from(manifest: ExperimentManifest, section: dict) -> LabeledDataset:
    return synthetic_blobs(
        seed=manifest.seed("data"),
        n=int(section.get("n", 1000)),
        d=int(section.get("d", 20)),
        num_classes=int(section.get("num_classes", 2)),
        separation=float(section.get("separation", 3.0)),
    )


def _load_labeled(manifest: ExperimentManifest, section: dict) -> LabeledDataset:
    kind = section.get("kind")
    if kind == "synthetic_blobs":
        return _synthetic_from(manifest, section)
    if kind == "csv":
        path = manifest.resolve_existing(section["path"], "dataset")
        data = load_csv(path, has_labels=True)
        return data
    if kind == "container":
        feats = load_matrix(manifest.resolve_existing(section["features"], "features"))
        labels = load_labels(manifest.resolve_existing(section["labels"], "labels"))
        return LabeledDataset(
            features=feats.astype(np.float64),
            labels=labels,
            num_classes=int(section.get("num_classes", labels.max() + 1)),
        )
    if kind == "fashion_mnist_subset":
        return fetch_fashion_mnist_subset(
            cache_dir=section.get("cache_dir"),
            split=section.get("split", "train"),
            n=section.get("n"),
        )
    raise ManifestError(f"unsupported dataset kind {kind!r} for a labeled dataset")


def _load_train_test(manifest: ExperimentManifest) -> tuple[LabeledDataset, LabeledDataset]:
    section = manifest.section("dataset")
    kind = section.get("kind")
    if kind == "synthetic_blobs":
        full = _synthetic_from(manifest, section)
        test_fraction = float(section.get("test_fraction", 0.25))
        # split() holds out the fractional part, which is the test side here
        train, test = split(full, test_fraction, manifest.seed("split"))
        return train, test
    if kind == "csv":
        train = load_csv(manifest.resolve_existing(section["train"], "train dataset"), True)
        test = load_csv(manifest.resolve_existing(section["test"], "test dataset"), True)
    elif kind == "container":
        train = LabeledDataset(
            features=load_matrix(manifest.resolve_existing(section["train_features"], "train features")),
            labels=load_labels(manifest.resolve_existing(section["train_labels"], "train labels")),
            num_classes=int(section["num_classes"]),
        )
        test = LabeledDataset(
            features=load_matrix(manifest.resolve_existing(section["test_features"], "test features")),
            labels=load_labels(manifest.resolve_existing(section["test_labels"], "test labels")),
            num_classes=int(section["num_classes"]),
        )
    elif kind == "fashion_mnist_subset":
        cache = section.get("cache_dir")
        train = fetch_fashion_mnist_subset(cache, "train", section.get("n_train"))
        test = fetch_fashion_mnist_subset(cache, "test", section.get("n_test"))
    else:
        raise ManifestError(f"unsupported dataset kind {kind!r} for train/eval")
    if test.n < 1:
        raise ManifestError("test split is empty")
    if train.num_classes != test.num_classes:
        raise ManifestError("train and test class counts differ")
    return train, test


def _binarize_threshold(manifest: ExperimentManifest) -> float | None:
    """The active binarization threshold, or None when binarization is off."""
    section = manifest.optional_section("binarize")
    if not section or not section.get("enabled", "threshold" in section):
        return None
    return float(section["threshold"])


def _check_binary_inputs(X, spec: FeatureMapSpec, features_section: dict, args) -> None:
    """Enforce or advise on the binary-input contract of the optical family.

    The physical device only takes binary frames. By default non-binary
    inputs just warn; --require-binary (or features.require_binary in the
    manifest) turns that into an error.
    """
    required = bool(features_section.get("require_binary", False)) or bool(
        getattr(args, "require_binary", False)
    )
    if required and spec.family == "optical" and not is_binary(X):
        raise ValueError(
            "optical inputs are not binary and require_binary is set; "
            "enable the binarize stage or drop the requirement"
        )
    if not required:
        warn_if_not_binary(X, spec.family)


def _maybe_binarize(manifest: ExperimentManifest, X: np.ndarray) -> tuple[np.ndarray, float | None]:
    threshold = _binarize_threshold(manifest)
    if threshold is None:
        return X, None
    return binarize(X, BinarizerConfig(threshold)).astype(np.float64), threshold


def _apply_grid_hyperparameters(manifest, features_section, ridge_section):
    """Optionally pull scale/alpha/bias/gamma/threshold from a stored grid result."""
    source = manifest.sections.get("hyperparameters_from")
    if not source:
        return None
    path = manifest.resolve_existing(source, "grid result")
    result = GridSearchResult.from_json(path)
    params = result.best_params
    for key in ("scale", "bias_nu", "gamma"):
        if key in params:
            features_section[key] = params[key]
    if "alpha" in params:
        ridge_section["alpha"] = params["alpha"]
    if "threshold" in params:
        manifest.sections.setdefault("binarize", {})["threshold"] = params["threshold"]
        manifest.sections["binarize"]["enabled"] = True
    return params


def _report_skeleton(manifest: ExperimentManifest, command: str) -> dict:
    return {
        "schema_version": 1,
        "tool_version": __version__,
        "command": command,
        "manifest": manifest.echo(),
        "seeds": dict(manifest.seeds),
        "metrics": {},
        "artifacts": {},
        "timings_s": {},
    }


def _write_report(outdir: Path, report: dict, name: str = "report.json") -> Path:
    path = outdir / name
    path.write_text(json.dumps(report, indent=2, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_features(args) -> int:
    timings: dict = {}
    with _stage(timings, "manifest"):
        manifest = _manifest_from_args(args)
        section = dict(manifest.section("features"))
        _merge_flag(section, "D", args.feature_dim, "--feature-dim")
        _merge_flag(section, "scale", args.scale, "--scale")
        _merge_flag(section, "bias_nu", args.bias_nu, "--bias-nu")
        spec = _feature_spec(section)
        outdir = _output_dir(manifest)
        seed = manifest.seed("projection")
    report = _report_skeleton(manifest, "features")
    with _stage(timings, "load-data"):
        X = _load_input_matrix(manifest, manifest.section("dataset"))
        X, threshold = _maybe_binarize(manifest, X)
        if threshold is None:
            _check_binary_inputs(X, spec, section, args)
    with _stage(timings, "features"):
        Phi = build_features(spec, X, seed, block_rows=args.block_rows)
    with _stage(timings, "write"):
        save_matrix(outdir / "features.mat", Phi)
        report["metrics"] = {"rows": int(Phi.shape[0]), "cols": int(Phi.shape[1])}
        report["artifacts"] = {"features": "features.mat"}
        report["timings_s"] = timings
        _write_report(outdir, report)
    return 0


def cmd_kernel(args) -> int:
    timings: dict = {}
    with _stage(timings, "manifest"):
        manifest = _manifest_from_args(args)
        spec = _kernel_spec(manifest.section("kernel"))
        outdir = _output_dir(manifest)
    report = _report_skeleton(manifest, "kernel")
    with _stage(timings, "load-data"):
        X = _load_input_matrix(manifest, manifest.section("dataset"))
    with _stage(timings, "gram"):
        K = gram(X, spec=spec)
    with _stage(timings, "write"):
        save_matrix(outdir / "gram.mat", K.values)
        report["metrics"] = {"rows": int(K.values.shape[0]), "cols": int(K.values.shape[1])}
        report["artifacts"] = {"gram": "gram.mat"}
        report["timings_s"] = timings
        _write_report(outdir, report)
    return 0


def cmd_binarize(args) -> int:
    timings: dict = {}
    with _stage(timings, "manifest"):
        manifest = _manifest_from_args(args)
        section = manifest.section("binarize")
        threshold = float(section["threshold"])
        outdir = _output_dir(manifest)
    report = _report_skeleton(manifest, "binarize")
    with _stage(timings, "load-data"):
        X = _load_input_matrix(manifest, manifest.section("dataset"))
    with _stage(timings, "binarize"):
        B = binarize(X, BinarizerConfig(threshold))
    with _stage(timings, "write"):
        save_matrix(outdir / "binarized.mat", B)
        report["metrics"] = {
            "rows": int(B.shape[0]),
            "cols": int(B.shape[1]),
            "ones_fraction": float(B.mean()),
        }
        report["artifacts"] = {"binarized": "binarized.mat"}
        report["timings_s"] = timings
        _write_report(outdir, report)
    return 0


def cmd_train(args) -> int:
    timings: dict = {}
    with _stage(timings, "manifest"):
        manifest = _manifest_from_args(args)
        features_section = dict(manifest.section("features"))
        ridge_section = dict(manifest.optional_section("ridge") or {})
        _merge_flag(ridge_section, "alpha", args.alpha, "--alpha")
        _merge_flag(ridge_section, "solver", args.solver, "--solver")
        applied = _apply_grid_hyperparameters(manifest, features_section, ridge_section)
        spec = _feature_spec(features_section)
        method = (manifest.optional_section("method") or {}).get("estimator", "rf")
        if method not in ("rf", "exact_kernel"):
            raise ManifestError(f"method.estimator must be 'rf' or 'exact_kernel', got {method!r}")
        alpha = float(ridge_section.get("alpha", 1.0))
        solver = ridge_section.get("solver", "cholesky")
        mode = ridge_section.get("mode", "auto")
        cg_rtol = float(ridge_section.get("cg_rtol", 1e-6))
        cg_maxiter = ridge_section.get("cg_maxiter")
        outdir = _output_dir(manifest)
    report = _report_skeleton(manifest, "train")
    if applied:
        report["metrics"]["hyperparameters_applied"] = applied

    with _stage(timings, "load-data"):
        train, test = _load_train_test(manifest)
        val = None
        val_fraction = float((manifest.optional_section("validation") or {}).get("fraction", 0.0))
        if val_fraction:
            train, val = split(train, val_fraction, manifest.seed("validation_split"))
        threshold = _binarize_threshold(manifest)

        def prep(X):
            if threshold is not None:
                return binarize(X, BinarizerConfig(threshold)).astype(np.float64)
            return X

        Xtr, Xte = prep(train.features), prep(test.features)
        Xval = prep(val.features) if val is not None else None
        if threshold is None:
            _check_binary_inputs(Xtr, spec, features_section, args)
        Ytr = encode_labels(train.labels, train.num_classes)

    # feature generation and the linear solve are timed separately;
    # their cost split is the interesting number at scale
    if method == "rf":
        seed = manifest.seed("projection")
        with _stage(timings, "features"):
            Phi_tr = build_features(spec, Xtr, seed, block_rows=args.block_rows)
            Phi_te = build_features(spec, Xte, seed, block_rows=args.block_rows)
            Phi_val = (
                build_features(spec, Xval, seed, block_rows=args.block_rows)
                if Xval is not None
                else None
            )
        with _stage(timings, "solve"):
            model = fit_features(Phi_tr, Ytr, alpha, solver, mode, cg_rtol, cg_maxiter)
        with _stage(timings, "predict"):
            train_scores = predict_features(model, Phi_tr)
            test_scores = predict_features(model, Phi_te)
            val_scores = predict_features(model, Phi_val) if Phi_val is not None else None
    else:
        with _stage(timings, "features"):
            K_tr = limit_gram(spec, Xtr)
            K_te = limit_gram(spec, Xte, Xtr)
            K_val = limit_gram(spec, Xval, Xtr) if Xval is not None else None
            s2 = spec.scale * spec.scale
        with _stage(timings, "solve"):
            model = fit_dual(s2 * K_tr.values, Ytr, alpha, solver, cg_rtol, cg_maxiter)
        with _stage(timings, "predict"):
            train_scores = predict(model, s2 * K_tr.values)
            test_scores = predict(model, s2 * K_te.values)
            val_scores = predict(model, s2 * K_val.values) if K_val is not None else None

    with _stage(timings, "evaluate"):
        train_acc = accuracy(classify(train_scores), train.labels)
        test_acc = accuracy(classify(test_scores), test.labels)
        stats = model.stats
        report["metrics"].update(
            {
                "estimator": method,
                "train_accuracy": train_acc,
                "test_accuracy": test_acc,
                "test_error": 1.0 - test_acc,
                "n_train": train.n,
                "n_test": test.n,
                "solver": {
                    "method": stats.method,
                    "iterations": stats.iterations,
                    "residual": stats.residual,
                    "effective_alpha": stats.effective_alpha,
                    "jittered": stats.jittered,
                },
            }
        )
        if val_scores is not None:
            report["metrics"]["validation_accuracy"] = accuracy(
                classify(val_scores), val.labels
            )

    with _stage(timings, "write"):
        if model.mode == "primal":
            save_matrix(outdir / "weights.mat", model.weights)
            report["artifacts"] = {"weights": "weights.mat"}
        else:
            save_matrix(outdir / "dual_coef.mat", model.dual_coef)
            report["artifacts"] = {"dual_coef": "dual_coef.mat"}
        report["timings_s"] = timings
        _write_report(outdir, report)
    return 0


def cmd_grid(args) -> int:
    timings: dict = {}
    with _stage(timings, "manifest"):
        manifest = _manifest_from_args(args)
        template = _feature_spec(manifest.section("features"))
        section = manifest.section("grid")
        kwargs = {k: section[k] for k in ("scale_grid", "alpha_grid", "bias_grid") if k in section}
        cfg = GridSearchConfig(
            split_seed=manifest.seed("split"),
            projection_seed=manifest.seed("projection"),
            gamma_grid=section.get("gamma_grid"),
            threshold_grid=section.get("threshold_grid"),
            validation_fraction=float(section.get("validation_fraction", 0.2)),
            metric=section.get("metric", "accuracy"),
            **kwargs,
        )
        solver = section.get("solver", "cholesky")
        outdir = _output_dir(manifest)
    report = _report_skeleton(manifest, "grid")
    with _stage(timings, "load-data"):
        dataset = _load_labeled(manifest, manifest.section("dataset"))
    with _stage(timings, "grid-search"):
        result = grid_search(
            dataset, template, cfg, solver=solver,
            workers=args.workers, block_rows=args.block_rows,
        )
    with _stage(timings, "write"):
        result.to_json(outdir / "grid_result.json")
        result.to_csv(outdir / "grid_result.csv")
        report["metrics"] = {
            "best_params": result.best_params,
            "best_validation_accuracy": result.best_validation_accuracy,
            "grid_points": result.cardinality,
        }
        report["artifacts"] = {
            "grid_json": "grid_result.json",
            "grid_csv": "grid_result.csv",
        }
        report["timings_s"] = timings
        _write_report(outdir, report)
    return 0


def cmd_converge(args) -> int:
    timings: dict = {}
    with _stage(timings, "manifest"):
        manifest = _manifest_from_args(args)
        section = manifest.section("convergence")
        _merge_flag(section, "replicates", args.replicates, "--replicates")
        exponent = float(section.get("exponent_m", 2.0))
        dims = [int(v) for v in section["dims"]]
        n_pairs = int(section.get("n_pairs", 20))
        d = int(section.get("d", 20))
        replicates = int(section.get("replicates", 20))
        t_values = section.get("t_values")
        outdir = _output_dir(manifest)
        pairs_seed = manifest.seed("pairs")
        base_seed = manifest.seed("replicates")
    report = _report_skeleton(manifest, "converge")
    with _stage(timings, "error-curve"):
        pairs = sample_unit_pairs(pairs_seed, n_pairs, d)
        curve = error_curve(
            exponent, dims, pairs, replicates, base_seed,
            pairs_seed=pairs_seed, workers=args.workers,
        )
    tails = None
    if t_values:
        with _stage(timings, "tails"):
            tails = {
                str(D): [
                    {
                        "t": e.t,
                        "probability": e.probability,
                        "half_width": e.half_width,
                        "trials": e.trials,
                    }
                    for e in tail_probability(
                        exponent, D, t_values, pairs, replicates, base_seed,
                        workers=args.workers,
                    )
                ]
                for D in dims
            }
    with _stage(timings, "write"):
        curve.to_csv(outdir / "converge.csv")
        summary = curve.summary()
        if tails is not None:
            summary["tail_estimates"] = tails
        (outdir / "converge.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        report["metrics"] = {
            "dims": dims,
            "per_dim_median": {str(D): curve.per_dim_stats[D]["median"] for D in dims},
        }
        report["artifacts"] = {"records": "converge.csv", "summary": "converge.json"}
        report["timings_s"] = timings
        _write_report(outdir, report)
    return 0


def _json_path_get(payload, *keys):
    node = payload
    trail = "$"
    for key in keys:
        trail += f".{key}"
        if not isinstance(node, dict) or key not in node:
            raise ValueError(f"schema error at {trail}: missing or wrong type")
        node = node[key]
    return node


def cmd_plotdata(args) -> int:
    timings: dict = {}
    with _stage(timings, "read-input"):
        path = Path(args.input)
        if not path.exists():
            raise FileNotFoundError(f"input {path} does not exist")
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ValueError(f"schema error at $: input is not valid JSON ({err})") from None
        kind = _json_path_get(payload, "type")
        outdir = Path(args.output_dir or path.parent)
        outdir.mkdir(parents=True, exist_ok=True)
    with _stage(timings, "emit"):
        if kind == "grid_search_result":
            try:
                result = GridSearchResult.from_dict(payload)
            except (KeyError, TypeError) as err:
                raise ValueError(f"schema error at $.rows: {err}") from None
            out = outdir / "heatmap.csv"
            result.to_csv(out)
            print(f"wrote {out} ({result.cardinality} rows)")
        elif kind == "convergence_report":
            stats = _json_path_get(payload, "per_dim_stats")
            family = _json_path_get(payload, "family")
            m = _json_path_get(payload, "exponent_m")
            out = outdir / "error_vs_dim.csv"
            with open(out, "w") as fh:
                fh.write("family,m,D,mean_rel_error,median_rel_error,max_rel_error\n")
                for D in sorted(stats, key=int):
                    row = stats[D]
                    fh.write(
                        f"{family},{m},{D},{row['mean']!r},{row['median']!r},{row['max']!r}\n"
                    )
            print(f"wrote {out} ({len(stats)} dimensions)")
        else:
            raise ValueError(f"schema error at $.type: unknown input type {kind!r}")
    return 0


def cmd_fetch(args) -> int:
    timings: dict = {}
    with _stage(timings, "manifest"):
        manifest = _manifest_from_args(args)
        section = manifest.section("dataset")
        outdir = _output_dir(manifest)
    report = _report_skeleton(manifest, "fetch")
    with _stage(timings, "fetch"):
        kind = section.get("kind")
        artifacts = {}
        if kind == "synthetic_blobs":
            ds = _synthetic_from(manifest, section)
            save_matrix(outdir / "features.mat", ds.features)
            save_labels(outdir / "labels.mat", ds.labels)
            artifacts = {"features": "features.mat", "labels": "labels.mat"}
            report["metrics"] = {"n": ds.n, "d": ds.d, "num_classes": ds.num_classes}
        elif kind == "fashion_mnist_subset":
            cache = section.get("cache_dir")
            for part, count_key in (("train", "n_train"), ("test", "n_test")):
                ds = fetch_fashion_mnist_subset(cache, part, section.get(count_key))
                save_matrix(outdir / f"{part}_features.mat", ds.features)
                save_labels(outdir / f"{part}_labels.mat", ds.labels)
                artifacts[f"{part}_features"] = f"{part}_features.mat"
                artifacts[f"{part}_labels"] = f"{part}_labels.mat"
                report["metrics"][f"n_{part}"] = ds.n
        else:
            raise ManifestError(f"unsupported dataset kind {kind!r} for fetch")
    with _stage(timings, "write"):
        report["artifacts"] = artifacts
        report["timings_s"] = timings
        _write_report(outdir, report)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, manifest_required: bool = True):
    if manifest_required:
        p.add_argument("--manifest", required=True, help="path to the run manifest JSON")
    p.add_argument("--output-dir", default=None, help="mirrors the manifest output_dir field")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="worker threads for independent grid points or replicates")
    p.add_argument("--block-rows", type=int, default=1024,
                   help="row block size for feature computation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oprf",
        description="Optical random feature simulation and ridge regression pipeline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="compute a random feature matrix")
    _add_common(p)
    p.add_argument("--feature-dim", type=int, default=None, help="mirrors features.D")
    p.add_argument("--scale", type=float, default=None, help="mirrors features.scale")
    p.add_argument("--bias-nu", type=float, default=None, help="mirrors features.bias_nu")
    p.add_argument("--require-binary", action="store_true",
                   help="reject non-binary optical inputs instead of warning")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("kernel", help="compute an exact kernel Gram matrix")
    _add_common(p)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("binarize", help="threshold-binarize a matrix")
    _add_common(p)
    p.set_defaults(func=cmd_binarize)

    p = sub.add_parser("train", help="train and evaluate ridge regression")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=None, help="mirrors ridge.alpha")
    p.add_argument("--solver", choices=["cholesky", "conjugate_gradient"], default=None,
                   help="mirrors ridge.solver")
    p.add_argument("--require-binary", action="store_true",
                   help="reject non-binary optical inputs instead of warning")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    _add_common(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("converge", help="estimator error and tail measurements")
    _add_common(p)
    p.add_argument("--replicates", type=int, default=None, help="mirrors convergence.replicates")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("plotdata", help="emit plot-ready CSV from a result file")
    p.add_argument("--input", required=True, help="grid result or convergence summary JSON")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("fetch", help="materialize a dataset into containers")
    _add_common(p)
    p.set_defaults(func=cmd_fetch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as err:
        print(f"error in stage '{err.stage}': {err.err}", file=sys.stderr)
        return 1
    except (ManifestError, ContainerFormatError, SolverError,
            DownloadError, ChecksumError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
