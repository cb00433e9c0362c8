"""The manifest-driven command line, end to end.

Writes a manifest describing a small training run, executes it twice via
the `oprf` CLI entry point, and verifies the reruns are byte-identical
(matrix containers) and report-identical outside the timing fields.

Run:  python demos/cli_pipeline.py
"""

import json
from pathlib import Path

from oprf.cli import main as oprf_main

OUT = Path("demo_out") / "cli"


def run_once(manifest_path):
    code = oprf_main(["train", "--manifest", str(manifest_path)])
    assert code == 0, f"CLI exited with {code}"
    report = json.loads((OUT / "report.json").read_text())
    artifact = (OUT / "dual_coef.mat").read_bytes() if (OUT / "dual_coef.mat").exists() \
        else (OUT / "weights.mat").read_bytes()
    report.pop("timings_s")
    return report, artifact


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": 1,
        "seeds": {"projection": 1, "split": 2, "data": 3},
        # relative paths resolve against the manifest's own directory
        "output_dir": ".",
        "dataset": {
            "kind": "synthetic_blobs",
            "n": 600, "d": 10, "num_classes": 2,
            "separation": 1.5, "test_fraction": 0.25,
        },
        "features": {"family": "optical", "D": 500, "bias_nu": 1.0},
        "ridge": {"alpha": 100.0, "solver": "cholesky"},
    }
    manifest_path = OUT / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    print(f"manifest written to {manifest_path}")

    report1, bytes1 = run_once(manifest_path)
    report2, bytes2 = run_once(manifest_path)

    metrics = report1["metrics"]
    print(f"test accuracy: {metrics['test_accuracy']:.3f} "
          f"(train {metrics['train_accuracy']:.3f})")
    print(f"solver: {metrics['solver']['method']}, "
          f"residual {metrics['solver']['residual']:.2e}")
    print(f"reruns byte-identical: {bytes1 == bytes2}")
    print(f"reports identical modulo timings: {report1 == report2}")


if __name__ == "__main__":
    main()
