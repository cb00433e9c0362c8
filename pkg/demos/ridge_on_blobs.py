"""Ridge regression on random features versus the exact kernel.

Trains optical-feature ridge classifiers of growing dimension on a
synthetic two-class task and shows the test error settling onto the exact
degree-2 kernel solution computed in dual form.

Run:  python demos/ridge_on_blobs.py
"""

import numpy as np

from oprf import (
    FeatureMapSpec,
    accuracy,
    build_features,
    classify,
    encode_labels,
    fit_dual,
    fit_features,
    limit_gram,
    predict,
    predict_features,
    split,
    synthetic_blobs,
)

ALPHA = 1e4
BIAS_NU = 1.0  # prepends sqrt(nu), giving the quadratic kernel its linear terms


def main():
    data = synthetic_blobs(seed=42, n=2000, d=20, num_classes=2, separation=1.0)
    train, test = split(data, 0.25, seed=0)
    Ytr = encode_labels(train.labels, 2)

    print(f"train {train.n} / test {test.n}, alpha={ALPHA:g}, bias nu={BIAS_NU}\n")
    print(f"{'features':<22}{'test error':>12}")
    print("-" * 34)
    for D in (100, 1_000, 10_000):
        spec = FeatureMapSpec(family="optical", D=D, bias_nu=BIAS_NU)
        model = fit_features(build_features(spec, train.features, seed=7), Ytr, ALPHA)
        pred = classify(predict_features(model, build_features(spec, test.features, seed=7)))
        err = 1.0 - accuracy(pred, test.labels)
        print(f"optical D={D:<12,}{err:>12.3%}")

    spec = FeatureMapSpec(family="optical", D=1, bias_nu=BIAS_NU)  # D unused below
    K_tr = limit_gram(spec, train.features).values
    K_te = limit_gram(spec, test.features, train.features).values
    kernel_model = fit_dual(K_tr, Ytr, ALPHA)
    err = 1.0 - accuracy(classify(predict(kernel_model, K_te)), test.labels)
    print(f"{'exact kernel':<22}{err:>12.3%}")


if __name__ == "__main__":
    main()
