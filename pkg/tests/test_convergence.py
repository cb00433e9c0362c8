import csv

import numpy as np
import pytest

from oprf.convergence import (
    error_curve,
    fit_tail_constant,
    sample_unit_pairs,
    sign_test_pvalue,
    tail_bound,
    tail_probability,
)


@pytest.fixture(scope="module")
def pairs():
    return sample_unit_pairs(seed=101, n_pairs=8, d=12)


class TestSampleUnitPairs:
    def test_shape_and_norms(self):
        p = sample_unit_pairs(3, 5, d=7)
        assert p.shape == (5, 2, 7)
        assert np.allclose(np.linalg.norm(p, axis=2), 1.0, rtol=1e-12)

    def test_deterministic(self):
        assert np.array_equal(sample_unit_pairs(3, 4), sample_unit_pairs(3, 4))


class TestErrorCurve:
    def test_reproducible(self, pairs):
        a = error_curve(2, [100, 400], pairs, replicates=3, base_seed=50)
        b = error_curve(2, [100, 400], pairs, replicates=3, base_seed=50)
        assert a.records == b.records
        assert a.per_dim_stats == b.per_dim_stats
        assert a.replicate_seeds == [50, 51, 52]

    def test_record_layout(self, pairs):
        rep = error_curve(2, [64], pairs, replicates=2, base_seed=1)
        assert len(rep.records) == 2 * pairs.shape[0]
        D, pid, r, est, ref, rel = rep.records[0]
        assert D == 64 and pid == 0 and r == 0
        assert rel == abs(est - ref) / ref

    def test_single_pair_large_dimension_is_tight(self):
        # aligned unit pair at D = 1e6: one replicate lands within 1%
        pair = np.zeros((1, 2, 4))
        pair[0, :, 0] = 1.0
        rep = error_curve(2, [10**6], pair, replicates=1, base_seed=3)
        assert rep.per_dim_stats[10**6]["max"] <= 0.01

    def test_error_shrinks_with_dimension(self, pairs):
        # one-sided sign test on replicate medians across a decade of D
        rep = error_curve(2, [100, 1000, 10_000], pairs, replicates=20, base_seed=7)
        meds = {D: np.median(rep.rel_errors(D), axis=1) for D in rep.dims}
        for small, large in zip(rep.dims, rep.dims[1:]):
            wins = int(np.sum(meds[small] > meds[large]))
            assert sign_test_pvalue(wins, 20) < 0.05
        assert (
            rep.per_dim_stats[100]["median"]
            > rep.per_dim_stats[1000]["median"]
            > rep.per_dim_stats[10_000]["median"]
        )

    def test_higher_exponent_converges_slower(self, pairs):
        # medians per replicate, m = 4 against m = 2, at matched seeds
        r2 = error_curve(2, [1000], pairs, replicates=20, base_seed=11)
        r4 = error_curve(4, [1000], pairs, replicates=20, base_seed=11)
        med2 = np.median(r2.rel_errors(1000), axis=1)
        med4 = np.median(r4.rel_errors(1000), axis=1)
        wins = int(np.sum(med4 > med2))
        assert sign_test_pvalue(wins, 20) < 0.05

    def test_odd_exponent_rejected(self, pairs):
        with pytest.raises(ValueError, match="even"):
            error_curve(3, [100], pairs, replicates=1, base_seed=0)

    def test_zero_kernel_pair_rejected(self):
        bad = np.zeros((1, 2, 3))
        bad[0, 1] = 1.0
        with pytest.raises(ValueError, match="zero kernel"):
            error_curve(2, [100], bad, replicates=1, base_seed=0)

    def test_dims_must_increase(self, pairs):
        with pytest.raises(ValueError, match="strictly increasing"):
            error_curve(2, [100, 100], pairs, replicates=1, base_seed=0)
        with pytest.raises(ValueError, match="strictly increasing"):
            error_curve(2, [200, 100], pairs, replicates=1, base_seed=0)

    def test_csv_emission(self, pairs, tmp_path):
        rep = error_curve(2, [64, 128], pairs, replicates=2, base_seed=5)
        out = tmp_path / "curve.csv"
        rep.to_csv(out)
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "family", "m", "D", "pair_id", "replicate",
            "estimate", "reference", "rel_error",
        ]
        assert len(rows) - 1 == 2 * 2 * pairs.shape[0]
        assert rows[1][0] == "optical"

    def test_json_summary(self, pairs, tmp_path):
        rep = error_curve(2, [64], pairs, replicates=2, base_seed=5, pairs_seed=101)
        out = tmp_path / "curve.json"
        rep.to_json(out)
        import json

        payload = json.loads(out.read_text())
        assert payload["type"] == "convergence_report"
        assert payload["pairs_seed"] == 101
        assert "64" in payload["per_dim_stats"]


class TestTailProbability:
    def test_zero_threshold_is_certain(self, pairs):
        rows = tail_probability(2, 200, [0.0], pairs, replicates=100, base_seed=3)
        assert rows[0].probability == 1.0

    def test_huge_threshold_is_never_exceeded(self, pairs):
        rows = tail_probability(2, 10_000, [50.0], pairs, replicates=100, base_seed=3)
        assert rows[0].probability == 0.0

    def test_monotone_in_dimension(self, pairs):
        t = 0.3
        probs = []
        for D in (100, 1000, 10_000):
            rows = tail_probability(2, D, [t], pairs, replicates=150, base_seed=9)
            probs.append(rows[0])
        for small, large in zip(probs, probs[1:]):
            slack = small.half_width + large.half_width
            assert large.probability <= small.probability + slack

    def test_replicate_floor_enforced(self, pairs):
        with pytest.raises(ValueError, match="replicates"):
            tail_probability(2, 100, [0.1], pairs, replicates=50, base_seed=0)

    def test_half_width_sane(self, pairs):
        rows = tail_probability(2, 100, [0.2], pairs, replicates=100, base_seed=4)
        e = rows[0]
        assert 0.0 <= e.half_width <= 0.2
        assert e.trials == 100 * pairs.shape[0]


class TestTailBoundShape:
    def test_fitted_bound_envelopes_larger_dimensions(self, pairs):
        # fit the constant on the smallest D, then check larger D stay under
        # the bound within binomial slack; t values sit in the genuine tail
        # regime at the smallest D, where the bound's shape applies
        t_values = [0.3, 0.6, 1.2]
        dims = [100, 1000]
        tables = {
            D: tail_probability(2, D, t_values, pairs, replicates=150, base_seed=21)
            for D in dims
        }
        c = fit_tail_constant(tables[dims[0]], m=2)
        assert c > 0
        for D in dims[1:]:
            for e in tables[D]:
                assert e.probability <= tail_bound(D, e.t, 2, c) + e.half_width

    def test_fit_needs_nonzero_cells(self, pairs):
        rows = tail_probability(2, 10_000, [60.0], pairs, replicates=100, base_seed=3)
        with pytest.raises(ValueError, match="usable"):
            fit_tail_constant(rows, m=2)


def test_sign_test_pvalue():
    assert sign_test_pvalue(20, 20) < 1e-5
    assert sign_test_pvalue(10, 20) > 0.5
    assert sign_test_pvalue(15, 20) == pytest.approx(0.02069, abs=1e-4)
    with pytest.raises(ValueError):
        sign_test_pvalue(-1, 5)
