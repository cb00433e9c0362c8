"""Tail probabilities of the optical kernel estimator.

Measures P{|phi(x)'phi(y) - k| >= t} empirically across feature dimensions
and compares the decay against the theoretical envelope
D * exp(-c (D t)^(1/m)) with the constant c fitted on the smallest
dimension. The envelope describes genuine tail deviations, so the t values
here sit well past the estimator's bulk spread at the smallest D; for
small t the usual central-limit behavior takes over and the fitted shape
says nothing. Loose by design; the point is the decay shape.

Run:  python demos/tail_decay.py
"""

from oprf import fit_tail_constant, sample_unit_pairs, tail_bound, tail_probability

PAIRS = sample_unit_pairs(seed=11, n_pairs=5, d=20)
DIMS = [100, 400, 1600]
T_VALUES = [0.4, 0.8, 1.2]
M = 2


def main():
    tables = {
        D: tail_probability(M, D, T_VALUES, PAIRS, replicates=300, base_seed=500)
        for D in DIMS
    }
    c = fit_tail_constant(tables[DIMS[0]], m=M)
    print(f"empirical exceedance frequencies, m={M} (bound constant fitted: {c:.3f})\n")
    print(f"{'t':>6} " + "".join(f"{'D=' + str(D):>14}" for D in DIMS))
    for i, t in enumerate(T_VALUES):
        cells = "".join(f"{tables[D][i].probability:>14.3f}" for D in DIMS)
        print(f"{t:>6} {cells}")
    print("\nfitted envelope at the same cells:\n")
    print(f"{'t':>6} " + "".join(f"{'D=' + str(D):>14}" for D in DIMS))
    for t in T_VALUES:
        cells = "".join(f"{min(1.0, tail_bound(D, t, M, c)):>14.3f}" for D in DIMS)
        print(f"{t:>6} {cells}")


if __name__ == "__main__":
    main()
