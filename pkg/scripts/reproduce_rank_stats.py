#!/usr/bin/env python3
"""Friedman / Nemenyi analysis of the bundled published mean-rank table.

Seven classifiers compared over three intrusion datasets by their mean ranks
for four metrics. Prints the F-statistic, p-value and significance calls per
metric, then the critical-difference summary for the accuracy ranks.
"""

from idsforge.stats import friedman_from_mean_ranks, nemenyi_cd

ALGORITHMS = ["Voting", "Stacking", "AdaBoost", "GBM", "kNN", "CART", "MLP"]
N_DATASETS = 3
MEAN_RANKS = {
    "Accuracy": [1.667, 3.133, 3.867, 2.067, 5.467, 4.867, 6.933],
    "F-Measure": [1.967, 2.933, 5.033, 2.367, 5.233, 4.633, 5.867],
    "ADR": [1.467, 3.600, 3.733, 3.400, 5.533, 3.467, 6.800],
    "FAR": [1.867, 2.733, 3.333, 4.000, 5.533, 4.533, 6.000],
}


def main():
    print(f"{'metric':<10} {'chi2':>8} {'F':>8} {'p':>8}  reject@0.05  reject@0.1")
    for metric, ranks in MEAN_RANKS.items():
        res = friedman_from_mean_ranks(ranks, N_DATASETS)
        print(f"{metric:<10} {res.chi2_f:8.4f} {res.f_statistic:8.4f} "
              f"{res.p_value:8.4f}  {str(res.reject_at[0.05]):<11}  {res.reject_at[0.1]}")

    print("\ncritical differences for the accuracy ranks:")
    for alpha in (0.05, 0.1):
        res = nemenyi_cd(MEAN_RANKS["Accuracy"], N_DATASETS, alpha, ALGORITHMS)
        print(f"  alpha={alpha}: q={res.q_alpha} CD={res.cd:.4f}")
        if res.significant_pairs:
            for a, b, diff in res.significant_pairs:
                print(f"    {a} vs {b}: rank gap {diff:.3f}")
        else:
            print("    no significant pairs")


if __name__ == "__main__":
    main()
