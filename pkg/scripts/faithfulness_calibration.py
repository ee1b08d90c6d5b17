"""Power and false-positive rate of the permutation-MMD faithfulness check.

Power is measured on the unit chain with a unit root shift, the false
positive rate on the same chain with a zero shift. Rates are per test,
pooled over seeds, nodes and projection draws.

    python3 scripts/faithfulness_calibration.py --power-seeds 20 --null-trials 200
"""
import argparse

import numpy as np

from gracevae.scmsynth import chain_ground_truth, check_faithfulness


def rejection_rate(gt, n, seeds, draws):
    hits = [t["reject"] for s in seeds for t in check_faithfulness(gt, 0, n, n_C_draws=draws, seed=s).tests]
    return float(np.mean(hits)), len(hits)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--power-seeds", type=int, default=20)
    ap.add_argument("--null-trials", type=int, default=200)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--null-n", type=int, default=1000)
    args = ap.parse_args()
    power, k = rejection_rate(chain_ground_truth([1.0], 1.0), args.n, range(args.power_seeds), 2)
    print(f"power {power:.3f} over {k} tests")
    fpr, k = rejection_rate(chain_ground_truth([1.0], 0.0), args.null_n,
                            range(10_000, 10_000 + args.null_trials), 1)
    print(f"false positive rate {fpr:.4f} over {k} tests")


if __name__ == "__main__":
    main()
