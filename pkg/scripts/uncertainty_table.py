#!/usr/bin/env python3
"""Two-stage mean/variance run on the Gaussian-linear task; prints the metric table."""

import argparse

from riskmin.uncertainty import UncertaintyConfig, run_uncertainty_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=20000)
    args = ap.parse_args()

    res = run_uncertainty_experiment(UncertaintyConfig(seed=args.seed, n_train=args.n_train))
    print(f"{'comparison':<28}{'psnr':>10}{'mse':>12}{'nmse':>10}")
    for r in res["rows"]:
        print(f"{r['comparison']:<28}{r['psnr']:>10.3f}{r['mse']:>12.6f}{r['nmse']:>10.4f}")
    print(f"min f_var output {res['min_var_output']:.3g}; {res['elapsed_s']:.1f}s")


if __name__ == "__main__":
    main()
