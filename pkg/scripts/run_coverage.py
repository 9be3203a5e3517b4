"""Run one coverage experiment and print the per-estimator summary."""
import argparse
import json

from dyadnet.simulation import SimDesign, run_coverage


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--error-model", default="bilinear", choices=["iid", "bilinear", "nonexch", "zero"])
    ap.add_argument("--draws", type=int, default=50)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--json", help="write the full report to this path")
    args = ap.parse_args()
    design = SimDesign(n=args.n, n_design_draws=args.draws, n_error_reps=args.reps,
                       error_model=args.error_model, seed=args.seed)
    rep = run_coverage(design, workers=args.workers)
    print(f"{'estimator':<10}{'coef':>5}{'median':>9}{'q10':>8}{'q90':>8}")
    for est in design.estimators:
        med = rep.median_coverage(est)
        lo, hi = rep.coverage_quantiles(est)
        for k in range(len(med)):
            print(f"{est:<10}{k:>5}{med[k]:>9.3f}{lo[k]:>8.3f}{hi[k]:>8.3f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
