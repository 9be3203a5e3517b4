"""Desk-scale coverage grid (n x error model x estimator) written as CSV.

Equivalent to ``dyadnet simulate`` with the ``paper-figures-desk`` preset.
"""
import argparse
import json
import os
import sys
import tempfile

from dyadnet.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--n-grid", type=int, nargs="+", default=None)
    ap.add_argument("--draws", type=int, default=None)
    ap.add_argument("--reps", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    cfg = {"kind": "preset", "preset": "paper-figures-desk"}
    for key, val in (("n_grid", args.n_grid), ("n_design_draws", args.draws),
                     ("n_error_reps", args.reps), ("seed", args.seed)):
        if val is not None:
            cfg[key] = val
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(cfg, fh)
    try:
        code = cli_main(["simulate", fh.name, "--out", args.out])
    finally:
        os.unlink(fh.name)
    sys.exit(code)


if __name__ == "__main__":
    main()
