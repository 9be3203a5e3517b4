"""Command-line entry point: ``dyadnet fit`` and ``dyadnet simulate``.

Exit codes
----------
0 success; 2 usage error; 3 CSV parse error; 4 incomplete array;
5 rank-deficient design; 6 GEE did not converge (results still written);
7 invalid configuration; 8 acceptance-tagged check failed; 1 other error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from scipy import stats

from dyadnet.arrays import ArrayExchParams
from dyadnet.errors import (
    ConfigError,
    DimensionError,
    IncompleteDataError,
    NotInvertibleError,
    SingularDesignError,
)
from dyadnet.fit import fit
from dyadnet.gee import GeeConfig, gee_fit
from dyadnet.io import ParseError, read_long_csv
from dyadnet.simulation import BilinearParams, SimDesign, run_coverage
from dyadnet import theory

SCHEMA = "dyadnet/1"

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2
EXIT_PARSE, EXIT_INCOMPLETE, EXIT_RANK = 3, 4, 5
EXIT_NONCONVERGED, EXIT_CONFIG, EXIT_CHECK_FAILED = 6, 7, 8

PRESETS = {
    "paper-figures-desk": {
        "n_grid": [20, 40, 80],
        "error_models": ["iid", "bilinear", "nonexch"],
        "n_design_draws": 50,
        "n_error_reps": 200,
        "seed": 0,
    },
}

THEOREMS = {
    "limiting-variance": theory.check_limiting_variance,
    "consistency": theory.check_consistency,
    "bias-dominance": theory.check_bias_dominance,
    "dc-rank": theory.check_dc_rank,
}


def _params_dict(params):
    if params is None:
        return None
    d = params.as_dict()
    return d


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _coef_rows(names, beta, se, level):
    z = stats.norm.ppf(0.5 + level / 2)
    return [{"term": t, "estimate": float(b), "se": float(s),
             "ci_lo": float(b - z * s), "ci_hi": float(b + z * s)}
            for t, b, s in zip(names, beta, se)]


def cmd_fit(args) -> int:
    data = read_long_csv(args.input, directed=args.directed)
    ds = data.dataset
    structure = args.array or "full-exch"
    if ds.R == 1 and args.array:
        raise ConfigError("--array needs more than one layer")
    code = EXIT_OK
    diagnostics = {"n": ds.n, "R": ds.R, "directed": ds.directed,
                   "condition_number": float(np.linalg.cond(ds.X.T @ ds.X))}
    if args.gee:
        res = gee_fit(ds, GeeConfig(max_iter=args.max_iter, tol=args.tol,
                                    structure=structure, se_kind=args.se))
        beta, vcov, se = res.beta_hat, res.vcov, res.se
        params = res.param_trajectory[-1]
        diagnostics.update({"gee_iterations": res.iterations, "gee_converged": res.converged,
                            "gee_last_change": res.last_change,
                            "pd_shrink_events": res.shrink_events})
        if not res.converged:
            code = EXIT_NONCONVERGED
    else:
        res = fit(ds, args.se, structure)
        beta, vcov, se, params = res.beta_hat, res.vcov, res.se, res.exch_params
        diagnostics.update(res.diagnostics)
    if isinstance(params, ArrayExchParams):
        diagnostics["n_parameters"] = params.n_parameters
    rows = _coef_rows(ds.names, beta, se, args.ci)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["term", "estimate", "se", "ci_lo", "ci_hi"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        _write(buf.getvalue(), args.out)
    else:
        report = {
            "schema": SCHEMA,
            "command": "fit",
            "input": Path(args.input).name,
            "se": args.se,
            "gee": bool(args.gee),
            "structure": structure if ds.R > 1 else None,
            "ci_level": args.ci,
            "coefficients": rows,
            "vcov": np.asarray(vcov).tolist(),
            "params": _params_dict(params),
            "diagnostics": diagnostics,
            "labels": {"actors": list(data.actors), "layers": list(data.layers)},
        }
        _write(_dumps(report), args.out)
    return code


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _check_keys(cfg: dict, allowed, where: str):
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _typed(cfg: dict, types: dict, where: str):
    for key, typ in types.items():
        if key in cfg:
            val = cfg[key]
            ok = isinstance(val, typ) and not (typ in (int, float, (int, float)) and isinstance(val, bool))
            if not ok:
                raise ConfigError(f"{where}: field {key!r} has invalid type {type(val).__name__}")


_DESIGN_TYPES = {"n": int, "n_design_draws": int, "n_error_reps": int, "beta_true": list,
                 "error_model": str, "seed": int, "estimators": list,
                 "ci_level": (int, float), "bilinear": dict}


def _design_from(cfg: dict, where: str) -> SimDesign:
    _typed(cfg, _DESIGN_TYPES, where)
    if "bilinear" in cfg:
        _check_keys(cfg["bilinear"], [f.name for f in fields(BilinearParams)], f"{where}.bilinear")
        _typed(cfg["bilinear"], {f.name: (int, float) for f in fields(BilinearParams)}, f"{where}.bilinear")
    try:
        return SimDesign(**cfg)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _report_csv(path: Path, rows: list[dict]):
    if not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _coverage_draw_rows(rep, extra: dict) -> list[dict]:
    rows = []
    for d in range(rep.coverage.shape[0]):
        for c, est in enumerate(rep.estimators):
            for k in range(rep.coverage.shape[1]):
                rows.append({**extra, "draw": d, "estimator": est, "coef": f"beta{k + 1}",
                             "coverage": float(rep.coverage[d, k, c]),
                             "se_error": float(rep.se_error[d, k, c]),
                             "se_sd": float(rep.se_sd[d, k, c])})
    return rows


def _run_coverage_cfg(cfg: dict, out: Path) -> int:
    design = _design_from(cfg, "config")
    rep = run_coverage(design)
    (out / "report.json").write_text(_dumps({"schema": SCHEMA, "kind": "coverage", **rep.to_dict()}),
                                     encoding="utf-8")
    _report_csv(out / "coverage_summary.csv", rep.summary_rows())
    _report_csv(out / "coverage_draws.csv", _coverage_draw_rows(rep, {}))
    return EXIT_OK


def _run_preset(name: str, overrides: dict, out: Path) -> int:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    spec = dict(PRESETS[name])
    _check_keys(overrides, list(spec), f"preset {name}")
    _typed(overrides, {"n_grid": list, "error_models": list, "n_design_draws": int,
                       "n_error_reps": int, "seed": int}, f"preset {name}")
    spec.update(overrides)
    summary, draws, reports = [], [], []
    for n in spec["n_grid"]:
        for model in spec["error_models"]:
            design = _design_from({"n": n, "error_model": model, "seed": spec["seed"],
                                   "n_design_draws": spec["n_design_draws"],
                                   "n_error_reps": spec["n_error_reps"]}, f"preset {name}")
            rep = run_coverage(design)
            tag = {"n": n, "error_model": model}
            summary += [{**tag, **r} for r in rep.summary_rows()]
            draws += _coverage_draw_rows(rep, tag)
            reports.append({"design": design.to_dict(), "summary": rep.summary_rows(),
                            "failures": [list(f) for f in rep.failures]})
    _report_csv(out / "coverage_summary.csv", summary)
    _report_csv(out / "coverage_draws.csv", draws)
    (out / "report.json").write_text(_dumps({"schema": SCHEMA, "kind": "preset", "preset": name,
                                             "settings": spec, "runs": reports}), encoding="utf-8")
    return EXIT_OK


def _run_theorem(cfg: dict, acceptance: bool, out: Path) -> int:
    name = cfg.pop("theorem", None)
    if name not in THEOREMS:
        raise ConfigError(f"field 'theorem' must be one of {sorted(THEOREMS)}")
    allowed = {"limiting-variance": ["n_grid", "reps", "seed", "moment_reps", "bilinear"],
               "consistency": ["n_grid", "reps", "seed", "bilinear"],
               "bias-dominance": ["n", "reps", "seed", "bilinear", "ratio_tol", "se_mult"],
               "dc-rank": ["n_grid", "draws", "seed"]}[name]
    _check_keys(cfg, allowed, f"theorem {name}")
    _typed(cfg, {"n_grid": list, "reps": int, "seed": int, "moment_reps": int, "n": int,
                 "draws": int, "bilinear": dict, "ratio_tol": (int, float),
                 "se_mult": (int, float)}, f"theorem {name}")
    if "bilinear" in cfg:
        _check_keys(cfg["bilinear"], [f.name for f in fields(BilinearParams)], f"theorem {name}.bilinear")
        cfg["params"] = BilinearParams(**cfg.pop("bilinear"))
    rep = THEOREMS[name](**cfg)
    (out / "report.json").write_text(_dumps({"schema": SCHEMA, "kind": "theorem", **rep.to_dict()}),
                                     encoding="utf-8")
    return EXIT_CHECK_FAILED if acceptance and not rep.passed else EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    acceptance = cfg.pop("acceptance", False)
    if not isinstance(acceptance, bool):
        raise ConfigError("field 'acceptance' must be a boolean")
    kind = cfg.pop("kind", "coverage")
    if kind == "coverage":
        _check_keys(cfg, _DESIGN_TYPES, "config")
        return _run_coverage_cfg(cfg, out)
    if kind == "preset":
        name = cfg.pop("preset", None)
        return _run_preset(name, cfg, out)
    if kind == "theorem":
        return _run_theorem(cfg, acceptance, out)
    raise ConfigError("field 'kind' must be 'coverage', 'preset' or 'theorem'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyadnet", description="Regression for relational data.")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a relational regression from a long-format CSV")
    f.add_argument("input")
    f.add_argument("--se", choices=["hc", "dc", "exch"], default="exch")
    f.add_argument("--gee", action="store_true", help="exchangeable GEE instead of OLS")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--directed", dest="directed", action="store_true", default=True)
    g.add_argument("--undirected", dest="directed", action="store_false")
    f.add_argument("--array", choices=["full-exch", "stationary", "unrestricted", "independent"])
    f.add_argument("--ci", type=float, default=0.95)
    f.add_argument("--out")
    f.add_argument("--format", choices=["json", "csv"], default="json")
    f.add_argument("--max-iter", type=int, default=100)
    f.add_argument("--tol", type=float, default=1e-8)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a coverage study, preset or theory check")
    s.add_argument("config", help="JSON config file")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "ci", 0.5) is not None and args.command == "fit" and not 0 < args.ci < 1:
        parser.error("--ci must lie in (0, 1)")
    try:
        return args.func(args)
    except ParseError as exc:
        code, msg = EXIT_PARSE, f"parse error: {exc}"
    except IncompleteDataError as exc:
        code, msg = EXIT_INCOMPLETE, f"incomplete data: {exc}"
    except SingularDesignError as exc:
        code, msg = EXIT_RANK, f"rank deficiency: {exc}"
    except (ConfigError, NotImplementedError) as exc:
        code, msg = EXIT_CONFIG, f"invalid configuration: {exc}"
    except (DimensionError, NotInvertibleError, OSError) as exc:
        code, msg = EXIT_ERROR, f"error: {exc}"
    print(msg, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
