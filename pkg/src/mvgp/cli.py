"""Command-line entry point ``mvgp``.

Subcommands: ``fit``, ``predict``, ``sample``, ``simulate-bm`` and
``check``. Exit status is 1 for invalid input and 2 for numerical
failures (a covariance that cannot be factorized); messages go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import brownian, checks, mvgpr, process
from .io import DatasetError, DatasetFile, parse_dataset, read_table
from .linalg import NotPositiveDefiniteError
from .mvgpr import FitConfig


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _floats(value: str) -> list[float]:
    try:
        return [float(v) for v in _split(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from None


def _load_json_arg(value: str):
    """Inline JSON, or a path to a JSON file."""
    path = Path(value)
    if path.exists():
        return json.loads(path.read_text())
    return json.loads(value)


def _lambda_arg(value: str | None, d: int) -> np.ndarray:
    if value is None:
        return np.eye(d)
    lam = np.asarray(_load_json_arg(value), dtype=float)
    if lam.shape != (d, d):
        raise ValueError(f"--lambda must be a {d}x{d} matrix, got shape {lam.shape}")
    return lam


def _stamp(payload: dict, args) -> dict:
    if not args.no_timestamp:
        payload["created"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return payload


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_fit(args) -> int:
    spec = DatasetFile(Path(args.data), _split(args.inputs), _split(args.outputs), args.delimiter)
    data = parse_dataset(spec)
    config = FitConfig(
        max_iterations=args.max_iter,
        gradient_tolerance=args.tol,
        restarts=args.restarts,
        seed=args.seed,
        noise_variance=args.noise_variance,
    )
    model, report = mvgpr.fit(data, args.kernel, config)
    extra = {"columns": {"inputs": spec.inputs, "outputs": spec.outputs}}
    mvgpr.save_model(model, args.out, report, extra=_stamp(extra, args))
    report_path = Path(args.report) if args.report else Path(args.out).with_suffix(".report.json")
    summary = {
        "nll": mvgpr.nll(model),
        "parameters": dict(zip(model.parameter_names(), model.parameters().tolist())),
        "lambda": model.lam.tolist(),
        **report.to_dict(),
    }
    _write_json(report_path, _stamp(summary, args))
    print(f"fitted {args.kernel} model: nll={summary['nll']:.6g} -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    model, payload = mvgpr.load_model(args.model)
    cols = payload.get("columns", {})
    in_names = cols.get("inputs") or [f"x{i + 1}" for i in range(model.data.p)]
    out_names = cols.get("outputs") or [f"y{j + 1}" for j in range(model.data.d)]
    _, xs = read_table(args.data, args.delimiter, True, _split(args.inputs) if args.inputs else in_names)
    pred = mvgpr.predict(model, xs, latent=args.latent)
    sd = pred.stddev()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(in_names) + [f"mean_{o}" for o in out_names] + [f"sd_{o}" for o in out_names])
        for x, m, s in zip(pred.X, pred.mean, sd):
            w.writerow([repr(float(v)) for v in (*x, *m, *s)])
    if args.cov_out:
        _write_json(args.cov_out, {"row_cov": pred.row_cov.tolist(), "col_cov": pred.col_cov.tolist()})
    return 0


def _grid_arg(args) -> np.ndarray:
    if args.times:
        return np.asarray(_floats(args.times))[:, None]
    if args.data:
        return read_table(args.data, args.delimiter, True, _split(args.inputs) if args.inputs else None)[1]
    raise ValueError("a grid is required: pass --times or --data")


def cmd_sample(args) -> int:
    mgp = process.MultivariateGP.from_dict(_load_json_arg(args.model))
    ens = process.sample_paths(mgp, _grid_arg(args), args.count, args.seed)
    ens.to_csv(args.out)
    return 0


def cmd_simulate_bm(args) -> int:
    times = _floats(args.times)
    config = brownian.BrownianConfig(times, _lambda_arg(args.lambda_, args.d), args.count, args.seed)
    ens = brownian.simulate(config, args.method)
    ens.to_csv(args.out)
    if args.intervals:
        intervals = [tuple(int(v) for v in pair.split(":")) for pair in _split(args.intervals)]
    else:
        intervals = brownian.default_intervals(len(times))
    report = brownian.increment_report(ens, config.lam, intervals)
    report_path = Path(args.report) if args.report else Path(args.out).with_suffix(".increments.json")
    _write_json(report_path, _stamp(report.to_dict(), args))
    report.write_csv(report_path.with_suffix(".csv"))
    print(f"max increment deviation: {report.max_z:.3f} standard errors")
    return 0


def cmd_check(args) -> int:
    results = checks.run_checks(args.seed, _split(args.only) if args.only else None)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        detail = ", ".join(f"{k}={checks._fmt(v)}" for k, v in r.details.items())
        timing = "" if args.no_timestamp else f" {r.seconds:7.2f}s"
        print(f"{r.name:<{width}}  {status}{timing}  {detail}")
    return 0 if all(r.ok for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvgp", description="Multivariate Gaussian process tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-timestamp", action="store_true", help="omit timestamps from outputs")
        p.add_argument("--delimiter", default=",")

    p = sub.add_parser("fit", help="fit an MV-GPR model to a CSV dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--inputs", required=True, help="comma-separated input column names")
    p.add_argument("--outputs", required=True, help="comma-separated output column names")
    p.add_argument("--kernel", default="squared_exponential", help="squared_exponential (se), min or linear")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--report", help="fit-report JSON path (default: <out>.report.json)")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--noise-variance", type=float, help="hold the noise variance fixed at this value")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict at the inputs of a CSV file")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--inputs", help="input column names (default: those used in fit)")
    p.add_argument("--out", required=True)
    p.add_argument("--cov-out", help="also write the full predictive covariance factors as JSON")
    p.add_argument("--latent", action="store_true", help="report noise-free function-value uncertainty")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sample", help="sample paths of a process spec on a grid")
    common(p)
    p.add_argument("--model", "--process", dest="model", required=True, help="process spec JSON (inline or path)")
    p.add_argument("--times", help="comma-separated scalar grid")
    p.add_argument("--data", help="CSV holding grid points")
    p.add_argument("--inputs", help="grid columns in --data")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate-bm", help="simulate d-variate pre-Brownian motion")
    common(p)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--times", required=True)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--lambda", dest="lambda_", help="d x d parameter matrix (inline JSON or path)")
    p.add_argument("--method", default="cholesky_joint", choices=[m.value for m in brownian.Method])
    p.add_argument("--intervals", help="grid-index pairs such as 0:1,1:2 (default: consecutive + full span)")
    p.add_argument("--out", required=True, help="path CSV")
    p.add_argument("--report", help="increment report JSON (a .csv is written alongside)")
    p.set_defaults(func=cmd_simulate_bm)

    p = sub.add_parser("check", help="run the property suite")
    common(p)
    p.add_argument("--only", help="comma-separated check names")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NotPositiveDefiniteError as exc:
        print(f"mvgp: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"mvgp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
