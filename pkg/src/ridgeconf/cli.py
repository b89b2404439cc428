"""Command-line front end: constants, estimate, region, coverage, truth.

Outputs are plot-ready data files (CSV, JSON, dense grids); each run also
writes its resolved configuration to ``config.json`` in the output folder.
Exit codes: 0 success, 2 usage error, 3 unreadable or malformed input,
4 failed precondition, 5 any other failure. Errors are reported as a JSON
object on standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .confidence import BN_MODES, TARGETS, RegionParams, build_region
from .coverage import ExperimentPlan, oracle_ridge, run_coverage, run_gumbel_check
from .density import true_ridge
from .errors import InputFormatError, RidgeConfError
from .kde import EvalGrid
from .kernel import KernelSpec, kernel_constants
from .ridge import RidgeSet, find_ridge, link_polyline

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_PRECONDITION = 4
EXIT_OTHER = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _box(text: str | None, d: int | None = None):
    if text is None:
        return None
    vals = [float(v) for v in text.split(",")]
    if len(vals) % 2 or (d is not None and len(vals) != 2 * d):
        raise UsageError("--box expects lo1,hi1,lo2,hi2,...")
    return np.array(vals).reshape(-1, 2)


def _sample_box(points: np.ndarray, pad: float) -> np.ndarray:
    return np.stack([points.min(axis=0) - pad, points.max(axis=0) + pad], axis=1)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return cfg


def _ridge_rows(rs: RidgeSet) -> tuple[np.ndarray, list[str]]:
    d, r = rs.d, rs.r
    cols = [rs.points, rs.lambda_rp1[:, None], rs.proj_grad_norm[:, None]]
    header = [f"x{i + 1}" for i in range(d)] + ["lambda_rp1", "proj_grad_norm"]
    cols.append(rs.tangents.reshape(rs.m, d * r))
    header += [f"t{k + 1}_{i + 1}" for i in range(d) for k in range(r)]
    return np.hstack(cols) if rs.m else np.zeros((0, len(header))), header


def _write_ridge(out: Path, name: str, rs: RidgeSet, meta: dict):
    rows, header = _ridge_rows(rs)
    io.write_csv(out / f"{name}.csv", rows, header)
    if rs.r == 1 and rs.m:
        link_polyline(rs)
    meta = dict(meta)
    meta["report"] = rs.report
    meta["resolution"] = rs.resolution
    if rs.polylines:
        meta["polylines"] = [
            {"indices": pl.indices.tolist(), "closed": pl.closed} for pl in rs.polylines
        ]
        meta["total_length"] = rs.length
    io.write_json(out / f"{name}.json", meta)


def cmd_constants(args) -> dict:
    c = kernel_constants(KernelSpec(args.dim, args.exponent), args.level)
    result = c.as_dict()
    if args.out:
        out = _outdir(args)
        io.write_json(out / "constants.json", result)
        io.write_json(out / "config.json", _config(args))
    return result


def cmd_estimate(args) -> dict:
    smp = io.read_sample(args.input)
    spec = KernelSpec(smp.d, args.exponent)
    box = _box(args.box, smp.d)
    if box is None:
        box = _sample_box(smp.points, args.h)
    seeds = args.grid if args.grid is not None else args.h / 4
    rs = find_ridge(smp, spec, args.h, args.r, seeds=seeds, box=box, conv_tol=args.tol,
                    max_iter=args.max_iter, with_diagnostics=False)
    out = _outdir(args)
    _write_ridge(out, "ridge", rs, {"h": args.h, "r": args.r, "box": box.tolist(), "n": smp.n})
    io.write_json(out / "config.json", _config(args))
    return {"points": rs.m, **rs.report}


def _region_params(args, n: int, d: int) -> RegionParams:
    return RegionParams(
        alpha=args.alpha, n=n, d=d, r=args.r, h=args.h, l=args.l, bn_mode=args.bn_mode,
        combined=args.combined, eta=args.eta, mu_exponent=args.mu_exp, nu_exponent=args.nu_exp,
        target=args.target,
    )


def cmd_region(args) -> dict:
    smp = io.read_sample(args.input)
    spec = KernelSpec(smp.d, args.exponent)
    params = _region_params(args, smp.n, smp.d)
    box = _box(args.box, smp.d)
    if box is None:
        box = _sample_box(smp.points, 0.0)
    grid = EvalGrid.covering(box, args.grid)
    region = build_region(smp, spec, params, grid, box=box, workers=max(1, args.threads))
    out = _outdir(args)
    io.write_grid(out / "region_grid", grid, {
        "mask": region.mask.astype(float),
        "plain_mask": region.plain_mask.astype(float),
        "stat": region.stat_field,
        "lambda_rp1": region.lambda_field,
        "grad_norm": region.gradnorm_field,
    })
    summary = region.summary()
    io.write_json(out / "region.json", summary)
    io.write_json(out / "config.json", _config(args))
    return summary


def cmd_coverage(args) -> dict:
    model = io.read_model(args.model)
    spec = KernelSpec(model.d, args.exponent)
    params = RegionParams(
        alpha=args.alpha, n=args.n, d=model.d, r=args.r, h=args.h, l=args.l, bn_mode=args.bn_mode,
        combined=args.combined, target=args.target,
    )
    plan = ExperimentPlan(model, params, args.replicates, args.probe_resolution, args.seed, spec,
                          oracle_spacing=args.oracle_spacing)
    out = _outdir(args)
    if args.check == "gumbel":
        rep = run_gumbel_check(plan)
        result = rep.to_dict()
        io.write_csv(out / "replicates.csv", np.column_stack([np.arange(len(rep.z)), rep.sup_stats, rep.z]),
                     ["replicate", "sup_stat", "z"])
    else:
        rep = run_coverage(plan)[0]
        result = rep.to_dict()
        io.write_csv(
            out / "replicates.csv",
            np.column_stack([np.arange(rep.B), rep.covered, rep.sup_stats, rep.a_n, rep.c_hat]),
            ["replicate", "covered", "sup_stat", "a_n", "c_hat"],
        )
    # wall time varies between runs; keep it out of the files so re-runs are byte-identical
    sys.stderr.write(json.dumps({"runtime_seconds": result.pop("runtime_seconds")}) + "\n")
    io.write_json(out / "report.json", result)
    io.write_json(out / "config.json", _config(args))
    return result


def cmd_truth(args) -> dict:
    model = io.read_model(args.model)
    box = _box(args.box, model.d)
    if box is not None:
        model = type(model)(model.components, box)
    spec = KernelSpec(model.d, args.exponent)
    rs = true_ridge(model, args.r, args.spacing, spec=spec if args.h else None, h=args.h)
    out = _outdir(args)
    _write_ridge(out, "ridge", rs, {"r": args.r, "h": args.h, "box": model.domain_box.tolist()})
    io.write_json(out / "config.json", _config(args))
    return {"points": rs.m, **rs.report}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ridgeconf", description="Confidence regions for density ridges.")
    p.add_argument("--threads", type=int, default=1, help="worker cap for grid evaluation")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("constants", help="kernel constants")
    c.add_argument("--dim", type=int, required=True)
    c.add_argument("--exponent", type=int, default=5)
    c.add_argument("--quad-level", "--level", dest="level", type=int, default=12, help="ball quadrature level")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_constants)

    def common(q, needs_input=True):
        if needs_input:
            q.add_argument("--input", required=True, help="sample CSV")
        q.add_argument("--h", type=float, required=True)
        q.add_argument("--r", type=int, default=1)
        q.add_argument("--exponent", type=int, default=5)
        q.add_argument("--box", default=None, help="lo1,hi1,lo2,hi2,...")
        q.add_argument("--out", default=".")

    e = sub.add_parser("estimate", help="estimated ridge of the KDE")
    common(e)
    e.add_argument("--grid", type=float, default=None, help="seed spacing (default h/4)")
    e.add_argument("--tol", type=float, default=1e-9)
    e.add_argument("--max-iter", type=int, default=100)
    e.set_defaults(func=cmd_estimate)

    def region_flags(q):
        q.add_argument("--alpha", type=float, default=0.1)
        q.add_argument("--l", type=float, default=None)
        q.add_argument("--target", choices=TARGETS, default="mh")
        q.add_argument("--bn-mode", choices=BN_MODES, default="zero")
        q.add_argument("--combined", action="store_true")

    g = sub.add_parser("region", help="confidence region on a grid")
    common(g)
    region_flags(g)
    g.add_argument("--eta", type=float, default=0.5)
    g.add_argument("--mu-exp", type=float, default=0.5)
    g.add_argument("--nu-exp", type=float, default=0.5)
    g.add_argument("--grid", type=float, required=True, help="grid spacing")
    g.set_defaults(func=cmd_region)

    v = sub.add_parser("coverage", help="Monte Carlo coverage or Gumbel check")
    v.add_argument("--model", required=True)
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--h", type=float, required=True)
    v.add_argument("--r", type=int, default=1)
    v.add_argument("--exponent", type=int, default=5)
    region_flags(v)
    v.add_argument("--replicates", type=int, default=200)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--check", choices=("coverage", "gumbel"), default="coverage")
    v.add_argument("--probe-resolution", type=float, default=0.01)
    v.add_argument("--oracle-spacing", type=float, default=0.05)
    v.add_argument("--out", default=".")
    v.set_defaults(func=cmd_coverage)

    t = sub.add_parser("truth", help="ridge of a Gaussian mixture (or of its smoothed version)")
    t.add_argument("--model", required=True)
    t.add_argument("--r", type=int, default=1)
    t.add_argument("--h", type=float, default=None, help="trace the ridge of f_h instead of f")
    t.add_argument("--exponent", type=int, default=5)
    t.add_argument("--spacing", type=float, default=0.05)
    t.add_argument("--box", default=None)
    t.add_argument("--out", default=".")
    t.set_defaults(func=cmd_truth)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def dispatch(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        result = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, "usage", str(exc))
    except InputFormatError as exc:
        return _fail(EXIT_INPUT, "input", str(exc))
    except (RidgeConfError, ValueError) as exc:
        return _fail(EXIT_PRECONDITION, "precondition", str(exc))
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to an exit code
        return _fail(EXIT_OTHER, type(exc).__name__, str(exc))
    sys.stdout.write(io.dumps(result))
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
