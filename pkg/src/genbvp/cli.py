"""Command-line front end.

    genbvp solve       --input cfg.json --out DIR   # solution.json, samples.csv
    genbvp analyze     --input cfg.json --out DIR   # analysis.json
    genbvp sweep       --input cfg.json --out DIR   # sweep.csv, sweep.json
    genbvp approximate --input cfg.json --out DIR   # convergence.csv, convergence.json

Exit status: 0 success, 2 singular problem, 3 configuration error,
4 numerical failure.  Failures also write diagnostics.json to the output
directory and print it to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import funcspace as fs
from .approx import convergence_study, study_summary
from .bvpsolve import PreparedOperator
from .config import RunConfig, build_family, build_or_raise, build_plan, build_problem, load_document
from .errors import ConfigError, GenBvpError, SingularProblem
from .paramlab import two_sided_estimate

EXIT_OK, EXIT_SINGULAR, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# Output


def fmt(x) -> str:
    """Float with 17 significant digits; non-finite values spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


class _Raw(str):
    pass


def _prepare(obj):
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        return _Raw(fmt(obj) if math.isfinite(obj) else json.dumps(fmt(obj)))
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, complex):
        return [_prepare(obj.real), _prepare(obj.imag)]
    if isinstance(obj, dict):
        return {str(k): _prepare(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_prepare(v) for v in obj]
    return obj


def dumps(obj) -> str:
    """JSON text with every float at 17 significant digits and sorted keys."""

    def enc(o, indent):
        pad = "  " * (indent + 1)
        if isinstance(o, _Raw):
            return str(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(v, indent + 1)}" for k, v in sorted(o.items())]
            return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, indent + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, indent + 1) for v in o) + "\n" + "  " * indent + "]"
        return json.dumps(o)

    return enc(_prepare(obj), 0) + "\n"


def write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj))


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue(), newline="")


def _function_dict(F: fs.FunctionRep) -> dict:
    coeffs = F.coeffs
    out = {"breaks": F.breaks.tolist(), "shape": list(F.shape), "degree": F.degree}
    if np.iscomplexobj(coeffs):
        out["coefficients_real"] = coeffs.real.tolist()
        out["coefficients_imag"] = coeffs.imag.tolist()
    else:
        out["coefficients"] = coeffs.tolist()
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_solve(cfg: RunConfig, doc: dict) -> int:
    problem = build_or_raise(build_problem, doc["problem"])
    prep = PreparedOperator(problem.system, problem.boundary, cfg.tol, cfg.rank_tol)
    sol = prep.solve(problem.rhs, problem.target)
    index = problem.index
    N, p = index.order, index.p
    norm = fs.sobolev_norm(sol.derivs, N, p, tol=cfg.quad_tol)
    write_json(
        cfg.output_dir / "solution.json",
        {
            "status": "ok",
            "index": {"n": index.n, "r": index.r, "m": index.m, "p": fmt(p) if math.isinf(p) else p},
            "y": _function_dict(sol.y),
            "constants": [complex(z) if np.iscomplexobj(sol.constants) else float(z) for z in sol.constants],
            "residual_ode": sol.residual_ode,
            "residual_boundary": sol.residual_boundary,
            "sobolev_norm": norm,
            "characteristic_matrix": prep.char_matrix.to_dict(),
        },
    )
    t = np.linspace(problem.interval.a, problem.interval.b, cfg.grid_points)
    m = index.m
    header = ["t"] + [f"y{s}_{i}" for s in range(N + 1) for i in range(m)]
    cols = [t] + [sol.derivs[s](t)[:, i, 0] for s in range(N + 1) for i in range(m)]
    if any(np.iscomplexobj(c) for c in cols):
        header = ["t"] + [f"{h}_{part}" for h in header[1:] for part in ("re", "im")]
        cols = [t] + [x for c in cols[1:] for x in (np.real(c), np.imag(c))]
    write_csv(cfg.output_dir / "samples.csv", header, zip(*[np.asarray(c, float) for c in cols]))
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, doc: dict) -> int:
    problem = build_or_raise(build_problem, doc["problem"])
    prep = PreparedOperator(problem.system, problem.boundary, cfg.tol, cfg.rank_tol)
    report = prep.char_matrix.to_dict()
    report["well_posed"] = prep.char_matrix.well_posed
    write_json(cfg.output_dir / "analysis.json", report)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, doc: dict) -> int:
    if "family" not in doc:
        raise ConfigError("sweep needs a family section", "/family")
    family = build_or_raise(build_family, doc)
    degree = int(doc["family"].get("probe_degree", 12))
    report = two_sided_estimate(family, cfg.tol, jobs=cfg.jobs, probe_degree=degree)
    write_csv(
        cfg.output_dir / "sweep.csv",
        ["label", "distance", "d_tilde", "solution_error", "ratio"],
        [(r.label, r.distance, r.d_tilde, r.solution_error, r.ratio) for r in report.rows],
    )
    write_json(
        cfg.output_dir / "sweep.json",
        {
            "verdict": report.verdict,
            "gamma_lo": report.gamma_lo,
            "gamma_hi": report.gamma_hi,
            "trust_radius": report.trust_radius,
            "solvable": {r.label: r.solvable for r in report.rows},
            "limitI_norms": report.limitI_norms,
            "limitII_probe_errors": report.limitII_probe_errors,
        },
    )
    return EXIT_OK


def cmd_approximate(cfg: RunConfig, doc: dict) -> int:
    if "plan" not in doc:
        raise ConfigError("approximate needs a plan section", "/plan")
    target = build_or_raise(build_problem, doc["problem"])
    plan = build_or_raise(build_plan, doc, target)
    probes = int(doc["plan"].get("probes", 4))
    spikes = doc["plan"].get("spikes")
    rows = convergence_study(plan, probes, cfg.seed, cfg.tol, cfg.jobs, spikes)
    write_csv(
        cfg.output_dir / "convergence.csv",
        ["k", "coeff_error", "rhs_error", "boundary_gap", "solution_error", "inverse_gap", "well_posed"],
        [
            (r.k, r.coeff_error, r.rhs_error, r.boundary_gap, r.solution_error, r.inverse_gap, str(r.well_posed).lower())
            for r in rows
        ],
    )
    summary = study_summary(rows, target.index.p)
    summary["cells"] = list(plan.cells)
    summary["seed"] = cfg.seed
    write_json(cfg.output_dir / "convergence.json", summary)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "analyze": cmd_analyze, "sweep": cmd_sweep, "approximate": cmd_approximate}


def _diagnose(cfg_out: Optional[Path], code: int, exc: BaseException) -> int:
    diag = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        diag["where"] = exc.where
    if isinstance(exc, SingularProblem):
        diag.update(dim_ker=exc.dim_ker, dim_coker=exc.dim_coker, condition=exc.condition)
    text = dumps(diag)
    sys.stderr.write(text)
    if cfg_out is not None:
        try:
            cfg_out.mkdir(parents=True, exist_ok=True)
            (cfg_out / "diagnostics.json").write_text(text)
        except OSError:
            pass
    return code


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the exit status."""
    try:
        doc = load_document(cfg.input_path)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[cfg.command](cfg, doc)
    except SingularProblem as exc:
        return _diagnose(cfg.output_dir, EXIT_SINGULAR, exc)
    except ConfigError as exc:
        return _diagnose(cfg.output_dir, EXIT_CONFIG, exc)
    except (GenBvpError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _diagnose(cfg.output_dir, EXIT_NUMERIC, exc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genbvp", description="Linear boundary-value problems with generic boundary conditions.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--input", required=True, type=Path, help="JSON configuration file")
    parser.add_argument("--out", default=Path("out"), type=Path, help="output directory")
    parser.add_argument("--tol", type=float, default=1e-10, help="integrator tolerance")
    parser.add_argument("--rank-tol", type=float, default=None, help="absolute rank threshold for M(L,B)")
    parser.add_argument("--quad-tol", type=float, default=fs.QUAD_TOL, help="norm quadrature tolerance")
    parser.add_argument("--seed", type=int, default=0, help="probe generator seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads")
    parser.add_argument("--grid", type=int, default=201, help="sample points in CSV output")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            command=args.command,
            input_path=args.input,
            output_dir=args.out,
            tol=args.tol,
            rank_tol=args.rank_tol,
            quad_tol=args.quad_tol,
            seed=args.seed,
            jobs=args.jobs,
            grid_points=args.grid,
        )
    except ConfigError as exc:
        return _diagnose(None, EXIT_CONFIG, exc)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
