"""Configuration files: schema validation and construction of problems, families and plans.

A configuration is one JSON document with a `problem` section and optional
`family` and `plan` sections; see docs/schema/config.v1.json.  Scalar
functions of t are given as expression strings (numpy syntax, `^` allowed for
powers, the parameter `mu` available inside families), as Chebyshev
coefficient lists, or as step functions.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from . import boundary as bd
from . import funcspace as fs
from .approx import ApproximationPlan
from .bvpsolve import BvProblem
from .errors import ConfigError, GenBvpError
from .odecore import OdeSystem
from .paramlab import ParameterFamily

SCHEMA_NAME = "config.v1.json"

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "sinh": np.sinh, "cosh": np.cosh,
    "tanh": np.tanh, "arctan": np.arctan, "atan": np.arctan, "sign": np.sign,
    "heaviside": lambda x: np.heaviside(x, 1.0), "minimum": np.minimum, "maximum": np.maximum,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
    ast.Div: np.divide, ast.Pow: np.power,
}
_UNARY = {ast.USub: np.negative, ast.UAdd: np.positive}


def load_schema() -> dict:
    return json.loads(resources.files("genbvp").joinpath("schema", SCHEMA_NAME).read_text())


class Expression:
    """A whitelisted arithmetic expression in t (and optionally mu)."""

    def __init__(self, source: str, where: str = ""):
        self.source = source
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}", where) from None
        self._check(tree.body, where)
        self.tree = tree.body

    def _check(self, node, where):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name):
            if node.id not in _CONSTS and node.id not in ("t", "mu"):
                raise ConfigError(f"unknown name {node.id!r} in {self.source!r}", where)
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left, where)
            self._check(node.right, where)
            return
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            self._check(node.operand, where)
            return
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
            for arg in node.args:
                self._check(arg, where)
            return
        raise ConfigError(f"unsupported syntax in {self.source!r}", where)

    def uses_mu(self) -> bool:
        return any(isinstance(n, ast.Name) and n.id == "mu" for n in ast.walk(self.tree))

    def __call__(self, t, mu: Optional[float] = None):
        t = np.asarray(t, dtype=float)
        env = {"t": t, **_CONSTS}
        if mu is not None:
            env["mu"] = mu

        def ev(node):
            if isinstance(node, ast.Constant):
                return node.value
            if isinstance(node, ast.Name):
                if node.id not in env:
                    raise ConfigError(f"{node.id!r} is only defined inside a family", self.source)
                return env[node.id]
            if isinstance(node, ast.BinOp):
                return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
            if isinstance(node, ast.UnaryOp):
                return _UNARY[type(node.op)](ev(node.operand))
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])

        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(ev(self.tree), dtype=float), t.shape)
        if not np.all(np.isfinite(out)):
            raise ConfigError(f"expression {self.source!r} is not finite on the interval")
        return np.array(out)


# ---------------------------------------------------------------------------
# Functions


def _adaptive_piecewise(func, breaks) -> fs.PiecewisePolynomial:
    pieces = [fs.from_callable(func, fs.Interval(lo, hi)) for lo, hi in zip(breaks[:-1], breaks[1:])]
    d = max(p.degree for p in pieces)
    coeffs = np.stack([fs._pad_degree(p.coeffs, d)[0] for p in pieces])
    return fs._make(np.asarray(breaks, float), coeffs)


def scalar_function(spec: Any, interval: fs.Interval, mu: Optional[float], where: str) -> fs.FunctionRep:
    """1 x 1 function from a number, expression string or object spec."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return fs.constant(float(spec), interval)
    if isinstance(spec, str):
        spec = {"expr": spec}
    if not isinstance(spec, dict):
        raise ConfigError("function must be a number, string or object", where)
    rough = bool(spec.get("rough", False))
    if "expr" in spec:
        expr = Expression(spec["expr"], where)
        func = lambda t: expr(t, mu)  # noqa: E731
        breaks = [b for b in spec.get("breaks", []) if interval.a < b < interval.b]
        if breaks:
            out = _adaptive_piecewise(func, np.array([interval.a, *sorted(breaks), interval.b]))
        else:
            out = fs.from_callable(func, interval)
        out.rough = rough
        return out
    if "chebyshev" in spec:
        c = np.asarray(spec["chebyshev"], dtype=float)
        return fs.ChebyshevSeries(c.reshape(-1, 1, 1), interval, rough=rough)
    if "step" in spec:
        step = spec["step"]
        breaks = np.asarray(step["breaks"], dtype=float)
        vals = np.asarray(step["values"], dtype=float)
        if len(vals) != len(breaks) - 1:
            raise ConfigError("a step function needs one value per cell", where)
        if abs(breaks[0] - interval.a) > 1e-12 or abs(breaks[-1] - interval.b) > 1e-12:
            raise ConfigError("step breaks must span the interval", where)
        return fs.StepFunction(breaks, vals.reshape(-1, 1, 1), rough=rough)
    if "random_step" in spec:
        rs = spec["random_step"]
        rng = np.random.default_rng(int(rs.get("seed", 0)))
        cells = int(rs["cells"])
        vals = rng.choice([-1.0, 1.0], size=cells) * float(rs.get("amplitude", 1.0))
        breaks = interval.a + interval.length * np.arange(cells + 1) / cells
        return fs.StepFunction(breaks, vals.reshape(-1, 1, 1), rough=rough)
    raise ConfigError("function object needs one of expr, chebyshev, step, random_step", where)


def matrix_function(spec: Any, rows: int, cols: int, interval, mu, where: str) -> fs.FunctionRep:
    """rows x cols function from a nested list of scalar specs (a bare scalar when 1 x 1)."""
    if rows == 1 and cols == 1 and not isinstance(spec, list):
        return scalar_function(spec, interval, mu, where)
    if not isinstance(spec, list) or len(spec) != rows:
        raise ConfigError(f"expected a list of {rows} rows", where)
    out_rows = []
    for i, row in enumerate(spec):
        if not isinstance(row, list) or len(row) != cols:
            raise ConfigError(f"row {i} must have {cols} entries", where)
        entries = [scalar_function(x, interval, mu, f"{where}[{i}][{j}]") for j, x in enumerate(row)]
        out_rows.append(fs.stack_columns(entries) if cols > 1 else entries[0])
    return fs.stack_rows(out_rows) if rows > 1 else out_rows[0]


def vector_function(spec: Any, m: int, interval, mu, where: str) -> fs.FunctionRep:
    if m == 1 and not isinstance(spec, list):
        return scalar_function(spec, interval, mu, where)
    if not isinstance(spec, list) or len(spec) != m:
        raise ConfigError(f"expected {m} components", where)
    return matrix_function([[x] for x in spec], m, 1, interval, mu, where)


def _matrix(values, rows: int, cols: int, where: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0 or (arr.ndim == 1 and rows * cols == arr.size and (cols == 1 or rows == 1)):
        arr = arr.reshape(rows, cols)
    if arr.shape != (rows, cols):
        raise ConfigError(f"expected a {rows} x {cols} matrix, got shape {arr.shape}", where)
    return arr


# ---------------------------------------------------------------------------
# Boundary operators and problems


def build_boundary(spec: dict, index: fs.SobolevIndex, interval: fs.Interval, mu, where: str):
    kind = spec["kind"]
    rm, m, N = index.r * index.m, index.m, index.order
    if kind == "canonical":
        alphas = [_matrix(a, rm, m, f"{where}/alphas/{s}") for s, a in enumerate(spec["alphas"])]
        if len(alphas) != N:
            raise ConfigError(f"need n+r={N} alpha matrices", f"{where}/alphas")
        if "phi" in spec:
            phi = matrix_function(spec["phi"], rm, m, interval, mu, f"{where}/phi")
        else:
            phi = fs.zeros((rm, m), interval)
        return bd.CanonicalBoundaryOperator(float(spec.get("t0", interval.a)), tuple(alphas), phi, index)
    if kind == "multipoint":
        alphas = [_matrix(a, rm, m, f"{where}/alphas/{s}") for s, a in enumerate(spec["alphas"])]
        if len(alphas) != N:
            raise ConfigError(f"need n+r={N} alpha matrices", f"{where}/alphas")
        betas = np.array([_matrix(b, rm, m, f"{where}/betas/{j}") for j, b in enumerate(spec["betas"])])
        points = np.asarray(spec["points"], dtype=float)
        if len(points) != len(betas):
            raise ConfigError("points and betas must have equal length", where)
        return bd.MultipointBoundaryOperator(
            float(spec.get("t0", interval.a)), tuple(alphas), points, betas.reshape(len(points), rm, m), index, interval
        )
    if kind == "fractional":
        terms = tuple(
            bd.FractionalTerm(float(t["order"]), matrix_function(t["weight"], rm, m, interval, mu, f"{where}/terms/{i}/weight"))
            for i, t in enumerate(spec["terms"])
        )
        return bd.FractionalBoundaryOperator(terms, index)
    if kind == "points":
        rows = [
            [(int(c["order"]), float(c["at"]), np.asarray(c.get("weight", [1.0] * m), dtype=float)) for c in row]
            for row in spec["conditions"]
        ]
        return bd.point_conditions(index, interval, rows, spec.get("t0"))
    raise ConfigError(f"unknown boundary kind {kind!r}", where)


def build_problem(spec: dict, mu: Optional[float] = None, where: str = "/problem") -> BvProblem:
    a, b = spec["interval"]
    interval = fs.Interval(float(a), float(b))
    index = fs.SobolevIndex(int(spec.get("n", 0)), int(spec["r"]), int(spec.get("m", 1)), float(spec.get("p", 2)))
    r, m = index.r, index.m
    coeffs_spec = spec.get("coefficients", [0.0] * r)
    if len(coeffs_spec) != r:
        raise ConfigError(f"need r={r} coefficient matrices", f"{where}/coefficients")
    coeffs = tuple(matrix_function(c, m, m, interval, mu, f"{where}/coefficients/{j}") for j, c in enumerate(coeffs_spec))
    rhs = vector_function(spec.get("rhs", 0.0), m, interval, mu, f"{where}/rhs")
    boundary = build_boundary(spec["boundary"], index, interval, mu, f"{where}/boundary")
    target = _target_with_mu(spec, mu) if "target" in spec else np.zeros(r * m)
    if target.shape != (r * m,):
        raise ConfigError(f"target must have rm={r * m} entries", f"{where}/target")
    return BvProblem(OdeSystem(index, coeffs), rhs, boundary, target)


def _target_with_mu(spec: dict, mu: Optional[float]) -> np.ndarray:
    raw = spec.get("target", [])
    return np.array([float(Expression(x)(0.0, mu)) if isinstance(x, str) else float(x) for x in raw])


def build_family(doc: dict) -> ParameterFamily:
    """Family of problems from the `problem` section evaluated at each sampled mu."""
    fam = doc["family"]
    mu0 = float(fam.get("mu0", 0.0))
    values = [float(v) for v in fam["values"]]
    distances = fam.get("distances")
    if distances is not None and len(distances) != len(values):
        raise ConfigError("one distance per parameter value", "/family/distances")
    problems, points = {}, [("mu0", 0.0)]
    pspec = doc["problem"]
    for i, mu in enumerate([mu0] + values):
        label = "mu0" if i == 0 else repr(mu)
        problems[label] = build_problem(pspec, mu)
        if i:
            points.append((label, float(distances[i - 1]) if distances is not None else abs(mu - mu0)))
    return ParameterFamily(points, problems, "mu0")


def build_plan(doc: dict, target: BvProblem) -> ApproximationPlan:
    plan = doc["plan"]
    cells = plan.get("cells")
    return ApproximationPlan(target, tuple(plan["degrees"]), tuple(cells) if cells else None)


# ---------------------------------------------------------------------------
# Loading


def parse_document(text: str, source: str = "<config>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", f"{source}:{exc.lineno}:{exc.colno}") from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/" + "/".join(str(x) for x in err.absolute_path)
        raise ConfigError(err.message, path)
    return doc


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_document(text, str(path))


@dataclass(frozen=True)
class RunConfig:
    """Options of one CLI run.

    Attributes:
        command: solve, analyze, sweep or approximate.
        input_path: configuration file.
        output_dir: directory receiving the reports.
        tol: integrator tolerance.
        rank_tol: absolute rank threshold for the characteristic matrix; None
            selects rm * sigma_max * 1e-10.
        quad_tol: relative tolerance of norm quadratures.
        seed: seed of the probe generator.
        jobs: worker threads for independent solves.
        grid_points: number of sample points in CSV output.
    """

    command: str
    input_path: Path
    output_dir: Path
    tol: float = 1e-10
    rank_tol: Optional[float] = None
    quad_tol: float = fs.QUAD_TOL
    seed: int = 0
    jobs: int = 1
    grid_points: int = 201

    def __post_init__(self):
        if self.command not in ("solve", "analyze", "sweep", "approximate"):
            raise ConfigError(f"unknown command {self.command!r}")
        for name in ("tol", "quad_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.rank_tol is not None and not self.rank_tol > 0:
            raise ConfigError("rank_tol must be positive")
        if self.jobs < 1 or self.grid_points < 2:
            raise ConfigError("jobs >= 1 and grid >= 2 required")


def build_or_raise(func, *args):
    """Run a builder, mapping construction errors from the library onto ConfigError."""
    try:
        return func(*args)
    except ConfigError:
        raise
    except (GenBvpError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
