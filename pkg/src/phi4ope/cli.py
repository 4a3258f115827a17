"""Command-line front end: ``compute``, ``verify`` and ``table``.

Output of ``compute`` is a JSON document with every float printed at 17
significant digits, so identical jobs give byte-identical files.  Wall-clock
timing is only included on request (``--timing``) for the same reason.

Exit codes: 0 ok, 1 usage or input error, 2 computation failure or a
numeric result that did not reach its tolerance, 3 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .checks import SUITES, run_suite
from .core import CompositeOp, DomainError, OpSpecError, PointConfig, enumerate_basis, parse_op, two_points
from .deform import METHODS, ENGINES, CoeffResult, CoeffTable, Key, NumericSettings, SymbolicUnavailable, coefficient
from .expr import DivergenceError
from .quad import QuadratureError
from .wick import vanishes_by_counting

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_VERIFY = 0, 1, 2, 3

_ALL_RE = re.compile(r"^all\s*<=\s*(\d+)$")


class UsageError(ValueError):
    """Bad input that the user has to fix (exit code 1)."""


@dataclass
class JobConfig:
    ops: list[str] = field(default_factory=list)
    points: list[list[float]] = field(default_factory=list)
    target: str = "phi^2"
    order: int = 1
    method: str = "auto"
    mass: float = 1.0
    engine: str = "cubature"
    rho_frac: float = 0.4
    r_far: float | None = None
    rel_tol: float = 1e-4
    max_evals: int = 200_000_000
    mc_samples: int = 20_000
    inner_samples: int = 1_000
    seed: int = 0
    excision: float = 0.0
    slopes: bool = True
    timing: bool = False
    output: str | None = None

    def settings(self) -> NumericSettings:
        return NumericSettings(
            engine=self.engine, rho_frac=self.rho_frac, r_far=self.r_far, rel_tol=self.rel_tol,
            max_evals=self.max_evals, mc_samples=self.mc_samples, inner_samples=self.inner_samples,
            seed=self.seed, excision=self.excision,
        )

    def validate(self) -> tuple[list[CompositeOp], PointConfig]:
        ops = [parse_op(s) for s in self.ops]
        if not ops:
            raise UsageError("ops: at least one operator is required")
        if len(self.points) != len(ops):
            raise UsageError(f"points: need one point per operator ({len(ops)}), got {len(self.points)}")
        if self.order not in (0, 1, 2):
            raise UsageError(f"order: must be 0, 1 or 2, got {self.order}")
        if self.method not in METHODS:
            raise UsageError(f"method: must be one of {', '.join(METHODS)}")
        if self.engine not in ENGINES:
            raise UsageError(f"engine: must be one of {', '.join(ENGINES)}")
        if not self.mass > 0:
            raise UsageError(f"mass: must be positive, got {self.mass}")
        try:
            cfg = PointConfig(np.array(self.points, dtype=float))
        except DomainError as exc:
            raise UsageError(f"points: {exc}") from exc
        except ValueError as exc:
            raise UsageError(f"points: {exc}") from exc
        return ops, cfg


# -- parsing helpers -----------------------------------------------------------


def parse_point(text: str) -> list[float]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != 4:
        raise UsageError(f"point {text!r}: expected 4 comma-separated coordinates")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"point {text!r}: {exc}") from exc


def parse_points(text: str) -> list[list[float]]:
    """'a,b,c,d; e,f,g,h' -> list of 4-vectors."""
    return [parse_point(chunk) for chunk in text.split(";") if chunk.strip()]


_CONFIG_KEYS = {f.name: f for f in fields(JobConfig)}
_CONFIG_KEYS.pop("points")


def _key_line(text: str, section: str, key: str) -> int:
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return lineno
    return 0


def _convert(name: str, raw: str):
    f = _CONFIG_KEYS[name]
    kind = str(f.type)
    if name == "ops":
        return [s for s in re.split(r"[,\s]+", raw.strip()) if s]
    if kind.startswith("bool"):
        low = raw.strip().lower()
        if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
            raise ValueError(f"not a boolean: {raw!r}")
        return low in ("true", "yes", "1", "on")
    if kind.startswith("int"):
        x = float(raw)  # accepts 2e8
        if not x.is_integer():
            raise ValueError(f"not an integer: {raw!r}")
        return int(x)
    if kind.startswith("float"):
        return None if raw.strip().lower() in ("", "none") else float(raw)
    return raw.strip()


def load_config(path: str) -> dict:
    """Read a sectioned key-value file; all sections are merged into one job.

    Keys are the JobConfig field names; ``points`` is a semicolon-separated
    list of 4-vectors.  Errors name the file line that caused them.
    """
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from exc
    values: dict = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            line = _key_line(text, section, key)
            where = f"{path}, line {line}"
            try:
                if key == "points":
                    values["points"] = parse_points(raw)
                elif key in _CONFIG_KEYS:
                    values[key] = _convert(key, raw)
                else:
                    raise UsageError(f"unknown key {key!r}")
                if key == "ops":
                    for s in values["ops"]:
                        parse_op(s, line=line)
                if key == "target" and not _ALL_RE.match(values["target"]):
                    parse_op(values["target"], line=line)
            except OpSpecError as exc:
                raise UsageError(f"{path}: {exc}") from exc
            except (UsageError, ValueError) as exc:
                raise UsageError(f"{where}: {key}: {exc}") from exc
    return values


# -- output --------------------------------------------------------------------


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return json.dumps(str(x))
    return format(x, ".17g")


def to_document(obj, indent: int = 0) -> str:
    """JSON text with floats at 17 significant digits and keys in given order."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {to_document(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(to_document(v) for v in obj) + "]"
        items = [f"{inner}{to_document(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    return json.dumps(str(obj))


def result_entry(res: CoeffResult, timing: bool) -> dict:
    entry = {
        "target": res.target.spec(),
        "order": res.order,
        "method": res.method,
        "symbolic": None if res.expr is None else res.expr.to_text(),
        "value": res.value,
        "abs_error": res.abs_error,
        "converged": res.converged,
        "experimental": res.experimental,
        "n_evals": res.n_evals,
        "breakdown": dict(res.breakdown),
    }
    diag = {}
    for k, v in res.diagnostics.items():
        if k == "uv_slopes":
            diag[k] = {f"x{j + 1}": s for j, s in sorted(v.items())}
        else:
            diag[k] = v
    entry["diagnostics"] = diag
    if timing:
        entry["elapsed_seconds"] = res.elapsed
    return entry


def targets_for(spec: str, ops: list[CompositeOp], order: int) -> list[CompositeOp]:
    m = _ALL_RE.match(spec.strip())
    if not m:
        return [parse_op(spec)]
    dmax = int(m.group(1))
    return [t for t in enumerate_basis(dmax, include_odd=True) if not vanishes_by_counting(ops, t)]


def run_compute(job: JobConfig) -> tuple[dict, int]:
    """Run one job; returns the document and the exit code it implies."""
    ops, cfg = job.validate()
    targets = targets_for(job.target, ops, job.order)
    table = CoeffTable()
    settings = job.settings()
    entries = []
    code = EXIT_OK
    listing = bool(_ALL_RE.match(job.target.strip()))
    for t in targets:
        # a listing shows only entries that are not exactly zero
        if listing and table.is_zero(Key(tuple(ops), t, job.order)):
            continue
        res = coefficient(ops, cfg, t, job.order, job.method, mass=job.mass, settings=settings, table=table,
                          slopes=job.slopes)
        if not res.converged:
            code = EXIT_COMPUTE
        entries.append(result_entry(res, job.timing))
    doc = {
        "tool": "phi4ope",
        "version": __version__,
        "job": {
            "mass": job.mass,
            "ops": [op.spec() for op in ops],
            "points": [list(map(float, p)) for p in cfg.points],
            "target": job.target,
            "order": job.order,
            "method": job.method,
            "quadrature": {
                "engine": job.engine,
                "rho_frac": job.rho_frac,
                "r_far": job.r_far,
                "rel_tol": job.rel_tol,
                "max_evals": job.max_evals,
                "mc_samples": job.mc_samples,
                "inner_samples": job.inner_samples,
                "seed": job.seed,
                "excision": job.excision,
            },
        },
        "results": entries,
    }
    return doc, code


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_job_flags(p: argparse.ArgumentParser, table: bool = False) -> None:
    p.add_argument("--config", help="sectioned key-value file with job fields; flags override it")
    p.add_argument("--ops", nargs="+", help="operator specs, e.g. phi phi^3 or phi*d1phi")
    p.add_argument("--points", nargs="+", help="one 4-vector per operator, e.g. 1,0,0,0 0,0,0,0")
    p.add_argument("--target", help="operator spec or all<=D")
    p.add_argument("--order", type=int)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--mass", type=float)
    p.add_argument("--engine", choices=ENGINES)
    p.add_argument("--rho-frac", type=float)
    p.add_argument("--r-far", type=float)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--max-evals", type=int)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--inner-samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--excision", type=float)
    p.add_argument("--no-slopes", dest="slopes", action="store_const", const=False, default=None,
                   help="skip the UV/IR slope diagnostics")
    p.add_argument("--output", "-o", help="write the result here instead of stdout")
    if not table:
        p.add_argument("--timing", action="store_const", const=True, default=None,
                       help="include wall-clock time per entry (breaks byte-identical output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phi4ope", description="OPE coefficients of massive Euclidean phi^4 theory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    comp = sub.add_parser("compute", help="compute one coefficient or a table of targets")
    _add_job_flags(comp)
    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("suite", choices=sorted(SUITES))
    tab = sub.add_parser("table", help="CSV over a grid of separations and masses")
    _add_job_flags(tab, table=True)
    tab.add_argument("--separations", nargs="+", type=float, required=True,
                     help="two operators: |x1-x2|; otherwise a scale applied to --points")
    tab.add_argument("--masses", nargs="+", type=float)
    return parser


def job_from_args(args, default_points: bool = True) -> JobConfig:
    values = load_config(args.config) if args.config else {}
    for name in _CONFIG_KEYS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if args.points is not None:
        values["points"] = [parse_point(p) for p in args.points]
    if "ops" in values:
        values["ops"] = list(values["ops"])
    job = JobConfig(**values)
    if default_points and not job.points and len(job.ops) == 2:
        # default two-operator configuration at unit separation
        job.points = [list(p) for p in two_points(1.0).points]
    return job


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_compute(args) -> int:
    job = job_from_args(args)
    doc, code = run_compute(job)
    _emit(to_document(doc) + "\n", job.output)
    return code


def _cmd_table(args) -> int:
    job = job_from_args(args, default_points=False)
    explicit = bool(job.points)
    if not explicit:
        job.points = [list(p) for p in two_points(1.0).points]
    ops, cfg = job.validate()
    if not explicit and len(ops) != 2:
        raise UsageError("points: required unless there are exactly two operators")
    if _ALL_RE.match(job.target.strip()):
        raise UsageError("target: table mode needs a single operator")
    masses = args.masses or [job.mass]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["separation", "mass", "target", "order", "value", "err"])
    code = EXIT_OK
    table = CoeffTable()
    for m in masses:
        if not m > 0:
            raise UsageError(f"masses: must be positive, got {m}")
        for s in args.separations:
            if not s > 0:
                raise UsageError(f"separations: must be positive, got {s}")
            pts = cfg.scaled(s) if explicit else two_points(s)
            res = coefficient(ops, pts, job.target, job.order, job.method, mass=m,
                              settings=job.settings(), table=table, slopes=False)
            if not res.converged:
                code = EXIT_COMPUTE
            writer.writerow([fmt_float(s), fmt_float(m), res.target.spec(), res.order,
                             fmt_float(res.value), fmt_float(res.abs_error)])
    _emit(buf.getvalue(), job.output)
    return code


def _cmd_verify(args) -> int:
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{args.suite}: {len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = {"compute": _cmd_compute, "table": _cmd_table, "verify": _cmd_verify}[args.command]
    try:
        return handler(args)
    except OpSpecError as exc:
        print(f"phi4ope: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, OSError) as exc:
        print(f"phi4ope: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, DivergenceError, SymbolicUnavailable) as exc:
        print(f"phi4ope: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (DomainError, ValueError) as exc:
        print(f"phi4ope: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
