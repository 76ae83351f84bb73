"""Batch command line front end.

Exit codes: 0 every residual within tolerance, 1 invalid input, 2 existence
failure (vanishing tau or pivot breakdown), 3 some residual above tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import christoffel, oracle
from .errors import ExistenceFailure, InputError, MMOPError, NonRegular, QuasidefiniteFailure
from .families import biorthogonality_residual, build_family, quasidiag_report, recurrence_matrix
from .fixtures import FIXTURES
from .gaussborel import PIVOT_TOL, factorize
from .gaussborel import residual as factorization_residual
from .matpoly import MatrixPolynomial, determinant, validate_structure
from .measures import WeightGrid, hankel_residual, moment_matrix
from .spectral import det_roots, left_jordan_chains, verify_chain

log = logging.getLogger("mmop")

EXIT_OK, EXIT_INPUT, EXIT_EXISTENCE, EXIT_RESIDUAL = 0, 1, 2, 3

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 1}, "minItems": 1}
_SUPPORT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_WEIGHT = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["polynomial", "moments", "lebesgue", "jacobi"]},
        "coefficients": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "support": _SUPPORT,
        "alpha": {"type": "integer", "minimum": 0},
        "beta": {"type": "integer", "minimum": 0},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "polynomial"}}}, "then": {"required": ["coefficients"]}},
        {"if": {"properties": {"kind": {"const": "moments"}}}, "then": {"required": ["values"]}},
    ],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["q", "p", "weights", "n_max"],
    "properties": {
        "q": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 1},
        "interval": _SUPPORT,
        "weights": {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _WEIGHT}},
        "perturbation": {
            "type": "object",
            "required": ["coefficients"],
            "properties": {
                "side": {"enum": ["right", "left"]},
                "coefficients": {"type": "array", "minItems": 1, "items": _MATRIX},
            },
            "additionalProperties": False,
        },
        "n_max": {"type": "integer", "minimum": 0},
        "tolerances": {
            "type": "object",
            "properties": {
                k: {"type": "number", "exclusiveMinimum": 0}
                for k in ("pivot_tol", "rank_tol", "tau_tol", "compare_tol", "residual_tol")
            },
            "additionalProperties": False,
        },
        "precision": {"enum": ["double", "extended"]},
        "outputs": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "csv": {"type": "boolean"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DEFAULT_TOLERANCES = {"pivot_tol": PIVOT_TOL, "rank_tol": 1e-8, "tau_tol": 1e-9, "compare_tol": 1e-6, "residual_tol": 1e-8}


@dataclass
class RunConfig:
    grid: WeightGrid
    n_max: int
    perturbation: MatrixPolynomial | None = None
    side: str = "right"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    precision: str = "double"
    out_dir: Path | None = None
    csv: bool = False

    @property
    def q(self) -> int:
        return self.grid.q

    @property
    def p(self) -> int:
        return self.grid.p


class ConfigError(InputError):
    def __init__(self, problems: list[tuple[str, str]]):
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in problems))
        self.problems = problems


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def parse_config(data: dict) -> RunConfig:
    """Validate a config document and build a :class:`RunConfig`.

    Raises :class:`ConfigError` listing every problem with its JSON pointer.
    """
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError([(_pointer(e.absolute_path), e.message) for e in errors])
    problems = []
    q, p = data["q"], data["p"]
    weights = data["weights"]
    if len(weights) != q:
        problems.append(("/weights", f"expected {q} rows, got {len(weights)}"))
    for i, row in enumerate(weights):
        if len(row) != p:
            problems.append((f"/weights/{i}", f"expected {p} entries, got {len(row)}"))
    pert, side = None, "right"
    if "perturbation" in data:
        side = data["perturbation"].get("side", "right")
        size = p if side == "right" else q
        coeffs = data["perturbation"]["coefficients"]
        for l, mat in enumerate(coeffs):
            if len(mat) != size or any(len(row) != size for row in mat):
                problems.append((f"/perturbation/coefficients/{l}", f"expected a {size}x{size} matrix"))
        if not problems:
            pert = MatrixPolynomial(np.array(coeffs, dtype=float))
            need = size * (pert.degree + 1) + 2
            if data["n_max"] < need:
                problems.append(("/n_max", f"must be >= {need} (block size times (degree + 1) plus 2)"))
    if problems:
        raise ConfigError(problems)
    try:
        grid = WeightGrid.from_json({"weights": weights, "interval": data.get("interval", [-1.0, 1.0])})
    except InputError as exc:
        raise ConfigError([("/weights", str(exc))]) from exc
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(data.get("tolerances", {}))
    outputs = data.get("outputs", {})
    return RunConfig(
        grid=grid, n_max=data["n_max"], perturbation=pert, side=side, tolerances=tolerances,
        precision=data.get("precision", "double"),
        out_dir=Path(outputs["dir"]) if "dir" in outputs else None, csv=outputs.get("csv", False),
    )


# ------------------------------------------------------------------ reports


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits, non-finite as null."""

    def enc(x, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(x, dict):
            if not x:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(x[k], level + 1)}" for k in sorted(x)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(x, list):
            if not x:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in x):
                return "[" + ", ".join(enc(v, level + 1) for v in x) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in x) + "\n" + end + "]"
        if isinstance(x, bool) or x is None:
            return json.dumps(x)
        if isinstance(x, int):
            return str(x)
        if isinstance(x, float):
            return format(x, ".17g") if math.isfinite(x) else "null"
        return json.dumps(x)

    return enc(_clean(obj), 0) + "\n"


def text_table(rows: list[tuple]) -> str:
    """Aligned plain-text columns."""
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(max(len(r) for r in rows))]
    return "\n".join("  ".join(c.ljust(widths[i]) for i, c in enumerate(r)).rstrip() for r in rows) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def _emit(report: dict, out_dir: Path | None, name: str, stream=sys.stdout) -> None:
    rows = [("check", "value", "tolerance", "status")]
    for key, (value, tol) in sorted(report.get("checks", {}).items()):
        status = "pass" if value is not None and value <= tol else "FAIL"
        rows.append((key, _fmt(value), _fmt(tol), status))
    text = text_table(rows)
    for key in ("status", "exit_code", "message"):
        if key in report:
            text += f"{key}: {report[key]}\n"
    stream.write(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{name}.json").write_text(dumps(report))
        (out_dir / f"{name}.txt").write_text(text)


def _status(report: dict) -> int:
    if report.get("existence_failure"):
        return EXIT_EXISTENCE
    ok = all(v is not None and v <= tol for v, tol in report.get("checks", {}).values())
    return EXIT_OK if ok else EXIT_RESIDUAL


def _base_trunc(cfg: RunConfig) -> int:
    """Truncation leaving room for ``n_max + 1`` perturbed indices on both paths."""
    if cfg.perturbation is None:
        return cfg.n_max + 1
    s = cfg.p if cfg.side == "right" else cfg.q
    N = cfg.perturbation.degree
    m = validate_structure(cfg.perturbation if cfg.side == "right" else cfg.perturbation.T).det_degree
    return cfg.n_max + s * N + m + 3


# ----------------------------------------------------------------- commands


def cmd_moments(cfg: RunConfig) -> dict:
    T = cfg.n_max + 1
    M = moment_matrix(cfg.grid, T)
    tol = cfg.tolerances["residual_tol"]
    report = {
        "command": "moments",
        "q": cfg.q,
        "p": cfg.p,
        "trunc": T,
        "moment_matrix": M.entries,
        "checks": {"hankel_residual": (hankel_residual(M, relative=True), tol)},
    }
    if cfg.out_dir is not None and cfg.csv:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        M.to_csv(cfg.out_dir / "moments.csv")
    return report


def cmd_ortho(cfg: RunConfig) -> dict:
    T = cfg.n_max + 1
    M = moment_matrix(cfg.grid, T, precision=cfg.precision)
    report = {"command": "ortho", "q": cfg.q, "p": cfg.p, "trunc": T}
    try:
        F = factorize(M, cfg.tolerances["pivot_tol"])
    except QuasidefiniteFailure as exc:
        report.update(existence_failure=True, pivot_failure=exc.index, message=str(exc))
        return report
    fam = build_family(F, cfg.q, cfg.p)
    qd = quasidiag_report(fam, cfg.grid, T)
    rec = recurrence_matrix(F, cfg.q, cfg.p, fam, np.linspace(*cfg.grid.interval, 10))
    tol = cfg.tolerances["residual_tol"]
    report.update(
        H=F.H,
        B=fam.B,
        A=fam.A,
        recurrence=rec.matrix,
        quasidiagonal_literal_range_flags=[list(f) for f in qd.flagged],
        checks={
            "factorization": (factorization_residual(F, M), tol),
            "biorthogonality": (biorthogonality_residual(fam, cfg.grid, T), tol),
            "quasidiagonal": (qd.residual, tol),
            "recurrence_off_band": (rec.off_band, 1e-10),
            "recurrence_relation": (rec.residual, tol),
        },
    )
    if cfg.out_dir is not None and cfg.csv:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        F.to_csv(cfg.out_dir)
        fam.to_csv(cfg.out_dir / "B.csv", "B")
        fam.to_csv(cfg.out_dir / "A.csv", "A")
    return report


def _spectral_section(R: MatrixPolynomial, rank_tol: float) -> tuple[dict, object]:
    st = validate_structure(R)
    section = {"r": st.r, "det_degree": st.det_degree, "determinant": determinant(R)}
    if st.det_degree == 0:
        section.update(roots=[], chains=[], chain_residual=0.0)
        return section, None
    eig = det_roots(R)
    chains = left_jordan_chains(R, eig, rank_tol)
    section.update(
        roots=[{"value": r.value, "multiplicity": r.multiplicity} for r in eig.roots],
        chains=chains.to_json(),
        chain_residual=max(verify_chain(R, rc.root, c) for rc in chains.roots for c in rc.chains),
    )
    return section, chains


def cmd_perturb(cfg: RunConfig, compare: bool = False) -> dict:
    if cfg.perturbation is None:
        raise ConfigError([("/perturbation", "required for this command")])
    tol = cfg.tolerances
    R_right = cfg.perturbation if cfg.side == "right" else cfg.perturbation.T
    spectral, chains = _spectral_section(R_right, tol["rank_tol"])
    T = _base_trunc(cfg)
    M = moment_matrix(cfg.grid, T, precision=cfg.precision)
    report = {"command": "verify" if compare else "perturb", "side": cfg.side, "trunc": T, "spectral": spectral}
    try:
        F = factorize(M, tol["pivot_tol"])
    except QuasidefiniteFailure as exc:
        report.update(existence_failure=True, message=f"unperturbed grid: {exc}", base_pivot_failure=exc.index)
        return report
    fam = build_family(F, cfg.q, cfg.p)
    kwargs = dict(chains=chains, count=cfg.n_max + 1, tau_tol=tol["tau_tol"], rank_tol=tol["rank_tol"])
    if cfg.side == "right":
        cd = christoffel.perturb_right(fam, cfg.perturbation, **kwargs)
    else:
        cd = christoffel.perturb_left(fam, cfg.perturbation, **kwargs)
    report["connection"] = cd.to_json()
    flag = cd.tau.first_flag
    # ground-truth existence
    try:
        direct = oracle.direct_perturbed(M, cfg.perturbation, cfg.side, tol["pivot_tol"])
        pivot_failure = None
    except QuasidefiniteFailure as exc:
        direct, pivot_failure = None, exc.index
    report["existence"] = {
        "first_tau_flag": flag,
        "oracle_pivot_failure": pivot_failure,
        "observed_offset": None if flag is None or pivot_failure is None else flag - pivot_failure,
    }
    rt = tol["residual_tol"]
    checks = {
        "tau_consistency": (cd.residuals["tau_consistency"], rt),
        "inheritance": (cd.residuals["inheritance"], rt),
        "connection_A": (cd.residuals["connection_A"], rt),
        "connection_B": (cd.residuals["connection_B"], rt),
        "chain_residual": (spectral["chain_residual"], tol["rank_tol"]),
    }
    if "left_tau" in cd.residuals:
        checks["left_tau"] = (cd.residuals["left_tau"], rt)
    if cfg.side == "right" and flag is None:
        rng = np.random.default_rng(1)
        worst = 0.0
        for n in range(2, min(cd.count_A, cd.count_B, 9) + 1):
            for x, y in rng.uniform(*cfg.grid.interval, size=(5, 2)):
                worst = max(worst, christoffel.kernel_connection_residual(fam, cd, cfg.perturbation, n, x, y))
        checks["kernel_connection"] = (worst, 1e-7)
    if flag is not None or pivot_failure is not None:
        report["existence_failure"] = True
        report["message"] = f"tau flag at n={flag}; oracle pivot failure at {pivot_failure}"
    elif compare:
        cmp = oracle.compare(cd, direct, fam, {k: tol["compare_tol"] for k in ("B_hat", "A_hat", "H_hat")} | {"omega": 1e-8})
        report["comparison"] = cmp.to_json()
        for k, v in cmp.worst.items():
            if k in cmp.tolerances:
                checks[f"oracle_{k}"] = (v, cmp.tolerances[k])
    report["checks"] = checks
    return report


def fixture_config(name: str, b: float | None, n_max: int | None, precision: str) -> RunConfig:
    fx = FIXTURES[name]() if b is None else FIXTURES[name](b)
    n_max = 8 if n_max is None else n_max
    return RunConfig(grid=fx.grid, n_max=n_max, perturbation=fx.perturbation, side=fx.side, precision=precision)


COMMANDS = {"moments": cmd_moments, "ortho": cmd_ortho, "perturb": cmd_perturb, "verify": lambda c: cmd_perturb(c, True)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("moments", "ortho", "perturb", "verify", "demo"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON run configuration")
        sp.add_argument("--out", type=Path, help="directory for JSON/text/CSV artifacts")
        sp.add_argument("--nmax", type=int, help="override n_max")
        sp.add_argument("--extended-precision", action="store_true", help="factorize in extended precision")
        if name == "demo":
            sp.add_argument("--fixture", choices=sorted(FIXTURES), required=True)
            sp.add_argument("--b", type=float, help="fixture parameter")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("MMOP_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    precision = "extended" if args.extended_precision else None
    try:
        if args.command == "demo":
            cfg = fixture_config(args.fixture, args.b, args.nmax, precision or "double")
        else:
            if args.config is None:
                raise ConfigError([("/", "--config is required")])
            try:
                data = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError([("/", f"cannot read config: {exc}")]) from exc
            cfg = parse_config(data)
            if args.nmax is not None:
                cfg.n_max = args.nmax
            if precision:
                cfg.precision = precision
        if args.out is not None:
            cfg.out_dir = args.out
        if args.command == "demo":
            report = cmd_perturb(cfg, compare=True)
            report.update(command="demo", fixture=args.fixture)
        else:
            report = COMMANDS[args.command](cfg)
    except (InputError, NonRegular) as exc:
        problems = getattr(exc, "problems", [("/", str(exc))])
        for path, msg in problems:
            sys.stderr.write(f"invalid input at {path}: {msg}\n")
        return EXIT_INPUT
    except ExistenceFailure as exc:
        sys.stderr.write(f"existence failure: {exc}\n")
        return EXIT_EXISTENCE
    except MMOPError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RESIDUAL
    code = _status(report)
    report["exit_code"] = code
    report["status"] = {EXIT_OK: "pass", EXIT_EXISTENCE: "existence failure", EXIT_RESIDUAL: "residual failure"}[code]
    _emit(report, cfg.out_dir, report["command"])
    return code


if __name__ == "__main__":
    sys.exit(main())
