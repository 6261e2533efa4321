"""``rabi-exact`` command-line interface.

Commands: solve, sweep, poly, coeffs, tables, ed.  Every command writes either
CSV (header row, then data) or a single JSON object ``{"meta", "data"}``.

Exit status: 0 on full success, 2 when the report is complete but some level
or cell failed, 1 on bad input or a hard solver error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources

import numpy as np
import scipy

from . import __version__
from . import coherent_poly as cp
from .closed_forms import fod_ground_energy
from .ed_oracle import ed_solve
from .errors import NoConvergence, OutsideValidity, RabiError
from .model import ModelParams, Parity
from .rootfinder import find_roots
from .spectrum_solver import SolveOptions, scan_window, solve_spectrum

COMMANDS = ("solve", "sweep", "poly", "coeffs", "tables", "ed")
METHODS = ("exact", "fod", "ed", "all")

EXIT_OK, EXIT_HARD, EXIT_PARTIAL = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one invocation.

    Field names match the long flags with dashes replaced by underscores.
    ``to_dict`` gives the config-file form; ``parse_args`` reads it back.
    """

    command: str
    g: float | None = None
    delta: float | None = None
    levels: int | None = None
    m_start: int | None = None
    m_max: int = 201
    alpha_tol: float = 1e-8
    residual_check: bool = True
    format: str = "csv"
    out: str | None = None
    precision: int = 12
    g_min: float | None = None
    g_max: float | None = None
    g_steps: int = 10
    method: str = "exact"
    parity: str = "even"
    m: int = 59
    alpha_min: float | None = None
    alpha_max: float | None = None
    samples: int = 2000
    table: str = "all"
    tol: float = 1e-6
    rel_tol: float = 1e-10
    n_max: int = 60

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if k == "residual_check":
                out["no-residual-check"] = not v
            else:
                out[k.replace("_", "-")] = v
        return out

    def solve_options(self, **over) -> SolveOptions:
        kw = dict(
            n_levels=self.levels,
            alpha_tol=self.alpha_tol,
            m_start=self.m_start,
            m_max=self.m_max,
            residual_check=self.residual_check,
        )
        kw.update(over)
        return SolveOptions(**kw)

    def model(self) -> ModelParams:
        return ModelParams(self.g, self.delta)


_DEFAULT_LEVELS = {"solve": 9, "coeffs": 6, "ed": 9, "tables": 9}
_NEEDS_POINT = ("solve", "poly", "coeffs", "ed")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _common(p):
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--precision", type=_positive_int)


def _point(p, levels=True):
    p.add_argument("--g", type=float)
    p.add_argument("--delta", type=float)
    if levels:
        p.add_argument("--levels", type=_positive_int)


def _solver(p):
    p.add_argument("--m-start", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--alpha-tol", type=float)
    p.add_argument("--no-residual-check", action="store_const", const=True)


def build_parser() -> argparse.ArgumentParser:
    # every default is None so that config-file values can be told apart from flags
    parser = _Parser(prog="rabi-exact", description="Exact quantum Rabi spectrum.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="lowest levels at one (g, delta)")
    _common(p)
    _point(p)
    _solver(p)

    p = sub.add_parser("sweep", help="ground-state energy along a g grid")
    _common(p)
    _solver(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--g-min", type=float)
    p.add_argument("--g-max", type=float)
    p.add_argument("--g-steps", type=_positive_int)
    p.add_argument("--method", choices=METHODS)

    p = sub.add_parser("poly", help="sign and magnitude of the boundary function")
    _common(p)
    _point(p, levels=False)
    p.add_argument("--parity")
    p.add_argument("--m", type=int)
    p.add_argument("--alpha-min", type=float)
    p.add_argument("--alpha-max", type=float)
    p.add_argument("--samples", type=_positive_int)

    p = sub.add_parser("coeffs", help="normalized expansion coefficients per level")
    _common(p)
    _point(p)
    _solver(p)
    p.add_argument("--n-max", type=_positive_int)

    p = sub.add_parser("tables", help="compare against the reference tables")
    _common(p)
    _solver(p)
    p.add_argument("--table", choices=("1", "2", "3", "all"))
    p.add_argument("--tol", type=float)

    p = sub.add_parser("ed", help="exact-diagonalization reference spectrum")
    _common(p)
    _point(p)
    p.add_argument("--rel-tol", type=float)
    return parser


def _load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)} | {"no_residual_check"}
    out = {}
    for key, value in data.items():
        name = str(key).replace("-", "_")
        if name not in known:
            raise UsageError(f"unknown config key {key!r}")
        if name == "no_residual_check":
            name, value = "residual_check", not value
        out[name] = value
    return out


def parse_args(argv) -> RunConfig:
    """Flags override the config file, which overrides built-in defaults."""
    ns = build_parser().parse_args(argv)
    values = _load_config(ns.config) if ns.config else {}
    values.pop("command", None)
    for key, value in vars(ns).items():
        if key in ("command", "config") or value is None:
            continue
        if key == "no_residual_check":
            values["residual_check"] = False
        else:
            values[key] = value
    if values.get("levels") is None:
        values["levels"] = _DEFAULT_LEVELS.get(ns.command)
    cfg = RunConfig(command=ns.command, **values)
    _check(cfg)
    return cfg


def _check(cfg: RunConfig):
    if cfg.command in _NEEDS_POINT:
        for name in ("g", "delta"):
            if getattr(cfg, name) is None:
                raise UsageError(f"--{name} is required for {cfg.command}")
    if cfg.command == "sweep":
        for name in ("delta", "g_min", "g_max"):
            if getattr(cfg, name) is None:
                raise UsageError(f"--{name.replace('_', '-')} is required for sweep")
        if not (cfg.g_min > 0 and cfg.g_min < cfg.g_max):
            raise UsageError(
                f"InvalidCoupling: need 0 < g-min < g-max, got [{cfg.g_min}, {cfg.g_max}]"
            )
        if cfg.method not in METHODS:
            raise UsageError(f"unknown method {cfg.method!r}")
    if cfg.format not in ("csv", "json"):
        raise UsageError(f"unknown format {cfg.format!r}")
    if not 1 <= cfg.precision <= 17:
        raise UsageError("--precision must be between 1 and 17")
    if cfg.n_max < 2:
        raise UsageError("--n-max must be >= 2")
    if cfg.command == "poly":
        Parity.parse(cfg.parity)
        if cfg.m < 2:
            raise UsageError("--m must be >= 2")
    if cfg.command == "tables" and str(cfg.table) not in ("1", "2", "3", "all"):
        raise UsageError(f"unknown table {cfg.table!r}")


# ---- output -----------------------------------------------------------------


def _round(x, digits):
    if x is None or isinstance(x, (bool, str, int, np.integer)):
        return int(x) if isinstance(x, np.integer) else x
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{digits}g}")


def _cell(x, digits):
    v = _round(x, digits)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.{digits}g}"
    return str(v)


def _meta(cfg: RunConfig, extra=None) -> dict:
    import flint

    meta = {
        "config": cfg.to_dict(),
        "versions": {
            "rabi_exact": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python-flint": flint.__version__,
        },
        "tolerances": {"alpha_tol": cfg.alpha_tol},
    }
    if extra:
        meta.update(extra)
    return meta


def render(cfg: RunConfig, columns, rows, meta=None, sections=None) -> str:
    """CSV or JSON text for ``rows`` (dicts keyed by ``columns``).

    ``sections`` maps a name to (columns, rows) for secondary record lists;
    in CSV each appears after a blank line and a ``# name`` marker.
    """
    p = cfg.precision
    sections = sections or {}
    if cfg.format == "json":
        doc = {
            "meta": _meta(cfg, meta),
            "data": [{c: _round(r.get(c), p) for c in columns} for r in rows],
        }
        for name, (cols, recs) in sections.items():
            doc[name] = [{c: _round(r.get(c), p) for c in cols} for r in recs]
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c), p) for c in columns])
    for name, (cols, recs) in sections.items():
        buf.write(f"\n# {name}\n")
        w.writerow(cols)
        for r in recs:
            w.writerow([_cell(r.get(c), p) for c in cols])
    return buf.getvalue()


def _emit(cfg: RunConfig, text: str, stdout):
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


# ---- commands ---------------------------------------------------------------

SOLVE_COLUMNS = ["index", "parity", "energy", "alpha", "truncation_m", "residual_norm", "converged"]


def _level_row(lv):
    return {
        "index": lv.index,
        "parity": lv.parity.sign,
        "energy": lv.energy,
        "alpha": lv.alpha,
        "truncation_m": lv.truncation_m,
        "residual_norm": lv.residual_norm,
        "converged": bool(lv.converged),
    }


def cmd_solve(cfg: RunConfig):
    params = cfg.model()
    status = EXIT_OK
    try:
        result = solve_spectrum(params, cfg.solve_options())
        levels = list(result.levels)
    except NoConvergence as exc:
        levels = [lv for lv in exc.partial if hasattr(lv, "energy")]
        levels = [lv.with_index(i) for i, lv in enumerate(sorted(levels, key=lambda v: v.energy))]
        return SOLVE_COLUMNS, [_level_row(lv) for lv in levels], {"error": str(exc)}, EXIT_PARTIAL
    if len(levels) < cfg.levels or not all(lv.converged for lv in levels):
        status = EXIT_PARTIAL
    meta = {"solver": _jsonable(result.solver_metadata)}
    return SOLVE_COLUMNS, [_level_row(lv) for lv in levels], meta, status


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _g_grid(cfg):
    if cfg.g_steps == 1:
        return [cfg.g_min]
    return [float(x) for x in np.linspace(cfg.g_min, cfg.g_max, cfg.g_steps)]


def cmd_sweep(cfg: RunConfig):
    methods = ("exact", "fod", "ed") if cfg.method == "all" else (cfg.method,)
    columns = ["g", *methods]
    rows = []
    status = EXIT_OK
    opts = cfg.solve_options(n_levels=1, residual_check=False)
    for g in _g_grid(cfg):
        params = ModelParams(g, cfg.delta)
        row = {"g": g}
        if "exact" in methods:
            try:
                row["exact"] = solve_spectrum(params, opts).levels[0].energy
            except NoConvergence:
                row["exact"] = None
                status = EXIT_PARTIAL
        if "fod" in methods:
            try:
                row["fod"] = fod_ground_energy(params)
            except OutsideValidity:
                row["fod"] = None
        if "ed" in methods:
            row["ed"] = ed_solve(params, 1).energies[0]
        rows.append(row)
    return columns, rows, {}, status


def cmd_poly(cfg: RunConfig):
    params = cfg.model()
    parity = Parity.parse(cfg.parity)
    lo, hi = scan_window(params, 9)
    lo = cfg.alpha_min if cfg.alpha_min is not None else lo
    hi = cfg.alpha_max if cfg.alpha_max is not None else hi
    if not lo < hi:
        raise UsageError(f"empty alpha window [{lo}, {hi}]")
    poly = cp.boundary_polynomial(params, parity)
    xs = np.linspace(lo, hi, cfg.samples + 1)
    rows = []
    for x in xs:
        r = poly.evaluate(float(x), cfg.m)
        rows.append({"alpha": float(x), "sign": r.sign, "log10_magnitude": r.log10_magnitude})
    roots = find_roots(
        poly.sign_function(cfg.m), lo, hi, cfg.samples, 1e-14,
        signs_many=lambda a: poly.signs(a, cfg.m),
    )
    recs = [
        {"alpha": r.alpha, "energy": cp.energy_from_alpha(r.alpha, params, parity)} for r in roots
    ]
    sections = {"roots": (["alpha", "energy"], recs)}
    return ["alpha", "sign", "log10_magnitude"], rows, {"window": [lo, hi]}, EXIT_OK, sections


def cmd_coeffs(cfg: RunConfig):
    params = cfg.model()
    status = EXIT_OK
    try:
        levels = list(solve_spectrum(params, cfg.solve_options(residual_check=False)).levels)
    except NoConvergence as exc:
        levels = sorted((lv for lv in exc.partial if hasattr(lv, "energy")), key=lambda v: v.energy)
        levels = [lv.with_index(i) for i, lv in enumerate(levels)]
        status = EXIT_PARTIAL
    rows = []
    for lv in levels:
        coeffs = lv.coefficients
        if cfg.n_max > coeffs.m:
            # c_n depends on alpha only, so a longer series just appends terms
            coeffs = cp.converged_coefficients(lv.alpha, params, lv.parity, cfg.n_max)
        for n, c in enumerate(coeffs.normalized_abs()[: cfg.n_max + 1]):
            rows.append({"level": lv.index, "parity": lv.parity.sign, "n": n, "c_norm": float(c)})
    return ["level", "parity", "n", "c_norm"], rows, {}, status


def load_reference_tables() -> list[dict]:
    """The 81 reference cells shipped in ``data/tables.csv``."""
    text = resources.files(__package__).joinpath("data/tables.csv").read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out = []
    for rec in csv.DictReader(lines):
        out.append(
            {
                "table": int(rec["table"]),
                "delta": float(rec["delta"]),
                "g": float(rec["g"]),
                "level": int(rec["level"]),
                "reference": float(rec["present"]),
                "reference_ed": float(rec["ed"]),
            }
        )
    return out


TABLE_COLUMNS = [
    "table", "delta", "g", "level", "present", "ed", "reference", "rel_err", "pass", "nearest_level",
]


def table_report(tables, tol=1e-6, opts: SolveOptions | None = None) -> list[dict]:
    """Solve every (delta, g) point of the selected tables and score each cell.

    A cell passes when the level with the same index is within ``tol``
    (relative) of the reference value.  ``nearest_level`` is the index of the
    oracle level closest to the reference value, one level beyond the
    tabulated ones included; it differs from ``level`` when the reference
    list skips a level.
    """
    ref = [r for r in load_reference_tables() if r["table"] in tables]
    opts = opts or SolveOptions(n_levels=9, residual_check=False)
    points = sorted({(r["table"], r["delta"], r["g"]) for r in ref})
    solved = {}
    for t, d, g in points:
        params = ModelParams(g, d)
        try:
            present = [lv.energy for lv in solve_spectrum(params, opts).levels]
        except NoConvergence:
            present = []
        solved[(t, d, g)] = (present, ed_solve(params, opts.n_levels + 1).energies)
    rows = []
    for r in ref:
        present, ed = solved[(r["table"], r["delta"], r["g"])]
        i = r["level"]
        val = present[i] if i < len(present) else None
        err = None if val is None else abs(val - r["reference"]) / max(abs(r["reference"]), 1e-300)
        rows.append(
            {
                "table": r["table"],
                "delta": r["delta"],
                "g": r["g"],
                "level": i,
                "present": val,
                "ed": ed[i],
                "reference": r["reference"],
                "rel_err": err,
                "pass": err is not None and err <= tol,
                "nearest_level": int(np.argmin(np.abs(np.asarray(ed) - r["reference"]))),
            }
        )
    return rows


def cmd_tables(cfg: RunConfig):
    tables = (1, 2, 3) if str(cfg.table) == "all" else (int(cfg.table),)
    opts = cfg.solve_options(n_levels=9, residual_check=False)
    rows = table_report(tables, cfg.tol, opts)
    status = EXIT_OK if all(r["pass"] for r in rows) else EXIT_PARTIAL
    return TABLE_COLUMNS, rows, {"tolerances": {"rel": cfg.tol}}, status


def cmd_ed(cfg: RunConfig):
    res = ed_solve(cfg.model(), cfg.levels, cfg.rel_tol)
    rows = [
        {"index": i, "energy": e, "parity": p.sign, "n_fock": res.n_fock}
        for i, (e, p) in enumerate(zip(res.energies, res.parities))
    ]
    return ["index", "energy", "parity", "n_fock"], rows, {"n_fock": res.n_fock}, EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "poly": cmd_poly,
    "coeffs": cmd_coeffs,
    "tables": cmd_tables,
    "ed": cmd_ed,
}


def _diagnostic(exc) -> str:
    msg = str(exc)
    head = msg.split(":", 1)[0]
    if ":" in msg and head.isidentifier():
        return f"rabi-exact: {msg}"
    return f"rabi-exact: {type(exc).__name__}: {msg}"


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = parse_args(argv)
    except (UsageError, RabiError, ValueError) as exc:
        print(_diagnostic(exc), file=stderr)
        return EXIT_HARD
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        out = HANDLERS[cfg.command](cfg)
    except (UsageError, RabiError, ValueError) as exc:
        print(_diagnostic(exc), file=stderr)
        return EXIT_HARD
    columns, rows, meta, status = out[:4]
    sections = out[4] if len(out) > 4 else None
    _emit(cfg, render(cfg, columns, rows, meta, sections), stdout)
    if status != EXIT_OK:
        print(f"rabi-exact: {cfg.command} finished with failures (exit {status})", file=stderr)
    return status


def main(argv=None) -> int:
    return run(argv)


def config_from_dict(data: dict) -> RunConfig:
    """Inverse of ``RunConfig.to_dict``."""
    values = {}
    for key, value in data.items():
        name = key.replace("-", "_")
        if name == "no_residual_check":
            values["residual_check"] = not value
        else:
            values[name] = value
    return replace(RunConfig(command=values.pop("command")), **values)
