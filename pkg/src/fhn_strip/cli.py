"""Configuration-driven command line: solve, compare, tabulate and verify.

Output conventions: solution matrices are CSV with a corner cell ``x\\t``,
the first row carrying the time nodes and the first column the space nodes;
every float is printed with 17 significant digits so files round-trip
exactly. The only environment variable honoured is FHN_STRIP_THREADS (worker
count for the verification suite).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .errors import ConfigError, FhnStripError, ValidationError
from .kernel import eval_G, eval_K, eval_theta, make_context
from .model import load_config, problem_from_config, validate_params
from .solver_fd import FDConfig, solve_fd
from .solver_ie import Grid, Solution, SolveOptions, solve_ie

CORNER = "x\\t"
FLOAT_FMT = "{:.17g}"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fmt(v: float) -> str:
    return FLOAT_FMT.format(float(v))


def write_matrix_csv(path, x_nodes, t_nodes, values):
    """Matrix layout: rows are space nodes, columns are time nodes."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([CORNER] + [_fmt(t) for t in t_nodes]) + "\n")
        for i, xv in enumerate(x_nodes):
            fh.write(",".join([_fmt(xv)] + [_fmt(v) for v in values[i]]) + "\n")


def read_matrix_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != CORNER:
            raise ConfigError("corner", f"expected corner cell {CORNER!r} in {path}")
        t_nodes = np.array([float(v) for v in header[1:]])
        rows = []
        x_nodes = []
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != t_nodes.size + 1:
                raise ConfigError("row", f"ragged row in {path}")
            x_nodes.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return np.array(x_nodes), t_nodes, np.array(rows)


def _apply_overrides(doc: dict, assignments) -> dict:
    """Apply repeatable --set key=value overrides with dotted paths."""
    import copy

    import yaml

    out = copy.deepcopy(doc)
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError("set", f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "override path crosses a non-mapping node")
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _parse_grid(text: str):
    try:
        nx_s, nt_s = text.split(",")
        nx, nt = int(nx_s), int(nt_s)
    except ValueError:
        raise ConfigError("grid", f"expected 'nx,nt', got {text!r}") from None
    if nx < 3 or nt < 2:
        raise ConfigError("grid", "grid needs nx >= 3 and nt >= 2")
    return nx, nt


def _load_spec(args, *, allow_degenerate=False):
    if not args.spec:
        raise ConfigError("spec", "a --spec configuration file is required")
    doc = _apply_overrides(load_config(args.spec), args.set)
    spec, extras = problem_from_config(doc, allow_degenerate=allow_degenerate)
    nx, nt = 65, 257
    grid_cfg = extras.get("grid", {})
    if "nx" in grid_cfg:
        nx = int(grid_cfg["nx"])
    if "nt" in grid_cfg:
        nt = int(grid_cfg["nt"])
    if args.grid:
        nx, nt = _parse_grid(args.grid)
    return spec, (nx, nt)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_solution(out: Path, sol: Solution, extra: dict) -> None:
    g = sol.u.grid
    write_matrix_csv(out / "u.csv", g.x_nodes, g.t_nodes, sol.u.values)
    write_matrix_csv(out / "v.csv", g.x_nodes, g.t_nodes, sol.v.values)
    report = dict(extra)
    if hasattr(sol.report, "to_dict"):
        report["run"] = sol.report.to_dict()
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_solve_ie(args) -> int:
    spec, (nx, nt) = _load_spec(args)
    ctx = make_context(spec.params)
    grid = Grid.regular(spec.params.L, spec.T, nx, nt)
    options = SolveOptions(linearized=args.linearized)
    sol = solve_ie(spec, grid, ctx, options)
    _write_solution(_out_dir(args), sol, {
        "command": "solve-ie",
        "grid": {"nx": nx, "nt": nt},
        "linearized": args.linearized,
    })
    return EXIT_OK


def cmd_solve_fd(args) -> int:
    spec, (nx, nt) = _load_spec(args)
    cfg = FDConfig(nx=nx, dt=spec.T / (nt - 1))
    sol = solve_fd(spec, cfg)
    _write_solution(_out_dir(args), sol, {
        "command": "solve-fd",
        "grid": {"nx": nx, "nt": nt},
        "scheme": cfg.scheme,
    })
    return EXIT_OK


def cmd_compare(args) -> int:
    xa, ta, va = read_matrix_csv(args.file_a)
    xb, tb, vb = read_matrix_csv(args.file_b)
    if xa.shape != xb.shape or not np.allclose(xa, xb, atol=0, rtol=0):
        raise ConfigError("x_nodes", "space nodes differ between the two files")
    if ta.shape != tb.shape or not np.allclose(ta, tb, atol=0, rtol=0):
        raise ConfigError("t_nodes", "time nodes differ between the two files")
    diff = va - vb
    sup = float(np.max(np.abs(diff))) if diff.size else 0.0
    h = xa[1] - xa[0] if xa.size > 1 else 1.0
    dt = ta[1] - ta[0] if ta.size > 1 else 1.0
    l2 = float(np.sqrt(np.sum(diff * diff) * h * dt))
    out = _out_dir(args)
    with open(out / "slice_errors.csv", "w", encoding="utf-8") as fh:
        fh.write("t,sup_abs_error,signed_extreme_error,l2_error\n")
        for j, tv in enumerate(ta):
            col = diff[:, j]
            k = int(np.argmax(np.abs(col)))
            fh.write(",".join([
                _fmt(tv), _fmt(np.max(np.abs(col))), _fmt(col[k]),
                _fmt(np.sqrt(np.sum(col * col) * h)),
            ]) + "\n")
    report = {
        "command": "compare",
        "file_a": str(args.file_a),
        "file_b": str(args.file_b),
        "sup_norm": sup,
        "l2_norm": l2,
        "per_slice_csv": "slice_errors.csv",
    }
    with open(out / "diff_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_tabulate_kernel(args) -> int:
    if args.spec:
        doc = _apply_overrides(load_config(args.spec), args.set)
        if "params" not in doc:
            raise ConfigError("params", "missing section")
        params = validate_params(doc["params"], enforce_kinetic_range=False)
        T = float(doc.get("T", 1.0))
    else:
        params = analysis.DEFAULT_CHECK_PARAMS
        T = 1.0
    nx, nt = _parse_grid(args.grid) if args.grid else (9, 9)
    ctx = make_context(params)
    x = np.linspace(0.0, params.L, nx)
    t = np.linspace(T / nt, T, nt)
    out = _out_dir(args)
    with open(out / "kernel_table.csv", "w", encoding="utf-8") as fh:
        fh.write("x,t,K,theta,G_diag\n")
        for xv in x:
            K_row = eval_K(xv, t, ctx)
            th_row = eval_theta(xv, t, ctx)
            g_row = eval_G(xv, xv, t, ctx)
            for j, tv in enumerate(t):
                fh.write(",".join([
                    _fmt(xv), _fmt(tv), _fmt(K_row[j]), _fmt(th_row[j]),
                    _fmt(g_row[j]),
                ]) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    params = None
    if args.spec:
        doc = _apply_overrides(load_config(args.spec), args.set)
        if "params" not in doc:
            raise ConfigError("params", "missing section")
        params = validate_params(doc["params"], enforce_kinetic_range=False,
                                 allow_degenerate=True)
    checks = args.checks.split(",") if args.checks else None
    threads = int(os.environ.get("FHN_STRIP_THREADS", "1"))
    reports = analysis.run_verification(params=params, checks=checks,
                                        threads=threads)
    payload = [r.to_dict() for r in reports]
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(args)
        with open(out / "verify_report.json", "w", encoding="utf-8") as fh:
            fh.write(text)
    failed = [r for r in reports if not r.passed and not r.skipped]
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fhn-strip",
        description="Semi-analytic solvers and bound checks for the "
                    "FitzHugh-Nagumo strip problem",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_spec=True):
        p.add_argument("--spec", help="problem configuration (YAML)")
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a configuration entry (repeatable)")
        return p

    p = common(sub.add_parser("solve-ie", help="integral-equation solve"))
    p.add_argument("--grid", help="nx,nt")
    p.add_argument("--linearized", action="store_true",
                   help="drop the cubic source (explicit data-term solution)")
    p.set_defaults(func=cmd_solve_ie)

    p = common(sub.add_parser("solve-fd", help="finite-difference solve"))
    p.add_argument("--grid", help="nx,nt")
    p.set_defaults(func=cmd_solve_fd)

    p = sub.add_parser("compare", help="diff two solution matrices")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--out", help="output directory (default: current)")
    p.set_defaults(func=cmd_compare)

    p = common(sub.add_parser("tabulate-kernel", help="tabulate K, theta, G"))
    p.add_argument("--grid", help="nx,nt")
    p.set_defaults(func=cmd_tabulate_kernel)

    p = common(sub.add_parser("verify", help="run the bound-check suite"))
    p.add_argument("--checks", help="comma-separated subset of check names")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FhnStripError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
