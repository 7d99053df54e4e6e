"""Command line: ``polyslab solve | verify | sweep | schema``.

Every run is driven by a plain-text config file (see ``polyslab schema``).
Artifacts carry no timings or paths, so identical configs give byte-identical
files. Exit codes: 0 success, 1 a check or trend failed, 2 bad configuration,
3 Picard divergence after epsilon halving was exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, parse_config, schema_text

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

ITERATION_SCHEMA = "polyslab.iteration_report/1"
NORMS_SCHEMA = "polyslab.norm_report/1"
SWEEP_SCHEMA = "polyslab.sweep/1"
MOMENT_COLUMNS = ("x", "n", "u1", "u2", "u3", "T_tr", "T_int", "flux")


def _json_default(o):
    import numpy as np

    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def moments_csv(mom: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MOMENT_COLUMNS)
    for row in mom["profiles"]:
        if row["n"] is None:
            w.writerow([repr(row["x"])] + [""] * (len(MOMENT_COLUMNS) - 1))
            continue
        w.writerow([repr(v) for v in (row["x"], row["n"], *row["u"], row["T_tr"], row["T_int"], row["flux"])])
    return buf.getvalue()


def read_moments_csv(text: str) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [{k: (float(v) if v != "" else None) for k, v in r.items()} for r in rows]


def _setup(cfg: RunConfig):
    from . import solver

    params = cfg.collision_params()
    grid = cfg.grid()
    quad = cfg.quadrature()
    bc = solver.make_boundary(cfg.boundary, cfg.boundary_params(), grid, params)
    return params, grid, quad, bc


def initial_field(cfg: RunConfig, grid, bc):
    """zero, the boundary data themselves, or the left wall's Maxwellian."""
    from .phase_space import maxwellian_field

    if cfg.initial == "zero":
        return grid.zeros()
    if cfg.initial == "boundary":
        return grid.broadcast(bc.f_LR)
    return maxwellian_field(grid, cfg.left_n, cfg.left_T, cfg.left_u, cfg.alpha)


def _run_header(cfg: RunConfig, command: str) -> dict:
    from .verify import digest

    return {"command": command, "version": __version__, "config": cfg.as_dict(),
            "config_digest": digest(cfg.canonical())}


def run_solve(cfg: RunConfig, out: Path) -> int:
    from . import norms, solver
    from .phase_space import save_field

    params, grid, quad, bc = _setup(cfg)
    f0 = initial_field(cfg, grid, bc)
    tol = cfg.tol or None
    start = time.perf_counter()
    try:
        f, report = solver.picard_solve(f0, bc, params, quad, tol=tol, max_iter=cfg.max_iter,
                                        auto_halve=cfg.auto_halve)
    except solver.DivergenceError as exc:
        out.mkdir(parents=True, exist_ok=True)
        diag = _run_header(cfg, "solve")
        diag.update(schema=ITERATION_SCHEMA, error=str(exc),
                    report=_report_dict(exc.report) if exc.report else None)
        _write(out / "iteration_report.json", dumps(diag))
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    p_final = params.replace(epsilon=report.epsilon)
    inv = solver.check_invariance(f, bc, p_final, quad)
    rep = norms.norm_report(f.values, grid, params.gamma, params.weight_a, params.alpha)
    elapsed = time.perf_counter() - start

    out.mkdir(parents=True, exist_ok=True)
    head = _run_header(cfg, "solve")
    _write(out / "iteration_report.json", dumps({**head, "schema": ITERATION_SCHEMA,
                                                 "report": _report_dict(report)}))
    _write(out / "norms.json", dumps({**head, "schema": NORMS_SCHEMA, "norms": rep.as_dict(),
                                      "boundary": bc.summary(params.gamma, params.weight_a),
                                      "invariance": inv}))
    _write(out / "moments.csv", moments_csv(solver.moments(f, params.alpha)))
    save_field(out / "field.bin", f, {"config_digest": head["config_digest"]})

    print(f"iterations {report.iterations}  residual {report.residuals[-1]:.3e}  tol {report.tol:.3e}  "
          f"converged {report.converged}  epsilon {report.epsilon:g}")
    rate = report.fitted_rate
    print(f"contraction estimate {rate:.4g}" if rate is not None else "contraction estimate n/a")
    if not inv.get("degenerate"):
        c = inv["constants"]
        m = inv["psi_f"]
        print(f"a1 {c['a1']:.4g}  margins: a1 {m['margin_a1']:.3g}  a3 {m['margin_a3']:.3g}  "
              f"a4 {m['margin_a4']:.3g}  L>=a2 {inv.get('L_lower', {}).get('margin', math.nan):.3g}")
    else:
        print("invariance constants degenerate: " + inv["message"])
    print(f"wrote {out} ({elapsed:.1f} s)")
    return EXIT_OK if report.converged else EXIT_FAIL


def _report_dict(report) -> dict:
    d = report.as_dict()
    d.pop("wall_time", None)
    return d


def suite_settings(cfg: RunConfig, quick: bool | None = None):
    from .verify import SuiteSettings

    grid = cfg.grid()
    boundary = cfg.boundary_params() if cfg.boundary == "cutoff_maxwellian" else None
    return SuiteSettings(params=cfg.collision_params(), grid_spec=grid.spec, n_samples=cfg.n_samples,
                         seed=cfg.seed, boundary=boundary, eps_list=tuple(cfg.eps_list),
                         verify_samples=cfg.verify_samples, contraction_seeds=cfg.contraction_seeds,
                         quick=cfg.verify_quick if quick is None else quick)


def run_verify(cfg: RunConfig, out: Path, quick: bool | None = None, only=None) -> int:
    from . import verify

    report = verify.run_suite(suite_settings(cfg, quick), only)
    report["config_digest"] = _run_header(cfg, "verify")["config_digest"]
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "verify_report.json", verify.report_json(report))
    table = verify.report_table(report)
    _write(out / "verify_table.txt", table)
    print(table, end="")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def sweep_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("epsilon", "ratio", "std_error"))
    for r in rows:
        w.writerow((repr(r["epsilon"]), repr(r["ratio"]), repr(r["std_error"])))
    return buf.getvalue()


def run_sweep(cfg: RunConfig, out: Path) -> int:
    from . import solver
    from .verify import Z

    params, grid, quad, bc = _setup(cfg)
    eps_list = sorted(cfg.eps_list, reverse=True)
    f, g, pair = solver.standard_pair(bc, params.replace(epsilon=eps_list[-1]), quad)
    rows = solver.measure_contraction(f, g, bc, params, eps_list, quad, cfg.contraction_seeds)
    monotone = all(b["ratio"] - a["ratio"] <= Z * math.hypot(a["std_error"], b["std_error"])
                   for a, b in zip(rows, rows[1:]))
    out.mkdir(parents=True, exist_ok=True)
    head = _run_header(cfg, "sweep")
    _write(out / "contraction.csv", sweep_csv(rows))
    _write(out / "sweep.json", dumps({**head, "schema": SWEEP_SCHEMA, "rows": rows, "monotone": monotone,
                                      "pair_residuals": pair.residuals}))
    for r in rows:
        print(f"epsilon {r['epsilon']:<8g} ratio {r['ratio']:.5f} +- {r['std_error']:.1e}")
    print("trend: " + ("non-increasing within noise" if monotone else "NOT monotone"))
    return EXIT_OK if monotone else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key = value run configuration (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the root seed")
        p.add_argument("--out", type=Path, default=Path("polyslab_out"), help="output directory")
        p.add_argument("--eps-list", help="comma separated epsilons (overrides eps_list)")
        return p

    common(sub.add_parser("solve", help="Picard solve; writes reports, moments and the field"))
    v = common(sub.add_parser("verify", help="run the bound certification suite"))
    v.add_argument("--quick", action="store_true", default=None, help="reduced battery and sample sizes")
    v.add_argument("--only", help="comma separated check groups")
    common(sub.add_parser("sweep", help="contraction ratios over eps_list"))
    sub.add_parser("schema", help="print the documented default config")
    return parser


def load(args) -> RunConfig:
    cfg = parse_config(args.config)
    eps = None
    if args.eps_list is not None:
        try:
            eps = tuple(float(t) for t in args.eps_list.split(",") if t.strip())
        except ValueError as exc:
            raise ConfigError([f"--eps-list: {exc}"]) from None
        if not eps:
            raise ConfigError(["--eps-list: at least one epsilon is required"])
    return cfg.with_overrides(seed=args.seed, eps_list=eps)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(schema_text(), end="")
        return EXIT_OK
    try:
        cfg = load(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    from .solver import BoundaryError

    try:
        if args.command == "solve":
            return run_solve(cfg, args.out)
        if args.command == "verify":
            only = set(args.only.split(",")) if args.only else None
            return run_verify(cfg, args.out, args.quick, only)
        return run_sweep(cfg, args.out)
    except BoundaryError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
