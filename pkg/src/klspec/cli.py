"""Command-line front end.

Reads a JSON problem definition, runs the requested solver, and emits a
machine-readable JSON report plus plot-ready CSV files.  All numeric CSV
fields use 17 significant digits with a dot decimal separator, so binary
doubles round-trip losslessly and identical configs produce bit-identical
outputs.

Exit codes: 0 converged / 2 infeasible constraint set / 3 boundary
proximity / 4 iteration budget exhausted / 1 malformed input.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .dual import dual_solve
from .exceptions import (
    KLSpecError,
    LineSearchStalled,
    MaxIterationsExceeded,
    UnsupportedDimension,
)
from .filterbank import circle_grid, quadratic_form, validate_filterbank
from .hermitian import state_matrix
from .problem import (
    check_feasibility,
    normalize,
    raw_problem,
    rational_density_samples,
)
from .solver import (
    Termination,
    construct_N0_member,
    instability_probe,
    moment_residual,
    reconstruct_phi,
    solve,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_BOUNDARY = 3
EXIT_MAX_ITER = 4

_TERMINATION_EXIT = {
    Termination.CONVERGED: EXIT_OK,
    Termination.BOUNDARY_PROXIMITY: EXIT_BOUNDARY,
    Termination.MAX_ITERATIONS: EXIT_MAX_ITER,
}


class ConfigError(Exception):
    """Schema violation; ``key`` names the offending config entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(key, "missing required key")
    return cfg[key]


def _as_int(cfg: dict, key: str, default=None) -> int:
    val = cfg.get(key, default)
    if val is None:
        raise ConfigError(key, "missing required key")
    if not isinstance(val, int) or isinstance(val, bool):
        raise ConfigError(key, f"expected an integer, got {val!r}")
    return val


def _as_real(cfg: dict, key: str, default) -> float:
    val = cfg.get(key, default)
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not np.isfinite(val):
        raise ConfigError(key, f"expected a finite number, got {val!r}")
    return float(val)


def _complex_entry(entry, key: str) -> complex:
    if (not isinstance(entry, (list, tuple)) or len(entry) != 2
            or not all(isinstance(p, (int, float)) and not isinstance(p, bool)
                       for p in entry)):
        raise ConfigError(key, f"expected a [re, im] pair, got {entry!r}")
    val = complex(entry[0], entry[1])
    if not np.isfinite(val):
        raise ConfigError(key, f"non-finite entry {entry!r}")
    return val


def _complex_matrix(raw, key: str, n: int) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != n * n:
        raise ConfigError(key, f"expected a row-major list of {n * n} [re, im] pairs")
    flat = [_complex_entry(e, key) for e in raw]
    return np.array(flat, dtype=np.complex128).reshape(n, n)


def _complex_vector(raw, key: str, n: int) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != n:
        raise ConfigError(key, f"expected a list of {n} [re, im] pairs")
    return np.array([_complex_entry(e, key) for e in raw], dtype=np.complex128)


def _coefficients(raw, key: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise ConfigError(key, "expected a non-empty list of coefficients")
    out = []
    for entry in raw:
        if isinstance(entry, (int, float)) and not isinstance(entry, bool):
            if not np.isfinite(entry):
                raise ConfigError(key, f"non-finite coefficient {entry!r}")
            out.append(complex(entry))
        else:
            out.append(_complex_entry(entry, key))
    return np.array(out, dtype=np.complex128)


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be an object")
    return cfg


def build_problem_parts(cfg: dict):
    """Parse and validate a config into (fb, sigma, psi_raw, grid, tol, ...)."""
    n = _as_int(cfg, "n")
    if n < 1:
        raise ConfigError("n", f"state dimension must be positive, got {n}")
    grid_size = _as_int(cfg, "grid_size", 2048)
    tol = _as_real(cfg, "tol", 1e-9)
    max_iter = _as_int(cfg, "max_iter", 10000)
    if max_iter < 1:
        raise ConfigError("max_iter", "must be positive")
    if not 0.0 < tol < 1.0:
        raise ConfigError("tol", f"must lie in (0, 1), got {tol!r}")

    a = _complex_matrix(_require(cfg, "A"), "A", n)
    b = _complex_vector(_require(cfg, "B"), "B", n)
    try:
        grid = circle_grid(grid_size)
    except KLSpecError as exc:
        raise ConfigError("grid_size", str(exc)) from exc
    try:
        fb = validate_filterbank(a, b)
    except KLSpecError as exc:
        raise ConfigError("A", str(exc)) from exc

    if "Sigma" in cfg:
        sigma = _complex_matrix(cfg["Sigma"], "Sigma", n)
    else:
        sigma = np.eye(n, dtype=np.complex128)

    psi_cfg = _require(cfg, "psi")
    if not isinstance(psi_cfg, dict) or "type" not in psi_cfg:
        raise ConfigError("psi", "expected an object with a 'type' key")
    kind = psi_cfg["type"]
    if kind == "constant":
        psi_raw = np.ones(grid.size)
    elif kind == "samples":
        values = psi_cfg.get("values")
        if (not isinstance(values, list) or len(values) != grid.size
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                           for v in values)):
            raise ConfigError("psi.values", f"expected {grid.size} numeric samples")
        psi_raw = np.asarray(values, dtype=np.float64)
    elif kind == "rational":
        num = _coefficients(psi_cfg.get("num"), "psi.num")
        den = _coefficients(psi_cfg.get("den"), "psi.den")
        try:
            psi_raw = rational_density_samples(grid, num, den)
        except KLSpecError as exc:
            raise ConfigError("psi.den", str(exc)) from exc
    else:
        raise ConfigError("psi.type", f"unknown prior type {kind!r}")

    lam0_cfg = cfg.get("lambda0", {"type": "scaled-identity"})
    if not isinstance(lam0_cfg, dict) or "type" not in lam0_cfg:
        raise ConfigError("lambda0", "expected an object with a 'type' key")
    if lam0_cfg["type"] == "scaled-identity":
        lam0 = None
    elif lam0_cfg["type"] == "matrix":
        try:
            lam0 = state_matrix(_complex_matrix(lam0_cfg.get("values"), "lambda0.values", n))
        except KLSpecError as exc:
            raise ConfigError("lambda0.values", str(exc)) from exc
    else:
        raise ConfigError("lambda0.type", f"unknown start type {lam0_cfg['type']!r}")

    return fb, sigma, psi_raw, grid, tol, max_iter, lam0


def _matrix_pairs(m: np.ndarray) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(m).ravel()]


def _provenance(cfg: dict, grid_size: int, started: float) -> dict:
    return {
        "config": cfg,
        "grid_size": grid_size,
        "wall_clock_seconds": time.monotonic() - started,
        "library_version": __version__,
    }


def _write_json(path: str | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path is None:
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def _write_csv(path: str | None, header: str, rows) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _solve_report_doc(cfg, report, feas, prob, grid, started) -> dict:
    doc = {
        "termination": report.termination.value,
        "iterations_used": report.iterations_used,
        "classification": (report.classification.variant.value
                           if report.classification else None),
        "cond1_margin": (report.classification.cond1_margin
                         if report.classification else None),
        "cond2_residual": (_finite_or_none(report.classification.cond2_residual)
                           if report.classification else None),
        "moment_residual": report.moment_residual,
        "feasibility": {"feasible": feas.feasible, "residual": feas.residual},
        "trajectory": [[row.k, row.j_value, row.delta_j, row.fp_residual,
                        row.min_eig, row.trace_err] for row in report.trajectory],
        "final_lambda": _matrix_pairs(report.final_lambda.matrix),
        "provenance": _provenance(cfg, grid.size, started),
    }
    return doc


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


def cmd_solve(args) -> int:
    started = time.monotonic()
    cfg = load_config(args.config)
    fb, sigma, psi_raw, grid, tol, max_iter, lam0 = build_problem_parts(cfg)
    raw = raw_problem(fb, sigma, psi_raw, grid)
    feas = check_feasibility(fb, sigma)
    if not feas.feasible:
        doc = {
            "termination": None,
            "iterations_used": 0,
            "classification": None,
            "cond1_margin": None,
            "cond2_residual": None,
            "moment_residual": None,
            "feasibility": {"feasible": False, "residual": feas.residual},
            "trajectory": [],
            "final_lambda": None,
            "provenance": _provenance(cfg, grid.size, started),
        }
        _write_json(args.output, doc)
        print(f"error: Sigma: infeasible constraint set "
              f"(residual={_fmt(feas.residual)})", file=sys.stderr)
        return EXIT_INFEASIBLE

    prob = normalize(raw)
    report = solve(prob, lam0, tol=tol, max_iter=max_iter)

    for row in report.trajectory:
        if row.delta_j > 1e-9:
            print("error: trajectory: J column not non-increasing", file=sys.stderr)
            return EXIT_INPUT

    doc = _solve_report_doc(cfg, report, feas, prob, grid, started)
    _write_json(args.output, doc)
    _write_csv(args.trajectory_csv, "iter,J,delta_J,fp_residual,min_eig,trace_err",
               ([str(row.k), _fmt(row.j_value), _fmt(row.delta_j),
                 _fmt(row.fp_residual), _fmt(row.min_eig), _fmt(row.trace_err)]
                for row in report.trajectory))
    phi_rows = []
    if report.phi_hat is not None:
        phi_rows = [[_fmt(t), _fmt(p), _fmt(s)] for t, p, s in
                    zip(grid.nodes, report.phi_hat, prob.prior.psi)]
    _write_csv(args.phi_csv, "theta,phi_hat,psi", phi_rows)

    print(f"termination={report.termination.value} "
          f"iterations={report.iterations_used} "
          f"classification={doc['classification']}")
    return _TERMINATION_EXIT[report.termination]


def cmd_check_feasibility(args) -> int:
    cfg = load_config(args.config)
    fb, sigma, _, _, _, _, _ = build_problem_parts(cfg)
    feas = check_feasibility(fb, sigma)
    print(f"feasible={'true' if feas.feasible else 'false'}")
    print(f"residual={_fmt(feas.residual)}")
    print(f"H={json.dumps(_matrix_pairs(feas.certificate))}")
    return EXIT_OK if feas.feasible else EXIT_INFEASIBLE


def cmd_dual_solve(args) -> int:
    started = time.monotonic()
    cfg = load_config(args.config)
    fb, sigma, psi_raw, grid, tol, max_iter, _ = build_problem_parts(cfg)
    raw = raw_problem(fb, sigma, psi_raw, grid)
    feas = check_feasibility(fb, sigma)
    prob = normalize(raw)
    try:
        result = dual_solve(prob, tol=max(tol, 1e-8), max_iter=max_iter * 5)
    except (MaxIterationsExceeded, LineSearchStalled) as exc:
        print(f"error: dual-solve: {exc}", file=sys.stderr)
        return EXIT_MAX_ITER

    phi = reconstruct_phi(prob, result.lam)
    q_dual = quadratic_form(prob.response, result.lam)
    doc = {
        "termination": "Converged",
        "iterations_used": result.iterations,
        "j_value": result.j_value,
        "grad_norm": result.grad_norm,
        "cond1_margin": float(q_dual.min()),
        "cond2_residual": moment_residual(prob, phi),
        "moment_residual": moment_residual(prob, phi),
        "feasibility": {"feasible": feas.feasible, "residual": feas.residual},
        "trajectory": [[k, j] for k, j in enumerate(result.j_trajectory)],
        "final_lambda": _matrix_pairs(result.lam),
        "provenance": _provenance(cfg, grid.size, started),
    }
    _write_json(args.output, doc)
    _write_csv(args.phi_csv, "theta,phi_hat,psi",
               ([_fmt(t), _fmt(p), _fmt(s)] for t, p, s in
                zip(grid.nodes, phi, prob.prior.psi)))

    if args.compare is not None:
        try:
            with open(args.compare, "r", encoding="utf-8") as fh:
                other = json.load(fh)
            pairs = other["final_lambda"]
            n = prob.n
            lam_pf = np.array([complex(p[0], p[1]) for p in pairs]).reshape(n, n)
        except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError("compare", f"cannot load final_lambda: {exc}") from exc
        q_pf = quadratic_form(prob.response, lam_pf)
        discrepancy = float(np.max(np.abs(q_dual - q_pf) / np.abs(q_pf)))
        print(f"spectrum_sup_discrepancy={_fmt(discrepancy)}")

    print(f"termination=Converged iterations={result.iterations} "
          f"grad_norm={_fmt(result.grad_norm)}")
    return EXIT_OK


def cmd_probe_instability(args) -> int:
    cfg = load_config(args.config)
    fb, sigma, psi_raw, grid, _, max_iter, _ = build_problem_parts(cfg)
    raw = raw_problem(fb, sigma, psi_raw, grid)
    prob = normalize(raw)

    try:
        eps_list = [float(s) for s in args.eps_list.split(",") if s]
    except ValueError as exc:
        raise ConfigError("eps-list", f"expected comma-separated floats: {exc}") from exc
    if not eps_list:
        raise ConfigError("eps-list", "no epsilon values given")

    # Snap the requested frequency to the nearest grid node.
    k = int(np.argmin(np.abs(grid.nodes - args.theta_bar)))
    theta = float(grid.nodes[k])
    x_bar = construct_N0_member(prob, theta)

    rows = []
    for eps in eps_list:
        probe = instability_probe(prob, x_bar, eps, max_iter=max_iter)
        rows.append([_fmt(eps), _fmt(probe.j_at_projection),
                     _fmt(probe.j_at_perturbed),
                     "true" if probe.escaped else "false"])
    header = "eps,J_at_P,J_at_perturbed,escaped"
    if args.output:
        _write_csv(args.output, header, rows)
    else:
        print(header)
        for row in rows:
            print(",".join(row))
    print(f"theta_bar={_fmt(theta)}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="klspec",
        description="Kullback-Leibler optimal spectral approximation "
                    "under filter-bank covariance constraints",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the fixed-point solver")
    p.add_argument("config")
    p.add_argument("--output", help="report JSON path")
    p.add_argument("--phi-csv", dest="phi_csv", help="optimal spectrum CSV path")
    p.add_argument("--trajectory-csv", dest="trajectory_csv", help="iteration CSV path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check-feasibility", help="test the covariance constraint only")
    p.add_argument("config")
    p.set_defaults(func=cmd_check_feasibility)

    p = sub.add_parser("dual-solve", help="run the projected-gradient cross-check")
    p.add_argument("config")
    p.add_argument("--output", help="report JSON path")
    p.add_argument("--phi-csv", dest="phi_csv", help="optimal spectrum CSV path")
    p.add_argument("--compare", help="prior solve report to compare spectra against")
    p.set_defaults(func=cmd_dual_solve)

    p = sub.add_parser("probe-instability",
                       help="perturb a boundary fixed point and watch it escape")
    p.add_argument("config")
    p.add_argument("--theta-bar", dest="theta_bar", type=float, required=True)
    p.add_argument("--eps-list", dest="eps_list", default="1e-2,1e-3,1e-4")
    p.add_argument("--output", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_probe_instability)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnsupportedDimension as exc:
        print(f"error: n: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KLSpecError as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
