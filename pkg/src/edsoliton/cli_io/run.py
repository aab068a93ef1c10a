"""Orchestration of solve -> continue -> verify, and the plain-data writers."""

from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from .. import linearized as lin
from ..choquard import ConvergenceError, scaling_law_check, solve_ground_state
from ..einstein_dirac import (Branch, NoBranchError, PerturbedState, continue_branch,
                              continuity_slope, diagnostics, jacobian, physical_residual)
from ..einstein_dirac.checks import jacobian_fd_mismatch, smooth_direction
from ..radial import build_grid, default_r_max
from .config import RunConfig

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONVERGENCE, EXIT_CONFIG = 0, 2, 3

CHOQUARD_COLUMNS = ("r", "phi0", "chi0", "tau0", "u0")
BRANCH_COLUMNS = ("eps", "omega", "adm_mass", "norm_integral", "condQ_margin", "min_A", "newton_iters",
                  "res_phi", "res_chi", "res_tau", "phys_res_1", "phys_res_2", "phys_res_3", "phys_res_4")
PROFILE_COLUMNS = ("r", "Phi1", "Phi2", "T", "A")
PLOT_BRANCH_COLUMNS = ("omega", "adm_mass", "norm_integral")
PLOT_PROFILE_COLUMNS = ("eps", "r", "Phi1", "Phi2", "A_minus_1", "T_minus_1")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in row] for row in rows[1:]]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_writable(outdir: Path) -> None:
    """Create the directory and prove it accepts files; raises OSError otherwise."""
    outdir.mkdir(parents=True, exist_ok=True)
    if not os.access(outdir, os.W_OK | os.X_OK):
        raise PermissionError(f"output directory {outdir} is not writable")
    fd, probe = tempfile.mkstemp(dir=outdir, prefix=".probe")
    os.close(fd)
    os.unlink(probe)


# -- rows ---------------------------------------------------------------------

def branch_rows(branch: Branch, delta_A: float):
    """Branch table rows; points failing condQ or the A floor are never written."""
    rows, rejected = [], []
    for p in branch.points:
        ps = p.physical
        if not (ps.condQ_margin > 0 and ps.min_A >= delta_A):
            rejected.append(p.eps)
            continue
        pr = physical_residual(ps)
        rows.append([p.eps, ps.omega, ps.adm_mass, ps.norm_integral, ps.condQ_margin, ps.min_A,
                     int(p.newton_iters), *p.residual_norms, *pr.norms])
    return rows, rejected


def profile_rows(point):
    ps = point.physical
    return np.column_stack([ps.grid.nodes, ps.Phi1.values, ps.Phi2.values, ps.T, ps.A_field.values])


def profile_name(eps: float) -> str:
    return f"profile_eps_{eps:.6e}.csv"


def emit_plotdata(branch: Branch, outdir: Path) -> list:
    """plot_branch.csv (omega, adm_mass, norm_integral) and plot_profiles.csv at 3 sampled eps."""
    pts = branch.points
    write_csv(outdir / "plot_branch.csv", PLOT_BRANCH_COLUMNS,
              [[p.physical.omega, p.physical.adm_mass, p.physical.norm_integral] for p in pts])
    if len(pts) <= 3:
        chosen = list(pts)
    else:
        chosen = [pts[1], pts[(len(pts) + 1) // 2], pts[-1]]
    rows = []
    for p in chosen:
        ps = p.physical
        for r, a, b, am, tm in zip(ps.grid.nodes, ps.Phi1.values, ps.Phi2.values,
                                   ps.A_field.values - 1, ps.t_field.values):
            rows.append([p.eps, r, a, b, am, tm])
    write_csv(outdir / "plot_profiles.csv", PLOT_PROFILE_COLUMNS, rows)
    return ["plot_branch.csv", "plot_profiles.csv"]


def dump_matrix(op: lin.LinearOperator, outdir: Path, stem: str) -> list:
    """Column-major float64 binary plus a JSON header."""
    mat = np.asfortranarray(op.matrix, dtype="<f8")
    (outdir / f"{stem}.bin").write_bytes(mat.tobytes(order="F"))
    write_json(outdir / f"{stem}.json", {
        "provenance": op.provenance, "N": op.grid.n_nodes, "shape": list(mat.shape),
        "dtype": "float64-le", "order": "column-major",
        "block_layout": [[role, size] for role, size in op.col_layout]})
    return [f"{stem}.bin", f"{stem}.json"]


# -- certificates ---------------------------------------------------------------

def spectrum_certificates(cfg: RunConfig) -> dict:
    m = cfg.m
    p = cfg.grid.grading_exponent
    ops = {"L_choquard": [], "V": [], "W": [], "D_prime": []}
    identity = {}
    for n in cfg.certificates.refinements:
        grid = build_grid(n, cfg.r_max, p)
        sol = solve_ground_state(m, grid, cfg.choquard)
        ops["L_choquard"].append(lin.assemble_linearized_choquard(sol))
        ops["V"].append(lin.assemble_V(m, grid))
        ops["W"].append(lin.assemble_W(sol))
        ops["D_prime"].append(lin.assemble_D_prime(sol))
        identity[str(n)] = lin.smallest_singular_value(lin.identity_operator(grid))
    out = {name: lin.nondegeneracy_report(group).to_dict() for name, group in ops.items()}
    out["identity_sigma_min"] = identity

    n = cfg.certificates.svd_nodes
    grid = build_grid(n, cfg.r_max, p)
    sol = solve_ground_state(m, grid, cfg.choquard)
    s = lin.singular_values(lin.assemble_S(sol))
    k = int(np.ceil(0.1 * n))
    out["S_decay"] = {"N": n, "sigma_1": s[0], "k": k, "sigma_k_over_sigma_1": s[k] / s[0],
                      "sigma_2_over_sigma_1": s[1] / s[0], "passes": bool(np.all(s[k:] < 0.01 * s[0]))}
    d = lin.assemble_D_prime(sol)
    ws = lin.assemble_W(sol) + lin.assemble_S(sol)
    j0 = jacobian(PerturbedState.from_choquard(sol)).matrix
    out["assembly_identity"] = {"N": n, "max_abs_Dprime_minus_W_plus_S": float(np.max(np.abs(d.matrix - ws))),
                                "max_abs_jacobian0_minus_Dprime": float(np.max(np.abs(j0 - d.matrix)))}
    return out


def fd_certificates(cfg: RunConfig, sol) -> dict:
    rng = np.random.default_rng(cfg.certificates.seed)
    out = {}
    for frac in cfg.certificates.fd_eps_fractions:
        st = PerturbedState.from_choquard(sol, frac * cfg.m)
        worst = 0.0
        rows = []
        for _ in range(cfg.certificates.fd_directions):
            res = jacobian_fd_mismatch(st, smooth_direction(sol.grid, rng))
            rows.append(res)
            worst = max(worst, res["best"])
        out[f"{frac:g}m"] = {"worst_relative_mismatch": worst, "directions": rows}
    return out


def branch_summary(branch: Branch, slope_decades: float = 1.0) -> dict:
    pts = branch.points
    diags = [diagnostics(p.physical) for p in pts[1:]]
    return {
        "points": len(pts), "stop_reason": branch.stop_reason,
        "eps_last": pts[-1].eps, "max_newton_iters": max((p.newton_iters for p in pts), default=0),
        "max_rescaled_residual": max(max(p.residual_norms) for p in pts),
        "continuity_slope": continuity_slope(branch, slope_decades),
        "min_condQ_margin": min((d["condQ_margin"] for d in diags), default=None),
        "min_A": min((d["min_A"] for d in diags), default=None),
        "max_adm_two_route_rel": max((d["adm_two_route_rel"] for d in diags), default=None),
        "max_adm_plateau_variation": max((d["adm_plateau_variation"] for d in diags), default=None),
        "all_T_tail_ok": all(d["T_tail_ok"] for d in diags),
        "step_log": list(branch.log),
    }


# -- run ----------------------------------------------------------------------

def run(cfg: RunConfig, outdir: str | Path | None = None, emit=None) -> int:
    outdir = Path(outdir if outdir is not None else cfg.outputs)
    emit = tuple(emit if emit is not None else cfg.emit)
    try:
        ensure_writable(outdir)
    except OSError as exc:
        log.error("cannot write to %s: %s", outdir, exc)
        return EXIT_CONFIG

    certs: dict = {"status": "running", "config": {
        "m": cfg.m, "eps_max": cfg.eps_max_value, "n_nodes": cfg.grid.n_nodes, "r_max": cfg.r_max,
        "grading_exponent": cfg.grid.grading_exponent, "delta_A": cfg.solver.delta_A}}
    files: list = []

    def flush(status: str) -> None:
        certs["status"] = status
        certs["files"] = sorted(files)
        if "certificates" in emit:
            write_json(outdir / "certificates.json", certs)

    grid = build_grid(cfg.grid.n_nodes, cfg.r_max, cfg.grid.grading_exponent)
    try:
        sol = solve_ground_state(cfg.m, grid, cfg.choquard)
    except ConvergenceError as exc:
        log.error("ground state failed: %s", exc)
        certs["error"] = str(exc)
        flush("convergence_failure")
        return EXIT_CONVERGENCE
    u0 = sol.u0
    certs["choquard"] = {
        "residual_norm": sol.residual_norm, "lambda_scf": sol.lambda_scf, "mass_integral": sol.mass_integral,
        "scf_iterations": sol.scf_iterations, "newton_iterations": sol.newton_iterations,
        "positive": bool(np.all(sol.phi0.values[:-1] > 0)), "monotone": bool(np.all(np.diff(u0) <= 0)),
        "u0_at_origin_node": float(u0[0]), "r_max_default": default_r_max(cfg.m)}
    if "profiles" in emit:
        write_csv(outdir / "choquard_profile.csv", CHOQUARD_COLUMNS,
                  np.column_stack([grid.nodes, sol.phi0.values, sol.chi0.values, sol.tau0.values, u0]))
        files.append("choquard_profile.csv")

    try:
        branch = continue_branch(cfg.eps_max_value, cfg.solver, sol)
    except (NoBranchError, ConvergenceError) as exc:
        log.error("continuation failed: %s", exc)
        certs["error"] = str(exc)
        flush("convergence_failure")
        return EXIT_CONVERGENCE
    certs["branch"] = branch_summary(branch)

    if "branch" in emit:
        rows, rejected = branch_rows(branch, cfg.solver.delta_A)
        write_csv(outdir / "branch.csv", BRANCH_COLUMNS, rows)
        certs["branch"]["rejected_rows"] = rejected
        files.append("branch.csv")
        files.extend(emit_plotdata(branch, outdir))
    if "profiles" in emit:
        for p in branch.points:
            name = profile_name(p.eps)
            write_csv(outdir / name, PROFILE_COLUMNS, profile_rows(p))
            files.append(name)
    if "certificates" in emit:
        flush("partial")
        certs["spectra"] = spectrum_certificates(cfg)
        certs["jacobian_fd"] = fd_certificates(cfg, sol)
        certs["scaling_law"] = scaling_law_check(cfg.certificates.scaling_masses, cfg.grid.n_nodes,
                                                 cfg.grid.grading_exponent, cfg.choquard)
    if "matrices" in emit:
        mgrid = build_grid(cfg.certificates.matrix_nodes, cfg.r_max, cfg.grid.grading_exponent)
        msol = solve_ground_state(cfg.m, mgrid, cfg.choquard)
        for op in (lin.assemble_V(cfg.m, mgrid), lin.assemble_W(msol), lin.assemble_S(msol),
                   lin.assemble_D_prime(msol), lin.assemble_linearized_choquard(msol)):
            files.extend(dump_matrix(op, outdir, f"matrix_{op.provenance}"))
    flush("ok")
    return EXIT_OK
