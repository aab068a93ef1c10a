"""Fast self-test: the elementary contract examples of every module on small grids."""

from __future__ import annotations

import logging
import tempfile
import time
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import linearized as lin
from ..choquard import choquard_residual, derive_chi, derive_tau, solve_ground_state
from ..einstein_dirac import (NewtonFailure, PerturbedState, SolverConfig, continue_branch, diagnostics,
                              jacobian, k_terms, metric_A, newton_correct, normalized_solution,
                              physical_residual, residual_D, unrescale, vacuum)
from ..radial import (OriginClass, RadialField, TailClass, build_grid, default_r_max, differentiate,
                      grid_nodes, integrate_prefix, newtonian_kernel, pointwise_bound_check, x_tau_norm)
from .config import ConfigError, RunConfig, parse_config_text
from .run import EXIT_CONFIG, PLOT_BRANCH_COLUMNS, emit_plotdata, read_csv, run

VR = OriginClass.VANISHES_LIKE_R
V2 = OriginClass.VANISHES_LIKE_R2
FIN = OriginClass.FINITE_LIMIT

M = 0.5
N_SMALL = 200


@lru_cache(maxsize=None)
def _grid():
    return build_grid(N_SMALL, default_r_max(M), 2.0)


@lru_cache(maxsize=None)
def _sol():
    return solve_ground_state(M, _grid())


@lru_cache(maxsize=None)
def _fine_sol():
    # identities between two discretisations hold to rounding only once both are resolved
    return solve_ground_state(M, build_grid(800, default_r_max(M), 2.0))


def _zero(cls=VR, tail=TailClass.EXPONENTIAL):
    return RadialField(_grid(), np.zeros(N_SMALL), cls, tail)


def _zero_state(eps=0.0):
    return PerturbedState(eps, M, _zero(VR), _zero(V2), _zero(FIN, TailClass.INVERSE_R))


def _close(a, b, tol):
    err = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    return err <= tol, f"max diff {err:.3g}"


# -- radial_core -------------------------------------------------------------

def grid_uniform():
    return _close(grid_nodes(4, 1.0, 1.0), [0.25, 0.5, 0.75, 1.0], 1e-15)


def grid_quadratic():
    return _close(grid_nodes(4, 1.0, 2.0), [0.0625, 0.25, 0.5625, 1.0], 1e-15)


def prefix_zero():
    return _close(integrate_prefix(_zero(FIN)).values, 0.0, 0.0)


def prefix_constant():
    g = build_grid(32, 1.0, 1.0)
    f = RadialField(g, np.ones(32), FIN, TailClass.ZERO)
    return _close(integrate_prefix(f).values, g.nodes, 1e-12)


def kernel_zero():
    return _close(newtonian_kernel(_zero(V2)).values, 0.0, 0.0)


def kernel_monotone():
    g = _grid()
    r = g.nodes
    f = RadialField(g, r ** 2 * np.exp(-r) * (1 + np.sin(3 * r) ** 2), V2)
    d = np.diff(newtonian_kernel(f).values)
    return bool(np.all(d <= 1e-14)), f"max increment {d.max():.3g}"


def derivative_constant():
    g = build_grid(64, 10.0, 1.0)
    return _close(differentiate(RadialField(g, np.full(64, 3.0), FIN)).values, 0.0, 1e-12)


def derivative_quadratic():
    g = build_grid(64, 10.0, 1.0)
    r = g.nodes
    d = differentiate(RadialField(g, r ** 2, V2)).values
    return _close(d[1:-1], 2 * r[1:-1], 1e-12 * g.r_max)


def tau_norm_zero():
    v = x_tau_norm(_zero(FIN, TailClass.INVERSE_R))
    return v == 0.0, f"x_tau = {v}"


def bound_zero():
    res = pointwise_bound_check(_zero())
    return res.passed and res.worst_ratio == 0.0, str(res)


def bound_degenerate():
    res = pointwise_bound_check(RadialField(_grid(), _grid().nodes, VR))
    return res.passed and res.note.startswith("degenerate"), str(res)


# -- choquard -----------------------------------------------------------------

def ground_state_nontrivial():
    s = _sol()
    return s.mass_integral > 0 and bool(np.all(s.phi0.values[:-1] > 0)), f"mass {s.mass_integral:.6g}"


def chi_of_linear():
    return _close(derive_chi(RadialField(_grid(), 2.5 * _grid().nodes, VR), M).values, 0.0, 1e-12)


def chi_two_forms():
    phi = _fine_sol().phi0
    g = phi.grid
    u = phi.values / g.nodes
    other = -(g.nodes / (2 * M)) * (g.derivative_matrix(FIN) @ u)
    return _close(derive_chi(phi, M).values, other, 1e-12)


def tau_of_zero():
    return _close(derive_tau(_zero(), M).values, 0.0, 0.0)


def tau_at_origin():
    phi = _fine_sol().phi0
    g = phi.grid
    tau = derive_tau(phi, M)
    t0 = float(g.ghost_row(FIN) @ tau.values)
    direct = 8 * np.pi * M * g.integrate_values(phi.values ** 2 / g.nodes, VR)
    return abs(t0 - direct) <= 1e-12 * abs(direct), f"{t0!r} vs {direct!r}"


def residual_of_zero():
    v = choquard_residual(_zero(), M)
    return v == 0.0, f"residual {v}"


def residual_of_double():
    phi = _sol().phi0
    v = choquard_residual(phi.like(2 * phi.values), M)
    return v > 1e-3, f"residual {v:.3g}"


# -- linearized ---------------------------------------------------------------

def l_symmetric():
    # symmetry of the L^2(R^3) form <g, L h> on smooth decaying profiles
    g = _grid()
    op = lin.assemble_linearized_choquard(_sol())
    r = g.nodes[:-1]
    w = g.weights[:-1]
    h1, h2 = r * np.exp(-r), r ** 2 * np.exp(-r / 2)
    a, b = np.sum(w * h2 * (op @ h1)), np.sum(w * h1 * (op @ h2))
    asym = abs(a - b) / abs(a)
    return asym < 1e-10, f"relative asymmetry {asym:.3g}"


def l_free_spectrum():
    op = lin.assemble_linearized_choquard(_sol(), u0=np.zeros(N_SMALL))
    sig = lin.smallest_singular_value(op)
    ev = np.linalg.eigvals(op.matrix)
    low = ev[np.abs(ev) < 50]
    ok = sig >= 2 * M and low.real.min() >= 2 * M
    return ok, f"sigma_min {sig:.6g}, lowest resolved eigenvalue {low.real.min():.6g}"


def v_definition_chase():
    s = _sol()
    st = PerturbedState(0.0, M, s.phi0, s.chi0, _zero(FIN, TailClass.INVERSE_R))
    res = residual_D(st)
    v = lin.assemble_V(M, _grid()) @ np.concatenate([s.phi0.values, s.chi0.values])
    terms = np.concatenate([res.res_phi.values, res.res_chi.values])
    # rounding is set by the size of the cancelling phi/r^2 terms near the origin
    scale = np.max(np.abs(s.phi0.values / _grid().nodes ** 2))
    return _close(v, terms, 1e-14 * scale)


def _zero_image(op):
    return _close(op @ np.zeros(op.shape[1]), 0.0, 0.0)


def v_zero():
    return _zero_image(lin.assemble_V(M, _grid()))


def w_zero():
    return _zero_image(lin.assemble_W(_sol()))


def s_zero():
    return _zero_image(lin.assemble_S(_sol()))


def dprime_zero():
    return _zero_image(lin.assemble_D_prime(_sol()))


def identity_sigma():
    vals = [lin.smallest_singular_value(lin.identity_operator(build_grid(n, 10.0))) for n in (32, 64)]
    return _close(vals, 1.0, 1e-10)


def solve_zero_rhs():
    op = lin.assemble_D_prime(_sol())
    return _close(lin.solve_linear(op, np.zeros(op.shape[0])), 0.0, 0.0)


def solve_round_trip():
    op = lin.assemble_D_prime(_sol())
    x = np.random.default_rng(7).standard_normal(op.shape[0])
    y = lin.solve_linear(op, op @ x)
    err = float(np.max(np.abs(y - x)) / np.max(np.abs(x)))
    return err < 1e-10, f"relative error {err:.3g}"


# -- einstein_dirac -----------------------------------------------------------

def metric_flat_at_zero():
    return _close(metric_A(PerturbedState.from_choquard(_sol())).values, 1.0, 0.0)


def k_terms_vanish():
    ks = k_terms(PerturbedState.from_choquard(_sol()))
    return _close(np.concatenate([k.values for k in ks]), 0.0, 0.0)


def residual_zero_fields():
    res = residual_D(_zero_state())
    return _close(res.vector(), 0.0, 0.0)


def jacobian_reduces():
    st = PerturbedState.from_choquard(_sol())
    return _close(jacobian(st).matrix, lin.assemble_D_prime(_sol()).matrix, 1e-12)


def dl1_dtau_flat_phi():
    g = _grid()
    r = g.nodes
    eps = 0.01
    chi = r ** 2 * np.exp(-r)
    st = PerturbedState(eps, M, _zero(VR), RadialField(g, chi, V2), _zero(FIN, TailClass.INVERSE_R))
    n = N_SMALL
    h3 = np.exp(-r / 3)
    got = (jacobian(st).matrix[:n, 2 * n:] @ h3)[:-1]
    want = (eps * (M - eps) * h3 * chi / r)[:-1]
    return _close(got, want, 1e-12)


def positivity_failure():
    s = _sol()
    st = PerturbedState.from_choquard(s, 0.2)
    big = st.with_vector(40.0 * st.vector())
    try:
        newton_correct(0.2, big, SolverConfig())
    except NewtonFailure as exc:
        return exc.reason == "positivity", f"reason {exc.reason}"
    return False, "no failure raised"


def stop_reason_contract():
    b = continue_branch(0.002 * M, SolverConfig(), _sol())
    return b.stop_reason in ("eps_max", "positivity wall"), f"stop {b.stop_reason}, {len(b)} points"


def unrescale_at_zero():
    ps = unrescale(PerturbedState.from_choquard(_sol()))
    ok = ps.adm_mass == 0 and not np.any(ps.Phi1.values) and not np.any(ps.Phi2.values)
    return ok, f"adm {ps.adm_mass}"


def vacuum_residual():
    pr = physical_residual(vacuum(M, _grid()))
    return _close(pr.norms, 0.0, 0.0)


def vacuum_diagnostics():
    d = diagnostics(vacuum(M, _grid()))
    ok = (abs(d["condQ_margin"] - 1 / (16 * np.pi * M)) < 1e-15 and d["norm_integral"] == 0
          and d["adm_mass"] == 0)
    return ok, f"margin {d['condQ_margin']!r}"


def zero_target_rejected():
    try:
        normalized_solution(0.01, target=0.0)
    except ValueError:
        return True, "rejected"
    return False, "accepted"


# -- cli_io -------------------------------------------------------------------

def config_minimal():
    cfg = parse_config_text("m = 0.5\n")
    return cfg == RunConfig(m=0.5) and abs(cfg.r_max - 30.0) < 1e-12, f"r_max {cfg.r_max}"


def config_fraction():
    cfg = parse_config_text('m = 0.5\neps_max = "0.1m"\n')
    return abs(cfg.eps_max_value - 0.05) < 1e-15, f"eps_max {cfg.eps_max_value!r}"


def config_small_grid():
    try:
        parse_config_text("m = 0.5\n[grid]\nn_nodes = 4\n")
    except ConfigError as exc:
        return exc.line == 3, str(exc)
    return False, "accepted"


def unwritable_output():
    with tempfile.TemporaryDirectory() as tmp:
        blocker = Path(tmp) / "file"
        blocker.write_text("")
        logger = logging.getLogger("edsoliton.cli_io.run")
        previous, logger.disabled = logger.disabled, True  # the refusal is the expected outcome
        try:
            code = run(RunConfig(m=M), outdir=blocker / "out")
        finally:
            logger.disabled = previous
    return code == EXIT_CONFIG, f"exit {code}"


def plot_single_point():
    from ..einstein_dirac import Branch, BranchPoint
    st = PerturbedState.from_choquard(_sol())
    branch = Branch((BranchPoint(0.0, st, unrescale(st), 0, (0.0, 0.0, 0.0)),), "eps_max")
    with tempfile.TemporaryDirectory() as tmp:
        emit_plotdata(branch, Path(tmp))
        header, rows = read_csv(Path(tmp) / "plot_branch.csv")
    return tuple(header) == PLOT_BRANCH_COLUMNS and len(rows) == 1, f"{header}, {len(rows)} rows"


CHECKS = (
    ("radial_core", grid_uniform), ("radial_core", grid_quadratic), ("radial_core", prefix_zero),
    ("radial_core", prefix_constant), ("radial_core", kernel_zero), ("radial_core", kernel_monotone),
    ("radial_core", derivative_constant), ("radial_core", derivative_quadratic),
    ("radial_core", tau_norm_zero), ("radial_core", bound_zero), ("radial_core", bound_degenerate),
    ("choquard", ground_state_nontrivial), ("choquard", chi_of_linear), ("choquard", chi_two_forms),
    ("choquard", tau_of_zero), ("choquard", tau_at_origin), ("choquard", residual_of_zero),
    ("choquard", residual_of_double),
    ("linearized", l_symmetric), ("linearized", l_free_spectrum), ("linearized", v_definition_chase),
    ("linearized", v_zero), ("linearized", w_zero), ("linearized", s_zero), ("linearized", dprime_zero),
    ("linearized", identity_sigma), ("linearized", solve_zero_rhs), ("linearized", solve_round_trip),
    ("einstein_dirac", metric_flat_at_zero), ("einstein_dirac", k_terms_vanish),
    ("einstein_dirac", residual_zero_fields), ("einstein_dirac", jacobian_reduces),
    ("einstein_dirac", dl1_dtau_flat_phi), ("einstein_dirac", positivity_failure),
    ("einstein_dirac", stop_reason_contract), ("einstein_dirac", unrescale_at_zero),
    ("einstein_dirac", vacuum_residual), ("einstein_dirac", vacuum_diagnostics),
    ("einstein_dirac", zero_target_rejected),
    ("cli_io", config_minimal), ("cli_io", config_fraction), ("cli_io", config_small_grid),
    ("cli_io", unwritable_output), ("cli_io", plot_single_point),
)


def run_selftest(stream=None) -> int:
    """Run every check, print one line each, return 0 iff all pass."""
    import sys
    out = stream or sys.stdout
    t0 = time.perf_counter()
    failed = 0
    for module, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failure, reported like one
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {module}.{check.__name__}: {detail}", file=out)
    print(f"selftest: {len(CHECKS) - failed}/{len(CHECKS)} passed in {time.perf_counter() - t0:.2f} s",
          file=out)
    return 0 if failed == 0 else 1
