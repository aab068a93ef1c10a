import dataclasses

import numpy as np
import pytest
from scipy.integrate import quad

from edsoliton import linearized as lin
from edsoliton.choquard import solve_ground_state
from edsoliton.einstein_dirac import (K3_TERMS, NORM_TARGET, BracketError, NewtonFailure, NoBranchError,
                                      PerturbedState, RescalingMap, SolverConfig, continuity_slope,
                                      continue_branch, diagnostics, distance, jacobian, k3_terms, k_terms,
                                      metric_A, newton_correct, normalized_solution, physical_residual,
                                      residual_compact_L3, residual_D, unrescale, vacuum)
from edsoliton.einstein_dirac.checks import jacobian_fd_mismatch, smooth_direction
from edsoliton.radial import OriginClass, RadialField, TailClass, build_grid, default_r_max, evaluate

from oracles import unsimplified_third_row

VR = OriginClass.VANISHES_LIKE_R
V2 = OriginClass.VANISHES_LIKE_R2
FIN = OriginClass.FINITE_LIMIT


@pytest.fixture(scope="module")
def branch(sol2000):
    return continue_branch(0.05 * 0.5, SolverConfig(), sol2000)


def _synthetic(eps, m=0.5, n=2000, r_max=40.0):
    g = build_grid(n, r_max, 2.0)
    x = g.nodes
    return PerturbedState(eps, m, RadialField(g, x * np.exp(-x)), RadialField(g, x ** 2 * np.exp(-x), V2),
                          RadialField(g, 1 / (1 + x), FIN, TailClass.INVERSE_R))


# -- state and metric ----------------------------------------------------------

def test_state_validation(sol200):
    with pytest.raises(ValueError):
        PerturbedState.from_choquard(sol200, 0.5)
    with pytest.raises(ValueError):
        PerturbedState.from_choquard(sol200, -0.1)
    other = build_grid(200, 30.0)
    with pytest.raises(ValueError):
        PerturbedState(0.0, 0.5, sol200.phi0, sol200.chi0, RadialField(other, np.zeros(200), FIN))


def test_rescaling_map():
    rm = RescalingMap(0.04)
    assert rm.alpha ** 2 == pytest.approx(rm.beta) and rm.beta == rm.gamma
    assert rm.lam == rm.alpha == pytest.approx(0.2)


def test_metric_against_quadrature():
    s1 = solve_ground_state(1.0, build_grid(2000, default_r_max(1.0)))
    g = s1.grid
    zero = np.zeros(g.n_nodes)
    st = PerturbedState(0.01, 1.0, s1.phi0, RadialField(g, zero, V2), RadialField(g, zero, FIN))
    a = metric_A(st).values
    for j in (300, 900, 1500):
        r = g.nodes[j]
        integral = quad(lambda s: evaluate(s1.phi0, s) ** 2, 0, r, epsabs=1e-14, limit=200)[0]
        assert abs(a[j] - (1 - 0.1584 * np.pi / r * integral)) < 1e-9


def test_metric_decreases_with_eps(sol500):
    a = [metric_A(PerturbedState.from_choquard(sol500, e)).values for e in (0.0, 0.001, 0.002, 0.004)]
    for lo, hi in zip(a, a[1:]):
        assert np.all(hi < lo)


def test_metric_positivity_error(sol500):
    st = PerturbedState.from_choquard(sol500, 0.3)
    big = st.with_vector(30 * st.vector())
    with pytest.raises(ValueError) as info:
        metric_A(big, 0.05)
    assert info.value.node is not None and info.value.value <= 0.05


def test_k1_hand_value():
    g = build_grid(50, 5.0)
    one = np.ones(50)
    st = PerturbedState(0.1, 1.0, RadialField(g, g.nodes), RadialField(g, one, V2), RadialField(g, one, FIN))
    assert np.allclose(k_terms(st)[0].values, -0.01, atol=1e-15)


def test_k3_has_ten_named_terms():
    terms = k3_terms(_synthetic(0.02))
    assert tuple(terms) == K3_TERMS


def test_k3_matches_unsimplified_equation():
    eps, m = 0.03, 0.5
    st = _synthetic(eps, m)
    x = st.grid.nodes
    idx = np.array([5, 100, 400, 900, 1500, 1990])
    ref = unsimplified_third_row(x[idx], eps, m, lambda s: s * np.exp(-s), lambda s: s ** 2 * np.exp(-s),
                                 lambda s: 1 / (1 + s), lambda s: -1 / (1 + s) ** 2)
    l3 = residual_D(st).res_tau.values[idx]
    assert np.max(np.abs(l3 - ref)) < 1e-10


def test_k3_sum_matches_compact_form():
    st = _synthetic(0.04)
    l3 = residual_D(st).res_tau.values[:-1]
    assert np.max(np.abs(l3 - residual_compact_L3(st)[:-1])) < 1e-12


# -- residual and Jacobian -------------------------------------------------------

def test_residual_at_ground_state_is_floor(sol500, sol2000):
    r500 = residual_D(PerturbedState.from_choquard(sol500)).norms
    r2000 = residual_D(PerturbedState.from_choquard(sol2000)).norms
    assert max(r2000) < 1e-9
    assert sum(r2000) < sum(r500)


def test_residual_linear_in_small_perturbation(sol2000, rng):
    st = PerturbedState.from_choquard(sol2000)
    d = smooth_direction(sol2000.grid, rng)
    d /= np.max(np.abs(d))
    n1 = residual_D(st.with_vector(st.vector() + 1e-3 * d)).total
    n2 = residual_D(st.with_vector(st.vector() + 2e-3 * d)).total
    assert 0 < n1 < 1e-1
    assert n2 / n1 == pytest.approx(2.0, rel=0.02)


def test_jacobian_at_zero_is_D_prime(sol2000):
    j = jacobian(PerturbedState.from_choquard(sol2000)).matrix
    assert np.max(np.abs(j - lin.assemble_D_prime(sol2000).matrix)) <= 1e-12


@pytest.mark.parametrize("frac", [0.0, 0.01, 0.05])
def test_jacobian_matches_finite_differences(sol2000, frac):
    st = PerturbedState.from_choquard(sol2000, frac * 0.5)
    res = jacobian_fd_mismatch(st, smooth_direction(sol2000.grid, np.random.default_rng(11)))
    assert res["best"] < 1e-5


def test_dl1_dtau_with_flat_phi():
    g = build_grid(300, 20.0)
    r = g.nodes
    eps, m = 0.02, 0.5
    chi = r ** 2 * np.exp(-r)
    zero = np.zeros(300)
    st = PerturbedState(eps, m, RadialField(g, zero), RadialField(g, chi, V2), RadialField(g, zero, FIN))
    h3 = np.cos(r) / (1 + r)
    got = (jacobian(st).matrix[:300, 600:] @ h3)[:-1]
    assert np.allclose(got, (eps * (m - eps) * h3 * chi / r)[:-1], rtol=0, atol=1e-14)


# -- Newton ----------------------------------------------------------------------

def test_newton_at_zero(sol2000):
    st = PerturbedState.from_choquard(sol2000)
    out = newton_correct(0.0, st)
    assert out.iterations <= 2


def test_newton_quadratic_tail(sol2000, rng):
    st = PerturbedState.from_choquard(sol2000)
    d = smooth_direction(sol2000.grid, rng)
    guess = st.with_vector(st.vector() + 1e-2 * d / np.max(np.abs(d)))
    out = newton_correct(0.0, guess, SolverConfig(newton_tol=1e-11), base=st)
    h = out.history
    assert len(h) >= 3
    ratios = [h[k + 1] / h[k] ** 2 for k in range(len(h) - 1) if h[k + 1] > 1e-10]
    assert max(ratios) < 100


def test_newton_ball_exit(sol2000):
    st = PerturbedState.from_choquard(sol2000)
    with pytest.raises(NewtonFailure) as info:
        newton_correct(0.02, st, SolverConfig(ball_radii=(1.000001, 1.000001, 1.000001)))
    assert info.value.reason == "ball_exit" and info.value.iterate is not None


def test_newton_positivity_failure(sol500):
    st = PerturbedState.from_choquard(sol500, 0.2)
    with pytest.raises(NewtonFailure) as info:
        newton_correct(0.2, st.with_vector(40 * st.vector()))
    assert info.value.reason == "positivity"


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(delta_A=1.0)
    with pytest.raises(ValueError):
        SolverConfig(ball_radii=(2.0, 0.5, 2.0))
    with pytest.raises(ValueError):
        SolverConfig(growth=0.9)


# -- branch ----------------------------------------------------------------------

def test_branch_starts_at_ground_state(branch, sol2000):
    p0 = branch.points[0]
    assert p0.eps == 0.0
    assert np.array_equal(p0.state.vector(), PerturbedState.from_choquard(sol2000).vector())


def test_branch_contract(branch):
    eps = branch.eps
    assert np.all(np.diff(eps) > 0)
    assert branch.stop_reason == "eps_max" and eps[-1] == pytest.approx(0.025)
    assert all(max(p.residual_norms) < 1e-8 for p in branch.points)
    assert all(p.physical.condQ_margin > 0 and p.physical.min_A >= 0.05 for p in branch.points)


def test_branch_continuity_slope(branch):
    assert continuity_slope(branch) >= 0.9
    d = [distance(p.state, branch.points[0].state) for p in branch.points[1:4]]
    assert d[0] < d[1] < d[2]


def test_no_branch_error(sol500):
    with pytest.raises(NoBranchError):
        continue_branch(0.01, SolverConfig(delta_A=0.999999), sol500)


def test_eps_max_validation(sol500):
    with pytest.raises(ValueError):
        continue_branch(0.6, SolverConfig(), sol500)


# -- physical fields ---------------------------------------------------------------

@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_unrescale_synthetic():
    g = build_grid(200, 10.0)
    x = g.nodes
    zero = np.zeros(200)
    st = PerturbedState(0.25, 1.0, RadialField(g, x), RadialField(g, zero, V2), RadialField(g, zero, FIN))
    ps = unrescale(st)
    assert np.allclose(ps.Phi1.values, 0.25 * ps.grid.nodes, rtol=1e-15)
    assert ps.omega == 0.75
    fixed = build_grid(100, 15.0)
    ps2 = unrescale(st, fixed)
    assert np.allclose(ps2.Phi1.values, 0.25 * fixed.nodes, rtol=1e-12)


def test_omega_is_m_minus_eps(branch):
    for p in branch.points:
        assert p.physical.omega == 0.5 - p.eps


def test_small_eps_limit(branch):
    p = branch.points[1]
    ps = p.physical
    assert ps.adm_mass < 0.02 and np.max(np.abs(ps.Phi1.values)) < 1e-2
    ratio = ps.norm_integral / (np.sqrt(p.eps) * p.state.phi.grid.integrate_values(p.state.phi.values ** 2))
    assert abs(ratio - 1) < 1e-3


def test_physical_residuals_small(branch):
    for p in branch.points:
        assert physical_residual(p.physical).worst < 1e-6


def test_condq_violation_grows_quadratically(branch):
    ps = branch.points[-1].physical
    e3 = []
    for s in (10.0, 20.0):
        bad = dataclasses.replace(ps, Phi1=ps.Phi1.like(s * ps.Phi1.values))
        e3.append(physical_residual(bad).norms[2])
    assert e3[1] / e3[0] == pytest.approx(4.0, rel=0.05)


def test_diagnostics(branch):
    for p in branch.points[1:]:
        d = diagnostics(p.physical)
        assert d["adm_two_route_rel"] < 5e-3
        assert d["adm_plateau_variation"] < 1e-2
        assert d["gauge_identity_max"] < 1e-10
        assert d["T_tail_ok"]


def test_vacuum():
    g = build_grid(100, 10.0)
    ps = vacuum(0.5, g)
    assert physical_residual(ps).worst == 0.0
    d = diagnostics(ps)
    assert d["condQ_margin"] == pytest.approx(1 / (16 * np.pi * 0.5)) and d["adm_mass"] == 0


def test_normalized_solution_relative():
    m, ps = normalized_solution(0.01, relative=True)
    assert abs(ps.norm_integral - NORM_TARGET) < 1e-6
    assert ps.eps == pytest.approx(0.01 * m)


def test_normalized_solution_rejects_bad_input():
    with pytest.raises(ValueError):
        normalized_solution(0.01, target=0.0)
    with pytest.raises(ValueError):
        normalized_solution(0.0)


def test_bracket_error_lists_samples():
    err = BracketError("no sign change", [(0.5, 0.1), (0.6, 0.2)])
    assert "(0.5, 0.1)" in str(err) and err.table == [(0.5, 0.1), (0.6, 0.2)]
