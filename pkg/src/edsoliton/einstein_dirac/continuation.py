"""Damped Newton correction and natural-parameter continuation in eps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..choquard import ChoquardSolution, ConvergenceError
from ..linearized import SingularOperatorError
from ..radial import x_chi_norm, x_phi_norm, x_tau_norm
from .physical import PhysicalSolution, unrescale
from .system import PerturbedState, PositivityError, jacobian, residual_D

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    delta_A: float = 0.05
    newton_tol: float = 1e-9
    max_newton: int = 12
    armijo: float = 1e-4
    min_damping: float = 1.0 / 64
    # step sizes are fractions of m; eps_step_max None means eps_max/20
    eps_step_initial: float = 1e-5
    eps_step_max: float | None = None
    eps_step_min: float = 1e-6
    growth: float = 1.5
    shrink: float = 0.5
    grow_after: int = 4
    ball_radii: tuple = (2.0, 2.0, 2.0)

    def __post_init__(self):
        if not 0 < self.delta_A < 1:
            raise ValueError("delta_A must lie in (0, 1)")
        if any(not rad > 1 for rad in self.ball_radii) or len(self.ball_radii) != 3:
            raise ValueError("ball_radii must be three numbers > 1")
        if self.newton_tol <= 0 or self.max_newton < 1:
            raise ValueError("newton_tol must be positive and max_newton >= 1")
        if not (self.growth > 1 and 0 < self.shrink < 1):
            raise ValueError("need growth > 1 and 0 < shrink < 1")
        if not 0 < self.eps_step_min <= self.eps_step_initial:
            raise ValueError("need 0 < eps_step_min <= eps_step_initial")
        if self.eps_step_max is not None and self.eps_step_max < self.eps_step_initial:
            raise ValueError("eps_step_max must be >= eps_step_initial")


class NewtonFailure(ConvergenceError):
    """``reason`` is one of 'max_iterations', 'ball_exit', 'positivity', 'line_search', 'singular'."""

    def __init__(self, message, reason, iterate=None, residual=None, history=()):
        super().__init__(message, iterate=iterate, residual=residual)
        self.reason = reason
        self.history = tuple(history)


class NoBranchError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class NewtonResult:
    state: PerturbedState
    iterations: int
    residual_norms: tuple
    history: tuple        # summed Y-norm before each iteration and at the end


def _state_norms(st: PerturbedState) -> np.ndarray:
    return np.array([x_phi_norm(st.phi), x_chi_norm(st.chi), x_tau_norm(st.tau)])


def distance(a: PerturbedState, b: PerturbedState) -> float:
    """Sum of the X-norms of the componentwise difference."""
    return float(np.sum(_state_norms(a.with_vector(a.vector() - b.vector()))))


def newton_correct(eps: float, guess: PerturbedState, cfg: SolverConfig | None = None,
                   base: PerturbedState | None = None) -> NewtonResult:
    """Damped Newton on the residual at ``eps`` starting from ``guess``.

    The iterate must stay in the balls of radius ``cfg.ball_radii`` times the
    X-norms of ``base`` (default: the guess) and keep A above ``cfg.delta_A``.
    """
    cfg = cfg or SolverConfig()
    base = base or guess
    radii = np.asarray(cfg.ball_radii) * _state_norms(base)
    state = guess.with_vector(guess.vector(), eps=eps)
    try:
        res = residual_D(state, cfg.delta_A)
    except PositivityError as exc:
        raise NewtonFailure(str(exc), "positivity", iterate=state) from exc
    history = [res.total]
    for it in range(cfg.max_newton + 1):
        if max(res.norms) < cfg.newton_tol:
            return NewtonResult(state, it, res.norms, tuple(history))
        if it == cfg.max_newton:
            break
        try:
            step = jacobian(state).solve(-res.vector())
        except SingularOperatorError as exc:
            raise NewtonFailure(str(exc), "singular", state, res.total, history) from exc
        y = state.vector()
        t = 1.0
        last_error = None
        while True:
            trial = state.with_vector(y + t * step)
            try:
                tres = residual_D(trial, cfg.delta_A)
                if tres.total <= (1 - cfg.armijo * t) * res.total:
                    break
                last_error = None
            except PositivityError as exc:
                last_error = exc
            t *= 0.5
            if t < cfg.min_damping:
                if last_error is not None:
                    raise NewtonFailure(str(last_error), "positivity", state, res.total, history)
                raise NewtonFailure("line search stalled", "line_search", state, res.total, history)
        if np.any(_state_norms(trial) > radii):
            raise NewtonFailure("iterate left the Newton balls", "ball_exit", trial, tres.total, history)
        state, res = trial, tres
        history.append(res.total)
        log.debug("eps=%.6g newton %d: |D| = %.3e (t=%.3g)", eps, it + 1, res.total, t)
    raise NewtonFailure(f"no convergence in {cfg.max_newton} iterations (|D| = {res.total:.3e})",
                        "max_iterations", state, res.total, history)


@dataclass(frozen=True, eq=False)
class BranchPoint:
    eps: float
    state: PerturbedState
    physical: PhysicalSolution
    newton_iters: int
    residual_norms: tuple

    @property
    def m(self) -> float:
        return self.state.m


@dataclass(frozen=True, eq=False)
class Branch:
    points: tuple
    stop_reason: str
    log: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.points)

    @property
    def eps(self) -> np.ndarray:
        return np.array([p.eps for p in self.points])


def _accept(point: BranchPoint, cfg: SolverConfig) -> bool:
    ps = point.physical
    return ps.condQ_margin > 0 and ps.min_A >= cfg.delta_A


def continue_branch(eps_max: float, cfg: SolverConfig | None, sol: ChoquardSolution) -> Branch:
    """Trace eta(eps) from the ground-state triple at eps = 0 up to ``eps_max``."""
    cfg = cfg or SolverConfig()
    m = sol.m
    if not 0 < eps_max < m:
        raise ValueError("need 0 < eps_max < m")
    base = PerturbedState.from_choquard(sol)
    res0 = residual_D(base)
    points = [BranchPoint(0.0, base, unrescale(base), 0, res0.norms)]
    step = cfg.eps_step_initial * m
    step_max = (cfg.eps_step_max * m) if cfg.eps_step_max is not None else eps_max / 20
    step_min = cfg.eps_step_min * m
    events = []
    last_reason = None
    while points[-1].eps < eps_max:
        cur = points[-1]
        target = min(cur.eps + step, eps_max)
        if len(points) >= 2:
            prev = points[-2]
            slope = (cur.state.vector() - prev.state.vector()) / (cur.eps - prev.eps)
            guess = cur.state.with_vector(cur.state.vector() + slope * (target - cur.eps))
        else:
            guess = cur.state
        try:
            out = newton_correct(target, guess, cfg, base=base)
            pt = BranchPoint(target, out.state, unrescale(out.state), out.iterations, out.residual_norms)
            if not _accept(pt, cfg):
                raise NewtonFailure("physical constraints violated", "positivity", out.state)
        except NewtonFailure as exc:
            last_reason = exc.reason
            events.append({"eps": target, "step": step, "outcome": f"fail:{exc.reason}"})
            step *= cfg.shrink
            if step < step_min:
                if len(points) == 1:
                    raise NoBranchError(f"no branch: first step failed ({exc.reason})") from exc
                reason = "positivity wall" if last_reason == "positivity" else "step underflow"
                return Branch(tuple(points), reason, tuple(events))
            continue
        points.append(pt)
        events.append({"eps": target, "step": step, "outcome": "ok", "iters": out.iterations})
        if out.iterations <= cfg.grow_after:
            step = min(step * cfg.growth, step_max)
    return Branch(tuple(points), "eps_max", tuple(events))


def continuity_slope(branch: Branch, decades: float = 1.0) -> float:
    """Log-log slope of distance(eta(eps), eta(0)) against eps over the first decades."""
    pts = [p for p in branch.points if p.eps > 0]
    if len(pts) < 2:
        return float("nan")
    lo = pts[0].eps
    sel = [p for p in pts if p.eps <= lo * 10 ** decades * (1 + 1e-12)]
    if len(sel) < 2:
        sel = pts[:2]
    base = branch.points[0].state
    x = np.log([p.eps for p in sel])
    y = np.log([distance(p.state, base) for p in sel])
    return float(np.polyfit(x, y, 1)[0])
