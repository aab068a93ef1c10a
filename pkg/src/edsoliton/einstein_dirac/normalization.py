"""Choose m so that the physical solution at a given eps meets the normalisation."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
from scipy.optimize import brentq

from ..choquard import ChoquardConfig, solve_ground_state
from ..radial import build_grid, default_r_max
from .continuation import SolverConfig, continue_branch
from .physical import NORM_TARGET, PhysicalSolution

log = logging.getLogger(__name__)


class BracketError(RuntimeError):
    def __init__(self, message, table):
        super().__init__(message + "; sampled (m, norm): "
                         + ", ".join(f"({m:.6g}, {v:.6g})" for m, v in table))
        self.table = list(table)


def norm_at(m: float, eps: float, cfg: SolverConfig | None = None, n_nodes: int = 2000,
            grading_exponent: float = 2.0, choquard_cfg: ChoquardConfig | None = None) -> PhysicalSolution:
    """Ground state at m, then a short branch up to eps; returns the physical endpoint."""
    cfg = cfg or SolverConfig()
    frac = eps / m
    short = replace(cfg, eps_step_initial=max(frac / 4, cfg.eps_step_min),
                    eps_step_max=max(frac / 2, frac / 4, cfg.eps_step_min))
    grid = build_grid(n_nodes, default_r_max(m), grading_exponent)
    sol = solve_ground_state(m, grid, choquard_cfg)
    branch = continue_branch(eps, short, sol)
    if branch.stop_reason != "eps_max":
        raise RuntimeError(f"branch at m={m:.6g} stopped early ({branch.stop_reason})")
    return branch.points[-1].physical


def normalized_solution(eps: float, target: float = NORM_TARGET, cfg: SolverConfig | None = None, *,
                        relative: bool = False, m_guess: float = 0.5, tol: float = 1e-10,
                        n_nodes: int = 2000, grading_exponent: float = 2.0):
    """Find m with norm_integral(m, eps) = target; returns (m, PhysicalSolution).

    With ``relative=True`` the first argument is eps/m and eps moves with m.
    The norm behaves like a power of m (m^-2 for fixed eps/m, m^-5/2 for fixed
    eps), so the search runs on log m: a power-law predictor picks the second
    sample, the bracket is widened if needed, and Brent's method (secant steps
    safeguarded by bisection) finishes.
    """
    if not target > 0:
        raise ValueError("normalisation target must be positive")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if relative and not eps < 1:
        raise ValueError("eps/m must be below 1")
    power = 2.0 if relative else 2.5
    table: list[tuple[float, float]] = []
    cache: dict[float, PhysicalSolution] = {}

    def f(logm: float) -> float:
        if logm in cache:
            return float(np.log(cache[logm].norm_integral / target))
        m = float(np.exp(logm))
        e = eps * m if relative else eps
        if not e < m:
            raise BracketError(f"eps={e:.6g} is not below m={m:.6g}", table)
        ps = norm_at(m, e, cfg, n_nodes, grading_exponent)
        cache[logm] = ps
        table.append((m, ps.norm_integral))
        log.info("m=%.10g norm=%.12g", m, ps.norm_integral)
        return float(np.log(ps.norm_integral / target))

    def done(logm: float) -> bool:
        return abs(cache[logm].norm_integral - target) < tol

    a = float(np.log(m_guess))
    fa = f(a)
    b = a + fa / power
    fb = f(b)
    for _ in range(3):
        if np.sign(fa) != np.sign(fb) or done(b):
            break
        a, fa, b = b, fb, b + (b - a)
        fb = f(b)
    else:
        if np.sign(fa) == np.sign(fb) and not done(b):
            raise BracketError("no sign change in the initial bracket", table)
    if done(b):
        root = b
    elif done(a):
        root = a
    else:
        # |log(norm/target)| < tol/target keeps |norm - target| well below tol
        root = brentq(f, min(a, b), max(a, b), xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=60)
    f(root)
    ps = cache[root]
    if abs(ps.norm_integral - target) > max(tol, 1e-6):
        raise RuntimeError(f"normalisation missed: {ps.norm_integral!r} vs {target!r}")
    return float(np.exp(root)), ps
