"""Map rescaled solutions back to physical fields and check the original equations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..radial import OriginClass, RadialField, RadialGrid, TailClass, evaluate
from .system import PerturbedState

VR = OriginClass.VANISHES_LIKE_R
V2 = OriginClass.VANISHES_LIKE_R2
FIN = OriginClass.FINITE_LIMIT

NORM_TARGET = 1.0 / (4.0 * np.pi)


@dataclass(frozen=True, eq=False)
class PhysicalSolution:
    m: float
    eps: float
    omega: float
    Phi1: RadialField
    Phi2: RadialField
    t_field: RadialField
    A_field: RadialField
    Q_field: RadialField
    adm_mass: float
    norm_integral: float
    condQ_margin: float

    @property
    def grid(self) -> RadialGrid:
        return self.Phi1.grid

    @property
    def T(self) -> np.ndarray:
        return 1.0 + self.t_field.values

    @property
    def min_A(self) -> float:
        return float(np.min(self.A_field.values))


def _assemble(m, eps, grid, phi1, phi2, t) -> PhysicalSolution:
    omega = m - eps
    r = grid.nodes
    T = 1.0 + t
    dens = T ** 2 * (phi1 ** 2 + phi2 ** 2)
    q = grid.prefix_values(dens)
    a = 1.0 - 16 * np.pi * omega * q / r
    # the densities decay exponentially, so the tail beyond r_max adds nothing
    adm = 8 * np.pi * omega * q[-1]
    norm = grid.integrate_values((phi1 ** 2 + phi2 ** 2) * T / np.sqrt(a))
    margin = float(np.min(1.0 / (16 * np.pi * omega) - q / r))
    return PhysicalSolution(
        m=m, eps=eps, omega=omega,
        Phi1=RadialField(grid, phi1, VR), Phi2=RadialField(grid, phi2, V2),
        t_field=RadialField(grid, t, FIN, TailClass.INVERSE_R),
        A_field=RadialField(grid, a, FIN, TailClass.CONSTANT),
        Q_field=RadialField(grid, q, V2, TailClass.CONSTANT),
        adm_mass=float(adm), norm_integral=float(norm), condQ_margin=margin)


def vacuum(m: float, grid: RadialGrid) -> PhysicalSolution:
    z = np.zeros(grid.n_nodes)
    return _assemble(m, 0.0, grid, z, z, z)


def unrescale(point, grid: RadialGrid | None = None) -> PhysicalSolution:
    """Phi1(r) = sqrt(eps) phi(sqrt(eps) r), Phi2 = eps chi(.), t = eps tau(.), omega = m - eps.

    ``point`` is a PerturbedState or anything with a ``state`` attribute.  By
    default the physical grid is the solver grid stretched by 1/sqrt(eps), so
    no interpolation is involved; an explicit ``grid`` is filled by monotone
    cubic interpolation with the fields' tail classes beyond the solver grid.
    At eps = 0 the physical fields are the Minkowski vacuum.
    """
    st: PerturbedState = getattr(point, "state", point)
    eps, m = st.eps, st.m
    if eps == 0:
        return vacuum(m, grid or st.grid)
    a = np.sqrt(eps)
    if grid is None:
        grid = st.grid.scaled(1.0 / a)
        phi, chi, tau = st.phi.values, st.chi.values, st.tau.values
    else:
        x = a * grid.nodes
        phi, chi, tau = evaluate(st.phi, x), evaluate(st.chi, x), evaluate(st.tau, x)
    return _assemble(m, eps, grid, a * phi, eps * chi, eps * tau)


@dataclass(frozen=True, eq=False)
class PhysicalResidual:
    fields: tuple      # four nodal residual arrays
    norms: tuple       # L^2(dr) norms

    @property
    def worst(self) -> float:
        return float(max(self.norms))


def physical_residual(ps: PhysicalSolution, m: float | None = None) -> PhysicalResidual:
    """Residuals of the four original static Einstein-Dirac equations.

    sqrt(A) Phi1' - Phi1/r + (omega T + m) Phi2
    sqrt(A) Phi2' - (omega T - m) Phi1 + Phi2/r
    r A' - (1 - A - 16 pi omega T^2 |Phi|^2)
    2 r A T'/T - (A - 1 - 16 pi omega T^2 |Phi|^2 + 32 pi T Phi1 Phi2 / r + 16 pi m T (Phi1^2 - Phi2^2))
    """
    m = ps.m if m is None else m
    g = ps.grid
    r = g.nodes
    w = ps.omega
    p1, p2 = ps.Phi1.values, ps.Phi2.values
    a = ps.A_field.values
    T = ps.T
    d, df = g.derivative_matrix(VR), g.derivative_matrix(FIN)
    sa = np.sqrt(a)
    mod2 = p1 ** 2 + p2 ** 2
    e1 = sa * (d @ p1) - p1 / r + (w * T + m) * p2
    e2 = sa * (d @ p2) - (w * T - m) * p1 + p2 / r
    # differentiate the deviations from the vacuum so that flat space gives exact zeros
    e3 = r * (df @ (a - 1.0)) - (1 - a - 16 * np.pi * w * T ** 2 * mod2)
    e4 = 2 * r * a * (df @ ps.t_field.values) / T - (a - 1 - 16 * np.pi * w * T ** 2 * mod2
                                      + 32 * np.pi * T * p1 * p2 / r
                                      + 16 * np.pi * m * T * (p1 ** 2 - p2 ** 2))
    fields = (e1, e2, e3, e4)
    norms = tuple(float(np.sqrt(g.integrate_values(e ** 2, FIN))) for e in fields)
    return PhysicalResidual(fields, norms)


def diagnostics(ps: PhysicalSolution, tail_fraction: float = 0.1) -> dict:
    """Constraint margins, normalisation, ADM mass by two routes and tail checks.

    The ADM plateau is read over the outermost ``tail_fraction`` of the nodes.
    """
    g = ps.grid
    r = g.nodes
    n = g.n_nodes
    a = ps.A_field.values
    q = ps.Q_field.values
    w = ps.omega
    tail = slice(n - max(2, int(round(tail_fraction * n))), n)
    metric_mass = r * (1 - a) / 2
    plateau = metric_mass[tail]
    scale = max(abs(plateau).max(), 1e-300)
    direct = 8 * np.pi * w * g.integrate_values(ps.T ** 2 * (ps.Phi1.values ** 2 + ps.Phi2.values ** 2))
    two_route = abs(metric_mass[-1] - direct) / max(abs(direct), 1e-300) if direct else 0.0
    t_end = float(ps.t_field.values[-1])
    budget = 1.05 * ps.adm_mass / r[-1] if ps.adm_mass > 0 else 0.0
    return {
        "eps": ps.eps,
        "eps_over_m": ps.eps / ps.m,
        "omega": w,
        "condQ_margin": ps.condQ_margin,
        "min_A": ps.min_A,
        "norm_integral": ps.norm_integral,
        "norm_target": NORM_TARGET,
        "adm_mass": ps.adm_mass,
        "adm_direct": float(direct),
        "adm_two_route_rel": float(two_route),
        "adm_plateau_variation": float((plateau.max() - plateau.min()) / scale) if direct else 0.0,
        "gauge_identity_max": float(np.max(np.abs(metric_mass - 8 * np.pi * w * q))),
        "T_tail": t_end,
        "T_tail_budget": float(budget),
        "T_tail_ok": bool(abs(t_end) <= budget + 1e-15),
    }
