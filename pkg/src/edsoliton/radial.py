"""Radial grids, fields, quadrature, differentiation and the Newtonian kernel.

Nodes are placed by a power map r = r_max * x**p of a uniform mesh
x_j = j/N, j = 1..N.  Every smooth radial profile is a smooth function of
x when p is an integer, so all stencils are built in the x coordinate and
carried to r by the chain rule.  Derivative stencils are 9-point (8th order
centred, off-centred near the ends); each quadrature interval integrates the
8-point local interpolant.  The origin x_0 = 0 is not a node but a ghost
whose value follows from the field's origin class.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.interpolate import PchipInterpolator

from .stencils import (DIFF_POINTS, QUAD_POINTS, derivative_weights,
                       extrapolation_weights, interval_weights)

MIN_NODES = 16


class OriginClass(str, enum.Enum):
    VANISHES_LIKE_R = "vanishes_like_r"
    VANISHES_LIKE_R2 = "vanishes_like_r2"
    FINITE_LIMIT = "finite_limit"

    @property
    def vanishes(self) -> bool:
        return self is not OriginClass.FINITE_LIMIT


class TailClass(str, enum.Enum):
    EXPONENTIAL = "exponential"
    INVERSE_R = "inverse_r"
    ZERO = "zero"
    CONSTANT = "constant"


def grid_nodes(n_nodes: int, r_max: float, grading_exponent: float) -> np.ndarray:
    """Node radii r_j = r_max (j/N)^p, j = 1..N."""
    j = np.arange(1, n_nodes + 1, dtype=float)
    return r_max * (j / n_nodes) ** grading_exponent


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Graded mesh on (0, r_max] with its quadrature and difference operators."""

    n_nodes: int
    r_max: float
    grading_exponent: float = 2.0

    def __post_init__(self):
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < MIN_NODES:
            raise ValueError(f"n_nodes must be an integer >= {MIN_NODES}, got {self.n_nodes}")
        if not (np.isfinite(self.r_max) and self.r_max > 0):
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if not (np.isfinite(self.grading_exponent) and self.grading_exponent >= 1):
            raise ValueError(f"grading_exponent must be >= 1, got {self.grading_exponent}")

    # -- geometry ---------------------------------------------------------
    @cached_property
    def dx(self) -> float:
        return 1.0 / self.n_nodes

    @cached_property
    def x_full(self) -> np.ndarray:
        return np.arange(self.n_nodes + 1) / self.n_nodes

    @cached_property
    def nodes(self) -> np.ndarray:
        r = grid_nodes(self.n_nodes, self.r_max, self.grading_exponent)
        r[-1] = self.r_max
        r.setflags(write=False)
        return r

    @property
    def r(self) -> np.ndarray:
        return self.nodes

    @cached_property
    def dr_dx_full(self) -> np.ndarray:
        p = self.grading_exponent
        return p * self.r_max * self.x_full ** (p - 1)

    @cached_property
    def d2r_dx2(self) -> np.ndarray:
        p = self.grading_exponent
        return p * (p - 1) * self.r_max * self.x_full[1:] ** (p - 2)

    def scaled(self, factor: float) -> "RadialGrid":
        """Same mesh with every radius multiplied by ``factor``."""
        return RadialGrid(self.n_nodes, self.r_max * factor, self.grading_exponent)

    # -- origin ghost -----------------------------------------------------
    def ghost_row(self, origin_class: OriginClass) -> np.ndarray:
        """Linear map from node values to the value at r = 0."""
        row = np.zeros(self.n_nodes)
        if not OriginClass(origin_class).vanishes:
            row[:QUAD_POINTS] = extrapolation_weights(QUAD_POINTS)
        return row

    # -- differentiation --------------------------------------------------
    def _dx_matrix(self, order: int, use_ghost: bool) -> sparse.csr_matrix:
        n = self.n_nodes
        lo = 0 if use_ghost else 1
        rows, cols, vals = [], [], []
        for i in range(1, n + 1):
            s = min(max(i - DIFF_POINTS // 2, lo), n + 1 - DIFF_POINTS)
            w = derivative_weights(i - s, 0, DIFF_POINTS, order)
            rows.extend([i - 1] * DIFF_POINTS)
            cols.extend(range(s, s + DIFF_POINTS))
            vals.extend(w / self.dx ** order)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))

    def _drop_ghost(self, m: sparse.csr_matrix) -> sparse.csr_matrix:
        # the ghost column multiplies a zero origin value
        return m[:, 1:].tocsr()

    def derivative_matrix(self, origin_class: OriginClass) -> sparse.csr_matrix:
        """d/dr acting on node values of a field with the given origin class."""
        return self._derivative_matrices[OriginClass(origin_class).vanishes][0]

    def second_derivative_matrix(self, origin_class: OriginClass) -> sparse.csr_matrix:
        """d^2/dr^2 acting on node values of a field with the given origin class."""
        return self._derivative_matrices[OriginClass(origin_class).vanishes][1]

    @cached_property
    def _derivative_matrices(self):
        out = {}
        inv_rp = 1.0 / self.dr_dx_full[1:]
        for ghost in (True, False):
            d1 = self._drop_ghost(self._dx_matrix(1, ghost))
            d2x = self._drop_ghost(self._dx_matrix(2, ghost))
            dr1 = sparse.diags(inv_rp) @ d1
            dr2 = sparse.diags(inv_rp ** 2) @ (d2x - sparse.diags(self.d2r_dx2 * inv_rp) @ d1)
            out[ghost] = (dr1.tocsr(), dr2.tocsr())
        return out

    # -- quadrature -------------------------------------------------------
    @cached_property
    def _interval_full(self) -> sparse.csr_matrix:
        # row k-1: integral over [r_{k-1}, r_k] of the local interpolant of f r'(x)
        n = self.n_nodes
        rows, cols, vals = [], [], []
        for k in range(1, n + 1):
            s = min(max(k - QUAD_POINTS // 2, 0), n + 1 - QUAD_POINTS)
            w = interval_weights(k - 1 - s, 0, QUAD_POINTS) * self.dx
            rows.extend([k - 1] * QUAD_POINTS)
            cols.extend(range(s, s + QUAD_POINTS))
            vals.extend(w * self.dr_dx_full[s:s + QUAD_POINTS])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))

    def interval_matrix(self, origin_class: OriginClass) -> sparse.csr_matrix:
        """Map node values to the N interval integrals over [r_{j-1}, r_j] (r_0 = 0)."""
        b = self._interval_full
        out = b[:, 1:]
        ghost = self.ghost_row(origin_class)
        if ghost.any():
            out = out + sparse.csr_matrix(np.outer(b[:, 0].toarray().ravel(), ghost))
        return out.tocsr()

    def prefix_matrix(self, origin_class: OriginClass) -> np.ndarray:
        """Dense lower-triangular map f -> (int_0^{r_i} f ds)_i."""
        return np.cumsum(self.interval_matrix(origin_class).toarray(), axis=0)

    @cached_property
    def weights(self) -> np.ndarray:
        """Node weights for int_0^{r_max} f dr; the origin carries ``origin_weight``."""
        w = np.asarray(self._interval_full[:, 1:].sum(axis=0)).ravel()
        w.setflags(write=False)
        return w

    @cached_property
    def origin_weight(self) -> float:
        return float(self._interval_full[:, 0].sum())

    def quadrature_weights(self, origin_class: OriginClass) -> np.ndarray:
        return self.weights + self.origin_weight * self.ghost_row(origin_class)

    def integrate_values(self, values: np.ndarray,
                         origin_class: OriginClass = OriginClass.VANISHES_LIKE_R) -> float:
        return float(self.quadrature_weights(origin_class) @ values)

    def prefix_values(self, values: np.ndarray,
                      origin_class: OriginClass = OriginClass.VANISHES_LIKE_R) -> np.ndarray:
        return np.cumsum(self.interval_matrix(origin_class) @ values)


def build_grid(n_nodes: int = 2000, r_max: float = 30.0, grading_exponent: float = 2.0) -> RadialGrid:
    return RadialGrid(int(n_nodes), float(r_max), float(grading_exponent))


def default_r_max(m: float) -> float:
    """Truncation radius 30/sqrt(2m): the ground state has decayed by e^-30 there."""
    return 30.0 / np.sqrt(2.0 * m)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Real samples of a radial profile at the nodes of ``grid``."""

    grid: RadialGrid
    values: np.ndarray
    origin_class: OriginClass = OriginClass.VANISHES_LIKE_R
    tail_class: TailClass = TailClass.EXPONENTIAL
    slope_bound: float | None = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(f"expected {self.grid.n_nodes} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin_class", OriginClass(self.origin_class))
        object.__setattr__(self, "tail_class", TailClass(self.tail_class))
        if self.slope_bound is not None and self.origin_class is OriginClass.VANISHES_LIKE_R:
            if abs(v[0]) / self.grid.nodes[0] > self.slope_bound:
                raise ValueError("origin slope exceeds the declared bound")

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def like(self, values, **kw) -> "RadialField":
        return replace(self, values=values, slope_bound=None, **kw)

    def __call__(self, r_query) -> np.ndarray:
        return evaluate(self, r_query)


def evaluate(f: RadialField, r_query) -> np.ndarray:
    """Monotone cubic interpolation; outside (0, r_max] the declared classes extend it."""
    rq = np.asarray(r_query, dtype=float)
    g = f.grid
    r0 = float(g.ghost_row(f.origin_class) @ f.values)
    xs = np.concatenate(([0.0], g.nodes))
    ys = np.concatenate(([r0], f.values))
    out = PchipInterpolator(xs, ys, extrapolate=False)(np.clip(rq, 0.0, g.r_max))
    beyond = rq > g.r_max
    if np.any(beyond):
        if f.tail_class is TailClass.INVERSE_R:
            out = np.where(beyond, f.values[-1] * g.r_max / np.where(beyond, rq, 1.0), out)
        elif f.tail_class is TailClass.CONSTANT:
            out = np.where(beyond, f.values[-1], out)
        else:
            out = np.where(beyond, 0.0, out)
    return out


def integrate(f: RadialField) -> float:
    """int_0^{r_max} f dr."""
    return f.grid.integrate_values(f.values, f.origin_class)


def integrate_prefix(f: RadialField) -> RadialField:
    """g(r_j) = int_0^{r_j} f ds."""
    origin = (OriginClass.VANISHES_LIKE_R2 if f.origin_class is OriginClass.VANISHES_LIKE_R
              else OriginClass.VANISHES_LIKE_R)
    vals = f.grid.prefix_values(f.values, f.origin_class)
    return RadialField(f.grid, vals, origin, TailClass.CONSTANT)


def _over_r_class(origin_class: OriginClass) -> OriginClass:
    if origin_class is OriginClass.VANISHES_LIKE_R2:
        return OriginClass.VANISHES_LIKE_R
    if origin_class is OriginClass.VANISHES_LIKE_R:
        return OriginClass.FINITE_LIMIT
    raise ValueError("int f/s ds diverges at the origin for a field with a finite limit")


def newtonian_kernel(f: RadialField) -> RadialField:
    """K[f](r) = int_0^inf f(s)/max(r, s) ds, by two prefix sums (O(N))."""
    if f.tail_class is TailClass.INVERSE_R or f.tail_class is TailClass.CONSTANT:
        raise ValueError("kernel input must decay (exponential or zero tail)")
    g = f.grid
    r = g.nodes
    inner = g.prefix_values(f.values, f.origin_class)
    outer = g.prefix_values(f.values / r, _over_r_class(f.origin_class))
    vals = inner / r + (outer[-1] - outer)
    return RadialField(g, vals, OriginClass.FINITE_LIMIT, TailClass.INVERSE_R)


def kernel_matrix(grid: RadialGrid, origin_class: OriginClass = OriginClass.VANISHES_LIKE_R2) -> np.ndarray:
    """Dense matrix of ``newtonian_kernel`` for inputs of the given origin class."""
    r = grid.nodes
    p_in = grid.prefix_matrix(origin_class)
    p_out = grid.prefix_matrix(_over_r_class(OriginClass(origin_class))) / r[None, :]
    return p_in / r[:, None] + (p_out[-1][None, :] - p_out)


def differentiate(f: RadialField) -> RadialField:
    vals = f.grid.derivative_matrix(f.origin_class) @ f.values
    origin = {OriginClass.VANISHES_LIKE_R2: OriginClass.VANISHES_LIKE_R}.get(
        f.origin_class, OriginClass.FINITE_LIMIT)
    return RadialField(f.grid, vals, origin, f.tail_class
                       if f.tail_class is not TailClass.CONSTANT else TailClass.ZERO)


# -- function-space norms ----------------------------------------------------

@dataclass(frozen=True)
class NormReport:
    x_phi: float
    x_chi: float
    x_tau: float
    hardy_ratio: float
    sup_tau: float  # diagnostic only, not part of the X_tau norm


def _reject_finite_origin(f: RadialField, name: str) -> None:
    if f.origin_class is OriginClass.FINITE_LIMIT:
        r0 = abs(float(f.grid.ghost_row(f.origin_class) @ f.values))
        if r0 > 1e-8 * max(1.0, np.max(np.abs(f.values))):
            raise ValueError(f"{name}/r is singular at the origin (nonzero limit {r0:g})")


def _over_r(f: RadialField):
    g = f.grid
    u = f.values / g.nodes
    du = g.derivative_matrix(OriginClass.FINITE_LIMIT) @ u
    return u, du


def x_phi_norm(phi: RadialField) -> float:
    """H^1(R^3) norm of phi(|x|)/|x|."""
    _reject_finite_origin(phi, "phi")
    g = phi.grid
    u, du = _over_r(phi)
    return float(np.sqrt(4 * np.pi * g.integrate_values((u ** 2 + du ** 2) * g.nodes ** 2)))


def x_chi_norm(chi: RadialField) -> float:
    """H^1(R^3) norm of the spinor (chi/r) sigma^r e_1; the angular part adds 2(chi/r)^2/r^2."""
    _reject_finite_origin(chi, "chi")
    g = chi.grid
    u, du = _over_r(chi)
    integrand = (u ** 2 + du ** 2) * g.nodes ** 2 + 2.0 * u ** 2
    return float(np.sqrt(4 * np.pi * g.integrate_values(integrand)))


def x_tau_norm(tau: RadialField) -> float:
    """int_0^inf |tau'| dr, the C/r tail beyond r_max closed analytically."""
    g = tau.grid
    dtau = g.derivative_matrix(tau.origin_class) @ tau.values
    total = g.integrate_values(np.abs(dtau), OriginClass.FINITE_LIMIT)
    if tau.tail_class is TailClass.INVERSE_R:
        total += abs(tau.values[-1])
    return float(total)


def hardy_ratio(phi: RadialField) -> float:
    """(int |u|^2/|x|^2 dx) / (int |grad u|^2 dx) for u = phi/r; Hardy bounds it by 4."""
    g = phi.grid
    u, du = _over_r(phi)
    num = g.integrate_values(u ** 2, OriginClass.FINITE_LIMIT)
    den = g.integrate_values(du ** 2 * g.nodes ** 2)
    return float(num / den) if den > 0 else 0.0


def norms(phi: RadialField, chi: RadialField, tau: RadialField) -> NormReport:
    if not (phi.grid is chi.grid is tau.grid):
        raise ValueError("fields must share one grid")
    return NormReport(x_phi_norm(phi), x_chi_norm(chi), x_tau_norm(tau),
                      hardy_ratio(phi) if np.any(phi.values) else 0.0,
                      float(np.max(np.abs(tau.values))))


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    worst_ratio: float
    note: str = ""


def pointwise_bound_check(rho: RadialField, tol: float = 1e-6) -> BoundCheck:
    """Check |rho(r)| <= r^(1/2) ||d/dr(rho/r)||_{L^2(r^2 dr)} at every node."""
    g = rho.grid
    if not np.any(rho.values):
        return BoundCheck(True, 0.0)
    u, du = _over_r(rho)
    dn = np.sqrt(g.integrate_values(du ** 2 * g.nodes ** 2))
    scale = max(1.0, np.max(np.abs(u)) * np.sqrt(g.r_max ** 3))
    if dn <= 1e-10 * scale:
        return BoundCheck(True, float("nan"), "degenerate: zero derivative")
    ratio = float(np.max(np.abs(rho.values) / (np.sqrt(g.nodes) * dn)))
    return BoundCheck(ratio <= 1.0 + tol, ratio)
