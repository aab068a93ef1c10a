"""Discrete linear operators around the Choquard ground state and their certificates.

Operators act on stacked nodal profiles.  Each block carries a role that
fixes the norm used for singular values:

    phi, chi, xi  L^2(R^3) of the profile over r (rows and columns)
    tau           L^2(dr) (rows and columns)

Columns use L^2 rather than the energy norms: centred stencils leave an
odd-even mode that is cheap in L^2 but costs a factor N in H^1, so only the
L^2 pairing gives singular values that are stable under refinement.

Boundary rows at r_max (decay of phi, exterior condition for tau) are
point evaluations and carry unit weight.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import LinearOperator as _ScipyOperator
from scipy.sparse.linalg import splu, svds

from .choquard import ChoquardSolution
from .radial import OriginClass, RadialGrid, kernel_matrix

log = logging.getLogger(__name__)

VR = OriginClass.VANISHES_LIKE_R
FIN = OriginClass.FINITE_LIMIT

PROVENANCES = ("L_choquard", "V", "W", "S", "D_prime", "jacobian_eps", "identity")


class SingularOperatorError(RuntimeError):
    def __init__(self, message, condition=np.inf):
        super().__init__(message)
        self.condition = condition


@dataclass(eq=False)
class LinearOperator:
    """Sparse band part, optional dense part, optional prefix-integral low-rank part.

    The prefix part is diag(u) . P . G with P the cumulative quadrature of
    the grid: row i of block b gets u[b*N + i] * (int_0^{r_i} (G x) ds).
    """

    provenance: str
    grid: RadialGrid
    row_layout: tuple
    col_layout: tuple
    band: sparse.csr_matrix
    dense_part: np.ndarray | None = None
    prefix_u: np.ndarray | None = None
    prefix_g: sparse.csr_matrix | None = None
    bc_rows: tuple = ()

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        n_rows = sum(s for _, s in self.row_layout)
        n_cols = sum(s for _, s in self.col_layout)
        if self.band.shape != (n_rows, n_cols):
            raise ValueError("block layout does not match the matrix shape")

    @property
    def block_layout(self):
        return self.col_layout

    @property
    def shape(self):
        return self.band.shape

    @cached_property
    def _prefix_dense(self) -> np.ndarray:
        return self.grid.prefix_matrix(VR)

    def _prefix_apply(self, x: np.ndarray) -> np.ndarray:
        n = self.grid.n_nodes
        z = self.grid.prefix_values(self.prefix_g @ x)
        return self.prefix_u * np.tile(z, len(self.prefix_u) // n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.band @ x
        if self.dense_part is not None:
            y = y + self.dense_part @ x
        if self.prefix_u is not None:
            y = y + self._prefix_apply(x)
        return y

    __matmul__ = matvec

    @cached_property
    def matrix(self) -> np.ndarray:
        out = self.band.toarray()
        if self.dense_part is not None:
            out += self.dense_part
        if self.prefix_u is not None:
            n = self.grid.n_nodes
            pg = self._prefix_dense @ self.prefix_g.toarray()
            out += self.prefix_u[:, None] * np.tile(pg, (len(self.prefix_u) // n, 1))
        return out

    def __add__(self, other: "LinearOperator") -> np.ndarray:
        return self.matrix + other.matrix

    def norm_bound(self) -> float:
        """Upper bound on the infinity norm, without forming the dense matrix."""
        b = abs(self.band).sum(axis=1).max()
        if self.dense_part is not None:
            b += np.abs(self.dense_part).sum(axis=1).max()
        if self.prefix_u is not None:
            ptot = np.abs(self.grid.interval_matrix(VR)).sum()
            b += np.abs(self.prefix_u).max() * ptot * abs(self.prefix_g).sum(axis=1).max()
        return float(b)

    # -- factorisation ----------------------------------------------------
    @cached_property
    def _factor(self):
        n_tot = self.shape[0]
        try:
            if self.dense_part is not None:
                lu = sla.lu_factor(self.matrix, check_finite=True)
                if np.any(np.diag(lu[0]) == 0):
                    raise RuntimeError("Factor is exactly singular")
                return ("dense", lu)
            if self.prefix_u is not None:
                n = self.grid.n_nodes
                nb = n_tot // n
                u = sparse.csr_matrix(
                    (self.prefix_u, (np.arange(n_tot), np.tile(np.arange(n), nb))), shape=(n_tot, n))
                bint = self.grid.interval_matrix(VR)
                diff = sparse.eye(n) - sparse.eye(n, k=-1)
                aug = sparse.bmat([[self.band, u], [-(bint @ self.prefix_g), diff]], format="csc")
                return ("aug", splu(aug))
            return ("sparse", splu(self.band.tocsc()))
        except RuntimeError as exc:
            cond = np.linalg.cond(self.matrix) if n_tot <= 3000 else np.inf
            raise SingularOperatorError(f"factorisation of {self.provenance} failed: {exc}", cond) from exc

    def solve(self, rhs: np.ndarray, trans: bool = False) -> np.ndarray:
        kind, fac = self._factor
        if kind == "dense":
            return sla.lu_solve(fac, rhs, trans=1 if trans else 0)
        if kind == "aug":
            n_tot = self.shape[0]
            ext = np.concatenate([rhs, np.zeros(self.grid.n_nodes)])
            return fac.solve(ext, trans="T" if trans else "N")[:n_tot]
        return fac.solve(rhs, trans="T" if trans else "N")


def solve_linear(op: LinearOperator, rhs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Direct solve plus one refinement step; the normwise backward error must stay below ``tol``."""
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    x = op.solve(rhs)
    x = x - op.solve(op.matvec(x) - rhs)
    res = op.matvec(x) - rhs
    err = np.max(np.abs(res)) / (op.norm_bound() * np.max(np.abs(x)) + np.max(np.abs(rhs)))
    if not err < tol:
        raise SingularOperatorError(f"backward error {err:.2e} exceeds {tol:g}")
    return x


# -- assembly helpers ----------------------------------------------------------

def _diag(v) -> sparse.dia_matrix:
    return sparse.diags(np.asarray(v, dtype=float))


def _last_row_only(n: int, value: float, col: int | None = None) -> sparse.csr_matrix:
    col = n - 1 if col is None else col
    return sparse.csr_matrix(([value], ([n - 1], [col])), shape=(n, n))


def _replace_last_row(block: sparse.spmatrix, new_row: sparse.spmatrix | None, n: int) -> sparse.csr_matrix:
    keep = _diag(np.r_[np.ones(n - 1), 0.0])
    out = keep @ block
    if new_row is not None:
        out = out + new_row
    return out.tocsr()


def dirac_blocks(grid: RadialGrid, m: float):
    """Blocks of V: rows (phi'/r - phi/r^2 + 2m chi/r, chi'/r + chi/r^2 + phi/r).

    The last phi row is replaced by the decay condition phi(r_max)/r_max = 0.
    """
    n = grid.n_nodes
    r = grid.nodes
    d = grid.derivative_matrix(VR)
    a11 = _diag(1 / r) @ d - _diag(1 / r ** 2)
    a12 = _diag(2 * m / r)
    a21 = _diag(1 / r)
    a22 = _diag(1 / r) @ d + _diag(1 / r ** 2)
    a11 = _replace_last_row(a11, _last_row_only(n, 1 / r[-1]), n)
    a12 = _replace_last_row(a12, None, n)
    return a11, a12, a21, a22


def assemble_V(m: float, grid: RadialGrid) -> LinearOperator:
    a11, a12, a21, a22 = dirac_blocks(grid, m)
    n = grid.n_nodes
    band = sparse.bmat([[a11, a12], [a21, a22]], format="csr")
    return LinearOperator("V", grid, (("phi", n), ("chi", n)), (("phi", n), ("chi", n)), band,
                          bc_rows=(n - 1,))


def _w_band(sol: ChoquardSolution) -> sparse.csr_matrix:
    g = sol.grid
    n = g.n_nodes
    r = g.nodes
    m = sol.m
    a11, a12, a21, a22 = dirac_blocks(g, m)
    a23 = _diag(-m * sol.phi0.values / r)
    # l row: l' with the exterior condition l(r_max) = ... at the last node
    a33 = _replace_last_row(g.derivative_matrix(FIN), _last_row_only(n, 1.0), n)
    z = None
    return sparse.bmat([[a11, a12, z], [a21, a22, a23], [z, z, a33]], format="csr")


def _layout3(n):
    return (("phi", n), ("chi", n), ("tau", n))


def assemble_W(sol: ChoquardSolution) -> LinearOperator:
    n = sol.grid.n_nodes
    return LinearOperator("W", sol.grid, _layout3(n), _layout3(n), _w_band(sol),
                          bc_rows=(n - 1, 3 * n - 1))


def _s_parts(sol: ChoquardSolution):
    g = sol.grid
    n = g.n_nodes
    r = g.nodes
    m = sol.m
    s21 = _diag(-m * sol.tau0.values / r)
    band = sparse.bmat([[sparse.csr_matrix((n, n)), None, None],
                        [s21, sparse.csr_matrix((n, n)), None],
                        [None, None, sparse.csr_matrix((n, n))]], format="csr")
    u = np.zeros(3 * n)
    u[2 * n:] = 16 * np.pi * m / r ** 2
    u[3 * n - 1] = -16 * np.pi * m / r[-1]
    gmat = sparse.hstack([_diag(sol.phi0.values), sparse.csr_matrix((n, 2 * n))], format="csr")
    return band, u, gmat


def assemble_S(sol: ChoquardSolution) -> LinearOperator:
    """S(h) = (0, -m tau0 h/r, 16 pi m/r^2 int_0^r phi0 h ds), acting on the h block."""
    n = sol.grid.n_nodes
    band, u, gmat = _s_parts(sol)
    return LinearOperator("S", sol.grid, _layout3(n), _layout3(n), band,
                          prefix_u=u, prefix_g=gmat, bc_rows=(n - 1, 3 * n - 1))


def assemble_D_prime(sol: ChoquardSolution) -> LinearOperator:
    """Linearisation of the perturbed system at (eps = 0, ground state), row by row."""
    g = sol.grid
    n = g.n_nodes
    r = g.nodes
    m = sol.m
    phi0, tau0 = sol.phi0.values, sol.tau0.values
    d, dt = g.derivative_matrix(VR), g.derivative_matrix(FIN)
    r1h = _replace_last_row(_diag(1 / r) @ d - _diag(1 / r ** 2), _last_row_only(n, 1 / r[-1]), n)
    r1k = _replace_last_row(_diag(2 * m / r), None, n)
    r2h = _diag(1 / r - m * tau0 / r)
    r2k = _diag(1 / r) @ d + _diag(1 / r ** 2)
    r2l = _diag(-m * phi0 / r)
    r3l = _replace_last_row(dt, _last_row_only(n, 1.0), n)
    band = sparse.bmat([[r1h, r1k, None], [r2h, r2k, r2l], [None, None, r3l]], format="csr")
    u = np.zeros(3 * n)
    u[2 * n:] = 16 * np.pi * m / r ** 2
    u[3 * n - 1] = -16 * np.pi * m / r[-1]
    gmat = sparse.hstack([_diag(phi0), sparse.csr_matrix((n, 2 * n))], format="csr")
    return LinearOperator("D_prime", g, _layout3(n), _layout3(n), band,
                          prefix_u=u, prefix_g=gmat, bc_rows=(n - 1, 3 * n - 1))


def assemble_linearized_choquard(sol: ChoquardSolution, u0=None) -> LinearOperator:
    """Radial linearisation of the Choquard equation acting on h = r xi (interior nodes).

    L h = -h'' + 2m h - 16 pi m^3 K[phi0^2] h - 32 pi m^3 K[phi0 h] phi0.
    Passing ``u0`` (a profile array) replaces the ground state in the potential terms.
    """
    g = sol.grid
    m = sol.m
    phi = sol.phi0.values if u0 is None else np.asarray(u0, dtype=float)
    n = g.n_nodes - 1
    kmat = kernel_matrix(g)
    pot = kmat @ (phi ** 2)
    d2 = g.second_derivative_matrix(VR)
    band = (-d2 + _diag(2 * m - 16 * np.pi * m ** 3 * pot))[:n, :n].tocsr()
    dense = -32 * np.pi * m ** 3 * (phi[:, None] * kmat * phi[None, :])[:n, :n]
    return LinearOperator("L_choquard", g, (("xi", n),), (("xi", n),), band, dense_part=dense)


def identity_operator(grid: RadialGrid) -> LinearOperator:
    n = grid.n_nodes
    return LinearOperator("identity", grid, (("xi", n),), (("xi", n),), sparse.identity(n, format="csr"))


# -- norms and singular values ---------------------------------------------------

def _row_scale(role: str, grid: RadialGrid, size: int) -> np.ndarray:
    w = grid.weights[:size]
    r = grid.nodes[:size]
    if role in ("phi", "chi"):
        return np.sqrt(4 * np.pi * w) * r
    if role == "tau":
        return np.sqrt(w)
    if role == "xi":
        return np.sqrt(4 * np.pi * w)
    raise ValueError(role)


def _col_scale(role: str, grid: RadialGrid, size: int) -> np.ndarray:
    w = grid.weights[:size]
    if role in ("phi", "chi", "xi"):
        return np.sqrt(4 * np.pi * w)
    if role == "tau":
        return np.sqrt(w)
    raise ValueError(role)


@dataclass
class Weighting:
    row_scale: np.ndarray
    col_scale: np.ndarray


def weighting(op: LinearOperator) -> Weighting:
    rows = np.concatenate([_row_scale(role, op.grid, s) for role, s in op.row_layout])
    rows[list(op.bc_rows)] = 1.0
    cols = np.concatenate([_col_scale(role, op.grid, s) for role, s in op.col_layout])
    return Weighting(rows, cols)


def smallest_singular_value(op: LinearOperator) -> float:
    """sigma_min of the weighted operator, as 1/||C J^-1 R^-1|| by Lanczos on the inverse."""
    wt = weighting(op)
    n = op.shape[0]
    try:
        op.solve(np.ones(n))
    except SingularOperatorError:
        return 0.0

    def mv(x):
        x = np.ravel(x)
        return wt.col_scale * op.solve(x / wt.row_scale)

    def rmv(y):
        y = np.ravel(y)
        return op.solve(wt.col_scale * y, trans=True) / wt.row_scale

    inv = _ScipyOperator((n, n), matvec=mv, rmatvec=rmv, dtype=float)
    rng = np.random.default_rng(12345)
    s = svds(inv, k=1, which="LM", return_singular_vectors=False, tol=1e-8,
             v0=rng.standard_normal(n), maxiter=5000)
    top = float(np.max(s))
    if not np.isfinite(top) or top <= 0:
        return 0.0
    return 1.0 / top


def weighted_matrix(op: LinearOperator) -> np.ndarray:
    """Dense R A C^-1 (for full singular spectra on small grids)."""
    wt = weighting(op)
    return wt.row_scale[:, None] * op.matrix / wt.col_scale[None, :]


def singular_values(op: LinearOperator) -> np.ndarray:
    return np.linalg.svd(weighted_matrix(op), compute_uv=False)


def smallest_abs_eigenvalue(op: LinearOperator) -> float:
    """Smallest |eigenvalue| of the discrete operator.

    The high-order stencils are not symmetric at matrix level, so the
    unsymmetrised spectrum is used (the weighting is a similarity and drops out).
    """
    return float(np.min(np.abs(np.linalg.eigvals(op.matrix))))


@dataclass(frozen=True)
class SpectrumReport:
    provenance: str
    smallest_singular_value: float
    grid_size: int
    stable_under_refinement: bool
    per_grid: tuple = field(default_factory=tuple)   # ((N, sigma_min), ...)
    smallest_abs_eigenvalue: float | None = None

    def to_dict(self) -> dict:
        return {"provenance": self.provenance,
                "smallest_singular_value": self.smallest_singular_value,
                "smallest_abs_eigenvalue": self.smallest_abs_eigenvalue,
                "grid_size": self.grid_size,
                "stable_under_refinement": self.stable_under_refinement,
                "per_grid": [{"N": n, "sigma_min": s} for n, s in self.per_grid]}


def nondegeneracy_report(ops, rel_spread: float = 0.2, floor: float = 1e-6,
                         with_eigen: bool = False) -> SpectrumReport:
    """Smallest singular value across a refinement ladder of assembled operators."""
    ops = list(ops)
    sig = []
    for op in ops:
        sig.append((op.grid.n_nodes, smallest_singular_value(op)))
        log.info("%s N=%d sigma_min=%.6g", op.provenance, *sig[-1])
    vals = np.array([s for _, s in sig])
    stable = bool(vals.min() > floor and (vals.max() - vals.min()) < rel_spread * vals.max())
    eig = smallest_abs_eigenvalue(ops[-1]) if with_eigen else None
    return SpectrumReport(ops[-1].provenance, float(vals[-1]), ops[-1].grid.n_nodes, stable,
                          tuple(sig), eig)
