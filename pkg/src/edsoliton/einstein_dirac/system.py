"""The rescaled Einstein-Dirac system in eps = m - omega, its residual and Jacobian.

Unknowns are nodal profiles (phi, chi, tau) on one grid.  Writing
S = 1 + eps tau, rho = phi^2 + eps chi^2, I = int_0^r S^2 rho ds and
c = 16 pi (m - eps) eps, the metric function is A = 1 - c I / r and

    L1 = sqrt(A) phi'/r - phi/r^2 + 2m chi/r + K1/r
    L2 = sqrt(A) chi'/r + chi/r^2 + phi/r - m phi tau/r + K2/r
    L3 = A tau' + 8 pi m/r^2 int_0^r phi^2 ds + K3.

Two rows are boundary conditions at r_max: the phi row becomes phi/r = 0
and the tau row becomes the exterior (Schwarzschild) condition T^2 A = 1,
written as (S^2 A - 1)/(2 eps) = tau + eps tau^2/2 - 8 pi (m - eps) I S^2/r.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from ..linearized import LinearOperator, _diag, _last_row_only, _replace_last_row
from ..radial import OriginClass, RadialField, RadialGrid, TailClass

VR = OriginClass.VANISHES_LIKE_R
V2 = OriginClass.VANISHES_LIKE_R2
FIN = OriginClass.FINITE_LIMIT

K3_TERMS = ("chi2_prefix", "tau_rho_prefix", "tau2_rho_prefix", "total_prefix",
            "total_prefix_tau", "chi2_local", "rho_cubic", "rho_S3", "phi_chi", "phi2_minus")


class PositivityError(ValueError):
    """The metric function A dropped to or below the positivity floor."""

    def __init__(self, message, node=None, radius=None, value=None):
        super().__init__(message)
        self.node = node
        self.radius = radius
        self.value = value


@dataclass(frozen=True, eq=False)
class RescalingMap:
    eps: float

    @property
    def alpha(self) -> float:
        return float(np.sqrt(self.eps))

    @property
    def lam(self) -> float:
        return float(np.sqrt(self.eps))

    @property
    def beta(self) -> float:
        return float(self.eps)

    @property
    def gamma(self) -> float:
        return float(self.eps)


@dataclass(frozen=True, eq=False)
class PerturbedState:
    eps: float
    m: float
    phi: RadialField
    chi: RadialField
    tau: RadialField

    def __post_init__(self):
        if not 0 <= self.eps < self.m:
            raise ValueError(f"need 0 <= eps < m, got eps={self.eps}, m={self.m}")
        if not (self.phi.grid == self.chi.grid == self.tau.grid):
            raise ValueError("state fields must share one grid")

    @property
    def grid(self) -> RadialGrid:
        return self.phi.grid

    @property
    def omega(self) -> float:
        return self.m - self.eps

    def vector(self) -> np.ndarray:
        return np.concatenate([self.phi.values, self.chi.values, self.tau.values])

    def with_vector(self, y: np.ndarray, eps: float | None = None) -> "PerturbedState":
        n = self.grid.n_nodes
        y = np.asarray(y, dtype=float)
        return PerturbedState(self.eps if eps is None else eps, self.m,
                              self.phi.like(y[:n]), self.chi.like(y[n:2 * n]), self.tau.like(y[2 * n:]))

    @classmethod
    def from_choquard(cls, sol, eps: float = 0.0) -> "PerturbedState":
        return cls(eps, sol.m, sol.phi0, sol.chi0, sol.tau0)

    @cached_property
    def _pieces(self) -> "_Pieces":
        return _Pieces(self)


class _Pieces:
    """Shared intermediate quantities of one state."""

    def __init__(self, st: PerturbedState):
        g = st.grid
        self.r = r = g.nodes
        self.eps = e = st.eps
        self.m = m = st.m
        self.omega = m - e
        self.phi = phi = st.phi.values
        self.chi = chi = st.chi.values
        self.tau = tau = st.tau.values
        self.S = 1.0 + e * tau
        self.rho = phi ** 2 + e * chi ** 2
        self.I = g.prefix_values(self.S ** 2 * self.rho)
        self.c = 16 * np.pi * self.omega * e
        self.A = 1.0 - self.c * self.I / r
        d = g.derivative_matrix(VR)
        self.dphi = d @ phi
        self.dchi = d @ chi
        self.dtau = g.derivative_matrix(FIN) @ tau
        self.grid = g


def metric_A(state: PerturbedState, delta_A: float | None = 0.05) -> RadialField:
    """A = 1 - 16 pi (m - eps) eps / r * int_0^r (1 + eps tau)^2 (phi^2 + eps chi^2) ds.

    Raises PositivityError at the first node with A <= delta_A (pass None to skip).
    """
    p = state._pieces
    if delta_A is not None:
        bad = np.flatnonzero(p.A <= delta_A)
        if bad.size:
            j = int(bad[0])
            raise PositivityError(f"A = {p.A[j]:.6g} <= {delta_A} at node {j} (r = {p.r[j]:.6g})",
                                  node=j, radius=float(p.r[j]), value=float(p.A[j]))
    return RadialField(state.grid, p.A, FIN, TailClass.CONSTANT)


def k3_terms(state: PerturbedState) -> dict:
    """The ten summands of K3, by name (see ``K3_TERMS``)."""
    p = state._pieces
    g, r, e, m = p.grid, p.r, p.eps, p.m
    phi, chi, tau, rho, S = p.phi, p.chi, p.tau, p.rho, p.S
    pi8 = 8 * np.pi
    return {
        "chi2_prefix": pi8 * m * e / r ** 2 * g.prefix_values(chi ** 2),
        "tau_rho_prefix": 2 * pi8 * m * e / r ** 2 * g.prefix_values(tau * rho),
        "tau2_rho_prefix": pi8 * m * e ** 2 / r ** 2 * g.prefix_values(tau ** 2 * rho),
        # no tau factor here: expanding the unsimplified third equation fixes this term
        "total_prefix": -pi8 * e / r ** 2 * p.I,
        "total_prefix_tau": pi8 * (m - e) * e / r ** 2 * p.I * tau,
        "chi2_local": 2 * pi8 * m * e * chi ** 2 / r,
        "rho_cubic": pi8 * m * e * (3 * tau + 3 * e * tau ** 2 + e ** 2 * tau ** 3) * rho / r,
        "rho_S3": -pi8 * e * S ** 3 * rho / r,
        "phi_chi": -2 * pi8 * e * S ** 2 * phi * chi / r ** 2,
        "phi2_minus": -pi8 * m * e * (2 * tau + e * tau ** 2) * (phi ** 2 - e * chi ** 2) / r,
    }


def k_terms(state: PerturbedState):
    """(K1, K2, K3) as RadialFields."""
    p = state._pieces
    e, m = p.eps, p.m
    k1 = -e * p.chi + e * (m - e) * p.tau * p.chi
    k2 = e * p.tau * p.phi
    k3 = sum(k3_terms(state).values())
    g = state.grid
    return (RadialField(g, k1, V2), RadialField(g, k2, V2), RadialField(g, k3, FIN, TailClass.INVERSE_R))


def exterior_condition(state: PerturbedState) -> float:
    """(S^2 A - 1)/(2 eps) at r_max, finite as eps -> 0."""
    p = state._pieces
    return float(p.tau[-1] + 0.5 * p.eps * p.tau[-1] ** 2
                 - 8 * np.pi * p.omega * p.I[-1] * p.S[-1] ** 2 / p.r[-1])


@dataclass(frozen=True, eq=False)
class Residual:
    res_phi: RadialField
    res_chi: RadialField
    res_tau: RadialField
    norms: tuple

    def vector(self) -> np.ndarray:
        return np.concatenate([self.res_phi.values, self.res_chi.values, self.res_tau.values])

    @property
    def total(self) -> float:
        return float(sum(self.norms))


def y_norms(grid: RadialGrid, f1, f2, f3) -> tuple:
    """(L^2(R^3), L^2(R^3), L^1(0, inf)) norms of nodal rows; boundary rows add their value."""
    w, r = grid.weights, grid.nodes
    n1 = np.sqrt(4 * np.pi * np.sum(w[:-1] * r[:-1] ** 2 * f1[:-1] ** 2) + f1[-1] ** 2)
    n2 = np.sqrt(4 * np.pi * np.sum(w * r ** 2 * f2 ** 2))
    n3 = np.sum(w[:-1] * np.abs(f3[:-1])) + abs(f3[-1])
    return float(n1), float(n2), float(n3)


def residual_D(state: PerturbedState, delta_A: float | None = None) -> Residual:
    """Nodal (L1, L2, L3) with the two boundary rows, and their Y-norms."""
    metric_A(state, delta_A)
    p = state._pieces
    g, r, m = p.grid, p.r, p.m
    k1, k2, k3 = (k.values for k in k_terms(state))
    sa = np.sqrt(p.A)
    l1 = sa * p.dphi / r - p.phi / r ** 2 + 2 * m * p.chi / r + k1 / r
    l2 = sa * p.dchi / r + p.chi / r ** 2 + p.phi / r - m * p.phi * p.tau / r + k2 / r
    l3 = p.A * p.dtau + 8 * np.pi * m / r ** 2 * g.prefix_values(p.phi ** 2) + k3
    l1[-1] = p.phi[-1] / r[-1]
    l3[-1] = exterior_condition(state)
    return Residual(RadialField(g, l1, FIN, TailClass.ZERO), RadialField(g, l2, FIN, TailClass.ZERO),
                    RadialField(g, l3, FIN, TailClass.ZERO), y_norms(g, l1, l2, l3))


def residual_compact_L3(state: PerturbedState) -> np.ndarray:
    """Interior L3 from the factored form (independent of the K3 term list)."""
    p = state._pieces
    r, e, m, w = p.r, p.eps, p.m, p.omega
    pi8 = 8 * np.pi
    return (p.A * p.dtau + pi8 * w * p.I * p.S / r ** 2 + pi8 * w * p.S ** 3 * p.rho / r
            - 2 * pi8 * e * p.S ** 2 * p.phi * p.chi / r ** 2
            - pi8 * m * p.S ** 2 * (p.phi ** 2 - e * p.chi ** 2) / r)


def jacobian(state: PerturbedState, delta_A: float | None = None) -> LinearOperator:
    """Analytic Jacobian of ``residual_D``: banded part plus diag(u) P G prefix part.

    The only running integral is I, so every dA/d(.) term shares the rows of P.
    """
    metric_A(state, delta_A)
    p = state._pieces
    g, r, e, m, w, c = p.grid, p.r, p.eps, p.m, p.omega, p.c
    n = g.n_nodes
    phi, chi, tau, S, rho, A = p.phi, p.chi, p.tau, p.S, p.rho, p.A
    sa = np.sqrt(A)
    d, dt = g.derivative_matrix(VR), g.derivative_matrix(FIN)
    pi8 = 8 * np.pi

    # dA[h] = -(c/r) P[g1 h1 + g2 h2 + g3 h3]
    g1, g2, g3 = 2 * S ** 2 * phi, 2 * e * S ** 2 * chi, 2 * e * S * rho
    da = -c / r

    j11 = _replace_last_row(_diag(sa / r) @ d - _diag(1 / r ** 2), _last_row_only(n, 1 / r[-1]), n)
    j12 = _replace_last_row(_diag((2 * m - e + e * w * tau) / r), None, n)
    j13 = _replace_last_row(_diag(e * w * chi / r), None, n)
    u1 = 0.5 / sa * p.dphi / r * da
    u1[-1] = 0.0

    j21 = _diag(1 / r - m * tau / r + e * tau / r)
    j22 = _diag(sa / r) @ d + _diag(1 / r ** 2)
    j23 = _diag((e - m) * phi / r)
    u2 = 0.5 / sa * p.dchi / r * da

    j31 = _diag(2 * pi8 * w * S ** 3 * phi / r - 2 * pi8 * e * S ** 2 * chi / r ** 2
                - 2 * pi8 * m * S ** 2 * phi / r)
    j32 = _diag(2 * pi8 * w * e * S ** 3 * chi / r - 2 * pi8 * e * S ** 2 * phi / r ** 2
                + 2 * pi8 * m * e * S ** 2 * chi / r)
    j33_diag = (pi8 * w * p.I * e / r ** 2 + 3 * pi8 * w * e * S ** 2 * rho / r
                - 4 * pi8 * e ** 2 * S * phi * chi / r ** 2
                - 2 * pi8 * m * e * S * (phi ** 2 - e * chi ** 2) / r)
    bc33 = (1 + e * tau[-1]) - 2 * pi8 * w * p.I[-1] * e * S[-1] / r[-1]
    j31 = _replace_last_row(j31, None, n)
    j32 = _replace_last_row(j32, None, n)
    j33 = _replace_last_row(_diag(A) @ dt + _diag(j33_diag), _last_row_only(n, bc33), n)
    u3 = p.dtau * da + pi8 * w * S / r ** 2
    u3[-1] = -pi8 * w * S[-1] ** 2 / r[-1]

    band = sparse.bmat([[j11, j12, j13], [j21, j22, j23], [j31, j32, j33]], format="csr")
    gmat = sparse.hstack([_diag(g1), _diag(g2), _diag(g3)], format="csr")
    layout = (("phi", n), ("chi", n), ("tau", n))
    return LinearOperator("jacobian_eps", g, layout, layout, band,
                          prefix_u=np.concatenate([u1, u2, u3]), prefix_g=gmat,
                          bc_rows=(n - 1, 3 * n - 1))
