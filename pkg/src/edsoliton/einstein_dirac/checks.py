"""Finite-difference validation of the analytic Jacobian."""

from __future__ import annotations

import numpy as np

from .system import PerturbedState, jacobian, residual_D, y_norms


def smooth_direction(grid, rng: np.random.Generator) -> np.ndarray:
    """Random smooth perturbation with the origin and tail behaviour of (phi, chi, tau)."""
    r = grid.nodes
    a = rng.uniform(0.5, 2.0, 6)
    h = r * np.exp(-a[0] * r) * np.cos(a[1] * r)
    k = r ** 2 * np.exp(-a[2] * r) * np.sin(a[3] * r + 1.0)
    ell = np.cos(a[4] * r) / (1.0 + a[5] * r ** 2)
    h[-1] = 0.0
    return np.concatenate([h, k, ell])


def jacobian_fd_mismatch(state: PerturbedState, direction: np.ndarray,
                         steps=(1e-4, 1e-5)) -> dict:
    """Relative Y-norm mismatch between J.d and central differences of the residual.

    Also reports the Richardson combination of the two steps, which removes
    the O(h^2) truncation term of the central difference.
    """
    g = state.grid
    jd = jacobian(state).matvec(direction)
    y = state.vector()
    scale = sum(y_norms(g, *np.split(jd, 3)))
    fds = []
    out = {}
    for h in steps:
        fd = (residual_D(state.with_vector(y + h * direction)).vector()
              - residual_D(state.with_vector(y - h * direction)).vector()) / (2 * h)
        fds.append(fd)
        out[f"h={h:g}"] = sum(y_norms(g, *np.split(fd - jd, 3))) / scale
    h1, h2 = steps[0], steps[1]
    q = (h1 / h2) ** 2
    extrap = (q * fds[1] - fds[0]) / (q - 1)
    out["extrapolated"] = sum(y_norms(g, *np.split(extrap - jd, 3))) / scale
    out["best"] = min(out.values())
    return out
