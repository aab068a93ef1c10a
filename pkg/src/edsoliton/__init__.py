"""Einstein-Dirac solitons from the Choquard ground state by continuation in eps = m - omega.

Modules: ``radial`` (grids, fields, quadrature, kernel), ``choquard`` (the
eps = 0 ground state), ``linearized`` (linear operators and spectral
certificates), ``einstein_dirac`` (perturbed system, Newton, continuation,
physical fields) and ``cli_io`` (configuration, orchestration, output).
"""

__version__ = "0.1.0"
