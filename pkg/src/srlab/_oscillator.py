"""Shared 1D machinery: normalized Hermite functions and Dirichlet-window
tridiagonal eigensolves (optionally Richardson-extrapolated across a grid
refinement, which removes the leading h^2 error of the 3-point stencil).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal


def hermite_ladder(xi: np.ndarray, lmax: int) -> np.ndarray:
    """psi_0..psi_lmax at points xi, shape (lmax+1, len(xi)).

    Stable two-term recurrence on the L^2-normalized functions; safe for
    the moderate degrees (<= a few thousand) used here.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty((lmax + 1, xi.size))
    out[0] = np.pi ** -0.25 * np.exp(-xi ** 2 / 2)
    if lmax >= 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for l in range(1, lmax):
        out[l + 1] = (np.sqrt(2.0 / (l + 1)) * xi * out[l]
                      - np.sqrt(l / (l + 1)) * out[l - 1])
    return out


def hermite_function(xi: np.ndarray, ell: int) -> np.ndarray:
    return hermite_ladder(xi, ell)[ell]


def dirichlet_eigenvalues(potential, lo: float, hi: float, npoints: int,
                          count: int | None = None,
                          value_range: tuple[float, float] | None = None) -> np.ndarray:
    """Lowest eigenvalues of -d^2/dx^2 + V on [lo, hi] with Dirichlet ends.

    Either the ``count`` lowest or all within ``value_range``.
    """
    x = np.linspace(lo, hi, npoints)
    h = x[1] - x[0]
    d = 2.0 / h ** 2 + potential(x)
    e = np.full(npoints - 1, -1.0 / h ** 2)
    if value_range is not None:
        return eigvalsh_tridiagonal(d, e, select="v", select_range=value_range)
    return eigvalsh_tridiagonal(d, e, select="i", select_range=(0, count - 1))


def dirichlet_eigensystem(potential, lo: float, hi: float, npoints: int,
                          value_range: tuple[float, float]):
    """Eigenvalues and vectors within ``value_range``; vectors are columns,
    normalized so that sum(v^2) * h = 1 (grid L^2)."""
    x = np.linspace(lo, hi, npoints)
    h = x[1] - x[0]
    d = 2.0 / h ** 2 + potential(x)
    e = np.full(npoints - 1, -1.0 / h ** 2)
    w, v = eigh_tridiagonal(d, e, select="v", select_range=value_range)
    return x, w, v / np.sqrt(h)


def richardson_eigenvalues(potential, lo: float, hi: float, npoints: int,
                           count: int):
    """(extrapolated, coarse, fine) lowest eigenvalues on [lo, hi].

    The fine grid has 2*npoints - 1 points (exactly halved spacing), so the
    classical (4*fine - coarse)/3 combination cancels the h^2 term.
    """
    coarse = dirichlet_eigenvalues(potential, lo, hi, npoints, count=count)
    fine = dirichlet_eigenvalues(potential, lo, hi, 2 * npoints - 1, count=count)
    return (4.0 * fine - coarse) / 3.0, coarse, fine
