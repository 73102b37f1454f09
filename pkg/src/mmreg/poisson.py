"""Discrete Poisson solver with homogeneous Dirichlet boundaries.

The 5-point (2D) / 7-point (3D) unit-spacing Laplacian restricted to the
grid interior is diagonalised by the type-I discrete sine transform, so a
solve is a forward DST, a division by the eigenvalues and an inverse DST.
The restricted operator is symmetric, hence :meth:`PoissonSolver.solve` is
its own adjoint and doubles as the vector-Jacobian product of the solve.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import fft


@lru_cache(maxsize=32)
def _eigenvalues(interior: tuple[int, ...]) -> np.ndarray:
    axes = []
    for a, n in enumerate(interior):
        k = np.arange(1, n + 1, dtype=float)
        lam = 2.0 * np.cos(np.pi * k / (n + 1)) - 2.0
        view = [1] * len(interior)
        view[a] = n
        axes.append(lam.reshape(view))
    eig = sum(axes)
    eig.setflags(write=False)
    return eig


class PoissonSolver:
    """Solve ``laplacian(u) = rhs`` on the interior with ``u = 0`` on the boundary."""

    def __init__(self, shape):
        self.shape = tuple(int(n) for n in shape)
        if len(self.shape) not in (2, 3):
            raise ValueError(f"Poisson solver supports 2D/3D grids, got {self.shape}")
        if min(self.shape) < 3:
            raise ValueError(f"grid {self.shape} has an empty interior")
        self.interior = tuple(n - 2 for n in self.shape)
        self.eigenvalues = _eigenvalues(self.interior)

    def _inner(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * len(self.shape)

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != self.shape:
            raise ValueError(f"rhs shape {rhs.shape} does not match solver grid {self.shape}")
        inner = self._inner()
        coeffs = fft.dstn(rhs[inner], type=1) / self.eigenvalues
        out = np.zeros(self.shape)
        out[inner] = fft.idstn(coeffs, type=1)
        return out

    # solve is symmetric on the interior and ignores boundary rhs values.
    solve_adjoint = solve

    def apply(self, u) -> np.ndarray:
        """Discrete Laplacian on the interior; boundary samples are passed through."""
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ValueError(f"field shape {u.shape} does not match solver grid {self.shape}")
        out = u.copy()
        inner = self._inner()
        lap = -2.0 * len(self.shape) * u[inner]
        for a in range(len(self.shape)):
            lo = list(inner)
            hi = list(inner)
            lo[a] = slice(0, -2)
            hi[a] = slice(2, None)
            lap = lap + u[tuple(lo)] + u[tuple(hi)]
        out[inner] = lap
        return out


def solve(rhs) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    return PoissonSolver(rhs.shape).solve(rhs)


def apply(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return PoissonSolver(u.shape).apply(u)
