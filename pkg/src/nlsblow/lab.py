"""Shared, cached build of the ground-state stack (grid, Q, moments, L±, ρ).

Everything downstream (profile construction, simulation initialization,
decomposition windows) reads from one Lab instance, so the expensive pieces
are computed once per grid.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .radial import RadialGrid, RadialFunction, Moments, solve_ground_state, moments
from .linops import LinearizedOps, M_MAX_DEFAULT

DEFAULT_R_MAX = 30.0
DEFAULT_N = 8192


@dataclass
class Lab:
    grid: RadialGrid
    Q: RadialFunction
    moments: Moments
    ops: LinearizedOps
    rho: RadialFunction = field(init=False)

    def __post_init__(self):
        self.rho = self.ops.compute_rho()

    @property
    def dQ(self) -> np.ndarray:
        return self.ops.dQ

    @property
    def rho_Q(self) -> float:
        """(ρ, Q) -- nondegenerate, equals ||yQ||²/2."""
        from .linops import simpson_weighted
        r = self.grid.nodes
        return 2 * np.pi * simpson_weighted(self.rho.values * self.Q.values * r, r)

    @property
    def y2Q_rho(self) -> float:
        """(|y|²Q, ρ)."""
        from .linops import simpson_weighted
        r = self.grid.nodes
        return 2 * np.pi * simpson_weighted(r ** 2 * self.Q.values * self.rho.values * r, r)


@lru_cache(maxsize=8)
def get_lab(r_max: float = DEFAULT_R_MAX, n: int = DEFAULT_N,
            m_max: int = M_MAX_DEFAULT, tol: float = 1e-10) -> Lab:
    grid = RadialGrid(r_max, n)
    Q = solve_ground_state(grid, tol=tol)
    return Lab(grid=grid, Q=Q, moments=moments(Q), ops=LinearizedOps(Q, m_max=m_max))
