"""Linearized operators L± around the ground state, per angular harmonic.

On the mode-m radial part of a field f_m(r) e^{imθ},

    L± f = -f'' - f'/r + (m²/r²) f + f - c Q² f,   c = 3 (L+), c = 1 (L-).

The discretization is 4th-order finite differences on the uniform radial
grid (pentadiagonal bands), with parity ghosts at r=0 and a Dirichlet
condition at r_max.  The kernel modes -- L+ at m=1 (radial part Q') and
L- at m=0 (Q itself) -- are inverted through a bordered system that both
enforces solvability and gauges the solution orthogonal to the kernel.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson
from scipy.linalg import solve_banded

from .radial import RadialGrid, RadialFunction, derivative

M_MAX_DEFAULT = 4

OpName = Literal["plus", "minus"]


class SolvabilityViolated(RuntimeError):
    """Source has a kernel component: the elliptic system is not invertible.

    Signals a wrong source construction upstream -- the adjusted constants
    must make each system solvable.
    """


class ModeError(ValueError):
    """Angular mode index exceeds the configured m_max."""


@dataclass
class HarmonicField:
    """One angular harmonic: mode index m and its (possibly complex) radial part."""

    m: int
    profile: RadialFunction

    def __post_init__(self):
        if self.m != 0 and abs(self.profile.values[0]) > 1e-10 * (np.max(np.abs(self.profile.values)) + 1e-300):
            raise ValueError("harmonic with m != 0 must vanish at r = 0")


def _d2_rows(n, h):
    """4th-order second-derivative band coefficients (interior)."""
    return np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * h * h)


def _d1_rows(n, h):
    return np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12 * h)


@lru_cache(maxsize=64)
def _lap_banded_cached(r_max: float, n: int, m: int):
    """Banded (5-diagonal) 2D radial Laplacian at harmonic m: f'' + f'/r - m²f/r².

    Row 0 carries the origin condition: the L'Hopital value 2f''(0) for m=0,
    the Dirichlet row f(0)=0 for m >= 1.  Parity ghosts f(-r) = (-1)^m f(r)
    keep 4th order at i=1; zero ghosts beyond r_max (decayed tail).
    """
    grid = RadialGrid(r_max, n)
    h = grid.h
    r = grid.nodes
    c2 = _d2_rows(n, h)
    c1 = _d1_rows(n, h)
    ab = np.zeros((5, n))  # diagonals: ab[0]=k=+2 ... ab[4]=k=-2 (solve_banded layout)

    def add(i, j, v):
        ab[2 + i - j, j] += v

    s = (-1.0) ** m
    for i in range(1, n - 1):
        ri = r[i]
        coefs = c2 + c1 / ri
        for d, cc in zip((-2, -1, 0, 1, 2), coefs):
            j = i + d
            if j < 0:
                add(i, -j, s * cc)      # parity ghost
            elif j >= n:
                pass                     # zero ghost beyond r_max
            else:
                add(i, j, cc)
        add(i, i, -m * m / ri ** 2)
    if m == 0:
        # Δf(0) = 2 f''(0) = (16 f1 - f2 - 15 f0) / (3 h²) to 4th order
        add(0, 0, -15.0 / (3 * h * h))
        add(0, 1, 16.0 / (3 * h * h))
        add(0, 2, -1.0 / (3 * h * h))
    else:
        add(0, 0, 1.0)  # caller interprets row 0 as f(0)=0 constraint
    return ab


def laplacian_banded(grid: RadialGrid, m: int) -> np.ndarray:
    return _lap_banded_cached(grid.r_max, grid.n, m).copy()


def _transpose_banded(ab: np.ndarray) -> np.ndarray:
    n = ab.shape[1]
    abT = np.zeros_like(ab)
    for k in (-2, -1, 0, 1, 2):
        i0, i1 = max(0, -k), min(n, n - k)
        abT[2 - k, i0 + k:i1 + k] = ab[2 + k, i0:i1]
    return abT


def _banded_to_sparse(ab: np.ndarray) -> sp.csr_matrix:
    n = ab.shape[1]
    offsets = [2, 1, 0, -1, -2]
    mats = [ab[2 - k, k:] if k >= 0 else ab[2 - k, :n + k] for k in offsets]
    return sp.diags(mats, offsets, shape=(n, n), format="csr")


@lru_cache(maxsize=64)
def _lap_sparse_cached(r_max: float, n: int, m: int) -> sp.csr_matrix:
    return _banded_to_sparse(_lap_banded_cached(r_max, n, m))


def laplacian_matrix(grid: RadialGrid, m: int) -> sp.csr_matrix:
    """Sparse Laplacian at harmonic m (row 0 is the origin/Dirichlet row)."""
    return _lap_sparse_cached(grid.r_max, grid.n, m)


def operator_banded(grid: RadialGrid, m: int, potential: np.ndarray) -> np.ndarray:
    """Banded form of -Δ_m + potential(r) (row 0: origin stencil / Dirichlet)."""
    ab = -laplacian_banded(grid, m)
    pot = np.broadcast_to(potential, (grid.n,))
    if m == 0:
        ab[2, :] += pot
    else:
        ab[2, 0] = 1.0   # keep f(0)=0 row (the -lap already put -1 there)
        ab[2, 1:] += pot[1:]
        ab[1, 0] = 0.0
        ab[0, 0] = 0.0
    # Dirichlet at r_max
    ab[:, -1] = 0.0
    ab[2, -1] = 1.0
    ab[3, -1] = 0.0
    ab[4, -1] = 0.0
    # zero couplings INTO the last node from interior rows are fine (tail ~ 0)
    return ab


class LinearizedOps:
    """L+ and L- on a fixed grid around a fixed ground state."""

    def __init__(self, Q: RadialFunction, m_max: int = M_MAX_DEFAULT):
        self.Q = Q
        self.grid = Q.grid
        self.m_max = m_max
        q2 = Q.values ** 2
        self._pot = {"plus": 1.0 - 3.0 * q2, "minus": 1.0 - q2}
        self._banded = {}
        self._sparse = {}
        self._kernels = {}
        self.dQ = derivative(Q.values, self.grid, parity=+1)

    # -- matrices ------------------------------------------------------

    def _get_banded(self, op: OpName, m: int) -> np.ndarray:
        key = (op, m)
        if key not in self._banded:
            self._banded[key] = operator_banded(self.grid, m, self._pot[op])
        return self._banded[key]

    def _get_sparse(self, op: OpName, m: int) -> sp.csr_matrix:
        key = (op, m)
        if key not in self._sparse:
            ab = self._get_banded(op, m)
            self._sparse[key] = _banded_to_sparse(ab)
        return self._sparse[key]

    def _check_mode(self, m: int):
        if abs(m) > self.m_max:
            raise ModeError(f"|m|={abs(m)} exceeds m_max={self.m_max}")

    def is_kernel_mode(self, op: OpName, m: int) -> bool:
        return (op == "plus" and abs(m) == 1) or (op == "minus" and m == 0)

    def kernel_vector(self, op: OpName, m: int, side: str = "right") -> np.ndarray:
        """Discrete kernel radial part (Q' for L+ at |m|=1, Q for L- at m=0).

        side="left" returns the left null vector (≈ r times the right one for
        this nearly self-adjoint discretization); sources are solvable exactly
        when orthogonal to it.
        """
        key = (op, abs(m), side)
        if key not in self._kernels:
            k0 = self.dQ.copy() if op == "plus" else self.Q.values.copy()
            if op == "plus":
                k0[0] = 0.0
            if side == "left":
                k0 = k0 * self.grid.nodes
            k = k0 / np.linalg.norm(k0)
            ab = self._get_banded(op, abs(m))
            if side == "left":
                ab = _transpose_banded(ab)
            for _ in range(2):   # inverse iteration onto the near-null direction
                x = solve_banded((2, 2), ab, k)
                x /= np.linalg.norm(x)
                if np.dot(x, k0) < 0:
                    x = -x
                k = x
            if side == "left":
                # constraint rows (f(0)=0 for m>=1, Dirichlet at r_max) never
                # see the source, so the solvability functional ignores them
                if abs(m) >= 1:
                    k[0] = 0.0
                k[-1] = 0.0
                k /= np.linalg.norm(k)
            self._kernels[key] = k
        return self._kernels[key]

    # -- apply / solve ---------------------------------------------------

    def apply(self, op: OpName, values: np.ndarray, m: int) -> np.ndarray:
        """L±f for the mode-m radial part; row 0 is recomputed physically.

        For m=0 the origin row is the 4th-order L'Hopital stencil already;
        for m>=1 the matrix row is the constraint f(0)=0, so the returned
        value at r=0 is set to 0 (all m>=1 fields vanish there).
        """
        self._check_mode(m)
        A = self._get_sparse(op, abs(m))
        vals = np.asarray(values)
        if np.iscomplexobj(vals):
            out = A @ vals.real + 1j * (A @ vals.imag)
        else:
            out = A @ vals
        if abs(m) >= 1:
            out = out.copy()
            out[0] = 0.0
        # Dirichlet row applied L to a decayed tail: report 0 there
        out[-1] = 0.0
        return out

    def solvability_defect(self, op: OpName, values: np.ndarray, m: int) -> float:
        """Relative size of the source component along the kernel of (op, m).

        Uses the left null vector of the discrete operator, so a defect of
        zero means the banded system is consistent to machine precision.
        """
        if not self.is_kernel_mode(op, m):
            return 0.0
        w = self.kernel_vector(op, m, side="left")
        num = abs(np.dot(w, values))
        den = np.linalg.norm(values) + 1e-300
        return float(num / den)

    def solve(self, op: OpName, gvalues: np.ndarray, m: int,
              check: bool = True, threshold: float = 1e-8) -> np.ndarray:
        """Solve L±f = g at mode m; gauge f ⟂ kernel in the r dr pairing.

        Raises SolvabilityViolated when a kernel mode receives a source with
        relative kernel projection above `threshold`.
        """
        self._check_mode(m)
        g = np.asarray(gvalues)
        if np.iscomplexobj(g):
            # parts at roundoff level relative to the other are dropped: the
            # defect of pure noise is an O(1) ratio with no meaning
            scale = max(np.max(np.abs(g.real)), np.max(np.abs(g.imag)), 1e-300)
            out = np.zeros(g.shape, dtype=complex)
            if np.max(np.abs(g.real)) > 1e-13 * scale:
                out += self.solve(op, g.real, m, check, threshold)
            if np.max(np.abs(g.imag)) > 1e-13 * scale:
                out += 1j * self.solve(op, g.imag, m, check, threshold)
            return out
        rhs = g.astype(float).copy()
        rhs[-1] = 0.0                   # Dirichlet
        if abs(m) >= 1:
            rhs[0] = 0.0                # origin constraint row
        if self.is_kernel_mode(op, m):
            if check:
                defect = self.solvability_defect(op, g, m)
                if defect > threshold:
                    raise SolvabilityViolated(
                        f"source projection on kernel of L{op} (m={m}) is {defect:.2e} "
                        f"(> {threshold:.0e}); check the source assembly")
            f = self._solve_kernel_mode(op, abs(m), rhs)
        else:
            ab = self._get_banded(op, abs(m))
            f = solve_banded((2, 2), ab, rhs)
        return f

    def _solve_kernel_mode(self, op: OpName, m: int, rhs: np.ndarray) -> np.ndarray:
        """Deflated banded solve on a kernel mode.

        The banded factorization is backward stable, so after removing the
        left-kernel component of the source, the only contamination in the
        solution is along the kernel itself; the gauge projection removes it.
        """
        w = self.kernel_vector(op, m, side="left")
        k = self.kernel_vector(op, m)
        rhs = rhs - w * np.dot(w, rhs)
        ab = self._get_banded(op, m)
        f = solve_banded((2, 2), ab, rhs)
        d = k * self.grid.nodes          # gauge pairing weight r dr
        return f - k * (np.dot(d, f) / np.dot(d, k))

    # -- derived objects ---------------------------------------------------

    def compute_rho(self) -> RadialFunction:
        """The even solution of L+ρ = |y|²Q (m=0, no kernel obstruction)."""
        g = self.grid.nodes ** 2 * self.Q.values
        rho = self.solve("plus", g, m=0)
        return RadialFunction(self.grid, rho)

    def cancellation_moment(self, j: int, l: int, nt: int = 64) -> float:
        """(y_j y_l Q³, ΛQ) with the angular factor done by honest quadrature."""
        theta = np.linspace(0.0, 2 * np.pi, nt, endpoint=False)
        cs = np.stack([np.cos(theta), np.sin(theta)])
        ang = np.mean(cs[j] * cs[l]) * 2 * np.pi
        q = self.Q.values
        lam_q = q + self.grid.nodes * self.dQ
        radial = simpson_weighted(self.grid.nodes ** 2 * q ** 3 * lam_q * self.grid.nodes,
                                  self.grid.nodes)
        return float(ang * radial)

    def identity_residuals(self) -> dict:
        """Relative residuals of the kernel/generalized-kernel relations."""
        g = self.grid
        r = g.nodes
        q = self.Q.values
        dq = self.dQ
        lam_q = q + r * dq
        lap_q = q - q ** 3              # exact through the discrete equation
        rho = self.compute_rho()

        def rel(resid, ref):
            return norm2d(resid, g) / norm2d(ref, g)

        out = {
            "Lminus_Q": norm2d(self.apply("minus", q, 0), g) / norm2d(q, g),
            "Lplus_gradQ": norm2d(self.apply("plus", dq, 1), g) / norm2d(dq, g),
            "Lplus_LambdaQ": rel(self.apply("plus", lam_q, 0) + 2 * q, 2 * q),
            "Lminus_yQ": rel(self.apply("minus", r * q, 1) + 2 * dq, 2 * dq),
            "Lminus_y2Q": rel(self.apply("minus", r ** 2 * q, 0) + 4 * lam_q, 4 * lam_q),
            "Lplus_rho": rel(self.apply("plus", rho.values, 0) - r ** 2 * q, r ** 2 * q),
            "Lplus_DeltaQ": rel(self.apply("plus", lap_q, 0) - 6 * dq ** 2 * q, 6 * dq ** 2 * q),
        }
        return out


def simpson_weighted(fr: np.ndarray, r: np.ndarray) -> float:
    return float(simpson(fr, x=r))


def norm2d(values: np.ndarray, grid: RadialGrid) -> float:
    """L²(R²) norm of a single-harmonic radial part (measure 2π r dr)."""
    v = np.abs(np.asarray(values)) ** 2
    return float(np.sqrt(2 * np.pi * simpson_weighted(v * grid.nodes, grid.nodes)))
