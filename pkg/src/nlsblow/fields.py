"""Angular-harmonic fields: complex radial profiles per e^{imθ} mode.

A field F(y) = Σ_m f_m(r) e^{imθ} with the f_m sampled on the shared radial
grid.  Real fields carry conjugate-symmetric components f_{-m} = conj(f_m).
Mode products are exact convolutions in m; parameter-space calculus on the
profile expansion never touches these radial arrays.
"""

from typing import Callable, Dict

import numpy as np
from scipy.interpolate import CubicSpline

from .radial import RadialGrid


def angular_modes(fn: Callable, max_deg: int) -> Dict[int, complex]:
    """Fourier coefficients of θ -> fn(cosθ, sinθ), exact for trig polynomials.

    Returns {m: c_m} with fn(θ) = Σ c_m e^{imθ}, coefficients below 1e-13 of
    the largest dropped.
    """
    nt = 4 * max_deg + 8
    theta = np.arange(nt) * (2 * np.pi / nt)
    vals = fn(np.cos(theta), np.sin(theta))
    c = np.fft.fft(np.asarray(vals, dtype=complex)) / nt
    out = {}
    scale = np.max(np.abs(c)) + 1e-300
    for m in range(-max_deg, max_deg + 1):
        cm = c[m % nt]
        if abs(cm) > 1e-13 * scale:
            out[m] = complex(cm)
    return out


class AngularField:
    """dict of mode -> complex radial samples, with pointwise-exact algebra."""

    __slots__ = ("grid", "comps", "_splines")

    def __init__(self, grid: RadialGrid, comps: Dict[int, np.ndarray] = None):
        self.grid = grid
        self.comps = {}
        self._splines = None
        if comps:
            for m, v in comps.items():
                v = np.asarray(v, dtype=complex)
                if v.shape != (grid.n,):
                    raise ValueError("component length must match grid")
                self.comps[int(m)] = v

    # ---- construction helpers ----------------------------------------

    @classmethod
    def radial(cls, grid: RadialGrid, values: np.ndarray) -> "AngularField":
        return cls(grid, {0: np.asarray(values, dtype=complex)})

    @classmethod
    def from_angular(cls, grid: RadialGrid, radial_values: np.ndarray,
                     fn: Callable, max_deg: int) -> "AngularField":
        """radial_values(r) times the angular polynomial fn(cosθ, sinθ)."""
        cs = angular_modes(fn, max_deg)
        rv = np.asarray(radial_values, dtype=complex)
        return cls(grid, {m: c * rv for m, c in cs.items()})

    def copy(self) -> "AngularField":
        return AngularField(self.grid, {m: v.copy() for m, v in self.comps.items()})

    # ---- algebra -------------------------------------------------------

    def __add__(self, other: "AngularField") -> "AngularField":
        out = {m: v.copy() for m, v in self.comps.items()}
        for m, v in other.comps.items():
            out[m] = out.get(m, 0.0) + v
        return AngularField(self.grid, out)

    def __sub__(self, other):
        return self + (other * (-1.0))

    def __mul__(self, scalar) -> "AngularField":
        if isinstance(scalar, AngularField):
            return self.product(scalar)
        return AngularField(self.grid, {m: v * scalar for m, v in self.comps.items()})

    __rmul__ = __mul__

    def scale_radial(self, radial_values: np.ndarray) -> "AngularField":
        rv = np.asarray(radial_values)
        return AngularField(self.grid, {m: v * rv for m, v in self.comps.items()})

    def product(self, other: "AngularField") -> "AngularField":
        out: Dict[int, np.ndarray] = {}
        for ma, va in self.comps.items():
            for mb, vb in other.comps.items():
                m = ma + mb
                out[m] = out.get(m, 0.0) + va * vb
        return AngularField(self.grid, out)

    def conj(self) -> "AngularField":
        return AngularField(self.grid, {-m: np.conj(v) for m, v in self.comps.items()})

    def max_mode(self) -> int:
        return max((abs(m) for m in self.comps), default=0)

    def norm(self) -> float:
        """L²(R²) norm via the mode-orthogonality 2π Σ_m ∫ |f_m|² r dr."""
        from scipy.integrate import simpson

        r = self.grid.nodes
        total = sum(simpson(np.abs(v) ** 2 * r, x=r) for v in self.comps.values())
        return float(np.sqrt(2 * np.pi * total))

    def is_real(self, tol: float = 1e-10) -> bool:
        scale = max((np.max(np.abs(v)) for v in self.comps.values()), default=0.0) + 1e-300
        for m, v in self.comps.items():
            w = self.comps.get(-m)
            if w is None:
                return False
            if np.max(np.abs(np.conj(w) - v)) > tol * scale:
                return False
        return True

    # ---- evaluation -----------------------------------------------------

    def on_native(self, theta: np.ndarray) -> np.ndarray:
        """Evaluate on (grid.nodes) x theta without interpolation -> (n, nt)."""
        out = np.zeros((self.grid.n, theta.size), dtype=complex)
        for m, v in self.comps.items():
            out += v[:, None] * np.exp(1j * m * theta)[None, :]
        return out

    def at(self, r: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Evaluate at matched point arrays (spline in r, zero beyond r_max)."""
        if self._splines is None:
            self._splines = {m: (CubicSpline(self.grid.nodes, v.real),
                                 CubicSpline(self.grid.nodes, v.imag))
                             for m, v in self.comps.items()}
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape, dtype=complex)
        inside = r <= self.grid.r_max
        rc = np.clip(r, 0.0, self.grid.r_max)
        for m, (sre, sim) in self._splines.items():
            vals = sre(rc) + 1j * sim(rc)
            out += np.where(inside, vals, 0.0) * np.exp(1j * m * np.asarray(theta))
        return out
