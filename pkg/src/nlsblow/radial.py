"""Radial grids, quadrature with the 2D measure, and the ground state Q.

Q is the positive radial solution of ΔQ - Q + Q^3 = 0 in R^2, i.e.

    Q'' + Q'/r - Q + Q^3 = 0,   Q'(0) = 0,   Q(r) -> 0,

obtained by shooting+bisection on Q(0) followed by a collocation-Newton
polish on the full grid.  All integrals carry the 2D measure 2π r dr, with
an analytic exponential tail correction beyond r_max.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp, simpson
from scipy.special import gammaincc, gamma as gamma_fn


class BracketError(RuntimeError):
    """Shooting bisection failed to bracket the ground state amplitude."""


class TailError(ValueError):
    """Tail correction requested for a non-decaying integrand."""


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid on [0, r_max] with n nodes (nodes[0] = 0)."""

    r_max: float
    n: int

    def __post_init__(self):
        if self.r_max <= 0 or self.n < 8:
            raise ValueError("need r_max > 0 and n >= 8")

    @property
    def h(self) -> float:
        return self.r_max / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n)


@dataclass
class RadialFunction:
    """Sampled radial profile with fitted exponential decay exponent.

    tail_rate is the slope of log|f| over the last decade of amplitude;
    well-localized profiles have tail_rate < 0 (about -1 for Q).
    """

    grid: RadialGrid
    values: np.ndarray
    tail_rate: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n,):
            raise ValueError("values length must match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite values in radial profile")
        if self.tail_rate is None:
            self.tail_rate = fit_tail_rate(self.grid, self.values)

    def __call__(self, r):
        from scipy.interpolate import CubicSpline

        spl = CubicSpline(self.grid.nodes, self.values)
        r = np.asarray(r, dtype=float)
        out = np.where(r <= self.grid.r_max, spl(np.clip(r, 0.0, self.grid.r_max)), 0.0)
        return out


@dataclass(frozen=True)
class Moments:
    """The ground-state integrals that enter every constant of the expansion."""

    massQ: float      # ∫ Q^2
    quarticQ: float   # ∫ Q^4
    ymomQ: float      # ∫ |y|^2 Q^2 = ||yQ||^2
    gradQ: float      # ∫ |∇Q|^2

    def __post_init__(self):
        for name in ("massQ", "quarticQ", "ymomQ", "gradQ"):
            if getattr(self, name) <= 0:
                raise ValueError(f"moment {name} must be positive")


def fit_tail_rate(grid: RadialGrid, values: np.ndarray, decades: float = 1.0,
                  floor_rel: float = 1e-9) -> float:
    """Fit d(log|f|)/dr over the last clean decade of amplitude.

    The window is the decade of |f| just above max(floor_rel*max|f|, |f(r_max)|),
    which keeps the fit off the numerical noise floor of solved profiles.
    Returns 0.0 for profiles with no usable tail (e.g. all zeros).
    """
    v = np.abs(np.asarray(values, dtype=float))
    if np.iscomplexobj(values):
        v = np.abs(values)
    vmax = v.max()
    if vmax == 0.0:
        return 0.0
    tail_val = max(v[-1], vmax * floor_rel)
    lo, hi = tail_val * (1.0 - 1e-12), tail_val * 10.0**decades
    mask = (v >= lo) & (v <= hi) & (grid.nodes > 0.25 * grid.r_max)
    if mask.sum() < 4:
        return 0.0
    r = grid.nodes[mask]
    coef = np.polyfit(r, np.log(v[mask]), 1)
    return float(coef[0])


def quadrature(f: Union[RadialFunction, np.ndarray], radial_weight_power: int = 0,
               grid: Optional[RadialGrid] = None, tail: bool = True) -> float:
    """2π ∫ f(r) r^(p+1) dr by composite Simpson plus an exponential tail term.

    The tail term integrates f(r_max)·exp(tail_rate·(r - r_max)) analytically
    on (r_max, ∞); it is skipped when the boundary sample is negligible.
    """
    if isinstance(f, RadialFunction):
        grid, values, rate = f.grid, f.values, f.tail_rate
    else:
        if grid is None:
            raise ValueError("grid required when passing raw samples")
        values = np.asarray(f)
        rate = fit_tail_rate(grid, values)
    p = int(radial_weight_power)
    if p < 0:
        raise ValueError("weight power must be >= 0")
    r = grid.nodes
    core = 2.0 * np.pi * simpson(values * r ** (p + 1), x=r)

    if not tail:
        return float(core)
    f_end = values[-1]
    vmax = np.max(np.abs(values))
    if vmax == 0.0 or abs(f_end) < 1e-14 * vmax:
        return float(core)
    if rate is None or rate >= -1e-3:
        raise TailError("integrand does not decay; tail correction unavailable")
    kappa = -rate
    R = grid.r_max
    # ∫_R^∞ u^(p+1) e^{-κ(u-R)} du = e^{κR} κ^{-(p+2)} Γ(p+2, κR)
    tail_int = np.exp(kappa * R) * kappa ** (-(p + 2)) * gammaincc(p + 2, kappa * R) * gamma_fn(p + 2)
    return float(core + 2.0 * np.pi * f_end * tail_int)


# ----------------------------------------------------------------------
# derivative stencils (4th order, parity-aware at the origin)
# ----------------------------------------------------------------------

def derivative(values: np.ndarray, grid: RadialGrid, parity: int = +1) -> np.ndarray:
    """4th-order first derivative of a radial sample.

    parity=+1 for even extensions f(-r)=f(r) (m even), -1 for odd (m odd).
    Beyond r_max the function is treated as zero (profiles there are below
    roundoff of the maximum for well-localized fields).
    """
    f = np.asarray(values)
    h = grid.h
    n = grid.n
    out = np.empty_like(f)
    # centered interior: (f_{i-2} - 8 f_{i-1} + 8 f_{i+1} - f_{i+2}) / 12h
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    s = float(parity)
    # i = 0: ghosts f_{-1} = s f_1, f_{-2} = s f_2
    out[0] = (s * f[2] - 8 * s * f[1] + 8 * f[1] - f[2]) / (12 * h)
    # i = 1: ghost f_{-1} = s f_1
    out[1] = (s * f[1] - 8 * f[0] + 8 * f[2] - f[3]) / (12 * h)
    # right edge: zero ghosts (decayed tail)
    out[n - 2] = (f[n - 4] - 8 * f[n - 3] + 8 * f[n - 1] - 0.0) / (12 * h)
    out[n - 1] = (f[n - 3] - 8 * f[n - 2] + 0.0 - 0.0) / (12 * h)
    return out


# ----------------------------------------------------------------------
# ground state
# ----------------------------------------------------------------------

def _shoot(a: float, r_max: float, rtol: float, atol: float, dense: bool = False):
    """Integrate Q''+Q'/r = Q - Q^3 from the series start at r0 with Q(0)=a.

    Returns (flag, sol): flag=+1 if the solution turned upward while still
    positive (amplitude too small), -1 if it crossed zero (too large).
    """
    r0 = 1e-8
    c2 = (a - a ** 3) / 4.0
    y0 = [a + c2 * r0 ** 2, 2 * c2 * r0]

    def rhs(r, y):
        q, dq = y
        return [dq, q - q ** 3 - dq / r]

    def cross_zero(r, y):
        return y[0]

    cross_zero.terminal = True
    cross_zero.direction = -1

    def turn_up(r, y):
        # after the profile has begun to decay, dq returning to 0 means blow-up back upward
        return y[1] - 1e-14 if y[0] < a * 0.5 else -1.0

    turn_up.terminal = True
    turn_up.direction = 1

    sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=rtol, atol=atol,
                    events=(cross_zero, turn_up), dense_output=dense)
    if sol.t_events[0].size:
        return -1, sol
    if sol.t_events[1].size:
        return +1, sol
    # reached r_max without either event: classify by sign of the endpoint
    return (+1 if sol.y[0, -1] > 0 else -1), sol


def shooting_amplitude(r_max: float = 30.0, bracket=(2.0, 2.5), rtol: float = 1e-12,
                       atol: float = 1e-14, iters: int = 200) -> float:
    """Bisection on Q(0): the independent shooting oracle for the amplitude."""
    lo, hi = bracket
    flo, _ = _shoot(lo, r_max, rtol, atol)
    fhi, _ = _shoot(hi, r_max, rtol, atol)
    if flo == fhi:
        raise BracketError(
            f"shooting flags equal at bracket ends ({flo}); r_max={r_max} too small "
            "or bracket does not contain the ground-state amplitude")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm, _ = _shoot(mid, r_max, rtol, atol)
        if fm == flo:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def solve_ground_state(grid: RadialGrid, tol: float = 1e-10) -> RadialFunction:
    """Ground state on the grid: shooting+bisection start, Newton polish.

    The Newton iteration solves the 4th-order collocation system
    (-Δ_h + 1)Q - Q^3 = 0 with Q'(0)=0 and Q(r_max)=0, so the returned
    samples satisfy the discrete equation to pointwise residual <= tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if grid.r_max < 15:
        raise ValueError("r_max >= 15 required for a trustworthy tail")
    from . import linops  # deferred: linops needs RadialGrid

    a = shooting_amplitude(grid.r_max, rtol=1e-12)
    flag, sol = _shoot(a, grid.r_max, 1e-12, 1e-14, dense=True)
    r = grid.nodes
    q = np.empty(grid.n)
    r_reached = sol.t[-1]
    inside = r >= 1e-8
    q[~inside] = a
    rr = np.minimum(r[inside], r_reached)
    q[inside] = sol.sol(rr)[0]
    q[r > r_reached] = np.maximum(sol.y[0, -1], 0.0)
    q = np.maximum(q, 0.0)
    q[-1] = 0.0

    lap = linops.laplacian_matrix(grid, m=0)
    from scipy.linalg import solve_banded

    def residual(qv):
        res = -(lap @ qv) + qv - qv ** 3
        res[-1] = qv[-1]         # Dirichlet row
        return res

    best, best_q = np.inf, q
    for _ in range(40):
        res = residual(q)
        rnorm = np.max(np.abs(res))
        if rnorm < best:
            best, best_q = rnorm, q
        if rnorm <= tol:
            break
        if rnorm > 4.0 * best:   # stalled at the roundoff floor
            break
        jac_banded = linops.operator_banded(grid, m=0, potential=1.0 - 3.0 * q ** 2)
        q = q + solve_banded((2, 2), jac_banded, -res)
    q = best_q
    if best > tol:
        raise RuntimeError(
            f"ground-state Newton stalled at residual {best:.2e} > tol {tol:.0e}; "
            "the roundoff floor scales like 1/h^2, so loosen tol or refine less")

    out = RadialFunction(grid, q)
    if not (q[0] > 0 and np.all(np.diff(q[:-1]) < 0)):
        raise RuntimeError("ground state not positive decreasing; grid too coarse?")
    return out


def moments(Q: RadialFunction) -> Moments:
    """Mass, quartic, y-moment and gradient integrals of the ground state."""
    q = Q.values
    dq = derivative(q, Q.grid, parity=+1)
    return Moments(
        massQ=quadrature(RadialFunction(Q.grid, q * q), 0),
        quarticQ=quadrature(RadialFunction(Q.grid, q ** 4), 0),
        ymomQ=quadrature(RadialFunction(Q.grid, q * q), 2),
        gradQ=quadrature(RadialFunction(Q.grid, dq * dq), 0),
    )
