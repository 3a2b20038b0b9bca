"""Extraction of (b, λ, β, α, γ) and ε from a field by orthogonality fitting.

The decomposition u(x) = k(α)^{-1/2} λ^{-1} (Q_P + ε)((x-α)/λ) e^{iγ} is fixed
by seven scalar conditions pairing ε against the phase-dressed profile
Q_P = Σ + iΘ and ρ e^{iφ}: translations, boosts, scaling, phase-curvature and
phase directions.  A damped Newton iteration solves them in the seven
parameters; the Jacobian is finite-differenced (the residuals are smooth in
the parameters and each evaluation is cheap on the fixed polar fit grid).
"""

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates

from .modeqs import ModState
from .profile import ParamPoint, ProfileExpansion
from .sim import ComplexField2D, Stepper


class NewtonDiverged(RuntimeError):
    """The field is too far from the soliton manifold for this guess."""


class NonMonotoneSeries(ValueError):
    """The λ series is not decreasing: no blow-up window to fit."""


# ----------------------------------------------------------------------
# the radial cutoff φ of the Morawetz multiplier
# ----------------------------------------------------------------------

def _quintic_blend():
    # match value/slope/curvature of ψ=r at r=1 and ψ=3-e^{-r} at r=2
    rows = []
    rhs = []
    for r0, vals in ((1.0, (1.0, 1.0, 0.0)),
                     (2.0, (3.0 - np.exp(-2.0), np.exp(-2.0), -np.exp(-2.0)))):
        rows.append([r0 ** k for k in range(6)])
        rhs.append(vals[0])
        rows.append([k * r0 ** (k - 1) if k else 0.0 for k in range(6)])
        rhs.append(vals[1])
        rows.append([k * (k - 1) * r0 ** (k - 2) if k > 1 else 0.0 for k in range(6)])
        rhs.append(vals[2])
    return np.linalg.solve(np.array(rows), np.array(rhs))


_BLEND = _quintic_blend()
_BLEND_D = np.polynomial.polynomial.polyder(_BLEND)


def phi_prime(r):
    """ψ = φ' of the virial cutoff: r below 1, 3 - e^{-r} beyond 2, C² blend."""
    r = np.asarray(r, dtype=float)
    mid = np.polynomial.polynomial.polyval(r, _BLEND)
    return np.where(r <= 1.0, r, np.where(r >= 2.0, 3.0 - np.exp(-r), mid))


def phi_second(r):
    r = np.asarray(r, dtype=float)
    mid = np.polynomial.polynomial.polyval(r, _BLEND_D)
    return np.where(r <= 1.0, 1.0, np.where(r >= 2.0, np.exp(-r), mid))


# ----------------------------------------------------------------------
# fit grid and samplers
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FitGrid:
    r_max: float = 25.0
    n_r: int = 500
    n_theta: int = 64

    @property
    def r(self):
        return np.linspace(0.0, self.r_max, self.n_r)

    @property
    def theta(self):
        return np.arange(self.n_theta) * (2 * np.pi / self.n_theta)

    def integral(self, vals):
        """∫ vals r dr dθ."""
        radial = simpson(vals * self.r[:, None], x=self.r, axis=0)
        return float(np.sum(radial) * (2 * np.pi / self.n_theta))

    def pair(self, a, b):
        return self.integral(a * b)


def polar_gradient(vals: np.ndarray, r: np.ndarray, theta: np.ndarray):
    """(∂_r, (1/r)∂_θ) of samples on an (r, θ) product grid, spectral in θ."""
    nt = theta.size
    vm = np.fft.fft(vals, axis=1) / nt
    dr = np.zeros_like(vals, dtype=complex)
    dth = np.zeros_like(vals, dtype=complex)
    h = r[1] - r[0]
    for k in range(nt):
        m = k if k <= nt // 2 else k - nt
        col = vm[:, k]
        dcol = np.gradient(col, h, edge_order=2)
        em = np.exp(1j * m * theta)[None, :]
        dr += dcol[:, None] * em
        with np.errstate(invalid="ignore", divide="ignore"):
            rad = np.where(r > 0, col / np.where(r > 0, r, 1.0), 0.0)
        dth += 1j * m * rad[:, None] * em
    if not np.iscomplexobj(vals):
        return dr.real, dth.real
    return dr, dth


class _ExpansionSampler:
    """Per-term mode samples of the expansion on the fixed fit radii."""

    def __init__(self, expansion: ProfileExpansion, grid: FitGrid):
        self.exp = expansion
        self.grid = grid
        r = grid.r
        lab = expansion.lab
        nodes = lab.grid.nodes
        spl = CubicSpline(nodes, lab.Q.values)
        self.q = spl(r)
        self.dq = spl.derivative()(r)
        rho_spl = CubicSpline(nodes, lab.rho.values)
        self.rho = rho_spl(r)
        self.samples = {}
        for mono, f in expansion.terms.items():
            per_mode = {}
            for m, v in f.comps.items():
                sre = CubicSpline(nodes, v.real)
                sim_ = CubicSpline(nodes, v.imag)
                per_mode[m] = (sre(r) + 1j * sim_(r), sre.derivative()(r) + 1j * sim_.derivative()(r))
            self.samples[mono] = per_mode

    def eval_with_grad(self, P: ParamPoint, theta: np.ndarray):
        """P_P values, ∂_r P_P and (1/r)∂_θ P_P on the fit grid."""
        modes_v = {0: self.q.astype(complex)}
        modes_d = {0: self.dq.astype(complex)}
        for mono, per_mode in self.samples.items():
            c = ProfileExpansion._coeff(mono, P)
            if c == 0.0:
                continue
            for m, (v, dv) in per_mode.items():
                modes_v[m] = modes_v.get(m, 0.0) + c * v
                modes_d[m] = modes_d.get(m, 0.0) + c * dv
        r = self.grid.r
        shape = (r.size, theta.size)
        Pv = np.zeros(shape, dtype=complex)
        dPr = np.zeros(shape, dtype=complex)
        dPth = np.zeros(shape, dtype=complex)
        for m in modes_v:
            em = np.exp(1j * m * theta)[None, :]
            Pv += modes_v[m][:, None] * em
            dPr += modes_d[m][:, None] * em
            with np.errstate(invalid="ignore", divide="ignore"):
                rad = np.where(r > 0, modes_v[m] / np.where(r > 0, r, 1.0), 0.0)
            dPth += 1j * m * rad[:, None] * em
        return Pv, dPr, dPth


class FieldSampler:
    """Samples a simulation field (bicubic, periodic) or an exact evaluator."""

    def __init__(self, u: Union[ComplexField2D, Callable], order: int = 3):
        self.order = order
        if isinstance(u, ComplexField2D):
            self.field = u
            self.t = u.t
        else:
            self.field = None
            self.call = u
            self.t = getattr(u, "t", 0.0)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        if self.field is None:
            return self.call(pts)
        f = self.field
        idx = (pts + f.L) / f.h
        coords = [idx[..., 0], idx[..., 1]]
        re = map_coordinates(f.values.real, coords, order=self.order, mode="grid-wrap")
        im = map_coordinates(f.values.imag, coords, order=self.order, mode="grid-wrap")
        return re + 1j * im


# ----------------------------------------------------------------------
# decomposition
# ----------------------------------------------------------------------

@dataclass
class Decomposition:
    params: ModState
    epsilon: np.ndarray          # on the polar fit grid, rescaled variables
    fit_grid: FitGrid
    residuals: np.ndarray        # the 7 orthogonality values at the solution
    jacobian_cond: float
    eps_l2: float
    eps_h1: float
    windows: dict = dc_field(default_factory=dict, repr=False)


def _window_fields(sampler: _ExpansionSampler, grid: FitGrid, p: np.ndarray):
    """Σ, Θ, their cartesian gradients, ΛΣ/ΛΘ and ρ1/ρ2 at parameters p."""
    b, lam = p[0], p[1]
    beta = p[2:4]
    P = ParamPoint(b=b, lam=lam, beta=beta.copy(), alpha=p[4:6].copy())
    r = grid.r
    theta = grid.theta
    Pv, dPr, dPth = sampler.eval_with_grad(P, theta)
    ct, st = np.cos(theta)[None, :], np.sin(theta)[None, :]
    phase = -b * r[:, None] ** 2 / 4.0 + r[:, None] * (beta[0] * ct + beta[1] * st)
    eip = np.exp(1j * phase)
    QP = Pv * eip
    u_r = -0.5 * b * r[:, None] + beta[0] * ct + beta[1] * st
    u_th = -beta[0] * st + beta[1] * ct
    grad_r = (dPr + 1j * Pv * u_r) * eip
    grad_th = (dPth + 1j * Pv * u_th) * eip
    gx = ct * grad_r - st * grad_th
    gy = st * grad_r + ct * grad_th
    lam_qp = QP + r[:, None] * grad_r
    rho_c = sampler.rho[:, None] * eip
    return {"QP": QP, "gx": gx, "gy": gy, "LamQP": lam_qp, "rho": rho_c,
            "ct": ct, "st": st}


def _condition_values(eps: np.ndarray, w: dict, grid: FitGrid) -> np.ndarray:
    e1, e2 = eps.real, eps.imag
    r = grid.r[:, None]
    S, T = w["QP"].real, w["QP"].imag
    out = np.empty(7)
    out[0] = grid.integral(e2 * w["gx"].real - e1 * w["gx"].imag)
    out[1] = grid.integral(e2 * w["gy"].real - e1 * w["gy"].imag)
    out[2] = grid.integral(e1 * r * w["ct"] * S + e2 * r * w["ct"] * T)
    out[3] = grid.integral(e1 * r * w["st"] * S + e2 * r * w["st"] * T)
    out[4] = grid.integral(-e1 * w["LamQP"].imag + e2 * w["LamQP"].real)
    out[5] = grid.integral(e1 * r ** 2 * S + e2 * r ** 2 * T)
    out[6] = grid.integral(-e1 * w["rho"].imag + e2 * w["rho"].real)
    return out


def _epsilon_at(p: np.ndarray, usample: FieldSampler, sampler: _ExpansionSampler,
                grid: FitGrid, model) -> np.ndarray:
    b, lam = p[0], p[1]
    alpha, gamma = p[4:6], p[6]
    r = grid.r[:, None]
    ct = np.cos(grid.theta)[None, :]
    st = np.sin(grid.theta)[None, :]
    pts = np.stack([alpha[0] + lam * r * ct, alpha[1] + lam * r * st], axis=-1)
    uvals = usample(pts)
    k_alpha = float(model.k(alpha))
    w = _window_fields(sampler, grid, p)
    eps = np.sqrt(k_alpha) * lam * uvals * np.exp(-1j * gamma) - w["QP"]
    return eps, w


def decompose(u: Union[ComplexField2D, Callable], guess: ModState,
              expansion: ProfileExpansion, grid: FitGrid = FitGrid(),
              tol_factor: float = 1e-9, max_iter: int = 40,
              interp_order: int = 3) -> Decomposition:
    """Newton solve of the seven orthogonality conditions in the parameters.

    The guess must be in the Newton basin (chain the previous snapshot's
    result along a run); raises NewtonDiverged otherwise.
    """
    sampler = _cached_sampler(expansion, grid)
    usample = FieldSampler(u, order=interp_order)
    model = expansion.model
    massQ = expansion.lab.moments.massQ
    tol = tol_factor * massQ

    p = np.array([guess.b, guess.lam, guess.beta[0], guess.beta[1],
                  guess.alpha[0], guess.alpha[1], guess.gamma], dtype=float)

    def residuals(pv):
        eps, w = _epsilon_at(pv, usample, sampler, grid, model)
        return _condition_values(eps, w, grid), eps, w

    R, eps, w = residuals(p)
    best = np.max(np.abs(R))
    jac = None
    for _ in range(max_iter):
        if np.max(np.abs(R)) <= tol:
            break
        jac = np.empty((7, 7))
        for j in range(7):
            dp = 1e-7 * (1.0 + abs(p[j]))
            pj = p.copy()
            pj[j] += dp
            if j == 1 and pj[1] <= 0:
                pj[1] = p[1] * 0.5
                dp = pj[1] - p[1]
            Rj, _, _ = residuals(pj)
            jac[:, j] = (Rj - R) / dp
        try:
            step_vec = np.linalg.solve(jac, -R)
        except np.linalg.LinAlgError as err:
            raise NewtonDiverged(f"singular Jacobian: {err}")
        scale = 1.0
        for _ in range(8):
            trial = p + scale * step_vec
            if trial[1] > 0:
                Rt, eps_t, w_t = residuals(trial)
                if np.max(np.abs(Rt)) < np.max(np.abs(R)) or scale < 0.05:
                    p, R, eps, w = trial, Rt, eps_t, w_t
                    break
            scale *= 0.5
        else:
            raise NewtonDiverged("line search failed; guess outside the basin")
        best = min(best, np.max(np.abs(R)))
    if np.max(np.abs(R)) > tol:
        raise NewtonDiverged(
            f"orthogonality residual {np.max(np.abs(R)):.2e} > {tol:.2e} after {max_iter} iterations")

    if jac is None:
        jac = np.empty((7, 7))
        for j in range(7):
            dp = 1e-7 * (1.0 + abs(p[j]))
            pj = p.copy()
            pj[j] += dp
            Rj, _, _ = residuals(pj)
            jac[:, j] = (Rj - R) / dp
    cond = float(np.linalg.cond(jac))

    dr_eps, dth_eps = polar_gradient(eps, grid.r, grid.theta)
    l2 = np.sqrt(grid.integral(np.abs(eps) ** 2))
    h1 = np.sqrt(l2 ** 2 + grid.integral(np.abs(dr_eps) ** 2 + np.abs(dth_eps) ** 2))
    state = ModState(b=p[0], lam=p[1], beta=p[2:4].copy(), alpha=p[4:6].copy(),
                     gamma=p[6], s=0.0, t=usample.t)
    return Decomposition(params=state, epsilon=eps, fit_grid=grid, residuals=R,
                         jacobian_cond=cond, eps_l2=float(l2), eps_h1=float(h1),
                         windows=w)


_SAMPLER_CACHE = {}


def _cached_sampler(expansion: ProfileExpansion, grid: FitGrid) -> _ExpansionSampler:
    key = (id(expansion), grid)
    if key not in _SAMPLER_CACHE:
        if len(_SAMPLER_CACHE) > 8:
            _SAMPLER_CACHE.clear()
        _SAMPLER_CACHE[key] = _ExpansionSampler(expansion, grid)
    return _SAMPLER_CACHE[key]


# ----------------------------------------------------------------------
# blow-up law fit
# ----------------------------------------------------------------------

@dataclass
class FitReport:
    T_est: float
    C0_est: float
    window: tuple
    residual: float


def fit_rate(ts, lams, window_frac: float = 0.5) -> FitReport:
    """Least squares of λ against (T-t)/C0 over the trailing window."""
    ts = np.asarray(ts, dtype=float)
    lams = np.asarray(lams, dtype=float)
    if ts.size < 10:
        raise ValueError("need at least 10 samples")
    if not np.all(np.diff(lams) < 0):
        raise NonMonotoneSeries("λ series must be strictly decreasing")
    n0 = int(np.floor(ts.size * (1.0 - window_frac)))
    tw, lw = ts[n0:], lams[n0:]
    A = np.stack([np.ones_like(tw), tw], axis=1)
    coef, *_ = np.linalg.lstsq(A, lw, rcond=None)
    a, bslope = coef
    if bslope >= 0:
        raise NonMonotoneSeries("fitted λ slope is nonnegative")
    C0_est = -1.0 / bslope
    T_est = a * C0_est
    resid = float(np.sqrt(np.mean((A @ coef - lw) ** 2)))
    if T_est <= tw[-1]:
        raise ValueError("fitted blow-up time is not beyond the last sample")
    return FitReport(T_est=float(T_est), C0_est=float(C0_est),
                     window=(float(tw[0]), float(tw[-1])), residual=resid)


# ----------------------------------------------------------------------
# diagnostics: the mixed energy/Morawetz functional and the virial boundary
# ----------------------------------------------------------------------

def lyapunov_I(dec_params: ModState, u: ComplexField2D, w: ComplexField2D,
               A: float, k_values: np.ndarray) -> float:
    """I = ½∫|∇ũ|² + ½∫|ũ|²/λ² - ∫k[F(w+ũ)-F(w)-F'(w)ũ] + boundary term.

    F(v) = |v|⁴/4; the boundary term is ½(b/λ) Im ∫ A∇φ((x-α)/(Aλ))·∇ũ ū.
    """
    if A < 10:
        raise ValueError("A must be at least 10")
    lam, b, alpha = dec_params.lam, dec_params.b, dec_params.alpha
    ut = u.values - w.values
    h2 = u.h ** 2
    st = Stepper(u.L, u.n, np.asarray(k_values, dtype=float))
    ux, uy = st.gradient(ut)
    kin = 0.5 * float(np.sum(np.abs(ux) ** 2 + np.abs(uy) ** 2)) * h2
    low = 0.5 * float(np.sum(np.abs(ut) ** 2)) * h2 / lam ** 2
    wv = w.values
    F = lambda v: 0.25 * np.abs(v) ** 4
    nonlin = F(wv + ut) - F(wv) - (wv * np.abs(wv) ** 2 * np.conj(ut)).real
    pot = float(np.sum(st.k * nonlin)) * h2
    X, Y = u.meshes()
    zx, zy = (X - alpha[0]) / (A * lam), (Y - alpha[1]) / (A * lam)
    rz = np.hypot(zx, zy)
    psi = phi_prime(rz)
    with np.errstate(invalid="ignore", divide="ignore"):
        ex = np.where(rz > 0, zx / np.where(rz > 0, rz, 1.0), 0.0)
        ey = np.where(rz > 0, zy / np.where(rz > 0, rz, 1.0), 0.0)
    bterm = 0.5 * (b / lam) * float(
        np.sum((A * psi * (ex * ux + ey * uy) * np.conj(ut)).imag)) * h2
    return kin + low - pot + bterm


def virial_boundary(dec: Decomposition, A: float, ymomQ: float) -> float:
    """-(b/λ)||yQ||²/4 + (1/2λ) Im ∫ A∇φ(y/A)·∇ε ε̄ in rescaled variables."""
    if A < 10:
        raise ValueError("A must be at least 10")
    g = dec.fit_grid
    lam, b = dec.params.lam, dec.params.b
    dr_eps, _ = polar_gradient(dec.epsilon, g.r, g.theta)
    psi = phi_prime(g.r / A)[:, None]
    term = 0.5 / lam * g.integral((A * psi * dr_eps * np.conj(dec.epsilon)).imag)
    return float(-(b / lam) * ymomQ / 4.0 + term)


def condition_window_pairs(dec_windows: dict, grid: FitGrid):
    """The (ε₁, ε₂) window pairs of the 7 conditions plus the mass direction."""
    w = dec_windows
    r = grid.r[:, None]
    S, T = w["QP"].real, w["QP"].imag
    pairs = [
        (-w["gx"].imag, w["gx"].real),
        (-w["gy"].imag, w["gy"].real),
        (r * w["ct"] * S, r * w["ct"] * T),
        (r * w["st"] * S, r * w["st"] * T),
        (-w["LamQP"].imag, w["LamQP"].real),
        (r ** 2 * S, r ** 2 * T),
        (-w["rho"].imag, w["rho"].real),
        (S, T),
    ]
    return pairs


def constrained_random_eps(dec_windows: dict, grid: FitGrid, rng,
                           amplitude: float = 1e-3, n_bumps: int = 6) -> np.ndarray:
    """A random smooth ε satisfying the 7 conditions and the mass direction."""
    r = grid.r[:, None]
    th = grid.theta[None, :]
    eps = np.zeros((grid.n_r, grid.n_theta), dtype=complex)
    for _ in range(n_bumps):
        c = rng.normal(size=2) + 1j * rng.normal(size=2)
        m = rng.integers(0, 4)
        width = rng.uniform(1.0, 3.0)
        eps += (c[0] * np.cos(m * th) + c[1] * np.sin(m * th)) \
            * (r ** m * np.exp(-r ** 2 / (2 * width ** 2)))
    pairs = condition_window_pairs(dec_windows, grid)
    nw = len(pairs)
    gram = np.empty((nw, nw))
    vals = np.empty(nw)
    for i, (a_i, b_i) in enumerate(pairs):
        vals[i] = grid.integral(a_i * eps.real + b_i * eps.imag)
        for j, (a_j, b_j) in enumerate(pairs):
            gram[i, j] = grid.integral(a_i * a_j + b_i * b_j)
    coef = np.linalg.solve(gram, vals)
    for c, (a_i, b_i) in zip(coef, pairs):
        eps -= c * (a_i + 1j * b_i)
    scale = np.sqrt(grid.integral(np.abs(eps) ** 2))
    return eps * (amplitude / scale)


def rescaled_perturbation(eps: np.ndarray, grid: FitGrid, params: ModState,
                          model, L: float, n: int) -> np.ndarray:
    """ũ(x) = k(α)^{-1/2} λ^{-1} ε((x-α)/λ) e^{iγ} sampled on the box."""
    h = 2.0 * L / n
    x = -L + h * np.arange(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    lam, alpha = params.lam, params.alpha
    rr = np.hypot(X - alpha[0], Y - alpha[1]) / lam
    tt = np.arctan2(Y - alpha[1], X - alpha[0])
    out = np.zeros((n, n), dtype=complex)
    inside = rr <= grid.r_max
    # spectral in θ, spline in r
    nt = grid.n_theta
    em = np.fft.fft(eps, axis=1) / nt
    for k in range(nt):
        m = k if k <= nt // 2 else k - nt
        spl_re = CubicSpline(grid.r, em[:, k].real)
        spl_im = CubicSpline(grid.r, em[:, k].imag)
        vals = spl_re(np.clip(rr, 0, grid.r_max)) + 1j * spl_im(np.clip(rr, 0, grid.r_max))
        out += np.where(inside, vals, 0.0) * np.exp(1j * m * tt)
    kfac = float(model.k(alpha)) ** -0.5
    return kfac / lam * out * np.exp(1j * params.gamma)
