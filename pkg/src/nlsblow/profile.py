"""Refined blow-up profile built order by order in the parameters (b, λ, β, α).

The conformal-frame profile is P = Q + Σ_j (T_j + i S_j) with T_j, S_j
homogeneous of degree j, each obtained by inverting L+ or L- against sources
assembled from the Taylor data of k.  The constants c0, β3, β4 are exactly
the solvability adjustments that keep every inversion off the kernels, and
the pseudo-conformal law survives because (y_j y_l Q³, ΛQ) = 0.

Monomials in the parameters are dict keys; products and parameter
derivatives of the expansion are exact operations on that map, so no
numerical differentiation in parameter space ever happens.
"""

from dataclasses import dataclass, field as dc_field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import simpson

from .fields import AngularField, angular_modes
from .kmodel import InhomogeneityModel
from .lab import Lab
from .linops import SolvabilityViolated  # noqa: F401  (re-exported)
from .radial import derivative

Monomial = Tuple[int, int, int, int, int, int]   # powers of (b, λ, β1, β2, α1, α2)

ETA_STAR_DEFAULT = 0.3


class EnergyConditionViolated(ValueError):
    """E0 + (1/8)∫∇²k(0)(y,y)Q⁴ <= 0: no critical blow-up element exists."""


@dataclass
class ParamPoint:
    """The modulation parameter vector P = (b, λ, β, α)."""

    b: float
    lam: float
    beta: np.ndarray = None
    alpha: np.ndarray = None

    def __post_init__(self):
        self.beta = np.zeros(2) if self.beta is None else np.asarray(self.beta, dtype=float)
        self.alpha = np.zeros(2) if self.alpha is None else np.asarray(self.alpha, dtype=float)
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    @property
    def size(self) -> float:
        return float(np.sqrt(self.b ** 2 + self.lam ** 2
                             + self.beta @ self.beta + self.alpha @ self.alpha))

    def check_small(self, eta_star: float = ETA_STAR_DEFAULT):
        if self.size > eta_star:
            raise ValueError(f"|P| = {self.size:.3f} exceeds the smallness radius {eta_star}")


@dataclass
class ProfileConstants:
    """Solvability constants and the quadratic forms of the parameter dynamics."""

    c0_map: np.ndarray        # c0(α) = c0_map @ α
    beta3: np.ndarray
    d0_form: np.ndarray       # d0(α, α) = α @ d0_form @ α
    d1_form: np.ndarray
    a1: float
    beta4: Optional[np.ndarray] = None
    conformal_C0: Optional[float] = None

    def c0(self, alpha) -> np.ndarray:
        return self.c0_map @ np.asarray(alpha)

    def d0(self, alpha) -> float:
        a = np.asarray(alpha)
        return float(a @ self.d0_form @ a)

    def d1(self, alpha) -> float:
        a = np.asarray(alpha)
        return float(a @ self.d1_form @ a)

    def B(self, lam: float, alpha) -> np.ndarray:
        """The momentum-law forcing λ c0(α) + β3 λ³ + β4 λ⁴."""
        out = lam * self.c0(alpha) + self.beta3 * lam ** 3
        if self.beta4 is not None:
            out = out + self.beta4 * lam ** 4
        return out


def hessian_quartic_integral(model: InhomogeneityModel, lab: Lab) -> float:
    """∫ ∇²k(0)(y,y) Q⁴ dy (negative for a negative-definite Hessian)."""
    r = lab.grid.nodes
    c0 = angular_modes(model.hess_form, 2).get(0, 0.0)
    radial = simpson(r ** 2 * lab.Q.values ** 4 * r, x=r)
    return float(2 * np.pi * np.real(c0) * radial)


def derive_constants(model: InhomogeneityModel, lab: Lab) -> ProfileConstants:
    """Every solvability constant and quadratic form from the Taylor data of k."""
    m = lab.moments
    H = model.hessian
    kq = m.quarticQ / (2.0 * m.massQ)
    c0_map = kq * H

    r = lab.grid.nodes
    q4 = lab.Q.values ** 4
    rad3 = simpson(r ** 2 * q4 * r, x=r)
    beta3 = np.zeros(2)
    for j in range(2):
        cj = angular_modes(lambda cx, sx, j=j: model.third_form(cx, sx, e=j), 2).get(0, 0.0)
        beta3[j] = 2 * np.pi * np.real(cj) * rad3 / (4.0 * m.massQ)

    d0_form = (2.0 * m.massQ / m.ymomQ) * H
    d1_form = (lab.y2Q_rho / (4.0 * lab.rho_Q)) * d0_form
    a1 = -np.trace(H) / 8.0 * m.quarticQ / m.massQ
    return ProfileConstants(c0_map=c0_map, beta3=beta3, d0_form=d0_form,
                            d1_form=d1_form, a1=a1)


def a1_projection(model: InhomogeneityModel, lab: Lab, ntheta: int = 64) -> float:
    """a1 from its defining kernel projection (the independent route).

    Solves L+(T2⁰) = (1/2)∇²k(0)(y,y)Q³ and evaluates the projection
    -(6 Q T2⁰ ∂_jQ + (3/2)∇²k(0)(y,y) Q² ∂_jQ, ∂_jQ)/∫Q² averaged over the
    repeated axis index (the per-axis values differ by an anisotropic part
    that cancels in the mean; the mean equals -tr(H)/8 · ∫Q⁴/∫Q²).
    """
    g = lab.grid
    r = g.nodes
    q = lab.Q.values

    src = AngularField.from_angular(g, 0.5 * r ** 2 * q ** 3, model.hess_form, 2)
    T20 = _solve_field(lab, "plus", src)

    theta = np.arange(ntheta) * (2 * np.pi / ntheta)
    ct, st = np.cos(theta), np.sin(theta)
    T20v = T20.on_native(theta).real
    hyy = r[:, None] ** 2 * model.hess_form(ct, st)[None, :]
    dq = lab.dQ
    vals = []
    for cj in (ct, st):
        integrand = (6 * q[:, None] * T20v + 1.5 * hyy * q[:, None] ** 2) \
            * (dq[:, None] * cj[None, :]) ** 2
        pair = _polar_integral(integrand, r, ntheta)
        vals.append(-pair / lab.moments.massQ)
    return float(0.5 * (vals[0] + vals[1]))


def compute_C0(E0: float, model: InhomogeneityModel, lab: Lab) -> float:
    """Conformal constant C0 = ||yQ|| / sqrt(8 Ẽ0), Ẽ0 = E0 + (1/8)∫∇²k(0)(y,y)Q⁴."""
    e_tilde = E0 + hessian_quartic_integral(model, lab) / 8.0
    if e_tilde <= 0:
        raise EnergyConditionViolated(
            f"shifted energy {e_tilde:.6g} <= 0: the necessary condition fails")
    return float(np.sqrt(lab.moments.ymomQ / (8.0 * e_tilde)))


def energy_for_C0(C0: float, model: InhomogeneityModel, lab: Lab) -> float:
    """Inverse of compute_C0: the E0 that produces a given conformal constant."""
    return float(lab.moments.ymomQ / (8.0 * C0 ** 2) - hessian_quartic_integral(model, lab) / 8.0)


# ----------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------

def _solve_field(lab: Lab, op: str, src: AngularField, check: bool = True) -> AngularField:
    out = {}
    for m, v in src.comps.items():
        if np.max(np.abs(v)) == 0.0:
            continue
        out[m] = lab.ops.solve(op, v, abs(m), check=check)
    return AngularField(lab.grid, out)


def _lap_field(lab: Lab, f: AngularField) -> AngularField:
    from .linops import laplacian_matrix

    out = {}
    for m, v in f.comps.items():
        A = laplacian_matrix(lab.grid, abs(m))
        w = A @ v.real + 1j * (A @ v.imag)
        if abs(m) >= 1:
            w[0] = 0.0      # matrix row 0 is the f(0)=0 constraint; Δ vanishes there
        out[m] = w
    return AngularField(lab.grid, out)


def _polar_integral(vals: np.ndarray, r: np.ndarray, ntheta: int) -> float:
    """∫ f r dr dθ for samples on (r, θ) with uniform θ."""
    radial = simpson(vals * r[:, None], x=r, axis=0)
    return float(np.sum(radial) * (2 * np.pi / ntheta))


@dataclass
class ProfileExpansion:
    """The monomial map of the refined profile plus everything to evaluate it."""

    lab: Lab
    model: InhomogeneityModel
    constants: ProfileConstants
    C0: float
    terms: Dict[Monomial, AngularField]
    eta_star: float = ETA_STAR_DEFAULT
    _deriv_cache: dict = dc_field(default_factory=dict, repr=False)

    # -- parameter-space calculus (exact on the monomial map) -----------

    @staticmethod
    def _coeff(mono: Monomial, P: ParamPoint) -> float:
        vals = (P.b, P.lam, P.beta[0], P.beta[1], P.alpha[0], P.alpha[1])
        out = 1.0
        for v, e in zip(vals, mono):
            if e:
                out *= v ** e
        return out

    def derivative_map(self, idx: int) -> Dict[Monomial, AngularField]:
        """∂/∂(parameter idx) of the monomial map; idx orders (b,λ,β1,β2,α1,α2)."""
        if idx not in self._deriv_cache:
            out = {}
            for mono, f in self.terms.items():
                e = mono[idx]
                if e:
                    new = list(mono)
                    new[idx] = e - 1
                    key = tuple(new)
                    add = f * float(e)
                    out[key] = out.get(key, AngularField(self.lab.grid)) + add
            self._deriv_cache[idx] = out
        return self._deriv_cache[idx]

    def combined(self, P: ParamPoint, include_Q: bool = True,
                 terms: Dict[Monomial, AngularField] = None) -> AngularField:
        """Σ coeff(monomial, P) · field, optionally plus Q."""
        tmap = self.terms if terms is None else terms
        out = AngularField(self.lab.grid)
        if include_Q:
            out = AngularField.radial(self.lab.grid, self.lab.Q.values)
        for mono, f in tmap.items():
            c = self._coeff(mono, P)
            if c != 0.0:
                out = out + f * c
        return out

    # -- evaluation -------------------------------------------------------

    def phase(self, P: ParamPoint, r, theta) -> np.ndarray:
        """The conformal phase -b|y|²/4 + β·y."""
        r = np.asarray(r)
        return (-P.b * r ** 2 / 4.0
                + r * (P.beta[0] * np.cos(theta) + P.beta[1] * np.sin(theta)))

    def eval_P(self, P: ParamPoint, r, theta) -> np.ndarray:
        """The conformal-frame profile P_P at matched polar point arrays."""
        return self.combined(P).at(r, theta)

    def eval_QP(self, P: ParamPoint, r, theta) -> np.ndarray:
        """Q_P = P_P · e^{i(-b|y|²/4 + β·y)} (Σ = Re, Θ = Im)."""
        return self.eval_P(P, r, theta) * np.exp(1j * self.phase(P, r, theta))

    def mass(self, P: ParamPoint) -> float:
        """∫|Q_P|², exact in the mode algebra (equals ∫Q² + O(P⁴))."""
        return self.combined(P).norm() ** 2

    def _polar_eval(self, P: ParamPoint, ntheta: int):
        theta = np.arange(ntheta) * (2 * np.pi / ntheta)
        comb = self.combined(P)
        vals = comb.on_native(theta)
        return theta, comb, vals

    def gradient_terms(self, comb: AngularField, theta: np.ndarray):
        """(∂_r F, (1/r)∂_θ F) of an angular field on the native polar grid."""
        g = self.lab.grid
        r = g.nodes
        dr = np.zeros((g.n, theta.size), dtype=complex)
        dth = np.zeros_like(dr)
        for m, v in comb.comps.items():
            par = 1 if m % 2 == 0 else -1
            dvr = derivative(v.real, g, parity=par) + 1j * derivative(v.imag, g, parity=par)
            em = np.exp(1j * m * theta)[None, :]
            dr += dvr[:, None] * em
            with np.errstate(invalid="ignore", divide="ignore"):
                rad = np.where(r > 0, v / np.where(r > 0, r, 1.0), 0.0)
            dth += 1j * m * rad[:, None] * em
        return dr, dth

    def energy(self, P: ParamPoint, ntheta: int = 64) -> float:
        """Ẽ(Q_P) = (1/2)∫|∇Q_P|² - (1/4)∫ (k(λy+α)/k(α)) |Q_P|⁴."""
        g = self.lab.grid
        r = g.nodes
        theta, comb, vals = self._polar_eval(P, ntheta)
        dr, dth = self.gradient_terms(comb, theta)
        ct, st = np.cos(theta)[None, :], np.sin(theta)[None, :]
        # polar components of ∇phase: u_r = -(b/2) r + β·ê_r, u_θ = β·ê_θ
        u_r = -0.5 * P.b * r[:, None] + P.beta[0] * ct + P.beta[1] * st
        u_th = -P.beta[0] * st + P.beta[1] * ct
        grad2 = np.abs(dr + 1j * vals * u_r) ** 2 + np.abs(dth + 1j * vals * u_th) ** 2
        kin = 0.5 * _polar_integral(grad2, r, ntheta)
        x = np.stack([P.lam * r[:, None] * ct + P.alpha[0] * np.ones_like(grad2),
                      P.lam * r[:, None] * st + P.alpha[1] * np.ones_like(grad2)], axis=-1)
        kappa = self.model.k(x) / float(self.model.k(P.alpha))
        pot = 0.25 * _polar_integral(kappa * np.abs(vals) ** 4, r, ntheta)
        return kin - pot

    def energy_prediction(self, P: ParamPoint) -> float:
        """Leading-order invariant: b²/8‖yQ‖² + |β|²/2∫Q² - λ²/8 ∫∇²k(0)(y,y)Q⁴."""
        m = self.lab.moments
        hq = hessian_quartic_integral(self.model, self.lab)
        return (P.b ** 2 / 8.0 * m.ymomQ + 0.5 * (P.beta @ P.beta) * m.massQ
                - P.lam ** 2 / 8.0 * hq)

    # -- the self-similar equation residual --------------------------------

    def residual(self, P: ParamPoint, weight: float = 0.25, ntheta: int = 64) -> dict:
        """Weighted norms of the mismatch in the conformal-frame profile equation.

        The equation is evaluated with the constructed forcing B in place of
        the frozen laws, the exact parameter derivatives of the monomial map,
        the same discrete Laplacian that built the fields, and the actual k
        evaluator (not its Taylor polynomial).
        """
        P.check_small(self.eta_star)
        g = self.lab.grid
        r = g.nodes
        q = self.lab.Q.values
        theta = np.arange(ntheta) * (2 * np.pi / ntheta)

        def eval_map(tmap, include_Q=False, lap=False):
            out = np.zeros((g.n, ntheta), dtype=complex)
            for mono, f in tmap.items():
                c = self._coeff(mono, P)
                if c == 0.0:
                    continue
                ff = _lap_field(self.lab, f) if lap else f
                out += c * ff.on_native(theta)
            return out

        Pv = eval_map(self.terms) + q[:, None]
        lapP = eval_map(self.terms, lap=True) \
            + (_lap_field(self.lab, AngularField.radial(g, q)).on_native(theta))

        d_b = eval_map(self.derivative_map(0))
        d_lam = eval_map(self.derivative_map(1))
        d_beta = [eval_map(self.derivative_map(2)), eval_map(self.derivative_map(3))]
        d_alpha = [eval_map(self.derivative_map(4)), eval_map(self.derivative_map(5))]

        consts = self.constants
        Bvec = consts.B(P.lam, P.alpha)
        ct, st = np.cos(theta)[None, :], np.sin(theta)[None, :]
        By = r[:, None] * (Bvec[0] * ct + Bvec[1] * st)

        k_alpha = float(self.model.k(P.alpha))
        gk = self.model.grad_k(P.alpha) / k_alpha
        gterm = P.lam * float(P.beta @ gk)

        x = np.stack([P.lam * r[:, None] * ct + P.alpha[0] * np.ones_like(By),
                      P.lam * r[:, None] * st + P.alpha[1] * np.ones_like(By)], axis=-1)
        kappa = self.model.k(x) / k_alpha

        lhs = (-1j * P.b ** 2 * d_b
               - 1j * P.lam * P.b * d_lam
               + 2j * P.lam * (P.beta[0] * d_alpha[0] + P.beta[1] * d_alpha[1])
               + 1j * ((-P.b * P.beta[0] + Bvec[0]) * d_beta[0]
                       + (-P.b * P.beta[1] + Bvec[1]) * d_beta[1])
               - (By + 1j * gterm) * Pv
               + lapP - Pv + kappa * np.abs(Pv) ** 2 * Pv)
        psi = -lhs

        w2 = np.exp(2.0 * weight * r)[:, None]
        l2 = np.sqrt(_polar_integral(np.abs(psi) ** 2 * w2, r, ntheta))

        # gradient through θ-FFT (per-mode radial derivative + im/r)
        psi_m = np.fft.fft(psi, axis=1) / ntheta
        dr_psi = np.zeros_like(psi)
        dth_psi = np.zeros_like(psi)
        for k in range(ntheta):
            m = k if k <= ntheta // 2 else k - ntheta
            par = 1 if m % 2 == 0 else -1
            col = psi_m[:, k]
            dcol = derivative(col.real, g, parity=par) + 1j * derivative(col.imag, g, parity=par)
            em = np.exp(1j * m * theta)[None, :]
            dr_psi += dcol[:, None] * em
            with np.errstate(invalid="ignore", divide="ignore"):
                rad = np.where(r > 0, col / np.where(r > 0, r, 1.0), 0.0)
            dth_psi += 1j * m * rad[:, None] * em
        grad2 = np.abs(dr_psi) ** 2 + np.abs(dth_psi) ** 2
        h1 = np.sqrt(l2 ** 2 + _polar_integral(grad2 * w2, r, ntheta))
        return {"L2w": float(l2), "H1w": float(h1), "weight": weight}


def build_expansion(model: InhomogeneityModel, C0: float, lab: Lab,
                    eta_star: float = ETA_STAR_DEFAULT,
                    solvability_threshold: float = 1e-8) -> ProfileExpansion:
    """Construct T2, S3, T3, T4, S4 and the adjusted constants for this k and C0.

    Raises SolvabilityViolated if any elliptic system fails its kernel check,
    which would mean the constants do not match the assembled sources.
    """
    consts = derive_constants(model, lab)
    g = lab.grid
    r = g.nodes
    q = lab.Q.values
    q2, q3 = q ** 2, q ** 3
    H = model.hessian
    terms: Dict[Monomial, AngularField] = {}

    def put(mono: Monomial, f: AngularField, imag: bool = False):
        add = f * 1j if imag else f
        terms[mono] = terms.get(mono, AngularField(g)) + add

    def solve(op, src):
        return _solve_field(lab, op, src, check=True)

    if model.is_flat:
        return ProfileExpansion(lab=lab, model=model, constants=consts, C0=C0,
                                terms={}, eta_star=eta_star)

    # ---- order 2: L+(T2) = ∇²k(0)(α,y)λQ³ + (λ²/2)∇²k(0)(y,y)Q³ - λ c0(α)·yQ
    U20 = solve("plus", AngularField.from_angular(g, 0.5 * r ** 2 * q3, model.hess_form, 2))
    put((0, 2, 0, 0, 0, 0), U20)
    U2 = []
    for j in range(2):
        c0_ej = consts.c0_map[:, j]

        def ang_h(cx, sx, j=j):
            return H[0, j] * cx + H[1, j] * sx

        def ang_c(cx, sx, v=c0_ej):
            return v[0] * cx + v[1] * sx

        src = AngularField.from_angular(g, r * q3, ang_h, 1) \
            - AngularField.from_angular(g, r * q, ang_c, 1)
        U2j = solve("plus", src)
        U2.append(U2j)
        mono = [0, 1, 0, 0, 0, 0]
        mono[4 + j] = 1
        put(tuple(mono), U2j)

    # ---- order 3 imaginary: L-(S3) = -λb ∂_λT2 + 2βλ ∂_αT2
    V0 = solve("minus", U20 * (-2.0))
    put((1, 2, 0, 0, 0, 0), V0, imag=True)
    for j in range(2):
        Vj = solve("minus", U2[j] * (-1.0))
        mono = [1, 1, 0, 0, 0, 0]
        mono[4 + j] = 1
        put(tuple(mono), Vj, imag=True)
        mono = [0, 2, 0, 0, 0, 0]
        mono[2 + j] = 1
        put(tuple(mono), Vj * (-2.0), imag=True)     # W_j = -2 V_j

    # ---- order 3 real: L+(T3) = ∇³k(0)(y,y,y)(λ³/6)Q³ + ∇³k(0)(y,y,α)(λ²/2)Q³ - β3λ³·yQ
    def ang_b3(cx, sx):
        return consts.beta3[0] * cx + consts.beta3[1] * sx

    src30 = AngularField.from_angular(g, r ** 3 * q3 / 6.0, model.third_form, 3) \
        - AngularField.from_angular(g, r * q, ang_b3, 1)
    U30 = solve("plus", src30)
    put((0, 3, 0, 0, 0, 0), U30)
    U3 = []
    for j in range(2):
        src = AngularField.from_angular(
            g, 0.5 * r ** 2 * q3, lambda cx, sx, j=j: model.third_form(cx, sx, e=j), 2)
        U3j = solve("plus", src)
        U3.append(U3j)
        mono = [0, 2, 0, 0, 0, 0]
        mono[4 + j] = 1
        put(tuple(mono), U3j)

    # ---- order 4 real: L+(T4) = -β4 λ⁴·yQ + f4 λ⁴ with b replaced by λ/C0.
    # f4 collects the surviving pure-λ⁴ real terms: the b-derivative feedbacks
    # of S3, the cubic cross terms of T2, and the 4th-order Taylor term of k.
    hyy = AngularField.from_angular(g, r ** 2, model.hess_form, 2)
    f4 = (V0 * (3.0 / C0 ** 2)
          + (U20 * U20).scale_radial(3.0 * q)
          + (hyy * U20).scale_radial(1.5 * q2)
          + AngularField.from_angular(g, r ** 4 * q3 / 24.0, model.quartic_form, 4))
    beta4 = np.zeros(2)
    for j in range(2):
        djQ = AngularField.from_angular(
            g, lab.dQ, lambda cx, sx, j=j: (cx, sx)[j], 1)
        beta4[j] = -2.0 * field_pair(f4, djQ) / lab.moments.massQ
    consts.beta4 = beta4

    def ang_b4(cx, sx):
        return beta4[0] * cx + beta4[1] * sx

    T4 = solve("plus", f4 - AngularField.from_angular(g, r * q, ang_b4, 1))
    put((0, 4, 0, 0, 0, 0), T4)

    # ---- order 4 imaginary: L-(S4) = -(λ²/C0) ∂_λT3
    X0 = solve("minus", U30 * (-3.0 / C0))
    put((0, 4, 0, 0, 0, 0), X0, imag=True)
    for j in range(2):
        Xj = solve("minus", U3[j] * (-2.0 / C0))
        mono = [0, 3, 0, 0, 0, 0]
        mono[4 + j] = 1
        put(tuple(mono), Xj, imag=True)

    consts.conformal_C0 = C0
    return ProfileExpansion(lab=lab, model=model, constants=consts, C0=C0,
                            terms=terms, eta_star=eta_star)


def field_pair(a: AngularField, b: AngularField) -> float:
    """Real L²(R²) pairing 2π Σ_m ∫ a_m conj(b_m) r dr."""
    r = a.grid.nodes
    total = 0.0
    for m, v in a.comps.items():
        w = b.comps.get(m)
        if w is not None:
            total += np.real(simpson(v * np.conj(w) * r, x=r))
    return float(2 * np.pi * total)


def conformal_ray(lam: float, C0: float, beta_scale=(0.0, 0.0),
                  alpha_scale=(0.0, 0.0)) -> ParamPoint:
    """P(λ) = (λ/C0, λ, κ_β λ², κ_α λ²): the regime of the blow-up solutions."""
    return ParamPoint(b=lam / C0, lam=lam,
                      beta=np.asarray(beta_scale) * lam ** 2,
                      alpha=np.asarray(alpha_scale) * lam ** 2)


def physical_field(expansion: ProfileExpansion, P: ParamPoint, gamma: float):
    """u(x) = k(α)^{-1/2} λ^{-1} Q_P((x-α)/λ) e^{iγ} as a point evaluator."""
    k_alpha = float(expansion.model.k(P.alpha))

    def evaluate(pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        dx = pts[..., 0] - P.alpha[0]
        dy = pts[..., 1] - P.alpha[1]
        r = np.hypot(dx, dy) / P.lam
        th = np.arctan2(dy, dx)
        return expansion.eval_QP(P, r, th) * np.exp(1j * gamma) / (np.sqrt(k_alpha) * P.lam)

    return evaluate
