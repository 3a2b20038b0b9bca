"""Decomposition round-trips, rate fitting, and the diagnostic functionals."""

import numpy as np
import pytest

from nlsblow import modfit, profile as prof, sim
from nlsblow.kmodel import InhomogeneityModel
from nlsblow.modeqs import ModState


@pytest.fixture(scope="module")
def model():
    return InhomogeneityModel(hessian=-0.2 * np.eye(2))


@pytest.fixture(scope="module")
def expansion(lab, model):
    return prof.build_expansion(model, C0=1.0, lab=lab)


def _param_state(P: prof.ParamPoint, gamma: float) -> ModState:
    return ModState(b=P.b, lam=P.lam, beta=P.beta.copy(), alpha=P.alpha.copy(),
                    gamma=gamma)


def test_roundtrip_exact_profile(expansion):
    P = prof.ParamPoint(b=0.06, lam=0.09, beta=np.array([0.004, -0.003]),
                        alpha=np.array([0.01, 0.02]))
    gamma = 0.37
    u = prof.physical_field(expansion, P, gamma)
    guess = ModState(b=0.055, lam=0.095, beta=np.array([0.003, -0.002]),
                     alpha=np.array([0.012, 0.018]), gamma=0.35)
    dec = modfit.decompose(u, guess, expansion)
    got = dec.params
    assert abs(got.b - P.b) < 1e-8
    assert abs(got.lam - P.lam) < 1e-8
    assert np.max(np.abs(got.beta - P.beta)) < 1e-8
    assert np.max(np.abs(got.alpha - P.alpha)) < 1e-8
    assert abs((got.gamma - gamma + np.pi) % (2 * np.pi) - np.pi) < 1e-8
    assert dec.eps_l2 < 1e-8
    assert dec.jacobian_cond < 1e6


def test_roundtrip_many_random(expansion, rng):
    # the acceptance version runs 50 draws; keep the unit test light
    for _ in range(5):
        lam = rng.uniform(0.05, 0.13)
        P = prof.ParamPoint(b=rng.uniform(0.0, 0.08), lam=lam,
                            beta=rng.normal(scale=0.005, size=2),
                            alpha=rng.normal(scale=0.01, size=2))
        if P.size > 0.15:
            continue
        gamma = rng.uniform(0, 2 * np.pi)
        u = prof.physical_field(expansion, P, gamma)
        guess = _param_state(P, gamma)
        guess.b += 0.003
        guess.lam *= 1.03
        dec = modfit.decompose(u, guess, expansion)
        assert abs(dec.params.lam - P.lam) < 1e-8
        assert abs(dec.params.b - P.b) < 1e-8


def test_projected_perturbation_recovery(expansion, rng):
    P = prof.ParamPoint(b=0.05, lam=0.1)
    gamma = 0.2
    grid = modfit.FitGrid()
    sampler = modfit._cached_sampler(expansion, grid)
    pvec = np.array([P.b, P.lam, 0.0, 0.0, 0.0, 0.0, gamma])
    w = modfit._window_fields(sampler, grid, pvec)
    eps = modfit.constrained_random_eps(w, grid, rng, amplitude=1e-3)
    base = prof.physical_field(expansion, P, gamma)

    # build the perturbed field as a callable directly in rescaled variables
    from scipy.interpolate import CubicSpline

    em = np.fft.fft(eps, axis=1) / grid.n_theta
    splines = []
    for k in range(grid.n_theta):
        m = k if k <= grid.n_theta // 2 else k - grid.n_theta
        splines.append((m, CubicSpline(grid.r, em[:, k].real),
                        CubicSpline(grid.r, em[:, k].imag)))

    def eps_at(r, th):
        out = np.zeros(r.shape, dtype=complex)
        rc = np.clip(r, 0, grid.r_max)
        inside = r <= grid.r_max
        for m, sre, sim_ in splines:
            out += np.where(inside, sre(rc) + 1j * sim_(rc), 0.0) * np.exp(1j * m * th)
        return out

    def u_pert(pts):
        dx, dy = pts[..., 0], pts[..., 1]
        r = np.hypot(dx, dy) / P.lam
        th = np.arctan2(dy, dx)
        return base(pts) + eps_at(r, th) * np.exp(1j * gamma) / P.lam

    guess = _param_state(P, gamma)
    guess.lam *= 1.01
    dec = modfit.decompose(u_pert, guess, expansion)
    assert abs(dec.params.lam - P.lam) < 1e-6
    assert abs(dec.params.b - P.b) < 1e-6
    # the recovered ε matches the injected one
    diff = np.sqrt(dec.fit_grid.integral(np.abs(dec.epsilon - eps) ** 2))
    assert diff < 1e-6


def test_phase_equivariance(expansion):
    P = prof.ParamPoint(b=0.04, lam=0.11)
    base = prof.physical_field(expansion, P, 0.5)
    theta_shift = 1.1

    def shifted(pts):
        return base(pts) * np.exp(1j * theta_shift)

    dec0 = modfit.decompose(base, _param_state(P, 0.5), expansion)
    dec1 = modfit.decompose(shifted, _param_state(P, 0.5 + theta_shift), expansion)
    assert abs(dec0.params.lam - dec1.params.lam) < 1e-9
    d = (dec1.params.gamma - dec0.params.gamma - theta_shift) % (2 * np.pi)
    assert min(d, 2 * np.pi - d) < 1e-8


def test_fit_rate_exact():
    ts = np.linspace(-1.0, -0.2, 20)
    lams = (0.5 - ts) / 2.0
    rep = modfit.fit_rate(ts, lams)
    assert rep.T_est == pytest.approx(0.5, abs=1e-12)
    assert rep.C0_est == pytest.approx(2.0, rel=1e-12)
    assert rep.residual < 1e-14


def test_fit_rate_noisy(rng):
    ts = np.linspace(-1.0, -0.2, 200)
    lams = (0.3 - ts) / 1.5 + rng.uniform(-1e-3, 1e-3, size=ts.size)
    lams = np.minimum.accumulate(lams)  # keep strictly decreasing
    lams -= 1e-9 * np.arange(ts.size)
    rep = modfit.fit_rate(ts, lams)
    assert abs(rep.C0_est - 1.5) < 1e-2 * 1.5


def test_fit_rate_rejects_bad_series():
    ts = np.linspace(-1, -0.5, 12)
    with pytest.raises(modfit.NonMonotoneSeries):
        modfit.fit_rate(ts, np.abs(np.sin(ts * 20)) + 1.0)
    with pytest.raises(ValueError):
        modfit.fit_rate(ts[:5], np.linspace(1, 0.5, 5))


def test_fit_rate_from_modulation_ode(lab, model):
    from nlsblow import modeqs

    consts = prof.derive_constants(model, lab)
    C0 = prof.compute_C0(prof.energy_for_C0(1.2, model, lab), model, lab)
    st = modeqs.existence_initial_state(t1=-0.4, C0=C0)
    tr = modeqs.integrate(st, consts, t_span=(st.t, -0.05))
    rep = modfit.fit_rate(tr.t, tr.lam)
    assert abs(rep.C0_est - C0) / C0 < 0.02


def test_phi_cutoff_smooth():
    r = np.linspace(0.0, 4.0, 400)
    psi = modfit.phi_prime(r)
    assert np.allclose(psi[r <= 1.0], r[r <= 1.0])
    assert np.allclose(psi[r >= 2.0], 3.0 - np.exp(-r[r >= 2.0]))
    dpsi = np.gradient(psi, r)
    # C¹ across the blend: numerical derivative stays close to phi_second
    assert np.max(np.abs(dpsi[5:-5] - modfit.phi_second(r)[5:-5])) < 5e-3


def test_lyapunov_zero_perturbation(expansion, model, lab):
    P = prof.ParamPoint(b=0.05, lam=0.1)
    L, n = 4.0, 256
    h = 2 * L / n
    x = -L + h * np.arange(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    w = prof.physical_field(expansion, P, 0.0)(np.stack([X, Y], axis=-1))
    fw = sim.ComplexField2D(L, w, 0.0)
    kv = model.k(np.stack([X, Y], axis=-1))
    val = modfit.lyapunov_I(_param_state(P, 0.0), fw, fw, 20.0, kv)
    assert val == 0.0


def test_lyapunov_matches_term_oracle(expansion, model, lab):
    # ũ = small pure-phase multiple of w: compare against an independent
    # term-by-term quadrature with plain numpy sums
    P = prof.ParamPoint(b=0.05, lam=0.1)
    L, n = 4.0, 256
    h = 2 * L / n
    x = -L + h * np.arange(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    wv = prof.physical_field(expansion, P, 0.0)(np.stack([X, Y], axis=-1))
    delta = 1e-3
    uv = wv * np.exp(1j * delta)
    kv = model.k(np.stack([X, Y], axis=-1))
    got = modfit.lyapunov_I(_param_state(P, 0.0), sim.ComplexField2D(L, uv, 0.0),
                            sim.ComplexField2D(L, wv, 0.0), 20.0, kv)

    ut = uv - wv
    kxf = 2 * np.pi * np.fft.fftfreq(n, d=h)
    uh = np.fft.fft2(ut)
    ux = np.fft.ifft2(1j * kxf[:, None] * uh)
    uy = np.fft.ifft2(1j * kxf[None, :] * uh)
    t1 = 0.5 * np.sum(np.abs(ux) ** 2 + np.abs(uy) ** 2) * h * h
    t2 = 0.5 * np.sum(np.abs(ut) ** 2) * h * h / P.lam ** 2
    t3 = np.sum(kv * (0.25 * np.abs(uv) ** 4 - 0.25 * np.abs(wv) ** 4
                      - (np.abs(wv) ** 2 * wv * np.conj(ut)).real)) * h * h
    rz = np.hypot(X, Y) / (20.0 * P.lam)
    psi = modfit.phi_prime(rz)
    with np.errstate(invalid="ignore", divide="ignore"):
        ex = np.where(rz > 0, X / (20.0 * P.lam) / np.where(rz > 0, rz, 1), 0.0)
        ey = np.where(rz > 0, Y / (20.0 * P.lam) / np.where(rz > 0, rz, 1), 0.0)
    t4 = 0.5 * (P.b / P.lam) * np.sum((20.0 * psi * (ex * ux + ey * uy)
                                       * np.conj(ut)).imag) * h * h
    oracle = t1 + t2 - t3 + t4
    assert got == pytest.approx(oracle, rel=1e-8)


def test_virial_boundary_zero_eps(expansion, lab):
    grid = modfit.FitGrid()
    dec = modfit.Decomposition(
        params=ModState(b=0.05, lam=0.1), epsilon=np.zeros((grid.n_r, grid.n_theta), dtype=complex),
        fit_grid=grid, residuals=np.zeros(7), jacobian_cond=1.0, eps_l2=0.0, eps_h1=0.0)
    val = modfit.virial_boundary(dec, 20.0, lab.moments.ymomQ)
    assert val == pytest.approx(-(0.05 / 0.1) * lab.moments.ymomQ / 4.0, rel=1e-12)


def test_coercivity_random_draws(expansion, model, lab, rng):
    # a light version of the acceptance criterion: 12 draws, single fitted c
    P = prof.ParamPoint(b=0.1, lam=0.1)
    gamma = 0.0
    grid = modfit.FitGrid()
    sampler = modfit._cached_sampler(expansion, grid)
    pvec = np.array([P.b, P.lam, 0, 0, 0, 0, gamma], dtype=float)
    w = modfit._window_fields(sampler, grid, pvec)
    L, n = 4.0, 256
    h = 2 * L / n
    x = -L + h * np.arange(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    wv = prof.physical_field(expansion, P, gamma)(np.stack([X, Y], axis=-1))
    kv = model.k(np.stack([X, Y], axis=-1))
    state = _param_state(P, gamma)
    ratios = []
    for _ in range(12):
        eps = modfit.constrained_random_eps(w, grid, rng, amplitude=1e-3)
        ut = modfit.rescaled_perturbation(eps, grid, state, model, L, n)
        u = sim.ComplexField2D(L, wv + ut, 0.0)
        I = modfit.lyapunov_I(state, u, sim.ComplexField2D(L, wv, 0.0), 20.0, kv)
        dr_eps, dth_eps = modfit.polar_gradient(eps, grid.r, grid.theta)
        h1sq = grid.integral(np.abs(eps) ** 2 + np.abs(dr_eps) ** 2 + np.abs(dth_eps) ** 2)
        ratios.append(P.lam ** 2 * I / h1sq)
    ratios = np.array(ratios)
    assert np.all(ratios > 0)
    assert ratios.min() > 0.01
