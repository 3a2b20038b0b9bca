"""Modulation ODE: closed forms, conformal ray, and the s⁻² linear system."""

import numpy as np
import pytest

from nlsblow import modeqs, profile as prof
from nlsblow.kmodel import InhomogeneityModel


@pytest.fixture(scope="module")
def consts(lab):
    model = InhomogeneityModel(hessian=-0.2 * np.eye(2))
    c = prof.derive_constants(model, lab)
    c.conformal_C0 = 1.0
    return c


@pytest.fixture(scope="module")
def consts_zero(lab):
    from nlsblow.kmodel import homogeneous_model

    return prof.derive_constants(homogeneous_model(), lab)


RTOL = modeqs.RTOL_DEFAULT


def test_homogeneous_closed_form(consts_zero):
    # b(1) = 1, α = β = 0, d0 ≡ 0: b(s) = 1/s, λ(s) = λ(1)/s exactly
    st = modeqs.ModState(b=1.0, lam=0.7, s=1.0)
    tr = modeqs.integrate(st, consts_zero, s_span=(1.0, 200.0))
    assert np.max(np.abs(tr.b - 1.0 / tr.s)) <= 10 * RTOL
    assert np.max(np.abs(tr.lam - 0.7 / tr.s)) <= 10 * RTOL


def test_conserved_quantities_homogeneous(consts_zero):
    # with α = β = 0 and d0 = 0, b·s and λ·s are exact integrals
    st = modeqs.ModState(b=0.5, lam=0.5, s=2.0)
    tr = modeqs.integrate(st, consts_zero, s_span=(2.0, 500.0))
    bs = tr.b * (tr.s + (1.0 / st.b - st.s))
    assert np.max(np.abs(bs - 1.0)) < 100 * RTOL


def test_backward_forward_roundtrip(consts):
    st = modeqs.ModState(b=1e-3, lam=1e-3, beta=np.array([1e-5, -2e-5]),
                         alpha=np.array([2e-5, 1e-5]), s=10.0)
    back = modeqs.integrate(st, consts, s_span=(10.0, 1000.0))
    end = back.state(-1)
    fwd = modeqs.integrate(end, consts, s_span=(end.s, 10.0))
    v0, v1 = st.to_vector(), fwd.state(-1).to_vector()
    assert np.max(np.abs(v0 - v1)) <= 100 * RTOL * max(1.0, np.max(np.abs(v0)))


def test_d0_sign(consts, rng):
    for _ in range(10):
        a = rng.normal(size=2)
        assert consts.d0(a) <= 0.0


def test_existence_data_stays_on_ray(consts):
    C0 = 1.0
    st = modeqs.existence_initial_state(t1=-0.1, C0=C0)
    tr = modeqs.integrate(st, consts, s_span=(st.s, 1000.0))
    mask = tr.s >= 10.0
    dev = np.abs(tr.b[mask] / tr.lam[mask] - 1.0 / C0)
    assert np.all(dev <= 5.0 * tr.lam[mask] ** 2 + 100 * RTOL)
    # λ(s)·s -> C0
    assert abs(tr.lam[-1] * tr.s[-1] - C0) / C0 < 0.01


def test_clock_consistency(consts):
    st = modeqs.ModState(b=0.02, lam=0.02, s=50.0, t=-2.0)
    tr = modeqs.integrate(st, consts, s_span=(50.0, 800.0))
    # the two clocks: s vs t through ds/dt = 1/λ²
    from scipy.integrate import cumulative_trapezoid

    s_rec = st.s + cumulative_trapezoid(1.0 / tr.lam ** 2,
                                        tr.t, initial=0.0)
    assert np.max(np.abs(s_rec - tr.s)) < 1e-4 * tr.s[-1]


def test_integration_in_t(consts):
    C0 = 1.0
    st = modeqs.existence_initial_state(t1=-0.3, C0=C0)
    tr = modeqs.integrate(st, consts, t_span=(st.t, -0.05))
    # λ(t) = -t/C0 exactly on the ray
    assert np.max(np.abs(tr.lam + tr.t / C0)) < 1e-8


def test_lam_min_stop(consts):
    st = modeqs.existence_initial_state(t1=-0.1, C0=1.0)
    tr = modeqs.integrate(st, consts, s_span=(st.s, 1e9), lam_min=1e-3)
    assert tr.status == "lam_min"
    assert tr.lam[-1] >= 1e-3 - 1e-9


def test_alpha_beta_subsystem_reduction(lab):
    # on the ray background (λ = C0/s, b = 1/s), w = s·α(s) in a c0-eigenframe
    # solves w_ss + 2ς w/s² = 0 with ς = -r C0² (r < 0 the c0 eigenvalue)
    model = InhomogeneityModel(hessian=-0.2 * np.eye(2))
    c = prof.derive_constants(model, lab)
    C0 = 1.3
    r_eig = np.linalg.eigvalsh(c.c0_map)[0]
    varsig = -r_eig * C0 ** 2
    assert varsig > 0
    sys = modeqs.basis(varsig)

    from scipy.integrate import solve_ivp

    def rhs(s, y):
        al, be = y[0:2], y[2:4]
        lam, b = C0 / s, 1.0 / s
        return np.concatenate([2 * be * lam, -b * be + lam * (c.c0_map @ al)])

    s0, s1 = 5.0, 400.0
    # start on the closed-form branch α = z(s)/s
    z0, dz0 = sys.z_plus(s0), sys.dz_plus(s0)
    al0 = z0 / s0
    dal0 = dz0 / s0 - z0 / s0 ** 2
    be0 = dal0 * s0 / (2 * C0)
    y0 = np.array([al0, 0.0, be0, 0.0])
    sol = solve_ivp(rhs, (s0, s1), y0, rtol=1e-12, atol=1e-14, dense_output=True)
    ss = np.linspace(s0, s1, 60)
    alpha_num = sol.sol(ss)[0]
    alpha_exact = sys.z_plus(ss) / ss
    assert np.max(np.abs(alpha_num - alpha_exact)) < 1e-8 * np.max(np.abs(alpha_exact))


# ---------------------------------------------------------------------------
# the s⁻² linear system
# ---------------------------------------------------------------------------

def test_basis_values():
    sys = modeqs.basis(0.125)
    s = np.array([2.0, 5.0])
    assert np.allclose(sys.z_plus(s), np.sqrt(s) * np.log(s))
    assert np.allclose(sys.z_minus(s), np.sqrt(s))
    assert sys.wronskian == pytest.approx(0.5)
    sys2 = modeqs.basis(0.25)
    assert sys2.regime == "oscillatory"
    # determinant of the fundamental matrix [[z, -z_s/2]]: -sqrt(8ς-1)/4
    assert sys2.wronskian == pytest.approx(-np.sqrt(8 * 0.25 - 1.0) / 4.0)


@pytest.mark.parametrize("varsig", [0.05, 0.125, 0.5])
def test_basis_solves_homogeneous(varsig):
    sys = modeqs.basis(varsig)
    s = np.linspace(2.0, 50.0, 200)
    assert sys.homogeneous_residual(s) < 1e-8


def test_wronskian_is_constant_determinant():
    for varsig in (0.05, 0.125, 0.5):
        sys = modeqs.basis(varsig)
        for s in (2.0, 7.0, 31.0):
            Zp, Zm = sys.Z_plus(s), sys.Z_minus(s)
            det = Zp[0] * Zm[1] - Zp[1] * Zm[0]
            assert det == pytest.approx(sys.wronskian, rel=1e-12)


@pytest.mark.parametrize("varsig", [0.05, 0.125, 0.5])
def test_voc_matches_direct_integration(varsig):
    sys = modeqs.basis(varsig)

    def F(s):
        return (s ** -3.0, 0.0)

    s_pts = np.array([2.0, 4.0, 8.0, 16.0, 32.0])
    Z = modeqs.decaying_solution(sys, F, s_pts)
    # integrate backward from the largest s where Z is known
    flow = modeqs.integrate_linear_system(sys, F, s_pts[-1], s_pts[0], Z[:, -1])
    Z_ode = flow(s_pts)
    assert np.max(np.abs(Z - Z_ode)) < 1e-8 * max(1.0, np.max(np.abs(Z)))


def test_zero_forcing_zero_solution():
    sys = modeqs.basis(0.3)
    Z = modeqs.decaying_solution(sys, lambda s: (0.0, 0.0), np.array([2.0, 10.0]))
    assert np.allclose(Z, 0.0)


def test_bound_ratio_stable():
    forcings = [lambda s: (s ** -3, 0.0), lambda s: (0.0, s ** -3.5),
                lambda s: (np.sin(s) * s ** -3.5, s ** -4)]
    for varsig in (0.05, 0.125, 0.5):
        sys = modeqs.basis(varsig)
        for F in forcings:
            r1 = modeqs.bound_report(sys, F, np.array([2.0, 5.0, 10.0]))
            r2 = modeqs.bound_report(sys, F, np.array([2.0, 10.0, 20.0]))
            assert np.isfinite(r1["max_ratio"])
            assert r1["max_ratio"] < 10.0
            assert abs(r2["max_ratio"] - r1["max_ratio"]) <= 0.5 * (1 + r1["max_ratio"])


def test_varsig_must_be_positive():
    with pytest.raises(ValueError):
        modeqs.basis(-0.1)
    with pytest.raises(ValueError):
        modeqs.basis(0.0)
