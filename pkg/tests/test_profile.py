"""Profile construction: constants, solvability, invariants, residual scaling."""

import numpy as np
import pytest

from nlsblow import profile as prof
from nlsblow.fields import AngularField
from nlsblow.kmodel import InhomogeneityModel, HessianNotNegative, homogeneous_model
from nlsblow.linops import SolvabilityViolated


@pytest.fixture(scope="module")
def model():
    T = np.zeros((2, 2, 2))
    T[0, 0, 0] = 0.06
    T[0, 1, 1] = -0.04
    T[1, 1, 1] = 0.05
    return InhomogeneityModel(hessian=np.array([[-0.25, 0.05], [0.05, -0.35]]),
                              third=T, floor=0.5)


@pytest.fixture(scope="module")
def expansion(lab, model):
    return prof.build_expansion(model, C0=1.0, lab=lab)


def test_model_validates(model):
    assert model.validate() == []


def test_model_rejects_positive_eigenvalue():
    with pytest.raises(HessianNotNegative):
        InhomogeneityModel(hessian=np.array([[0.2, 0.0], [0.0, -0.3]]))


def test_c0_against_direct_quadrature(lab):
    # H = -I: c0(e1) must be -(∫Q⁴)/(2∫Q²) e1; oracle = ratio of raw quadratures
    from scipy.integrate import simpson

    model = InhomogeneityModel(hessian=-np.eye(2))
    consts = prof.derive_constants(model, lab)
    r = lab.grid.nodes
    q = lab.Q.values
    # c0 = (H(e_j,y)Q³, ∂_jQ)/(y_jQ, ∂_jQ): both via polar quadrature
    num = np.pi * simpson(-r * q ** 3 * lab.dQ * r, x=r)      # H=-I: H(e1,y) = -y1
    den = np.pi * simpson(r * q * lab.dQ * r, x=r)
    oracle = num / den
    got = consts.c0(np.array([1.0, 0.0]))
    assert got[0] == pytest.approx(oracle, rel=1e-8)
    assert abs(got[1]) < 1e-12
    assert got[0] == pytest.approx(-lab.moments.quarticQ / (2 * lab.moments.massQ), rel=1e-9)


def test_beta3_vanishes_without_third(lab):
    consts = prof.derive_constants(InhomogeneityModel(hessian=-0.3 * np.eye(2)), lab)
    assert np.allclose(consts.beta3, 0.0)


def test_d0_negative(lab, model, rng):
    consts = prof.derive_constants(model, lab)
    for _ in range(20):
        a = rng.normal(size=2)
        assert consts.d0(a) <= 0.0


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_a1_cross_check_random_hessians(lab, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2, 2))
    H = -(A @ A.T + 0.05 * np.eye(2))
    model = InhomogeneityModel(hessian=H)
    a1_closed = prof.derive_constants(model, lab).a1
    a1_proj = prof.a1_projection(model, lab)
    assert a1_closed > 0
    assert abs(a1_closed - a1_proj) / a1_closed < 1e-6


def test_monomial_degree_bookkeeping(expansion):
    for mono, f in expansion.terms.items():
        assert sum(mono) in (2, 3, 4)
        assert f.max_mode() <= expansion.lab.ops.m_max


def test_T2_T3_orthogonal_to_Q(lab, expansion):
    Qf = AngularField.radial(lab.grid, lab.Q.values)
    for mono in [(0, 2, 0, 0, 0, 0), (0, 3, 0, 0, 0, 0)]:
        f = expansion.terms[mono]
        # strip the imaginary (S-part) before pairing
        real_part = AngularField(lab.grid, {m: v.real.astype(complex)
                                            for m, v in f.comps.items()})
        rel = prof.field_pair(real_part, Qf) / (real_part.norm() * Qf.norm())
        assert abs(rel) < 1e-7


def test_S3_solvability_projection(lab, expansion):
    # source of the bλ² part of S3 is -2 U20; its projection on Q must vanish
    U20 = AngularField(lab.grid, {m: v.real.astype(complex)
                                  for m, v in expansion.terms[(0, 2, 0, 0, 0, 0)].comps.items()})
    src = U20 * (-2.0)
    defect = lab.ops.solvability_defect("minus", src.comps[0].real, 0)
    assert defect < 1e-8


def test_flat_model_trivial(lab):
    exp = prof.build_expansion(homogeneous_model(), C0=1.0, lab=lab)
    assert exp.terms == {}
    P = prof.ParamPoint(b=0.05, lam=0.1)
    r = np.array([0.0, 1.0, 2.5])
    th = np.zeros(3)
    vals = exp.eval_P(P, r, th)
    assert np.allclose(vals.real, lab.Q(r), atol=1e-10)
    assert np.allclose(vals.imag, 0.0)


def test_eval_at_origin_point_is_Q(expansion, lab):
    P = prof.ParamPoint(b=0.0, lam=0.0)
    r = np.linspace(0, 10, 50)
    vals = expansion.eval_QP(P, r, np.zeros_like(r))
    assert np.allclose(vals, lab.Q(r), atol=1e-10)


def test_solvability_violated_on_bad_source(lab):
    # a raw mode-1 source proportional to the kernel cannot be inverted
    with pytest.raises(SolvabilityViolated):
        lab.ops.solve("plus", lab.dQ, m=1)


def test_mass_energy_invariant_slopes(expansion, lab):
    lams = np.geomspace(0.02, 0.1, 5)
    mdev, edev = [], []
    for lam in lams:
        P = prof.conformal_ray(lam, expansion.C0, (0.3, -0.2), (-0.25, 0.35))
        mdev.append(abs(expansion.mass(P) - lab.moments.massQ))
        edev.append(abs(expansion.energy(P) - expansion.energy_prediction(P)))
    ms = np.polyfit(np.log(lams), np.log(mdev), 1)[0]
    es = np.polyfit(np.log(lams), np.log(edev), 1)[0]
    assert 3.5 <= ms <= 4.5
    assert 3.5 <= es <= 4.5


def test_residual_scaling_on_and_off_ray(expansion):
    lams = np.geomspace(0.01, 0.1, 6)
    on_ray = [expansion.residual(prof.conformal_ray(l, expansion.C0, (0.3, -0.2),
                                                    (-0.25, 0.35)))["L2w"]
              for l in lams]
    slope = np.polyfit(np.log(lams), np.log(on_ray), 1)[0]
    assert 4.5 <= slope <= 5.5
    off_ray = [expansion.residual(prof.ParamPoint(b=l, lam=l, alpha=np.array([l, 0.5 * l])))["L2w"]
               for l in lams]
    slope_off = np.polyfit(np.log(lams), np.log(off_ray), 1)[0]
    assert slope_off < 3.8


def test_residual_vanishes_at_origin(expansion):
    res = expansion.residual(prof.ParamPoint(b=0.0, lam=0.0))
    assert res["L2w"] < 1e-7


def test_residual_grid_refinement(model):
    # residual invariant under grid refinement to < 5% at default resolution
    from nlsblow.lab import get_lab

    lab_hi = get_lab(r_max=30.0, n=12288, tol=1e-9)
    exp_hi = prof.build_expansion(model, 1.0, lab_hi)
    exp_lo = prof.build_expansion(model, 1.0, get_lab())
    P = prof.conformal_ray(0.05, 1.0, (0.3, -0.2), (-0.25, 0.35))
    a = exp_lo.residual(P)["L2w"]
    b = exp_hi.residual(P)["L2w"]
    assert abs(a - b) / b < 0.05


def test_rotation_equivariance(lab):
    # 90° rotation: diag(h1,h2) vs diag(h2,h1) maps T_j(y) -> T_j(R^{-1}y)
    m1 = InhomogeneityModel(hessian=np.diag([-0.2, -0.4]))
    m2 = InhomogeneityModel(hessian=np.diag([-0.4, -0.2]))
    e1 = prof.build_expansion(m1, 1.0, lab)
    e2 = prof.build_expansion(m2, 1.0, lab)
    P1 = prof.ParamPoint(b=0.05, lam=0.1, alpha=np.array([0.02, -0.01]))
    P2 = prof.ParamPoint(b=0.05, lam=0.1, alpha=np.array([0.01, 0.02]))  # R @ alpha
    r = np.linspace(0.0, 8.0, 40)
    th = np.full_like(r, 0.7)
    v1 = e1.eval_P(P1, r, th)
    v2 = e2.eval_P(P2, r, th + np.pi / 2)   # evaluate at R y
    assert np.allclose(v1, v2, atol=1e-10)


def test_compute_C0(lab, model):
    m = lab.moments
    hq = prof.hessian_quartic_integral(model, lab)
    E0 = m.ymomQ / 8.0 - hq / 8.0           # makes Ẽ0 = ||yQ||²/8
    assert prof.compute_C0(E0, model, lab) == pytest.approx(1.0, rel=1e-12)
    assert prof.compute_C0(E0 / 2 - hq / 16, model, lab) == pytest.approx(np.sqrt(2), rel=1e-10)
    with pytest.raises(prof.EnergyConditionViolated):
        prof.compute_C0(-hq / 8.0, model, lab)
    assert prof.energy_for_C0(1.0, model, lab) == pytest.approx(E0, rel=1e-12)


def test_constants_rezero_kernel_projections(lab, model, expansion):
    # the adjusted constants are exactly the values zeroing the projections
    consts = expansion.constants
    r = lab.grid.nodes
    q3 = lab.Q.values ** 3
    H = model.hessian
    for j in range(2):
        c0_ej = consts.c0_map[:, j]
        src = AngularField.from_angular(lab.grid, r * q3,
                                        lambda cx, sx, j=j: H[0, j] * cx + H[1, j] * sx, 1) \
            - AngularField.from_angular(lab.grid, r * lab.Q.values,
                                        lambda cx, sx, v=c0_ej: v[0] * cx + v[1] * sx, 1)
        defect = lab.ops.solvability_defect("plus", src.comps[1], 1)
        assert defect < 1e-8
