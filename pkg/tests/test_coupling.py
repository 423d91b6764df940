import numpy as np
import pytest

from wgspec.coupling import (
    AsymptoticPrediction,
    CouplingMatrix,
    apply_T6,
    apply_T7,
    build_phi_vectors,
    coupling_matrix,
    coupling_margin_rule,
    eigvec_coeffs,
    make_coupling_side,
    predict_one_sided,
    predict_thm_matrix,
    predict_two_sided,
    synthesize_eigenfunction,
    tau_roots,
)
from wgspec.eigensolve import lowest_eigenpairs, weighted_norm
from wgspec.errors import GeometryError, InvalidArgumentError
from wgspec.harness import snap_l, tune_depth
from wgspec.modes import limiting_spectrum
from wgspec.stripgrid import (
    StripGrid,
    assemble_double,
    assemble_limiting,
    square_well,
    zero_spec,
)
from wgspec.transverse import discrete_nu, transverse_nu

D = np.pi
H_TEST = 0.15
STD = square_well(-0.6768, a=1.0)


@pytest.fixture(scope="module")
def pair_setup():
    """Mirror standard wells prepared for coupling at l up to 7."""
    X = coupling_margin_rule(7.0, 1.0, 0.75, D)
    g = StripGrid.build(D, H_TEST, X)
    op = assemble_limiting(g, STD)
    spec_m = limiting_spectrum(op, STD, "-", g)
    spec_p = limiting_spectrum(op, STD, "+", g)
    sm = make_coupling_side(STD, g, "-", spec_m.groups[0])
    sp = make_coupling_side(STD, g, "+", spec_p.groups[0])
    return g, sm, sp


@pytest.fixture(scope="module")
def asym_setup(pair_setup):
    """Standard well against a narrower well tuned to the same eigenvalue."""
    g, sm, _ = pair_setup
    target = sm.lam
    template = square_well(-1.0, a=0.7)
    tuned, info = tune_depth(template, target, g)  # tune on the coupling grid
    op = assemble_limiting(g, tuned)
    spec_p = limiting_spectrum(op, tuned, "+", g)
    assert abs(spec_p.groups[0].lam - target) < 1e-8
    sp = make_coupling_side(tuned, g, "+", spec_p.groups[0])
    return g, sm, sp, tuned


def test_t6_zero_input_and_zero_spec(pair_setup):
    g, sm, sp = pair_setup
    lam = 0.5
    l = snap_l(5.0, g.h)
    out = apply_T6(sp, sm, lam, l, np.zeros(g.n))
    assert np.abs(out).max() == 0.0
    zside = make_coupling_side(zero_spec(), g, "+", None)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(g.n)
    assert np.abs(apply_T6(zside, sm, lam, l, f)).max() == 0.0


def test_t6_norm_decay_ratio(pair_setup):
    g, sm, sp = pair_setup
    lam = 0.5
    s1 = np.sqrt(transverse_nu(D, 1) - lam)
    rng = np.random.default_rng(1)
    f = np.zeros(g.n)
    cols = [i for i, x in enumerate(g.xs) if abs(x) <= 1.0]
    for i in cols:
        f[i * g.Ny : (i + 1) * g.Ny] = rng.standard_normal(g.Ny)
    l1, l2 = snap_l(5.0, g.h), snap_l(6.0, g.h)
    n1 = weighted_norm(g, apply_T6(sp, sm, lam, l1, f))
    n2 = weighted_norm(g, apply_T6(sp, sm, lam, l2, f))
    expected = np.exp(-2.0 * s1 * (l2 - l1))
    assert n2 / n1 == pytest.approx(expected, rel=0.05)


def test_t7_annihilates_other_eigenfunction(pair_setup):
    g, sm, sp = pair_setup
    l = snap_l(5.0, g.h)
    out = apply_T7(sp, sm, sm.lam, l, sm.vectors[:, 0])
    assert weighted_norm(g, out) < 1e-10


def test_t7_norm_decay_ratio(pair_setup):
    g, sm, sp = pair_setup
    s1 = np.sqrt(transverse_nu(D, 1) - sm.lam)
    rng = np.random.default_rng(2)
    f = np.zeros(g.n)
    for i, x in enumerate(g.xs):
        if abs(x) <= 1.0:
            f[i * g.Ny : (i + 1) * g.Ny] = rng.standard_normal(g.Ny)
    l1, l2 = snap_l(5.0, g.h), snap_l(6.0, g.h)
    n1 = weighted_norm(g, apply_T7(sp, sm, sm.lam, l1, f))
    n2 = weighted_norm(g, apply_T7(sp, sm, sm.lam, l2, f))
    # the deflated coupling carries the secular l prefactor of its bound
    expected = (l2 / l1) * np.exp(-2.0 * s1 * (l2 - l1))
    assert n2 / n1 == pytest.approx(expected, rel=0.10)


def test_t6_pole_decomposition(pair_setup):
    # T6(lam) + sum_j phi_j <f,psi_j>/(lam-lam*) approaches T7(lam*) linearly
    g, sm, sp = pair_setup
    lam_star = sm.lam
    l = snap_l(5.0, g.h)
    rng = np.random.default_rng(3)
    f = np.zeros(g.n)
    for i, x in enumerate(g.xs):
        if abs(x) <= 1.0:
            f[i * g.Ny : (i + 1) * g.Ny] = rng.standard_normal(g.Ny)
    t7 = apply_T7(sp, sm, lam_star, l, f)
    phis = build_phi_vectors(sm, sp, l)

    def residual(delta):
        lam = lam_star + delta
        t6 = apply_T6(sp, sm, lam, l, f)
        proj = g.h**2 * float(sm.vectors[:, 0] @ f)
        # phi_1 carries the minus-side pole in its plus component
        correction = phis[0][1] * proj / (lam - lam_star)
        return weighted_norm(g, t6 + correction - t7)

    r1 = residual(1e-3)
    r2 = residual(2e-3)
    assert r2 / r1 == pytest.approx(2.0, rel=0.25)
    assert r1 < 1e-2 * weighted_norm(g, t7)


def test_phi_vector_families_and_norm_decay(pair_setup):
    g, sm, sp = pair_setup
    l1, l2 = snap_l(5.0, g.h), snap_l(6.0, g.h)
    phis1 = build_phi_vectors(sm, sp, l1)
    assert len(phis1) == 2
    # mirror wells: equal norms
    n_a = weighted_norm(g, phis1[0][1])
    n_b = weighted_norm(g, phis1[1][0])
    assert abs(n_a - n_b) / n_a < 1e-3
    s1 = np.sqrt(transverse_nu(D, 1) - sm.lam)
    phis2 = build_phi_vectors(sm, sp, l2)
    ratio = weighted_norm(g, phis2[0][1]) / n_a
    assert ratio == pytest.approx(np.exp(-2.0 * s1 * (l2 - l1)), rel=0.05)
    # one-sided family only
    zside = make_coupling_side(zero_spec(), g, "+", None)
    phis_one = build_phi_vectors(sm, zside, l1)
    assert len(phis_one) == 1
    assert np.abs(phis_one[0][0]).max() == 0.0


def test_coupling_matrix_offdiagonal_asymptotics(pair_setup):
    g, sm, sp = pair_setup
    s1 = np.sqrt(transverse_nu(D, 1) - sm.lam)
    l = snap_l(6.0, g.h)
    A = coupling_matrix(sm, sp, sm.lam, l)
    formula = 2.0 * s1 * sm.beta * sp.beta * np.exp(-2.0 * l * s1)
    # leading entry is negative for positive amplitudes: the lower root
    # pairs with the even combination
    assert A.entries[0, 1] < 0
    assert abs(A.entries[0, 1]) == pytest.approx(formula, rel=0.10)
    assert abs(A.entries[1, 0] - A.entries[0, 1]) < 1e-10 * abs(A.entries[0, 1])
    assert A.contraction < 0.5


def test_coupling_matrix_decays_with_separation(pair_setup):
    g, sm, sp = pair_setup
    A5 = coupling_matrix(sm, sp, sm.lam, snap_l(5.0, g.h))
    A7 = coupling_matrix(sm, sp, sm.lam, snap_l(7.0, g.h))
    assert np.abs(A7.entries).max() < np.abs(A5.entries).max() * np.exp(-1.5)


def test_exchange_symmetry(asym_setup):
    g, sm, sp, tuned = asym_setup
    l = snap_l(5.0, g.h)
    lam = 0.5 * (sm.lam + sp.lam)
    A = coupling_matrix(sm, sp, lam, l).entries
    # swap the two perturbations (mirror the geometry)
    sm2 = make_coupling_side(tuned, g, "-", None)
    sp2 = make_coupling_side(STD, g, "+", None)
    spec_m2 = limiting_spectrum(sm2.op, tuned, "-", g)
    spec_p2 = limiting_spectrum(sp2.op, STD, "+", g)
    sm2 = make_coupling_side(tuned, g, "-", spec_m2.groups[0])
    sp2 = make_coupling_side(STD, g, "+", spec_p2.groups[0])
    B = coupling_matrix(sm2, sp2, lam, l).entries
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.abs(B - P.T @ A.T @ P).max() < 5e-3 * np.abs(A).max()
    assert np.abs(np.sort(tau_roots(B)) - np.sort(tau_roots(A))).max() < \
        5e-3 * np.abs(tau_roots(A)).max()


def test_tau_roots_closed_forms():
    one = CouplingMatrix(lam_star=0.7, l=5.0, p_minus=1, p_plus=0,
                         entries=np.array([[3e-4]]), contraction=0.0)
    assert tau_roots(one) == pytest.approx([3e-4])
    two = CouplingMatrix(lam_star=0.7, l=5.0, p_minus=1, p_plus=1,
                         entries=np.array([[0.0, -2e-3], [-2e-3, 0.0]]),
                         contraction=0.0)
    roots = tau_roots(two)
    assert roots == pytest.approx([-2e-3, 2e-3])
    assert roots[0] < 0  # modulus tie broken by value


def test_tau_roots_p3_diagonal():
    A = CouplingMatrix(lam_star=0.0, l=4.0, p_minus=3, p_plus=0,
                       entries=np.diag([3e-3, -1e-3, 2e-3]), contraction=0.0)
    assert tau_roots(A) == pytest.approx([-1e-3, 2e-3, 3e-3], abs=1e-12)


def test_tau_roots_cap():
    big = CouplingMatrix(lam_star=0.0, l=4.0, p_minus=7, p_plus=0,
                         entries=np.eye(7), contraction=0.0)
    with pytest.raises(InvalidArgumentError):
        tau_roots(big)


def test_eigvec_coeffs_examples():
    one = CouplingMatrix(lam_star=0.7, l=5.0, p_minus=1, p_plus=0,
                         entries=np.array([[3e-4]]), contraction=0.0)
    (k,) = eigvec_coeffs(one, 0.7 + 3e-4)
    assert k == pytest.approx([1.0])
    c = -2e-3
    two = CouplingMatrix(lam_star=0.7, l=5.0, p_minus=1, p_plus=1,
                         entries=np.array([[0.0, c], [c, 0.0]]), contraction=0.0)
    (k_low,) = eigvec_coeffs(two, 0.7 + c)   # root -|c| with c<0: tau = c
    (k_high,) = eigvec_coeffs(two, 0.7 - c)
    assert np.abs(k_low - np.array([1.0, 1.0]) / np.sqrt(2)).max() < 1e-10
    assert np.abs(np.abs(k_high) - 1 / np.sqrt(2)).max() < 1e-10
    assert k_high[0] * k_high[1] < 0


def test_predict_matrix_and_ladder_agreement(pair_setup):
    g, sm, sp = pair_setup
    l = snap_l(5.0, g.h)
    A = coupling_matrix(sm, sp, sm.lam, l)
    pred = predict_thm_matrix(sm.lam, A)
    glad = StripGrid.build(D, H_TEST, l + 1.0 + max(8.0, 10.0 / 0.5))
    nu1h = discrete_nu(D, glad.h, 1)
    res = lowest_eigenpairs(assemble_double(glad, STD, STD, l), 4, nu1h - 0.05)
    gap = res.eigenvalues[1] - res.eigenvalues[0]
    for lam_pred, lam_direct in zip(sorted(pred.lambdas), res.eigenvalues):
        assert abs(lam_pred - lam_direct) < 0.05 * gap
    # k-vectors near-orthogonal
    assert abs(float(A.vectors[:, 0] @ A.vectors[:, 1])) < 0.05


def test_predictions_zero_matrix():
    A = CouplingMatrix(lam_star=0.71, l=6.0, p_minus=1, p_plus=1,
                       entries=np.zeros((2, 2)), contraction=0.0)
    A.roots = tau_roots(A)
    A.vectors = np.eye(2)
    pred = predict_thm_matrix(0.71, A)
    assert pred.lambdas == pytest.approx([0.71, 0.71])


def test_synthesize_mirror_even_function(pair_setup):
    g, sm, sp = pair_setup
    # exactly mirrored plus side: flip the minus eigenvector columns
    Ny = g.Ny
    mirrored = sm.vectors[:, 0].reshape(g.Nx, Ny)[::-1].ravel()
    sp_mirror = make_coupling_side(STD, g, "+", None)
    sp_mirror.vectors = mirrored[:, None]
    sp_mirror.lam = sm.lam
    l = snap_l(5.0, g.h)
    glad = StripGrid.build(D, H_TEST, l + 9.0)
    psi = synthesize_eigenfunction(np.array([1.0, 1.0]) / np.sqrt(2), sm,
                                   sp_mirror, l, glad)
    U = psi.reshape(glad.Nx, glad.Ny)
    assert np.abs(U - U[::-1]).max() < 1e-8 * np.abs(U).max()


def test_synthesize_p1_is_shifted_copy(pair_setup):
    g, sm, _ = pair_setup
    zside = make_coupling_side(zero_spec(), g, "+", None)
    l = snap_l(4.0, g.h)
    glad = StripGrid.build(D, H_TEST, l + 9.0)
    psi = synthesize_eigenfunction(np.array([1.0]), sm, zside, l, glad)
    col_t = glad.col_of(snap_l(-l + 2.0, g.h))
    col_s = g.col_of(snap_l(2.0, g.h))
    a = psi[col_t * glad.Ny : (col_t + 1) * glad.Ny]
    b = sm.vectors[col_s * g.Ny : (col_s + 1) * g.Ny, 0]
    # renormalization on the shorter grid shifts the amplitude by the lost
    # tail mass only (uniform ratio ~ 1 + 4e-5 here)
    ratio = np.abs(a) / np.abs(b)
    assert np.abs(ratio - ratio[0]).max() < 1e-10
    assert abs(ratio[0] - 1.0) < 1e-4


def test_synthesized_overlap_with_direct(pair_setup):
    g, sm, sp = pair_setup
    l = snap_l(6.0, g.h)
    A = coupling_matrix(sm, sp, sm.lam, l)
    glad = StripGrid.build(D, H_TEST, l + 1.0 + max(8.0, 10.0 / 0.5))
    nu1h = discrete_nu(D, glad.h, 1)
    res = lowest_eigenpairs(assemble_double(glad, STD, STD, l), 4, nu1h - 0.05)
    for i in range(2):
        psi = synthesize_eigenfunction(A.vectors[:, i], sm, sp, l, glad)
        overlap = abs(glad.h**2 * float(psi @ res.eigenvectors[:, i]))
        assert overlap > 0.99


def test_predict_two_sided_formulas():
    pred = predict_two_sided(0.75, 0.8, 0.8, 1.0, 6.0)
    assert pred.gap == pytest.approx(2.0 * 0.8**2 * np.exp(-6.0), rel=1e-12)
    assert 0.5 * (pred.lambdas[-1] + pred.lambdas[-2]) == pytest.approx(0.75)
    assert predict_two_sided(0.75, 0.0, 0.8, 1.0, 6.0).gap == 0.0
    g7 = predict_two_sided(0.75, 0.8, 0.8, 1.0, 7.0).gap
    assert g7 / pred.gap == pytest.approx(np.exp(-1.0), rel=1e-12)


def test_predict_one_sided_formulas():
    assert predict_one_sided(0.75, 0.9, 0.0, 1.0, 5.0).lambdas[-1] == 0.75
    pred = predict_one_sided(0.75, 1.0, 1.0, 1.0, 5.0)
    assert pred.lambdas[-1] - 0.75 == pytest.approx(-np.exp(-10.0), rel=1e-12)
    # positive coefficient pushes the level down in this convention
    assert pred.lambdas[-1] < 0.75


def test_shift_exceeding_grid_raises(pair_setup):
    g, sm, sp = pair_setup
    too_far = snap_l(0.45 * 2 * g.half_length, g.h)
    with pytest.raises(GeometryError):
        apply_T6(sp, sm, 0.5, too_far, np.ones(g.n))


def test_coupling_json_serialization(pair_setup):
    import json

    g, sm, sp = pair_setup
    l = snap_l(5.0, g.h)
    A = coupling_matrix(sm, sp, sm.lam, l)
    blob = json.dumps(A.to_json_dict(), sort_keys=True)
    back = json.loads(blob)
    assert back["p_minus"] == 1 and back["p_plus"] == 1
    assert back["entries"][0][1] == A.entries[0, 1]
    pred = predict_thm_matrix(sm.lam, A)
    pblob = json.loads(json.dumps(pred.to_json_dict()))
    assert pblob["method"] == "matrix-A"
    assert "exp(" in pblob["error_order"]
