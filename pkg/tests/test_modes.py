import numpy as np
import pytest

from wgspec.errors import InsufficientDataError, NearSingularError, UnstableExtractionError
from wgspec.eigensolve import lowest_eigenpairs, resolvent_solve, weighted_norm
from wgspec.modes import (
    DecayProfile,
    discrete_decay_rate,
    effective_rate,
    extract_amplitude,
    extract_beta,
    extract_beta_tilde,
    limiting_spectrum,
    mode_coefficients,
    mode_project,
    parseval_defect,
    rotate_eigenbasis,
    station_window,
    transverse_profile,
)
from wgspec.stripgrid import (
    StripGrid,
    assemble_double,
    assemble_laplacian,
    assemble_limiting,
    assemble_perturbation,
    square_well,
)
from wgspec.transverse import discrete_nu, transverse_nu

D = np.pi
STD_BETA_CONT = 0.755915454599


def test_mode_project_orthonormal_field(coarse_grid):
    g = coarse_grid
    u = np.tile(transverse_profile(g, 1), g.Nx)
    assert mode_project(u, g, 1, g.xs[3]) == pytest.approx(1.0, abs=1e-12)
    assert mode_project(u, g, 2, g.xs[3]) == pytest.approx(0.0, abs=1e-12)
    assert mode_project(np.zeros(g.n), g, 1, 0.0) == 0.0


def test_parseval_identity(coarse_spectrum, coarse_grid):
    _, spec = coarse_spectrum
    u = spec.groups[0].vectors[:, 0]
    for x1 in (0.0, 2.0, coarse_grid.xs[-4]):
        assert parseval_defect(u, coarse_grid, x1) < 1e-10


def test_eigenfunction_decay_slope(coarse_spectrum, coarse_grid):
    _, spec = coarse_spectrum
    g0 = spec.groups[0]
    rate = g0.profile.rate
    srate = discrete_decay_rate(coarse_grid, g0.lam, 1)
    assert abs(rate - srate) / srate < 0.01


def test_beta_against_separable_oracle(coarse_spectrum):
    # continuum amplitude is analytic for the full-width square well; at
    # h=0.2 the discrete well itself is only a few percent from it
    _, spec = coarse_spectrum
    beta = spec.groups[0].beta
    assert beta == pytest.approx(STD_BETA_CONT, rel=0.05)
    assert spec.groups[0].profile.plateau_dev < 0.01


def test_beta_mirror_symmetry(coarse_spectrum, coarse_grid, std_well):
    op, spec = coarse_spectrum
    res = lowest_eigenpairs(op, 2, spec.nu1_discrete - 0.05)
    lam = float(res.eigenvalues[0])
    bm, _ = extract_beta(res, lam, "-", coarse_grid, std_well.a)
    bp, _ = extract_beta(res, lam, "+", coarse_grid, std_well.a)
    assert abs(abs(bm) - abs(bp)) / abs(bm) < 1e-3


def test_beta_stability_window_and_truncation(std_well, coarse_spectrum, coarse_grid):
    _, spec = coarse_spectrum
    g0 = spec.groups[0]
    beta0 = g0.beta
    cols = station_window(coarse_grid, g0.lam, std_well.a, "-")
    for shift in (-2, 2):
        amp, _ = extract_amplitude(g0.vectors[:, 0], coarse_grid, g0.lam,
                                   std_well.a, "-", cols=cols + shift)
        assert abs(amp - beta0) / beta0 < 0.01
    # longer strip: amplitude moves by less than 1%
    g2 = StripGrid.build(D, 0.2, coarse_grid.half_length + 2.0)
    op2 = assemble_limiting(g2, std_well)
    spec2 = limiting_spectrum(op2, std_well, "-", g2)
    assert abs(spec2.groups[0].beta - beta0) / beta0 < 0.01


def synthetic_two_mode(grid, lam, beta0, c2):
    s1 = discrete_decay_rate(grid, lam, 1)
    s2 = discrete_decay_rate(grid, lam, 2)
    phi1 = transverse_profile(grid, 1)
    phi2 = transverse_profile(grid, 2)
    u = np.zeros(grid.n)
    for ix, x in enumerate(grid.xs):
        if x > 0:
            u[ix * grid.Ny : (ix + 1) * grid.Ny] = (
                beta0 * np.exp(-s1 * x) * phi1 + c2 * np.exp(-s2 * x) * phi2
            )
    return u


def test_synthetic_beta_recovery(coarse_grid):
    lam = 0.75
    u = synthetic_two_mode(coarse_grid, lam, beta0=0.8, c2=0.3)
    amp, prof = extract_amplitude(u, coarse_grid, lam, 1.0, "-")
    assert amp == pytest.approx(0.8, abs=1e-10)  # phi2 projects out exactly
    assert prof.plateau_dev < 1e-9


def test_rotation_p1_sign_convention(coarse_spectrum, coarse_grid, std_well):
    _, spec = coarse_spectrum
    u = spec.groups[0].vectors[:, 0]
    rotated, beta_ref = rotate_eigenbasis(-u[:, None], coarse_grid, "-",
                                          spec.groups[0].lam, std_well.a)
    assert beta_ref > 0
    amp, _ = extract_amplitude(rotated[:, 0], coarse_grid, spec.groups[0].lam,
                               std_well.a, "-")
    assert amp > 0


def test_rotation_concentrates_leading_amplitude(coarse_spectrum, coarse_grid, std_well):
    _, spec = coarse_spectrum
    g0 = spec.groups[0]
    psi = g0.vectors[:, 0]
    # contaminant with exactly zero leading-mode far field
    chi = synthetic_two_mode(coarse_grid, g0.lam, beta0=0.0, c2=1.0)
    chi -= psi * (coarse_grid.h**2 * float(psi @ chi))
    chi /= weighted_norm(coarse_grid, chi)
    theta = 0.93
    pair = np.column_stack([
        np.cos(theta) * psi + np.sin(theta) * chi,
        -np.sin(theta) * psi + np.cos(theta) * chi,
    ])
    rotated, beta_ref = rotate_eigenbasis(pair, coarse_grid, "-", g0.lam, std_well.a)
    amp1, _ = extract_amplitude(rotated[:, 0], coarse_grid, g0.lam, std_well.a, "-")
    amp2, _ = extract_amplitude(rotated[:, 1], coarse_grid, g0.lam, std_well.a, "-")
    assert abs(amp2) < 1e-8 * abs(amp1)
    gram = rotated.T @ rotated * coarse_grid.h**2
    assert np.abs(gram - np.eye(2)).max() < 1e-12


def test_rotation_synthetic_alpha_vector(coarse_grid):
    lam = 0.75
    g1 = synthetic_two_mode(coarse_grid, lam, beta0=1.0, c2=0.0)
    g2 = synthetic_two_mode(coarse_grid, lam, beta0=0.0, c2=1.0)
    c = 0.45
    pair = np.column_stack([0.6 * c * g1 + 0.2 * g2, 0.8 * c * g1 - 0.15 * g2])
    rotated, beta_ref = rotate_eigenbasis(pair, coarse_grid, "-", lam, 1.0)
    assert beta_ref == pytest.approx(1.0 * c, rel=1e-9)
    amp2, _ = extract_amplitude(rotated[:, 1], coarse_grid, lam, 1.0, "-")
    assert abs(amp2) < 1e-10


def test_extraction_policy_near_threshold(coarse_grid):
    u = np.zeros(coarse_grid.n)
    with pytest.raises(UnstableExtractionError):
        extract_beta(u, 0.97, "-", coarse_grid, 1.0)


def test_effective_rate_exact_exponential(coarse_grid):
    xs = coarse_grid.xs[coarse_grid.center_col + 5 :: 2][:8]
    prof = DecayProfile(
        mode_index=1,
        stations=xs,
        coefficients=np.exp(-0.5 * xs),
        weighted=np.ones_like(xs),
        amplitude=1.0,
        rate=0.5,
        plateau_dev=0.0,
    )
    assert effective_rate(prof) == pytest.approx(0.5, abs=1e-12)


def test_effective_rate_needs_three_stations():
    prof = DecayProfile(
        mode_index=1,
        stations=np.array([1.0, 2.0, 3.0]),
        coefficients=np.array([1e-15, 1e-16, 1e-17]),
        weighted=np.zeros(3),
        amplitude=0.0,
        rate=0.0,
        plateau_dev=0.0,
    )
    with pytest.raises(InsufficientDataError):
        effective_rate(prof)


def test_mixed_mode_rate_between_and_converging(coarse_grid):
    # a single-mode projection removes the other mode exactly, so the mixed
    # decay is probed through the transverse column norm
    g = coarse_grid
    lam = 0.7
    u = synthetic_two_mode(g, lam, beta0=0.3, c2=1.0).reshape(g.Nx, g.Ny)
    s1 = discrete_decay_rate(g, lam, 1)
    s2 = discrete_decay_rate(g, lam, 2)
    norms = np.sqrt(g.h * (u**2).sum(axis=1))

    def rate_over(sel):
        xs = g.xs[sel]
        prof = DecayProfile(mode_index=1, stations=xs, coefficients=norms[sel],
                            weighted=norms[sel], amplitude=1.0, rate=0.0,
                            plateau_dev=0.0)
        return effective_rate(prof)

    inner = np.nonzero((g.xs > 0.5) & (g.xs < 3.0))[0]
    outer = np.nonzero((g.xs > 7.0) & (g.xs < 12.0))[0]
    r_in = rate_over(inner)
    r_out = rate_over(outer)
    assert s1 < r_in < s2
    assert abs(r_out - s1) < abs(r_in - s1)


def test_resolvent_mode_source_decay(coarse_limiting, coarse_grid):
    # box-restricted leading-mode source: the far field then decays at the
    # resolvent's own rate (a full-line source at that rate is resonant and
    # picks up a secular |x| factor)
    op, res = coarse_limiting
    lam = 0.4  # below the bound state, away from everything
    s1 = discrete_decay_rate(coarse_grid, lam, 1)
    phi1 = transverse_profile(coarse_grid, 1)
    f = np.zeros(op.n)
    for ix, x in enumerate(coarse_grid.xs):
        if abs(x) <= 1.0:
            f[ix * coarse_grid.Ny : (ix + 1) * coarse_grid.Ny] = (
                np.exp(-s1 * abs(x)) * phi1)
    u = resolvent_solve(op, lam, f)
    cols = np.nonzero((coarse_grid.xs > 3.0) & (coarse_grid.xs < 9.0))[0]
    _, prof = extract_amplitude(u, coarse_grid, lam, 1.0, "-", cols=cols)
    assert abs(effective_rate(prof) - s1) / s1 < 0.01


def beta_tilde_setup(v_plus, a_plus=0.5):
    g = StripGrid.build(D, 0.2, 16.0)
    well = square_well(-0.6768, a=1.0)
    op_m = assemble_limiting(g, well)
    nu1h = discrete_nu(D, g.h, 1)
    lam = float(lowest_eigenpairs(op_m, 2, nu1h - 0.05).eigenvalues[0])
    bump = square_well(v_plus, a=a_plus)
    op_p = assemble_limiting(g, bump)
    bt, prof = extract_beta_tilde(op_p, bump, lam, g, side="-")
    return g, well, bump, lam, bt


def test_beta_tilde_zero_perturbation():
    g = StripGrid.build(D, 0.2, 14.0)
    from wgspec.stripgrid import zero_spec

    well = square_well(-0.6768, a=1.0)
    op_m = assemble_limiting(g, well)
    nu1h = discrete_nu(D, g.h, 1)
    lam = float(lowest_eigenpairs(op_m, 2, nu1h - 0.05).eigenvalues[0])
    z = zero_spec()
    op0 = assemble_limiting(g, z)
    bt, _ = extract_beta_tilde(op0, z, lam, g, side="-")
    assert bt == 0.0


@pytest.mark.parametrize("v_plus,expect_up", [(0.3, True), (-0.05, False)])
def test_beta_tilde_sign_against_direct_ladder(v_plus, expect_up):
    g, well, bump, lam, bt = beta_tilde_setup(v_plus)
    # direct one-sided pair at moderate separation
    l = round(3.5 / g.h) * g.h
    op = assemble_laplacian(g).plus(assemble_perturbation(g, well, -l)).plus(
        assemble_perturbation(g, bump, +l))
    nu1h = discrete_nu(D, g.h, 1)
    res = lowest_eigenpairs(op, 2, nu1h - 0.05)
    shift = float(res.eigenvalues[0]) - lam
    assert (shift > 0) == expect_up
    # returned convention: level moves opposite to the coefficient sign
    assert np.sign(shift) == -np.sign(bt)


def test_beta_tilde_linearity_in_payload():
    # first-order region: doubling a weak payload doubles the coefficient
    _, _, _, lam, bt1 = beta_tilde_setup(0.02)
    _, _, _, _, bt2 = beta_tilde_setup(0.01)
    assert bt1 / bt2 == pytest.approx(2.0, rel=0.01)


def test_beta_tilde_requires_regular_other_side(std_well):
    g = StripGrid.build(D, 0.2, 14.0)
    op = assemble_limiting(g, std_well)
    nu1h = discrete_nu(D, g.h, 1)
    lam = float(lowest_eigenpairs(op, 2, nu1h - 0.05).eigenvalues[0])
    with pytest.raises(NearSingularError):
        extract_beta_tilde(op, std_well, lam, g, side="-")
