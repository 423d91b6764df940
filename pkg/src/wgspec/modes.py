"""Mode projection, far-field amplitude extraction and decay-rate fits.

Transverse projections use the sampled sine modes, which are exactly the
eigenvectors of the discrete transverse matrix, so the per-station Parseval
identity holds to roundoff.  Far-field weights remove the *discrete* decay
rate of the grid (acosh form), which agrees with sqrt(nu_j - lam) to O(h^2)
but keeps amplitude plateaus flat even on coarse test grids.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GeometryError,
    InsufficientDataError,
    NearSingularError,
    UnstableExtractionError,
)
from .eigensolve import ResolventSolver, lowest_eigenpairs
from .stripgrid import assemble_perturbation
from .transverse import discrete_nu, transverse_nu

GAP_MIN_FRACTION = 0.05  # reject extraction when nu1 - lam < 0.05 nu1
PLATEAU_LIMIT = 0.05
NOISE_FLOOR = 1e-12


def transverse_profile(grid, j):
    """Sampled phi_j; exactly the discrete transverse eigenvector."""
    return np.sqrt(2.0 / grid.d) * np.sin(j * np.pi * grid.ys / grid.d)


def discrete_decay_rate(grid, lam, j=1):
    """Decay rate of mode j for the 5-point operator at energy lam."""
    nu_h = discrete_nu(grid.d, grid.h, j)
    if lam >= nu_h:
        raise GeometryError(f"lam={lam} not below the discrete mode threshold {nu_h}")
    return float(np.arccosh(1.0 + grid.h**2 * (nu_h - lam) / 2.0) / grid.h)


def mode_project(u, grid, j, x1):
    """Transverse quadrature of u(x1, .) against phi_j at one station."""
    col = grid.col_of(x1, snap=True)
    ucol = np.asarray(u)[col * grid.Ny : (col + 1) * grid.Ny]
    return grid.h * float(ucol @ transverse_profile(grid, j))


def mode_coefficients(u, grid, j):
    """alpha_j at every column, as a vector over columns."""
    U = np.asarray(u).reshape(grid.Nx, grid.Ny)
    return grid.h * (U @ transverse_profile(grid, j))


def parseval_defect(u, grid, x1):
    """|sum_j alpha_j^2 - ||u(x1,.)||^2| at one station (roundoff-level)."""
    col = grid.col_of(x1, snap=True)
    ucol = np.asarray(u)[col * grid.Ny : (col + 1) * grid.Ny]
    total = 0.0
    for j in range(1, grid.Ny + 1):
        total += (grid.h * float(ucol @ transverse_profile(grid, j))) ** 2
    return abs(total - grid.h * float(ucol @ ucol))


@dataclass
class DecayProfile:
    """Far-field record: stations, projections, weighted amplitudes, fit."""

    mode_index: int
    stations: np.ndarray
    coefficients: np.ndarray
    weighted: np.ndarray = field(repr=False)
    amplitude: float
    rate: float
    plateau_dev: float

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", f"alpha_{self.mode_index}", "weighted_amplitude"])
            for x, c, a in zip(self.stations, self.coefficients, self.weighted):
                w.writerow([repr(x), repr(c), repr(a)])


def station_window(grid, lam, a, side):
    """Columns of the extraction window [a + 2/s2, X - 4/s1] on the decay side."""
    nu1 = transverse_nu(grid.d, 1)
    nu2 = transverse_nu(grid.d, 2)
    s1 = np.sqrt(nu1 - lam)
    s2 = np.sqrt(nu2 - lam)
    lo = a + 2.0 / s2
    hi = grid.half_length - 4.0 / s1
    if hi <= lo:
        raise GeometryError(
            f"no station window: [{lo:.2f}, {hi:.2f}] empty (grid too short)"
        )
    xs = grid.xs
    if side == "-":
        sel = np.nonzero((xs >= lo) & (xs <= hi))[0]
    else:
        sel = np.nonzero((xs <= -lo) & (xs >= -hi))[0]
    if len(sel) < 3:
        raise GeometryError("fewer than 3 stations in the extraction window")
    return sel


def extract_amplitude(u, grid, lam, a, side, mode=1, cols=None):
    """Signed far-field amplitude of e^{-s|x1|} phi_mode in u, with profile.

    side '-' reads the decay at positive x1, side '+' at negative x1.  The
    weighted amplitudes alpha(x) e^{+s|x|} form the plateau; the median is
    returned and the max relative spread recorded.  ``cols`` overrides the
    default station window (stability sweeps).
    """
    if cols is None:
        cols = station_window(grid, lam, a, side)
    xs = grid.xs[cols]
    alphas = mode_coefficients(u, grid, mode)[cols]
    srate = discrete_decay_rate(grid, lam, mode)
    weighted = alphas * np.exp(srate * np.abs(xs))
    amp = float(np.median(weighted))
    if abs(amp) < NOISE_FLOOR:
        amp = 0.0
        dev = 0.0
    else:
        dev = float(np.max(np.abs(weighted - amp)) / abs(amp))
    usable = np.abs(alphas) > 1e-13
    if usable.sum() >= 3:
        slope = np.polyfit(xs[usable], np.log(np.abs(alphas[usable])), 1)[0]
        rate = float(-slope) if side == "-" else float(slope)
    else:
        rate = float("nan")
    profile = DecayProfile(
        mode_index=mode,
        stations=xs,
        coefficients=alphas,
        weighted=weighted,
        amplitude=amp,
        rate=rate,
        plateau_dev=dev,
    )
    return amp, profile


def effective_rate(profile):
    """Least-squares decay rate from a profile (positive for decay)."""
    usable = np.abs(profile.coefficients) > 1e-13
    if usable.sum() < 3:
        raise InsufficientDataError(
            f"only {int(usable.sum())} usable stations, need at least 3"
        )
    xs = profile.stations[usable]
    slope = np.polyfit(xs, np.log(np.abs(profile.coefficients[usable])), 1)[0]
    return float(-slope) if xs[0] >= 0 else float(slope)


def rotate_eigenbasis(Psi, grid, side, lam, a):
    """Rotate a degenerate eigenbasis so only the first vector carries the
    leading-mode far field; returns (rotated basis, reference amplitude).

    The reference amplitude is the weighted alpha_1 at the mid-window
    station; the rotation fixes its sign nonnegative.
    """
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    if Psi.shape[0] != grid.n:
        Psi = Psi.T
    p = Psi.shape[1]
    cols = station_window(grid, lam, a, side)
    ref = cols[len(cols) // 2]
    x_ref = grid.xs[ref]
    srate = discrete_decay_rate(grid, lam, 1)
    w = np.exp(srate * abs(x_ref))
    avec = np.array([mode_project(Psi[:, i], grid, 1, x_ref) * w for i in range(p)])
    norm_a = float(np.linalg.norm(avec))
    if norm_a < NOISE_FLOOR:
        return Psi.copy(), 0.0
    ahat = avec / norm_a
    v = ahat - np.eye(p)[0]
    if np.linalg.norm(v) < 1e-14:
        R = np.eye(p)
    else:
        R = np.eye(p) - 2.0 * np.outer(v, v) / float(v @ v)
    return Psi @ R, norm_a


def extract_beta(result, lam, side, grid, a, index=0):
    """Leading-mode far-field amplitude of an eigenvector of the limiting
    operator, from the plateau of the weighted projections.

    The eigenvector is assumed rotated (see rotate_eigenbasis); policy
    rejects eigenvalues closer to the threshold than 5% of nu1.
    """
    nu1 = transverse_nu(grid.d, 1)
    if nu1 - lam < GAP_MIN_FRACTION * nu1:
        raise UnstableExtractionError(
            f"lam={lam} within {GAP_MIN_FRACTION:.0%} of the threshold; "
            "far-field too slow to separate at desk scale"
        )
    u = result.eigenvectors[:, index] if hasattr(result, "eigenvectors") else result
    amp, profile = extract_amplitude(u, grid, lam, a, side)
    if amp != 0.0 and profile.plateau_dev > PLATEAU_LIMIT:
        raise UnstableExtractionError(
            f"plateau deviation {profile.plateau_dev:.1%} exceeds {PLATEAU_LIMIT:.0%}"
        )
    return amp, profile


def extract_beta_tilde(op_other, spec_other, lam, grid, side="-"):
    """Far-field coefficient of the resolvent correction on the other side.

    Builds the leading decaying field of the side carrying the eigenvalue,
    applies the other side's perturbation, solves that side's resolvent at
    lam, and reads the far-side amplitude.  The returned value carries the
    sign convention under which the one-sided level shift is
    -2 s1 beta^2 btilde e^{-4 l s1} (verified against direct solves), i.e.
    it is the negative of the raw far-field amplitude.
    """
    nu1 = transverse_nu(grid.d, 1)
    s1 = discrete_decay_rate(grid, lam, 1)
    phi1 = transverse_profile(grid, 1)
    xs = grid.xs
    # incident tail, nonzero only where the perturbation can read it
    g = np.zeros(grid.n)
    reach = spec_other.a + 2.0 * grid.h
    for ix in range(grid.Nx):
        if abs(xs[ix]) <= reach:
            decay = np.exp(-s1 * xs[ix]) if side == "-" else np.exp(s1 * xs[ix])
            g[ix * grid.Ny : (ix + 1) * grid.Ny] = decay * phi1
    pert = assemble_perturbation(grid, spec_other, 0.0)
    rhs = pert.matvec(g)
    try:
        solver = ResolventSolver(op_other, lam)
    except NearSingularError as exc:
        raise NearSingularError(
            "lam lies in the other side's spectrum; the one-sided shift "
            "formula does not apply (deflated variant out of scope)"
        ) from exc
    U = solver.solve(rhs)
    far_side = "+" if side == "-" else "-"
    amp, profile = extract_amplitude(U, grid, lam, spec_other.a, far_side)
    if amp != 0.0 and profile.plateau_dev > PLATEAU_LIMIT:
        raise UnstableExtractionError(
            f"correction-field plateau deviation {profile.plateau_dev:.1%}"
        )
    return -amp, profile


@dataclass
class EigenGroup:
    """One limiting eigenvalue with its rotated eigenspace and amplitudes."""

    lam: float
    vectors: np.ndarray = field(repr=False)
    beta: float | None
    profile: DecayProfile | None
    residuals: np.ndarray
    beta_tilde: float | None = None

    @property
    def multiplicity(self):
        return self.vectors.shape[1]


@dataclass
class LimitingSpectrum:
    """Discrete spectrum of one single-perturbation operator below nu1."""

    side: str
    groups: list
    nu1_discrete: float
    meta: dict = field(default_factory=dict)

    @property
    def eigenvalues(self):
        return [g.lam for g in self.groups]


def limiting_spectrum(op, spec, side, grid, k_max=8, ceiling=None, seed=None,
                      group_tol=1e-8):
    """Solve one limiting operator and package the rotated groups with betas."""
    nu1h = discrete_nu(grid.d, grid.h, 1)
    if ceiling is None:
        ceiling = nu1h - GAP_MIN_FRACTION * transverse_nu(grid.d, 1)
    kwargs = {} if seed is None else {"seed": seed}
    result = lowest_eigenpairs(op, k_max, ceiling, **kwargs)
    groups = []
    i = 0
    lam = result.eigenvalues
    while i < result.count:
        j = i + 1
        while j < result.count and lam[j] - lam[i] <= group_tol * (1.0 + abs(lam[i])):
            j += 1
        lam_g = float(np.mean(lam[i:j]))
        Psi = result.eigenvectors[:, i:j]
        rotated, _ = rotate_eigenbasis(Psi, grid, side, lam_g, spec.a)
        beta = profile = None
        try:
            beta, profile = extract_beta(rotated[:, 0], lam_g, side, grid, spec.a)
        except UnstableExtractionError as exc:
            warnings.warn(f"beta extraction skipped at lam={lam_g:.6f}: {exc}",
                          stacklevel=2)
        groups.append(
            EigenGroup(
                lam=lam_g,
                vectors=rotated,
                beta=beta,
                profile=profile,
                residuals=result.residuals[i:j],
            )
        )
        i = j
    return LimitingSpectrum(
        side=side,
        groups=groups,
        nu1_discrete=nu1h,
        meta={"ceiling": ceiling, "solver": dict(result.meta)},
    )
