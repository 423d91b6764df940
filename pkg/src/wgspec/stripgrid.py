"""Truncated-strip finite differences and assembly of the perturbed operators.

Nodes are ordered column-major (transverse index fastest), so the 5-point
Laplacian has bandwidth Ny.  Operators store the lower band by column,
``band[j, i] = A[j+i, j]``, plus optional dense blocks for integral-kind
couplings on the support box.  All assembled operators are symmetric by
construction (only the lower triangle is ever stored).

Payload samples are taken at node centers using integer column arithmetic
relative to the perturbation center, so translating a perturbation together
with its grid reproduces the matrix bit for bit.
"""

import csv
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryError, InvalidArgumentError, PayloadValidationError


@dataclass(frozen=True)
class StripGrid:
    """Uniform grid on (-X, X) x (0, d) with Dirichlet boundary eliminated."""

    d: float
    h: float
    half_length: float
    Nx: int
    Ny: int

    @classmethod
    def build(cls, d, h_target, X_target):
        """Choose Ny so (Ny+1) h = d exactly and an odd Nx near 2X/h.

        Odd Nx keeps the column set symmetric about 0 with a column at 0,
        which makes grid reflection an exact node permutation.
        """
        if d <= 0 or h_target <= 0 or X_target <= 0:
            raise InvalidArgumentError("d, h and X must be positive")
        Ny = int(round(d / h_target)) - 1
        if Ny < 1:
            raise InvalidArgumentError(f"spacing {h_target} too coarse for width {d}")
        h = d / (Ny + 1)
        Nx = int(round(2.0 * X_target / h)) - 1
        if Nx % 2 == 0:
            Nx += 1
        Nx = max(Nx, 1)
        X = (Nx + 1) * h / 2.0
        return cls(d=d, h=h, half_length=X, Nx=Nx, Ny=Ny)

    @property
    def n(self):
        return self.Nx * self.Ny

    @property
    def xs(self):
        """Column abscissas, antisymmetric bit for bit (middle column at 0)."""
        half = self.Nx // 2
        right = self.h * np.arange(1, half + 1)
        return np.concatenate([-right[::-1], [0.0], right])

    @property
    def ys(self):
        return self.h * np.arange(1, self.Ny + 1)

    @property
    def center_col(self):
        return self.Nx // 2

    def col_of(self, x, snap=False):
        """Column index of the abscissa x; exact unless snap=True."""
        i = int(round(x / self.h)) + self.center_col
        if i < 0 or i >= self.Nx:
            raise GeometryError(f"x={x} outside the strip (+-{self.half_length})")
        if abs(self.xs[i] - x) > 1e-9 * max(1.0, abs(x)):
            if not snap:
                raise GeometryError(f"x={x} does not lie on a grid column")
            warnings.warn(f"station {x} snapped to column at {self.xs[i]}", stacklevel=2)
        return i

    def node(self, ix, iy):
        return ix * self.Ny + iy


@dataclass(frozen=True)
class PerturbationSpec:
    """Compactly supported symmetric perturbation on (-a, a) x (0, d).

    kind is one of 'potential', 'divergence', 'delta_line', 'integral';
    params carries the JSON-able family description and scale multiplies the
    payload (used by depth tuning).  Divergence payloads add the energy form
    integral(G grad u . grad v) + integral(b0 u v); first-order terms are out
    of scope and not represented.
    """

    kind: str
    a: float
    params: dict
    scale: float = 1.0

    def scaled(self, t):
        return replace(self, scale=self.scale * t)

    def to_config(self):
        out = {"kind": self.kind, "a": self.a, "params": dict(self.params)}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


def square_well(depth, a=1.0):
    return PerturbationSpec(kind="potential", a=a, params={"family": "square", "depth": depth})


def gaussian_well(depth, a=1.0, sigma=None):
    sigma = a / 2.5 if sigma is None else sigma
    return PerturbationSpec(
        kind="potential", a=a, params={"family": "gaussian", "depth": depth, "sigma": sigma}
    )


def cosine_well(depth, a=1.0):
    """depth * cos^2(pi x / 2a) profile; C^1 at the support edge, so node
    sampling keeps the full second-order accuracy."""
    return PerturbationSpec(kind="potential", a=a, params={"family": "cosine", "depth": depth})


def potential_table(x1, x2, value, a):
    """Potential sampled on nodes, as loaded from CSV (columns x1, x2, value)."""
    return PerturbationSpec(
        kind="potential",
        a=a,
        params={
            "family": "table",
            "x1": [float(v) for v in x1],
            "x2": [float(v) for v in x2],
            "value": [float(v) for v in value],
        },
    )


def potential_from_csv(path, a):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise PayloadValidationError(f"{path}: empty payload table")
    try:
        x1 = [float(r["x1"]) for r in rows]
        x2 = [float(r["x2"]) for r in rows]
        value = [float(r["value"]) for r in rows]
    except KeyError as exc:
        raise PayloadValidationError(f"{path}: missing column {exc}") from exc
    return potential_table(x1, x2, value, a)


def delta_line(strength, a=0.5, station=0.0):
    """Transverse delta segment of constant strength at |x1 - center| = station."""
    if not -a < station < a:
        raise InvalidArgumentError(f"station {station} outside (-{a}, {a})")
    return PerturbationSpec(
        kind="delta_line", a=a, params={"family": "flat", "strength": strength, "station": station}
    )


def divergence_iso(g, a=1.0, b0=0.0, gxy=0.0):
    """Isotropic coefficient field G = g*I (plus optional constant g12) on the box."""
    return PerturbationSpec(
        kind="divergence", a=a, params={"family": "iso", "g": g, "b0": b0, "gxy": gxy}
    )


def integral_rank1(amplitude, a=1.0, sigma=None):
    """Separable kernel L(x, y) = amplitude * w(x) w(y), w a transverse-weighted bump."""
    sigma = a / 2.0 if sigma is None else sigma
    return PerturbationSpec(
        kind="integral", a=a, params={"family": "rank1", "amplitude": amplitude, "sigma": sigma}
    )


def zero_spec(a=1.0):
    return PerturbationSpec(kind="potential", a=a, params={"family": "square", "depth": 0.0})


def spec_from_config(cfg):
    kind = cfg.get("kind")
    if kind is None:
        raise PayloadValidationError("perturbation entry lacks 'kind'")
    if "csv" in cfg:
        return potential_from_csv(cfg["csv"], float(cfg["a"]))
    spec = PerturbationSpec(
        kind=kind, a=float(cfg["a"]), params=dict(cfg["params"]), scale=float(cfg.get("scale", 1.0))
    )
    _payload_check(spec)
    return spec


def _payload_check(spec):
    fam = spec.params.get("family")
    known = {
        "potential": {"square", "gaussian", "cosine", "table"},
        "delta_line": {"flat", "table"},
        "divergence": {"iso"},
        "integral": {"rank1"},
    }
    if spec.kind not in known:
        raise PayloadValidationError(f"unknown perturbation kind {spec.kind!r}")
    if fam not in known[spec.kind]:
        raise PayloadValidationError(f"unknown {spec.kind} family {fam!r}")


def _potential_values(spec, relx, y):
    """Sample the potential at relative abscissa relx and transverse y."""
    p = spec.params
    fam = p["family"]
    if fam == "square":
        v = p["depth"] if abs(relx) <= spec.a + 1e-12 else 0.0
        return np.full_like(y, v * spec.scale)
    if fam == "gaussian":
        if abs(relx) > spec.a + 1e-12:
            return np.zeros_like(y)
        v = p["depth"] * np.exp(-(relx * relx) / (2.0 * p["sigma"] ** 2))
        return np.full_like(y, v * spec.scale)
    if fam == "cosine":
        if abs(relx) > spec.a + 1e-12:
            return np.zeros_like(y)
        v = p["depth"] * np.cos(np.pi * relx / (2.0 * spec.a)) ** 2
        return np.full_like(y, v * spec.scale)
    if fam == "table":
        x1 = np.asarray(p["x1"])
        x2 = np.asarray(p["x2"])
        val = np.asarray(p["value"])
        out = np.zeros_like(y)
        sel = np.abs(x1 - relx) <= 1e-9
        for xx2, vv in zip(x2[sel], val[sel]):
            j = np.argmin(np.abs(y - xx2))
            if abs(y[j] - xx2) > 1e-9:
                raise PayloadValidationError(f"table point x2={xx2} not on the grid")
            out[j] = vv * spec.scale
        return out
    raise PayloadValidationError(f"unknown potential family {fam!r}")


@dataclass
class DiscreteOperator:
    """Symmetric operator: banded part plus optional dense support-box blocks."""

    grid: StripGrid
    band: np.ndarray = field(repr=False)
    blocks: list = field(default_factory=list, repr=False)

    @property
    def n(self):
        return self.band.shape[0]

    @property
    def bandwidth(self):
        return self.band.shape[1] - 1

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        y = self.band[:, 0] * x
        n = self.n
        for i in range(1, self.bandwidth + 1):
            c = self.band[: n - i, i]
            y[i:] += c * x[: n - i]
            y[: n - i] += c * x[i:]
        for idx, M in self.blocks:
            y[idx] += M @ x[idx]
        return y

    def to_dense(self):
        n = self.n
        A = np.zeros((n, n))
        for i in range(self.bandwidth + 1):
            c = self.band[: n - i, i]
            A[np.arange(i, n), np.arange(n - i)] += c
            if i:
                A[np.arange(n - i), np.arange(i, n)] += c
        for idx, M in self.blocks:
            A[np.ix_(idx, idx)] += M
        return A

    def plus(self, other):
        """Sum with another operator on the same grid (band widths may differ)."""
        if other.grid.n != self.grid.n:
            raise InvalidArgumentError("operators live on different grids")
        bw = max(self.bandwidth, other.bandwidth)
        band = np.zeros((self.n, bw + 1))
        band[:, : self.bandwidth + 1] += self.band
        band[:, : other.bandwidth + 1] += other.band
        return DiscreteOperator(grid=self.grid, band=band, blocks=self.blocks + other.blocks)


def assemble_laplacian(grid):
    """Standard 5-point negative Laplacian with Dirichlet boundary eliminated."""
    n, Ny = grid.n, grid.Ny
    inv_h2 = 1.0 / grid.h**2
    band = np.zeros((n, Ny + 1))
    band[:, 0] = 4.0 * inv_h2
    sub_y = np.full(n, -inv_h2)
    sub_y[Ny - 1 :: Ny] = 0.0  # no coupling across column boundaries
    band[: n - 1, 1] = sub_y[: n - 1]
    band[: n - Ny, Ny] = -inv_h2
    return DiscreteOperator(grid=grid, band=band)


def _center_split(grid, center):
    """Nearest column and fractional remainder of the perturbation center."""
    i_c = int(round(center / grid.h)) + grid.center_col
    if i_c < 0 or i_c >= grid.Nx:
        raise GeometryError(f"center {center} outside the strip")
    frac = center - grid.xs[i_c]
    return i_c, frac


def _box_columns(grid, center, a, halo=0):
    i_c, frac = _center_split(grid, center)
    reach = int(np.floor((a + abs(frac)) / grid.h + 1e-12)) + 1 + halo
    lo = max(0, i_c - reach)
    hi = min(grid.Nx - 1, i_c + reach)
    cols = []
    for i in range(lo, hi + 1):
        relx = grid.h * (i - i_c) - frac
        if abs(relx) <= a + 1e-12 + halo * grid.h:
            cols.append((i, relx))
    return i_c, frac, cols


def assemble_perturbation(grid, spec, center=0.0):
    """Assemble one localized perturbation centered at ``center``.

    The support box must sit inside the strip with at least one transverse
    width of clearance to the Dirichlet ends.
    """
    _payload_check(spec)
    if abs(center) + spec.a + grid.d > grid.half_length + 1e-12:
        raise GeometryError(
            f"support box |x-{center}| <= {spec.a} too close to the truncation ends"
        )
    n, Ny = grid.n, grid.Ny
    ys = grid.ys
    i_c, frac, cols = _box_columns(grid, center, spec.a)

    if spec.kind == "potential":
        band = np.zeros((n, 1))
        for i, relx in cols:
            band[i * Ny : (i + 1) * Ny, 0] = _potential_values(spec, relx, ys)
        return DiscreteOperator(grid=grid, band=band)

    if spec.kind == "delta_line":
        p = spec.params
        station = center + p["station"]
        j = grid.col_of(station, snap=True)
        band = np.zeros((n, 1))
        if p["family"] == "flat":
            bvals = np.full(Ny, p["strength"] * spec.scale)
        else:
            bvals = np.asarray(p["values"], dtype=float) * spec.scale
            if bvals.shape != (Ny,):
                raise PayloadValidationError("delta profile length must equal Ny")
        # form-consistent lumping of the line integral against the h^2 cell
        band[j * Ny : (j + 1) * Ny, 0] = bvals / grid.h
        return DiscreteOperator(grid=grid, band=band)

    if spec.kind == "divergence":
        return _assemble_divergence(grid, spec, i_c, frac, cols)

    if spec.kind == "integral":
        return _assemble_integral(grid, spec, cols)

    raise PayloadValidationError(f"unknown perturbation kind {spec.kind!r}")


def _iso_g(spec, relx):
    if abs(relx) > spec.a + 1e-12:
        return 0.0
    return spec.params["g"] * spec.scale


def _assemble_divergence(grid, spec, i_c, frac, cols):
    """Energy form sum_edges g (du/h)^2 h^2 + cross-cell g12 terms + b0 mass."""
    n, Ny = grid.n, grid.Ny
    inv_h2 = 1.0 / grid.h**2
    p = spec.params
    gxy = p.get("gxy", 0.0) * spec.scale
    bw = Ny + 1 if gxy != 0.0 else Ny
    band = np.zeros((n, bw + 1))
    col_ids = {i for i, _ in cols}

    for i, relx in cols:
        g_here = _iso_g(spec, relx)
        rows = slice(i * Ny, (i + 1) * Ny)
        # y-edges inside the column (midpoint shares the column's relx)
        if g_here != 0.0:
            for iy in range(Ny - 1):
                k = i * Ny + iy
                band[k, 0] += g_here * inv_h2
                band[k + 1, 0] += g_here * inv_h2
                band[k, 1] -= g_here * inv_h2
            # boundary half-edges (Dirichlet neighbors eliminated)
            band[i * Ny, 0] += g_here * inv_h2
            band[i * Ny + Ny - 1, 0] += g_here * inv_h2
        # x-edges to the right neighbor, coefficient at the edge midpoint
        g_edge = _iso_g(spec, relx + grid.h / 2.0)
        if g_edge != 0.0 and i + 1 < grid.Nx:
            for iy in range(Ny):
                k = i * Ny + iy
                band[k, 0] += g_edge * inv_h2
                band[k + Ny, 0] += g_edge * inv_h2
                band[k, Ny] -= g_edge * inv_h2
        # left boundary edge of the box
        g_left = _iso_g(spec, relx - grid.h / 2.0)
        if g_left != 0.0 and i - 1 >= 0 and (i - 1) not in col_ids:
            for iy in range(Ny):
                k = i * Ny + iy
                band[k, 0] += g_left * inv_h2
                band[k - Ny, 0] += g_left * inv_h2
                band[k - Ny, Ny] -= g_left * inv_h2
        if p.get("b0", 0.0):
            b0 = p["b0"] * spec.scale if abs(relx) <= spec.a else 0.0
            band[rows, 0] += b0
        if gxy != 0.0 and i + 1 < grid.Nx:
            g12 = gxy if abs(relx + grid.h / 2.0) <= spec.a else 0.0
            if g12 != 0.0:
                half = 0.5 * g12 * inv_h2
                for iy in range(Ny - 1):
                    # cell corners (i,iy),(i,iy+1),(i+1,iy),(i+1,iy+1) with
                    # corner-difference gradients; Hessian of 2 g12 ux uy
                    k = i * Ny + iy
                    band[k, 0] += half
                    band[k + 1, 0] -= half
                    band[k + Ny, 0] -= half
                    band[k + Ny + 1, 0] += half
                    band[k, Ny + 1] -= half
                    band[k + 1, Ny - 1] += half
    return DiscreteOperator(grid=grid, band=band)


def _assemble_integral(grid, spec, cols):
    n, Ny = grid.n, grid.Ny
    ys = grid.ys
    idx = []
    pts = []
    for i, relx in cols:
        for iy in range(Ny):
            idx.append(i * Ny + iy)
            pts.append((relx, ys[iy]))
    idx = np.asarray(idx, dtype=np.intp)
    pts = np.asarray(pts)
    m = len(idx)
    p = spec.params
    if p["family"] == "rank1":
        w = (
            np.exp(-(pts[:, 0] ** 2) / (2.0 * p["sigma"] ** 2))
            * np.sin(np.pi * pts[:, 1] / grid.d)
        )
        kern = (p["amplitude"] * spec.scale) * np.outer(w, w)
    else:
        raise PayloadValidationError(f"unknown kernel family {p['family']!r}")
    asym = np.abs(kern - kern.T).max()
    if asym > 1e-12 * max(1.0, np.abs(kern).max()):
        raise PayloadValidationError("integral kernel is not symmetric")
    kern = np.tril(kern) + np.tril(kern, -1).T  # bitwise symmetric storage
    M = grid.h**2 * kern
    band = np.zeros((n, 1))
    return DiscreteOperator(grid=grid, band=band, blocks=[(idx, M)])


def assemble_limiting(grid, spec):
    """Laplacian plus one perturbation centered at 0."""
    return assemble_laplacian(grid).plus(assemble_perturbation(grid, spec, 0.0))


def assemble_double(grid, spec_minus, spec_plus, l):
    """Laplacian plus spec_minus at -l and spec_plus at +l."""
    if l < spec_minus.a + spec_plus.a:
        raise GeometryError(
            f"separation l={l} below the support sum {spec_minus.a + spec_plus.a}"
        )
    if l + max(spec_minus.a, spec_plus.a) + grid.d > grid.half_length + 1e-12:
        raise GeometryError("strip too short for the requested separation")
    op = assemble_laplacian(grid)
    op = op.plus(assemble_perturbation(grid, spec_minus, -l))
    op = op.plus(assemble_perturbation(grid, spec_plus, +l))
    return op


def box_dirichlet_gradient(grid, spec, center=0.0):
    """Dense Dirichlet gradient form K on the support box (all sides clamped)."""
    _, _, cols = _box_columns(grid, center, spec.a)
    Ny = grid.Ny
    ncols = len(cols)
    m = ncols * Ny
    inv_h2 = 1.0 / grid.h**2
    K = np.zeros((m, m))
    for ci in range(ncols):
        for iy in range(Ny):
            k = ci * Ny + iy
            K[k, k] = 4.0 * inv_h2
            if iy + 1 < Ny:
                K[k, k + 1] = K[k + 1, k] = -inv_h2
            if ci + 1 < ncols:
                K[k, k + Ny] = K[k + Ny, k] = -inv_h2
    return K


def check_form_bound(spec, grid, center=0.0):
    """Diagnostic estimate of the relative form bound of a perturbation.

    Returns (c0_est, c1_est), both max(0, -mu) for the smallest generalized
    eigenvalue mu of L u = mu (K + I) u on the support box.  Emits a warning
    when the estimate reaches the admissibility limit 1.
    """
    _payload_check(spec)
    pert = assemble_perturbation(grid, spec, center)
    _, _, cols = _box_columns(grid, center, spec.a)
    Ny = grid.Ny
    idx = np.concatenate([np.arange(i * Ny, (i + 1) * Ny) for i, _ in cols])
    L = pert.to_dense()[np.ix_(idx, idx)]
    K = box_dirichlet_gradient(grid, spec, center)
    B = K + np.eye(len(idx))
    if len(idx) <= 2000:
        import scipy.linalg as sla

        mu = float(sla.eigh(L, B, eigvals_only=True, subset_by_index=[0, 0])[0])
    else:
        import scipy.sparse as sp
        from scipy.sparse.linalg import lobpcg

        x0 = np.ones((len(idx), 1))
        vals, _ = lobpcg(sp.csr_matrix(L), x0, B=sp.csr_matrix(B), largest=False, tol=1e-10,
                         maxiter=500)
        mu = float(vals[0])
    c0 = max(0.0, -mu)
    if c0 >= 1.0:
        warnings.warn(f"relative form bound estimate {c0:.3f} >= 1", stacklevel=2)
    return c0, c0
