"""Contact geometry from a frame: Reeb field, normalized contact form,
Popp density, divergence, and the discrete sub-Riemannian Laplacian.

A frame is a pair of vector fields (X, Y) declared orthonormal, plus a
strictly positive volume density on the chart.  Everything downstream
(the bracket field W = [X, Y], the Reeb field, alpha_g, the Popp mass)
is computed pointwise on the grid with centered differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DegeneracyError, GridMismatchError
from .expressions import parse_constant, parse_expression
from .grids import ChartGrid, OneFormSpec, ScalarField, VectorFieldSpec, partial_derivative

DEFAULT_DET_FLOOR = 1e-8


def lie_bracket(A: VectorFieldSpec, B: VectorFieldSpec) -> VectorFieldSpec:
    """[A, B]^i = sum_j (A^j d_j B^i - B^j d_j A^i), centered differences.

    Antisymmetry is exact: swapping the arguments produces the bitwise
    negation because the two accumulated sums simply change places.
    """
    if A.grid != B.grid:
        raise GridMismatchError("lie_bracket operands on different grids")
    grid = A.grid
    a = A.component_values()
    b = B.component_values()
    comps = []
    one_sided = False
    for i in range(3):
        dB, f1 = _grad(b[i], grid)
        dA, f2 = _grad(a[i], grid)
        one_sided = one_sided or f1 or f2
        term1 = sum(a[j] * dB[j] for j in range(3))
        term2 = sum(b[j] * dA[j] for j in range(3))
        comps.append(ScalarField(grid, term1 - term2))
    out = VectorFieldSpec(comps)
    out.used_one_sided = one_sided
    return out


def _grad(values, grid):
    outs = []
    flag = False
    for axis in range(3):
        d, f = partial_derivative(values, grid, axis)
        outs.append(d)
        flag = flag or f
    return outs, flag


class ContactFrame:
    """Chart frame (X, Y) with a positive volume density.

    Construction verifies the contact condition: (X, Y, [X, Y]) must be
    pointwise independent, with the scaled determinant bounded away from
    zero by ``det_floor`` (relative to the product of pointwise norms).
    """

    def __init__(self, X: VectorFieldSpec, Y: VectorFieldSpec,
                 volume: ScalarField, det_floor: float = DEFAULT_DET_FLOOR,
                 check: bool = True):
        if X.grid != Y.grid or X.grid != volume.grid:
            raise GridMismatchError("frame pieces on different grids")
        if np.any(volume.values <= 0):
            bad = np.argwhere(volume.values <= 0)
            raise ConfigError(
                f"volume density must be positive; first violation at {tuple(bad[0])}")
        self.X = X
        self.Y = Y
        self.volume = volume
        self.grid = X.grid
        self.det_floor = det_floor
        self.bracket = lie_bracket(X, Y)
        if check:
            self._check_contact()

    def _check_contact(self):
        M = self._basis_matrices()
        det = np.linalg.det(M)
        # floor is relative to the *global* field scale cubed, so a bracket
        # that vanishes somewhere cannot hide behind its own pointwise norm
        scale = max(self.X.sup_norm(), self.Y.sup_norm(),
                    self.bracket.sup_norm(), 1e-300)
        floor = self.det_floor * scale ** 3
        bad = np.argwhere(np.abs(det) < floor)
        if len(bad):
            raise DegeneracyError(
                f"contact condition fails at {len(bad)} grid points "
                f"(min |det| {np.abs(det).min():.3e} < floor {floor:.3e})",
                locations=[tuple(int(t) for t in row) for row in bad[:16]],
            )

    def _basis_matrices(self) -> np.ndarray:
        """Pointwise matrices with columns (X, Y, W); shape (n1,n2,n3,3,3)."""
        cols = [self.X.component_values(), self.Y.component_values(),
                self.bracket.component_values()]
        return np.stack([np.stack([c[i] for c in cols], axis=-1)
                         for i in range(3)], axis=-2)

    def basis_components(self, V: VectorFieldSpec) -> np.ndarray:
        """Components of V in the pointwise basis (X, Y, W); shape (...,3)."""
        M = self._basis_matrices()
        rhs = np.moveaxis(V.component_values(), 0, -1)
        try:
            return np.linalg.solve(M, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"singular frame basis: {exc}") from exc


@dataclass
class ReebResult:
    Z: VectorFieldSpec
    a: ScalarField
    b: ScalarField
    residual_sup: float
    residual_l2: float
    tolerance: float

    @property
    def within_tolerance(self) -> bool:
        return self.residual_sup <= self.tolerance


def reeb_field(frame: ContactFrame, tolerance_factor: float = 10.0) -> ReebResult:
    """Z = -[X,Y] + aX + bY with (a, b) solving the two pointwise conditions
    [X,Z] in D and [Y,Z] in D (membership read off in the (X, Y, W) basis).

    The residuals report how well the *recomputed* brackets [X,Z], [Y,Z]
    stay inside D; they are O(h^2) for smooth frames and never silently
    accepted (the tolerance gate is part of the result).
    """
    X, Y, W = frame.X, frame.Y, frame.bracket
    grid = frame.grid

    w_comp = {}
    for name, P in (("X", X), ("Y", Y)):
        for tag, Q in (("X", X), ("Y", Y), ("W", W)):
            if name == tag:
                continue
            w_comp[(name, tag)] = frame.basis_components(lie_bracket(P, Q))[..., 2]

    # rows: w([P,X]) a + w([P,Y]) b = w([P,W]) for P in (X, Y);
    # the diagonal terms w([X,X]), w([Y,Y]) vanish identically (bitwise).
    M = np.empty(grid.dims + (2, 2))
    M[..., 0, 0] = 0.0
    M[..., 0, 1] = w_comp[("X", "Y")]
    M[..., 1, 0] = w_comp[("Y", "X")]
    M[..., 1, 1] = 0.0
    rhs = np.stack([w_comp[("X", "W")], w_comp[("Y", "W")]], axis=-1)
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    bad = np.argwhere(np.abs(det) < 1e-14)
    if len(bad):
        raise DegeneracyError(
            "singular 2x2 Reeb solve",
            locations=[tuple(int(t) for t in row) for row in bad[:16]])
    ab = np.linalg.solve(M, rhs[..., None])[..., 0]
    a = ScalarField(grid, ab[..., 0])
    b = ScalarField(grid, ab[..., 1])

    Z = VectorFieldSpec(tuple(
        ScalarField(grid, -W.components[i].values
                    + a.values * X.components[i].values
                    + b.values * Y.components[i].values)
        for i in range(3)))

    res = []
    for P in (X, Y):
        comp = frame.basis_components(lie_bracket(P, Z))[..., 2]
        res.append(np.abs(comp))
    res = np.stack(res)
    scale = max(X.sup_norm(), Y.sup_norm(), W.sup_norm(), 1.0)
    hmax = max(grid.spacing)
    weights = grid.quadrature_weights()
    l2 = float(np.sqrt((res ** 2 * weights).sum() / (2 * weights.sum())))
    return ReebResult(
        Z=Z, a=a, b=b,
        residual_sup=float(res.max()),
        residual_l2=l2,
        tolerance=tolerance_factor * hmax ** 2 * scale,
    )


def exterior_derivative(alpha: OneFormSpec):
    """d(alpha) coefficients (c_xy, c_xz, c_yz) with c_ij = d_i a_j - d_j a_i."""
    grid = alpha.grid
    a = alpha.component_values()
    coeffs = {}
    for i, j in ((0, 1), (0, 2), (1, 2)):
        dij, _ = partial_derivative(a[j], grid, i)
        dji, _ = partial_derivative(a[i], grid, j)
        coeffs[(i, j)] = dij - dji
    return coeffs


def two_form_on_pair(coeffs, A: VectorFieldSpec, B: VectorFieldSpec) -> np.ndarray:
    a = A.component_values()
    b = B.component_values()
    out = 0
    for (i, j), c in coeffs.items():
        out = out + c * (a[i] * b[j] - a[j] * b[i])
    return out


@dataclass
class ContactFormResult:
    alpha: OneFormSpec
    reeb: ReebResult
    dalpha_XY: ScalarField  # should be == 1; reported, not assumed

    @property
    def normalization_error(self) -> float:
        return float(np.max(np.abs(self.dalpha_XY.values - 1.0)))


def normalized_contact_form(frame: ContactFrame,
                            reeb: ReebResult | None = None) -> ContactFormResult:
    """The unique one-form with alpha(X) = alpha(Y) = 0 and alpha(Z) = 1.

    Solved pointwise as a 3x3 linear system; the finite-difference value of
    d(alpha)(X, Y) is returned as a verification field (analytically 1).
    """
    if reeb is None:
        reeb = reeb_field(frame)
    grid = frame.grid
    rows = [frame.X.component_values(), frame.Y.component_values(),
            reeb.Z.component_values()]
    M = np.stack([np.moveaxis(r, 0, -1) for r in rows], axis=-2)
    rhs = np.zeros(grid.dims + (3,))
    rhs[..., 2] = 1.0
    try:
        alpha_vals = np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"singular 3x3 contact-form solve: {exc}") from exc
    alpha = OneFormSpec(tuple(ScalarField(grid, alpha_vals[..., i])
                              for i in range(3)))
    coeffs = exterior_derivative(alpha)
    dXY = two_form_on_pair(coeffs, frame.X, frame.Y)
    return ContactFormResult(alpha=alpha, reeb=reeb,
                             dalpha_XY=ScalarField(grid, dXY))


@dataclass
class PoppResult:
    density: ScalarField
    total_mass: float
    nu: ScalarField  # probability-normalized density

    def nu_integral(self, f_values: np.ndarray) -> float:
        w = self.density.grid.quadrature_weights()
        return float((f_values * self.nu.values * w).sum())


def popp_density(frame: ContactFrame,
                 form: ContactFormResult | None = None) -> PoppResult:
    """Pointwise density of |alpha_g ^ d(alpha_g)| against |dx dy dz|,
    its chart quadrature P(M), and the probability normalization nu."""
    if form is None:
        form = normalized_contact_form(frame)
    grid = frame.grid
    a = form.alpha.component_values()
    c = exterior_derivative(form.alpha)
    dens = np.abs(a[0] * c[(1, 2)] - a[1] * c[(0, 2)] + a[2] * c[(0, 1)])
    density = ScalarField(grid, dens)
    total = density.integrate()
    if total <= 0:
        raise DegeneracyError("Popp density has nonpositive total mass")
    nu = ScalarField(grid, dens / total)
    return PoppResult(density=density, total_mass=total, nu=nu)


def divergence(V: VectorFieldSpec, volume: ScalarField) -> ScalarField:
    """div_mu(V) = (1/rho) sum_i d_i(rho V^i)."""
    if V.grid != volume.grid:
        raise GridMismatchError("vector field and volume on different grids")
    if np.any(volume.values <= 0):
        raise ConfigError("volume density must be positive")
    grid = V.grid
    out = 0
    for i in range(3):
        d, _ = partial_derivative(volume.values * V.components[i].values, grid, i)
        out = out + d
    return ScalarField(grid, out / volume.values)


# ---------------------------------------------------------------------------
# Discrete sub-Riemannian Laplacian on fully periodic charts


def _axis_derivative_matrix(n: int, h: float) -> sp.csr_matrix:
    e = np.ones(n)
    D = sp.diags([e[:-1], -e[:-1]], [1, -1], shape=(n, n), format="lil")
    D[0, n - 1] = -1.0
    D[n - 1, 0] = 1.0
    return sp.csr_matrix(D / (2 * h))


class SubLaplacian:
    """Discrete -Delta = sum_i X_i^* X_i, self-adjoint in the mu-inner product.

    ``A`` is the weighted quadratic-form matrix: <-Delta f, g>_mu = g^H A f,
    exactly symmetric PSD.  The operator in function coordinates is
    W^{-1} A with W the diagonal of quadrature-weighted density values.
    """

    def __init__(self, frame: ContactFrame):
        grid = frame.grid
        if not all(grid.periodic):
            raise ConfigError(
                "assemble_laplacian requires a fully periodic chart; "
                "quotient/quasi-periodic assembly lives in the heisenberg module")
        n1, n2, n3 = grid.dims
        h1, h2, h3 = grid.spacing
        D = [
            sp.kron(_axis_derivative_matrix(n1, h1), sp.eye(n2 * n3), format="csr"),
            sp.kron(sp.eye(n1), sp.kron(_axis_derivative_matrix(n2, h2), sp.eye(n3)),
                    format="csr"),
            sp.kron(sp.eye(n1 * n2), _axis_derivative_matrix(n3, h3), format="csr"),
        ]
        cell = h1 * h2 * h3
        self.weights = frame.volume.values.ravel() * cell
        Wd = sp.diags(self.weights)
        A = None
        self._DX = []
        for V in (frame.X, frame.Y):
            c = V.component_values()
            DV = sum(sp.diags(c[i].ravel()) @ D[i] for i in range(3))
            self._DX.append(sp.csr_matrix(DV))
            AV = DV.T @ Wd @ DV
            A = AV if A is None else A + AV
        self.A = sp.csr_matrix(A)
        self.grid = grid
        self.shape = tuple(grid.dims)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """-Delta f (function coordinates)."""
        flat = np.asarray(f).reshape(-1)
        return ((self.A @ flat) / self.weights).reshape(self.shape)

    def inner(self, f, g) -> complex:
        return complex(np.sum(np.conj(np.asarray(g).ravel())
                              * np.asarray(f).ravel() * self.weights))

    def dirichlet_form(self, f) -> float:
        """<-Delta f, f>_mu = sum_i ||X_i f||_mu^2 exactly, by construction."""
        flat = np.asarray(f).reshape(-1)
        return float(np.real(np.conj(flat) @ (self.A @ flat)))

    def horizontal_energy(self, f) -> float:
        """sum_i ||X_i f||^2 via the first-order factors (same value as
        dirichlet_form up to roundoff; kept separate for testing)."""
        flat = np.asarray(f).reshape(-1)
        tot = 0.0
        for DV in self._DX:
            g = DV @ flat
            tot += float(np.real(np.conj(g) @ (self.weights * g)))
        return tot

    def sym_matrix(self) -> sp.csr_matrix:
        """Similarity-transformed plain-symmetric matrix W^{1/2} L W^{-1/2}."""
        s = np.sqrt(self.weights)
        return sp.csr_matrix(sp.diags(1 / s) @ self.A @ sp.diags(1 / s))

    def eigenvalues(self, k: int = 6) -> np.ndarray:
        from scipy.sparse.linalg import eigsh
        return np.sort(eigsh(self.sym_matrix(), k=k, sigma=-1e-9,
                             which="LM", return_eigenvectors=False))


def assemble_laplacian(frame: ContactFrame, grid: ChartGrid | None = None) -> SubLaplacian:
    """Sparse -Delta for the frame on its (fully periodic) chart."""
    if grid is not None and grid != frame.grid:
        raise GridMismatchError("frame was built on a different grid")
    return SubLaplacian(frame)


def conjugation_check(frame: ContactFrame, volume1: ScalarField,
                      volume2: ScalarField, h: ScalarField,
                      testfns) -> list[float]:
    """Residuals of the unitary-equivalence identity between the Laplacians
    of volume1 and volume2 = h^2 volume1 (conjugation J f = h f, plus the
    zero-order potential h * Delta_{mu2}(1/h)).

    Returns one relative mu1-norm residual per test function; O(h_grid^2)
    for smooth data, zero to roundoff when h is constant.
    """
    if np.any(h.values <= 0):
        raise ConfigError("conjugation factor h must be positive")
    if np.max(np.abs(volume2.values - h.values ** 2 * volume1.values)) > 1e-12 * np.max(volume2.values):
        raise ConfigError("volume2 must equal h^2 * volume1")
    L1 = SubLaplacian(ContactFrame(frame.X, frame.Y, volume1, check=False))
    L2 = SubLaplacian(ContactFrame(frame.X, frame.Y, volume2, check=False))
    hv = h.values
    # L = -Delta, so Delta = -L;  potential = h * Delta_{mu2}(1/h)
    pot = -hv * L2.apply(1.0 / hv)
    w1 = L1.weights
    out = []
    for f in testfns:
        fv = f.values if isinstance(f, ScalarField) else np.asarray(f)
        lhs = -hv * L2.apply(fv / hv)          # J Delta_{mu2} J^{-1} f
        rhs = -L1.apply(fv) + pot * fv         # Delta_{mu1} f + potential f
        num = np.sqrt(float(np.sum(np.abs(lhs - rhs).ravel() ** 2 * w1)))
        den = np.sqrt(float(np.sum(np.abs(fv).ravel() ** 2 * w1)))
        out.append(num / den)
    return out


# ---------------------------------------------------------------------------
# Plain-text frame configuration

_REQUIRED_KEYS = ("dims", "extent_x", "extent_y", "extent_z", "periodic",
                  "X", "Y", "volume")


def parse_frame_config(text: str, det_floor: float = DEFAULT_DET_FLOOR,
                       check: bool = True):
    """Build (ChartGrid, ContactFrame) from the plain-text frame format.

    Lines are ``key = value`` with ``#`` comments.  Keys: dims (3 ints),
    extent_x/y/z (two constant expressions), periodic (3 booleans),
    X / Y (3 comma-separated coordinate expressions), volume (expression).
    """
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = (value, lineno)
    missing = [k for k in _REQUIRED_KEYS if k not in entries]
    if missing:
        raise ConfigError(f"frame config missing keys: {', '.join(missing)}")

    val, ln = entries["dims"]
    try:
        dims = tuple(int(tok) for tok in val.split())
    except ValueError as exc:
        raise ConfigError(f"line {ln}: dims must be 3 integers") from exc
    extents = []
    for key in ("extent_x", "extent_y", "extent_z"):
        val, ln = entries[key]
        toks = val.split()
        if len(toks) != 2:
            raise ConfigError(f"line {ln}: {key} needs two constant expressions")
        extents.append((parse_constant(toks[0], line=ln),
                        parse_constant(toks[1], line=ln)))
    val, ln = entries["periodic"]
    flags = []
    for tok in val.split():
        if tok.lower() in ("true", "1", "yes"):
            flags.append(True)
        elif tok.lower() in ("false", "0", "no"):
            flags.append(False)
        else:
            raise ConfigError(f"line {ln}: bad periodic flag {tok!r}")
    if len(flags) != 3:
        raise ConfigError(f"line {ln}: periodic needs 3 flags")

    grid = ChartGrid(dims=dims, extents=tuple(extents), periodic=tuple(flags))

    def vector(key):
        val, ln = entries[key]
        parts = val.split(",")
        if len(parts) != 3:
            raise ConfigError(f"line {ln}: {key} needs 3 comma-separated expressions")
        fns = [parse_expression(p.strip(), line=ln) for p in parts]
        return VectorFieldSpec.from_functions(grid, fns)

    X = vector("X")
    Y = vector("Y")
    val, ln = entries["volume"]
    volume = ScalarField.from_function(grid, parse_expression(val, line=ln))
    frame = ContactFrame(X, Y, volume, det_floor=det_floor, check=check)
    return grid, frame
