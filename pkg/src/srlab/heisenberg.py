"""Spectral theory of the flat Heisenberg nilmanifold.

The quotient is by the lattice with x, y steps sqrt(2*pi) and z period
2*pi (group law (x,y,z)*(x',y',z') = (x+x', y+y', z+z'-x*y')).  Functions
split into z-Fourier sectors:

* m != 0: the y-Fourier modes within a sector form ladders k = k0 + |m|*Z
  glued by x-translation, so each residue k0 reduces to a 1D oscillator
  -d^2/dx^2 + (sqrt(2*pi)*k0 - m*x)^2 on the line, eigenvalues (2l+1)|m|.
  The |m| residues are exact translates of each other: multiplicity |m|.
* m == 0: plain torus modes with eigenvalues 2*pi*(j^2 + k^2).

The ladder reduction is treated as code under test: explicit Weil-Brezin
eigenfunctions are evaluated pointwise and checked for quasi-periodicity
and for the eigenvalue equation by high-order stencils, independently of
the reduction.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ._oscillator import hermite_ladder, richardson_eigenvalues
from .errors import (CapacityError, ConfigError, IncompleteSpectrumError,
                     SrlabError, WindowError)

SQ2PI = math.sqrt(2.0 * math.pi)
FORMAT_VERSION = "1"

#: families in SpectrumTable rows
OSC = "osc"      # lambda = (2l+1)|m|, m != 0
TORUS = "torus"  # lambda = 2*pi*(j^2+k^2), m == 0


class FactorizationNotApplicable(SrlabError):
    """m = 0 pairs belong to the elliptic (torus) sector."""


@dataclass(frozen=True)
class SectorId:
    m: int


@dataclass
class EigenPair:
    lam: float
    sector: SectorId
    quantum_numbers: tuple
    origin: str  # 'exact' | 'numeric'
    vector: np.ndarray | None = None

    def __post_init__(self):
        if self.lam < -1e-12:
            raise ConfigError(f"negative eigenvalue {self.lam}")


@dataclass(frozen=True)
class SpectrumEntry:
    """One table row.  For family 'osc': (m, ell, residue) with residue None
    meaning 'aggregated over all |m| residues' (mult = |m|).  For family
    'torus': m = 0 and (ell, residue) hold the integer pair (j, k)."""
    lam: float
    mult: int
    family: str
    m: int
    ell: int
    residue: int | None
    origin: str

    def sort_key(self):
        res = self.residue if self.residue is not None else -1
        return (self.lam, self.family, abs(self.m), self.ell, res)


class SpectrumTable:
    """Sorted eigenvalue table, complete up to ``lambda_max``."""

    def __init__(self, entries, lambda_max: float):
        self.entries = sorted(entries, key=SpectrumEntry.sort_key)
        self.lambda_max = float(lambda_max)
        self.lams = np.array([e.lam for e in self.entries])
        self.mults = np.array([e.mult for e in self.entries], dtype=np.int64)
        self._cum = np.cumsum(self.mults)
        if np.any(self.lams > self.lambda_max + 1e-9):
            raise ConfigError("table entry beyond lambda_max")

    def __len__(self):
        return len(self.entries)

    def counting(self, lam: float) -> int:
        """Multiplicity-weighted N(lam); errors beyond the completeness bound."""
        if lam > self.lambda_max + 1e-9:
            raise IncompleteSpectrumError(
                f"N({lam}) requested but table only complete to {self.lambda_max}")
        i = int(np.searchsorted(self.lams, lam, side="right"))
        return int(self._cum[i - 1]) if i > 0 else 0

    def concentration_s(self) -> np.ndarray:
        """Per-entry statistic s = m^2/(lam + m^2); s = 0 on the torus family."""
        m = np.array([e.m for e in self.entries], dtype=float)
        return np.divide(m ** 2, self.lams + m ** 2,
                         out=np.zeros_like(self.lams), where=(m != 0))

    def expanded(self):
        """Unit-multiplicity view ordered like the table: arrays
        (lam, m, ell, residue) with aggregated osc rows fanned out into
        their |m| residues and torus rows repeated per multiplicity."""
        lam, mm, ll, rr = [], [], [], []
        for e in self.entries:
            if e.family == OSC and e.residue is None:
                for r in range(abs(e.m)):
                    lam.append(e.lam); mm.append(e.m); ll.append(e.ell); rr.append(r)
            else:
                for _ in range(e.mult):
                    lam.append(e.lam); mm.append(e.m); ll.append(e.ell)
                    rr.append(e.residue if e.residue is not None else 0)
        return (np.array(lam), np.array(mm, dtype=int),
                np.array(ll, dtype=int), np.array(rr, dtype=int))


def exact_spectrum(lambda_max: float, entry_budget: int = 5_000_000) -> SpectrumTable:
    """Complete closed-form spectrum up to ``lambda_max``.

    Oscillator rows are aggregated per (m, ell) with multiplicity |m|;
    torus rows are one per integer pair (j, k).
    """
    if lambda_max <= 0:
        raise ConfigError("lambda_max must be positive")
    # entry count ~ lambda*log(lambda) (osc pairs) + lambda/2 (torus): guard first
    est = int(2 * lambda_max * (math.log(lambda_max + 2) + 1) + lambda_max)
    if est > entry_budget:
        raise CapacityError(
            f"~{est} entries would exceed the budget {entry_budget}")
    entries = []
    ell = 0
    while 2 * ell + 1 <= lambda_max:
        q = 2 * ell + 1
        mmax = int(math.floor(lambda_max / q + 1e-12))
        for m in range(1, mmax + 1):
            lam = float(q * m)
            entries.append(SpectrumEntry(lam, m, OSC, m, ell, None, "exact"))
            entries.append(SpectrumEntry(lam, m, OSC, -m, ell, None, "exact"))
        ell += 1
    jmax = int(math.floor(math.sqrt(lambda_max / (2 * math.pi)) + 1e-12))
    for j in range(-jmax, jmax + 1):
        for k in range(-jmax, jmax + 1):
            lam = 2.0 * math.pi * (j * j + k * k)
            if lam <= lambda_max:
                entries.append(SpectrumEntry(lam, 1, TORUS, 0, j, k, "exact"))
    if len(entries) > entry_budget:
        raise CapacityError(f"{len(entries)} entries exceed budget {entry_budget}")
    return SpectrumTable(entries, lambda_max)


def counting_function(table: SpectrumTable, lam: float) -> int:
    return table.counting(lam)


@dataclass
class WeylFit:
    c: float
    window: tuple[float, float]
    samples: np.ndarray        # lambda grid
    counts: np.ndarray
    residuals: np.ndarray      # N(lam) - c*lam^2
    target: float = math.pi ** 2 / 8

    @property
    def relative_deviation(self) -> float:
        return abs(self.c - self.target) / self.target


def weyl_constant_fit(table: SpectrumTable, window: tuple[float, float],
                      nsamples: int = 101) -> WeylFit:
    """Least-squares c in N(lam) = c*lam^2 over ``nsamples`` points in window."""
    lo, hi = window
    if hi > table.lambda_max + 1e-9:
        raise IncompleteSpectrumError("fit window beyond table completeness")
    if nsamples < 10:
        raise ConfigError("weyl_constant_fit needs at least 10 samples in the window")
    xs = np.linspace(lo, hi, nsamples)
    Ns = np.array([table.counting(x) for x in xs], dtype=float)
    denom = float((xs ** 4).sum())
    if denom == 0:
        raise ConfigError("degenerate fit window")
    c = float((Ns * xs ** 2).sum() / denom)
    return WeylFit(c=c, window=(lo, hi), samples=xs, counts=Ns,
                   residuals=Ns - c * xs ** 2)


# ---------------------------------------------------------------------------
# Sector operators (m != 0 reduces to 1D oscillators; m == 0 is the torus)

TAIL_TOL = 1e-12


def window_tail_bound(m: int, half_width: float, count: int) -> float:
    """Gaussian bound on the Dirichlet-truncation error at the window edge.

    Requires the edge to sit beyond the classical turning point of the
    highest requested level; then |psi| <= exp(-xi^2/4) applies.
    """
    xi_w = math.sqrt(abs(m)) * half_width
    if xi_w ** 2 < 2 * (2 * count + 1):
        return math.inf
    return math.exp(-xi_w ** 2 / 4)


def suggest_half_width(m: int, count: int) -> float:
    need = max(math.sqrt(2 * (2 * count + 1)),
               math.sqrt(4 * math.log(1 / TAIL_TOL)))
    return 1.2 * need / math.sqrt(abs(m))


@dataclass
class SectorSolve:
    m: int
    residues: list[int]
    eigenvalues: np.ndarray       # (n_residues, count), Richardson-extrapolated
    raw_coarse: np.ndarray        # same shape, plain FD at npoints
    raw_fine: np.ndarray          # plain FD at 2*npoints-1
    half_width: float
    npoints: int
    tail_bound: float

    def pairs(self):
        out = []
        for i, k0 in enumerate(self.residues):
            for ell, lam in enumerate(self.eigenvalues[i]):
                out.append(EigenPair(float(lam), SectorId(self.m), (ell, k0),
                                     "numeric"))
        return out


def sector_operator(m: int, count: int = 11, half_width: float | None = None,
                    npoints: int = 2048, richardson: bool = True):
    """Per-residue 1D solves for sector m (or the torus closed form for m=0).

    For each residue k0 mod |m| the operator is
    -d^2/dx^2 + (sqrt(2*pi)*k0 - m*x)^2 on [x_c - w, x_c + w] around the
    potential minimum x_c = sqrt(2*pi)*k0/m, Dirichlet ends.
    """
    if m == 0:
        return _torus_pairs(count)
    am = abs(m)
    w = half_width if half_width is not None else 12.0 / math.sqrt(am)
    tail = window_tail_bound(m, w, count)
    if tail > TAIL_TOL:
        raise WindowError(
            f"window half-width {w:.3f} too small for {count} levels in sector m={m}",
            suggested_width=suggest_half_width(m, count))
    residues = list(range(am))
    ext, coarse, fine = [], [], []
    for k0 in residues:
        x_c = SQ2PI * k0 / m

        def V(x, _k0=k0):
            return (SQ2PI * _k0 - m * x) ** 2

        if richardson:
            e, c, f = richardson_eigenvalues(V, x_c - w, x_c + w, npoints, count)
        else:
            from ._oscillator import dirichlet_eigenvalues
            c = dirichlet_eigenvalues(V, x_c - w, x_c + w, npoints, count=count)
            e, f = c, c
        ext.append(e); coarse.append(c); fine.append(f)
    return SectorSolve(m=m, residues=residues,
                       eigenvalues=np.array(ext), raw_coarse=np.array(coarse),
                       raw_fine=np.array(fine), half_width=w, npoints=npoints,
                       tail_bound=tail)


def _torus_pairs(count: int):
    """Lowest ``count`` torus eigenvalues 2*pi*(j^2+k^2) as EigenPairs."""
    rmax = int(math.isqrt(count) + 2)
    vals = []
    while True:
        vals = [(2.0 * math.pi * (j * j + k * k), j, k)
                for j in range(-rmax, rmax + 1) for k in range(-rmax, rmax + 1)]
        vals.sort()
        # complete up to radius rmax: enough values below the cut guarantee
        if len(vals) >= count and vals[count - 1][0] <= 2 * math.pi * rmax ** 2:
            break
        rmax += 2
    return [EigenPair(v, SectorId(0), (j, k), "exact") for v, j, k in vals[:count]]


def factorization_check(pair: EigenPair):
    """(r, omega, odd_residual) for the commuting factorization of -Delta.

    r is the sector eigenvalue |m| of the first-order factor, omega = lam/|m|
    the oscillator eigenvalue; odd_residual is the distance from omega to the
    nearest odd integer (zero iff exp(2*pi*i*Omega) acts as the identity).
    """
    m = pair.sector.m
    if m == 0:
        raise FactorizationNotApplicable(
            "torus-family pair: the factorization lives on the oscillator cone")
    r = float(abs(m))
    omega = pair.lam / r
    nearest_odd = 2 * round((omega - 1) / 2) + 1
    return r, omega, abs(omega - nearest_odd)


def concentration_cesaro(table: SpectrumTable, lam: float, chi) -> float:
    """(1/N(lam)) * sum_{lam_n <= lam} chi(s_n), multiplicity weighted."""
    N = table.counting(lam)
    if N == 0:
        raise ConfigError("empty spectrum below cutoff")
    sel = table.lams <= lam
    s = table.concentration_s()[sel]
    w = table.mults[sel]
    return float((w * np.asarray(chi(s))).sum() / N)


def elliptic_partial_sum(table: SpectrumTable, lam: float) -> float:
    """sum_{lam_n <= lam} (1 - s_n): grows like lam^(3/2), not lam^2."""
    sel = table.lams <= lam
    return float((table.mults[sel] * (1 - table.concentration_s()[sel])).sum())


# ---------------------------------------------------------------------------
# Weil-Brezin eigenfunctions

class Eigenfunction:
    """Pointwise-evaluable eigenfunction on the fundamental domain.

    Sector m != 0 (Weil-Brezin ladder sum):
        phi = e^{imz} sum_{k = k0 mod |m|} psi_ell(sqrt|m| (x - sqrt(2pi) k/m))
              * e^{i sqrt(2pi) k y}
    Sector m == 0: phi = e^{i sqrt(2pi) (j x + k y)}.
    Evaluation is over all of R^3; the function is invariant under the
    lattice, which the quasi-periodicity check verifies directly.
    """

    def __init__(self, m: int, ell: int, k0: int = 0, jk: tuple[int, int] = (0, 0),
                 K: int | None = None, normalized: bool = True):
        self.m = m
        self.ell = ell
        self.k0 = k0
        self.jk = jk
        if m == 0:
            self.lam = 2.0 * math.pi * (jk[0] ** 2 + jk[1] ** 2)
            self.K = 0
            self.tail_bound = 0.0
            self.norm_constant = math.sqrt(SQ2PI * SQ2PI * 2 * math.pi)
        else:
            am = abs(m)
            if not 0 <= k0 < am:
                raise ConfigError(f"residue {k0} outside [0, {am})")
            self.lam = float((2 * ell + 1) * am)
            if K is None:
                # ladder steps shift x by sqrt(2pi); demand Gaussian tail
                # < TAIL_TOL at the far edge of the fundamental domain
                xi_need = math.sqrt(4 * math.log(1 / TAIL_TOL)
                                    + 2 * (2 * ell + 1))
                K = int(math.ceil((xi_need / math.sqrt(am) + SQ2PI) / SQ2PI)) + 1
            self.K = K
            xi_edge = math.sqrt(am) * (self.K * SQ2PI - SQ2PI)
            self.tail_bound = math.exp(-xi_edge ** 2 / 4) \
                if xi_edge ** 2 >= 2 * (2 * ell + 1) else math.inf
            if self.tail_bound > TAIL_TOL:
                raise WindowError(
                    f"truncation K={K} too small for (m,ell)=({m},{ell})",
                    suggested_width=K + 2)
            self.norm_constant = math.sqrt(2 * math.pi * SQ2PI / math.sqrt(am))
        self.normalized = normalized

    def evaluate(self, x, y, z) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.m == 0:
            j, k = self.jk
            out = np.exp(1j * SQ2PI * (j * x + k * y)) * np.ones_like(z)
        else:
            m, am, ell = self.m, abs(self.m), self.ell
            ks = self.k0 + am * np.arange(-self.K, self.K + 1)
            acc = np.zeros(np.broadcast_shapes(x.shape, y.shape, z.shape),
                           dtype=complex)
            for k in ks:
                xi = math.sqrt(am) * (x - SQ2PI * k / m)
                psi = _psi_single(xi, ell)
                acc = acc + psi * np.exp(1j * SQ2PI * k * y)
            out = np.exp(1j * m * z) * acc
        return out / self.norm_constant if self.normalized else out

    def quadrature_norm(self, n: int = 48) -> float:
        """L^2 norm over the fundamental domain by midpoint quadrature on the
        *unnormalized* sum; cross-checks norm_constant."""
        xs = (np.arange(n) + 0.5) * SQ2PI / n
        ys = (np.arange(n) + 0.5) * SQ2PI / n
        zs = (np.arange(n) + 0.5) * 2 * math.pi / n
        X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
        saved = self.normalized
        self.normalized = False
        vals = self.evaluate(X, Y, Z)
        self.normalized = saved
        cell = (SQ2PI / n) ** 2 * (2 * math.pi / n)
        return float(np.sqrt(np.sum(np.abs(vals) ** 2) * cell))

    def quasi_periodicity_error(self, npoints: int = 100, seed: int = 0) -> float:
        """max |phi(x+sqrt(2pi),y,z) - e^{i m sqrt(2pi) y} phi(x,y,z)| at
        random points: the direct validation of the sector reduction."""
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 1, (npoints, 3)) * np.array([SQ2PI, SQ2PI, 2 * math.pi])
        x, y, z = pts.T
        lhs = self.evaluate(x + SQ2PI, y, z)
        rhs = np.exp(1j * self.m * SQ2PI * y) * self.evaluate(x, y, z)
        return float(np.max(np.abs(lhs - rhs)))

    def operator_residual(self, grid_n: int = 32, h: float = 0.01) -> float:
        """||Delta phi + lam phi||_2 / ||phi||_2 over a grid, with X^2 and Y^2
        applied by 8th-order directional stencils (Y^2 along the straight
        characteristic line t -> (x, y+t, z-x*t), along which Y has constant
        coefficients).  Independent of the Hermite ODE and of the ladder
        reduction; limited only by stencil error ~(h*freq)^8."""
        c2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72,
                       8 / 5, -1 / 5, 8 / 315, -1 / 560])
        offs = np.arange(-4, 5)
        n = grid_n
        xs = (np.arange(n) + 0.5) * SQ2PI / n
        zs = (np.arange(max(n // 4, 4)) + 0.5) * 2 * math.pi / max(n // 4, 4)
        X, Y, Z = np.meshgrid(xs, xs, zs, indexing="ij")
        fxx = np.zeros(X.shape, dtype=complex)
        fyy = np.zeros(X.shape, dtype=complex)
        for wgt, o in zip(c2, offs):
            fxx += wgt * self.evaluate(X + o * h, Y, Z)
            fyy += wgt * self.evaluate(X, Y + o * h, Z - X * o * h)
        fxx /= h * h
        fyy /= h * h
        phi = self.evaluate(X, Y, Z)
        res = -(fxx + fyy) - self.lam * phi
        return float(np.linalg.norm(res) / np.linalg.norm(phi))


def _psi_single(xi: np.ndarray, ell: int) -> np.ndarray:
    """Hermite function of one degree on arbitrary-shape input."""
    flat = np.ravel(xi)
    vals = hermite_ladder(flat, ell)[ell]
    return vals.reshape(np.shape(xi))


def eigenfunction_evaluate(ef: Eigenfunction, point) -> complex:
    x, y, z = point
    return complex(ef.evaluate(np.asarray(x, float), np.asarray(y, float),
                               np.asarray(z, float)))


# ---------------------------------------------------------------------------
# Eigenfunction masses of multiplication observables (z-independent)

@dataclass
class TorusObservable:
    """f(x, y) on the 2-torus as a finite Fourier sum
    f = sum c[(p, q)] e^{i sqrt(2pi) (q x + p y)}; p indexes y, q indexes x."""
    coefficients: dict

    @classmethod
    def from_callable(cls, f, n: int = 64, tol: float = 1e-13):
        xs = np.arange(n) * SQ2PI / n
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        vals = f(X, Y)
        C = np.fft.fft2(np.asarray(vals, dtype=complex)) / (n * n)
        coeff = {}
        for a in range(n):
            q = a if a <= n // 2 else a - n
            for b in range(n):
                p = b if b <= n // 2 else b - n
                c = C[a, b]
                if abs(c) > tol:
                    coeff[(p, q)] = complex(c)
        return cls(coeff)

    def mean(self) -> complex:
        return self.coefficients.get((0, 0), 0.0 + 0.0j)


def hermite_overlap(ell_max: int, omega: float, displacement: float,
                    nquad: int = 4001) -> np.ndarray:
    """J(ell; omega, D) = int e^{i omega xi} psi_ell(xi) psi_ell(xi - D) dxi
    for ell = 0..ell_max, by trapezoid quadrature (the integrand decays like
    a Gaussian, so the rule is effectively exact)."""
    L = math.sqrt(2 * (2 * ell_max + 1)) + 10.0 + abs(displacement)
    xi = np.linspace(-L, L + abs(displacement), nquad)
    dxi = xi[1] - xi[0]
    psi = hermite_ladder(xi, ell_max)
    psi_d = hermite_ladder(xi - displacement, ell_max)
    phase = np.exp(1j * omega * xi)
    return (psi * psi_d * phase) @ np.full(nquad, dxi)


def observable_masses(table: SpectrumTable, obs: TorusObservable) -> np.ndarray:
    """<f phi_n, phi_n> for every unit-multiplicity index of the table,
    aligned with ``table.expanded()``.

    For an oscillator pair (m, ell, k0) and a harmonic e^{i sqrt(2pi)(qx+py)}
    the mass is zero unless p = 0 mod |m|, and otherwise equals
    e^{2 pi i q k0 / m} J(ell; sqrt(2pi) q / sqrt|m|, sqrt(2pi) p sgn(m)/sqrt|m|).
    Torus-family masses are the observable mean (the complex exponentials
    have constant modulus).
    """
    lam, mm, ll, rr = table.expanded()
    out = np.zeros(len(lam), dtype=complex)
    mean = obs.mean()
    out[mm == 0] = mean

    for m in np.unique(mm[mm != 0]):
        am = abs(int(m))
        sel = np.flatnonzero(mm == m)
        if not len(sel):
            continue
        ells = ll[sel]
        ell_max = int(ells.max())
        for (p, q), c in obs.coefficients.items():
            if p % am != 0:
                continue
            omega = SQ2PI * q / math.sqrt(am)
            D = SQ2PI * p * (1 if m > 0 else -1) / math.sqrt(am)
            J = hermite_overlap(ell_max, omega, D)
            phase = np.exp(2j * math.pi * q * rr[sel] / m)
            out[sel] += c * phase * J[ells]
    return out


# ---------------------------------------------------------------------------
# Independent oracle: 2D magnetic Bloch operator for sector m
# (second-order stencils, twisted boundary in x -- a different discretization
# from both the 1D ladder solver and the series eigenfunctions)

def magnetic_sector_matrix(m: int, nx: int, ny: int):
    """Sparse Hermitian -Delta_m on the twisted 2-torus grid.

    Sector e^{imz} reduces -Delta to -d2x - d2y + 2 i m x d_y + m^2 x^2 on
    sections with u(x + sqrt(2pi), y) = e^{i m sqrt(2pi) y} u(x, y).
    """
    import scipy.sparse as sp
    hx = SQ2PI / nx
    hy = SQ2PI / ny
    xs = np.arange(nx) * hx
    ys = np.arange(ny) * hy
    N = nx * ny

    def idx(i, j):
        return i * ny + j

    rows, cols, vals = [], [], []

    def add(i, j, ii, jj, v):
        rows.append(idx(i, j)); cols.append(idx(ii % nx, jj % ny)); vals.append(v)

    for i in range(nx):
        for j in range(ny):
            x = xs[i]
            y = ys[j]
            add(i, j, i, j, 2 / hx ** 2 + 2 / hy ** 2 + (m * x) ** 2)
            # -d2/dy2 and +2 i m x d/dy (centered), periodic in y
            add(i, j, i, j + 1, -1 / hy ** 2 + 2j * m * x / (2 * hy))
            add(i, j, i, j - 1, -1 / hy ** 2 - 2j * m * x / (2 * hy))
            # -d2/dx2 with the twist phase across the seam
            for step in (+1, -1):
                ii = i + step
                phase = 1.0 + 0j
                if ii == nx:
                    phase = np.exp(1j * m * SQ2PI * y)
                elif ii == -1:
                    phase = np.exp(-1j * m * SQ2PI * y)
                add(i, j, ii, j, -phase / hx ** 2)
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(N, N)))


def magnetic_sector_eigenvalues(m: int, nx: int = 48, ny: int = 48,
                                k: int = 8) -> np.ndarray:
    from scipy.sparse.linalg import eigsh
    A = magnetic_sector_matrix(m, nx, ny)
    return np.sort(eigsh(A, k=k, sigma=0.0, which="LM",
                         return_eigenvectors=False))


# ---------------------------------------------------------------------------
# Versioned CSV cache

def table_cache_key(lambda_max: float, params: dict | None = None) -> str:
    blob = repr((float(lambda_max), sorted((params or {}).items())))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_table(table: SpectrumTable, path, params: dict | None = None):
    key = table_cache_key(table.lambda_max, params)
    with open(path, "w") as fh:
        fh.write(f"# srlab-spectrum format={FORMAT_VERSION} key={key} "
                 f"lambda_max={table.lambda_max!r}\n")
        fh.write("lambda,mult,family,m,ell,residue,origin\n")
        for e in table.entries:
            res = "" if e.residue is None else str(e.residue)
            fh.write(f"{e.lam!r},{e.mult},{e.family},{e.m},{e.ell},{res},{e.origin}\n")


def load_table(path, lambda_max: float | None = None,
               params: dict | None = None) -> SpectrumTable:
    """Load a cached table; verifies format version and (optionally) the key."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# srlab-spectrum format="):
            raise ConfigError(f"{path}: not a spectrum cache file")
        fields = dict(tok.split("=", 1) for tok in header[2:].split()
                      if "=" in tok)
        if fields["format"] != FORMAT_VERSION:
            raise ConfigError(f"{path}: cache format {fields['format']} != "
                              f"{FORMAT_VERSION}")
        if lambda_max is not None:
            expect = table_cache_key(lambda_max, params)
            if fields["key"] != expect:
                raise ConfigError(f"{path}: cache key mismatch")
        colnames = fh.readline()
        if not colnames.startswith("lambda,"):
            raise ConfigError(f"{path}: bad column header")
        entries = []
        for line in fh:
            lam, mult, family, m, ell, res, origin = line.rstrip("\n").split(",")
            entries.append(SpectrumEntry(
                float(lam), int(mult), family, int(m), int(ell),
                None if res == "" else int(res), origin))
    return SpectrumTable(entries, float(fields["lambda_max"]))
