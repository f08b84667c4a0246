"""Grushin (2D almost-Riemannian) and flat Martinet (3D) model spectra.

Both models decompose into Fourier sectors with 1D operators in x:

* Grushin (X = d/dx, Y = x d/dy, y-period 2*pi): sector n gives
  -d^2/dx^2 + n^2 x^2, whole-line eigenvalues (2l+1)|n|.
* Martinet (X = d/dx, Y = d/dy + x^2 d/dz, y and z periods 2*pi): sector
  (eta, zeta) gives -d^2/dx^2 + (eta + zeta x^2)^2.

The paper-level compact manifold is replaced by a Dirichlet box [-a, a] in
x (a recorded design decision): constants change, the log-enhanced leading
orders lam*log(lam) and lam^2*log(lam) do not.  Counting never silently
undercounts: every sample carries a completeness certificate (the lowest
computed ground energy among unexplored sectors).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._oscillator import (dirichlet_eigenvalues, dirichlet_eigensystem,
                          hermite_ladder, richardson_eigenvalues)
from .errors import BudgetError, ConfigError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GrushinModel:
    """Grushin cylinder/box model.

    ``sector_mode`` picks how n != 0 sector spectra enter the counting and
    mass operations: 'closed-form' uses the whole-line values (2l+1)|n|
    (exact, and exponentially close to the box values for the sectors that
    dominate), 'grid' solves the Dirichlet box per sector.  The n = 0 free
    sector always lives on the box (the whole line has no discrete n = 0
    spectrum).
    """
    y_period: float = TWO_PI
    x_half_width: float = 1.0
    sector_mode: str = "closed-form"
    npoints: int = 2048

    def __post_init__(self):
        if self.y_period <= 0 or self.x_half_width <= 0:
            raise ConfigError("GrushinModel parameters must be positive")
        if self.sector_mode not in ("closed-form", "grid"):
            raise ConfigError(f"unknown sector_mode {self.sector_mode!r}")


@dataclass(frozen=True)
class MartinetModel:
    y_period: float = TWO_PI
    z_period: float = TWO_PI
    x_half_width: float = 6.0
    npoints: int = 1024

    def __post_init__(self):
        if min(self.y_period, self.z_period, self.x_half_width) <= 0:
            raise ConfigError("MartinetModel parameters must be positive")


@dataclass
class CountingSamples:
    lambdas: np.ndarray
    counts: np.ndarray
    model: str
    complete: np.ndarray          # bool per sample
    certificate: float            # lowest unexplored ground energy

    def __post_init__(self):
        if np.any(np.diff(self.counts) < 0):
            raise ConfigError("counts must be nondecreasing")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("lambda,count,model,complete\n")
            for lam, c, ok in zip(self.lambdas, self.counts, self.complete):
                fh.write(f"{float(lam)!r},{int(c)},{self.model},{bool(ok)}\n")


@dataclass
class LogLawFit:
    """Two-parameter fit N(lam) ~ a*g(lam) + b*h(lam) with window diagnostics."""
    model: str
    form: str                     # 'lam-log' or 'lam2-log'
    a: float
    b: float
    window: tuple[float, float]
    residual: float
    window_fits: dict = field(default_factory=dict)

    @property
    def stability(self) -> float:
        """Max relative spread of `a` across the sub-window fits."""
        vals = [self.a] + [v[0] for v in self.window_fits.values()]
        return (max(vals) - min(vals)) / abs(self.a)

    def to_json_dict(self) -> dict:
        return {
            "model": self.model, "form": self.form, "a": self.a, "b": self.b,
            "window": list(self.window), "residual": self.residual,
            "stability": self.stability,
            "window_fits": {k: list(v) for k, v in self.window_fits.items()},
        }


def _basis(form: str, xs: np.ndarray) -> np.ndarray:
    if form == "lam-log":
        return np.column_stack([xs * np.log(xs), xs])
    if form == "lam2-log":
        return np.column_stack([xs ** 2 * np.log(xs), xs ** 2])
    raise ConfigError(f"unknown fit form {form!r}")


def fit_log_law(lambdas, counts, form: str, window: tuple[float, float],
                model: str = "") -> LogLawFit:
    lambdas = np.asarray(lambdas, dtype=float)
    counts = np.asarray(counts, dtype=float)

    def solve(lo, hi):
        sel = (lambdas >= lo) & (lambdas <= hi)
        if sel.sum() < 10:
            raise ConfigError("log-law fit needs at least 10 samples in window")
        A = _basis(form, lambdas[sel])
        coef, res, *_ = np.linalg.lstsq(A, counts[sel], rcond=None)
        resid = float(np.sqrt(np.mean((A @ coef - counts[sel]) ** 2)))
        return float(coef[0]), float(coef[1]), resid

    lo, hi = window
    a, b, resid = solve(lo, hi)
    mid = (lo + hi) / 2
    wf = {}
    for name, (wlo, whi) in {"lower-half": (lo, mid),
                             "upper-half": (mid, hi)}.items():
        try:
            wf[name] = solve(wlo, whi)
        except ConfigError:
            pass
    return LogLawFit(model=model, form=form, a=a, b=b, window=window,
                     residual=resid, window_fits=wf)


# ---------------------------------------------------------------------------
# Grushin

@dataclass
class GrushinSectorResult:
    n: int
    values: np.ndarray
    whole_line: np.ndarray
    gap: np.ndarray | None    # interval minus whole-line, None for closed form


def grushin_sector_spectrum(model: GrushinModel, n: int,
                            count: int) -> GrushinSectorResult:
    """Lowest ``count`` eigenvalues of -d^2/dx^2 + n^2 x^2 for sector n.

    Whole-line ('closed-form') mode returns (2l+1)|n| exactly; 'grid' mode
    solves the Dirichlet box and reports the gap above the whole-line values
    (Dirichlet truncation only raises eigenvalues).
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if n == 0:
        raise ConfigError("n = 0 is the free sector; use grushin_counting")
    wl = (2 * np.arange(count) + 1.0) * abs(n)
    if model.sector_mode == "closed-form":
        return GrushinSectorResult(n=n, values=wl, whole_line=wl, gap=None)
    a = model.x_half_width
    # Dirichlet box must hold the requested levels to truncation accuracy;
    # turning point of the top level is sqrt((2*count-1)/|n|)
    if (2 * count - 1) / abs(n) > (0.9 * a) ** 2:
        raise BudgetError(
            f"box [-{a}, {a}] too small for {count} levels of sector n={n}")
    vals, _, _ = richardson_eigenvalues(lambda x: (n * x) ** 2, -a, a,
                                        model.npoints, count)
    return GrushinSectorResult(n=n, values=vals, whole_line=wl, gap=vals - wl)


def _grushin_rows(model: GrushinModel, lam_max: float):
    """(lam, mult) rows complete up to lam_max (mult 2 aggregates +-n)."""
    rows = []
    n = 1
    while n <= lam_max:   # whole-line ground energy is exactly n
        lmax = int(math.floor((lam_max / n - 1) / 2 + 1e-12))
        if model.sector_mode == "closed-form":
            for l in range(lmax + 1):
                rows.append(((2 * l + 1) * float(n), 2))
        else:
            vals = dirichlet_eigenvalues(lambda x: (n * x) ** 2,
                                         -model.x_half_width, model.x_half_width,
                                         model.npoints, value_range=(0.0, lam_max))
            rows += [(float(v), 2) for v in vals]
        n += 1
    a = model.x_half_width
    k = 1
    while (k * math.pi / (2 * a)) ** 2 <= lam_max:
        rows.append(((k * math.pi / (2 * a)) ** 2, 1))
        k += 1
    rows.sort()
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])


def grushin_counting(model: GrushinModel, lam_max: float,
                     nsamples: int = 120):
    """Counting samples and the a*lam*log(lam) + b*lam fit.

    The certificate is the ground energy of the first unexplored sector
    (= lam_max + 1 for the exact whole-line enumeration, so every sample is
    complete by construction).
    """
    if lam_max < 50:
        raise ConfigError("grushin_counting needs lambda_max >= 50")
    lams, mults = _grushin_rows(model, lam_max)
    cum = np.cumsum(mults)
    xs = np.linspace(lam_max / 20, lam_max, nsamples)
    counts = np.array([int(cum[np.searchsorted(lams, x, "right") - 1])
                       if np.searchsorted(lams, x, "right") else 0 for x in xs])
    certificate = float(math.floor(lam_max) + 1)  # next sector's exact ground
    samples = CountingSamples(lambdas=xs, counts=counts, model="grushin",
                              complete=np.ones(len(xs), dtype=bool),
                              certificate=certificate)
    fit = fit_log_law(xs, counts, "lam-log", (lam_max / 2, lam_max),
                      model="grushin")
    return samples, fit


def grushin_mass_near_singular_set(model: GrushinModel, f, lam_max: float,
                                   cutoffs=None):
    """Cesaro means (1/N) sum ∫ f |phi_n|^2 dmu for an x-observable f.

    Box eigenvectors carry the masses; for sectors whose classical turning
    point is well inside the box the explicit Hermite eigenfunctions
    psi_l(sqrt|n| x) are used instead (they agree to Dirichlet-tail
    accuracy and are the independent oracle for the grid path).

    Returns (cutoffs, values).
    """
    if cutoffs is None:
        cutoffs = np.array([lam_max / 4, lam_max / 2, lam_max])
    cutoffs = np.asarray(cutoffs, dtype=float)
    a = model.x_half_width
    ng = model.npoints
    rows = []   # (lam, mult, mass)

    n = 1
    while n <= lam_max:
        # Hermite route valid when sqrt(lam)/n <= 0.7 a for all kept levels
        if math.sqrt(lam_max) / n <= 0.7 * a:
            lmax = int(math.floor((lam_max / n - 1) / 2 + 1e-12))
            L = math.sqrt(lam_max / n) + 8.0
            xi = np.linspace(-L, L, 3001)
            dxi = xi[1] - xi[0]
            psi = hermite_ladder(xi, lmax)
            fv = np.asarray(f(xi / math.sqrt(n)))
            masses = (psi ** 2 * fv) @ np.full(xi.size, dxi)
            for l in range(lmax + 1):
                rows.append(((2 * l + 1) * float(n), 2, float(masses[l])))
        else:
            xs, w, v = dirichlet_eigensystem(lambda x: (n * x) ** 2, -a, a, ng,
                                             value_range=(0.0, lam_max))
            if len(w) == 0:
                break
            h = xs[1] - xs[0]
            fv = np.asarray(f(xs))
            masses = (v ** 2 * fv[:, None]).sum(axis=0) * h
            rows += [(float(lam), 2, float(ms)) for lam, ms in zip(w, masses)]
        n += 1
    k = 1
    xs = np.linspace(-a, a, ng)
    h = xs[1] - xs[0]
    fv = np.asarray(f(xs))
    while (k * math.pi / (2 * a)) ** 2 <= lam_max:
        phi2 = np.sin(k * math.pi * (xs + a) / (2 * a)) ** 2 / a
        rows.append(((k * math.pi / (2 * a)) ** 2, 1, float((phi2 * fv).sum() * h)))
        k += 1

    rows.sort(key=lambda r: r[0])
    lams = np.array([r[0] for r in rows])
    mults = np.array([r[1] for r in rows], dtype=float)
    ms = np.array([r[2] for r in rows])
    out = []
    for lc in cutoffs:
        sel = lams <= lc
        out.append(float((mults[sel] * ms[sel]).sum() / mults[sel].sum()))
    return cutoffs, np.array(out)


def hermite_sector_masses(n: int, ells, f) -> np.ndarray:
    """Oracle masses ∫ f(x) psi_l(sqrt|n| x)^2 sqrt|n| dx for given levels."""
    ells = np.asarray(ells, dtype=int)
    lmax = int(ells.max())
    xi = np.linspace(-math.sqrt(2 * (2 * lmax + 1)) - 10.0,
                     math.sqrt(2 * (2 * lmax + 1)) + 10.0, 4001)
    dxi = xi[1] - xi[0]
    psi = hermite_ladder(xi, lmax)
    fv = np.asarray(f(xi / math.sqrt(abs(n))))
    vals = (psi ** 2 * fv) @ np.full(xi.size, dxi)
    return vals[ells]


# ---------------------------------------------------------------------------
# Martinet

def martinet_sector_spectrum(model: MartinetModel, eta: int, zeta: int,
                             count: int, richardson: bool = True) -> np.ndarray:
    """Lowest ``count`` eigenvalues of -d^2/dx^2 + (eta + zeta x^2)^2 on
    the Dirichlet box."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    if zeta == 0:
        raise ConfigError("zeta = 0 sectors are the elliptic closed form; "
                          "use martinet_counting")
    a = model.x_half_width

    def V(x):
        return (eta + zeta * x ** 2) ** 2

    if richardson:
        vals, _, _ = richardson_eigenvalues(V, -a, a, model.npoints, count)
        return vals
    return dirichlet_eigenvalues(V, -a, a, model.npoints, count=count)


def _martinet_column(model: MartinetModel, zeta: int, lam: float):
    """All sector eigenvalues <= lam for fixed zeta >= 1, over eta in Z.

    Returns (values list, frontier ground energies at the scan boundary,
    number of 1D solves).  The eta >= 0 stop is certified by pointwise
    potential monotonicity; the eta < 0 scan stops after two consecutive
    empty sectors and records their computed grounds as the certificate.
    """
    a = model.x_half_width
    ng = model.npoints
    vals = []
    frontier = []
    nsolve = 0

    def eigs(eta):
        nonlocal nsolve
        nsolve += 1
        return dirichlet_eigenvalues(lambda x: (eta + zeta * x ** 2) ** 2,
                                     -a, a, ng, value_range=(0.0, lam))

    def ground(eta):
        nonlocal nsolve
        nsolve += 1
        return float(dirichlet_eigenvalues(
            lambda x: (eta + zeta * x ** 2) ** 2, -a, a, ng, count=1)[0])

    eta = 0
    while eta * eta <= lam:   # V >= eta^2 certifies the stop for eta >= 0
        w = eigs(eta)
        if len(w) == 0:
            frontier.append(ground(eta))
            if eta > 0:
                break
        else:
            vals.extend(w.tolist())
        eta += 1
    else:
        frontier.append(float(eta * eta))
    eta = -1
    empty = 0
    while empty < 2:
        w = eigs(eta)
        if len(w) == 0:
            empty += 1
            frontier.append(ground(eta))
        else:
            empty = 0
            vals.extend(w.tolist())
        eta -= 1
    return vals, frontier, nsolve


def martinet_counting(model: MartinetModel, lam_max: float,
                      nsamples: int = 80, threads: int = 1,
                      solve_budget: int = 200_000):
    """Counting samples and the a*lam^2*log(lam) + b*lam^2 fit.

    Aggregates all (eta, zeta) sectors with zeta != 0 (each counted twice:
    (eta, zeta) ~ (-eta, -zeta)) plus the closed-form zeta = 0 family.
    Columns are enumerated in zeta until an entire column is empty; the
    certificate is the smallest computed ground energy at the scan frontier.
    A solve budget turns an over-long enumeration into a partial result
    with an explicit completeness bound instead of a silent undercount.
    """
    if lam_max < 5:
        raise ConfigError("martinet_counting needs lambda_max >= 5")
    a = model.x_half_width
    rows = []          # (lam, mult)
    # zeta = 0: eigenvalues eta^2 + (k pi / 2a)^2
    eta = 0
    while eta * eta <= lam_max:
        k = 1
        while eta * eta + (k * math.pi / (2 * a)) ** 2 <= lam_max:
            rows.append((eta * eta + (k * math.pi / (2 * a)) ** 2,
                         1 if eta == 0 else 2))
            k += 1
        eta += 1

    certificate = math.inf
    nsolve_total = 0
    budget_hit = False
    zeta = 1
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while True:
            batch = list(range(zeta, zeta + max(threads, 1)))
            if pool is not None:
                results = list(pool.map(
                    lambda zz: _martinet_column(model, zz, lam_max), batch))
            else:
                results = [_martinet_column(model, zz, lam_max) for zz in batch]
            done = False
            for zz, (vals, frontier, ns) in zip(batch, results):
                nsolve_total += ns
                if frontier:
                    certificate = min(certificate, min(frontier))
                if not vals:
                    done = True
                    break
                rows += [(v, 2) for v in vals]
            if done:
                break
            zeta = batch[-1] + 1
            if nsolve_total > solve_budget:
                budget_hit = True
                certificate = min(certificate, float(lam_max))  # unknown beyond
                break
    finally:
        if pool is not None:
            pool.shutdown()

    rows.sort()
    lams = np.array([r[0] for r in rows])
    mults = np.array([r[1] for r in rows])
    cum = np.cumsum(mults)
    xs = np.linspace(max(2.0, lam_max / 20), lam_max, nsamples)
    counts = np.array([int(cum[np.searchsorted(lams, x, "right") - 1])
                       if np.searchsorted(lams, x, "right") else 0 for x in xs])
    complete = xs < certificate
    if budget_hit and not np.any(complete):
        raise BudgetError(
            f"martinet solve budget {solve_budget} exhausted before any "
            f"complete sample (certificate {certificate:.3f})")
    samples = CountingSamples(lambdas=xs, counts=counts, model="martinet",
                              complete=complete, certificate=float(certificate))
    fit = fit_log_law(xs, counts, "lam2-log", (lam_max / 2, lam_max),
                      model="martinet")
    return samples, fit


def martinet_elliptic_count(model: MartinetModel, lam: float) -> int:
    """Closed-form count of the zeta = 0 family alone (subdominant)."""
    a = model.x_half_width
    total = 0
    eta = 0
    while eta * eta <= lam:
        r = lam - eta * eta
        k = int(math.floor(math.sqrt(r) * 2 * a / math.pi))
        total += k if eta == 0 else 2 * k
        eta += 1
    return total
