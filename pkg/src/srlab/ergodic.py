"""Dynamics and spectral statistics: flow integration with Birkhoff
averages, Cesaro mean / variance profiles, Koopman-von Neumann density-one
extraction, local Weyl measure estimates, and the quantum-limit mass split.

Nothing here asserts "ergodic" as a verdict; every operation returns a
convergence profile and (where available) a certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EscapeError
from .grids import ChartGrid, ScalarField, VectorFieldSpec

TWO_PI = 2.0 * math.pi


def torus_chart(periods=(TWO_PI, TWO_PI, TWO_PI)) -> ChartGrid:
    """An all-periodic chart used purely for its period lattice."""
    return ChartGrid(dims=(4, 4, 4),
                     extents=tuple((0.0, p) for p in periods),
                     periodic=(True, True, True))


@dataclass
class FlowTrajectory:
    times: np.ndarray
    points: np.ndarray           # (n, 3), reduced into the chart
    step: float
    chart: ChartGrid
    error_estimate: float | None = None

    def __post_init__(self):
        # 1e-12 absolute, relaxed only by the fp representability limit of
        # t = i*dt itself (ulp(t) exceeds 1e-12 once t > ~4e3)
        d = np.diff(self.times)
        tol = max(1e-12, 8 * np.finfo(float).eps * abs(float(self.times[-1])))
        if len(d) and np.max(np.abs(d - self.step)) > tol:
            raise ConfigError("trajectory times are not uniformly spaced")


def _field_callable(V, chart):
    if isinstance(V, VectorFieldSpec):
        return lambda q: V.evaluate(q)
    if isinstance(V, (tuple, list)) and len(V) == 3:
        comps = V
        return lambda q: np.array([float(c(q[0], q[1], q[2])) if callable(c)
                                   else float(c) for c in comps])
    if callable(V):
        return lambda q: np.asarray(V(q), dtype=float)
    raise ConfigError("vector field must be a VectorFieldSpec, a callable, "
                      "or a triple of component callables/constants")


def integrate_flow(V, q0, T: float, dt: float, chart: ChartGrid | None = None,
                   estimate_error: bool = True) -> FlowTrajectory:
    """Classical RK4 flow of V from q0 over [0, T] with uniform step dt.

    ``T`` is rounded to a whole number of steps.  Points are stored reduced
    modulo the chart periods; leaving a non-periodic axis raises
    :class:`EscapeError` with the exit time.  The reported global error
    estimate is the endpoint distance to a halved-step integration.
    """
    if dt <= 0 or T < dt:
        raise ConfigError("need dt > 0 and T >= dt")
    if chart is None:
        if isinstance(V, VectorFieldSpec):
            chart = V.grid
        else:
            raise ConfigError("closed-form fields need an explicit chart")
    rhs = _field_callable(V, chart)
    nsteps = max(1, int(round(T / dt)))

    def run(step, keep):
        q = np.array(q0, dtype=float)
        pts = [chart.reduce_point(q)] if keep else None
        for i in range(nsteps * (2 if step < dt else 1)):
            k1 = rhs(q)
            k2 = rhs(q + 0.5 * step * k1)
            k3 = rhs(q + 0.5 * step * k2)
            k4 = rhs(q + step * k3)
            q = q + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            for ax in range(3):
                if not chart.periodic[ax]:
                    lo, hi = chart.extents[ax]
                    if not (lo <= q[ax] <= hi):
                        raise EscapeError(
                            f"trajectory left the chart on axis {ax}",
                            exit_time=(i + 1) * step)
            if keep:
                pts.append(chart.reduce_point(q))
        return q, pts

    q_end, pts = run(dt, keep=True)
    err = None
    if estimate_error:
        q_half, _ = run(dt / 2, keep=False)
        err = float(np.max(np.abs(chart.reduce_point(q_end)
                                  - chart.reduce_point(q_half))))
    times = dt * np.arange(nsteps + 1)
    return FlowTrajectory(times=times, points=np.array(pts), step=dt,
                          chart=chart, error_estimate=err)


def birkhoff_average(f, traj: FlowTrajectory):
    """(1/T) int_0^T f(flow_t q) dt by the trapezoid rule.

    Returns (times[1:], running averages, final value).  ``f`` may be a
    callable f(x, y, z) or a ScalarField (trilinear interpolation).
    """
    if isinstance(f, ScalarField):
        vals = f.interpolate(traj.points)
    else:
        vals = np.asarray(f(traj.points[:, 0], traj.points[:, 1],
                            traj.points[:, 2]), dtype=float)
    dt = traj.step
    cum = np.cumsum((vals[1:] + vals[:-1]) * 0.5 * dt)
    running = cum / traj.times[1:]
    return traj.times[1:], running, float(running[-1])


# ---------------------------------------------------------------------------
# Cesaro statistics

@dataclass
class CesaroReport:
    cutoffs: np.ndarray
    E: np.ndarray
    V: np.ndarray | None
    N: np.ndarray

    def __post_init__(self):
        if self.V is not None and np.any(np.asarray(self.V) < -1e-14):
            raise ConfigError("variance profile must be nonnegative")


def _aligned(lambdas, pairings, multiplicities):
    lam = np.asarray(lambdas, dtype=float)
    val = np.asarray(pairings)
    mult = (np.ones(len(lam), dtype=float) if multiplicities is None
            else np.asarray(multiplicities, dtype=float))
    if not (len(lam) == len(val) == len(mult)):
        raise ConfigError("pairings/multiplicities not aligned with spectrum")
    if np.any(np.diff(lam) < 0):
        raise ConfigError("lambdas must be sorted ascending")
    return lam, val, mult


def cesaro_mean(lambdas, pairings, multiplicities, cutoffs) -> CesaroReport:
    """Running Cesaro means (1/N(lam)) sum_{lam_n <= lam} m_n p_n."""
    lam, val, mult = _aligned(lambdas, pairings, multiplicities)
    cutoffs = np.atleast_1d(np.asarray(cutoffs, dtype=float))
    cumv = np.cumsum(mult * val)
    cumn = np.cumsum(mult)
    E, N = [], []
    for lc in cutoffs:
        i = int(np.searchsorted(lam, lc, side="right"))
        if i == 0:
            raise ConfigError(f"no spectrum below cutoff {lc}")
        E.append(cumv[i - 1] / cumn[i - 1])
        N.append(cumn[i - 1])
    return CesaroReport(cutoffs=cutoffs, E=np.array(E), V=None, N=np.array(N))


def variance(lambdas, pairings, multiplicities, cutoffs, E_target: float,
             squared_pairings=None) -> CesaroReport:
    """Running second moments (1/N) sum m_n |p_n - E_target|^2.

    If the sequence of <A*A phi_n, phi_n> pairings is supplied, the report
    also carries E(A*A) profiles in ``E`` and the inequality V <= E(A*A)
    holds term by term (Cauchy-Schwarz), which callers may assert.
    """
    lam, val, mult = _aligned(lambdas, pairings, multiplicities)
    cutoffs = np.atleast_1d(np.asarray(cutoffs, dtype=float))
    dev2 = np.abs(val - E_target) ** 2
    cumv = np.cumsum(mult * dev2)
    cumn = np.cumsum(mult)
    sq = None
    if squared_pairings is not None:
        sqv = np.asarray(squared_pairings, dtype=float)
        if len(sqv) != len(lam):
            raise ConfigError("squared pairings not aligned")
        sq = np.cumsum(mult * sqv)
    V, E, N = [], [], []
    for lc in cutoffs:
        i = int(np.searchsorted(lam, lc, side="right"))
        if i == 0:
            raise ConfigError(f"no spectrum below cutoff {lc}")
        V.append(cumv[i - 1] / cumn[i - 1])
        E.append(sq[i - 1] / cumn[i - 1] if sq is not None else np.nan)
        N.append(cumn[i - 1])
    return CesaroReport(cutoffs=cutoffs, E=np.array(E), V=np.array(V),
                        N=np.array(N))


# ---------------------------------------------------------------------------
# Koopman-von Neumann density-one extraction

@dataclass
class DensityOneSet:
    """Result of the constructive extraction.

    ``indices`` are the kept (0-based) positions; ``density`` is the full
    profile d(n) = #{kept <= n}/n; the construction guarantee
    d >= 1 - threshold is checked at dyadic block ends and exposed through
    ``block_ends`` / ``block_thresholds`` / ``certificate_ok``.
    ``monotone_from`` reports the first block end past which the block-end
    density profile is nondecreasing.
    """
    indices: np.ndarray
    density: np.ndarray
    block_ends: np.ndarray
    block_thresholds: np.ndarray
    certificate_ok: bool
    monotone_from: int

    def tail_sup(self, u: np.ndarray, fraction: float = 0.25) -> float:
        """sup of u over kept indices in the trailing ``fraction`` of range."""
        n = len(u)
        tail = self.indices[self.indices >= int((1 - fraction) * n)]
        return float(np.max(u[tail])) if len(tail) else 0.0


def koopman_von_neumann(u) -> DensityOneSet:
    """Extract a density-one index set along which u -> 0, given that the
    running Cesaro mean of u does.

    Recorded schedule (any schedule meeting the posts conforms): dyadic
    blocks [2^j, 2^{j+1}); threshold eps_j = sqrt(sup over the block of the
    running Cesaro mean); keep indices with u_n <= eps_j.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ConfigError("koopman_von_neumann needs a nonnegative sequence")
    n = len(u)
    if n == 0:
        raise ConfigError("empty sequence")
    C = np.cumsum(u) / np.arange(1, n + 1)
    keep = np.zeros(n, dtype=bool)
    ends, eps_list = [], []
    j = 0
    while 2 ** j <= n:
        lo = 2 ** j - 1
        hi = min(2 ** (j + 1) - 1, n)
        eps = math.sqrt(float(C[lo:hi].max()))
        keep[lo:hi] = u[lo:hi] <= eps
        ends.append(hi)
        eps_list.append(eps)
        j += 1
    density = np.cumsum(keep) / np.arange(1, n + 1)
    ends_arr = np.array(ends, dtype=int)
    eps_arr = np.array(eps_list)
    cert = all(density[e - 1] >= 1 - eps - 1e-12
               for e, eps in zip(ends_arr, eps_arr))
    d_at_ends = density[ends_arr - 1]
    monotone_from = 0
    for i in range(len(d_at_ends)):
        if np.all(np.diff(d_at_ends[i:]) >= -1e-12):
            monotone_from = int(ends_arr[i])
            break
    return DensityOneSet(indices=np.flatnonzero(keep), density=density,
                         block_ends=ends_arr, block_thresholds=eps_arr,
                         certificate_ok=bool(cert), monotone_from=monotone_from)


# ---------------------------------------------------------------------------
# Local Weyl measure and the quantum-limit mass split

@dataclass
class LocalWeylReport:
    cutoffs: np.ndarray
    estimates: dict            # name -> Cesaro profile (complex or real)
    targets: dict              # name -> integral against the reference measure

    def deviation(self, name: str) -> float:
        return float(np.abs(self.estimates[name][-1] - self.targets[name]))


def local_weyl_measure(lambdas, masses: dict, multiplicities, cutoffs,
                       targets: dict) -> LocalWeylReport:
    """Cesaro-limit estimates of ∫ f dw for a family of observables, with
    the reference values (∫ f dnu, or 0 for singular-set concentration)."""
    est = {}
    for name, m in masses.items():
        rep = cesaro_mean(lambdas, np.real(m), multiplicities, cutoffs)
        est[name] = rep.E
    for name in masses:
        if name not in targets:
            raise ConfigError(f"missing target for observable {name!r}")
    return LocalWeylReport(cutoffs=np.atleast_1d(np.asarray(cutoffs, float)),
                           estimates=est, targets=targets)


@dataclass
class QlSplitReport:
    cutoffs: np.ndarray
    theta: float
    beta0_mass: np.ndarray      # Cesaro fraction with s < theta
    betainf_mass: np.ndarray
    theta_sweep: dict           # theta -> beta0 profile


def ql_decomposition_stat(s, weights, cutoffs, theta: float = 0.99,
                          sweep=(0.9, 0.99, 0.999)) -> QlSplitReport:
    """Mass split of the concentration statistic below/above a threshold.

    beta0_mass estimates the Cesaro weight of the part of the quantum limit
    living away from the characteristic cone; the tested claim is that it
    tends to zero, mirroring the density-one support statement.
    """
    s = np.asarray(s, dtype=float)
    if np.any((s < -1e-12) | (s > 1 + 1e-12)):
        raise ConfigError("concentration statistics must lie in [0, 1]")
    w = np.ones(len(s)) if weights is None else np.asarray(weights, float)
    cutidx = np.atleast_1d(np.asarray(cutoffs, dtype=int))
    if np.any(cutidx < 1) or np.any(cutidx > len(s)):
        raise ConfigError("cutoffs index the spectrum prefix: 1..len(s)")

    def profile(th):
        below = np.cumsum(w * (s < th))
        tot = np.cumsum(w)
        return np.array([below[i - 1] / tot[i - 1] for i in cutidx])

    b0 = profile(theta)
    sweep_out = {float(t): profile(t) for t in sweep}
    return QlSplitReport(cutoffs=cutidx, theta=theta, beta0_mass=b0,
                         betainf_mass=1.0 - b0, theta_sweep=sweep_out)
