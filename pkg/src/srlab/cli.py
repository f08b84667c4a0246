"""Command-line orchestration: reproducible experiments over the four
computational modules.

Subcommands: ``geom-check``, ``spectrum``, ``ql``, ``flow``.  Reports are
JSON for scalars/fits and CSV for series; every report embeds the config
hash and format version, and a run manifest lists the emitted files with
their digests.  Exit codes: 0 success, 2 config error, 3 numeric-budget
error, 4 degeneracy error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, ergodic, geometry, heisenberg, singular
from .errors import (BudgetError, ConfigError, DegeneracyError,
                     IncompleteSpectrumError, SrlabError, WindowError)
from .expressions import parse_expression

FORMAT_VERSION = "1"
CACHE_ENV = "SRLAB_CACHE_DIR"
SQ2PI = math.sqrt(2.0 * math.pi)

MODELS = ("heisenberg", "grushin", "martinet", "custom-frame")


@dataclass
class ExperimentConfig:
    model: str
    lambda_max: float = 300.0
    out_dir: str = "srlab-out"
    seed: int = 0
    threads: int = 1
    observables: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    frame_file: str | None = None
    frame_text: str | None = None
    flow: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; pick from {MODELS}")
        if self.lambda_max <= 0:
            raise ConfigError("lambda_max must be positive")
        if self.seed < 0 or self.threads < 1:
            raise ConfigError("seed must be >= 0 and threads >= 1")
        for expr in self.observables:
            parse_expression(expr)  # raises ExpressionError (a ConfigError)
        for key in ("T", "dt", "A0"):
            if key in self.flow and float(self.flow[key]) <= 0:
                raise ConfigError(f"flow.{key} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class Reporter:
    """Collects emitted files and writes the run manifest."""

    def __init__(self, cfg: ExperimentConfig, out_dir: str, command: str):
        self.cfg = cfg
        self.out_dir = out_dir
        self.command = command
        self.files = []
        self.t0 = time.time()
        os.makedirs(out_dir, exist_ok=True)

    def stamp(self) -> dict:
        return {"config_hash": self.cfg.config_hash(),
                "format_version": FORMAT_VERSION,
                "srlab_version": __version__}

    def write_json(self, name: str, payload: dict):
        path = os.path.join(self.out_dir, name)
        body = dict(self.stamp())
        body.update(payload)
        atomic_write(path, json.dumps(body, indent=2, sort_keys=True,
                                      default=_json_default) + "\n")
        self.files.append(name)
        return path

    def write_text(self, name: str, text: str):
        path = os.path.join(self.out_dir, name)
        atomic_write(path, text)
        self.files.append(name)
        return path

    def write_csv(self, name: str, header: str, rows) -> str:
        lines = [f"# config={self.cfg.config_hash()} format={FORMAT_VERSION}",
                 header]
        lines.extend(rows)
        return self.write_text(name, "\n".join(lines) + "\n")

    def finish(self):
        manifest = {
            "command": self.command,
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.config_hash(),
            "format_version": FORMAT_VERSION,
            "srlab_version": __version__,
            "elapsed_seconds": round(time.time() - self.t0, 3),
            "files": {name: _sha256_file(os.path.join(self.out_dir, name))
                      for name in self.files},
        }
        atomic_write(os.path.join(self.out_dir, "manifest.json"),
                     json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _cache_dir(args) -> str:
    return (args.cache_dir or os.environ.get(CACHE_ENV)
            or os.path.join(os.path.expanduser("~"), ".cache", "srlab"))


# ---------------------------------------------------------------------------
# Subcommands

def cmd_geom_check(cfg: ExperimentConfig, rep: Reporter, args) -> int:
    if cfg.model != "custom-frame":
        raise ConfigError("geom-check needs model = custom-frame")
    if cfg.frame_text is not None:
        text = cfg.frame_text
    elif cfg.frame_file:
        with open(cfg.frame_file) as fh:
            text = fh.read()
    else:
        raise ConfigError("custom-frame config needs frame_file or frame_text")
    grid, frame = geometry.parse_frame_config(text)
    reeb = geometry.reeb_field(frame)
    form = geometry.normalized_contact_form(frame, reeb)
    popp = geometry.popp_density(frame, form)

    X, Y, Z = grid.meshgrid()
    coords = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def field_csv(name, values):
        rows = (f"{p[0]!r},{p[1]!r},{p[2]!r},{v!r}"
                for p, v in zip(coords, np.asarray(values).ravel()))
        rep.write_csv(name, "x,y,z,value", rows)

    for i, ax in enumerate("xyz"):
        field_csv(f"reeb_{ax}.csv", reeb.Z.components[i].values)
        field_csv(f"alpha_{ax}.csv", form.alpha.components[i].values)
    field_csv("popp.csv", popp.density.values)
    rep.write_json("geom_residuals.json", {
        "reeb_residual_sup": reeb.residual_sup,
        "reeb_residual_l2": reeb.residual_l2,
        "reeb_tolerance": reeb.tolerance,
        "reeb_within_tolerance": reeb.within_tolerance,
        "dalpha_normalization_error": form.normalization_error,
        "popp_total_mass": popp.total_mass,
    })
    print(f"geom-check: reeb residual {reeb.residual_sup:.3e} "
          f"(tol {reeb.tolerance:.3e}), Popp mass {popp.total_mass:.9g}")
    return 0


def _heisenberg_table(cfg: ExperimentConfig, args):
    """Exact table from the versioned CSV cache (bit-identical on hits)."""
    cache_dir = _cache_dir(args)
    os.makedirs(cache_dir, exist_ok=True)
    key = heisenberg.table_cache_key(cfg.lambda_max, {})
    path = os.path.join(cache_dir, f"heisenberg-{key}.csv")
    if os.path.exists(path) and not args.force_recompute:
        return heisenberg.load_table(path, cfg.lambda_max, {}), path, True
    table = heisenberg.exact_spectrum(cfg.lambda_max)
    heisenberg.save_table(table, path, {})
    return table, path, False


def cmd_spectrum(cfg: ExperimentConfig, rep: Reporter, args) -> int:
    if cfg.model == "heisenberg":
        table, cache_path, hit = _heisenberg_table(cfg, args)
        lo = min(100.0, cfg.lambda_max / 3)
        fit = heisenberg.weyl_constant_fit(table, (lo, cfg.lambda_max))
        with open(cache_path) as fh:
            rep.write_text("spectrum.csv", fh.read())
        rep.write_json("weyl_fit.json", {
            "model": "heisenberg", "c": fit.c, "target_pi2_over_8": fit.target,
            "relative_deviation": fit.relative_deviation,
            "window": list(fit.window), "cache_hit": hit,
            "N_at_lambda_max": int(table.counting(cfg.lambda_max)),
        })
        print(f"heisenberg: fitted c = {fit.c:.6f}, target pi^2/8 = "
              f"{fit.target:.6f} (rel dev {fit.relative_deviation:.2%})")
        return 0
    if cfg.model == "grushin":
        model = singular.GrushinModel(**cfg.grid)
        samples, fit = singular.grushin_counting(model, cfg.lambda_max)
    elif cfg.model == "martinet":
        model = singular.MartinetModel(**cfg.grid)
        samples, fit = singular.martinet_counting(model, cfg.lambda_max,
                                                  threads=cfg.threads)
    else:
        raise ConfigError("spectrum needs model heisenberg|grushin|martinet")
    rows = (f"{float(l)!r},{int(c)},{samples.model},{bool(ok)}"
            for l, c, ok in zip(samples.lambdas, samples.counts,
                                samples.complete))
    rep.write_csv("counting.csv", "lambda,count,model,complete", rows)
    rep.write_json("log_fit.json", dict(fit.to_json_dict(),
                                        certificate=samples.certificate))
    order = "lambda*log(lambda)" if cfg.model == "grushin" \
        else "lambda^2*log(lambda)"
    print(f"{cfg.model}: fitted a = {fit.a:.5f} on {order} "
          f"(window stability {fit.stability:.2%}, "
          f"certificate {samples.certificate:.3f})")
    return 0


def cmd_ql(cfg: ExperimentConfig, rep: Reporter, args) -> int:
    if cfg.model != "heisenberg":
        raise ConfigError("ql currently drives the heisenberg model")
    table, _, _ = _heisenberg_table(cfg, args)
    lam, mm, ll, rr = table.expanded()
    cutoffs = np.unique(np.linspace(max(10.0, cfg.lambda_max / 20),
                                    cfg.lambda_max, 24))

    # concentration statistic profiles and the QL mass split
    s = np.divide(mm.astype(float) ** 2, lam + mm.astype(float) ** 2,
                  out=np.zeros(len(lam)), where=(mm != 0))
    conc = ergodic.cesaro_mean(lam, s, None, cutoffs)
    idx_cuts = [int(np.searchsorted(lam, c, "right")) for c in cutoffs]
    split = ergodic.ql_decomposition_stat(s, None, idx_cuts, theta=0.99)
    rows = (f"{c!r},{e!r},{int(n)},{b0!r}"
            for c, e, n, b0 in zip(conc.cutoffs, conc.E, conc.N,
                                   split.beta0_mass))
    rep.write_csv("concentration.csv", "cutoff,mean_s,N,beta0_mass", rows)

    # KvN extraction on u = 1 - s
    kvn = ergodic.koopman_von_neumann(1.0 - s)
    rep.write_json("kvn_concentration.json", {
        "sequence": "1 - s_n",
        "density_at_end": float(kvn.density[-1]),
        "block_ends": kvn.block_ends,
        "block_thresholds": kvn.block_thresholds,
        "certificate_ok": kvn.certificate_ok,
        "tail_sup": kvn.tail_sup(1.0 - s),
        "monotone_from": kvn.monotone_from,
    })

    # observable Cesaro/variance profiles
    for i, src in enumerate(cfg.observables):
        expr = parse_expression(src)
        if "z" in expr.free_variables:
            raise ConfigError(
                f"observable {src!r}: z-dependent multiplication observables "
                "pair only across sectors and have zero diagonal mass; use "
                "expressions in x, y")
        obs = heisenberg.TorusObservable.from_callable(
            lambda X, Y, e=expr: e(X, Y, 0.0))
        masses = heisenberg.observable_masses(table, obs)
        target = float(np.real(obs.mean()))
        erep = ergodic.cesaro_mean(lam, np.real(masses), None, cutoffs)
        vrep = ergodic.variance(lam, np.real(masses), None, cutoffs, target)
        kv = ergodic.koopman_von_neumann(np.abs(masses - target) ** 2)
        rows = (f"{c!r},{e!r},{v!r},{int(n)}"
                for c, e, v, n in zip(cutoffs, erep.E, vrep.V, erep.N))
        rep.write_csv(f"observable_{i}.csv", "cutoff,E,V,N", rows)
        rep.write_json(f"observable_{i}.json", {
            "expression": src, "target_nu_integral": target,
            "E_at_lambda_max": float(erep.E[-1]),
            "V_at_lambda_max": float(vrep.V[-1]),
            "kvn_density_at_end": float(kv.density[-1]),
            "kvn_certificate_ok": kv.certificate_ok,
        })
        print(f"observable {src!r}: E({cfg.lambda_max:g}) = {erep.E[-1]:+.5f} "
              f"(target {target:+.5f}), V = {vrep.V[-1]:.3e}, "
              f"KvN density {kv.density[-1]:.4f}")
    print(f"concentration: mean s({cfg.lambda_max:g}) = {conc.E[-1]:.4f}, "
          f"KvN(1-s) density {kvn.density[-1]:.4f}")
    return 0


def cmd_flow(cfg: ExperimentConfig, rep: Reporter, args) -> int:
    flow = dict(cfg.flow)
    kind = flow.get("field", "reeb-heisenberg")
    T = float(flow.get("T", 100.0))
    dt = float(flow.get("dt", 0.05))
    q0 = tuple(float(v) for v in flow.get("q0", (0.1, 0.2, 0.3)))
    if kind == "reeb-heisenberg":
        V = (0.0, 0.0, 1.0)
        chart = ergodic.torus_chart((SQ2PI, SQ2PI, 2 * math.pi))
    elif kind == "line":
        A0 = float(flow.get("A0", 2.0 / (1.0 + math.sqrt(5.0))))
        V = (1.0, 0.0, -A0)
        chart = ergodic.torus_chart()
    elif kind == "zero":
        V = (0.0, 0.0, 0.0)
        chart = ergodic.torus_chart()
    elif isinstance(kind, (list, tuple)) and len(kind) == 3:
        V = tuple(parse_expression(c) for c in kind)
        periods = flow.get("periods", (2 * math.pi,) * 3)
        chart = ergodic.torus_chart(tuple(float(p) for p in periods))
    else:
        raise ConfigError(f"unknown flow field {kind!r}")
    traj = ergodic.integrate_flow(V, q0, T, dt, chart=chart)
    rows = (f"{t!r},{p[0]!r},{p[1]!r},{p[2]!r}"
            for t, p in zip(traj.times, traj.points))
    rep.write_csv("trajectory.csv", "t,x,y,z", rows)

    summary = {"field": kind, "T": T, "dt": dt, "q0": list(q0),
               "global_error_estimate": traj.error_estimate,
               "averages": {}}
    for i, src in enumerate(cfg.observables):
        expr = parse_expression(src)
        ts, running, final = ergodic.birkhoff_average(expr, traj)
        rows = (f"{t!r},{v!r}" for t, v in zip(ts, running))
        rep.write_csv(f"birkhoff_{i}.csv", "t,running_average", rows)
        summary["averages"][src] = final
        print(f"birkhoff {src!r}: final average {final:+.6e}")
    rep.write_json("flow_summary.json", summary)
    print(f"flow {kind!r}: error estimate {traj.error_estimate:.3e}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="srlab",
        description="spectral laboratory for 3D contact sub-Riemannian "
                    "structures")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", default=None, help="output directory (overrides "
                   "config out_dir)")
    p.add_argument("--threads", type=int, default=None,
                   help="parallel sector solves (overrides config)")
    p.add_argument("--lambda-max", type=float, default=None,
                   help="override config lambda_max")
    p.add_argument("--force-recompute", action="store_true",
                   help="ignore spectrum caches")
    p.add_argument("--cache-dir", default=None,
                   help=f"spectrum cache directory (default ${CACHE_ENV} "
                        "or ~/.cache/srlab)")
    p.add_argument("command", choices=("geom-check", "spectrum", "ql", "flow"))
    return p


COMMANDS = {"geom-check": cmd_geom_check, "spectrum": cmd_spectrum,
            "ql": cmd_ql, "flow": cmd_flow}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.lambda_max is not None:
            cfg.lambda_max = args.lambda_max
            cfg.__post_init__()
        if args.threads is not None:
            cfg.threads = args.threads
            cfg.__post_init__()
        out_dir = args.out or cfg.out_dir
        rep = Reporter(cfg, out_dir, args.command)
        code = COMMANDS[args.command](cfg, rep, args)
        rep.finish()
        return code
    except (ConfigError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BudgetError, WindowError, IncompleteSpectrumError) as exc:
        print(f"numeric budget error: {exc}", file=sys.stderr)
        return 3
    except DegeneracyError as exc:
        print(f"degeneracy error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
