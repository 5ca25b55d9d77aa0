"""Batch command-line front end.

Subcommands::

    enumerate      exhaustive matching list for a tiny torus
    free-corr      exact correlation and height-variance tables
    coeff-a        closed-form first-order variance/exponent coefficient
    haldane-check  first-order amplitude = exponent report over a weight sweep
    mc             Metropolis run: density and height-variance estimates + fit
    variance-fit   weighted log-fit of an existing (R, var, stderr) table

Configuration is plain-text ``key=value`` lines (``--config FILE``) with
command-line flags taking precedence.  Every subcommand writes a
``<out>.manifest`` capturing the exact configuration and package version,
and data files are deterministic byte-for-byte for a fixed configuration.

Exit codes: 0 success, 1 scientific-check failure (including non-generic
weights), 2 usage error, 3 statistically insufficient sampling.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, fields, replace
from math import pi

import numpy as np

from . import __version__
from .errors import (
    DimerlabError,
    InsufficientSamples,
    NonGenericWeights,
    SizeLimitExceeded,
)
from .free_dimer import (
    Weights,
    dimer_correlation,
    edge_density,
    free_variance_table,
    slope,
)
from .lattice import TorusGeometry, enumerate_matchings, matchings_to_text
from .montecarlo import (
    Estimate,
    MCParams,
    RngStream,
    fit_log_prefactor,
    init_state,
    measure_densities,
    measure_height_sq,
    run_sweeps,
    series_estimate,
    stream_key,
)
from .perturbation import (
    A_first_order,
    coefficient_a,
    generic_weight_sweep,
    haldane_residual,
    nu_first_order,
)

USAGE_ERROR = 2
CHECK_FAILED = 1
INSUFFICIENT = 3

_OUTDIR_ENV = "DIMERLAB_OUTDIR"


@dataclass(frozen=True)
class RunConfig:
    """Flat configuration shared by all subcommands (round-trippable)."""

    subcommand: str = ""
    t1: float = 1.0
    t2: float = 1.0
    t3: float = 1.0
    lam: float = 0.0
    L: int = 32
    R_list: tuple[int, ...] = (4, 8, 16, 32)
    sweeps: int = 20000
    burn_in: int = 2000
    seed: int = 1
    stride: int = 5
    xmax: int = 8
    out: str = "run"
    n_triples: int = 20
    sweep_file: str = ""
    sp2_tol: float = 1e-8
    haldane_tol: float = 1e-6
    checkpoint_every: int = 0
    resume: bool = False
    input: str = ""

    def weights(self) -> Weights:
        return Weights(self.t1, self.t2, self.t3)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    lines = [f"{f.name}={_fmt(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key=value`` lines; unknown keys are rejected."""
    cfg = base if base is not None else RunConfig()
    ftypes = {f.name: f.type for f in fields(RunConfig)}
    updates = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in ftypes:
            raise ValueError(f"line {ln}: unknown key {key!r}")
        updates[key] = _coerce(key, val)
    return replace(cfg, **updates)


def _coerce(key: str, val: str):
    proto = getattr(RunConfig(), key)
    if isinstance(proto, bool):
        if val.lower() in ("true", "1", "yes"):
            return True
        if val.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{key}: expected boolean, got {val!r}")
    if isinstance(proto, int):
        return int(val)
    if isinstance(proto, float):
        return float(val)
    if isinstance(proto, tuple):
        return tuple(int(x) for x in val.split(",") if x)
    return val


def _out_path(cfg: RunConfig, suffix: str) -> str:
    base = cfg.out
    outdir = os.environ.get(_OUTDIR_ENV, "")
    if outdir and not os.path.isabs(base):
        base = os.path.join(outdir, base)
    d = os.path.dirname(base)
    if d:
        os.makedirs(d, exist_ok=True)
    return base + suffix


def _write_manifest(cfg: RunConfig) -> None:
    with open(_out_path(cfg, ".manifest"), "w") as fh:
        fh.write(f"dimerlab_version={__version__}\n")
        fh.write(serialize_config(cfg))


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_enumerate(cfg: RunConfig) -> int:
    geom = TorusGeometry(cfg.L)
    configs = enumerate_matchings(geom)
    path = _out_path(cfg, ".matchings.txt")
    with open(path, "w") as fh:
        fh.write(matchings_to_text(geom, configs))
    _write_manifest(cfg)
    print(f"L={cfg.L}: {len(configs)} matchings -> {path}")
    return 0


def cmd_free_corr(cfg: RunConfig) -> int:
    w = cfg.weights()
    rows = []
    for n in range(1, cfg.xmax + 1):
        for x in ((n, 0), (0, n)):
            for r in (1, 2, 3, 4):
                for rp in (1, 2, 3, 4):
                    rows.append([x[0], x[1], r, rp,
                                 dimer_correlation(w, x, r, rp)])
    _write_csv(_out_path(cfg, ".corr.csv"), ["x1", "x2", "r", "rp", "corr"], rows)
    table = free_variance_table(w, cfg.R_list)
    _write_csv(_out_path(cfg, ".var.csv"), ["R", "var"],
               [[R, v] for R, v in table])
    _write_manifest(cfg)
    if len(table) >= 2:
        logs = np.log([R for R, _ in table])
        vs = [v for _, v in table]
        sl = np.polyfit(logs, vs, 1)[0]
        print(f"variance log-slope * pi^2 = {sl * pi**2:.6f}")
    d = [edge_density(w, r) for r in (1, 2, 3, 4)]
    print(f"densities: {d[0]:.6f} {d[1]:.6f} {d[2]:.6f} {d[3]:.6f}; "
          f"slope = {slope(w)}")
    return 0


def cmd_coeff_a(cfg: RunConfig) -> int:
    w = cfg.weights()
    a = coefficient_a(w)
    _write_csv(_out_path(cfg, ".coeff_a.csv"), ["t1", "t2", "t3", "a"],
               [[_fmt(w.t1), _fmt(w.t2), _fmt(w.t3), a]])
    _write_manifest(cfg)
    print(f"a({w.t1:g},{w.t2:g},{w.t3:g}) = {a:.12f}")
    return 0


def _haldane_triples(cfg: RunConfig) -> list[Weights]:
    if cfg.sweep_file:
        out = []
        with open(cfg.sweep_file) as fh:
            for raw in fh:
                line = raw.strip().replace(",", " ")
                if not line or line.startswith("#"):
                    continue
                t1, t2, t3 = (float(x) for x in line.split())
                out.append(Weights(t1, t2, t3))
        return out
    return generic_weight_sweep(cfg.n_triples)


def cmd_haldane(cfg: RunConfig) -> int:
    triples = _haldane_triples(cfg)
    rows = []
    failures = []
    for w in triples:
        a = coefficient_a(w)
        a1 = A_first_order(w)
        nu1 = nu_first_order(w)
        sp2, goo1 = haldane_residual(w)
        rows.append([w.t1, w.t2, w.t3, a, a1, nu1, sp2, goo1])
        ok = (sp2 <= cfg.sp2_tol and goo1 <= cfg.sp2_tol
              and abs(a1 - nu1) <= cfg.haldane_tol * abs(a))
        if not ok:
            failures.append(w)
    _write_csv(_out_path(cfg, ".haldane.csv"),
               ["t1", "t2", "t3", "a", "A1", "nu1", "sp2_residual",
                "goo1_residual"], rows)
    _write_manifest(cfg)
    print(f"{len(triples)} triples; a(1,1,1) = {coefficient_a(Weights(1, 1, 1)):.12f}")
    if failures:
        for w in failures:
            print(f"FAIL: residuals above tolerance at t={w.as_tuple()}",
                  file=sys.stderr)
        return CHECK_FAILED
    print("all residual checks passed")
    return 0


def _mc_checkpoint_path(cfg: RunConfig) -> str:
    return _out_path(cfg, ".ckpt.npz")


def cmd_mc(cfg: RunConfig) -> int:
    w = cfg.weights()
    r_list = [R for R in cfg.R_list if 1 <= R <= cfg.L // 4]
    params = MCParams(L=cfg.L, weights=w, lam=cfg.lam, sweeps=cfg.sweeps,
                      burn_in=cfg.burn_in, seed=cfg.seed,
                      measurement_stride=cfg.stride)
    _write_manifest(cfg)

    n_meas = (params.sweeps - params.burn_in) // params.measurement_stride
    n_obs = 4 + len(r_list)
    state = init_state(params)
    stream = RngStream(stream_key(params.seed, 0))
    start = 0
    rows = np.empty((n_meas, n_obs), dtype=float)
    ck_path = _mc_checkpoint_path(cfg)
    if cfg.resume and os.path.exists(ck_path):
        ck = np.load(ck_path)
        state.cfg[...] = ck["cfg"]
        state.flip_count = int(ck["flip_count"])
        state.log_weight = float(ck["log_weight"])
        stream.counter = int(ck["counter"])
        start = int(ck["rows_done"])
        rows[:start] = ck["rows"][:start]
        print(f"resumed at measurement {start}/{n_meas}")
    elif params.burn_in:
        state = run_sweeps(state, params, stream, params.burn_in)

    for i in range(start, n_meas):
        state = run_sweeps(state, params, stream, params.measurement_stride)
        obs = [*measure_densities(state.cfg)]
        if r_list:
            obs.extend(measure_height_sq(state.cfg, r_list))
        rows[i] = obs
        done_sweeps = (i + 1) * params.measurement_stride
        if cfg.checkpoint_every and done_sweeps % cfg.checkpoint_every == 0:
            np.savez(ck_path, cfg=state.cfg, flip_count=state.flip_count,
                     log_weight=state.log_weight, counter=stream.counter,
                     rows_done=i + 1, rows=rows)

    names = [f"d{r}" for r in (1, 2, 3, 4)] + [f"hsq_R{R}" for R in r_list]
    sample_rows = []
    for i in range(n_meas):
        sweep = params.burn_in + (i + 1) * params.measurement_stride
        for j, name in enumerate(names):
            sample_rows.append([sweep, name, float(rows[i, j])])
    _write_csv(_out_path(cfg, ".samples.csv"), ["sweep", "observable", "value"],
               sample_rows)

    try:
        dens = [series_estimate(rows[:, j]) for j in range(4)]
        _write_csv(_out_path(cfg, ".densities.csv"),
                   ["r", "mean", "stderr", "tau_int", "n_samples"],
                   [[r, e.mean, e.stderr, e.tau_int, e.n_samples]
                    for r, e in zip((1, 2, 3, 4), dens)])
        if r_list:
            ests = {R: series_estimate(rows[:, 4 + j])
                    for j, R in enumerate(r_list)}
            fit = fit_log_prefactor([(R, ests[R]) for R in r_list])
            with open(_out_path(cfg, ".fit.txt"), "w") as fh:
                for R in r_list:
                    e = ests[R]
                    fh.write(f"R={R} var={_fmt(e.mean)} stderr={_fmt(e.stderr)} "
                             f"tau_int={_fmt(e.tau_int)}\n")
                fh.write(f"A_hat={_fmt(fit.A_hat)} err={_fmt(fit.err)} "
                         f"chi2={_fmt(fit.chi2)}\n")
            print(f"A_hat = {fit.A_hat:.4f} +/- {fit.err:.4f}")
    except InsufficientSamples as exc:
        print(f"insufficient samples: {exc}", file=sys.stderr)
        return INSUFFICIENT
    return 0


def cmd_variance_fit(cfg: RunConfig) -> int:
    pts = []
    with open(cfg.input) as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            est = Estimate(float(row["var"]), float(row["stderr"]), 0.5, 1)
            pts.append((int(row["R"]), est))
    fit = fit_log_prefactor(pts)
    with open(_out_path(cfg, ".fit.txt"), "w") as fh:
        for R, e in pts:
            fh.write(f"R={R} var={_fmt(e.mean)} stderr={_fmt(e.stderr)}\n")
        fh.write(f"A_hat={_fmt(fit.A_hat)} err={_fmt(fit.err)} "
                 f"chi2={_fmt(fit.chi2)}\n")
    _write_manifest(cfg)
    print(f"A_hat = {fit.A_hat:.6f} +/- {fit.err:.6f} (chi2 = {fit.chi2:.3f})")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

_COMMANDS = {
    "enumerate": cmd_enumerate,
    "free-corr": cmd_free_corr,
    "coeff-a": cmd_coeff_a,
    "haldane-check": cmd_haldane,
    "mc": cmd_mc,
    "variance-fit": cmd_variance_fit,
}


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="key=value configuration file")
    sp.add_argument("--out", help="output path prefix")
    sp.add_argument("--t1", type=float)
    sp.add_argument("--t2", type=float)
    sp.add_argument("--t3", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dimerlab",
        description="Square-lattice dimer models: exact solution, "
                    "first-order perturbation theory, Metropolis sampling.")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("enumerate", help="list all matchings of a tiny torus")
    _add_common(sp)
    sp.add_argument("--L", type=int, help="torus side (even, <= 6)")

    sp = sub.add_parser("free-corr",
                        help="exact correlations; CSV columns x1,x2,r,rp,corr "
                             "and R,var")
    _add_common(sp)
    sp.add_argument("--xmax", type=int, help="max correlation separation")
    sp.add_argument("--R-list", dest="R_list",
                    help="comma-separated variance separations")

    sp = sub.add_parser("coeff-a", help="closed-form coefficient a")
    _add_common(sp)

    sp = sub.add_parser("haldane-check",
                        help="amplitude = exponent at first order; CSV columns "
                             "t1,t2,t3,a,A1,nu1,sp2_residual,goo1_residual")
    _add_common(sp)
    sp.add_argument("--sweep-file", dest="sweep_file",
                    help="file of weight triples (t1 t2 t3 per line)")
    sp.add_argument("--n-triples", dest="n_triples", type=int)
    sp.add_argument("--sp2-tol", dest="sp2_tol", type=float)
    sp.add_argument("--haldane-tol", dest="haldane_tol", type=float)

    sp = sub.add_parser("mc", help="Metropolis sampling run; emits samples, "
                                   "densities, and a variance fit")
    _add_common(sp)
    sp.add_argument("--L", type=int)
    sp.add_argument("--lam", type=float)
    sp.add_argument("--sweeps", type=int)
    sp.add_argument("--burn-in", dest="burn_in", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--R-list", dest="R_list")
    sp.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    sp.add_argument("--resume", action="store_true", default=None)

    sp = sub.add_parser("variance-fit",
                        help="fit an existing CSV with columns R,var,stderr")
    _add_common(sp)
    sp.add_argument("--input", help="input CSV path")

    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(subcommand=args.subcommand)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = parse_config(fh.read(), cfg)
        cfg = replace(cfg, subcommand=args.subcommand)
    overrides = {}
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None and f.name != "subcommand":
            if f.name == "R_list" and isinstance(val, str):
                val = tuple(int(x) for x in val.split(",") if x)
            overrides[f.name] = val
    return replace(cfg, **overrides)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        return _COMMANDS[args.subcommand](cfg)
    except NonGenericWeights as exc:
        print(f"non-generic weights: {exc}", file=sys.stderr)
        return CHECK_FAILED
    except SizeLimitExceeded as exc:
        print(f"size limit: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except InsufficientSamples as exc:
        print(f"insufficient samples: {exc}", file=sys.stderr)
        return INSUFFICIENT
    except DimerlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
