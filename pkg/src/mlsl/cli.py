"""Command-line front end: ``mlsl <subcommand> [--config PATH] [--out DIR] ...``.

Each run writes its outputs atomically into the output directory and then
``manifest.json`` listing every file with its sha256.  Exit codes: 0 on
success, 2 for configuration errors, 3 for numerical failures.
"""

import argparse
import csv
import datetime
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import RunConfig, config_hash, emit, parse_config, validate
from .errors import ConfigError, MLSLError
from .spectral import _atomic_write, save_fields

SUBCOMMANDS = ("soliton", "inertia", "simulate", "linearize", "coercivity", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
DEFAULT_OUT = "mlsl-out"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n").encode()


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def csv_bytes(columns, rows):
    """Deterministic CSV: header row, repr-formatted floats, '\\n' line ends."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue().encode()


class _Outputs:
    """Single writer for one run's output directory."""

    def __init__(self, out_dir):
        self.dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.files = []

    def _record(self, name):
        path = os.path.join(self.dir, name)
        with open(path, "rb") as fh:
            data = fh.read()
        self.files.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})

    def write(self, name, data):
        _atomic_write(os.path.join(self.dir, name), data)
        self._record(name)

    def json(self, name, obj):
        self.write(name, _json_bytes(obj))

    def csv(self, name, columns, rows):
        self.write(name, csv_bytes(columns, rows))

    def fields(self, name, fields, meta):
        side = save_fields(os.path.join(self.dir, name), fields, meta)
        self._record(name)
        self._record(os.path.basename(side))


# --- subcommands ------------------------------------------------------------

def _soliton_row(cfg, v, omega, grid, profile):
    from .soliton import build_soliton, effective_mass, stationarity_residual, PARALLEL, PERPENDICULAR

    S = build_soliton(v, omega, profile, grid, cfg.m, cfg.I)
    s = float(np.linalg.norm(v))
    wn = float(np.linalg.norm(omega))
    orient = PERPENDICULAR if S.params.cls == PERPENDICULAR else PARALLEL
    axis = v / s if s > 0 else np.array([1.0, 0.0, 0.0])
    return S, {
        "speed": s, "omega_norm": wn, "class": S.params.cls,
        "I": cfg.I, "I_eff": S.inertia, "I_eff_box": S.inertia_box,
        "m_eff": effective_mass(profile, s, wn, cfg.m, orientation=orient),
        "m_eff_box": effective_mass(profile, s, wn, cfg.m, grid, orient, axis),
        "P": S.P, "pi": S.pi, "energy": S.energy, "residual": stationarity_residual(S),
    }


def run_soliton(cfg, out, emit_fields=False):
    v, omega = cfg.velocity, cfg.spin
    S, row = _soliton_row(cfg, v, omega, cfg.grid(), cfg.profile())
    row.update({"v": v, "omega": omega, "N": cfg.N, "L": cfg.L})
    out.json("soliton.json", row)
    if emit_fields:
        out.fields("soliton_fields.mlsf", [S.A, S.Pi], {"v": v.tolist(), "omega": omega.tolist()})
    return row


def run_inertia(cfg, out, emit_fields=False):
    from .soliton import (PARALLEL, PERPENDICULAR, alpha_difference_series, closed_form_alphas,
                          effective_inertia, pi_mismatch)

    prof = cfg.profile()
    C = prof.g_moment
    rows = []
    for s in np.round(np.arange(1, 10) * 0.1, 12):
        a1, a2 = closed_form_alphas(C, s)
        rows.append([float(s), a1, a2, effective_inertia(prof, s, PARALLEL, 0.0),
                     effective_inertia(prof, s, PERPENDICULAR, 0.0), alpha_difference_series(C, s)])
    out.csv("inertia.csv", ["v", "alpha1", "alpha2", "dI_parallel", "dI_perpendicular", "alpha_diff_series"], rows)
    s = float(np.linalg.norm(cfg.velocity))
    summary = {"v": cfg.velocity, "omega": cfg.spin, "C_rho": C, "I": cfg.I,
               "I_eff_parallel": effective_inertia(prof, s, PARALLEL, cfg.I),
               "I_eff_perpendicular": effective_inertia(prof, s, PERPENDICULAR, cfg.I)}
    if np.any(cfg.spin != 0):
        pm = pi_mismatch(prof, cfg.velocity, cfg.spin, cfg.I)
        summary.update({"pi": pm.pi, "pi_parallel": pm.parallel})
    out.json("inertia.json", summary)
    return summary


def run_simulate(cfg, out, emit_fields=False):
    from .dynamics import orbital_stability_experiment

    rep = orbital_stability_experiment(cfg.velocity, cfg.eps, cfg.T, cfg.seed, cfg.profile(), cfg.grid(),
                                       cfg.m, cfg.I, dt=cfg.dt, record_every=cfg.record_every,
                                       scheme=cfg.scheme, k0=cfg.k0, window=cfg.window)
    tr = rep.trajectory
    out.csv("trajectory.csv", tr.columns, tr.rows())
    summary = rep.summary()
    summary.update({"dt": tr.dt, "scheme": tr.scheme})
    out.json("simulate.json", summary)
    if emit_fields:
        out.fields("final_fields.mlsf", [tr.final.A, tr.final.Pi], {"pi": tr.final.pi.tolist(), "T": cfg.T})
    return summary


def _rest_soliton(cfg, N=None):
    from .soliton import build_soliton

    if np.any(cfg.velocity != 0):
        raise ConfigError("this experiment needs a soliton at rest (v = 0)")
    return build_soliton(np.zeros(3), cfg.spin, cfg.profile(), cfg.grid(N), cfg.m, cfg.I)


def run_linearize(cfg, out, emit_fields=False):
    from .dynamics import cfl_limit, random_perturbation
    from .linearized import integrate_linear, tangent_frame

    S = _rest_soliton(cfg)
    frame = tangent_frame(S)
    rng = np.random.default_rng(cfg.seed)
    xi = frame.project(random_perturbation(S.grid, cfg.eps or 1.0, rng, k0=cfg.k0, window=cfg.window))
    dt = cfg.dt if cfg.dt is not None else cfl_limit(S.grid, 0.0)
    rec = integrate_linear(xi, S, cfg.T, dt, record_every=cfg.record_every, frame=frame)
    out.csv("linearized.csv", rec.columns, rec.rows())
    summary = {"omega": cfg.spin, "dt": rec.dt, "L_drift": rec.L_drift, "H_drift": rec.H_drift,
               "gamma2_drift": rec.gamma2_drift, "growth": rec.growth, "max_defect": rec.max_defect}
    out.json("linearize.json", summary)
    if emit_fields:
        out.fields("final_perturbation.mlsf", [rec.final.alpha, rec.final.beta], {"gamma": rec.final.gamma.tolist()})
    return summary


def run_coercivity(cfg, out, emit_fields=False):
    from .linearized import tangent_frame
    from .operators import coercivity_constant

    frame = tangent_frame(_rest_soliton(cfg))
    rep = coercivity_constant(frame, cfg.K, cfg.resolutions)
    summary = rep.summary()
    out.csv("eigenvalues.csv", ["index", "eigenvalue"], enumerate(rep.eigenvalues))
    out.csv("kappa.csv", ["N", "kappa"], zip(rep.resolutions, rep.kappas))
    out.json("coercivity.json", summary)
    return summary


SWEEP_COLUMNS = {
    "v": ["speed", "omega_norm", "m_eff", "m_eff_box", "I_eff", "I_eff_box", "P1", "P2", "P3", "energy", "residual"],
    "omega": ["speed", "omega_norm", "m_eff", "m_eff_box", "I_eff", "I_eff_box", "P1", "P2", "P3", "energy",
              "residual"],
    "eps": ["eps", "sup_d", "ratio", "d0", "H_drift", "v_star1", "v_star2", "v_star3"],
}


def _sweep_task(cfg_dict, value):
    """One sweep point; runs in a worker process with its own state."""
    from .dynamics import orbital_stability_experiment

    cfg = RunConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg_dict.items()})
    prof, grid = cfg.profile(), cfg.grid()
    if cfg.sweep == "eps":
        rep = orbital_stability_experiment(cfg.velocity, value, cfg.T, cfg.seed, prof, grid, cfg.m, cfg.I,
                                           dt=cfg.dt, record_every=cfg.record_every, scheme=cfg.scheme,
                                           k0=cfg.k0, window=cfg.window)
        return [value, rep.sup_d, rep.ratio, rep.d0, rep.H_drift, *rep.v_star]
    v, omega = cfg.velocity, cfg.spin
    if cfg.sweep == "v":
        s = np.linalg.norm(v)
        v = value * (v / s if s > 0 else np.array([1.0, 0.0, 0.0]))
    else:
        wn = np.linalg.norm(omega)
        omega = value * (omega / wn if wn > 0 else np.array([0.0, 0.0, 1.0]))
    _, row = _soliton_row(cfg, v, omega, grid, prof)
    return [row["speed"], row["omega_norm"], row["m_eff"], row["m_eff_box"], row["I_eff"], row["I_eff_box"],
            *row["P"], row["energy"], row["residual"]]


def run_sweep(cfg, out, emit_fields=False, workers=None):
    values = [float(x) for x in cfg.values]
    payload = cfg.to_dict()
    if workers == 1:
        rows = [_sweep_task(payload, x) for x in values]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_task, [payload] * len(values), values))
    out.csv("sweep.csv", SWEEP_COLUMNS[cfg.sweep], rows)
    summary = {"sweep": cfg.sweep, "values": values, "points": len(rows)}
    out.json("sweep.json", summary)
    return summary


RUNNERS = {"soliton": run_soliton, "inertia": run_inertia, "simulate": run_simulate,
           "linearize": run_linearize, "coercivity": run_coercivity, "sweep": run_sweep}


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def run(subcommand, cfg, out_dir, emit_fields=False, workers=None):
    """Execute one subcommand; returns (exit code, manifest dict)."""
    if subcommand not in RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    out = _Outputs(out_dir)
    manifest = {"subcommand": subcommand, "version": __version__, "config_hash": config_hash(cfg),
                "config": emit(cfg), "seed": cfg.seed, "started": _now()}
    code, error = EXIT_OK, None
    try:
        kwargs = {"workers": workers} if subcommand == "sweep" else {}
        RUNNERS[subcommand](cfg, out, emit_fields=emit_fields, **kwargs)
    except ConfigError as exc:
        code, error = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    except (MLSLError, FloatingPointError, np.linalg.LinAlgError) as exc:
        code, error = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
    manifest.update({"finished": _now(), "status": "ok" if code == EXIT_OK else "error",
                     "exit_code": code, "error": error, "files": out.files})
    _atomic_write(os.path.join(out_dir, "manifest.json"), _json_bytes(manifest))
    return code, manifest


def build_parser():
    p = argparse.ArgumentParser(prog="mlsl", description="Soliton experiments for the reduced Maxwell-Lorentz model.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", metavar="PATH", help="run configuration (defaults apply when omitted)")
    p.add_argument("--out", metavar="DIR", help=f"output directory (default $MLSL_OUT_DIR or ./{DEFAULT_OUT})")
    p.add_argument("--seed", type=int, metavar="U64", help="override the configured seed")
    p.add_argument("--workers", type=int, metavar="N", help="sweep worker processes (default: CPU count)")
    p.add_argument("--emit-fields", action="store_true", help="also write binary spectral snapshots")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else validate(RunConfig())
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except ConfigError as exc:
        print(f"mlsl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or os.environ.get("MLSL_OUT_DIR") or DEFAULT_OUT
    code, manifest = run(args.subcommand, cfg, out_dir, args.emit_fields, args.workers)
    if code != EXIT_OK:
        print(f"mlsl: {manifest['error']}", file=sys.stderr)
    else:
        print(f"mlsl: wrote {len(manifest['files'])} files to {out_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
