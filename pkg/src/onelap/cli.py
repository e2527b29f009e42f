"""Command-line experiment runner.

Exit status: 0 success, 2 invalid configuration, 3 solver non-convergence,
4 certificate failure. Every failure also leaves ``error.json`` in the
output directory and a one-line JSON record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import diagnostics as dg
from . import radial_oracle as ro
from .config import ConfigError, RunConfig, dump_config, load_config, oracle_solutions
from .errors import CertificateError, ConvergenceError, DomainError, EnvelopeError, ParameterError
from .plap_solver import ContinuationTrace, continuation, solve_reaction
from .tables import fmt, write_csv

log = logging.getLogger("onelap")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CERTIFICATE = 0, 2, 3, 4

TRACE_COLUMNS = [
    "p",
    "outer_iters",
    "residual",
    "sup_u",
    "min_u",
    "gamma_p_norm",
    "tk_sigma_norm",
    "z_sup",
    "pairing_defect",
    "boundary_flux",
    "classification",
]


class RunFailure(Exception):
    def __init__(self, status, kind, message):
        super().__init__(message)
        self.status = status
        self.kind = kind


# outputs -----------------------------------------------------------------


def nodal_flux(mesh, z):
    """Face field moved to nodes: 0 at the origin, face averages inside, extrapolated at ``R``."""
    zb = dg.boundary_flux(mesh, z)
    return np.concatenate([[0.0], 0.5 * (z[1:] + z[:-1]), [zb]])


def write_trace(trace: ContinuationTrace, path, k_ref):
    rows = []
    for rec in trace.records:
        rows.append(
            [
                rec.p,
                rec.outer_iters,
                rec.residual,
                rec.sup_u,
                rec.min_u,
                rec.estimates.gamma_p_norm,
                rec.estimates.tk_power_norm[k_ref],
                rec.z_sup,
                rec.pairing_defect,
                rec.boundary_flux,
                rec.classification,
            ]
        )
    write_csv(path, TRACE_COLUMNS, rows)


def emit_plotdata(trace: ContinuationTrace, out_dir, k_list=None, subdomains=None):
    """One ``profile_<i>.csv`` (r, u, z) per continuation step and ``summary.csv``.

    ``z`` lives on faces and is moved to nodes by :func:`nodal_flux`. The
    summary columns follow the estimates of the first record, or
    ``k_list``/``subdomains`` for an empty trace. Returns the written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    mesh = trace.mesh
    for i, rec in enumerate(trace.records):
        path = os.path.join(out_dir, f"profile_{i:02d}.csv")
        write_csv(path, ["r", "u", "z"], zip(mesh.nodes, rec.u, nodal_flux(mesh, rec.z)))
        written.append(path)
    if trace.records:
        est = trace.records[0].estimates
        k_list = list(est.tk_power_norm)
        subdomains = sorted({frac for (_, frac) in est.local_tk_norms})
    else:
        k_list = list(k_list or dg.DEFAULT_K_LIST)
        subdomains = list(subdomains or dg.DEFAULT_SUBDOMAINS)
    cols = ["p", "gamma_p_norm", "estimate_bound", "gamma_bv_norm"]
    cols += [f"tk_power_norm_k{fmt(k)}" for k in k_list]
    cols += [f"local_tk_norm_k{fmt(k)}_r{fmt(s)}" for k in k_list for s in subdomains]
    rows = []
    for rec in trace.records:
        est = rec.estimates
        row = [rec.p, est.gamma_p_norm, est.estimate_bound, est.bv_norms["gamma"]]
        row += [est.tk_power_norm[k] for k in k_list]
        row += [est.local_tk_norms[(k, s)] for k in k_list for s in subdomains]
        rows.append(row)
    path = os.path.join(out_dir, "summary.csv")
    write_csv(path, cols, rows)
    written.append(path)
    return written


# modes -------------------------------------------------------------------


def run_oracle(cfg: RunConfig, out_dir):
    mesh = cfg.mesh()
    sols = oracle_solutions(cfg)
    summary = []
    failures = []
    for j, sol in enumerate(sols):
        rep = ro.residual_check(sol, mesh, k=cfg.oracle.k)
        tag = f"_{j}" if len(sols) > 1 else ""
        write_csv(os.path.join(out_dir, f"oracle_residual{tag}.csv"), ["r", "residual", "relative", "checked"], rep.rows())
        write_csv(
            os.path.join(out_dir, f"oracle_pairing{tag}.csv"),
            ["r_face", "pairing_defect"],
            zip(mesh.faces, rep.pairing_faces),
        )
        sol.to_csv(os.path.join(out_dir, f"oracle_solution{tag}.csv"), mesh.nodes)
        summary.append([j, rep.max_relative, rep.pairing_defect, rep.boundary, json.dumps(rep.flags, sort_keys=True)])
        if rep.max_relative > cfg.oracle.tol:
            failures.append(f"solution {j}: relative residual {rep.max_relative:.3e} > {cfg.oracle.tol:g}")
        if abs(rep.pairing_defect) > cfg.oracle.tol * max(1.0, rep.tv):
            failures.append(f"solution {j}: pairing defect {rep.pairing_defect:.3e}")
    write_csv(
        os.path.join(out_dir, "oracle_summary.csv"),
        ["solution", "max_relative_residual", "pairing_defect", "boundary", "flags"],
        summary,
    )
    for row in summary:
        print(f"solution {row[0]}: max relative residual {row[1]:.3e}, pairing defect {row[2]:.3e}, boundary {row[3]}")
    if failures:
        raise RunFailure(EXIT_CERTIFICATE, "CertificateError", "; ".join(failures))


def run_dualnorm(cfg: RunConfig, out_dir):
    mesh = cfg.mesh()
    if cfg.dualnorm.target == "oracle":
        sol = oracle_solutions(cfg)[0]
        u = np.asarray(sol.u(mesh.nodes), dtype=float)
        g = dg.reaction_source(sol.spec, sol.datum, mesh, u)
    else:
        g = cfg.datum_spec().values(mesh.nodes, mesh.N)
    value = ro.radial_dual_norm(g, mesh)
    write_csv(os.path.join(out_dir, "dualnorm.csv"), ["target", "radial_dual_norm"], [[cfg.dualnorm.target, value]])
    print(f"{value:.6f}")


def run_solve(cfg: RunConfig, out_dir):
    mesh = cfg.mesh()
    spec, datum = cfg.nonlinearity_spec(), cfg.datum_spec()
    scfg = cfg.solver_config()
    p = cfg.solver.p
    eps = scfg.epsilon_reg
    try:
        sol = solve_reaction(mesh, p, spec, datum, scfg, eps=eps)
    except ConvergenceError as exc:
        if exc.last_iterate is not None:
            z = dg.vector_field(mesh, p, exc.last_iterate, eps)
            write_csv(os.path.join(out_dir, "solve_profile.csv"), ["r", "u", "z"], zip(mesh.nodes, exc.last_iterate, nodal_flux(mesh, z)))
        raise
    z = dg.vector_field(mesh, p, sol.u, eps)
    write_csv(os.path.join(out_dir, "solve_profile.csv"), ["r", "u", "z"], zip(mesh.nodes, sol.u, nodal_flux(mesh, z)))
    write_csv(
        os.path.join(out_dir, "solve_summary.csv"),
        ["p", "outer_iters", "residual", "sup_u", "z_sup", "clamped"],
        [[p, sol.outer_iters, sol.residual, float(np.max(sol.u)), float(np.max(np.abs(z))), sol.clamped]],
    )
    print(f"p={p:g}: {sol.outer_iters} iterations, residual {sol.residual:.3e}, sup u {np.max(sol.u):.6g}")


def run_continuation(cfg: RunConfig, out_dir):
    mesh = cfg.mesh()
    diag = cfg.diagnostics_config()
    trace = continuation(mesh, cfg.nonlinearity_spec(), cfg.datum_spec(), cfg.solver_config(), diag)
    write_trace(trace, os.path.join(out_dir, "trace.csv"), diag.k_ref)
    if cfg.output.plotdata:
        emit_plotdata(trace, os.path.join(out_dir, "plotdata"), diag.k_list, diag.subdomains)
    for rec in trace.records:
        flag = "" if rec.converged else "  [not converged]"
        print(f"p={rec.p:<6g} iters={rec.outer_iters:<4d} sup u={rec.sup_u:<12.6g} |z|max={rec.z_sup:.4f}{flag}")
    print(f"classification: {trace.classification}")
    if trace.failures:
        ps = ", ".join(f"{r.p:g}" for r in trace.failures)
        raise RunFailure(EXIT_SOLVER, "ConvergenceError", f"no convergence at p = {ps}")
    bound = cfg.diagnostics.z_bound
    if bound is not None and trace.records and trace.records[-1].z_sup > bound:
        raise RunFailure(
            EXIT_CERTIFICATE,
            "CertificateError",
            f"|z| reaches {trace.records[-1].z_sup:.6g} > {bound:g} at p = {trace.records[-1].p:g}",
        )


SINGLE_MODES = {
    "oracle-check": run_oracle,
    "dualnorm": run_dualnorm,
    "solve": run_solve,
    "continuation": run_continuation,
}


def _sweep_instance(args):
    cfg, out_dir = args
    return execute(cfg, out_dir, quiet=True)


def run_sweep(cfg: RunConfig, out_dir, jobs=1):
    sw = cfg.sweep
    tasks = []
    for i, value in enumerate(sw.values):
        inst = cfg.with_value(sw.key, value).with_value("mode", sw.mode)
        tasks.append((inst, os.path.join(out_dir, f"instance_{i:03d}")))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            statuses = list(pool.map(_sweep_instance, tasks))
    else:
        statuses = [_sweep_instance(t) for t in tasks]
    rows = [[i, sw.key, v, st, os.path.basename(d)] for i, (v, st, (_, d)) in enumerate(zip(sw.values, statuses, tasks))]
    write_csv(os.path.join(out_dir, "index.csv"), ["instance", "key", "value", "status", "directory"], rows)
    for row in rows:
        print(f"instance {row[0]}: {sw.key}={row[2]} -> status {row[3]}")
    worst = max(statuses, default=EXIT_OK)
    if worst != EXIT_OK:
        raise RunFailure(worst, "SweepFailure", f"{sum(s != EXIT_OK for s in statuses)} instance(s) failed")


# driver ------------------------------------------------------------------


def _error_record(out_dir, status, kind, message):
    record = {"status": status, "error": kind, "message": message}
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "error.json"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text + "\n")
        except OSError:
            pass
    return status


def execute(cfg: RunConfig, out_dir=None, jobs=1, quiet=False) -> int:
    """Validate and run ``cfg``; return the exit status."""
    out_dir = cfg.output.dir if out_dir is None else out_dir
    try:
        cfg.validate()
    except (ParameterError, DomainError, ValueError) as exc:
        return _error_record(out_dir, EXIT_CONFIG, type(exc).__name__, str(exc))
    os.makedirs(out_dir, exist_ok=True)
    stale = os.path.join(out_dir, "error.json")
    if os.path.exists(stale):
        os.remove(stale)
    try:
        if quiet:
            with open(os.devnull, "w") as sink:
                saved, sys.stdout = sys.stdout, sink
                try:
                    _dispatch(cfg, out_dir, jobs)
                finally:
                    sys.stdout = saved
        else:
            _dispatch(cfg, out_dir, jobs)
    except RunFailure as exc:
        return _error_record(out_dir, exc.status, exc.kind, str(exc))
    except ConvergenceError as exc:
        return _error_record(out_dir, EXIT_SOLVER, "ConvergenceError", str(exc))
    except CertificateError as exc:
        return _error_record(out_dir, EXIT_CERTIFICATE, "CertificateError", str(exc))
    except (ParameterError, DomainError, EnvelopeError) as exc:
        return _error_record(out_dir, EXIT_CONFIG, type(exc).__name__, str(exc))
    return EXIT_OK


def _dispatch(cfg, out_dir, jobs):
    if cfg.mode == "sweep":
        run_sweep(cfg, out_dir, jobs)
    else:
        SINGLE_MODES[cfg.mode](cfg, out_dir)


def build_parser():
    ap = argparse.ArgumentParser(prog="onelap", description="Radial p -> 1 continuation experiments.")
    ap.add_argument("--config", metavar="PATH", help="key=value configuration file")
    ap.add_argument("--mode", choices=["oracle-check", "solve", "continuation", "sweep", "dualnorm"], help="override the configured mode")
    ap.add_argument("--jobs", type=int, default=1, metavar="K", help="parallel sweep instances (default 1)")
    ap.add_argument("--dump-config", action="store_true", help="print the full configuration and exit")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.mode:
            cfg = cfg.with_value("mode", args.mode)
    except (ConfigError, OSError) as exc:
        return _error_record(None, EXIT_CONFIG, type(exc).__name__, str(exc))
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    if args.jobs < 1:
        return _error_record(None, EXIT_CONFIG, "ConfigError", "--jobs must be at least 1")
    return execute(cfg, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
