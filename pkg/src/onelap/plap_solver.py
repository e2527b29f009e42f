"""Radial p-Laplacian solves and the continuation ``p -> 1+``.

The discrete problem is conservative: with face gradients
``x_f = (u[i+1] - u[i]) / dr_f`` and fluxes ``z_f = a(x_f) x_f``,
``a(x) = (x^2 + eps^2)^((p-2)/2)``, node ``i`` balances

    r_{i+1/2}^(N-1) z_{i+1/2} - r_{i-1/2}^(N-1) z_{i-1/2} + w_i s_i = 0

for a nodal source ``s``. There is no flux through the origin and
``u(R) = 0``. These are the stationarity conditions of

    J_p(u) = sum_f (1/p) (x_f^2 + eps^2)^(p/2) r_f^(N-1) dr_f - sum_i w_i s_i u_i.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import diagnostics as dg
from .auxfn import phi_for
from .errors import ConvergenceError, EnvelopeError, InsufficientDataError, ParameterError
from .mesh import RadialMesh
from .nonlinearity import DatumSpec, NonlinearitySpec, truncate_f, truncate_h

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (1.5, 1.3, 1.15, 1.08, 1.04, 1.02)


@dataclass(frozen=True)
class SolverConfig:
    epsilon_reg: float = 1e-6
    theta: float = 0.5
    tol_outer: float = 1e-9
    tol_inner: float = 1e-10
    maxit_outer: int = 200
    maxit_inner: int = 200
    schedule: tuple = DEFAULT_SCHEDULE
    method: str = "newton"
    scale_eps: bool = True

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(float(p) for p in self.schedule))
        if not self.epsilon_reg > 0:
            raise ParameterError("epsilon_reg must be positive")
        if not 0 < self.theta <= 1:
            raise ParameterError("theta must lie in (0, 1]")
        if not (self.tol_outer > 0 and self.tol_inner > 0):
            raise ParameterError("tolerances must be positive")
        if self.maxit_outer < 1 or self.maxit_inner < 1:
            raise ParameterError("iteration limits must be positive")
        if self.method not in ("newton", "picard"):
            raise ParameterError("method must be 'newton' or 'picard'")
        for p in self.schedule:
            if not 1 < p < 2:
                raise ParameterError(f"schedule entries must lie in (1, 2), got {p}")
        if any(b >= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ParameterError("schedule must be strictly decreasing")

    def eps_for(self, p):
        """Regularization at ``p``, scaled with ``p - 1`` relative to the first schedule entry."""
        if not self.scale_eps or not self.schedule:
            return self.epsilon_reg
        return self.epsilon_reg * (p - 1.0) / (self.schedule[0] - 1.0)


def _flux_and_slope(x, p, eps):
    q = x * x + eps * eps
    z = q ** ((p - 2.0) / 2.0) * x
    dz = q ** ((p - 4.0) / 2.0) * ((p - 1.0) * x * x + eps * eps)
    return z, dz


def energy(mesh: RadialMesh, p, u, w, eps=0.0):
    """Discrete energy ``J_p(u)`` for the nodal source ``w``."""
    x = mesh.grad(u)
    return float(np.sum((x * x + eps * eps) ** (p / 2.0) / p * mesh.face_measure) - np.sum(mesh.weights * w * u))


def _residual(mesh, p, u, load, eps):
    """Energy gradient on all nodes (the Dirichlet entry is meaningless)."""
    z, dz = _flux_and_slope(mesh.grad(u), p, eps)
    flux = mesh.face_weights * z
    g = -load.copy()
    g[:-1] -= flux
    g[1:] += flux
    return g, dz * mesh.face_weights / mesh.dr


def _tridiag_solve(k, diag_extra, rhs):
    """Solve the stiffness system on the free nodes ``0..M-1``.

    ``k`` holds face conductances, ``diag_extra`` adds to the diagonal.
    """
    n = rhs.size
    main = np.zeros(n)
    main[:] += k[:n]
    main[1:] += k[: n - 1]
    main += diag_extra
    ab = np.zeros((3, n))
    ab[0, 1:] = -k[: n - 1]
    ab[1] = main
    ab[2, :-1] = -k[: n - 1]
    return solve_banded((1, 1), ab, rhs)


def _scale(load, flux):
    return max(float(np.max(np.abs(load), initial=0.0)), float(np.max(np.abs(flux), initial=0.0)) * 1e-300, 1e-300)


def solve_plap_fixed_source(mesh: RadialMesh, p, w, cfg: SolverConfig | None = None, u0=None, eps=None):
    """Minimize ``J_p`` for a frozen nodal source ``w >= 0``.

    Damped Newton with Armijo backtracking on the energy. Stops when
    ``max|grad J| <= tol_inner * max|w_i * weight_i|``, or when the line
    search stalls with only the rounding floor of ``u`` above that level.
    """
    cfg = cfg or SolverConfig()
    eps = cfg.epsilon_reg if eps is None else eps
    if not 1 < p <= 2:
        raise ParameterError(f"p must lie in (1, 2], got {p!r}")
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError("source must be finite and nonnegative")
    load = mesh.weights * w
    u = np.zeros(mesh.M + 1) if u0 is None else np.array(u0, dtype=float)
    u[-1] = 0.0
    ref = float(np.max(load, initial=0.0))
    if ref == 0.0:
        return np.zeros(mesh.M + 1)
    J = energy(mesh, p, u, w, eps)
    res = math.inf
    for it in range(cfg.maxit_inner):
        g, k = _residual(mesh, p, u, load, eps)
        res = float(np.max(np.abs(g[:-1]))) / ref
        if res <= cfg.tol_inner:
            return u
        d = np.zeros_like(u)
        d[:-1] = _tridiag_solve(k, 0.0, -g[:-1])
        slope = float(np.dot(g[:-1], d[:-1]))
        # below this the energy cannot resolve the predicted decrease
        noise = 1e-13 * max(abs(J), float(np.sum(np.abs(load * u))))
        trial = None
        if -slope > noise:
            t = 1.0
            while t > 1e-12:
                cand = u + t * d
                Jt = energy(mesh, p, cand, w, eps)
                if Jt <= J + 1e-4 * t * slope:
                    trial = cand
                    break
                t *= 0.5
        if trial is None:
            t = 1.0
            while t > 1e-6:
                cand = u + t * d
                g2, _ = _residual(mesh, p, cand, load, eps)
                if float(np.max(np.abs(g2[:-1]))) / ref < (1.0 - 1e-4 * t) * res:
                    trial = cand
                    break
                t *= 0.5
        if trial is None:
            break
        u = trial
        J = energy(mesh, p, u, w, eps)
    g, _ = _residual(mesh, p, u, load, eps)
    res = float(np.max(np.abs(g[:-1]))) / ref
    # stalled: accept if only rounding of u keeps the residual up
    if res <= cfg.tol_inner or _floor_residual(mesh, p, u, g[:-1], load, eps) <= cfg.tol_inner:
        return u
    raise ConvergenceError(
        f"inner Newton stalled at residual {res:.3e} (p={p})", last_iterate=u, residual=res, iterations=cfg.maxit_inner
    )


@dataclass
class ReactionResult:
    u: np.ndarray
    outer_iters: int
    residual: float
    clamped: float
    converged: bool = True


def _reaction_residual(mesh, p, u, hp, fp, eps):
    load = mesh.weights * hp(u) * fp
    g, k = _residual(mesh, p, u, load, eps)
    return g[:-1], k, load


def _initial_guess(mesh, p, hp, fp, cfg, eps):
    src = hp(np.ones(mesh.M + 1)) * fp
    if not np.any(src > 0):
        src = fp
    try:
        return solve_plap_fixed_source(mesh, p, src, cfg, eps=eps)
    except ConvergenceError as exc:
        return exc.last_iterate


def solve_reaction(
    mesh: RadialMesh,
    p,
    spec: NonlinearitySpec,
    f: DatumSpec,
    cfg: SolverConfig | None = None,
    u0=None,
    eps=None,
) -> ReactionResult:
    """Solve ``-Delta_p u = h_p(u) f_p`` with ``u(R) = 0``.

    ``method="picard"`` runs the damped fixed point
    ``u <- (1 - theta) u + theta S(h_p(u) f_p)`` with ``S`` the frozen-source
    solve; the damping is capped at ``2(p-1)/(2p-1)``, the largest value
    that contracts the scaling mode. ``method="newton"`` solves the coupled
    system with the Jacobian of the reaction term (its nonpositive part when
    ``h`` is not decreasing) and backtracking on the residual norm, falling
    back to a Picard step when the line search fails.

    Stops when the relative change of ``u`` drops below ``tol_outer`` and the
    residual below ``sqrt(tol_outer)``. Negative values are clamped to 0 and
    the clamp size reported.
    """
    cfg = cfg or SolverConfig()
    eps = cfg.eps_for(p) if eps is None else eps
    hp = truncate_h(spec, p)
    fp = truncate_f(f, p, mesh)
    if u0 is None:
        u = _initial_guess(mesh, p, hp, fp, cfg, eps)
    else:
        u = np.maximum(np.array(u0, dtype=float), 0.0)
        u[-1] = 0.0
    if cfg.method == "picard":
        return _picard(mesh, p, hp, fp, cfg, eps, u)
    return _newton(mesh, p, hp, fp, cfg, eps, u)


def _finish(u, iters, res, converged=True):
    clamp = float(max(0.0, -np.min(u)))
    if clamp > 0:
        log.debug("clamped negative undershoot of size %.3e", clamp)
    return ReactionResult(np.maximum(u, 0.0), iters, res, clamp, converged)


def _rel_residual(g, load, u, mesh):
    ref = max(float(np.max(np.abs(load))), 1e-300)
    return float(np.max(np.abs(g))) / ref


def _picard(mesh, p, hp, fp, cfg, eps, u):
    theta = min(cfg.theta, 2.0 * (p - 1.0) / (2.0 * p - 1.0))
    res = math.inf
    for it in range(1, cfg.maxit_outer + 1):
        w = hp(u) * fp
        target = solve_plap_fixed_source(mesh, p, w, cfg, u0=u, eps=eps)
        new = (1.0 - theta) * u + theta * target
        change = float(np.max(np.abs(new - u))) / max(float(np.max(np.abs(new))), 1e-300)
        u = new
        g, _, load = _reaction_residual(mesh, p, u, hp, fp, eps)
        res = _rel_residual(g, load, u, mesh)
        if change <= cfg.tol_outer:
            return _finish(u, it, res)
    raise ConvergenceError(
        f"damped fixed point did not settle after {cfg.maxit_outer} steps (p={p}, residual {res:.3e})",
        last_iterate=u,
        residual=res,
        iterations=cfg.maxit_outer,
    )


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _primitive_increment(hp, a, b):
    """``int_a^b h_p`` per node by 16-point Gauss-Legendre."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = hp(mid[:, None] + half[:, None] * _GL_NODES)
    return half * (vals @ _GL_WEIGHTS)


def _energy_change(mesh, p, u, trial, hp, fp, eps):
    """``J(trial) - J(u)`` for the reaction energy with ``h_p`` integrated exactly up to quadrature."""
    x0, x1 = mesh.grad(u), mesh.grad(trial)
    grad_part = np.sum(((x1 * x1 + eps * eps) ** (p / 2.0) - (x0 * x0 + eps * eps) ** (p / 2.0)) / p * mesh.face_measure)
    return float(grad_part - np.sum(mesh.weights * fp * _primitive_increment(hp, u, trial)))


def _roundoff_floor(mesh, p, u, eps):
    """Nodal residual produced by rounding ``u`` alone.

    Face gradients carry an absolute error of a few ulps of ``u`` over
    ``dr``; the regularized flux map turns that into a flux error that
    dominates where the true gradient is tiny and ``u`` is huge.
    """
    top = np.maximum(np.abs(u[1:]), np.abs(u[:-1]))
    dx = 4.0 * np.finfo(float).eps * top / mesh.dr
    noise = mesh.face_weights * _flux_and_slope(dx, p, eps)[0]
    node = np.zeros(mesh.M + 1)
    node[:-1] += noise
    node[1:] += noise
    return node[:-1]


def _floor_residual(mesh, p, u, g, load, eps):
    """Relative residual left after discounting the roundoff floor at every node."""
    excess = np.maximum(np.abs(g) - 10.0 * _roundoff_floor(mesh, p, u, eps), 0.0)
    return float(np.max(excess)) / max(float(np.max(np.abs(load))), 1e-300)


def _newton(mesh, p, hp, fp, cfg, eps, u):
    """Newton on the reaction system.

    The system is the gradient of ``J_p(u) - sum w_i f_i H_p(u_i)`` with
    ``H_p' = h_p``, so steps are first tried with Armijo on that energy, then
    on the squared residual, and finally replaced by a damped fixed-point step.
    Convergence needs a small change of ``u`` and a residual below
    ``sqrt(tol_outer)``; when the residual only exceeds that because of
    rounding in ``u`` (huge solutions near ``p = 1``) the iterate is accepted.
    """
    res_tol = math.sqrt(cfg.tol_outer)
    change = math.inf

    def done(u, g, load, stalled):
        res = _rel_residual(g, load, u, mesh)
        eff = _floor_residual(mesh, p, u, g, load, eps) if res > res_tol else res
        return res, eff <= res_tol and (change <= cfg.tol_outer or stalled)

    for it in range(1, cfg.maxit_outer + 1):
        g, k, load = _reaction_residual(mesh, p, u, hp, fp, eps)
        res, ok = done(u, g, load, False)
        if ok:
            return _finish(u, it - 1, res)
        react = np.maximum(-mesh.weights * fp * hp.derivative(u), 0.0)[:-1]
        d = np.zeros_like(u)
        d[:-1] = _tridiag_solve(k, react, -g)
        trial = _energy_search(mesh, p, u, d, g, hp, fp, eps)
        if trial is None:
            trial = _residual_search(mesh, p, u, d, g, hp, fp, eps)
        if trial is None:
            res, ok = done(u, g, load, True)
            if ok:
                return _finish(u, it, res)
            trial = _picard_step(mesh, p, hp, fp, cfg, eps, u)
        change = float(np.max(np.abs(trial - u))) / max(float(np.max(np.abs(trial))), 1e-300)
        u = trial
    g, _, load = _reaction_residual(mesh, p, u, hp, fp, eps)
    res, ok = done(u, g, load, True)
    if ok:
        return _finish(u, cfg.maxit_outer, res)
    raise ConvergenceError(
        f"Newton did not converge after {cfg.maxit_outer} steps (p={p}, residual {res:.3e})",
        last_iterate=u,
        residual=res,
        iterations=cfg.maxit_outer,
    )


def _energy_search(mesh, p, u, d, g, hp, fp, eps):
    slope = float(np.dot(g, d[:-1]))
    if not slope < 0:
        return None
    t = 1.0
    while t > 1e-10:
        trial = u + t * d
        if _energy_change(mesh, p, u, trial, hp, fp, eps) <= 1e-4 * t * slope:
            return trial
        t *= 0.5
    return None


def _residual_search(mesh, p, u, d, g, hp, fp, eps):
    merit = float(np.dot(g, g))
    t = 1.0
    while t > 1e-10:
        trial = u + t * d
        gt, _, _ = _reaction_residual(mesh, p, trial, hp, fp, eps)
        if float(np.dot(gt, gt)) <= (1.0 - 1e-4 * t) * merit:
            return trial
        t *= 0.5
    return None


def _picard_step(mesh, p, hp, fp, cfg, eps, u):
    try:
        target = solve_plap_fixed_source(mesh, p, hp(u) * fp, cfg, u0=u, eps=eps)
    except ConvergenceError as exc:
        target = exc.last_iterate
    theta = min(cfg.theta, 2.0 * (p - 1.0) / (2.0 * p - 1.0))
    return (1.0 - theta) * u + theta * target


def flux_transport(mesh: RadialMesh, u, p_old, p_new, eps_old):
    """Warm start for ``p_new`` that keeps the fluxes of ``u`` computed at ``p_old``.

    Gradients are rebuilt as ``sign(z) |z|^(1/(p_new-1))`` and integrated
    inward from ``u(R) = 0``.
    """
    z = dg.vector_field(mesh, p_old, u, eps_old)
    with np.errstate(over="ignore"):
        x = np.sign(z) * np.abs(z) ** (1.0 / (p_new - 1.0))
    x = np.nan_to_num(x, posinf=1e300, neginf=-1e300)
    v = np.zeros(mesh.M + 1)
    v[:-1] = -np.cumsum((x * mesh.dr)[::-1])[::-1]
    return np.maximum(v, 0.0)


@dataclass
class StepRecord:
    p: float
    eps: float
    u: np.ndarray
    z: np.ndarray
    outer_iters: int
    residual: float
    converged: bool
    clamped: float
    estimates: dg.EstimateSuite
    pairing_defect: float
    boundary_flux: float
    z_sup: float
    classification: str = "insufficient"
    message: str = ""

    @property
    def sup_u(self):
        return float(np.max(self.u))

    @property
    def min_u(self):
        return float(np.min(self.u))


@dataclass
class ContinuationTrace:
    mesh: RadialMesh
    spec: NonlinearitySpec
    datum: DatumSpec
    config: SolverConfig
    records: list = field(default_factory=list)
    classification: str = "insufficient"
    phi_error: str = ""

    @property
    def failures(self):
        return [r for r in self.records if not r.converged]


@dataclass(frozen=True)
class DiagnosticsConfig:
    k_list: tuple = dg.DEFAULT_K_LIST
    subdomains: tuple = dg.DEFAULT_SUBDOMAINS
    thresholds: dg.Thresholds = dg.Thresholds()

    @property
    def k_ref(self):
        return max(self.k_list)


def continuation(
    mesh: RadialMesh,
    spec: NonlinearitySpec,
    f: DatumSpec,
    cfg: SolverConfig | None = None,
    diag: DiagnosticsConfig | None = None,
    u0=None,
) -> ContinuationTrace:
    """Solve along the decreasing schedule of ``p`` with warm starts.

    Each step starts from the better (smaller residual) of the previous
    solution and its flux-preserving transport to the new ``p``. Failed
    steps are recorded with ``converged=False`` and the run goes on from
    their last iterate.
    """
    cfg = cfg or SolverConfig()
    diag = diag or DiagnosticsConfig()
    trace = ContinuationTrace(mesh, spec, f, cfg)
    try:
        phi = phi_for(spec)
    except EnvelopeError as exc:
        phi = None
        trace.phi_error = str(exc)
    prev = None
    for p in cfg.schedule:
        eps = cfg.eps_for(p)
        start = u0
        if prev is not None:
            start = _pick_start(mesh, p, spec, f, eps, prev)
        message = ""
        try:
            sol = solve_reaction(mesh, p, spec, f, cfg, u0=start, eps=eps)
        except ConvergenceError as exc:
            message = str(exc)
            log.warning("p=%g: %s", p, exc)
            u = np.maximum(exc.last_iterate, 0.0)
            sol = ReactionResult(u, exc.iterations or cfg.maxit_outer, exc.residual, 0.0, converged=False)
        z = dg.vector_field(mesh, p, sol.u, eps)
        est = dg.estimate_suite(mesh, p, sol.u, phi, diag.k_list, diag.subdomains, spec, f)
        rec = StepRecord(
            p=p,
            eps=eps,
            u=sol.u,
            z=z,
            outer_iters=sol.outer_iters,
            residual=sol.residual,
            converged=sol.converged,
            clamped=sol.clamped,
            estimates=est,
            pairing_defect=dg.pairing_defect(mesh, z, sol.u, diag.k_ref, tol=None),
            boundary_flux=dg.boundary_flux(mesh, z),
            z_sup=float(np.max(np.abs(z))),
            message=message,
        )
        trace.records.append(rec)
        if len(trace.records) >= 3:
            rec.classification = dg.blowup_detector(trace, diag.thresholds)
        prev = rec
    try:
        trace.classification = dg.blowup_detector(trace, diag.thresholds)
    except InsufficientDataError:
        trace.classification = "insufficient"
    return trace


def _pick_start(mesh, p, spec, f, eps, prev):
    hp = truncate_h(spec, p)
    fp = truncate_f(f, p, mesh)
    candidates = [prev.u, flux_transport(mesh, prev.u, prev.p, p, prev.eps)]
    best, best_res = None, math.inf
    for cand in candidates:
        if not np.all(np.isfinite(cand)):
            continue
        g, _, load = _reaction_residual(mesh, p, cand, hp, fp, eps)
        res = _rel_residual(g, load, cand, mesh)
        if res < best_res:
            best, best_res = cand, res
    return best
