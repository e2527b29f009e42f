"""Closed-form radial solutions of the limit problem on ``B_R(0)``.

All solutions use ``h(s) = s**-gamma`` and are nonincreasing in ``r``.
``z`` is the radial component of the vector field, ``z(r) in [-1, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterError
from .mesh import RadialMesh
from .nonlinearity import DatumSpec, NonlinearitySpec, eval_h
from .tables import write_csv
from .truncations import t_k

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RadialSolution:
    u: Callable
    z: Callable
    spec: NonlinearitySpec
    datum: DatumSpec
    metadata: dict
    interfaces: tuple = ()
    flags: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.metadata["N"]

    @property
    def R(self):
        return self.metadata["R"]

    def boundary_branch(self):
        """``trace-zero`` if ``u(R) = 0``, ``flux`` if ``z(R) = -1``, else ``none``."""
        if abs(float(self.u(self.R))) <= BOUNDARY_TOL:
            return "trace-zero"
        if abs(float(self.z(self.R)) + 1.0) <= BOUNDARY_TOL:
            return "flux"
        return "none"

    def to_csv(self, path, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            write_csv(path, ["r", "u", "z_radial"], zip(r, self.u(r), self.z(r)))


def _check_common(N, R):
    if int(N) != N or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N!r}")
    if not R > 0:
        raise ParameterError(f"R must be positive, got {R!r}")


def _check_q(q, N):
    if not 1 < q < N:
        raise ParameterError(f"need 1 < q < N, got q={q}, N={N}")


def _check_rho(rho, R):
    if not 0 < rho < R:
        raise ParameterError(f"need 0 < rho < R, got rho={rho}, R={R}")


def _power_spec(gamma):
    return NonlinearitySpec("power", c=1.0, s1=1.0, gamma=gamma)


def example_power(N, q, gamma, R=1.0) -> RadialSolution:
    """``u = r**((1-q)/gamma)``, ``z = -1`` for ``f = (N-1) r**-q``."""
    _check_common(N, R)
    _check_q(q, N)
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma!r}")
    a = (1.0 - q) / gamma

    def u(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(r > 0, np.where(r > 0, r, 1.0) ** a, np.inf)
        return out if out.ndim else float(out)

    def z(r):
        out = -np.ones_like(np.asarray(r, dtype=float))
        return out if out.ndim else float(out)

    meta = dict(N=N, R=R, q=q, gamma=gamma, rho=None)
    return RadialSolution(u, z, _power_spec(gamma), DatumSpec("radial-power", q=q), meta)


def example_flat(N, rho, R=1.0, gamma=1.0) -> RadialSolution:
    """``u = 1`` on ``(0, rho]`` and 0 outside, ``f = N / rho`` on the inner ball."""
    _check_common(N, R)
    _check_rho(rho, R)

    def u(r):
        out = np.where(np.asarray(r, dtype=float) <= rho, 1.0, 0.0)
        return out if out.ndim else float(out)

    def z(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r <= rho, -r / rho, -((rho / r) ** (N - 1)))
        return out if out.ndim else float(out)

    meta = dict(N=N, R=R, q=None, gamma=gamma, rho=rho)
    return RadialSolution(u, z, _power_spec(gamma), DatumSpec("flat-ball", rho=rho), meta, interfaces=(rho,))


def example_nonunique(N, q, rho, R=1.0):
    """Two solutions sharing one field for ``f = (N-1) r**-q`` on ``(0, rho]``, ``gamma = 1``.

    The first stays at ``rho**(1-q)`` outside ``rho``; the second drops to 0.
    The first has ``z(R) = -(rho/R)**(N-1)`` and ``u(R) > 0``: its boundary
    condition is only claimed in the weak-trace sense, which is flagged and
    not checked.
    """
    _check_common(N, R)
    _check_q(q, N)
    _check_rho(rho, R)
    level = rho ** (1.0 - q)

    def inner(r):
        with np.errstate(divide="ignore"):
            return np.where(r > 0, np.where(r > 0, r, 1.0) ** (1.0 - q), np.inf)

    def u(r):
        r = np.asarray(r, dtype=float)
        out = np.where(r <= rho, inner(r), level)
        return out if out.ndim else float(out)

    def v(r):
        r = np.asarray(r, dtype=float)
        out = np.where(r <= rho, inner(r), 0.0)
        return out if out.ndim else float(out)

    def z(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r <= rho, -1.0, -((rho / r) ** (N - 1)))
        return out if out.ndim else float(out)

    meta = dict(N=N, R=R, q=q, gamma=1.0, rho=rho)
    datum = DatumSpec("radial-power", q=q, rho=rho)
    spec = _power_spec(1.0)
    first = RadialSolution(u, z, spec, datum, meta, (rho,), {"weak_trace_claimed": True})
    second = RadialSolution(v, z, spec, datum, dict(meta), (rho,), {"weak_trace_claimed": False})
    return first, second


@dataclass
class DegenerationReport:
    r: np.ndarray
    gammas: tuple
    profiles: dict
    inner_ok: bool
    outer_ok: bool
    trend_ok: bool
    tol: float

    @property
    def ok(self):
        return self.inner_ok and self.outer_ok and self.trend_ok


def gamma_to_zero_profile(q, R, gammas, r=None, tol=0.2) -> DegenerationReport:
    """Profiles ``r**((1-q)/gamma)`` for a decreasing sequence of ``gamma``.

    At the smallest ``gamma`` the profile must exceed ``1/tol`` on
    ``r <= 1 - tol`` and stay below ``tol`` on ``r >= 1 + tol``; across the
    sequence it must grow pointwise inside the unit ball and decay outside.
    """
    if not R > 1:
        raise ParameterError(f"need R > 1, got R={R}")
    if not q > 1:
        raise ParameterError(f"need q > 1, got q={q}")
    gammas = tuple(float(g) for g in gammas)
    if not gammas or any(g <= 0 for g in gammas) or any(b >= a for a, b in zip(gammas, gammas[1:])):
        raise ParameterError("gammas must be positive and strictly decreasing")
    r = np.linspace(0.0, R, 401) if r is None else np.asarray(r, dtype=float)
    profiles = {}
    with np.errstate(divide="ignore"):
        for g in gammas:
            profiles[g] = np.where(r > 0, np.where(r > 0, r, 1.0) ** ((1.0 - q) / g), np.inf)
    last = profiles[gammas[-1]]
    inner_ok = bool(np.all(last[r <= 1.0 - tol] >= 1.0 / tol))
    outer_ok = bool(np.all(last[r >= 1.0 + tol] <= tol))
    stack = np.array([profiles[g] for g in gammas])
    inside = (r > 0) & (r < 1)
    outside = r > 1
    trend_ok = bool(
        np.all(np.diff(stack[:, inside], axis=0) > 0) and np.all(np.diff(stack[:, outside], axis=0) < 0)
    )
    return DegenerationReport(r, gammas, profiles, inner_ok, outer_ok, trend_ok, tol)


def radial_dual_norm(g, mesh: RadialMesh) -> float:
    """``sup_{r>0} G(r) / r**(N-1)`` with ``G(r) = int_0^r g(t) t**(N-1) dt``.

    ``g`` holds nodal values (or is a callable of ``r``). ``G`` is accumulated
    by the trapezoid rule; when ``g`` is not finite at the origin the
    integrand there is extrapolated linearly from the next two nodes.
    Only radial test functions enter, so this is the radial dual norm.
    """
    r = mesh.nodes
    vals = np.asarray(g(r) if callable(g) else g, dtype=float)
    if vals.shape != r.shape:
        raise ParameterError("g must be sampled on the mesh nodes")
    with np.errstate(invalid="ignore"):
        integrand = vals * r ** (mesh.N - 1)
    if not np.isfinite(integrand[0]):
        integrand[0] = integrand[1] - (integrand[2] - integrand[1]) * r[1] / (r[2] - r[1])
    if not np.all(np.isfinite(integrand)):
        raise ParameterError("g must be finite away from the origin")
    G = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(r))])
    return float(np.max(G[1:] / r[1:] ** (mesh.N - 1)))


@dataclass
class OracleReport:
    r: np.ndarray
    residual: np.ndarray
    relative: np.ndarray
    checked: np.ndarray
    max_residual: float
    max_relative: float
    pairing_faces: np.ndarray
    pairing_defect: float
    tv: float
    boundary: str
    flags: dict

    def rows(self):
        return zip(self.r, self.residual, self.relative, self.checked.astype(float))


def _source(sol, r, u):
    f = sol.datum.values(r, sol.N)
    with np.errstate(invalid="ignore"):
        src = eval_h(sol.spec, np.maximum(u, 0.0)) * f
    return np.where(f == 0, 0.0, src)


def _flux_derivative(sol, r, lo, hi):
    """``(r**(N-1) z)'`` at ``r`` from samples inside ``[lo, hi]``.

    Centered differences when the stencil fits, one-sided otherwise; both
    Richardson-extrapolated once, which is exact for polynomials of degree 4
    (centered) or 3 (one-sided).
    """
    N = sol.N

    def F(t):
        return t ** (N - 1) * sol.z(t)

    def centered(d):
        return (F(r + d) - F(r - d)) / (2.0 * d)

    def left(d):
        return (3.0 * F(r) - 4.0 * F(r - d) + F(r - 2.0 * d)) / (2.0 * d)

    def right(d):
        return (-3.0 * F(r) + 4.0 * F(r + d) - F(r + 2.0 * d)) / (2.0 * d)

    d_c = 0.5 * min(r - lo, hi - r)
    if d_c > 0:
        return (4.0 * centered(d_c / 2) - centered(d_c)) / 3.0
    if r - lo > 0:
        d = 0.5 * (r - lo)
        return (4.0 * left(d / 2) - left(d)) / 3.0
    d = 0.5 * (hi - r)
    return (4.0 * right(d / 2) - right(d)) / 3.0


def residual_check(sol: RadialSolution, mesh: RadialMesh, k=5.0, z_override=None) -> OracleReport:
    """Pointwise residual, pairing defect and boundary branch of a closed-form solution.

    (a) ``-(r**(N-1) z)' / r**(N-1) - h(u) f`` at the nodes ``r > 0``, with the
    stencil kept on one side of every interface; nodes lying on an
    interface carry the singular part of the divergence and are excluded.
    Relative values divide by ``max(|div z|, |h(u) f|, |z| / r)`` at the node;
    the last term is the size of the differenced flux and keeps nodes where
    both sides vanish meaningful.
    (b) per face ``|D T_k u| (1 - z sign(Du))`` weighted by ``r_f**(N-1)``; on
    faces containing an interface ``z`` and the weight are taken there.
    (c) the boundary branch of :meth:`RadialSolution.boundary_branch`.

    ``z_override`` (a callable) replaces the field in (b) only.
    """
    if mesh.N != sol.N or not np.isclose(mesh.R, sol.R):
        raise ParameterError("mesh and solution live on different domains")
    r = mesh.nodes
    N = sol.N
    cuts = np.array(sorted(sol.interfaces), dtype=float)
    res = np.zeros(r.size)
    rel = np.zeros(r.size)
    checked = np.zeros(r.size, dtype=bool)
    faces = mesh.faces
    for i in range(1, r.size):
        ri = r[i]
        if np.any(np.isclose(cuts, ri, rtol=0, atol=1e-14 * sol.R)):
            continue
        lo = faces[i - 1]
        hi = faces[i] if i < mesh.M else ri
        below = cuts[(cuts > lo) & (cuts < ri)]
        above = cuts[(cuts > ri) & (cuts < hi)]
        lo = max(lo, below.max()) if below.size else lo
        hi = min(hi, above.min()) if above.size else hi
        div = -_flux_derivative(sol, ri, lo, hi) / ri ** (N - 1)
        src = float(_source(sol, ri, sol.u(ri)))
        res[i] = div - src
        scale = max(abs(div), abs(src), abs(float(sol.z(ri))) / ri)
        rel[i] = abs(res[i]) / scale if scale > 0 else 0.0
        checked[i] = True

    u = np.asarray(sol.u(r), dtype=float)
    tk = t_k(u, k)
    du = np.diff(tk)
    zf = np.asarray((z_override or sol.z)(faces), dtype=float)
    meas = mesh.face_weights.copy()
    for rho in cuts:
        hit = (r[:-1] <= rho) & (rho <= r[1:])
        zf = np.where(hit, float((z_override or sol.z)(rho)), zf)
        meas = np.where(hit, rho ** (N - 1), meas)
    pair = np.abs(du) * (1.0 - zf * np.sign(du)) * meas
    return OracleReport(
        r=r,
        residual=res,
        relative=rel,
        checked=checked,
        max_residual=float(np.max(np.abs(res[checked]), initial=0.0)),
        max_relative=float(np.max(rel[checked], initial=0.0)),
        pairing_faces=pair,
        pairing_defect=float(np.sum(pair)),
        tv=float(np.sum(np.abs(du) * meas)),
        boundary=sol.boundary_branch(),
        flags=dict(sol.flags),
    )


def power_sweep():
    """Admissible ``(N, q, gamma)`` of the standard sweep: N in {2, 3}, q in {1.1, 1.5, 2.5}, gamma in {0.5, 1, 2}."""
    return [
        (N, q, g)
        for N in (2, 3)
        for q in (1.1, 1.5, 2.5)
        if 1 < q < N
        for g in (0.5, 1.0, 2.0)
    ]
