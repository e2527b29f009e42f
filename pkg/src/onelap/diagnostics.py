"""Discrete checks of the limit problem on radial meshes.

Face fields (gradients, the flux ``z``) live on the ``M`` faces of a
:class:`~onelap.mesh.RadialMesh`, scalar fields on its ``M + 1`` nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CertificateError, InsufficientDataError
from .mesh import RadialMesh, extrapolate_to_boundary
from .nonlinearity import eval_h, truncate_f, truncate_h
from .truncations import t_k

DEFAULT_K_LIST = (0.5, 1.0, 2.0, 5.0)
DEFAULT_SUBDOMAINS = (0.5, 0.9)


def vector_field(mesh: RadialMesh, p, u, eps):
    """Regularized flux ``(|Du|^2 + eps^2)^((p-2)/2) Du`` on faces."""
    x = mesh.grad(u)
    return (x * x + eps * eps) ** ((p - 2.0) / 2.0) * x


def pairing_defect_faces(mesh: RadialMesh, z, u, k, interface_measure=None):
    """Per-face contribution ``(|D T_k u| - z D T_k u) r_f^(N-1) dr``."""
    du = np.diff(t_k(np.asarray(u, dtype=float), k))
    meas = mesh.face_weights if interface_measure is None else interface_measure
    return (np.abs(du) - np.asarray(z) * du) * meas


def pairing_defect(mesh: RadialMesh, z, u, k, tol=1e-8) -> float:
    """Discrete pairing defect; vanishes when ``z`` is aligned with ``D T_k u``.

    Nonnegative up to roundoff whenever ``|z| <= 1``. With ``tol=None`` the
    bound on ``z`` is not enforced, which is how the continuation records
    the defect of the regularized fluxes.
    """
    z = np.asarray(z, dtype=float)
    if tol is not None and np.max(np.abs(z), initial=0.0) > 1.0 + tol:
        raise CertificateError(f"|z| reaches {np.max(np.abs(z)):.6g} > 1 + {tol:g}")
    return float(np.sum(pairing_defect_faces(mesh, z, u, k)))


def total_variation(mesh: RadialMesh, u, k=None) -> float:
    v = np.asarray(u, dtype=float) if k is None else t_k(np.asarray(u, dtype=float), k)
    return float(np.sum(np.abs(np.diff(v)) * mesh.face_weights))


def boundary_flux(mesh: RadialMesh, z) -> float:
    """Normal trace of ``z`` at ``r = R`` by linear extrapolation of the last two faces."""
    return extrapolate_to_boundary(mesh, np.asarray(z, dtype=float))


def reaction_source(spec, datum, mesh: RadialMesh, u, p=None):
    """Nodal ``h(u) f`` (or ``h_p(u) f_p`` when ``p`` is given), 0 wherever ``f`` vanishes."""
    u = np.asarray(u, dtype=float)
    if p is None:
        f = datum.values(mesh.nodes, mesh.N)
        h = eval_h(spec, np.maximum(u, 0.0))
    else:
        f = truncate_f(datum, p, mesh)
        h = truncate_h(spec, p)(u)
    with np.errstate(invalid="ignore"):
        src = h * f
    return np.where(f == 0, 0.0, src)


@dataclass
class ResidualReport:
    residual: np.ndarray
    checked: np.ndarray
    max_abs: float
    max_rel: float
    masked_nodes: np.ndarray
    interface_nodes: np.ndarray

    def as_rows(self, mesh):
        return [(r, v, bool(c)) for r, v, c in zip(mesh.nodes, self.residual, self.checked)]


def interface_nodes(mesh: RadialMesh, interfaces=()):
    """Nodes whose dual cell contains one of the interface radii."""
    edges = mesh.dual_edges
    hit = np.zeros(mesh.M + 1, dtype=bool)
    for rho in interfaces:
        hit |= (edges[:-1] <= rho) & (rho <= edges[1:])
    return hit


def divergence_residual(
    mesh: RadialMesh,
    z,
    spec,
    datum,
    u,
    *,
    p=None,
    z_boundary=None,
    deadcore_threshold=None,
    interfaces=(),
) -> ResidualReport:
    """Nodal residual of ``-div z - h(u) f``.

    The Dirichlet node ``r = R`` is never charged. Nodes next to an
    interface carry the singular part of ``div z`` and are excluded, as are
    nodes with non-finite data. When ``h(0)`` is infinite, nodes where
    ``u <= deadcore_threshold`` are masked out.
    """
    u = np.asarray(u, dtype=float)
    div = mesh.divergence(z, z_boundary)
    src = reaction_source(spec, datum, mesh, u, p)
    res = -div - src
    checked = np.isfinite(res)
    checked[-1] = False
    iface = interface_nodes(mesh, interfaces)
    checked &= ~iface
    masked = np.zeros_like(checked)
    if math.isinf(spec.h_at_zero):
        thr = 0.0 if deadcore_threshold is None else deadcore_threshold
        masked = u <= thr
        checked &= ~masked
    scale = np.maximum(np.abs(src), np.abs(div))
    rel = np.abs(res) / np.where(scale > 0, scale, 1.0)
    return ResidualReport(
        residual=res,
        checked=checked,
        max_abs=float(np.max(np.abs(res[checked]), initial=0.0)),
        max_rel=float(np.max(rel[checked], initial=0.0)),
        masked_nodes=np.flatnonzero(masked),
        interface_nodes=np.flatnonzero(iface),
    )


def green_defect(mesh: RadialMesh, z, v, z_boundary=None) -> float:
    """``sum v div z w + sum z Dv m_f - v(R) R^(N-1) [z, nu]``; zero up to roundoff."""
    zb = boundary_flux(mesh, z) if z_boundary is None else z_boundary
    v = np.asarray(v, dtype=float)
    lhs = np.sum(v * mesh.divergence(z, zb) * mesh.weights)
    lhs += np.sum(np.asarray(z) * mesh.grad(v) * mesh.face_measure)
    return float(lhs - v[-1] * mesh.R ** (mesh.N - 1) * zb)


@dataclass
class EstimateSuite:
    p: float
    gamma_p_norm: float
    tk_power_norm: dict
    local_tk_norms: dict
    bv_norms: dict
    estimate_bound: float = math.nan

    def finite(self) -> bool:
        vals = [self.gamma_p_norm, *self.tk_power_norm.values(), *self.local_tk_norms.values()]
        vals += list(self.bv_norms.values())
        return all(math.isfinite(v) and v >= 0 for v in vals if not math.isnan(v))


def _power_norm(mesh, v, p, sel=None):
    g = np.abs(mesh.grad(v)) ** p * mesh.face_measure
    return float(np.sum(g if sel is None else g[sel]))


def estimate_bound(mesh: RadialMesh, u, spec, datum, phi) -> float:
    """Right-hand side of the first a-priori bound, split over the level sets of ``u``.

    ``c * F(u <= s1) + max_{(s1,s2)} h * Phi(s2) * F(s1 < u < s2) + F(u >= s2)``
    where ``F(E)`` is the mass of ``f`` on the dual cells of nodes in ``E``.
    """
    u = np.asarray(u, dtype=float)
    mass = datum.cell_integrals(mesh.dual_edges, mesh.N)
    s1, s2 = phi.s1, phi.s2
    low = u <= s1
    high = u >= s2
    mid = ~low & ~high
    hmax = float(np.max(eval_h(spec, np.linspace(s1, s2, 257))))
    return float(
        spec.c * mass[low].sum() + hmax * phi(s2) * mass[mid].sum() + mass[high].sum()
    )


def estimate_suite(
    mesh: RadialMesh,
    p,
    u,
    phi=None,
    k_list=DEFAULT_K_LIST,
    subdomains=DEFAULT_SUBDOMAINS,
    spec=None,
    datum=None,
) -> EstimateSuite:
    """Discrete versions of the p-uniform a-priori estimates.

    ``subdomains`` are radii, given as fractions of ``R``, of balls compactly
    inside the domain. Gradient integrals use face differences of the
    transformed nodal field. ``bv_norms`` holds the exponent-1 counterparts.
    Without ``phi`` the ``Gamma_p`` entries are NaN.
    """
    u = np.maximum(np.asarray(u, dtype=float), 0.0)
    sig = phi.sigma if phi is not None else (max(1.0, spec.gamma) if spec is not None else 1.0)
    alpha = (sig - 1.0 + p) / p
    bv = {}
    if phi is not None:
        gu = phi.gamma_p(p, u)
        gamma_norm = _power_norm(mesh, gu, p)
        bv["gamma"] = _power_norm(mesh, gu, 1.0)
    else:
        gamma_norm = math.nan
        bv["gamma"] = math.nan
    tk_pow, local = {}, {}
    for k in k_list:
        v = np.minimum(u, k) ** alpha
        tk_pow[k] = _power_norm(mesh, v, p)
        bv[("tk_power", k)] = _power_norm(mesh, v, 1.0)
        tk = np.minimum(u, k)
        for frac in subdomains:
            sel = mesh.nodes[1:] <= frac * mesh.R
            local[(k, frac)] = _power_norm(mesh, tk, p, sel)
            bv[("local", k, frac)] = _power_norm(mesh, tk, 1.0, sel)
    bound = math.nan
    if phi is not None and spec is not None and datum is not None:
        bound = estimate_bound(mesh, u, spec, datum, phi)
    return EstimateSuite(p, gamma_norm, tk_pow, local, bv, bound)


@dataclass(frozen=True)
class Thresholds:
    growth_factor: float = 2.0
    deadcore_eps: float = 1e-3
    area_frac: float = 0.05
    area_stability: float = 0.25
    trend_tol: float = 0.1
    trend_k: float = 5.0


def dead_fraction(mesh: RadialMesh, u, deadcore_eps=1e-3) -> float:
    """Volume fraction of ``{u < deadcore_eps * sup u}``."""
    u = np.asarray(u, dtype=float)
    top = np.max(u)
    if not top > 0:
        return 1.0
    return float(np.sum(mesh.weights[u < deadcore_eps * top]) / np.sum(mesh.weights))


def regime_indicators(mesh, fields, th: Thresholds):
    sups = [float(np.max(u)) for u in fields]
    dead = [dead_fraction(mesh, u, th.deadcore_eps) for u in fields]
    a = np.minimum(fields[-2], th.trend_k)
    b = np.minimum(fields[-1], th.trend_k)
    # below deadcore_eps a field counts as zero, so a limit u = 0 still settles
    denom = max(mesh.integrate(np.abs(b)), th.deadcore_eps * mesh.volume)
    change = mesh.integrate(np.abs(b - a)) / denom
    return {"sup": sups, "dead_fraction": dead, "trend": change}


def classify(mesh: RadialMesh, fields, thresholds: Thresholds | None = None) -> str:
    """Regime of a sequence of solutions ordered by decreasing ``p``.

    ``blowup``: ``sup u`` grows by ``growth_factor`` over each of the last two steps.
    ``deadcore``: the dead fraction exceeds ``area_frac`` and changed by at most
    ``area_stability`` (relative) over the last step.
    ``converging``: the weighted L1 change of ``T_k u`` over the last step, relative to
    ``max(|T_k u|_1, deadcore_eps |B_R|)``, is below ``trend_tol``.
    ``mixed``: anything else.
    """
    th = thresholds or Thresholds()
    if len(fields) < 3:
        raise InsufficientDataError(f"need at least 3 continuation steps, got {len(fields)}")
    ind = regime_indicators(mesh, fields, th)
    s = ind["sup"]
    if s[-3] > 0 and s[-2] >= th.growth_factor * s[-3] and s[-1] >= th.growth_factor * s[-2]:
        return "blowup"
    d = ind["dead_fraction"]
    if d[-1] > th.area_frac and abs(d[-1] - d[-2]) <= th.area_stability * d[-1]:
        return "deadcore"
    if ind["trend"] < th.trend_tol:
        return "converging"
    return "mixed"


def blowup_detector(trace, thresholds: Thresholds | None = None) -> str:
    """Classify a :class:`~onelap.plap_solver.ContinuationTrace`."""
    return classify(trace.mesh, [rec.u for rec in trace.records], thresholds)
