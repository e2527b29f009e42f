"""Decreasing majorant of ``h`` and the auxiliary functions ``Phi`` and ``Gamma_p``.

The majorant is built on a sample grid in three stages: a continuous
approximation ``h1`` of ``h + e^{-s}`` kept inside the band
``[h, h + 2 e^{-s}]``, its least nonincreasing majorant ``h2`` (running
maximum from the right), and ``hbar = h2 + e^{-s}``.

``Phi`` equals ``s**sigma`` below ``s1``, a monotone cubic Hermite bridge on
``[s1, s2]`` and ``1 / hbar`` above ``s2``. ``Gamma_p(s)`` integrates
``Phi'(t)**(1/p)`` from 0 to ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import EnvelopeError, ParameterError
from .nonlinearity import NonlinearitySpec, eval_h, sigma as sigma_of
from .tables import write_table

MIDPOINT_PANELS = 64


def smooth_band(h_samples, grid, window=5):
    """Moving average of ``h + e^{-s}`` clamped into ``[h, h + 2 e^{-s}]``.

    ``window`` is the (odd) stencil width; ``window=1`` returns ``h + e^{-s}``.
    The stencil shrinks symmetrically near the ends of the grid.
    """
    h = np.asarray(h_samples, dtype=float)
    s = np.asarray(grid, dtype=float)
    if s.ndim != 1 or s.shape != h.shape:
        raise ParameterError("grid and samples must be 1-D and of equal length")
    if np.any(s <= 0) or np.any(np.diff(s) <= 0):
        raise ParameterError("grid must be positive and strictly increasing")
    if window < 1 or window % 2 == 0:
        raise ParameterError("window must be a positive odd integer")
    if s.size < window:
        raise ParameterError(f"grid has {s.size} points, shorter than the stencil {window}")
    e = np.exp(-s)
    g = h + e
    half = window // 2
    out = np.empty_like(g)
    n = g.size
    for i in range(n):
        w = min(half, i, n - 1 - i)
        out[i] = g[i - w : i + w + 1].mean()
    return np.clip(out, h, h + 2.0 * e)


def rising_sun(h1_samples):
    """Least nonincreasing majorant on the grid: running maximum from the right."""
    x = np.asarray(h1_samples, dtype=float)
    if x.size == 0:
        raise ParameterError("empty table")
    return np.maximum.accumulate(x[::-1])[::-1]


@dataclass(frozen=True, eq=False)
class EnvelopeTable:
    grid: np.ndarray
    h_values: np.ndarray
    h1_values: np.ndarray
    h2_values: np.ndarray
    hbar_values: np.ndarray
    cut_level: float

    def hbar(self, s):
        """Piecewise-linear ``hbar``; beyond the grid it follows ``h2_end + e^{-s}``."""
        s = np.asarray(s, dtype=float)
        inside = np.interp(s, self.grid, self.hbar_values)
        right = self.h2_values[-1] + np.exp(-s)
        out = np.where(s > self.grid[-1], right, inside)
        return float(out) if out.ndim == 0 else out

    def save(self, path):
        cols = np.column_stack([self.grid, self.h_values, self.h1_values, self.h2_values, self.hbar_values])
        np.savetxt(path, cols, fmt="%.17g", header="s h h1 h2 hbar")


def default_grid(s1, s_max=50.0, n=400):
    """Geometric grid from ``s1/10`` to ``s_max`` with ``s1`` itself as a node."""
    return np.union1d(np.geomspace(s1 / 10.0, max(s_max, 10.0 * s1), n), [s1])


def build_hbar(spec: NonlinearitySpec, grid=None, window=5) -> EnvelopeTable:
    """Majorant of ``g = min(h, l)`` with ``l`` the largest sample of ``h`` on ``[s1, inf)``."""
    s = default_grid(spec.s1) if grid is None else np.asarray(grid, dtype=float)
    h = eval_h(spec, s)
    tail = s >= spec.s1
    if not np.any(tail):
        raise ParameterError("grid must reach s1")
    cut = float(np.max(h[tail]))
    g = np.minimum(h, cut)
    h1 = smooth_band(g, s, window)
    h2 = rising_sun(h1)
    hbar = h2 + np.exp(-s)
    return EnvelopeTable(s, g, h1, h2, hbar, cut)


def choose_s2(env: EnvelopeTable, s1, sigma):
    """Smallest grid point above ``max(1, s1)`` where ``hbar < s1**-sigma``."""
    level = s1 ** -sigma
    ok = (env.grid > max(1.0, s1)) & (env.hbar_values < level)
    if not np.any(ok):
        raise EnvelopeError(
            f"envelope never drops below s1^-sigma = {level:.6g} on the grid "
            f"(last value {env.hbar_values[-1]:.6g}); extend the grid or h(inf) is too large"
        )
    return float(env.grid[np.argmax(ok)])


@dataclass(eq=False)
class PhiTriple:
    s1: float
    s2: float
    sigma: float
    bridge: CubicHermiteSpline
    env: EnvelopeTable
    gamma_cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.where(
            s < self.s1,
            np.maximum(s, 0.0) ** self.sigma,
            np.where(s <= self.s2, self.bridge(np.clip(s, self.s1, self.s2)), self._upper(s)),
        )
        return float(out) if out.ndim == 0 else out

    def _upper(self, s):
        return 1.0 / self.env.hbar(np.maximum(s, self.s2))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        low = self.sigma * np.maximum(s, 0.0) ** (self.sigma - 1.0)
        mid = self.bridge(np.clip(s, self.s1, self.s2), 1)
        out = np.where(s < self.s1, low, np.where(s <= self.s2, mid, self._upper_derivative(s)))
        return float(out) if out.ndim == 0 else out

    def _upper_derivative(self, s):
        s = np.maximum(s, self.s2)
        grid, hb = self.env.grid, self.env.hbar_values
        slopes = np.diff(hb) / np.diff(grid)
        idx = np.clip(np.searchsorted(grid, s, side="right") - 1, 0, slopes.size - 1)
        dh = np.where(s > grid[-1], -np.exp(-s), slopes[idx])
        return -dh / self.env.hbar(s) ** 2

    def breakpoints(self):
        """Segment ends above ``s1`` used by the ``Gamma_p`` quadrature."""
        g = self.env.grid
        upper = g[g > self.s2]
        return np.concatenate([[self.s1, self.s2], upper])

    def _midpoint(self, p, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        t = (np.arange(MIDPOINT_PANELS) + 0.5) / MIDPOINT_PANELS
        pts = a[..., None] + (b - a)[..., None] * t
        vals = np.maximum(self.derivative(pts), 0.0) ** (1.0 / p)
        return (b - a) * vals.mean(axis=-1)

    def _cumulative(self, p):
        if p not in self.gamma_cache:
            bp = self.breakpoints()
            seg = self._midpoint(p, bp[:-1], bp[1:])
            head = self._power_part(p, self.s1)
            self.gamma_cache[p] = (bp, head + np.concatenate([[0.0], np.cumsum(seg)]))
        return self.gamma_cache[p]

    def _power_part(self, p, s):
        a = (self.sigma - 1.0 + p) / p
        return self.sigma ** (1.0 / p) * (p / (self.sigma - 1.0 + p)) * np.minimum(s, self.s1) ** a

    def gamma_p(self, p, s):
        """``Gamma_p(s)``: exact on ``[0, s1]``, 64-panel midpoint per segment above.

        Beyond the last grid point ``Phi'`` follows the extrapolated
        ``1 / (h2_end + e^{-s})`` and is integrated over unit-length segments.
        """
        if not 1 < p < 2:
            raise ParameterError(f"p must lie in (1, 2), got {p!r}")
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        flat = np.atleast_1d(s).ravel()
        out = self._power_part(p, flat)
        bp, cum = self._cumulative(p)
        inside = (flat > self.s1) & (flat <= bp[-1])
        if np.any(inside):
            x = flat[inside]
            idx = np.searchsorted(bp, x, side="right") - 1
            out[inside] = cum[idx] + self._midpoint(p, bp[idx], x)
        for j in np.flatnonzero(flat > bp[-1]):
            n = int(np.ceil(flat[j] - bp[-1]))
            edges = np.linspace(bp[-1], flat[j], n + 1)
            out[j] = cum[-1] + self._midpoint(p, edges[:-1], edges[1:]).sum()
        return float(out[0]) if s.ndim == 0 else out.reshape(s.shape)

    def save(self, path, n=400):
        s = np.geomspace(self.s1 / 10.0, self.env.grid[-1], n)
        write_table(path, s, self(s), header=f"Phi  s1={self.s1:.17g} s2={self.s2:.17g} sigma={self.sigma:.17g}")


def build_phi(s1, s2, sigma, env: EnvelopeTable) -> PhiTriple:
    """Assemble ``Phi`` with a monotone Hermite bridge on ``[s1, s2]``.

    Endpoint slopes are the one-sided derivatives of the outer pieces. If
    they would break monotonicity of the cubic they are scaled down
    (Fritsch-Carlson), which keeps the bridge Lipschitz and increasing.
    """
    if not s2 > s1:
        raise ParameterError("need s2 > s1")
    left = s1 ** sigma
    right = 1.0 / env.hbar(s2)
    if not left < right:
        raise ParameterError(f"Phi cannot increase across the bridge: s1^sigma={left:.6g} >= 1/hbar(s2)={right:.6g}")
    m_left = sigma * s1 ** (sigma - 1.0)
    k = np.searchsorted(env.grid, s2, side="left")
    k = min(max(k, 0), env.grid.size - 2)
    dh = (env.hbar_values[k + 1] - env.hbar_values[k]) / (env.grid[k + 1] - env.grid[k])
    m_right = -dh / env.hbar(s2) ** 2
    secant = (right - left) / (s2 - s1)
    a, b = m_left / secant, m_right / secant
    rad = np.hypot(a, b)
    if rad > 3.0:
        m_left *= 3.0 / rad
        m_right *= 3.0 / rad
    bridge = CubicHermiteSpline([s1, s2], [left, right], [m_left, m_right])
    return PhiTriple(float(s1), float(s2), float(sigma), bridge, env)


def phi_for(spec: NonlinearitySpec, grid=None, window=5) -> PhiTriple:
    """Envelope, ``s2`` and ``Phi`` for a nonlinearity in one call."""
    env = build_hbar(spec, grid, window)
    sig = sigma_of(spec)
    s2 = choose_s2(env, spec.s1, sig)
    return build_phi(spec.s1, s2, sig, env)
