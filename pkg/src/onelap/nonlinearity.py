"""Reaction nonlinearity ``h`` and datum ``f``.

``h`` maps ``[0, inf)`` to ``(0, inf]``; the value at zero may be infinite and
is then represented by ``math.inf``. Every family satisfies the growth bound
``h(s) <= c * s**-gamma`` on ``(0, s1]`` by construction except ``floored``
and ``tabulated``, whose inputs are checked by :func:`validate`.

Families
--------
power       ``c * s**-gamma``
bounded     ``c * (1 + s)**-gamma``
vanishing   ``c * s**-gamma * max(1 - s / s_tilde, 0)``, first zero at ``s_tilde``
floored     ``max(m_floor, c * s**-gamma)``
tabulated   piecewise-linear through ``table``, constant outside its range
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError, ParameterError
from .tables import check_table, read_table

H_FAMILIES = ("power", "bounded", "vanishing", "floored", "tabulated")
F_FAMILIES = ("radial-power", "flat-ball", "tabulated")


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class NonlinearitySpec:
    family: str
    c: float = 1.0
    s1: float = 1.0
    gamma: float = 0.0
    s_tilde: float | None = None
    m_floor: float | None = None
    table: tuple | None = field(default=None, repr=False)
    declared_h_at_zero: float | None = None
    declared_h_at_infinity: float | None = None

    def __post_init__(self):
        if self.family not in H_FAMILIES:
            raise ParameterError(f"unknown h family {self.family!r}; expected one of {H_FAMILIES}")
        if not self.c > 0:
            raise ParameterError("c must be positive")
        if not self.s1 > 0:
            raise ParameterError("s1 must be positive")
        if not self.gamma >= 0:
            raise ParameterError("gamma must be nonnegative")
        if self.family == "vanishing" and not (self.s_tilde is not None and self.s_tilde > 0):
            raise ParameterError("vanishing family needs a positive s_tilde")
        if self.family == "floored" and not (self.m_floor is not None and self.m_floor > 0):
            raise ParameterError("floored family needs a positive m_floor")
        if self.family == "tabulated":
            if self.table is None:
                raise ParameterError("tabulated family needs a table")
            xs, ys = (np.asarray(col, dtype=float) for col in self.table)
            check_table(xs, ys)
            if xs[0] < 0:
                raise ParameterError("tabulated h must start at s >= 0")
            object.__setattr__(self, "table", (tuple(xs), tuple(ys)))
        if self.h_at_zero == 0:
            raise ParameterError("h(0) must not vanish")

    @classmethod
    def from_table_file(cls, path, s1, c=1.0, gamma=0.0, **kw):
        xs, ys = read_table(path)
        return cls("tabulated", c=c, s1=s1, gamma=gamma, table=(xs, ys), **kw)

    @property
    def h_at_zero(self) -> float:
        if self.declared_h_at_zero is not None:
            return float(self.declared_h_at_zero)
        fam = self.family
        if fam == "tabulated":
            return float(self.table[1][0])
        if fam == "bounded":
            return self.c
        if self.gamma > 0:
            return math.inf
        return max(self.m_floor, self.c) if fam == "floored" else self.c

    @property
    def h_at_infinity(self) -> float:
        if self.declared_h_at_infinity is not None:
            return float(self.declared_h_at_infinity)
        fam = self.family
        if fam == "tabulated":
            return float(self.table[1][-1])
        if fam == "vanishing":
            return 0.0
        if fam == "floored":
            return self.m_floor if self.gamma > 0 else max(self.m_floor, self.c)
        return 0.0 if self.gamma > 0 else self.c

    def _raw(self, s):
        # s > 0, array
        fam = self.family
        if fam == "power":
            return self.c * s ** -self.gamma
        if fam == "bounded":
            return self.c * (1.0 + s) ** -self.gamma
        if fam == "vanishing":
            return self.c * s ** -self.gamma * np.maximum(1.0 - s / self.s_tilde, 0.0)
        if fam == "floored":
            return np.maximum(self.m_floor, self.c * s ** -self.gamma)
        xs, ys = self.table
        return np.interp(s, xs, ys)

    def _raw_derivative(self, s):
        fam, c, g = self.family, self.c, self.gamma
        if fam == "power":
            return -g * c * s ** (-g - 1.0)
        if fam == "bounded":
            return -g * c * (1.0 + s) ** (-g - 1.0)
        if fam == "vanishing":
            st = self.s_tilde
            inside = s < st
            d = -g * c * s ** (-g - 1.0) * (1.0 - s / st) - c * s ** -g / st
            return np.where(inside, d, 0.0)
        if fam == "floored":
            above = c * s ** -g > self.m_floor
            return np.where(above, -g * c * s ** (-g - 1.0), 0.0)
        xs, ys = (np.asarray(col) for col in self.table)
        slopes = np.diff(ys) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, s, side="right") - 1, 0, slopes.size - 1)
        return np.where((s < xs[0]) | (s >= xs[-1]), 0.0, slopes[idx])


@dataclass(frozen=True)
class DatumSpec:
    """Nonnegative radial datum ``f``.

    radial-power  ``scale * (N - 1) * r**-q``, restricted to ``r <= rho`` when ``rho`` is set
    flat-ball     ``scale * N / rho`` on ``r <= rho`` and 0 outside
    tabulated     piecewise-linear in ``r`` through ``table``, 0 beyond its last abscissa
    """

    family: str
    q: float | None = None
    rho: float | None = None
    scale: float = 1.0
    table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in F_FAMILIES:
            raise ParameterError(f"unknown f family {self.family!r}; expected one of {F_FAMILIES}")
        if not self.scale > 0:
            raise ParameterError("scale must be positive")
        if self.family == "radial-power" and self.q is None:
            raise ParameterError("radial-power datum needs q")
        if self.family == "flat-ball" and not (self.rho is not None and self.rho > 0):
            raise ParameterError("flat-ball datum needs rho > 0")
        if self.family == "tabulated":
            if self.table is None:
                raise ParameterError("tabulated datum needs a table")
            xs, ys = (np.asarray(col, dtype=float) for col in self.table)
            check_table(xs, ys)
            if np.any(ys < 0):
                raise ParameterError("tabulated datum must be nonnegative")
            object.__setattr__(self, "table", (tuple(xs), tuple(ys)))

    def check_geometry(self, N, R):
        if self.family == "radial-power" and not 1 < self.q < N:
            raise ParameterError(f"radial-power datum needs 1 < q < N, got q={self.q}, N={N}")
        if self.rho is not None and not 0 < self.rho < R:
            raise ParameterError(f"rho must lie in (0, R), got rho={self.rho}, R={R}")

    def values(self, r, N):
        """Nodal values; ``inf`` where the datum blows up (r = 0 for radial-power)."""
        r = np.asarray(r, dtype=float)
        fam = self.family
        if fam == "radial-power":
            with np.errstate(divide="ignore"):
                f = self.scale * (N - 1) * np.where(r > 0, r, 0.0) ** -self.q
            if self.rho is not None:
                f = np.where(r <= self.rho, f, 0.0)
        elif fam == "flat-ball":
            f = np.where(r <= self.rho, self.scale * N / self.rho, 0.0)
        else:
            xs, ys = self.table
            f = self.scale * np.interp(r, xs, ys, right=0.0)
        return _scalar_or_array(f, r)

    def cell_integrals(self, edges, N):
        """``int f(r) r**(N-1) dr`` over each interval ``[edges[i], edges[i+1]]``."""
        a = np.asarray(edges[:-1], dtype=float)
        b = np.asarray(edges[1:], dtype=float)
        fam = self.family
        if fam == "radial-power":
            if self.rho is not None:
                a, b = np.minimum(a, self.rho), np.minimum(b, self.rho)
            e = N - self.q
            return self.scale * (N - 1) * (b ** e - a ** e) / e
        if fam == "flat-ball":
            a, b = np.minimum(a, self.rho), np.minimum(b, self.rho)
            return self.scale * (b ** N - a ** N) / self.rho
        out = np.empty(a.size)
        for i, (lo, hi) in enumerate(zip(a, b)):
            t = np.linspace(lo, hi, 33)
            out[i] = trapezoid(self.values(t, N) * t ** (N - 1), t)
        return out

    @classmethod
    def from_table_file(cls, path, scale=1.0):
        xs, ys = read_table(path)
        return cls("tabulated", scale=scale, table=(xs, ys))


def eval_h(spec: NonlinearitySpec, s):
    """Evaluate ``h(s)``; ``math.inf`` only at ``s == 0`` and only if ``h(0)`` is infinite."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("h is defined for s >= 0 only")
    out = np.empty(arr.shape)
    pos = arr > 0
    with np.errstate(over="ignore"):
        out[pos] = spec._raw(arr[pos])
    out[~pos] = spec.h_at_zero
    return _scalar_or_array(out, s)


def eval_dh(spec: NonlinearitySpec, s):
    """Derivative of ``h`` on ``s > 0``; 0 at ``s == 0``."""
    arr = np.asarray(s, dtype=float)
    out = np.zeros(arr.shape)
    pos = arr > 0
    with np.errstate(over="ignore"):
        out[pos] = spec._raw_derivative(arr[pos])
    return _scalar_or_array(out, s)


def _check_p(p):
    if not 1 < p < 2:
        raise ParameterError(f"p must lie in (1, 2), got {p!r}")


class TruncatedH:
    """``h_p(s) = min(h(s), 1/(p-1))``; beyond the first zero of a vanishing ``h`` it is 0.

    Negative arguments are read as 0, so transient undershoots of an iterate
    see the capped value instead of failing.
    """

    def __init__(self, spec: NonlinearitySpec, p: float):
        _check_p(p)
        self.spec = spec
        self.p = p
        self.cap = 1.0 / (p - 1.0)

    def __call__(self, s):
        arr = np.maximum(np.asarray(s, dtype=float), 0.0)
        out = np.minimum(eval_h(self.spec, arr), self.cap)
        if self.spec.s_tilde is not None:
            out = np.where(arr > self.spec.s_tilde, 0.0, out)
        return _scalar_or_array(out, s)

    def derivative(self, s):
        arr = np.maximum(np.asarray(s, dtype=float), 0.0)
        h = eval_h(self.spec, arr)
        d = np.where(h < self.cap, eval_dh(self.spec, arr), 0.0)
        if self.spec.s_tilde is not None:
            d = np.where(arr > self.spec.s_tilde, 0.0, d)
        return _scalar_or_array(d, s)


def truncate_h(spec: NonlinearitySpec, p: float) -> TruncatedH:
    return TruncatedH(spec, p)


def truncate_f(spec: DatumSpec, p: float, mesh):
    """Nodal ``f_p = min(f, 1/(p-1))`` on the mesh nodes."""
    _check_p(p)
    return np.minimum(spec.values(mesh.nodes, mesh.N), 1.0 / (p - 1.0))


def sigma(spec: NonlinearitySpec) -> float:
    return max(1.0, spec.gamma)


@dataclass
class ValidationReport:
    growth_violations: list
    nonpositive_before_zero: list
    h_zero_nonzero: bool
    tail_samples: tuple
    tail_limit: float
    tail_spread: float
    tail_converged: bool
    tail_deviation: float

    @property
    def ok(self) -> bool:
        return (
            not self.growth_violations
            and not self.nonpositive_before_zero
            and self.h_zero_nonzero
            and self.tail_converged
            and self.tail_deviation <= 1e-3 * max(1.0, abs(self.tail_limit))
        )


def default_sample_grid(spec: NonlinearitySpec, n_inner=200, n_tail=200, s_max=1e6):
    inner = np.geomspace(spec.s1 * 1e-4, spec.s1, n_inner)
    tail = np.geomspace(spec.s1, max(s_max, 10 * spec.s1), n_tail)[1:]
    return np.concatenate([inner, tail])


def validate(spec: NonlinearitySpec, sample_grid=None, rtol=1e-12) -> ValidationReport:
    """Check the growth bound near zero, positivity before the first zero and the tail limit.

    The tail limit is estimated from the last three samples of the grid,
    which should be geometric. It counts as converged when their spread is
    below ``1e-3 * max(1, |mean|)``.
    """
    grid = default_sample_grid(spec) if sample_grid is None else np.asarray(sample_grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("empty sample grid")
    if grid.size < 3:
        raise ParameterError("sample grid needs at least three points for the tail estimate")
    grid = np.sort(grid[grid > 0])
    check = grid
    if spec.family == "tabulated":
        xs = np.asarray(spec.table[0])
        check = np.union1d(grid, xs[xs > 0])

    h = eval_h(spec, check)
    near = check <= spec.s1
    bound = spec.c * check ** -spec.gamma
    bad = near & (h > bound * (1 + rtol))
    growth = [float(s) for s in check[bad]]

    limit_zero = spec.s_tilde if spec.s_tilde is not None else math.inf
    before = check < limit_zero
    nonpos = [float(s) for s in check[before & (h <= 0)]]

    tail = eval_h(spec, grid[-3:])
    tail_limit = float(tail[-1])
    spread = float(np.max(tail) - np.min(tail))
    converged = spread < 1e-3 * max(1.0, abs(float(np.mean(tail))))
    return ValidationReport(
        growth_violations=growth,
        nonpositive_before_zero=nonpos,
        h_zero_nonzero=spec.h_at_zero != 0,
        tail_samples=tuple(float(t) for t in tail),
        tail_limit=tail_limit,
        tail_spread=spread,
        tail_converged=converged,
        tail_deviation=abs(tail_limit - spec.h_at_infinity),
    )
