"""Truncation functions used as test functions and level-set cut-offs.

All maps are exact closed forms and accept scalars or numpy arrays.
"""

import numpy as np

from .errors import ParameterError


def _check_positive(name, value):
    if not value > 0:
        raise ParameterError(f"{name} must be positive, got {value!r}")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def t_k(s, k):
    """Clamp ``s`` to ``[-k, k]``."""
    _check_positive("k", k)
    return _out(np.clip(s, -k, k))


def v_delta(s, delta):
    """Cut-off equal to 1 below ``delta``, 0 above ``2*delta``, linear in between."""
    _check_positive("delta", delta)
    s = np.asarray(s, dtype=float)
    return _out(np.clip((2.0 * delta - s) / delta, 0.0, 1.0))


def r_delta(s, delta):
    """Complement ``1 - v_delta(s, delta)``."""
    return _out(1.0 - np.asarray(v_delta(s, delta)))


def s_n(s, n):
    """Cut-off equal to 1 up to ``n`` and 0 from ``n + 1`` on."""
    if not n >= 1:
        raise ParameterError(f"n must be >= 1, got {n!r}")
    s = np.asarray(s, dtype=float)
    return _out(np.clip(n + 1.0 - s, 0.0, 1.0))


def t_k_pow(s, k, alpha):
    """Power of the truncation, ``min(s, k) ** alpha`` for ``s >= 0``."""
    _check_positive("k", k)
    if not alpha >= 1:
        raise ParameterError(f"alpha must be >= 1, got {alpha!r}")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ParameterError("t_k_pow is defined for s >= 0 only")
    return _out(np.minimum(s, k) ** alpha)
