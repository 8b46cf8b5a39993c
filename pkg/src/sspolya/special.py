"""Beta-function helpers used by the conjugate posterior."""

from __future__ import annotations

import numpy as np
from scipy import special as sp

__all__ = ["log_beta", "reg_inc_beta", "beta_quantile"]


def _positive(name, v):
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)):
        raise ValueError(f"{name} must be positive, got {v}")
    return v


def log_beta(a, b):
    """``ln B(a, b)``; works elementwise on arrays."""
    a = _positive("a", a)
    b = _positive("b", b)
    out = sp.gammaln(a) + sp.gammaln(b) - sp.gammaln(a + b)
    return float(out) if out.ndim == 0 else out


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta ``I_x(a, b)``, the Beta(a, b) CDF at ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    out = sp.betainc(_positive("a", a), _positive("b", b), x)
    return float(out) if out.ndim == 0 else out


def beta_quantile(p, a, b):
    """``t`` in (0, 1) with ``I_t(a, b) = p``."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("p must lie in (0, 1)")
    out = sp.betaincinv(_positive("a", a), _positive("b", b), p)
    return float(out) if out.ndim == 0 else out
