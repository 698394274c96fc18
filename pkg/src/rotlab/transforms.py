"""
Pointwise changes of variable between height, density and normalized pressure.

All families share ``1 + a*sigma*p = sqrt(1 + sigma*h)``, ``a = sqrt(gamma-1)/2``
(``a = 1/2`` for shallow water).  For the gas families ``h`` is the height-like
variable with ``1 + sigma*h = (1 + sigma*rho)**(gamma-1)``.
"""

from __future__ import annotations

import math

import numpy as np

from rotlab.errors import VacuumError


def _a(family, gamma):
    if family == "rsw":
        return 0.5
    return 0.5 * math.sqrt(gamma - 1.0)


def _unwrap(x):
    return getattr(x, "values", x)


def _rewrap(like, values):
    if hasattr(like, "grid"):
        return type(like)(like.grid, values)
    return values


def check_vacuum(h, sigma):
    depth = 1.0 + sigma * np.asarray(_unwrap(h))
    m = float(np.min(depth))
    if not m > 0.0:
        raise VacuumError(m)
    return m


def normalize_height(h, sigma, family="rsw", gamma=2.0):
    """Height ``h`` -> normalized pressure ``p``; raises ``VacuumError`` if ``1+sigma*h <= 0``."""
    hv = np.asarray(_unwrap(h), dtype=float)
    check_vacuum(hv, sigma)
    a = _a(family, gamma)
    # cancellation-free form of (sqrt(1+sigma*h) - 1) / (a*sigma)
    p = hv / (a * (np.sqrt(1.0 + sigma * hv) + 1.0))
    return _rewrap(h, p)


def denormalize(p, sigma, family="rsw", gamma=2.0):
    """Exact inverse of :func:`normalize_height`."""
    pv = np.asarray(_unwrap(p), dtype=float)
    a = _a(family, gamma)
    root = 1.0 + a * sigma * pv
    m = float(np.min(root))
    if not m > 0.0:
        raise VacuumError(m)
    h = 2.0 * a * pv + (a * a * sigma) * pv * pv
    return _rewrap(p, h)


def height_to_density(h, sigma, gamma):
    hv = np.asarray(_unwrap(h), dtype=float)
    check_vacuum(hv, sigma)
    rho = np.expm1(np.log1p(sigma * hv) / (gamma - 1.0)) / sigma
    return _rewrap(h, rho)


def density_to_height(rho, sigma, gamma):
    rv = np.asarray(_unwrap(rho), dtype=float)
    m = float(np.min(1.0 + sigma * rv))
    if not m > 0.0:
        raise VacuumError(m)
    h = np.expm1((gamma - 1.0) * np.log1p(sigma * rv)) / sigma
    return _rewrap(rho, h)
