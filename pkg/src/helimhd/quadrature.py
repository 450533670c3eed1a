"""Gauss quadrature on the reference tetrahedron, triangle and segment.

Tet and triangle rules are conical products of Gauss-Jacobi rules through
the Duffy (collapsed-coordinate) map, exact for polynomials of total degree
2m - 1 with m points per direction.  Higher degrees therefore cost m^3
points but are available for any degree, which the entity-moment degrees of
freedom and the manufactured-solution error norms rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (Q, dim) reference coordinates
    weights: np.ndarray  # (Q,) summing to the reference volume
    degree: int          # exact for total polynomial degree <= degree


def _gauss01(m, alpha=0):
    """m-point rule for int_0^1 f(x) (1-x)^alpha dx."""
    if alpha == 0:
        x, w = roots_legendre(m)
    else:
        x, w = roots_jacobi(m, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> QuadratureRule:
    """Rule on the reference tet {x,y,z >= 0, x+y+z <= 1}, volume 1/6."""
    m = max(1, (degree + 2) // 2)
    u, wu = _gauss01(m, alpha=2)
    v, wv = _gauss01(m, alpha=1)
    w, ww = _gauss01(m, alpha=0)
    U, V, W = np.meshgrid(u, v, w, indexing="ij")
    x = U
    y = V * (1.0 - U)
    z = W * (1.0 - U) * (1.0 - V)
    wts = (wu[:, None, None] * wv[None, :, None] * ww[None, None, :])
    pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=-1)
    return QuadratureRule(points=pts, weights=wts.ravel(), degree=2 * m - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the reference triangle {x,y >= 0, x+y <= 1}, area 1/2."""
    m = max(1, (degree + 2) // 2)
    u, wu = _gauss01(m, alpha=1)
    v, wv = _gauss01(m, alpha=0)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([U.ravel(), (V * (1.0 - U)).ravel()], axis=-1)
    wts = (wu[:, None] * wv[None, :]).ravel()
    return QuadratureRule(points=pts, weights=wts, degree=2 * m - 1)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadratureRule:
    """Rule on the reference segment [0, 1]."""
    m = max(1, (degree + 2) // 2)
    x, w = _gauss01(m)
    return QuadratureRule(points=x.reshape(-1, 1), weights=w,
                          degree=2 * m - 1)
