"""Symmetric triangle rules and Gauss-Legendre edge rules.

Triangle weights are fractions of the triangle area (they sum to one) and
points are barycentric coordinates.  Rules of 1, 3, 6 and 12 points are exact
for polynomials of degree 1, 2, 4 and 6 respectively.
"""

import numpy as np

from nived.errors import ConfigurationError


def _orbit3(a, b):
    """The three permutations of (a, b, b)."""
    return [(a, b, b), (b, a, b), (b, b, a)]


def _orbit6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _rule(groups):
    pts, wts = [], []
    for w, orbit in groups:
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    return np.array(pts), np.array(wts)


TRIANGLE_RULES = {
    1: _rule([(1.0, [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)])]),
    3: _rule([(1.0 / 3.0, _orbit3(2.0 / 3.0, 1.0 / 6.0))]),
    6: _rule([
        (0.109951743655322, _orbit3(0.816847572980459, 0.091576213509771)),
        (0.223381589678011, _orbit3(0.108103018168070, 0.445948490915965)),
    ]),
    12: _rule([
        (0.050844906370207, _orbit3(0.873821971016996, 0.063089014491502)),
        (0.116786275726379, _orbit3(0.501426509658179, 0.249286745170910)),
        (0.082851075618374, _orbit6(0.636502499121399, 0.310352451033785, 0.053145049844816)),
    ]),
}

# Gauss-Legendre points per background edge paired with each triangle rule.
EDGE_POINTS = {1: 1, 3: 2, 6: 3, 12: 4}


def triangle_rule(n):
    """Barycentric points (n, 3) and area-fraction weights (n,)."""
    if n not in TRIANGLE_RULES:
        raise ConfigurationError(f"triangle rule must be one of {sorted(TRIANGLE_RULES)}, got {n}")
    bary, w = TRIANGLE_RULES[n]
    return bary.copy(), w / w.sum()


def triangle_points(nodes, triangles, n):
    """Physical quadrature points (T*n, 2) and absolute weights (T*n,)."""
    bary, w = triangle_rule(n)
    xt = nodes[triangles]
    pts = np.einsum("gk,tkd->tgd", bary, xt)
    e1, e2 = xt[:, 1] - xt[:, 0], xt[:, 2] - xt[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts.reshape(-1, 2), (area[:, None] * w[None, :]).reshape(-1)


def gauss_legendre(n):
    """Points on [0, 1] and weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
