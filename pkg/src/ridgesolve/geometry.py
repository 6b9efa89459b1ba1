"""Directions on the circle and sphere: coverings, caps and tile predicates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

C_OMEGA = math.pi + 2.0


def as_direction(v, tol=1e-12):
    """Return ``v`` as a float array after checking it is a unit vector."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("a direction is a 1-d vector with at least 2 components")
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise ValueError("direction must have unit norm")
    return v


def normalize(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Cap:
    """Open geodesic ball; a radius above pi means the whole sphere."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("cap radius must be positive")
        object.__setattr__(self, "center", tuple(as_direction(self.center)))

    @property
    def whole(self):
        return self.radius > math.pi


@dataclass(frozen=True)
class SphereCovering:
    alpha: float
    centers: tuple = field(repr=False)

    @property
    def d(self):
        return len(self.centers[0])

    def array(self):
        return np.array(self.centers)

    def __len__(self):
        return len(self.centers)


def geodesic_distance(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError("dimension mismatch")
    return np.arccos(np.clip(np.sum(a * b, axis=-1), -1.0, 1.0))


def build_covering(d, alpha):
    """Centres s_l whose alpha-caps cover S^{d-1} and whose alpha/3-caps are disjoint.

    On the circle the centres are equally spaced starting at e1 with
    spacing at most alpha.  On S^2 latitude rings around the e1 axis are
    used, with ring spacing and in-ring spacing close to 0.9 alpha.
    """
    if d not in (2, 3):
        raise NotImplementedError(f"coverings are implemented for d = 2, 3 (got {d})")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    e1 = np.eye(d)[0]
    if alpha > math.pi:
        return SphereCovering(alpha, (tuple(e1),))
    if d == 2:
        L = math.ceil(2 * math.pi / alpha)
        ang = 2 * math.pi * np.arange(L) / L
        pts = np.stack([np.cos(ang), np.sin(ang)], 1)
        pts[0] = e1
        return SphereCovering(alpha, tuple(map(tuple, pts)))
    m = max(1, math.ceil(math.pi / (0.9 * alpha)))
    dtheta = math.pi / m
    pts = []
    for i in range(m + 1):
        th = i * dtheta
        n = 1 if i in (0, m) else max(1, math.ceil(2 * math.pi * math.sin(th) / (0.9 * alpha)))
        phase = 0.5 * (i % 2)
        for q in range(n):
            ph = 2 * math.pi * (q + phase) / n
            # polar axis along e1
            pts.append((math.cos(th), math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph)))
    pts[0] = tuple(e1)
    return SphereCovering(alpha, tuple(pts))


def cap_measure(d, radius):
    """Surface measure of a geodesic cap on S^{d-1} (numerical quadrature)."""
    radius = min(float(radius), math.pi)
    if d == 2:
        return 2.0 * radius
    sphere_dm2 = 2 * math.pi ** ((d - 1) / 2) / math.gamma((d - 1) / 2)
    val, _ = integrate.quad(lambda t: math.sin(t) ** (d - 2), 0.0, radius)
    return sphere_dm2 * val


def count_cap_intersections(cov, target, q=1.0, q2=1.0):
    """Number of centres whose (q alpha)-cap meets the (q2-dilated) target cap."""
    if target.whole or q2 * target.radius > math.pi or q * cov.alpha > math.pi:
        return len(cov)
    d = geodesic_distance(cov.array(), np.asarray(target.center))
    return int(np.count_nonzero(d < q * cov.alpha + q2 * target.radius))


def intersection_count_bound(cov, target, q=1.0, q2=1.0):
    """Measure-ratio bound mu(B(3 max(q alpha, q2 r))) / mu(B(alpha/3))."""
    d = cov.d
    big = 3.0 * max(q * cov.alpha, q2 * target.radius)
    return cap_measure(d, big) / cap_measure(d, cov.alpha / 3.0)


def scale_angle(j):
    """alpha_j = 2^(1-j), the angular half-width of the scale-j cones."""
    return 2.0 ** (1 - j)


def cone_angle_with_margin(j, m):
    if j <= m:
        raise ValueError("cone_angle_with_margin requires j >= m + 1")
    return scale_angle(j) + math.asin(min(1.0, 2.0**m / 2.0 ** (j - 1)))


def _direction_gap(s, s2, symmetric):
    g = float(geodesic_distance(s, s2))
    if symmetric:
        g = min(g, math.pi - g)
    return g


def tile_intersection_possible(j, s, j2, s2, m=0, m2=0, symmetric=True):
    """Conservative test whether tiles (j, s) and (j2, s2), widened by margins, can meet.

    ``s`` and ``s2`` are the tile centre directions.  With ``symmetric``
    the tiles are taken together with their point mirror images, so the
    angular gap is measured between lines.
    """
    if j == j2 and np.allclose(s, s2):
        return True
    if m == 0 and m2 == 0:
        if abs(j - j2) > 1:
            return False
        if j == 0 or j2 == 0:
            return True
        return _direction_gap(s, s2, symmetric) <= 3.0 * scale_angle(j2)
    mg = max(m, m2)
    jm = min(j, j2)
    if jm <= mg + 2:
        return True
    if abs(j - j2) > 2:
        return False
    return _direction_gap(s, s2, symmetric) <= 5.0 * C_OMEGA * 2.0 ** (mg - jm)


def rotation_to_e1(s):
    """Orthogonal R with R s = e1, Lipschitz in s away from the e3 poles (d = 3)."""
    s = np.asarray(s, dtype=float)
    if s.size == 2:
        return np.array([[s[0], s[1]], [-s[1], s[0]]])
    if s.size != 3:
        raise NotImplementedError("rotation_to_e1 supports d = 2, 3")
    th = math.asin(max(-1.0, min(1.0, s[2])))
    ps = math.atan2(-s[1], s[0])
    ct, st, cp, sp = math.cos(th), math.sin(th), math.cos(ps), math.sin(ps)
    # R_t maps e1 to t; we return its transpose
    Rt = np.array(
        [
            [ct * cp, sp, -st * cp],
            [-ct * sp, cp, st * sp],
            [st, 0.0, ct],
        ]
    )
    return Rt.T


def u_matrix(j, s):
    """U_{j,l} = R^{-1} D_{2^-j}, D dilating the first coordinate."""
    s = np.asarray(s, dtype=float)
    D = np.eye(s.size)
    D[0, 0] = 2.0**-j
    return rotation_to_e1(s).T @ D


def tile_weight(j, s, s_tile):
    return 1.0 + 2.0**j * abs(float(np.dot(s, s_tile)))
