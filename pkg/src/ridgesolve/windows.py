"""Frequency windows: smooth transition, radial bands, angular tiles.

The radial band-pass W lives on [1, 4] with telescoping squares and the
low-pass W0 is its complement on [0, 2).  Band-pass scale ``j >= 1`` of a
frame with top scale ``J`` uses W(2^(1-j) r), i.e. the annulus
2^(j-1) < r < 2^(j+1); the top scale is extended by 1 beyond 2^J so that
the band-pass family reaches every grid frequency.

Two angular layouts are provided.  The shear layout (the default) places
2^(j+2) tiles per scale on the pseudo-angle

    tau = xi2/xi1            on the horizontal cone |xi2| <= |xi1|
    tau = 2 - xi1/xi2        on the vertical cone,

which is continuous and 4-periodic in the direction of xi taken modulo pi,
so every tile is symmetric under xi -> -xi.  Tile centres sit at
tau = -1 + (i + 1/2) 2^-j and the angular bump cos(pi/2 t(|x|)) has
telescoping squares.  The rotational layout uses circle coverings and the
plateau profile T(2^j dist) with the spherical distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import build_covering

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class TransitionProfile:
    """Smooth monotone transition from 0 to 1 on [0, 1].

    t(x) = e^{-1/x^a} / (e^{-1/x^a} + e^{-1/(1-x)^a}) with a = ``alpha_exponent``.
    """

    alpha_exponent: float = 1.1

    def __post_init__(self):
        if not self.alpha_exponent > 0:
            raise ValueError("transition exponent must be positive")

    def __call__(self, x):
        return transition(self, x)


def transition(profile, x):
    """Evaluate t(x); arguments outside [0, 1] are clamped."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    a = profile.alpha_exponent
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        # 1 / (1 + exp(1/x^a - 1/(1-x)^a)), written to avoid inf/inf
        expo = 1.0 / x**a - 1.0 / (1.0 - x) ** a
        out = 1.0 / (1.0 + np.exp(expo))
    out = np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, out))
    return out if out.ndim else float(out)


def plateau_window(profile, x):
    """T(x): 1 on [0, 1), t(2 - x) on [1, 2], 0 beyond."""
    x = np.asarray(x, dtype=float)
    out = np.where(x < 1.0, 1.0, transition(profile, 2.0 - x))
    out = np.where(x >= 2.0, 0.0, out)
    return out if out.ndim else float(out)


def radial_window(profile, x):
    """Band-pass W, supported in [1, 4]."""
    x = np.asarray(x, dtype=float)
    rise = np.sin(HALF_PI * transition(profile, x - 1.0))
    fall = np.cos(HALF_PI * transition(profile, 0.5 * x - 1.0))
    out = np.where(x <= 2.0, rise, fall)
    out = np.where((x < 1.0) | (x > 4.0), 0.0, out)
    return out if out.ndim else float(out)


def lowpass_window(profile, x):
    """Low-pass W0 with W0^2 + sum_{j>=0} W(2^-j x)^2 = 1; supported in [0, 2)."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 1.0, 1.0, np.cos(HALF_PI * transition(profile, x - 1.0)))
    out = np.where(x >= 2.0, 0.0, out)
    return out if out.ndim else float(out)


def angular_bump(profile, x):
    """cos(pi/2 t(|x|)) on |x| < 1; shifted copies have squares summing to 1."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.where(x < 1.0, np.cos(HALF_PI * transition(profile, x)), 0.0)
    return out if out.ndim else float(out)


def pseudo_angle(xi1, xi2):
    """Pseudo-angle in [-1, 3) of the line through xi (direction mod pi)."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    horiz = np.abs(xi2) <= np.abs(xi1)
    with np.errstate(divide="ignore", invalid="ignore"):
        th = xi2 / xi1
        tv = 2.0 - xi1 / xi2
    tau = np.where(horiz, th, tv)
    tau = np.where(tau >= 3.0, tau - 4.0, tau)
    return tau


class Tile(NamedTuple):
    """Frequency tile key: scale, cone (0 horizontal, 1 vertical) and slope index."""

    j: int
    cone: int
    ell: int


def shear_tile_from_position(j, i):
    """Map position i in 0..2^(j+2)-1 along the pseudo-angle to (cone, ell)."""
    i = np.asarray(i)
    horiz = i < 2 ** (j + 1)
    cone = np.where(horiz, 0, 1)
    ell = np.where(horiz, i - 2**j, 3 * 2**j - i - 1)
    return cone, ell


def shear_position(j, cone, ell):
    """Inverse of :func:`shear_tile_from_position`."""
    return ell + 2**j if cone == 0 else 3 * 2**j - ell - 1


def shear_center_tau(j, cone, ell):
    s = (ell + 0.5) * 2.0**-j
    return s if cone == 0 else 2.0 - s


def shear_direction(j, cone, ell):
    """Unit vector of the tile's central slope (e1 for the low-pass tile)."""
    if j == 0:
        return np.array([1.0, 0.0])
    s = (ell + 0.5) * 2.0**-j
    v = np.array([1.0, s]) if cone == 0 else np.array([s, 1.0])
    return v / np.hypot(*v)


@dataclass(frozen=True)
class WindowFamily:
    """Radial and angular windows of a frame with top scale ``max_scale``."""

    profile: TransitionProfile = TransitionProfile()
    max_scale: int = 3
    variant: str = "shear"

    def __post_init__(self):
        if self.variant not in ("shear", "rotational"):
            raise ValueError(f"unknown tiling variant {self.variant!r}")
        if self.max_scale < 0:
            raise ValueError("max_scale must be nonnegative")

    # -- layout -----------------------------------------------------------
    def n_directions(self, j):
        if j == 0:
            return 1
        if self.variant == "shear":
            return 2 ** (j + 2)
        return len(self._covering(j))

    def _covering(self, j):
        return _rotational_centers(j)

    def tiles(self):
        out = [Tile(0, 0, 0)]
        for j in range(1, self.max_scale + 1):
            if self.variant == "shear":
                for cone in (0, 1):
                    for ell in range(-(2**j), 2**j):
                        out.append(Tile(j, cone, ell))
            else:
                out.extend(Tile(j, 0, ell) for ell in range(self.n_directions(j)))
        return out

    def direction(self, tile):
        tile = Tile(*tile)
        if tile.j == 0:
            return np.array([1.0, 0.0])
        if self.variant == "shear":
            return shear_direction(*tile)
        return self._covering(tile.j)[tile.ell].copy()

    # -- radial -----------------------------------------------------------
    def radial(self, j, r):
        r = np.asarray(r, dtype=float)
        J = self.max_scale
        if J == 0:
            return np.ones_like(r)
        if j == 0:
            return lowpass_window(self.profile, r)
        w = radial_window(self.profile, 2.0 ** (1 - j) * r)
        if j == J:
            w = np.where(r >= 2.0**J, 1.0, w)
        return w

    # -- angular ----------------------------------------------------------
    def angular(self, tile, xi):
        """V for ``tile`` at frequencies ``xi`` (shape (..., 2), nonzero)."""
        tile = Tile(*tile)
        xi = np.asarray(xi, dtype=float)
        if np.any(np.hypot(xi[..., 0], xi[..., 1]) == 0):
            raise ValueError("angular window undefined at xi = 0")
        if tile.j == 0:
            return np.ones(xi.shape[:-1])
        if self.variant == "shear":
            tau = pseudo_angle(xi[..., 0], xi[..., 1])
            d = _wrap4(tau - shear_center_tau(*tile))
            return angular_bump(self.profile, 2.0**tile.j * d)
        s = self.direction(tile)
        u = xi / np.hypot(xi[..., 0], xi[..., 1])[..., None]
        dist = np.arccos(np.clip(u @ s, -1.0, 1.0))
        return plateau_window(self.profile, 2.0**tile.j * dist)

    def angular_energy(self, j, xi, full=False):
        """Sum over directions at scale j of V^2 (neighbouring tiles only unless ``full``)."""
        xi = np.asarray(xi, dtype=float)
        if j == 0:
            return np.ones(xi.shape[:-1])
        if full:
            tiles = [t for t in self.tiles() if t.j == j]
            return sum(self.angular(t, xi) ** 2 for t in tiles)
        if self.variant == "shear":
            tau = pseudo_angle(xi[..., 0], xi[..., 1])
            u = (tau + 1.0) * 2.0**j - 0.5
            x = u - np.floor(u)
            return angular_bump(self.profile, x) ** 2 + angular_bump(self.profile, 1.0 - x) ** 2
        centers = self._covering(j)
        u = xi / np.hypot(xi[..., 0], xi[..., 1])[..., None]
        ang = np.arctan2(u[..., 1], u[..., 0])
        cang = np.arctan2(centers[:, 1], centers[:, 0])
        out = np.zeros(xi.shape[:-1])
        # caps of radius 2^(1-j) only; the spacing is at most 2^-j
        near = 2.0 ** (1 - j)
        for c in cang:
            d = np.abs(_wrap2pi(ang - c))
            m = d < near
            if np.any(m):
                out[m] += plateau_window(self.profile, 2.0**j * d[m]) ** 2
        return out

    def phi(self, xi, full=False):
        """Normalisation Phi(xi) = sum over tiles of radial^2 * angular^2."""
        xi = np.asarray(xi, dtype=float)
        r = np.hypot(xi[..., 0], xi[..., 1])
        out = self.radial(0, r) ** 2
        nz = r > 0
        for j in range(1, self.max_scale + 1):
            rad = self.radial(j, r)
            m = nz & (rad > 0)
            if np.any(m):
                part = np.zeros_like(r)
                part[m] = rad[m] ** 2 * self.angular_energy(j, xi[m], full=full)
                out = out + part
        return out

    def psi_hat(self, tile, xi):
        """Normalised window psi_hat of ``tile`` at ``xi``; real, in [0, 1]."""
        tile = Tile(*tile)
        xi = np.asarray(xi, dtype=float)
        r = np.hypot(xi[..., 0], xi[..., 1])
        rad = self.radial(tile.j, r)
        out = np.zeros_like(r)
        m = rad > 0
        if tile.j > 0:
            m &= r > 0
        if np.any(m):
            ang = self.angular(tile, xi[m])
            out[m] = rad[m] * ang / np.sqrt(self.phi(xi[m]))
        return out


def _wrap4(d):
    return (np.asarray(d) + 2.0) % 4.0 - 2.0


def _wrap2pi(d):
    return (np.asarray(d) + np.pi) % (2 * np.pi) - np.pi


_ROT_CACHE: dict = {}


def _rotational_centers(j):
    if j not in _ROT_CACHE:
        _ROT_CACHE[j] = np.array(build_covering(2, 2.0**-j).centers)
    return _ROT_CACHE[j]


def pullback_matrix(direction, j):
    """U^{-T} for U = R^{-1} D_{2^-j}: maps eta to xi = R^T diag(2^j, 1) eta."""
    from .geometry import rotation_to_e1

    R = rotation_to_e1(direction)
    D = np.diag([2.0**j] + [1.0] * (len(direction) - 1))
    return R.T @ D


def derivative_boundedness_report(family, tile, order, samples=161, box=(0.25, 3.0, 3.0)):
    """Largest finite-difference derivative of psi_hat(U^{-T} eta) of given order.

    eta ranges over [box0, box1] x [-box2, box2]; all mixed partials of total
    order ``order`` are approximated by repeated central differences.
    """
    tile = Tile(*tile)
    if order > 4:
        raise ValueError("order must be at most 4")
    e1 = np.linspace(box[0], box[1], samples)
    e2 = np.linspace(-box[2], box[2], samples)
    h1, h2 = e1[1] - e1[0], e2[1] - e2[0]
    E1, E2 = np.meshgrid(e1, e2, indexing="ij")
    M = pullback_matrix(family.direction(tile), tile.j)
    xi = np.stack([E1, E2], -1) @ M.T
    vals = family.psi_hat(tile, xi)
    best = 0.0
    for a in range(order + 1):
        d = vals
        for _ in range(a):
            d = np.diff(d, axis=0) / h1
        for _ in range(order - a):
            d = np.diff(d, axis=1) / h2
        if d.size:
            best = max(best, float(np.max(np.abs(d))))
    return best
