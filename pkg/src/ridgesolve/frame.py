"""Discrete Parseval ridgelet frame on the periodic N x N grid.

Every tile keeps its frequency support points k (integer frequencies in
[-N/2, N/2)), the window values psi_hat on them, and a translation
lattice of M1 x M2 points.  (M1, M2) are powers of two dividing N chosen
as small as possible such that k -> (k1 mod M1, k2 mod M2) is injective
on the support; the wrapped window then lives on an M1 x M2 periodic
grid and one inverse FFT yields all translates at x_n = L (n1/M1, n2/M2).
Since the squared windows sum to one on the grid this gives an exactly
Parseval frame.

Grid functions are sampled at x = L (i1, i2) / N with i1 along axis 0, and
inner products are L^2 inner products <f, g> = h^2 sum f conj(g) with
h = L / N.  Coefficients of the whole frame are stored as one flat vector;
tile t owns the slice offsets[t] : offsets[t] + M1 M2 in row-major order.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .windows import (
    Tile,
    TransitionProfile,
    WindowFamily,
    angular_bump,
    pseudo_angle,
    shear_tile_from_position,
)


class FrameIndex(NamedTuple):
    """lambda = (j, cone, ell, k1, k2); k is the position on the tile lattice."""

    j: int
    cone: int
    ell: int
    k1: int
    k2: int


@dataclass(frozen=True)
class FrameSpec:
    grid_size: int
    max_scale: int
    period: float | None = None
    alpha_exponent: float = 1.1
    variant: str = "shear"

    def __post_init__(self):
        N, J = self.grid_size, self.max_scale
        if N < 4 or N & (N - 1):
            raise ValueError("grid_size must be a power of two >= 4")
        if J < 0 or 2**J > N // 2:
            raise ValueError(f"max_scale {J} does not fit a grid of size {N} (need 2^J <= N/2)")
        if self.period is None:
            object.__setattr__(self, "period", float(N) / 2 ** (J + 1))
        object.__setattr__(self, "period", float(self.period))
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.variant not in ("shear", "rotational"):
            raise ValueError("variant must be 'shear' or 'rotational'")

    @property
    def family(self):
        return WindowFamily(TransitionProfile(self.alpha_exponent), self.max_scale, self.variant)

    @property
    def h(self):
        return self.period / self.grid_size

    def as_dict(self):
        return {
            "grid_size": self.grid_size,
            "max_scale": self.max_scale,
            "period": self.period,
            "alpha_exponent": self.alpha_exponent,
            "variant": self.variant,
        }


@dataclass(frozen=True, eq=False)
class TileData:
    tile: Tile
    direction: np.ndarray
    shape: tuple
    k1: np.ndarray
    k2: np.ndarray
    values: np.ndarray
    fidx: np.ndarray  # flat index into the N x N FFT array
    slot: np.ndarray  # flat index into the M1 x M2 wrapped array
    offset: int

    @property
    def size(self):
        return self.shape[0] * self.shape[1]

    @property
    def j(self):
        return self.tile.j

    def atom_positions(self, period=1.0):
        n1, n2 = np.divmod(np.arange(self.size), self.shape[1])
        return period * np.stack([n1 / self.shape[0], n2 / self.shape[1]], 1)


@dataclass(eq=False)
class FrameLayout:
    spec: FrameSpec
    tiles: list
    total: int
    offsets: np.ndarray
    tile_of: np.ndarray = field(repr=False)  # coefficient -> tile number
    scale_of: np.ndarray = field(repr=False)

    def index_of(self, lam):
        lam = FrameIndex(*lam)
        t = self.tile_number(Tile(lam.j, lam.cone, lam.ell))
        M1, M2 = self.tiles[t].shape
        if not (0 <= lam.k1 < M1 and 0 <= lam.k2 < M2):
            raise IndexError(f"translation {lam.k1, lam.k2} outside lattice {M1}x{M2}")
        return int(self.offsets[t] + lam.k1 * M2 + lam.k2)

    def frame_index(self, flat):
        t = int(self.tile_of[flat])
        td = self.tiles[t]
        n1, n2 = divmod(int(flat - td.offset), td.shape[1])
        return FrameIndex(td.tile.j, td.tile.cone, td.tile.ell, n1, n2)

    @functools.cached_property
    def _tile_lookup(self):
        return {td.tile: i for i, td in enumerate(self.tiles)}

    def tile_number(self, tile):
        try:
            return self._tile_lookup[Tile(*tile)]
        except KeyError:
            raise IndexError(f"no tile {tuple(tile)} in this frame") from None

    @functools.cached_property
    def directions(self):
        return np.array([td.direction for td in self.tiles])

    def positions(self):
        """Atom centre of every coefficient, shape (total, 2)."""
        out = np.empty((self.total, 2))
        for td in self.tiles:
            out[td.offset : td.offset + td.size] = td.atom_positions(self.spec.period)
        return out


# ---------------------------------------------------------------------------
# construction


def _grid_freqs(N):
    k = (np.fft.fftfreq(N) * N).astype(np.int64)
    return np.meshgrid(k, k, indexing="ij")


def _scale_entries(family, j, K1, K2, norm):
    """(points, tile positions, squared values) of scale-j windows on given points."""
    r = np.hypot(K1, K2)
    rad = family.radial(j, r)
    sel = np.nonzero(rad > 0)[0] if j == 0 else np.nonzero((rad > 0) & (r > 0))[0]
    if j == 0:
        return sel, np.zeros(sel.size, dtype=np.int64), rad[sel] ** 2 / norm[sel]
    if family.variant == "shear":
        tau = pseudo_angle(K1[sel], K2[sel])
        u = (tau + 1.0) * 2.0**j - 0.5
        i0 = np.floor(u)
        x = u - i0
        i0 = i0.astype(np.int64)
        nt = 2 ** (j + 2)
        pts = np.concatenate([sel, sel])
        pos = np.concatenate([i0 % nt, (i0 + 1) % nt])
        ang = np.concatenate([angular_bump(family.profile, x), angular_bump(family.profile, 1.0 - x)])
        val = np.tile(rad[sel] ** 2 / norm[sel], 2) * ang**2
        return pts, pos, val
    pts, pos, val = [], [], []
    xi = np.stack([K1[sel], K2[sel]], 1).astype(float)
    for ell in range(family.n_directions(j)):
        a = family.angular(Tile(j, 0, ell), xi)
        m = a > 0
        pts.append(sel[m])
        pos.append(np.full(m.sum(), ell, dtype=np.int64))
        val.append(rad[sel][m] ** 2 * a[m] ** 2 / norm[sel][m])
    return np.concatenate(pts), np.concatenate(pos), np.concatenate(val)


def _choose_box(k1, k2, N, cone=0):
    """Smallest power-of-two lattice with injective wrapping.

    Among lattices with equal size the one elongated along the cone's
    normal axis (k1 for the horizontal cone) is preferred.
    """
    n = k1.size
    lg = int(math.log2(N))
    best = None
    for e in range(max(0, math.ceil(math.log2(max(n, 1)))), 2 * lg + 1):
        cands = [(a, e - a) for a in range(max(0, e - lg), min(lg, e) + 1)]
        cands.sort(key=lambda ab: ab[1] - ab[0] if cone == 0 else ab[0] - ab[1])
        for a1, a2 in cands:
            M1, M2 = 1 << a1, 1 << a2
            codes = (k1 & (M1 - 1)) * M2 + (k2 & (M2 - 1))
            if np.bincount(codes, minlength=M1 * M2).max(initial=0) <= 1:
                best = (M1, M2)
                break
        if best:
            return best
    raise RuntimeError("no injective lattice found")  # unreachable: (N, N) always works


@functools.lru_cache(maxsize=16)
def frame_layout(spec: FrameSpec) -> FrameLayout:
    """Build (and cache) all tiles of ``spec``."""
    N = spec.grid_size
    fam = spec.family
    K1, K2 = _grid_freqs(N)
    K1, K2 = K1.ravel(), K2.ravel()
    X1, X2 = K1 / spec.period, K2 / spec.period
    # explicit normalisation Phi on the grid
    phi = np.zeros(N * N)
    for j in range(spec.max_scale + 1):
        pts, _, val = _scale_entries(fam, j, X1, X2, np.ones(N * N))
        phi += np.bincount(pts, weights=val, minlength=N * N)
    if np.any(phi <= 0):
        raise RuntimeError("window family leaves grid frequencies uncovered")
    tiles = []
    offset = 0
    for j in range(spec.max_scale + 1):
        pts, pos, sq = _scale_entries(fam, j, X1, X2, phi)
        nt = max(fam.n_directions(j), 1)
        keep = sq > 0
        pts, pos, vals = pts[keep], pos[keep], np.sqrt(sq[keep])
        order = np.lexsort((pts, pos))
        pts, pos, vals = pts[order], pos[order], vals[order]
        bounds = np.searchsorted(pos, np.arange(nt + 1))
        for i in range(nt):
            a, b = bounds[i], bounds[i + 1]
            if j == 0:
                tile = Tile(0, 0, 0)
            elif fam.variant == "shear":
                cone, ell = shear_tile_from_position(j, i)
                tile = Tile(j, int(cone), int(ell))
            else:
                tile = Tile(j, 0, i)
            p = pts[a:b]
            k1, k2 = K1[p], K2[p]
            M1, M2 = _choose_box(k1, k2, N, tile.cone) if b > a else (1, 1)
            slot = (k1 % M1) * M2 + (k2 % M2)
            tiles.append(
                TileData(tile, fam.direction(tile), (M1, M2), k1, k2, vals[a:b], p, slot, offset)
            )
            offset += M1 * M2
    offsets = np.array([t.offset for t in tiles], dtype=np.int64)
    sizes = np.array([t.size for t in tiles])
    tile_of = np.repeat(np.arange(len(tiles)), sizes)
    scale_of = np.repeat(np.array([t.tile.j for t in tiles]), sizes)
    return FrameLayout(spec, tiles, offset, offsets, tile_of, scale_of)


def enumerate_indices(spec):
    """Tiles of the frame with their lattice shapes."""
    return [(td.tile, td.shape) for td in frame_layout(spec).tiles]


def partition_of_unity_error(spec):
    """max |sum psi_hat^2 - 1| over the grid."""
    lay = frame_layout(spec)
    N = spec.grid_size
    acc = np.zeros(N * N)
    for td in lay.tiles:
        np.add.at(acc, td.fidx, td.values**2)
    return float(np.max(np.abs(acc - 1.0)))


# ---------------------------------------------------------------------------
# coefficient vectors


class CoeffVector:
    """Sparse coefficient vector: sorted flat indices and complex values."""

    __slots__ = ("index", "values", "size")

    def __init__(self, index, values, size):
        self.index = np.asarray(index, dtype=np.int64)
        self.values = np.asarray(values, dtype=complex)
        self.size = int(size)

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(0, np.int64), np.zeros(0, complex), size)

    @classmethod
    def from_dense(cls, arr):
        arr = np.asarray(arr)
        idx = np.flatnonzero(arr)
        return cls(idx, arr[idx].astype(complex), arr.size)

    def dense(self):
        out = np.zeros(self.size, dtype=complex)
        out[self.index] = self.values
        return out

    @property
    def nnz(self):
        return self.index.size

    def __len__(self):
        return self.nnz

    def norm(self):
        return float(np.linalg.norm(self.values))

    def _combine(self, other, sign):
        if self.size != other.size:
            raise ValueError("coefficient vectors of different frames")
        idx = np.concatenate([self.index, other.index])
        val = np.concatenate([self.values, sign * other.values])
        u, inv = np.unique(idx, return_inverse=True)
        out = np.zeros(u.size, complex)
        np.add.at(out, inv, val)
        keep = out != 0
        return CoeffVector(u[keep], out[keep], self.size)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, a):
        if a == 0:
            return CoeffVector.zeros(self.size)
        return CoeffVector(self.index, self.values * a, self.size)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def scaled(self, factors):
        """Entrywise product with a dense array of per-coefficient factors."""
        return CoeffVector(self.index, self.values * factors[self.index], self.size)

    def items(self, layout):
        for i, v in zip(self.index, self.values):
            yield layout.frame_index(i), v


# ---------------------------------------------------------------------------
# analysis and synthesis


def analyze_hat(spec, fhat):
    """Dense coefficients from the DFT of a grid function (L^2 normalised)."""
    lay = frame_layout(spec)
    N = spec.grid_size
    fh = np.asarray(fhat).ravel()
    out = np.empty(lay.total, dtype=complex)
    for td in lay.tiles:
        M1, M2 = td.shape
        B = np.zeros(M1 * M2, dtype=complex)
        B[td.slot] = td.values * fh[td.fidx]
        c = np.fft.ifft2(B.reshape(M1, M2))
        out[td.offset : td.offset + td.size] = c.ravel() * (math.sqrt(M1 * M2) * spec.h / N)
    return out


def synthesize_hat(spec, c):
    """DFT of G* c for a dense coefficient array."""
    lay = frame_layout(spec)
    N = spec.grid_size
    c = np.asarray(c)
    acc = np.zeros(N * N, dtype=complex)
    for td in lay.tiles:
        M1, M2 = td.shape
        seg = c[td.offset : td.offset + td.size]
        if not np.any(seg):
            continue
        C = np.fft.fft2(seg.reshape(M1, M2)).ravel()
        acc[td.fidx] += td.values * C[td.slot] * (N / (math.sqrt(M1 * M2) * spec.h))
    return acc.reshape(N, N)


def _check_grid(spec, f):
    f = np.asarray(f)
    if f.shape != (spec.grid_size, spec.grid_size):
        raise ValueError(f"grid function has shape {f.shape}, expected {(spec.grid_size,) * 2}")
    return f


def analyze_dense(spec, f):
    return analyze_hat(spec, np.fft.fft2(_check_grid(spec, f)))


def analyze(spec, f):
    """c_lambda = <phi_lambda, f> as a sparse vector (exact zeros dropped)."""
    return CoeffVector.from_dense(analyze_dense(spec, f))


def synthesize(spec, c, real=None):
    """sum_lambda c_lambda phi_lambda on the grid.

    ``real`` discards the imaginary part; by default it is discarded when
    it vanishes to rounding (real input coefficients give real output).
    """
    lay = frame_layout(spec)
    if isinstance(c, CoeffVector):
        if c.size != lay.total:
            raise ValueError("coefficient vector does not belong to this frame")
        if c.nnz and (c.index.min() < 0 or c.index.max() >= lay.total):
            raise IndexError("coefficient index out of range")
        c = c.dense()
    elif np.asarray(c).size != lay.total:
        raise ValueError("coefficient vector does not belong to this frame")
    u = np.fft.ifft2(synthesize_hat(spec, c))
    if real is None:
        real = np.all(np.isreal(c))
    return u.real if real else u


def l2_norm(spec, f):
    return float(spec.h * np.linalg.norm(f))


def frame_bounds_estimate(spec, trials=20, seed=0):
    """Smallest and largest ratio sum |<phi, f>|^2 / ||f||^2 over test inputs."""
    if trials < 10:
        raise ValueError("use at least 10 trials")
    rng = np.random.default_rng(seed)
    N = spec.grid_size
    tests = [np.ones((N, N))]
    delta = np.zeros((N, N))
    delta[0, 0] = 1.0
    tests.append(delta)
    while len(tests) < trials:
        tests.append(rng.standard_normal((N, N)))
    ratios = []
    for f in tests:
        c = analyze_dense(spec, f)
        ratios.append(np.vdot(c, c).real / l2_norm(spec, f) ** 2)
    return float(min(ratios)), float(max(ratios))


# ---------------------------------------------------------------------------
# preconditioner


@dataclass(frozen=True)
class Preconditioner:
    """Diagonal weights w(lambda) = 1 + 2^j |s . s_{j,l}|."""

    s: tuple

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if abs(np.linalg.norm(s) - 1.0) > 1e-12:
            raise ValueError("preconditioner direction must be a unit vector")
        object.__setattr__(self, "s", tuple(s))

    def weight(self, j, s_tile):
        return 1.0 + 2.0**j * abs(float(np.dot(self.s, s_tile)))

    def tile_weights(self, spec):
        lay = frame_layout(spec)
        return np.array([self.weight(td.tile.j, td.direction) for td in lay.tiles])

    def weights(self, spec):
        """Weight of every coefficient (dense array)."""
        return _coefficient_weights(spec, self.s)


@functools.lru_cache(maxsize=16)
def _coefficient_weights(spec, s):
    pre = Preconditioner(s)
    lay = frame_layout(spec)
    w = np.repeat(pre.tile_weights(spec), [td.size for td in lay.tiles])
    w.setflags(write=False)
    return w


def apply_weights(pre, spec, c, power):
    if power not in (1, -1):
        raise ValueError("power must be +1 or -1")
    w = pre.weights(spec)
    if isinstance(c, CoeffVector):
        return c.scaled(w if power == 1 else 1.0 / w)
    return c * w if power == 1 else c / w


# ---------------------------------------------------------------------------
# persistence


def spec_hash(spec, extra=None):
    import hashlib

    payload = dict(spec.as_dict())
    if extra:
        payload.update(extra)
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def write_coefficients(path, spec, c, s=(1.0, 0.0), extra=None):
    """Header line of JSON, then one record 'j cone ell k1 k2 re im' per coefficient."""
    lay = frame_layout(spec)
    header = {
        "format": "ridgesolve-coefficients/1",
        "spec_hash": spec_hash(spec),
        "spec": spec.as_dict(),
        "N": spec.grid_size,
        "J": spec.max_scale,
        "s": [float(x) for x in s],
        "count": int(c.nnz),
    }
    if extra:
        header.update(extra)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, v in zip(c.index, c.values):
            lam = lay.frame_index(int(i))
            fh.write(
                f"{lam.j} {lam.cone} {lam.ell} {lam.k1} {lam.k2} "
                f"{float(v.real)!r} {float(v.imag)!r}\n"
            )


def read_coefficients(path):
    """Return (spec, CoeffVector, header) from a file written by write_coefficients."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        spec = FrameSpec(**header["spec"])
        lay = frame_layout(spec)
        idx, val = [], []
        for line in fh:
            if not line.strip():
                continue
            j, cone, ell, k1, k2, re, im = line.split()
            idx.append(lay.index_of(FrameIndex(int(j), int(cone), int(ell), int(k1), int(k2))))
            val.append(complex(float(re), float(im)))
    order = np.argsort(idx, kind="stable")
    return spec, CoeffVector(np.array(idx, np.int64)[order], np.array(val, complex)[order], lay.total), header
