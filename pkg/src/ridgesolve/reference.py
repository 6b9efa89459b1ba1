"""Exact solutions, test problems and approximation analytics.

Gallery functions are defined in unit coordinates y = x / L on [0, 1)^2
and evaluated periodically, so one problem definition serves every grid
size and period.  The Fourier oracle inverts the symbol on the grid; the
characteristic oracle integrates along the transport ray and needs only
point evaluations of f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .frame import CoeffVector, analyze_dense, frame_layout, l2_norm, synthesize
from .geometry import normalize
from .operator import TransportProblem, grid_symbol

BOX_DIRECTION = tuple(normalize([math.sqrt(2.0) / 2.0, math.pi / 3.0]))

# reference per-scale counts (j = 0..10) of the 10000 largest box_gaussian coefficients
REFERENCE_LOCALIZATION_COUNTS = (181, 2350, 2087, 1590, 1243, 912, 620, 417, 252, 231, 117)

GAUSS_WIDTH = 0.06
BOX_HALF_WIDTH = 0.05
CENTER = (0.5, 0.5)


@dataclass(frozen=True)
class Line:
    point: tuple  # unit coordinates
    direction: tuple


@dataclass(frozen=True, eq=False)
class GalleryProblem:
    name: str
    problem: TransportProblem
    source: object  # callable on unit coordinates (..., 2), periodic
    lines: tuple = field(default=())
    period: float = 1.0

    def source_physical(self, x):
        return self.source(np.asarray(x, dtype=float) / self.period)


def _periodic(y):
    return np.mod(np.asarray(y, dtype=float), 1.0)


def _gaussian_source(y):
    d = _periodic(y) - np.array(CENTER)
    return np.exp(-np.sum(d * d, axis=-1) / (2 * GAUSS_WIDTH**2))


def _box_source(y):
    s = np.array(BOX_DIRECTION)
    n = np.array([-s[1], s[0]])
    d = _periodic(y) - np.array(CENTER)
    box = (np.abs(d @ n) <= BOX_HALF_WIDTH).astype(float)
    return box * np.exp(-np.sum(d * d, axis=-1) / (2 * GAUSS_WIDTH**2))


def grid_points(spec):
    """Physical sample points x = L (i1, i2) / N, shape (N, N, 2)."""
    N = spec.grid_size
    i = np.arange(N) * (spec.period / N)
    X1, X2 = np.meshgrid(i, i, indexing="ij")
    return np.stack([X1, X2], -1)


def gallery(name, spec, gamma=8.0):
    """Named test problem sampled on the grid of ``spec``."""
    y = grid_points(spec) / spec.period
    if name == "gaussian":
        f = _gaussian_source(y)
        prob = TransportProblem((1.0, 0.0), gamma, f=f, name=name)
        return GalleryProblem(name, prob, _gaussian_source, (), spec.period)
    if name == "box_gaussian":
        f = _box_source(y)
        s = np.array(BOX_DIRECTION)
        n = np.array([-s[1], s[0]])
        c = np.array(CENTER)
        lines = tuple(Line(tuple(c + sg * BOX_HALF_WIDTH * n), BOX_DIRECTION) for sg in (-1.0, 1.0))
        prob = TransportProblem(BOX_DIRECTION, gamma, f=f, name=name)
        return GalleryProblem(name, prob, _box_source, lines, spec.period)
    raise ValueError(f"unknown gallery problem {name!r}; expected 'gaussian' or 'box_gaussian'")


# ---------------------------------------------------------------------------
# oracles


def fourier_direct_solve(problem, spec, f=None, real=None):
    """u_hat = f_hat / (2 pi i s . xi + gamma) on every grid frequency.

    The symbol is odd at the Nyquist wavenumber, so real f gives a
    solution with a small imaginary part in the Nyquist modes; ``real``
    (default: f is real) returns the real part.
    """
    if not problem.constant:
        raise NotImplementedError("the Fourier oracle needs constant absorption; use characteristic_solve")
    f = problem.f if f is None else f
    if f is None:
        raise ValueError("no right-hand side given")
    u = np.fft.ifft2(np.fft.fft2(f) / grid_symbol(spec, problem))
    if real is None:
        real = np.isrealobj(f)
    return u.real if real else u


def characteristic_solve(problem, x, f, length=None, step=1e-3, kappa0=None):
    """u(x) = int_0^T f(x - t s) exp(-int_0^t kappa(x - r s) dr) dt.

    ``f`` and ``kappa0`` are callables on physical points (..., 2).  T is
    chosen so that exp(-gamma T) < 1e-14 unless ``length`` is given.
    Constant absorption uses 8-point Gauss-Legendre panels of width
    ``step``; otherwise composite Simpson rules on a uniform grid.
    """
    if not step > 0:
        raise ValueError("quadrature step must be positive")
    x = np.asarray(x, dtype=float)
    s = np.asarray(problem.s)
    gamma = problem.gamma
    T = math.log(1e14) / gamma if length is None else float(length)
    if kappa0 is None:
        npan = max(1, math.ceil(T / step))
        g, wg = np.polynomial.legendre.leggauss(8)
        edges = np.linspace(0.0, T, npan + 1)
        h = np.diff(edges)[:, None]
        t = (edges[:-1, None] + 0.5 * h * (g + 1.0)).ravel()
        w = (0.5 * h * wg).ravel() * np.exp(-gamma * t)
        pts = x[..., None, :] - t[:, None] * s
        return np.sum(f(pts) * w, axis=-1)
    n = 2 * max(1, math.ceil(T / (2 * step)))
    t = np.linspace(0.0, T, n + 1)
    pts = x[..., None, :] - t[:, None] * s
    k = gamma + kappa0(pts)
    opt = integrate.cumulative_simpson(k, x=t, axis=-1, initial=0.0)
    return integrate.simpson(f(pts) * np.exp(-opt), x=t, axis=-1)


# ---------------------------------------------------------------------------
# approximation analytics


@dataclass
class NTermCurve:
    N: np.ndarray
    error: np.ndarray
    metric: str = "grid L2 (relative)"
    notice: str = ""

    def fit_exponent(self, lo=1e2, hi=1e4):
        """Least-squares slope of -log(error) against log(N) on [lo, hi]."""
        m = (self.N >= lo) & (self.N <= hi) & (self.error > 0)
        if m.sum() < 2:
            raise ValueError("fewer than two curve points inside the fit window")
        slope = np.polyfit(np.log(self.N[m]), np.log(self.error[m]), 1)[0]
        return float(-slope)


def _nterm_from_ranked(errors_of, Ns, total):
    raw = np.asarray(Ns, dtype=np.int64).ravel()
    if np.any(raw < 0):
        raise ValueError("N must be nonnegative")
    Ns = np.unique(raw)
    notes = []
    if Ns.size != raw.size or np.any(np.diff(raw) <= 0):
        notes.append("N list sorted and deduplicated")
    if Ns.size and Ns[-1] > total:
        notes.append(f"N clamped to the support size {total}")
    notice = "; ".join(notes)
    err = np.array([errors_of(min(int(n), total)) for n in Ns])
    # exact monotonicity: the kept sets are nested, rounding only
    err = np.minimum.accumulate(err)
    return Ns, err, notice


def nterm_curve(spec, target, Ns, problem=None):
    """Relative grid-L2 error of reconstructions from the N largest weighted coefficients."""
    lay = frame_layout(spec)
    c = analyze_dense(spec, target)
    w = problem.preconditioner.weights(spec) if problem is not None else np.ones(lay.total)
    order = np.argsort(-np.abs(w * c), kind="stable")
    nrm = l2_norm(spec, target)
    real = np.isrealobj(target)

    def err(n):
        if n == 0:
            return 1.0
        keep = order[:n]
        approx = synthesize(spec, CoeffVector(np.sort(keep), c[np.sort(keep)], lay.total), real=real)
        return l2_norm(spec, target - approx) / nrm

    Ns, e, notice = _nterm_from_ranked(err, Ns, lay.total)
    return NTermCurve(Ns, e, notice=notice)


def fourier_nterm_curve(target, Ns):
    """Relative L2 error of the N largest discrete Fourier coefficients (exact by Parseval)."""
    a = np.sort(np.abs(np.fft.fft2(target)).ravel() ** 2)[::-1]
    tail = np.r_[np.cumsum(a[::-1])[::-1], 0.0]
    total = tail[0]

    def err(n):
        return math.sqrt(max(tail[n], 0.0) / total)

    Ns, e, notice = _nterm_from_ranked(err, Ns, a.size)
    return NTermCurve(Ns, e, metric="grid L2 (relative), Fourier basis", notice=notice)


def weak_lp_quasinorm(c, p):
    """sup_n n^(1/p) |gamma_n(c)| over the nonincreasing rearrangement."""
    if not 0 < p < 2:
        raise ValueError("p must lie in (0, 2)")
    v = c.values if isinstance(c, CoeffVector) else np.asarray(c).ravel()
    a = np.sort(np.abs(v))[::-1]
    if a.size == 0:
        return 0.0
    n = np.arange(1, a.size + 1, dtype=float)
    return float(np.max(n ** (1.0 / p) * a))


def line_distance(points, lines, reach=1.0):
    """Distance from points (..., 2) to the nearest line, in unit coordinates.

    Each line is continued periodically for ``reach`` on both sides of its
    anchor point: periodic images m with |(x + m - p) . s| <= reach count.
    Ridge atoms span the domain along their ridge, so a lattice point whose
    ridge wraps once through the singular segment is near it.  Unbounded
    continuation would be meaningless, since a line with irrational slope
    is dense on the torus.
    """
    pts = np.asarray(points, dtype=float)
    best = np.full(pts.shape[:-1], np.inf)
    r = int(math.ceil(reach)) + 1
    shifts = np.array([(m1, m2) for m1 in range(-r, r + 1) for m2 in range(-r, r + 1)], dtype=float)
    for ln in lines:
        s = np.asarray(ln.direction)
        nrm = np.array([-s[1], s[0]])
        d = np.mod(pts - np.asarray(ln.point) + 0.5, 1.0) - 0.5
        for m in shifts:
            dm = d + m
            ok = np.abs(dm @ s) <= reach
            best = np.where(ok, np.minimum(best, np.abs(dm @ nrm)), best)
    return best


def localization_report(spec, c, top_N, lines, cells=3.0, reach=1.0):
    """Per-scale counts and line distances of the top_N largest coefficients.

    Distances are measured from the lattice position of each atom to the
    nearest singular line (unit coordinates) and reported in grid cells.
    """
    if not lines:
        raise ValueError("localisation needs at least one singular line")
    lay = frame_layout(spec)
    vals = c.dense() if isinstance(c, CoeffVector) else np.asarray(c)
    top_N = min(int(top_N), vals.size)
    idx = np.argpartition(-np.abs(vals), top_N - 1)[:top_N] if top_N < vals.size else np.arange(vals.size)
    t = lay.tile_of[idx]
    shapes = np.array([td.shape for td in lay.tiles])
    offs = np.asarray(lay.offsets)
    n1, n2 = np.divmod(idx - offs[t], shapes[t, 1])
    y = np.stack([n1 / shapes[t, 0], n2 / shapes[t, 1]], -1)
    dist = line_distance(y, lines, reach) * spec.grid_size
    scales = lay.scale_of[idx]
    rows = []
    for j in range(spec.max_scale + 1):
        m = scales == j
        ref = REFERENCE_LOCALIZATION_COUNTS[j] if j < len(REFERENCE_LOCALIZATION_COUNTS) else None
        rows.append(
            {
                "j": j,
                "count": int(m.sum()),
                "median_distance": float(np.median(dist[m])) if m.any() else float("nan"),
                "near": int(np.count_nonzero(dist[m] <= cells)),
                "reference_count": ref,
            }
        )
    return rows


def near_fraction(report, min_scale):
    """Share of coefficients at scales >= min_scale lying near a line."""
    cnt = sum(r["count"] for r in report if r["j"] >= min_scale)
    near = sum(r["near"] for r in report if r["j"] >= min_scale)
    return near / cnt if cnt else float("nan")


__all__ = [
    "BOX_DIRECTION",
    "GalleryProblem",
    "Line",
    "NTermCurve",
    "REFERENCE_LOCALIZATION_COUNTS",
    "characteristic_solve",
    "fourier_direct_solve",
    "fourier_nterm_curve",
    "gallery",
    "grid_points",
    "line_distance",
    "localization_report",
    "near_fraction",
    "nterm_curve",
    "weak_lp_quasinorm",
]
