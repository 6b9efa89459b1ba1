"""Preconditioned stiffness matrix F and projector P in frame coordinates.

    F = W^-1 G A* A G* W^-1,        P = W G G* W^-1,

with A u = s . grad u + (gamma + kappa0) u on the periodic grid, G the
frame analysis operator and W the diagonal weights.

For constant absorption both matrices are block translation invariant:
the entry between (t, n) and (t', n') only depends on the tile pair and on
n/M_t - n'/M_t'.  Each pair kernel is one inverse FFT of the product of the
two windows (times |sigma|^2 for F), folded onto the finer of the two
lattices.  Columns are then stored once per column tile and residue class
as magnitude-sorted templates, which gives the compressed matrices M^[k]
(largest ceil(2^k / k^2) entries per column) and the APPLY routine.
"""

from __future__ import annotations

import functools
import math
import threading
from dataclasses import dataclass

import numpy as np

from .frame import (
    CoeffVector,
    FrameIndex,
    Preconditioner,
    analyze_hat,
    frame_layout,
    synthesize_hat,
)


@dataclass(frozen=True, eq=False)
class TransportProblem:
    """s . grad u + (gamma + kappa0) u = f on the periodic square."""

    s: tuple = (1.0, 0.0)
    gamma: float = 8.0
    kappa0: np.ndarray | None = None
    f: np.ndarray | None = None
    name: str = "custom"

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.shape != (2,) or abs(np.linalg.norm(s) - 1.0) > 1e-12:
            raise ValueError("transport direction must be a unit vector in R^2")
        object.__setattr__(self, "s", tuple(s))
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kappa0 is not None and np.min(self.kappa0) < 0:
            raise ValueError("kappa0 must be nonnegative")

    @property
    def constant(self):
        return self.kappa0 is None

    @property
    def preconditioner(self):
        return Preconditioner(self.s)


def transport_symbol(problem, xi):
    """2 pi i s . xi + gamma for physical frequencies xi (shape (..., 2))."""
    xi = np.asarray(xi, dtype=float)
    s = np.asarray(problem.s)
    return 2j * np.pi * (xi @ s) + problem.gamma


def grid_frequencies(spec):
    N = spec.grid_size
    k = np.fft.fftfreq(N) * N
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    return np.stack([K1, K2], -1) / spec.period


def grid_symbol(spec, problem):
    return transport_symbol(problem, grid_frequencies(spec))


def apply_transport(spec, problem, u):
    Au = np.fft.ifft2(grid_symbol(spec, problem) * np.fft.fft2(u))
    if problem.kappa0 is not None:
        Au = Au + problem.kappa0 * u
    return Au


def apply_transport_adjoint(spec, problem, v):
    Av = np.fft.ifft2(np.conj(grid_symbol(spec, problem)) * np.fft.fft2(v))
    if problem.kappa0 is not None:
        Av = Av + problem.kappa0 * v
    return Av


def load_vector(spec, problem, f=None):
    """W^-1 G A* f as a dense coefficient array."""
    f = problem.f if f is None else f
    w = problem.preconditioner.weights(spec)
    if problem.constant:
        fh = np.conj(grid_symbol(spec, problem)) * np.fft.fft2(f)
    else:
        fh = np.fft.fft2(apply_transport_adjoint(spec, problem, f))
    return analyze_hat(spec, fh) / w


def coefficient_image(spec, problem, u):
    """W G u, the coefficient image of a grid function."""
    return problem.preconditioner.weights(spec) * analyze_hat(spec, np.fft.fft2(u))


def budget(k):
    """Kept entries per column at compression level k."""
    return math.ceil(2.0**k / k**2)


def level_for_budget(n):
    """Smallest k >= 1 whose budget is at least n."""
    k = 1
    while budget(k) < n:
        k += 1
    return k


def schur_bound(section):
    """sqrt(max row abs sum * max column abs sum) of a dense section."""
    a = np.abs(np.asarray(section))
    if a.size == 0:
        return 0.0
    return float(math.sqrt(a.sum(1).max() * a.sum(0).max()))


def measure_p_sparsity_dense(section, p):
    a = np.abs(np.asarray(section)) ** p
    return float(max(a.sum(0).max(), a.sum(1).max()) ** (1.0 / p))


def power_norm(matvec, size, rmatvec=None, steps=50, seed=0, dtype=complex):
    """Spectral norm estimate by power iteration on M^H M (fixed seed)."""
    rmatvec = rmatvec or matvec
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(size) + (1j * rng.standard_normal(size) if dtype is complex else 0)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(steps):
        y = matvec(x)
        est = np.linalg.norm(y)
        if est == 0:
            return 0.0
        z = rmatvec(y)
        nz = np.linalg.norm(z)
        if nz == 0:
            return float(est)
        x = z / nz
    return float(est)


# ---------------------------------------------------------------------------
# tile pairs


@functools.lru_cache(maxsize=8)
def tile_pairs(spec):
    """All ordered pairs of tiles sharing a grid frequency.

    Returns (pair_a, pair_b, starts, points, products): for pair i the
    shared points are points[starts[i]:starts[i+1]] with window products
    psi_a psi_b there.
    """
    lay = frame_layout(spec)
    pts = np.concatenate([td.fidx for td in lay.tiles])
    til = np.concatenate([np.full(td.fidx.size, i, dtype=np.int64) for i, td in enumerate(lay.tiles)])
    val = np.concatenate([td.values for td in lay.tiles])
    order = np.argsort(pts, kind="stable")
    pts, til, val = pts[order], til[order], val[order]
    starts = np.flatnonzero(np.r_[True, pts[1:] != pts[:-1]])
    counts = np.diff(np.r_[starts, pts.size])
    A, B, PT, PV = [], [], [], []
    for a in range(counts.max()):
        for b in range(counts.max()):
            g = counts > max(a, b)
            s = starts[g]
            A.append(til[s + a])
            B.append(til[s + b])
            PT.append(pts[s])
            PV.append(val[s + a] * val[s + b])
    A, B, PT, PV = map(np.concatenate, (A, B, PT, PV))
    nt = len(lay.tiles)
    key = A * nt + B
    order = np.argsort(key, kind="stable")
    key, PT, PV = key[order], PT[order], PV[order]
    ps = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    pa, pb = np.divmod(key[ps], nt)
    return pa, pb, np.r_[ps, key.size], PT, PV


@functools.lru_cache(maxsize=8)
def _pairs_by_column(spec):
    pa, pb, *_ = tile_pairs(spec)
    order = np.argsort(pb, kind="stable")
    cuts = np.searchsorted(pb[order], np.arange(len(frame_layout(spec).tiles) + 1))
    return [order[cuts[i] : cuts[i + 1]] for i in range(cuts.size - 1)]


def tiles_overlap_matrix(spec):
    """Boolean (tiles x tiles) matrix: supports share a grid frequency."""
    lay = frame_layout(spec)
    pa, pb, *_ = tile_pairs(spec)
    out = np.zeros((len(lay.tiles),) * 2, dtype=bool)
    out[pa, pb] = True
    return out


# ---------------------------------------------------------------------------
# templates


KCAP = 40  # compression levels tabulated for the error bounds
TEMPLATE_LIMIT = 60000  # APPLY builds templates automatically up to this size
WORK_FACTOR = 8  # template work, in units of the frame size, above which APPLY uses FFTs


@dataclass(eq=False)
class _Templates:
    # per template (column tile, residue class)
    t_start: np.ndarray  # pointer into the entry arrays
    t_len: np.ndarray  # stored entries
    t_col: np.ndarray  # column tile
    col_tail: np.ndarray  # (KCAP + 1,) max over templates of the abs tail at level k
    row_tail: np.ndarray  # (KCAP + 1,) max over row tiles of summed template tails
    Q: np.ndarray  # (tiles, 2) residue class moduli
    first_template: np.ndarray  # template id of class (0, 0)
    # per entry
    e_tile: np.ndarray  # row tile (int32)
    e_d: np.ndarray  # flat row position inside the tile for shift 0 (int32)
    e_val: np.ndarray
    kmax: int  # smallest level whose budget covers every stored template


class OperatorMatrix:
    """Lazy stiffness (kind 'F') or projector (kind 'P') matrix.

    Exact products use FFTs on the grid; compressed products and columns use
    per-tile-pair kernels (constant absorption only).  ``drop_tol`` is the
    absolute-sum threshold, relative to the largest diagonal entry, below
    which the tail of a column is not stored; it is accounted for in every
    error bound.  ``weighted=False`` replaces the preconditioner W by the
    identity (for conditioning comparisons).
    """

    def __init__(self, spec, problem, kind="F", drop_tol=1e-10, weighted=True):
        if kind not in ("F", "P"):
            raise ValueError("kind must be 'F' or 'P'")
        self.spec = spec
        self.problem = problem
        self.kind = kind
        self.drop_tol = float(drop_tol)
        self.layout = frame_layout(spec)
        self.size = self.layout.total
        self.weighted = bool(weighted)
        if self.weighted:
            self.w = problem.preconditioner.weights(spec)
            self.tile_w = problem.preconditioner.tile_weights(spec)
        else:
            self.w = np.ones(self.size)
            self.tile_w = np.ones(len(self.layout.tiles))
        self._columns = {}
        self._lock = threading.Lock()

    # -- exact products ----------------------------------------------------
    def _AstarA_hat(self, fh):
        if self.problem.constant:
            return np.abs(grid_symbol(self.spec, self.problem)) ** 2 * fh
        u = np.fft.ifft2(fh)
        v = apply_transport_adjoint(self.spec, self.problem, apply_transport(self.spec, self.problem, u))
        return np.fft.fft2(v)

    def matvec(self, c):
        c = c.dense() if isinstance(c, CoeffVector) else np.asarray(c)
        fh = synthesize_hat(self.spec, c / self.w)
        if self.kind == "F":
            return analyze_hat(self.spec, self._AstarA_hat(fh)) / self.w
        return analyze_hat(self.spec, fh) * self.w

    def rmatvec(self, c):
        """Product with the conjugate transpose."""
        if self.kind == "F":
            return self.matvec(c)
        c = c.dense() if isinstance(c, CoeffVector) else np.asarray(c)
        return analyze_hat(self.spec, synthesize_hat(self.spec, c * self.w)) / self.w

    def dense(self):
        """Full matrix by products with unit vectors (small frames only)."""
        if self.size > 6000:
            raise MemoryError("dense assembly limited to 6000 coefficients")
        out = np.empty((self.size, self.size), dtype=complex)
        e = np.zeros(self.size, dtype=complex)
        for i in range(self.size):
            e[i] = 1.0
            out[:, i] = self.matvec(e)
            e[i] = 0.0
        return out

    @functools.cached_property
    def _range_multiplier(self):
        # G* W^-2 G is the Fourier multiplier sum_t psi_t^2 / w_t^2
        N = self.spec.grid_size
        b = np.zeros(N * N)
        for t, td in enumerate(self.layout.tiles):
            np.add.at(b, td.fidx, td.values**2 / self.tile_w[t] ** 2)
        return b.reshape(N, N)

    def range_project(self, c):
        """Orthogonal projection onto ran F = ran W^-1 G."""
        c = c.dense() if isinstance(c, CoeffVector) else np.asarray(c)
        fh = synthesize_hat(self.spec, c / self.w)
        return analyze_hat(self.spec, fh / self._range_multiplier) / self.w

    def symbol_spectrum(self):
        """Exact eigenvalues of F on its range: |sigma|^2 b on the grid (constant absorption)."""
        if self.kind != "F" or not self.problem.constant:
            raise ValueError("the symbol spectrum needs the stiffness matrix with constant absorption")
        return np.abs(grid_symbol(self.spec, self.problem)) ** 2 * self._range_multiplier

    def norm_estimate(self, steps=50, seed=0):
        return power_norm(self.matvec, self.size, self.rmatvec, steps, seed)

    # -- entries -----------------------------------------------------------
    def _atom_hat(self, flat):
        """DFT of the L^2-normalised atom with flat index ``flat`` (N x N)."""
        e = np.zeros(self.size, dtype=complex)
        e[flat] = 1.0
        return synthesize_hat(self.spec, e)

    def entry(self, lam, lam2):
        """M[lam, lam2] as a frequency sum (constant kappa) or grid quadrature."""
        i = self.layout.index_of(lam) if not isinstance(lam, (int, np.integer)) else int(lam)
        k = self.layout.index_of(lam2) if not isinstance(lam2, (int, np.integer)) else int(lam2)
        a, b = self._atom_hat(i), self._atom_hat(k)
        h2n2 = (self.spec.h / self.spec.grid_size) ** 2
        if self.kind == "P":
            return complex(self.w[i] / self.w[k] * h2n2 * np.vdot(a, b))
        if self.problem.constant:
            sig2 = np.abs(grid_symbol(self.spec, self.problem)) ** 2
            val = h2n2 * np.vdot(a, sig2 * b)
        else:
            Aa = apply_transport(self.spec, self.problem, np.fft.ifft2(a))
            Ab = apply_transport(self.spec, self.problem, np.fft.ifft2(b))
            val = self.spec.h**2 * np.vdot(Aa, Ab)
        return complex(val / (self.w[i] * self.w[k]))

    def column(self, lam2):
        """Sparse column (rows, values), exact zeros dropped; memoised."""
        k = self.layout.index_of(lam2) if not isinstance(lam2, (int, np.integer)) else int(lam2)
        with self._lock:
            if k in self._columns:
                return self._columns[k]
        if self.problem.constant:
            rows, vals = self._column_from_kernels(k)
        else:
            e = np.zeros(self.size, dtype=complex)
            e[k] = 1.0
            col = self.matvec(e)
            rows = np.flatnonzero(col)
            vals = col[rows]
        rows.setflags(write=False)
        vals.setflags(write=False)
        with self._lock:
            self._columns.setdefault(k, (rows, vals))
        return self._columns[k]

    def _column_from_kernels(self, k):
        lay = self.layout
        t2 = int(lay.tile_of[k])
        td2 = lay.tiles[t2]
        n2 = np.array(divmod(k - td2.offset, td2.shape[1]))
        rows, vals = [], []
        for t, g, P in self._pair_kernels_for_column(t2):
            td = lay.tiles[t]
            M = np.array(td.shape)
            M2 = np.array(td2.shape)
            m1 = (np.arange(M[0]) * (P[0] // M[0]) - n2[0] * (P[0] // M2[0])) % P[0]
            m2 = (np.arange(M[1]) * (P[1] // M[1]) - n2[1] * (P[1] // M2[1])) % P[1]
            block = g[np.ix_(m1, m2)].ravel()
            rows.append(td.offset + np.arange(td.size))
            vals.append(block)
        rows = np.concatenate(rows)
        vals = np.concatenate(vals)
        nz = vals != 0
        order = np.argsort(rows[nz])
        return rows[nz][order], vals[nz][order]

    # -- pair kernels ------------------------------------------------------
    def _kernel_multiplier(self):
        if self.kind == "P":
            return None
        return np.abs(grid_symbol(self.spec, self.problem).ravel()) ** 2

    def _pair_kernels_for_column(self, t2):
        """Yield (row tile, scaled kernel g on the P grid, P) for column tile t2."""
        if not self.problem.constant:
            raise NotImplementedError("pair kernels require constant absorption")
        pa, pb, starts, PT, PV = tile_pairs(self.spec)
        lay = self.layout
        N = self.spec.grid_size
        mult = self._kernel_multiplier()
        idxs = _pairs_by_column(self.spec)[t2]
        td2 = lay.tiles[t2]
        for i in idxs:
            t = int(pa[i])
            td = lay.tiles[t]
            P = (max(td.shape[0], td2.shape[0]), max(td.shape[1], td2.shape[1]))
            p = PT[starts[i] : starts[i + 1]]
            kv = PV[starts[i] : starts[i + 1]]
            if mult is not None:
                kv = kv * mult[p]
            k1, k2 = np.divmod(p, N)
            fold = np.zeros(P, dtype=float)
            np.add.at(fold, (k1 % P[0], k2 % P[1]), kv)
            g = np.fft.ifft2(fold) * (P[0] * P[1])
            if self.kind == "F":
                scale = 1.0 / (self.tile_w[t] * self.tile_w[t2])
            else:
                scale = self.tile_w[t] / self.tile_w[t2]
            g *= scale / math.sqrt(td.size * td2.size)
            yield t, g, P

    # -- templates and compression ------------------------------------------
    @functools.cached_property
    def templates(self):
        return self._build_templates()

    def _build_templates(self):
        lay = self.layout
        nt = len(lay.tiles)
        pa, pb, *_ = tile_pairs(self.spec)
        shapes = np.array([td.shape for td in lay.tiles])
        # residue moduli of every column tile
        Q = np.ones((nt, 2), dtype=np.int64)
        np.maximum.at(Q, pb, np.maximum(1, shapes[pb] // shapes[pa]))
        drop_abs = self.drop_tol * self._max_diagonal()
        budgets = np.array([0] + [budget(k) for k in range(1, KCAP + 1)])
        t_start, t_len, t_col = [], [], []
        first = np.zeros(nt, dtype=np.int64)
        e_tile, e_d, e_val = [], [], []
        col_tail = np.zeros(KCAP + 1)
        row_tail = np.zeros((nt, KCAP + 1))
        pos = 0
        max_len = 0
        for t2 in range(nt):
            M2 = shapes[t2]
            q = Q[t2]
            first[t2] = len(t_start)
            kern = list(self._pair_kernels_for_column(t2))
            rt = np.array([t for t, _, _ in kern])
            sizes = shapes[rt, 0] * shapes[rt, 1]
            tile_of_entry = np.repeat(np.arange(rt.size), sizes)
            d_of_entry = np.concatenate([np.arange(s) for s in sizes])
            for b1 in range(q[0]):
                for b2 in range(q[1]):
                    parts = []
                    for t, g, P in kern:
                        M = shapes[t]
                        m1 = (np.arange(M[0]) * (P[0] // M[0]) - b1 * (P[0] // M2[0])) % P[0]
                        m2 = (np.arange(M[1]) * (P[1] // M[1]) - b2 * (P[1] // M2[1])) % P[1]
                        parts.append(g[np.ix_(m1, m2)].ravel())
                    val = np.concatenate(parts)
                    av = np.abs(val)
                    order = np.argsort(-av, kind="stable")
                    av_sorted = av[order]
                    tail = np.r_[np.cumsum(av_sorted[::-1])[::-1], 0.0]
                    keep = int(np.searchsorted(-tail, -drop_abs, side="left"))
                    keep = min(keep, int(np.count_nonzero(av_sorted)))
                    max_len = max(max_len, keep)
                    col_tail = np.maximum(col_tail, tail[np.minimum(budgets, keep)])
                    # entries of rank r are missing at the levels k < c(r)
                    rank = np.arange(av.size)
                    c = np.minimum(np.searchsorted(budgets, rank, side="right"), KCAP + 1)
                    c[rank >= keep] = KCAP + 1
                    acc = np.bincount(
                        tile_of_entry[order] * (KCAP + 2) + c,
                        weights=av_sorted,
                        minlength=rt.size * (KCAP + 2),
                    ).reshape(rt.size, KCAP + 2)
                    row_tail[rt] += np.cumsum(acc[:, ::-1], axis=1)[:, ::-1][:, 1:]
                    sel = order[:keep]
                    t_start.append(pos)
                    t_len.append(keep)
                    t_col.append(t2)
                    e_tile.append(rt[tile_of_entry[sel]].astype(np.int32))
                    e_d.append(d_of_entry[sel].astype(np.int32))
                    e_val.append(val[sel])
                    pos += keep
        row_tail[:, 0] = np.inf  # level 0 is unused
        col_tail[0] = np.inf
        return _Templates(
            t_start=np.array(t_start, dtype=np.int64),
            t_len=np.array(t_len, dtype=np.int64),
            t_col=np.array(t_col, dtype=np.int64),
            col_tail=col_tail,
            row_tail=row_tail.max(0),
            Q=Q,
            first_template=first,
            e_tile=np.concatenate(e_tile),
            e_d=np.concatenate(e_d),
            e_val=np.concatenate(e_val).astype(complex),
            kmax=level_for_budget(max(max_len, 1)),
        )

    def _max_diagonal(self):
        best = 0.0
        lay = self.layout
        for t, td in enumerate(lay.tiles):
            if self.kind == "P":
                d = np.sum(td.values**2) / td.size
            else:
                sig2 = np.abs(grid_symbol(self.spec, self.problem).ravel()[td.fidx]) ** 2
                d = np.sum(sig2 * td.values**2) / td.size / self.tile_w[t] ** 2
            best = max(best, float(d))
        return best

    def _fold_sums(self, p, max_scale=None):
        """Column and row sums of |entry|^p over the section j <= max_scale.

        Uses block translation invariance: the sums of one block only need
        the kernel folded onto the coarser lattice.
        """
        lay = self.layout
        J = self.spec.max_scale if max_scale is None else int(max_scale)
        col = [None] * len(lay.tiles)
        row = [np.zeros(td.size) for td in lay.tiles]
        for t2, td2 in enumerate(lay.tiles):
            if td2.j > J:
                continue
            M2 = np.array(td2.shape)
            acc = np.zeros(td2.size)
            for t, g, P in self._pair_kernels_for_column(t2):
                td = lay.tiles[t]
                if td.j > J:
                    continue
                M = np.array(td.shape)
                a = np.abs(g) ** p
                # column n' = 0 .. M2: sum over rows n (stride P / M)
                st = np.array(P) // M
                f = a.reshape(M[0], st[0], M[1], st[1]).sum(axis=(0, 2))
                r1 = (-np.arange(M2[0]) * (P[0] // M2[0])) % st[0]
                r2 = (-np.arange(M2[1]) * (P[1] // M2[1])) % st[1]
                acc += f[np.ix_(r1, r2)].ravel()
                # rows n: sum over columns n' (stride P / M2)
                st = np.array(P) // M2
                f = a.reshape(M2[0], st[0], M2[1], st[1]).sum(axis=(0, 2))
                r1 = (np.arange(M[0]) * (P[0] // M[0])) % st[0]
                r2 = (np.arange(M[1]) * (P[1] // M[1])) % st[1]
                row[t] += f[np.ix_(r1, r2)].ravel()
            col[t2] = acc
        cmax = max(float(c.max()) for c in col if c is not None)
        rmax = max(float(r.max()) for r in row if r.size)
        return cmax, rmax

    @functools.cached_property
    def _abs_sums(self):
        return self._fold_sums(1.0)

    def column_sum(self):
        return self._abs_sums[0]

    def norm_bound(self):
        """Schur bound of the full matrix."""
        return math.sqrt(self._abs_sums[0] * self._abs_sums[1])

    def compression_bound(self, k):
        """Rigorous Schur bound on ||M - M^[k]||; k = 0 means the whole matrix.

        Inside one template distinct columns hit distinct rows, so the row
        sums of the remainder are bounded by the summed template tails.
        """
        if k == 0:
            return self.norm_bound()
        T = self.templates
        kk = min(int(k), KCAP)
        return math.sqrt(T.col_tail[kk] * T.row_tail[kk])

    def compression_bounds(self, kmax=None):
        kmax = self.templates.kmax if kmax is None else kmax
        return np.array([self.compression_bound(k) for k in range(1, kmax + 1)])

    def p_sparsity(self, p, max_scale=None):
        """max of column and row (sum |entry|^p)^(1/p) over the section j <= max_scale."""
        if not 0 < p <= 1:
            raise ValueError("p must lie in (0, 1]")
        c, r = self._fold_sums(p, max_scale)
        return float(max(c, r) ** (1.0 / p))

    def compress(self, k):
        return CompressedMatrix(self, k)

    # -- template application ----------------------------------------------
    def _template_ids(self, idx):
        lay = self.layout
        T = self.templates
        t2 = lay.tile_of[idx]
        loc = idx - lay.offsets[t2]
        M2s = np.array([td.shape[1] for td in lay.tiles])[t2]
        n1, n2 = np.divmod(loc, M2s)
        q = T.Q[t2]
        tid = T.first_template[t2] + (n1 % q[:, 0]) * q[:, 1] + (n2 % q[:, 1])
        return tid, n1 // q[:, 0], n2 // q[:, 1]

    @functools.cached_property
    def _tile_arrays(self):
        lay = self.layout
        shapes = np.array([td.shape for td in lay.tiles], dtype=np.int64)
        return shapes, np.asarray(lay.offsets, dtype=np.int64)

    def _entry_rows(self, e, ctile, a1, a2):
        """Flat rows of stored entries e for columns shifted by (a1, a2)."""
        T = self.templates
        shapes, offs = self._tile_arrays
        rt = T.e_tile[e]
        M1, M2 = shapes[rt, 0], shapes[rt, 1]
        q = T.Q[ctile]
        mul1 = q[:, 0] * M1 // shapes[ctile, 0]
        mul2 = q[:, 1] * M2 // shapes[ctile, 1]
        d1, d2 = np.divmod(T.e_d[e].astype(np.int64), M2)
        r1 = (d1 + a1 * mul1) % M1
        r2 = (d2 + a2 * mul2) % M2
        return offs[rt] + r1 * M2 + r2

    def _accumulate(self, idx, vals, nkeep, out):
        """out += M^[budget nkeep] restricted to columns idx, applied to vals."""
        if idx.size == 0:
            return 0
        T = self.templates
        tid, a1, a2 = self._template_ids(idx)
        L = np.minimum(T.t_len[tid], nkeep)
        total = int(L.sum())
        if total == 0:
            return 0
        col = np.repeat(np.arange(idx.size), L)
        starts = np.repeat(T.t_start[tid] - np.r_[0, np.cumsum(L)[:-1]], L)
        e = starts + np.arange(total)
        rows = self._entry_rows(e, T.t_col[tid][col], a1[col], a2[col])
        prod = T.e_val[e] * vals[col]
        out += np.bincount(rows, weights=prod.real, minlength=self.size)
        out += 1j * np.bincount(rows, weights=prod.imag, minlength=self.size)
        return total

    def apply(self, c, eps, stats=None, method="auto"):
        """Approximate M c with ||M c - result|| <= eps.

        ``method`` is 'templates' (compressed columns, dyadic bands),
        'exact' (FFT product followed by COARSE) or 'auto', which uses the
        templates only for small frames or when they are already built.
        """
        if not eps > 0:
            raise ValueError("APPLY tolerance must be positive")
        if method not in ("auto", "templates", "exact"):
            raise ValueError("method must be 'auto', 'templates' or 'exact'")
        if c.nnz == 0:
            return CoeffVector.zeros(self.size)
        forced = method == "templates"
        if method == "auto":
            small = self.size <= TEMPLATE_LIMIT or "templates" in self.__dict__
            method = "templates" if small and self.problem.constant else "exact"
        if method == "exact" or not self.problem.constant:
            if stats is not None:
                stats["work"] = stats.get("work", 0) + self.size
            return coarse(CoeffVector.from_dense(self.matvec(c)), eps)
        norm = self.norm_bound()
        mag = np.abs(c.values)
        order = np.argsort(-mag, kind="stable")
        sq = mag[order] ** 2
        tail = np.sqrt(np.maximum(np.cumsum(sq[::-1])[::-1], 0.0))
        tail = np.r_[tail, 0.0]
        # drop the smallest entries while norm * ||dropped|| <= eps / 2
        keep = int(np.searchsorted(-tail, -(0.5 * eps / norm), side="left"))
        if keep == 0:
            return CoeffVector.zeros(self.size)
        sel = order[:keep]
        vmax = mag[sel[0]]
        band = np.floor(np.log2(vmax / mag[sel])).astype(np.int64)
        bands = np.unique(band)
        share = 0.5 * eps / bands.size
        bounds = self.compression_bounds()
        plan = []
        for p in bands:
            m = sel[band == p]
            ok = np.flatnonzero(bounds * float(np.linalg.norm(c.values[m])) <= share)
            plan.append((m, int(ok[0]) + 1 if ok.size else None))
        est = sum(m.size * budget(k) for m, k in plan if k is not None)
        if not forced and est > WORK_FACTOR * self.size:
            # the compressed columns are denser than one FFT product
            if stats is not None:
                stats["work"] = stats.get("work", 0) + self.size
            return coarse(CoeffVector.from_dense(self.matvec(c)), eps)
        out = np.zeros(self.size, dtype=complex)
        exact = [m for m, k in plan if k is None]
        work = 0
        for m, k in plan:
            if k is not None:
                work += self._accumulate(c.index[m], c.values[m], budget(k), out)
        if exact:
            # stored templates are not accurate enough: exact product
            m = np.concatenate(exact)
            out += self.matvec(CoeffVector(c.index[m], c.values[m], self.size))
            work += self.size
        if stats is not None:
            stats["work"] = stats.get("work", 0) + work
        return CoeffVector.from_dense(out)

    def export_section(self, path, rows, cols):
        """Coordinate-format text (row col re im) of the dense section rows x cols."""
        rows = np.asarray(rows)
        with open(path, "w") as fh:
            for c in cols:
                ri, vi = self.column(int(c))
                m = np.isin(ri, rows)
                for r, v in zip(ri[m], vi[m]):
                    fh.write(f"{int(r)} {int(c)} {float(v.real)!r} {float(v.imag)!r}\n")


class CompressedMatrix:
    """M^[k]: every column truncated to its ceil(2^k/k^2) largest entries."""

    def __init__(self, base, k):
        if k < 1:
            raise ValueError("compression level must be >= 1")
        self.base = base
        self.k = int(k)
        self.budget = budget(k)

    def matvec(self, c):
        c = c.dense() if isinstance(c, CoeffVector) else np.asarray(c)
        out = np.zeros(self.base.size, dtype=complex)
        idx = np.flatnonzero(c)
        self.base._accumulate(idx, c[idx], self.budget, out)
        return out

    def column(self, lam2):
        k = self.base.layout.index_of(lam2) if not isinstance(lam2, (int, np.integer)) else int(lam2)
        e = np.zeros(self.base.size, dtype=complex)
        e[k] = 1.0
        col = self.matvec(e)
        rows = np.flatnonzero(col)
        return rows, col[rows]

    def error_bound(self):
        return self.base.compression_bound(self.k)

    def error_estimate(self, steps=50, seed=0):
        """Power-iteration estimate of ||M - M^[k]||."""

        def diff(x):
            return self.base.matvec(x) - self.matvec(x)

        def rdiff(y):
            # (M - M^[k])^H y, via the exact adjoint and a dense transpose of M^[k]
            return self.base.rmatvec(y) - self._rmatvec(y)

        return power_norm(diff, self.base.size, rdiff, steps, seed)

    def _rmatvec(self, y):
        T = self.base.templates
        base = self.base
        idx = np.arange(base.size)
        tid, a1, a2 = base._template_ids(idx)
        L = np.minimum(T.t_len[tid], self.budget)
        total = int(L.sum())
        col = np.repeat(idx, L)
        starts = np.repeat(T.t_start[tid] - np.r_[0, np.cumsum(L)[:-1]], L)
        e = starts + np.arange(total)
        rows = base._entry_rows(e, T.t_col[tid][col], a1[col], a2[col])
        prod = np.conj(T.e_val[e]) * y[rows]
        out = np.bincount(col, weights=prod.real, minlength=base.size).astype(complex)
        out += 1j * np.bincount(col, weights=prod.imag, minlength=base.size)
        return out


def coarse(c, eps):
    """Drop small entries with dropped l2 norm <= eps; support <= 2 N_min.

    Entries are binned by dyadic magnitude (linear time) and whole bins are
    kept from the largest down; the last bin is split by a partial sort.
    """
    if eps <= 0 or c.nnz == 0:
        return c
    total = c.norm()
    if eps >= total:
        return CoeffVector.zeros(c.size)
    mag = np.abs(c.values)
    vmax = mag.max()
    nb = 64
    with np.errstate(divide="ignore"):
        b = np.floor(2.0 * np.log2(vmax / mag)).astype(np.int64)
    b = np.minimum(b, nb - 1)
    bsq = np.bincount(b, weights=mag**2, minlength=nb)
    # remaining energy once bins 0..i are kept
    rest = np.sqrt(np.maximum(total**2 - np.cumsum(bsq), 0.0))
    last = int(np.searchsorted(-rest, -eps, side="left"))
    keep = b < last
    # entries of bin `last` sorted within the bin only
    cand = np.flatnonzero(b == last)
    need = (total**2 - (bsq[:last].sum())) - eps**2
    if need > 0 and cand.size:
        order = cand[np.argsort(-mag[cand], kind="stable")]
        cum = np.cumsum(mag[order] ** 2)
        n = int(np.searchsorted(cum, need - 1e-300, side="left")) + 1
        keep[order[:n]] = True
    return CoeffVector(c.index[keep], c.values[keep], c.size)


def rhs_truncate(c, eps):
    """Minimal prefix (by magnitude) with tail norm <= eps."""
    if c.nnz == 0:
        return c
    mag = np.abs(c.values)
    order = np.argsort(-mag, kind="stable")
    tail = np.sqrt(np.maximum(np.cumsum(mag[order][::-1] ** 2)[::-1], 0.0))
    tail = np.r_[tail, 0.0]
    n = int(np.searchsorted(-tail, -eps, side="left"))
    sel = np.sort(order[:n])
    return CoeffVector(c.index[sel], c.values[sel], c.size)


def zero_pattern(spec, op=None):
    """(predicate, nonzero) booleans over all ordered tile pairs.

    ``nonzero`` marks tile pairs whose frequency supports share a grid
    point, which is exactly where a constant-absorption block can be
    nonzero.  With ``op`` the dense blocks are also scanned (small frames)
    and a pair counts as nonzero if any entry exceeds 1e-12 times the
    largest entry.
    """
    from .geometry import tile_intersection_possible

    lay = frame_layout(spec)
    nt = len(lay.tiles)
    pred = np.zeros((nt, nt), dtype=bool)
    for a, ta in enumerate(lay.tiles):
        for b, tb in enumerate(lay.tiles):
            pred[a, b] = tile_intersection_possible(ta.j, ta.direction, tb.j, tb.direction)
    if op is None:
        return pred, tiles_overlap_matrix(spec)
    D = np.abs(op.dense())
    tol = 1e-12 * D.max()
    nz = np.zeros((nt, nt), dtype=bool)
    for a, ta in enumerate(lay.tiles):
        for b, tb in enumerate(lay.tiles):
            nz[a, b] = D[ta.offset : ta.offset + ta.size, tb.offset : tb.offset + tb.size].max() > tol
    return pred, nz


__all__ = [
    "CompressedMatrix",
    "FrameIndex",
    "OperatorMatrix",
    "TransportProblem",
    "budget",
    "coarse",
    "coefficient_image",
    "grid_symbol",
    "load_vector",
    "measure_p_sparsity_dense",
    "power_norm",
    "tiles_overlap_matrix",
    "zero_pattern",
    "rhs_truncate",
    "schur_bound",
    "transport_symbol",
]
