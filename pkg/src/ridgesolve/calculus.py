"""Exact polynomial calculus for the iterated-Laplacian product rule.

    Lap^n (f g) = sum_{j + k1 + k2 = n} 2^j (n; j, k1, k2)
                  sum_{|a| = j} d^a(Lap^k1 f) d^a(Lap^k2 g)

Polynomials carry Fraction coefficients so the identity is checked with
zero tolerance.  The convolution bound is a grid computation.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

MAX_DEGREE = 12


class BudgetError(RuntimeError):
    pass


class MultiPoly:
    """Polynomial in d variables: {exponent tuple: Fraction}, zeros removed."""

    __slots__ = ("d", "terms")

    def __init__(self, d, terms=None):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)
        out = {}
        for e, c in (terms or {}).items():
            e = tuple(int(x) for x in e)
            if len(e) != d or min(e) < 0:
                raise ValueError(f"bad exponent {e} for d = {d}")
            c = Fraction(c)
            if c:
                out[e] = out.get(e, Fraction(0)) + c
        self.terms = {e: c for e, c in out.items() if c}

    @classmethod
    def constant(cls, d, c):
        return cls(d, {(0,) * d: c})

    @classmethod
    def variable(cls, d, i):
        e = [0] * d
        e[i] = 1
        return cls(d, {tuple(e): 1})

    @classmethod
    def random(cls, d, degree, rng, terms=6, span=5):
        """Random polynomial with integer-ratio coefficients (rng: numpy Generator)."""
        out = {}
        for _ in range(terms):
            tot = int(rng.integers(0, degree + 1))
            cuts = np.sort(rng.integers(0, tot + 1, size=d - 1))
            e = np.diff(np.r_[0, cuts, tot])
            out[tuple(int(x) for x in e)] = Fraction(int(rng.integers(-span, span + 1)), int(rng.integers(1, span + 1)))
        return cls(d, out)

    @property
    def degree(self):
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self):
        return not self.terms

    def __eq__(self, other):
        return isinstance(other, MultiPoly) and self.d == other.d and self.terms == other.terms

    def __hash__(self):
        return hash((self.d, frozenset(self.terms.items())))

    def __repr__(self):
        return f"MultiPoly(d={self.d}, {self.terms})"

    def _check(self, other):
        if not isinstance(other, MultiPoly) or other.d != self.d:
            raise ValueError("polynomials of different dimension")

    def __add__(self, other):
        self._check(other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            t[e] = t.get(e, Fraction(0)) + c
        return MultiPoly(self.d, t)

    def __neg__(self):
        return MultiPoly(self.d, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, a):
        a = Fraction(a)
        return MultiPoly(self.d, {e: a * c for e, c in self.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            return self.scale(other)
        self._check(other)
        t = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                t[e] = t.get(e, Fraction(0)) + c1 * c2
        return MultiPoly(self.d, t)

    __rmul__ = scale

    def diff(self, alpha):
        """Partial derivative d^alpha."""
        alpha = tuple(alpha)
        t = {}
        for e, c in self.terms.items():
            if any(a > x for a, x in zip(alpha, e)):
                continue
            f = 1
            for a, x in zip(alpha, e):
                f *= math.perm(x, a)
            t[tuple(x - a for a, x in zip(alpha, e))] = c * f
        return MultiPoly(self.d, t)

    def laplacian(self, k=1):
        p = self
        for _ in range(k):
            acc = MultiPoly(self.d)
            for i in range(self.d):
                a = [0] * self.d
                a[i] = 2
                acc = acc + p.diff(a)
            p = acc
        return p

    def __call__(self, x):
        """Exact value at a point with rational (or integer) coordinates."""
        x = [Fraction(v) for v in x]
        tot = Fraction(0)
        for e, c in self.terms.items():
            m = c
            for xi, ei in zip(x, e):
                m *= xi**ei
            tot += m
        return tot


def multi_indices(d, order):
    """All alpha in N^d with |alpha| = order."""
    for cuts in itertools.combinations_with_replacement(range(d), order):
        a = [0] * d
        for c in cuts:
            a[c] += 1
        yield tuple(a)


def trinomial(n, j, k1, k2):
    if min(j, k1, k2) < 0 or j + k1 + k2 != n:
        return 0
    return math.factorial(n) // (math.factorial(j) * math.factorial(k1) * math.factorial(k2))


def _check_budget(f, g, n):
    if n < 0:
        raise ValueError("n must be >= 0")
    if f.d > 3:
        raise BudgetError("dimension above 3 exceeds the exact-arithmetic budget")
    if f.degree + g.degree > MAX_DEGREE:
        raise BudgetError(f"combined degree {f.degree + g.degree} exceeds {MAX_DEGREE}")


def iterated_laplacian_product(f, g, n):
    """Right-hand side of the product rule, evaluated exactly."""
    f._check(g)
    _check_budget(f, g, n)
    lf = [f.laplacian(k) for k in range(n + 1)]
    lg = [g.laplacian(k) for k in range(n + 1)]
    acc = MultiPoly(f.d)
    for j in range(n + 1):
        for k1 in range(n - j + 1):
            k2 = n - j - k1
            inner = MultiPoly(f.d)
            # the sum over |a| = j runs over ordered coordinate choices
            for a in _ordered_indices(f.d, j):
                inner = inner + lf[k1].diff(a) * lg[k2].diff(a)
            acc = acc + inner.scale(2**j * trinomial(n, j, k1, k2))
    return acc


def _ordered_indices(d, j):
    """Multi-indices of all ordered j-tuples of coordinates (d^j terms)."""
    for tup in itertools.product(range(d), repeat=j):
        a = [0] * d
        for c in tup:
            a[c] += 1
        yield tuple(a)


def direct_laplacian_product(f, g, n):
    _check_budget(f, g, n)
    return (f * g).laplacian(n)


def trinomial_factorial_identity(n):
    """((2n)!, sum_k 2^(n-2k) (n!)^3 / ((n-2k)! (k!)^2))."""
    lhs = math.factorial(2 * n)
    rhs = Fraction(0)
    for k in range(n // 2 + 1):
        rhs += Fraction(2 ** (n - 2 * k) * math.factorial(n) ** 3, math.factorial(n - 2 * k) * math.factorial(k) ** 2)
    return lhs, rhs


def binomial_trinomial_identity(n, ell):
    """(binom(2n, ell), sum_k 2^(ell-2k) (n; ell-2k, k, n+k-ell))."""
    rhs = sum(2 ** (ell - 2 * k) * trinomial(n, ell - 2 * k, k, n + k - ell) for k in range(ell // 2 + 1))
    return math.comb(2 * n, ell), rhs


def trinomial_pascal_holds(n):
    """(n+1; j, k1, k2) equals the sum of the three shifted (n; ...) for all triples."""
    for j in range(n + 2):
        for k1 in range(n + 2 - j):
            k2 = n + 1 - j - k1
            s = trinomial(n, j - 1, k1, k2) + trinomial(n, j, k1 - 1, k2) + trinomial(n, j, k1, k2 - 1)
            if s != trinomial(n + 1, j, k1, k2):
                return False
    return True


def c_seminorm(f, order, x):
    """max over |alpha| <= order of |d^alpha f(x)| (exact)."""
    best = Fraction(0)
    for r in range(order + 1):
        for a in multi_indices(f.d, r):
            best = max(best, abs(f.diff(a)(x)))
    return best


def laplacian_product_bound_check(f, g, n, points):
    """Check |Lap^n(fg)(x)| <= (4d)^n |f(x)|_{C^2n} |g(x)|_{C^2n} at every point.

    Returns (holds, worst ratio lhs / rhs); points where the right side
    vanishes count as violations only if the left side does not vanish.
    """
    lap = direct_laplacian_product(f, g, n)
    const = Fraction(4 * f.d) ** n
    worst = Fraction(0)
    ok = True
    for x in points:
        lhs = abs(lap(x))
        rhs = const * c_seminorm(f, 2 * n, x) * c_seminorm(g, 2 * n, x)
        if rhs == 0:
            if lhs != 0:
                ok = False
                worst = max(worst, Fraction(10**30))
            continue
        r = lhs / rhs
        worst = max(worst, r)
        if r > 1:
            ok = False
    return ok, float(worst)


# ---------------------------------------------------------------------------
# convolution bound on the periodic unit square


def _spectral_pullback_derivative(fhat, U, alpha, K1, K2, pad=1):
    """Samples of d^alpha_eta [h(U eta)] at x = U eta on a (pad N)^2 grid, h from fhat."""
    N = fhat.shape[0]
    # chain rule: d/d eta_i = sum_m U_mi d/dx_m, i.e. multiplier 2 pi i (U^T k)_i
    m1 = 2j * np.pi * (U[0, 0] * K1 + U[1, 0] * K2)
    m2 = 2j * np.pi * (U[0, 1] * K1 + U[1, 1] * K2)
    spec = fhat * m1 ** alpha[0] * m2 ** alpha[1]
    if pad == 1:
        return np.fft.ifft2(spec)
    M = pad * N
    big = np.zeros((M, M), dtype=complex)
    h = N // 2
    idx = np.r_[0:h, M - h : M]
    # negative frequencies (including Nyquist) go to the top of the padded grid
    big[np.ix_(idx, idx)] = spec
    return np.fft.ifft2(big) * pad**2


def conv_derivative_bound_check(f, g, U, alpha, samples=1000, seed=0, pad=4, rtol=1e-9):
    """Check |d^a (f*g)(U eta)| <= ||d^a f(U .)||_inf (1_supp f * |g|)(U eta).

    f and g are N x N samples of periodic functions on [0, 1)^2, f with
    compact support (exact zeros outside).  Samples eta are chosen with
    U eta on grid points, convolutions use the DFT and derivatives are
    spectral.  The sup norm is taken on a ``pad``-times refined grid.

    The spectral derivative of sampled f rings outside supp f, so the
    discrete convolution satisfies the bound only up to
    ring * ||g||_1, ring being the largest derivative value off the
    support; that term is added to the right-hand side.  Returns
    (holds, worst ratio, ring).
    """
    U = np.asarray(U, dtype=float)
    if U.shape != (2, 2) or abs(np.linalg.det(U)) < 1e-12:
        raise ValueError("U must be an invertible 2 x 2 matrix")
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != 2 or min(alpha) < 0 or max(alpha) > 2:
        raise ValueError("alpha must be a 2-vector with entries in 0..2")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    N = f.shape[0]
    h2 = 1.0 / N**2
    k = np.fft.fftfreq(N) * N
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    fh = np.fft.fft2(f)
    conv_hat = fh * np.fft.fft2(g) * h2
    lhs = np.abs(_spectral_pullback_derivative(conv_hat, U, alpha, K1, K2))
    df = np.abs(_spectral_pullback_derivative(fh, U, alpha, K1, K2))
    sup = max(df.max(), np.abs(_spectral_pullback_derivative(fh, U, alpha, K1, K2, pad=pad)).max())
    supp = f != 0
    ring = float(df[~supp].max()) if np.any(~supp) else 0.0
    rhs = sup * np.fft.ifft2(np.fft.fft2(supp.astype(float)) * np.fft.fft2(np.abs(g)) * h2).real
    rhs = rhs + ring * np.abs(g).sum() * h2
    rng = np.random.default_rng(seed)
    pick = rng.choice(N * N, size=min(samples, N * N), replace=False)
    lhs, rhs = lhs.ravel()[pick], rhs.ravel()[pick]
    slack = rtol * max(1.0, float(np.max(lhs)))
    ok = bool(np.all(lhs <= rhs + slack))
    worst = float(np.max(np.where(rhs > slack, lhs / np.maximum(rhs, 1e-300), 0.0)))
    return ok, worst, ring


def bump(N, center=(0.5, 0.5), radius=0.2):
    """C-infinity bump exp(-1 / (1 - r^2)) on [0, 1)^2, exactly zero outside."""
    x = np.arange(N) / N
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    r2 = ((X1 - center[0]) ** 2 + (X2 - center[1]) ** 2) / radius**2
    out = np.zeros((N, N))
    m = r2 < 1
    out[m] = np.exp(-1.0 / (1.0 - r2[m]))
    return out


def shear_matrix(j, ell):
    """[[1, ell / 2^j], [0, 1]]."""
    return np.array([[1.0, ell / 2.0**j], [0.0, 1.0]])


__all__ = [
    "BudgetError",
    "MultiPoly",
    "binomial_trinomial_identity",
    "bump",
    "c_seminorm",
    "conv_derivative_bound_check",
    "direct_laplacian_product",
    "iterated_laplacian_product",
    "laplacian_product_bound_check",
    "multi_indices",
    "shear_matrix",
    "trinomial",
    "trinomial_factorial_identity",
    "trinomial_pascal_holds",
]
