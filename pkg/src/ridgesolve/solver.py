"""Inexact damped Richardson iteration with coarsening and optional projection.

All iterates live in preconditioned coordinates; the grid solution is
G* W^-1 u.  With ``projection`` the modified iteration is used: after the
K inner steps the iterate is mapped by P, which removes the component in
ker F that inexact products leave behind.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .frame import CoeffVector, synthesize
from .operator import OperatorMatrix, coarse, load_vector, power_norm, rhs_truncate


class EstimationError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SolverDivergence(RuntimeError):
    """Residual grew over consecutive outer iterations; carries the log."""

    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


def rhs_routine(f_coeffs, eps):
    """Shortest magnitude-ordered prefix of f with tail norm <= eps."""
    if not eps > 0:
        return f_coeffs
    return rhs_truncate(f_coeffs, eps)


def coarse_routine(c, eps):
    return coarse(c, eps)


# ---------------------------------------------------------------------------
# spectrum


def _lanczos_extremes(matvec, v0, steps, floor=1e-10, project=None):
    """Extreme nonzero Ritz values of a Hermitian operator from start vector v0.

    ``project`` maps back onto the range after every step; without it the
    kernel component grows like the Lanczos polynomial at 0.
    """
    n = v0.size
    steps = min(steps, n)
    Q = np.zeros((steps + 1, n), dtype=complex)
    a = np.zeros(steps)
    b = np.zeros(steps)
    Q[0] = v0 / np.linalg.norm(v0)
    m = steps
    for i in range(steps):
        w = matvec(Q[i])
        a[i] = np.vdot(Q[i], w).real
        # full reorthogonalisation, twice
        for _ in range(2):
            w = w - Q[: i + 1].T @ (Q[: i + 1].conj() @ w)
        if project is not None:
            w = project(w)
        b[i] = np.linalg.norm(w)
        if b[i] <= 1e-12 * max(1.0, abs(a[i])):
            m = i + 1
            break
        Q[i + 1] = w / b[i]
    T = np.diag(a[:m]) + np.diag(b[: m - 1], 1) + np.diag(b[: m - 1], -1)
    ritz = np.linalg.eigvalsh(T)
    top = ritz.max()
    kept = ritz[ritz > floor * top]
    return float(kept.min()), float(top), ritz


def estimate_spectrum(F, P=None, probe_dim=40, seed=0, size=None):
    """(alpha, rho, norm_P, info) from Lanczos on F started at F P r.

    ``F`` and ``P`` are OperatorMatrix objects, dense arrays or callables.
    The start vector lies in ran F and for OperatorMatrix input every
    Lanczos vector is projected back onto ran F; Ritz values below 1e-10
    of the largest one are leakage from ker F and are discarded.  alpha = 2 / (lmin + lmax), rho = (lmax - lmin) / (lmax + lmin).
    """
    if probe_dim < 16:
        raise ValueError("probe_dim must be at least 16")
    Fm, n = _as_matvec(F, size)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    norm_P = 1.0
    if P is not None:
        Pm, Pr = _as_matvec(P, n, adjoint=True)
        v = Pm(v)
        norm_P = power_norm(Pm, n, Pr, steps=50, seed=seed)
    v = Fm(v)
    if not np.all(np.isfinite(v)) or np.linalg.norm(v) == 0:
        raise EstimationError("degenerate probe vector", {"probe_norm": float(np.linalg.norm(v))})
    project = F.range_project if isinstance(F, OperatorMatrix) else None
    lmin, lmax, ritz = _lanczos_extremes(Fm, v, probe_dim, project=project)
    if not (lmin > 0 and np.isfinite(lmax)):
        raise EstimationError("no positive Ritz values", {"ritz": ritz.tolist()})
    alpha = 2.0 / (lmin + lmax)
    rho = (lmax - lmin) / (lmax + lmin)
    return alpha, rho, norm_P, {"lambda_min": lmin, "lambda_max": lmax, "steps": int(ritz.size)}


def _as_matvec(M, size=None, adjoint=False):
    if isinstance(M, OperatorMatrix):
        mv = M.matvec
        n = M.size
        rv = M.rmatvec
    elif callable(M):
        if size is None:
            raise ValueError("size is required for callable operators")
        mv = rv = M
        n = size
    else:
        A = np.asarray(M)
        n = A.shape[0]
        mv = A.__matmul__
        rv = A.conj().T.__matmul__
    return (mv, rv) if adjoint else (mv, n)


# ---------------------------------------------------------------------------
# configuration and log


@dataclass
class SolverConfig:
    eps: float
    theta: float = 0.3
    inner_steps: int | None = None
    alpha: float = 1.0
    rho: float = 0.5
    norm_P: float = 1.0
    lambda_min: float = 1.0
    projection: bool = True
    max_outer_iterations: int = 200
    ratio_target: float = 0.5

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("target eps must be positive")
        if not 0 < self.theta < 1.0 / 3.0:
            raise ValueError("theta must lie in (0, 1/3)")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.inner_steps is None:
            self.inner_steps = self.default_inner_steps()
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if not self.factor < self.theta:
            raise ValueError(
                f"3 rho^K {'||P|| ' if self.projection else ''}= {self.factor:.3g} is not below theta = {self.theta}"
            )

    @property
    def p_factor(self):
        return self.norm_P if self.projection else 1.0

    @property
    def factor(self):
        return 3.0 * self.rho**self.inner_steps * self.p_factor

    @property
    def ratio(self):
        """eps_i / eps_{i-1}."""
        return self.factor / self.theta

    def default_inner_steps(self):
        """Smallest K with 3 rho^K ||P|| / theta <= ratio_target."""
        if self.rho == 0:
            return 1
        need = self.ratio_target * self.theta / (3.0 * self.p_factor)
        return max(1, math.ceil(math.log(need) / math.log(self.rho) - 1e-12))

    @classmethod
    def from_operators(cls, F, P, eps, probe_dim=40, seed=0, **kw):
        alpha, rho, norm_P, info = estimate_spectrum(F, P, probe_dim, seed)
        return cls(eps=eps, alpha=alpha, rho=rho, norm_P=norm_P, lambda_min=info["lambda_min"], **kw)


@dataclass
class IterationLog:
    iteration: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    support: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    projected: list = field(default_factory=list)
    error: list = field(default_factory=list)

    def record(self, i, eps, support, residual, seconds, projected, error=float("nan")):
        self.iteration.append(i)
        self.eps.append(float(eps))
        self.support.append(int(support))
        self.residual.append(float(residual))
        self.seconds.append(float(seconds))
        self.projected.append(bool(projected))
        self.error.append(float(error))

    def __len__(self):
        return len(self.iteration)

    def rows(self):
        return list(
            zip(self.iteration, self.eps, self.support, self.residual, self.seconds, self.projected, self.error)
        )

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "eps_i", "support", "residual", "seconds", "projected", "error"])
            for r in self.rows():
                w.writerow([r[0], repr(r[1]), r[2], repr(r[3]), f"{r[4]:.6f}", int(r[5]), repr(r[6])])

    @classmethod
    def read_csv(cls, path):
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.record(
                    int(row["iteration"]),
                    float(row["eps_i"]),
                    int(row["support"]),
                    float(row["residual"]),
                    float(row["seconds"]),
                    bool(int(row.get("projected", 0))),
                    float(row.get("error", "nan")),
                )
        return log


# ---------------------------------------------------------------------------
# iteration


def solve(problem, spec, config, F=None, P=None, reference=None, divergence_window=3, callback=None):
    """Approximate u with F u = f in preconditioned coordinates.

    ``reference`` (dense preconditioned coefficients of the exact solution)
    adds the coefficient error to the log.  Raises SolverDivergence when
    the residual grows in ``divergence_window`` consecutive outer steps.
    """
    F = F or OperatorMatrix(spec, problem, "F")
    if config.projection:
        P = P or OperatorMatrix(spec, problem, "P")
    f = CoeffVector.from_dense(load_vector(spec, problem))
    K = config.inner_steps
    a = config.alpha
    pf = config.p_factor
    theta = config.theta
    eps_i = pf * f.norm() / config.lambda_min
    u = CoeffVector.zeros(F.size)
    log = IterationLog()
    t0 = time.perf_counter()
    grow = 0
    i = 0
    while eps_i > config.eps:
        if i >= config.max_outer_iterations:
            break
        i += 1
        eps_i = config.ratio * eps_i
        tol = theta * eps_i / (6.0 * a * K * pf)
        fi = rhs_routine(f, tol)
        res = 0.0
        for _ in range(K):
            r = F.apply(u, tol) - fi
            res = r.norm()
            u = u - a * r
        if config.projection:
            u = P.apply(u, theta * eps_i / 3.0)
        u = coarse_routine(u, (1.0 - theta) * eps_i)
        err = float("nan")
        if reference is not None:
            err = float(np.linalg.norm(u.dense() - reference))
        log.record(i, eps_i, u.nnz, res, time.perf_counter() - t0, config.projection, err)
        if callback is not None:
            callback(i, u, log)
        if len(log) > 1 and log.residual[-1] > log.residual[-2]:
            grow += 1
            if grow >= divergence_window:
                raise SolverDivergence(f"residual grew in {grow} consecutive outer iterations", log)
        else:
            grow = 0
    return u, log


def reconstruct_solution(spec, problem, u, real=None):
    """Grid function G* W^-1 u."""
    w = problem.preconditioner.weights(spec)
    if isinstance(u, CoeffVector):
        c = u.scaled(1.0 / w)
    else:
        c = np.asarray(u) / w
    if real is None:
        real = problem.f is not None and np.isrealobj(problem.f)
    return synthesize(spec, c, real=real)


__all__ = [
    "EstimationError",
    "IterationLog",
    "SolverConfig",
    "SolverDivergence",
    "coarse_routine",
    "estimate_spectrum",
    "reconstruct_solution",
    "rhs_routine",
    "solve",
]
